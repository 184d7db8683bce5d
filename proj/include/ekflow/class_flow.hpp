#pragma once

// The class-level flow dΩ/dt = 2π s_Ω c1 - (s_Ω²/4) Ω on H^{1,1} of a complex
// surface, its critical classes, Kähler-cone membership and the stability
// criterion for divisors.

#include "ekflow/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ekflow {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Divisor {
  std::string name;
  VectorXd coeffs;
};

/// Intersection form Q on H^{1,1}(M, ℝ) in a fixed basis, with c1 and a finite
/// list of effective divisor classes.
class IntersectionLattice {
 public:
  static constexpr int kDimension = 2;

  IntersectionLattice(std::string name, MatrixXd pairing, VectorXd c1, std::vector<Divisor> divisors,
                      std::optional<double> expected_c1_sq = std::nullopt)
      : name_(std::move(name)), pairing_(std::move(pairing)), c1_(std::move(c1)), divisors_(std::move(divisors)) {
    const Index k = pairing_.rows();
    if (k == 0 || pairing_.cols() != k) throw std::invalid_argument(name_ + ": pairing must be square and nonempty");
    if (!pairing_.allFinite() || !c1_.allFinite()) throw std::invalid_argument(name_ + ": non-finite entries");
    if ((pairing_ - pairing_.transpose()).cwiseAbs().maxCoeff() != 0.0) {
      throw std::invalid_argument(name_ + ": pairing is not symmetric");
    }
    if (c1_.size() != k) throw std::invalid_argument(name_ + ": c1 has wrong length");
    for (const auto& d : divisors_) {
      if (d.coeffs.size() != k || !d.coeffs.allFinite()) {
        throw std::invalid_argument(name_ + ": divisor " + d.name + " has wrong length");
      }
    }
    c1_sq_ = dot(c1_, c1_);
    if (expected_c1_sq && std::abs(*expected_c1_sq - c1_sq_) > 1e-12 * std::max(1.0, std::abs(c1_sq_))) {
      throw std::invalid_argument(name_ + ": c1^2 = " + std::to_string(c1_sq_) + " but expected " +
                                  std::to_string(*expected_c1_sq));
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(pairing_);
    const auto& ev = eig.eigenvalues();
    const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    const Index positive = (ev.array() > tol).count();
    const Index negative = (ev.array() < -tol).count();
    if (positive != 1 || negative != k - 1) {
      throw std::invalid_argument(name_ + ": pairing signature is (" + std::to_string(positive) + ", " +
                                  std::to_string(negative) + "), expected (1, " + std::to_string(k - 1) + ")");
    }
  }

  const std::string& name() const noexcept { return name_; }
  Index rank() const noexcept { return pairing_.rows(); }
  const MatrixXd& pairing() const noexcept { return pairing_; }
  const VectorXd& c1() const noexcept { return c1_; }
  double c1_sq() const noexcept { return c1_sq_; }
  const std::vector<Divisor>& divisors() const noexcept { return divisors_; }

  double dot(const VectorXd& a, const VectorXd& b) const { return a.dot(pairing_ * b); }

 private:
  std::string name_;
  MatrixXd pairing_;
  VectorXd c1_;
  std::vector<Divisor> divisors_;
  double c1_sq_ = 0.0;
};

using LatticePtr = std::shared_ptr<const IntersectionLattice>;

struct CohClass {
  LatticePtr lattice;
  VectorXd coeffs;

  CohClass(LatticePtr l, VectorXd c) : lattice(std::move(l)), coeffs(std::move(c)) {
    if (!lattice) throw std::invalid_argument("CohClass: null lattice");
    if (coeffs.size() != lattice->rank()) throw std::invalid_argument("CohClass: wrong length");
    if (!coeffs.allFinite()) throw std::invalid_argument("CohClass: non-finite entries");
  }

  double square() const { return lattice->dot(coeffs, coeffs); }
  double c1_dot() const { return lattice->dot(lattice->c1(), coeffs); }
  double dot(const VectorXd& d) const { return lattice->dot(coeffs, d); }
};

inline constexpr double kDegenerateClassTolerance = 1e-12;

/// s_Ω = 8π (c1·Ω) / Ω².
inline double class_scalar(const CohClass& omega) {
  const double sq = omega.square();
  if (std::abs(sq) < kDegenerateClassTolerance) throw DegenerateClass("class_scalar: Omega^2 = " + std::to_string(sq));
  return 8.0 * std::numbers::pi * omega.c1_dot() / sq;
}

inline VectorXd class_rhs(const CohClass& omega) {
  const double s = class_scalar(omega);
  return 2.0 * std::numbers::pi * s * omega.lattice->c1() - (0.25 * s * s) * omega.coeffs;
}

/// Ω scaled to the volume normalization Ω² = 2. Requires Ω² > 0.
inline CohClass normalize_volume(const CohClass& omega) {
  const double sq = omega.square();
  if (!(sq > kDegenerateClassTolerance)) throw DegenerateClass("normalize_volume: Omega^2 = " + std::to_string(sq));
  return CohClass(omega.lattice, omega.coeffs * std::sqrt(2.0 / sq));
}

struct ConeReport {
  bool member = false;
  double omega_sq = 0.0;
  std::vector<std::pair<std::string, double>> pairings;
  /// No divisors were listed, so membership rests on Ω² > 0 alone.
  bool divisors_missing = false;
  std::string note;
};

/// Ω² > 0 and Ω·D > 0 for every listed divisor. The list is a finite set of
/// generators, so a positive answer certifies membership only against it.
inline ConeReport cone_membership(const CohClass& omega) {
  ConeReport r;
  r.omega_sq = omega.square();
  r.member = r.omega_sq > 0.0;
  for (const auto& d : omega.lattice->divisors()) {
    const double p = omega.dot(d.coeffs);
    r.pairings.emplace_back(d.name, p);
    r.member = r.member && p > 0.0;
  }
  r.divisors_missing = omega.lattice->divisors().empty();
  r.note = r.divisors_missing ? "no effective divisors listed; only Omega^2 > 0 was checked"
                              : "checked against the listed divisor generators only";
  return r;
}

struct ClassPolicy {
  double dt_max = 1e-2;
  /// dt ≤ stiffness / s_Ω²; the linearized rate at a critical class is ¾ s_Ω².
  double stiffness = 1.0;
  /// Local error allowance per step, estimated by step doubling.
  double local_tolerance = 1e-13;
  double dt_floor = 1e-14;
  double converged_tolerance = 1e-10;
  double volume_tolerance = 1e-9;
};

struct ClassSample {
  double t;
  VectorXd omega;
  double omega_sq;
  double c1_dot_omega;
  double s_class;
  bool in_cone;
};

struct ClassTrajectory {
  std::vector<ClassSample> samples;
  bool converged = false;
  double final_rhs_norm = 0.0;
};

inline ClassSample class_sample(double t, const CohClass& omega) {
  return ClassSample{t, omega.coeffs, omega.square(), omega.c1_dot(), class_scalar(omega),
                     cone_membership(omega).member};
}

/// Classical RK4 from a volume-normalized Ω₀ to t_end with step-doubling error
/// control, sampling every accepted step.
inline ClassTrajectory class_integrate(const CohClass& omega0, double t_end, const ClassPolicy& policy = {}) {
  if (std::abs(omega0.square() - 2.0) > policy.volume_tolerance) {
    throw std::invalid_argument("class_integrate: Omega0^2 = " + std::to_string(omega0.square()) +
                                ", expected 2");
  }
  const LatticePtr& lattice = omega0.lattice;
  auto f = [&](const VectorXd& v) { return class_rhs(CohClass(lattice, v)); };
  auto rk4 = [&](const VectorXd& y, const VectorXd& k1, double h) {
    const VectorXd k2 = f(y + 0.5 * h * k1);
    const VectorXd k3 = f(y + 0.5 * h * k2);
    const VectorXd k4 = f(y + h * k3);
    return VectorXd(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };

  ClassTrajectory traj;
  VectorXd y = omega0.coeffs;
  double t = 0.0;
  double dt = policy.dt_max;
  traj.samples.push_back(class_sample(t, omega0));
  while (t < t_end) {
    const double s = traj.samples.back().s_class;
    double cap = policy.dt_max;
    if (s != 0.0) cap = std::min(cap, policy.stiffness / (s * s));
    dt = std::min(dt, cap);
    const VectorXd k1 = f(y);
    for (;;) {
      const bool last = t_end - t - dt <= 1e-9 * dt;
      const double h = last ? t_end - t : dt;
      if (h < policy.dt_floor) throw StepUnderflow(h);
      const VectorXd full = rk4(y, k1, h);
      const VectorXd mid = rk4(y, k1, 0.5 * h);
      const VectorXd two = rk4(mid, f(mid), 0.5 * h);
      const double err = (two - full).cwiseAbs().maxCoeff() / 15.0;
      const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
      if (err <= policy.local_tolerance * scale) {
        y = two;
        t = last ? t_end : t + h;
        const double grow = err > 0.0 ? 0.9 * std::pow(policy.local_tolerance * scale / err, 0.2) : 2.0;
        dt = h * std::clamp(grow, 1.0, 2.0);
        break;
      }
      dt = h * std::max(0.2, 0.9 * std::pow(policy.local_tolerance * scale / err, 0.2));
    }
    traj.samples.push_back(class_sample(t, CohClass(lattice, y)));
  }
  traj.final_rhs_norm = f(y).cwiseAbs().maxCoeff();
  traj.converged = traj.final_rhs_norm < policy.converged_tolerance;
  return traj;
}

struct CriticalClasses {
  /// Isolated solutions ±√(2/c1²)·c1, the attractor (c1·Ω > 0) first.
  std::vector<CohClass> isolated;
  bool all_classes_critical = false;
  /// Whether {Ω : Ω² = 2, c1·Ω = 0}, where s_Ω = 0, contains any class.
  bool null_branch_nonempty = false;
  std::string null_branch = "{Omega : Omega^2 = 2, c1.Omega = 0}";
};

inline CriticalClasses find_critical_classes(const LatticePtr& lattice) {
  CriticalClasses out;
  const VectorXd& c1 = lattice->c1();
  if (c1.cwiseAbs().maxCoeff() == 0.0) {
    out.all_classes_critical = true;
    out.null_branch_nonempty = true;
    return out;
  }
  const double c1_sq = lattice->c1_sq();
  if (c1_sq > 0.0) {
    const VectorXd v = std::sqrt(2.0 / c1_sq) * c1;
    out.isolated.emplace_back(lattice, v);
    out.isolated.emplace_back(lattice, -v);
  }
  // Q restricted to c1^⊥ (orthogonal complement of the covector Qc1).
  const VectorXd q_c1 = lattice->pairing() * c1;
  Eigen::FullPivLU<MatrixXd> lu(q_c1.transpose());
  const MatrixXd basis = lu.kernel();
  if (basis.cols() > 0 && lu.rank() == 1) {
    const MatrixXd restricted = basis.transpose() * lattice->pairing() * basis;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(restricted);
    out.null_branch_nonempty = eig.eigenvalues().maxCoeff() > 1e-12;
  }
  return out;
}

/// Ω₀·D + 8π² (c1·Ω₀)(c1·D) (e^{c1² t} - 1)/c1², with the factor replaced by its
/// limit t when c1² = 0.
inline double stability_criterion(const CohClass& omega0, const VectorXd& divisor, double t) {
  const IntersectionLattice& l = *omega0.lattice;
  const double c1_sq = l.c1_sq();
  const double factor = c1_sq == 0.0 ? t : std::expm1(c1_sq * t) / c1_sq;
  return omega0.dot(divisor) +
         8.0 * std::numbers::pi * std::numbers::pi * omega0.c1_dot() * l.dot(l.c1(), divisor) * factor;
}

/// Volume-normalized class drawn uniformly from a box and kept if it passes
/// cone_membership.
inline CohClass random_interior_class(const LatticePtr& lattice, std::mt19937_64& rng, double box = 4.0,
                                      int max_tries = 100000) {
  std::uniform_real_distribution<double> u(-box, box);
  VectorXd v(lattice->rank());
  for (int i = 0; i < max_tries; ++i) {
    for (auto& x : v) x = u(rng);
    const CohClass c(lattice, v);
    if (!(c.square() > 1e-6)) continue;
    CohClass n = normalize_volume(c);
    if (cone_membership(n).member) return n;
  }
  throw std::runtime_error("random_interior_class: no interior class found for " + lattice->name());
}

namespace detail {

inline VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace detail

/// CP², its blow-ups at one and two points, and a rank-3 slice of a K3
/// lattice (U ⊕ ⟨-2⟩) with c1 = 0.
inline std::vector<LatticePtr> bundled_lattices() {
  using detail::vec;
  std::vector<LatticePtr> out;
  {
    MatrixXd q(1, 1);
    q << 1;
    out.push_back(std::make_shared<IntersectionLattice>("CP2", q, vec({3}), std::vector<Divisor>{{"H", vec({1})}},
                                                        9.0));
  }
  {
    MatrixXd q(2, 2);
    q << 1, 0, 0, -1;
    out.push_back(std::make_shared<IntersectionLattice>(
        "CP2_blowup1", q, vec({3, -1}),
        std::vector<Divisor>{{"E", vec({0, 1})}, {"H-E", vec({1, -1})}, {"H", vec({1, 0})}}, 8.0));
  }
  {
    MatrixXd q = MatrixXd::Zero(3, 3);
    q.diagonal() << 1, -1, -1;
    out.push_back(std::make_shared<IntersectionLattice>(
        "CP2_blowup2", q, vec({3, -1, -1}),
        std::vector<Divisor>{{"E1", vec({0, 1, 0})},
                             {"E2", vec({0, 0, 1})},
                             {"H-E1-E2", vec({1, -1, -1})},
                             {"H-E1", vec({1, -1, 0})},
                             {"H-E2", vec({1, 0, -1})},
                             {"H", vec({1, 0, 0})}},
        7.0));
  }
  {
    MatrixXd q(3, 3);
    q << 0, 1, 0, 1, 0, 0, 0, 0, -2;
    out.push_back(std::make_shared<IntersectionLattice>(
        "K3_clip3", q, vec({0, 0, 0}),
        std::vector<Divisor>{{"F1", vec({1, 0, 0})}, {"F2", vec({0, 1, 0})}, {"R", vec({0, 0, 1})}}, 0.0));
  }
  return out;
}

inline LatticePtr find_lattice(const std::vector<LatticePtr>& lattices, const std::string& name) {
  for (const auto& l : lattices)
    if (l->name() == name) return l;
  return nullptr;
}

}  // namespace ekflow
