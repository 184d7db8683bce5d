#pragma once

// Conformal Kähler geometry on two model surfaces with exact spectral bases:
// the axisymmetric round 2-sphere (Legendre series in z = cos θ) and the unit
// flat torus (real Fourier tensor basis). Fields are stored as coefficients;
// nonlinear products are formed at quadrature nodes and re-expanded, with the
// node count chosen by the 3/2 rule.
//
// Sign convention: Δ = -div∘grad, so the spectrum is nonnegative.

#include "ekflow/detail/quadrature.hpp"
#include "ekflow/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
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

enum class SurfaceKind { AxisymSphere, FlatTorus };

inline const char* to_string(SurfaceKind kind) {
  return kind == SurfaceKind::AxisymSphere ? "AxisymSphere" : "FlatTorus";
}

inline std::optional<SurfaceKind> parse_surface_kind(const std::string& name) {
  if (name == "AxisymSphere" || name == "sphere") return SurfaceKind::AxisymSphere;
  if (name == "FlatTorus" || name == "torus") return SurfaceKind::FlatTorus;
  return std::nullopt;
}

/// Background surface, its eigenbasis and its quadrature.
///
/// Sphere: `modes` is the Legendre truncation degree L; basis P_0..P_L; nodes
/// are Gauss-Legendre abscissae in z. Torus: `modes` is the grid size N per
/// axis; the retained 1-D basis is {1, cos 2πkx, sin 2πkx : k ≤ (N-1)/3}, and
/// 2-D elements are tensor products e_a(x) e_b(y) stored column-major.
class SurfaceModel {
 public:
  static constexpr int kMinModes = 4;
  static constexpr int kMaxSphereModes = 512;
  static constexpr int kMaxTorusModes = 256;

  SurfaceModel(SurfaceKind kind, int modes) : kind_(kind), modes_(modes) {
    const int cap = kind == SurfaceKind::AxisymSphere ? kMaxSphereModes : kMaxTorusModes;
    if (modes < kMinModes || modes > cap) {
      throw std::invalid_argument("build_model: modes must lie in [" + std::to_string(kMinModes) +
                                  ", " + std::to_string(cap) + "], got " + std::to_string(modes));
    }
    if (kind == SurfaceKind::AxisymSphere) {
      init_sphere();
    } else {
      init_torus();
    }
  }

  SurfaceKind kind() const noexcept { return kind_; }
  bool is_sphere() const noexcept { return kind_ == SurfaceKind::AxisymSphere; }
  int modes() const noexcept { return modes_; }
  Index basis_size() const noexcept { return eigenvalues_.size(); }
  Index node_count() const noexcept { return weights_.size(); }

  const VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  /// Squared L²(μ₀) norms of the basis elements.
  const VectorXd& basis_norms() const noexcept { return norms_; }
  /// Quadrature weights for dμ₀ at the nodes.
  const VectorXd& weights() const noexcept { return weights_; }
  /// Sphere: z abscissae. Torus: 1-D grid coordinates i/N.
  const VectorXd& nodes() const noexcept { return nodes_1d_; }
  double s_background() const noexcept { return s_background_; }
  double vol_background() const noexcept { return vol_background_; }

  /// Largest eigenvalue of Δ₀ on the retained basis.
  double max_eigenvalue() const { return eigenvalues_.maxCoeff(); }

  VectorXd to_nodes(const VectorXd& coeffs) const {
    check_coeffs(coeffs);
    if (is_sphere()) return synth_ * coeffs;
    const Index m = synth_.cols();
    Eigen::Map<const MatrixXd> c(coeffs.data(), m, m);
    MatrixXd v = synth_ * c * synth_.transpose();
    return Eigen::Map<const VectorXd>(v.data(), v.size());
  }

  VectorXd to_coeffs(const VectorXd& values) const {
    if (values.size() != node_count()) {
      throw std::invalid_argument("to_coeffs: node vector length mismatch");
    }
    if (is_sphere()) return analysis_ * values;
    const Index n = synth_.rows();
    Eigen::Map<const MatrixXd> v(values.data(), n, n);
    MatrixXd c = analysis_ * v * analysis_.transpose();
    return Eigen::Map<const VectorXd>(c.data(), c.size());
  }

  /// Sphere only: d/dz of a Legendre series, at the nodes.
  VectorXd dz_at_nodes(const VectorXd& coeffs) const {
    require_sphere("dz_at_nodes");
    check_coeffs(coeffs);
    return deriv_ * coeffs;
  }

  /// Torus only: ∂/∂x and ∂/∂y at the nodes.
  VectorXd dx_at_nodes(const VectorXd& coeffs) const { return torus_derivative(coeffs, true); }
  VectorXd dy_at_nodes(const VectorXd& coeffs) const { return torus_derivative(coeffs, false); }

  /// Torus grid coordinates of a flattened node index.
  std::pair<double, double> torus_point(Index node) const {
    const Index n = synth_.rows();
    return {nodes_1d_(node % n), nodes_1d_(node / n)};
  }

  /// Z coordinate (sphere) of a node.
  double sphere_z(Index node) const { return nodes_1d_(node); }

  /// Human-readable basis label: "P<l>" on the sphere, "<x>*<y>" on the torus
  /// with each factor one of "1", "cos<k>", "sin<k>".
  std::string basis_name(Index k) const {
    if (is_sphere()) return "P" + std::to_string(k);
    const Index m = synth_.cols();
    return factor_name(k % m) + "*" + factor_name(k / m);
  }

  std::optional<Index> basis_index(const std::string& name) const {
    for (Index k = 0; k < basis_size(); ++k) {
      if (basis_name(k) == name) return k;
    }
    return std::nullopt;
  }

  /// Torus: number of retained 1-D basis functions (2K+1).
  Index torus_factor_size() const { return synth_.cols(); }

 private:
  void init_sphere() {
    const int degree = modes_;
    const int q = (3 * degree + 2) / 2;
    const detail::GaussLegendreRule rule = detail::gauss_legendre(q);
    nodes_1d_ = rule.nodes;
    weights_ = 2.0 * std::numbers::pi * rule.weights;
    synth_ = detail::legendre_values(rule.nodes, degree);
    deriv_ = detail::legendre_derivatives(rule.nodes, degree);
    eigenvalues_.resize(degree + 1);
    norms_.resize(degree + 1);
    for (int l = 0; l <= degree; ++l) {
      eigenvalues_(l) = static_cast<double>(l) * (l + 1);
      norms_(l) = 4.0 * std::numbers::pi / (2.0 * l + 1.0);
    }
    analysis_ = norms_.cwiseInverse().asDiagonal() * synth_.transpose() * weights_.asDiagonal();
    s_background_ = 2.0;
    vol_background_ = 4.0 * std::numbers::pi;
  }

  void init_torus() {
    const int n = modes_;
    const int kmax = (n - 1) / 3;
    const Index m = 2 * kmax + 1;
    const double two_pi = 2.0 * std::numbers::pi;
    nodes_1d_.resize(n);
    for (int i = 0; i < n; ++i) nodes_1d_(i) = static_cast<double>(i) / n;
    synth_.resize(n, m);
    MatrixXd dsynth = MatrixXd::Zero(n, m);
    VectorXd mu(m);
    VectorXd norm1(m);
    mu(0) = 0.0;
    norm1(0) = 1.0;
    for (int i = 0; i < n; ++i) synth_(i, 0) = 1.0;
    for (int k = 1; k <= kmax; ++k) {
      mu(2 * k - 1) = mu(2 * k) = two_pi * two_pi * k * k;
      norm1(2 * k - 1) = norm1(2 * k) = 0.5;
      for (int i = 0; i < n; ++i) {
        const double arg = two_pi * k * nodes_1d_(i);
        synth_(i, 2 * k - 1) = std::cos(arg);
        synth_(i, 2 * k) = std::sin(arg);
        dsynth(i, 2 * k - 1) = -two_pi * k * std::sin(arg);
        dsynth(i, 2 * k) = two_pi * k * std::cos(arg);
      }
    }
    deriv_ = dsynth;
    analysis_ = norm1.cwiseInverse().asDiagonal() * synth_.transpose() / static_cast<double>(n);
    eigenvalues_.resize(m * m);
    norms_.resize(m * m);
    for (Index b = 0; b < m; ++b) {
      for (Index a = 0; a < m; ++a) {
        eigenvalues_(a + m * b) = mu(a) + mu(b);
        norms_(a + m * b) = norm1(a) * norm1(b);
      }
    }
    weights_ = VectorXd::Constant(static_cast<Index>(n) * n, 1.0 / (static_cast<double>(n) * n));
    s_background_ = 0.0;
    vol_background_ = 1.0;
  }

  VectorXd torus_derivative(const VectorXd& coeffs, bool along_x) const {
    if (is_sphere()) throw std::logic_error("torus derivative requested on the sphere");
    check_coeffs(coeffs);
    const Index m = synth_.cols();
    Eigen::Map<const MatrixXd> c(coeffs.data(), m, m);
    MatrixXd v = along_x ? MatrixXd(deriv_ * c * synth_.transpose())
                         : MatrixXd(synth_ * c * deriv_.transpose());
    return Eigen::Map<const VectorXd>(v.data(), v.size());
  }

  static std::string factor_name(Index j) {
    if (j == 0) return "1";
    const Index k = (j + 1) / 2;
    return (j % 2 == 1 ? "cos" : "sin") + std::to_string(k);
  }

  void check_coeffs(const VectorXd& coeffs) const {
    if (coeffs.size() != basis_size()) {
      throw std::invalid_argument("coefficient vector length does not match the model basis");
    }
  }

  void require_sphere(const char* what) const {
    if (!is_sphere()) throw std::logic_error(std::string(what) + " requires the sphere model");
  }

  SurfaceKind kind_;
  int modes_;
  VectorXd nodes_1d_;
  VectorXd weights_;
  VectorXd eigenvalues_;
  VectorXd norms_;
  MatrixXd synth_;     // nodes x basis (sphere) or 1-D grid x 1-D basis (torus)
  MatrixXd analysis_;  // transpose shape of synth_
  MatrixXd deriv_;     // derivative of the basis at nodes
  double s_background_ = 0.0;
  double vol_background_ = 0.0;
};

using ModelPtr = std::shared_ptr<const SurfaceModel>;

inline ModelPtr build_model(SurfaceKind kind, int modes) {
  return std::make_shared<const SurfaceModel>(kind, modes);
}

/// A real function on a model surface, as coefficients in the Δ₀ eigenbasis.
class SpectralField {
 public:
  SpectralField(ModelPtr model, VectorXd coeffs) : model_(std::move(model)), coeffs_(std::move(coeffs)) {
    if (!model_) throw std::invalid_argument("SpectralField: null model");
    if (coeffs_.size() != model_->basis_size()) {
      throw std::invalid_argument("SpectralField: coefficient count does not match model");
    }
    if (!coeffs_.allFinite()) throw std::invalid_argument("SpectralField: non-finite coefficient");
  }

  static SpectralField zero(const ModelPtr& model) {
    return {model, VectorXd::Zero(model->basis_size())};
  }
  static SpectralField constant(const ModelPtr& model, double c) {
    VectorXd v = VectorXd::Zero(model->basis_size());
    v(0) = c;
    return {model, std::move(v)};
  }
  static SpectralField basis(const ModelPtr& model, Index k, double scale = 1.0) {
    VectorXd v = VectorXd::Zero(model->basis_size());
    v(k) = scale;
    return {model, std::move(v)};
  }
  static SpectralField from_values(const ModelPtr& model, const VectorXd& values) {
    return {model, model->to_coeffs(values)};
  }

  const ModelPtr& model() const noexcept { return model_; }
  const VectorXd& coeffs() const noexcept { return coeffs_; }
  VectorXd values() const { return model_->to_nodes(coeffs_); }
  double constant_coefficient() const { return coeffs_(0); }

  SpectralField& operator+=(const SpectralField& o) {
    check_same(o);
    coeffs_ += o.coeffs_;
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    check_same(o);
    coeffs_ -= o.coeffs_;
    return *this;
  }
  SpectralField& operator*=(double a) {
    coeffs_ *= a;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double a, SpectralField f) { return f *= a; }
  friend SpectralField operator-(SpectralField f) { return f *= -1.0; }

  void check_same(const SpectralField& o) const {
    if (model_ != o.model_ && (model_->kind() != o.model_->kind() || model_->modes() != o.model_->modes())) {
      throw std::invalid_argument("SpectralField: fields live on different models");
    }
  }

 private:
  ModelPtr model_;
  VectorXd coeffs_;
};

/// Deformation potential φ of ω_φ = ω₀ + i∂∂̄φ. Only Δ₀φ is geometric.
struct KahlerPotential {
  SpectralField phi;
};

/// ω_φ = F ω₀ with F = 1 - ½Δ₀φ > 0 at every node.
class ConformalMetric {
 public:
  static constexpr double kClassTolerance = 1e-10;

  const ModelPtr& model() const noexcept { return potential_.phi.model(); }
  const KahlerPotential& potential() const noexcept { return potential_; }
  /// Density F as a spectral field.
  const SpectralField& density_field() const noexcept { return density_; }
  /// Density F at the quadrature nodes.
  const VectorXd& density() const noexcept { return density_nodes_; }
  double min_density() const { return density_nodes_.minCoeff(); }

  /// Builds the metric with prescribed density. The density must integrate to
  /// the background volume (same Kähler class) and be positive at the nodes.
  static ConformalMetric from_density(const SpectralField& density) {
    const ModelPtr& model = density.model();
    if (std::abs(density.constant_coefficient() - 1.0) > kClassTolerance) {
      throw std::invalid_argument("from_density: ∫F dμ₀ differs from the background volume");
    }
    VectorXd phi = VectorXd::Zero(model->basis_size());
    const VectorXd& lambda = model->eigenvalues();
    for (Index k = 1; k < phi.size(); ++k) phi(k) = -2.0 * density.coeffs()(k) / lambda(k);
    return make(KahlerPotential{SpectralField(model, std::move(phi))});
  }

 private:
  friend ConformalMetric metric_from_potential(const KahlerPotential&);

  ConformalMetric(KahlerPotential phi, SpectralField density, VectorXd nodes)
      : potential_(std::move(phi)), density_(std::move(density)), density_nodes_(std::move(nodes)) {}

  static ConformalMetric make(KahlerPotential phi) {
    const ModelPtr& model = phi.phi.model();
    VectorXd f = -0.5 * phi.phi.coeffs().cwiseProduct(model->eigenvalues());
    f(0) = 1.0;
    SpectralField density(model, std::move(f));
    VectorXd nodes = density.values();
    const double min_f = nodes.minCoeff();
    if (!(min_f > 0.0)) throw PositivityViolation(min_f);
    return ConformalMetric(std::move(phi), std::move(density), std::move(nodes));
  }

  KahlerPotential potential_;
  SpectralField density_;
  VectorXd density_nodes_;
};

inline ConformalMetric metric_from_potential(const KahlerPotential& phi) {
  return ConformalMetric::make(phi);
}

/// The background metric (φ = 0).
inline ConformalMetric background_metric(const ModelPtr& model) {
  return metric_from_potential(KahlerPotential{SpectralField::zero(model)});
}

inline SpectralField laplacian0(const SpectralField& f) {
  return {f.model(), f.coeffs().cwiseProduct(f.model()->eigenvalues())};
}

/// Δ_g = F⁻¹Δ₀ on a conformal surface.
inline SpectralField laplacian_g(const SpectralField& f, const ConformalMetric& m) {
  f.check_same(m.density_field());
  if (!(m.min_density() > 0.0)) throw PositivityViolation(m.min_density());
  const VectorXd lap = f.model()->to_nodes(laplacian0(f).coeffs());
  return SpectralField::from_values(f.model(), lap.cwiseQuotient(m.density()));
}

inline double integrate0(const VectorXd& values, const SurfaceModel& model) {
  return model.weights().dot(values);
}

inline double integrate_g(const SpectralField& f, const ConformalMetric& m) {
  f.check_same(m.density_field());
  return f.model()->weights().dot(f.values().cwiseProduct(m.density()));
}

inline double inner_product_g(const SpectralField& f, const SpectralField& h, const ConformalMetric& m) {
  f.check_same(h);
  f.check_same(m.density_field());
  const VectorXd prod = f.values().cwiseProduct(h.values()).cwiseProduct(m.density());
  return f.model()->weights().dot(prod);
}

inline double inner_product0(const SpectralField& f, const SpectralField& h) {
  f.check_same(h);
  return f.coeffs().cwiseProduct(h.coeffs()).dot(f.model()->basis_norms());
}

inline double volume_g(const ConformalMetric& m) {
  return m.model()->weights().dot(m.density());
}

inline double mean_g(const SpectralField& f, const ConformalMetric& m) {
  return integrate_g(f, m) / volume_g(m);
}

enum class MeanPolicy { Require, Remove };

struct GreenOptions {
  MeanPolicy mean_policy = MeanPolicy::Require;
  /// Relative tolerance on ∫h dμ_g under MeanPolicy::Require.
  double mean_tolerance = 1e-9;
  /// When finite, the sup-norm residual of Δ_g u - (h - mean) is checked.
  double residual_tolerance = std::numeric_limits<double>::infinity();
};

/// Sup-norm of Δ_g u - (h - mean_g h) at the nodes.
inline double green_residual(const SpectralField& u, const SpectralField& h, const ConformalMetric& m) {
  const SurfaceModel& model = *u.model();
  const double mean = mean_g(h, m);
  const VectorXd lap = model.to_nodes(laplacian0(u).coeffs()).cwiseQuotient(m.density());
  return (lap - (h.values().array() - mean).matrix()).cwiseAbs().maxCoeff();
}

/// Green operator of g: the g-mean-zero u with Δ_g u = h - mean_g(h).
///
/// Since ∫⟨∇u,∇v⟩ is conformally invariant, Δ_g u = h' is equivalent to
/// Δ₀u = F h', which is diagonal in the background eigenbasis.
inline SpectralField green_g(const SpectralField& h, const ConformalMetric& m, const GreenOptions& opts = {}) {
  h.check_same(m.density_field());
  const SurfaceModel& model = *h.model();
  const VectorXd hv = h.values();
  const VectorXd& density = m.density();
  const double vol = volume_g(m);
  const double total = model.weights().dot(hv.cwiseProduct(density));
  if (opts.mean_policy == MeanPolicy::Require) {
    const double norm = std::sqrt(model.weights().dot(hv.cwiseProduct(hv).cwiseProduct(density)));
    if (std::abs(total) > opts.mean_tolerance * std::max(norm, 1e-300) && std::abs(total) > 1e-300) {
      throw std::invalid_argument("green_g: right-hand side is not mean-zero in dμ_g");
    }
  }
  const double mean = total / vol;
  VectorXd rhs = model.to_coeffs(((hv.array() - mean) * density.array()).matrix());
  const VectorXd& lambda = model.eigenvalues();
  rhs(0) = 0.0;
  for (Index k = 1; k < rhs.size(); ++k) rhs(k) /= lambda(k);
  if (!rhs.allFinite()) throw GreenSolveFailure("green_g: non-finite solution");
  SpectralField u(h.model(), std::move(rhs));
  u = u - SpectralField::constant(h.model(), mean_g(u, m));
  if (std::isfinite(opts.residual_tolerance)) {
    const double res = green_residual(u, h, m);
    if (!(res <= opts.residual_tolerance)) {
      throw GreenSolveFailure("green_g: residual " + std::to_string(res) + " above tolerance");
    }
  }
  return u;
}

/// Scalar curvature at the nodes: s = F⁻¹(s_bg + 2Δ₀u), u = ½ ln F.
inline VectorXd scalar_curvature_values(const ConformalMetric& m) {
  const SurfaceModel& model = *m.model();
  if (!(m.min_density() > 0.0)) throw PositivityViolation(m.min_density());
  const VectorXd u = 0.5 * m.density().array().log().matrix();
  const VectorXd lap_u = model.to_nodes(model.to_coeffs(u).cwiseProduct(model.eigenvalues()));
  return ((model.s_background() + 2.0 * lap_u.array()) / m.density().array()).matrix();
}

inline SpectralField scalar_curvature(const ConformalMetric& m) {
  return SpectralField::from_values(m.model(), scalar_curvature_values(m));
}

/// Average scalar curvature s₀ = ∫s dμ / Vol, fixed by the class.
inline double average_scalar_curvature(const SurfaceModel& model) {
  return model.is_sphere() ? 8.0 * std::numbers::pi / model.vol_background() : 0.0;
}

/// Random admissible potential: mean-zero, band-limited to the lowest quarter
/// of the modes. The density perturbation has rms about amplitude/2; φ is
/// scaled down if needed so that min F ≥ min_density.
inline KahlerPotential random_potential(const ModelPtr& model, std::uint64_t seed, double amplitude,
                                        double min_density = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // δF = -½Δ₀φ gets i.i.d. normal coefficients against L²-normalized modes,
  // scaled by 1/√n so its rms stays near amplitude/2 whatever the band size.
  std::vector<Index> band;
  if (model->is_sphere()) {
    const int top = std::max(1, model->modes() / 4);
    for (int l = 1; l <= top; ++l) band.push_back(l);
  } else {
    const Index m = model->torus_factor_size();
    const Index jmax = 2 * std::max<Index>(1, (m - 1) / 2 / 4);
    for (Index b = 0; b <= jmax; ++b)
      for (Index a = 0; a <= jmax; ++a)
        if (a != 0 || b != 0) band.push_back(a + m * b);
  }
  const double scale = amplitude / std::sqrt(static_cast<double>(band.size()));
  VectorXd c = VectorXd::Zero(model->basis_size());
  for (Index k : band) {
    c(k) = scale * normal(rng) / (model->eigenvalues()(k) * std::sqrt(model->basis_norms()(k) / model->vol_background()));
  }
  SpectralField phi(model, c);
  VectorXd f = -0.5 * phi.coeffs().cwiseProduct(model->eigenvalues());
  f(0) = 1.0;
  const double min_f = model->to_nodes(f).minCoeff();
  if (min_f < min_density) phi *= (1.0 - min_density) / (1.0 - min_f);
  return KahlerPotential{std::move(phi)};
}

}  // namespace ekflow
