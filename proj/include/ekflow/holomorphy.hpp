#pragma once

// Real holomorphy potentials and the projectors built from them.

#include "ekflow/spectral_geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <utility>
#include <vector>

namespace ekflow {

enum class InnerProductMode { CurrentMetric, BackgroundMetric };

inline const char* to_string(InnerProductMode mode) {
  return mode == InnerProductMode::CurrentMetric ? "CurrentMetric" : "BackgroundMetric";
}

/// Mean-zero Hamiltonians of the Killing fields of the invariance group.
///
/// On the axisymmetric sphere the rotation field has Hamiltonian
/// p₁(z) = ∫_{-1}^{z} F dt - mean_g. The flat torus has no Killing field with
/// zeros, so the list is empty.
inline std::vector<SpectralField> momentum_potentials(const ConformalMetric& m) {
  const ModelPtr& model = m.model();
  if (!model->is_sphere()) return {};
  const VectorXd& f = m.density_field().coeffs();
  const Index degree = model->basis_size() - 1;
  // Antiderivative from -1: ∫P_0 = P_1 + P_0, ∫P_l = (P_{l+1} - P_{l-1}) / (2l+1).
  // The degree L+1 term falls outside the basis and is dropped.
  VectorXd p = VectorXd::Zero(degree + 1);
  p(0) += f(0);
  p(1) += f(0);
  for (Index l = 1; l <= degree; ++l) {
    const double c = f(l) / (2.0 * l + 1.0);
    if (l + 1 <= degree) p(l + 1) += c;
    p(l - 1) -= c;
  }
  SpectralField p1(model, std::move(p));
  p1 = p1 - SpectralField::constant(model, mean_g(p1, m));
  return {std::move(p1)};
}

/// Orthonormal holomorphy potentials {f⁰ = const, f¹, …} and the projector π
/// they span, in either the L² inner product of the current metric or of the
/// background metric.
class HolomorphyProjector {
 public:
  static constexpr double kMaxCondition = 1e8;

  HolomorphyProjector(ConformalMetric metric, InnerProductMode mode)
      : metric_(std::move(metric)), mode_(mode) {
    std::vector<SpectralField> candidates;
    candidates.push_back(SpectralField::constant(metric_.model(), 1.0));
    for (auto& p : momentum_potentials(metric_)) candidates.push_back(std::move(p));

    const auto n = static_cast<Index>(candidates.size());
    MatrixXd gram(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = inner(candidates[i], candidates[j]);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxCondition) {
      throw NearDegenerateBasis("build_projector: Gram matrix condition number " + std::to_string(hi / lo));
    }

    // Modified Gram-Schmidt with one re-orthogonalization pass.
    for (auto& c : candidates) {
      SpectralField v = c;
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis_) v = v - inner(b, v) * b;
      }
      v *= 1.0 / std::sqrt(inner(v, v));
      basis_.push_back(std::move(v));
    }
  }

  const std::vector<SpectralField>& basis() const noexcept { return basis_; }
  InnerProductMode mode() const noexcept { return mode_; }
  const ConformalMetric& metric() const noexcept { return metric_; }
  const ModelPtr& model() const noexcept { return metric_.model(); }

  double inner(const SpectralField& a, const SpectralField& b) const {
    return mode_ == InnerProductMode::CurrentMetric ? inner_product_g(a, b, metric_) : inner_product0(a, b);
  }

  SpectralField project(const SpectralField& u) const {
    SpectralField out = SpectralField::zero(u.model());
    for (const auto& f : basis_) out = out + inner(f, u) * f;
    return out;
  }

 private:
  ConformalMetric metric_;
  InnerProductMode mode_;
  std::vector<SpectralField> basis_;
};

inline HolomorphyProjector build_projector(const ConformalMetric& m,
                                           InnerProductMode mode = InnerProductMode::CurrentMetric) {
  return HolomorphyProjector(m, mode);
}

inline SpectralField project_pi(const SpectralField& u, const HolomorphyProjector& proj) {
  return proj.project(u);
}

/// Real (1,1)-form h·ω_g on a surface; trace_g = 2h.
struct OneOneForm {
  SpectralField trace_half;

  SpectralField trace() const { return 2.0 * trace_half; }
};

struct PiProjection {
  OneOneForm form;
  /// f with Πη = η + i∂∂̄f, solving Δ_g f = 2(1-π) trace_g η.
  SpectralField correction;
};

/// Lift of π to (1,1)-forms: trace_g(Πη) = π(trace_g η) and Πη - η is exact.
/// In the trace-half representation i∂∂̄f contributes -¼Δ_g f.
inline PiProjection project_Pi(const OneOneForm& eta, const HolomorphyProjector& proj) {
  const ConformalMetric& m = proj.metric();
  const SpectralField tr = eta.trace();
  const SpectralField rhs = 2.0 * (tr - proj.project(tr));
  SpectralField f = green_g(rhs, m, GreenOptions{MeanPolicy::Remove});
  SpectralField h = eta.trace_half - 0.25 * laplacian_g(f, m);
  return {OneOneForm{std::move(h)}, std::move(f)};
}

/// ∫|∂̄∂#f|²_g dμ_g, evaluated in a conformal coordinate w:
/// ∂̄∂#f = ∂_w̄(g^{ww̄}∂_w̄ f) dw̄⊗∂_w. Zero iff ∂#f is holomorphic.
///
/// Sphere (w = artanh z + iθ, f axisymmetric):
///   2π ∫ ¼ (1-z²)² [(f'/F)']² F dz.
/// Torus (w = x + iy), with a = f_x/F, b = f_y/F:
///   ∫ ¼ [(a_x - b_y)² + (a_y + b_x)²] F dx dy.
inline double lichnerowicz_residual(const SpectralField& f, const ConformalMetric& m) {
  f.check_same(m.density_field());
  const SurfaceModel& model = *f.model();
  const VectorXd& density = m.density();
  if (model.is_sphere()) {
    const VectorXd a = model.dz_at_nodes(f.coeffs()).cwiseQuotient(density);
    const VectorXd da = model.dz_at_nodes(model.to_coeffs(a));
    VectorXd integrand(model.node_count());
    for (Index i = 0; i < integrand.size(); ++i) {
      const double z = model.sphere_z(i);
      const double w = 1.0 - z * z;
      integrand(i) = 0.25 * w * w * da(i) * da(i) * density(i);
    }
    return model.weights().dot(integrand);
  }
  const VectorXd a = model.dx_at_nodes(f.coeffs()).cwiseQuotient(density);
  const VectorXd b = model.dy_at_nodes(f.coeffs()).cwiseQuotient(density);
  const VectorXd ac = model.to_coeffs(a);
  const VectorXd bc = model.to_coeffs(b);
  const VectorXd re = model.dx_at_nodes(ac) - model.dy_at_nodes(bc);
  const VectorXd im = model.dy_at_nodes(ac) + model.dx_at_nodes(bc);
  const VectorXd integrand = 0.25 * (re.array().square() + im.array().square()) * density.array();
  return model.weights().dot(integrand);
}

/// Futaki invariant on Ξ = ∂#f: -∫ f (s - s0) dμ_g.
inline double futaki(const SpectralField& f, const ConformalMetric& m, double s0) {
  const SpectralField s = scalar_curvature(m);
  return -inner_product_g(f, s - SpectralField::constant(f.model(), s0), m);
}

/// Normalized Ricci potential ψ = -G_g(s - s0). Any mismatch between s0 and the
/// true average is absorbed by the mean removal of the Green solve.
inline SpectralField ricci_potential(const ConformalMetric& m, double s0) {
  const SpectralField s = scalar_curvature(m);
  return -green_g(s - SpectralField::constant(m.model(), s0), m, GreenOptions{MeanPolicy::Remove});
}

}  // namespace ekflow
