#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ekflow::detail {

struct GaussLegendreRule {
  Eigen::VectorXd nodes;    // ascending, in (-1, 1)
  Eigen::VectorXd weights;  // sum to 2
};

// Newton iteration on P_n from the Tricomi initial guess.
inline GaussLegendreRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  GaussLegendreRule rule{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0;
    double p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes(i) = -z;
    rule.nodes(n - 1 - i) = z;
    rule.weights(i) = w;
    rule.weights(n - 1 - i) = w;
  }
  if (n % 2 == 1) rule.nodes(n / 2) = 0.0;
  return rule;
}

/// Rows: points, columns: P_0..P_degree.
inline Eigen::MatrixXd legendre_values(const Eigen::VectorXd& z, int degree) {
  Eigen::MatrixXd out(z.size(), degree + 1);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out(i, 0) = 1.0;
    if (degree >= 1) out(i, 1) = z(i);
    for (int l = 2; l <= degree; ++l) {
      out(i, l) = ((2.0 * l - 1.0) * z(i) * out(i, l - 1) - (l - 1.0) * out(i, l - 2)) / l;
    }
  }
  return out;
}

/// d/dz P_l at interior points, via (z²-1) P_l' = l (z P_l - P_{l-1}).
inline Eigen::MatrixXd legendre_derivatives(const Eigen::VectorXd& z, int degree) {
  const Eigen::MatrixXd p = legendre_values(z, degree);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(z.size(), degree + 1);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double zz = z(i);
    for (int l = 1; l <= degree; ++l) {
      out(i, l) = l * (zz * p(i, l) - p(i, l - 1)) / (zz * zz - 1.0);
    }
  }
  return out;
}

}  // namespace ekflow::detail
