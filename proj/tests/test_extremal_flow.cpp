#include "ekflow/extremal_flow.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace ekflow;
using ekflow::testing::random_field;
using ekflow::testing::sup_norm;

namespace {

constexpr double kPi = std::numbers::pi;

ModelPtr sphere(int modes = 32) { return build_model(SurfaceKind::AxisymSphere, modes); }
ModelPtr torus(int modes = 24) { return build_model(SurfaceKind::FlatTorus, modes); }

SpectralField mode(const ModelPtr& m, const char* name) { return SpectralField::basis(m, *m->basis_index(name)); }

FlowState zero_state(const ModelPtr& m) { return make_state(KahlerPotential{SpectralField::zero(m)}); }

FlowState random_state(const ModelPtr& m, std::uint64_t seed, double amp = 0.05) {
  return make_state(random_potential(m, seed, amp));
}

double log_slope(double e_big, double e_small, double ratio) { return std::log(e_big / e_small) / std::log(ratio); }

}  // namespace

TEST(FlowRhs, VanishesAtFixedPoints) {
  EXPECT_LT(sup_norm(flow_rhs(zero_state(sphere(64))).values()), 1e-9);
  EXPECT_LT(sup_norm(flow_rhs(zero_state(build_model(SurfaceKind::FlatTorus, 64))).values()), 1e-9);
}

// Oracle: Δ₀R = F(s - s₀) integrates to R = ln F + (s_bg/2)φ - mean_g.
TEST(FlowRhs, MatchesClosedFormPotential) {
  for (auto model : {sphere(64), torus()}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto st = random_state(model, seed);
      const VectorXd f = st.metric.density();
      const VectorXd raw = f.array().log().matrix() + 0.5 * model->s_background() * st.phi().phi.values();
      const auto oracle = SpectralField::from_values(model, raw);
      const auto expected = oracle - SpectralField::constant(model, mean_g(oracle, st.metric));
      EXPECT_LT(sup_norm((flow_rhs(st) - expected).values()), 1e-7) << to_string(model->kind());
      EXPECT_NEAR(integrate_g(flow_rhs(st), st.metric), 0.0, 1e-12);
    }
  }
}

TEST(FlowRhs, TorusSmallAmplitudeIsSecondOrder) {
  auto t = torus();
  const auto c = mode(t, "cos1*1");
  auto error = [&](double eps) {
    const auto st = make_state(KahlerPotential{eps * c});
    return sup_norm((flow_rhs(st) + (2 * kPi * kPi * eps) * c).values());
  };
  EXPECT_LT(error(1e-3), 1e-3);
  EXPECT_NEAR(error(1e-3) / error(5e-4), 4.0, 0.2);
}

TEST(LinearizedRhs, FlatTorus) {
  auto t = torus();
  const auto b = mode(t, "1*cos1");
  EXPECT_LT(sup_norm((linearized_rhs(zero_state(t), b) + (2 * kPi * kPi) * b).coeffs()), 1e-10);
}

TEST(LinearizedRhs, RoundSphereP2) {
  auto s = sphere();
  const auto b = SpectralField::basis(s, 2);
  EXPECT_LT(sup_norm((linearized_rhs(zero_state(s), b) + 2.0 * b).coeffs()), 1e-12);
}

TEST(LinearizedRhs, IsLinear) {
  std::mt19937_64 rng(9);
  auto s = sphere();
  const auto st = random_state(s, 4);
  const auto a = random_field(s, rng);
  const auto b = random_field(s, rng);
  const auto lhs = linearized_rhs(st, 2.0 * a - 3.0 * b);
  const auto rhs = 2.0 * linearized_rhs(st, a) - 3.0 * linearized_rhs(st, b);
  EXPECT_LT(sup_norm((lhs - rhs).values()), 1e-9);
}

TEST(LinearizedRhs, TaylorRemainderIsSecondOrder) {
  std::mt19937_64 rng(31);
  for (auto model : {sphere(), torus()}) {
    const auto st = random_state(model, 12, 0.03);
    const auto b = random_field(model, rng, 1e-2);
    const auto lb = linearized_rhs(st, b);
    std::vector<double> errs;
    for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
      const auto moved = make_state(KahlerPotential{st.phi().phi + eps * b});
      errs.push_back(sup_norm((flow_rhs(moved) - flow_rhs(st) - eps * lb).values()));
    }
    for (size_t i = 0; i + 1 < errs.size(); ++i) {
      EXPECT_NEAR(log_slope(errs[i], errs[i + 1], 10.0), 2.0, 0.2) << to_string(model->kind()) << " i=" << i;
    }
  }
}

TEST(CalabiEnergy, ModelValuesAndLowerBound) {
  EXPECT_NEAR(calabi_energy(zero_state(sphere())), 16 * kPi, 1e-11);
  EXPECT_NEAR(calabi_energy(zero_state(torus())), 0.0, 1e-20);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto st = random_state(sphere(), seed);
    EXPECT_GE(calabi_energy(st), 16 * kPi);
    EXPECT_NEAR(energy_lower_bound(st), 16 * kPi, 1e-8);
    EXPECT_GE(k_energy_dissipation(st), 0.0);
  }
}

TEST(ScalarEvolution, ResidualVanishesAtFixedPoint) {
  EXPECT_LT(scalar_evolution_residual(zero_state(sphere())), 1e-9);
}

TEST(ScalarEvolution, ResidualConvergesUnderRefinement) {
  for (auto model : {sphere(), torus()}) {
    const auto st = random_state(model, 21, 0.03);
    const double r1 = scalar_evolution_residual(st, 1e-2);
    const double r2 = scalar_evolution_residual(st, 5e-3);
    const double r3 = scalar_evolution_residual(st, 2.5e-3);
    EXPECT_GE(log_slope(r1, r2, 2.0), 1.0) << to_string(model->kind());
    EXPECT_GE(log_slope(r2, r3, 2.0), 1.0) << to_string(model->kind());
  }
}

TEST(KEnergy, SingleStepIncrementIsSecondOrderInDt) {
  auto s = sphere();
  const auto st = random_state(s, 6);
  const auto rec0 = diagnostics_record(st, nullptr, nullptr);
  const double q = inner_product_g(st.s - st.pis, green_g(st.s - st.pis, st.metric, {MeanPolicy::Remove}), st.metric);
  EXPECT_NEAR(rec0.dissipation, q, 1e-12 * q);
  auto defect = [&](double dt) {
    const auto step = step_adaptive(st, rec0, dt, FlowPolicy{}, dt);
    return std::abs(step.record.k_energy + q * dt);
  };
  const double h = 0.5 * stability_cap(*s, 1.0);
  EXPECT_NEAR(log_slope(defect(h), defect(h / 2), 2.0), 2.0, 0.2);
}

TEST(Diagnostics, RejectsEnergyIncreaseAndVolumeDrift) {
  const auto st = random_state(sphere(), 2);
  auto prev = diagnostics_record(st, nullptr, nullptr);
  prev.calabi_energy *= 1.0 - 1e-6;
  EXPECT_THROW(diagnostics_record(st, nullptr, &prev), MonotonicityViolation);
  prev = diagnostics_record(st, nullptr, nullptr);
  prev.volume *= 1.0 + 1e-6;
  EXPECT_THROW(diagnostics_record(st, nullptr, &prev), MonotonicityViolation);
  prev = diagnostics_record(st, nullptr, nullptr);
  EXPECT_NO_THROW(diagnostics_record(st, &st, &prev));
}

TEST(RunFlow, ZeroPotentialIsStationary) {
  for (auto model : {sphere(), torus()}) {
    const auto traj = run_flow(KahlerPotential{SpectralField::zero(model)}, 0.05);
    EXPECT_EQ(traj.termination, Termination::TimeLimit);
    ASSERT_TRUE(traj.final_state.has_value());
    EXPECT_DOUBLE_EQ(traj.final_state->t, 0.05);
    EXPECT_LT(sup_norm(traj.final_state->phi().phi.coeffs()), 1e-12);
    for (const auto& r : traj.records) {
      EXPECT_LT(r.sup_abs_rhs, 1e-9);
      EXPECT_NEAR(r.calabi_energy, traj.records.front().calabi_energy, 1e-10);
      EXPECT_NEAR(r.k_energy, 0.0, 1e-15);
    }
  }
}

TEST(RunFlow, ShortSphereRunKeepsInvariants) {
  auto s = sphere();
  const auto traj = run_flow(random_potential(s, 7, 0.05), 0.2);
  ASSERT_EQ(traj.termination, Termination::TimeLimit) << traj.message;
  const auto kappa = k_energy_accumulate(traj.records);
  for (size_t i = 0; i < traj.records.size(); ++i) {
    const auto& r = traj.records[i];
    EXPECT_NEAR(r.gauss_bonnet, 8 * kPi, 1e-6);
    EXPECT_NEAR(r.pis_min, 2.0, 1e-6);
    EXPECT_NEAR(r.pis_max, 2.0, 1e-6);
    EXPECT_LT(r.pis_rate, 1e-6);
    EXPECT_NEAR(r.futaki_values.at(0), 0.0, 1e-6);
    EXPECT_GE(r.calabi_energy, r.energy_lower_bound * (1 - 1e-9));
    EXPECT_NEAR(r.k_energy, kappa[i], 1e-14);
    if (i > 0) {
      const auto& p = traj.records[i - 1];
      EXPECT_LE(r.calabi_energy, p.calabi_energy * (1 + 1e-10));
      EXPECT_LE(r.k_energy, p.k_energy);
      EXPECT_NEAR(r.volume, p.volume, 1e-8 * p.volume);
    }
  }
  EXPECT_LT(traj.records.back().sup_abs_s_dev, traj.records.front().sup_abs_s_dev);
}

// Independent oracle: on the torus ∂_t F = -½ Δ₀ ln F (the normalized Ricci
// flow at half speed); integrate it with small explicit Euler steps.
TEST(RunFlow, TorusMatchesLogDiffusion) {
  auto t = torus(16);
  const auto phi0 = KahlerPotential{0.02 * mode(t, "cos1*1") + 0.01 * mode(t, "1*cos1")};
  const double t_end = 0.05;
  const auto traj = run_flow(phi0, t_end);
  ASSERT_EQ(traj.termination, Termination::TimeLimit) << traj.message;

  VectorXd f = metric_from_potential(phi0).density();
  const int n = 20000;
  const double h = t_end / n;
  for (int i = 0; i < n; ++i) {
    const VectorXd lap = laplacian0(SpectralField::from_values(t, f.array().log().matrix())).values();
    f -= 0.5 * h * lap;
  }
  EXPECT_LT(sup_norm(traj.final_state->metric.density() - f), 1e-5);
}

TEST(RunFlow, TorusCurvatureDecaysAndKEnergyDecreases) {
  auto t = torus(16);
  const auto phi0 = KahlerPotential{0.02 * mode(t, "cos1*1") + 0.01 * mode(t, "1*cos1")};
  FlowPolicy policy;
  policy.roundoff_slack = 1e-10;
  const auto traj = run_flow(phi0, 1.0, policy);
  ASSERT_EQ(traj.termination, Termination::TimeLimit) << traj.message;
  for (size_t i = 1; i < traj.records.size(); ++i) {
    const auto& r = traj.records[i];
    const auto& p = traj.records[i - 1];
    EXPECT_LE(r.sup_abs_s, p.sup_abs_s * (1 + 1e-12) + 1e-12);
    // Strict while the increment is resolvable against κ in double precision.
    if (0.5 * r.dt * (r.dissipation + p.dissipation) > 1e-14 * std::abs(p.k_energy)) {
      EXPECT_LT(r.k_energy, p.k_energy);
    } else {
      EXPECT_LE(r.k_energy, p.k_energy);
    }
    EXPECT_NEAR(r.gauss_bonnet, 0.0, 1e-9);
  }
  EXPECT_LT(traj.records.back().sup_abs_s, 1e-4);
}

TEST(RunFlow, ReportsInadmissibleStart) {
  auto t = torus(16);
  const auto traj = run_flow(KahlerPotential{0.1 * mode(t, "cos1*1")}, 1.0);
  EXPECT_EQ(traj.termination, Termination::PositivityViolation);
  EXPECT_TRUE(traj.records.empty());
  EXPECT_FALSE(traj.final_state.has_value());
}

TEST(RunFlow, BlowUpCeiling) {
  FlowPolicy policy;
  policy.blowup_ceiling = 1.0;
  const auto traj = run_flow(KahlerPotential{SpectralField::zero(sphere())}, 1.0, policy);
  EXPECT_EQ(traj.termination, Termination::BlowUp);
}

TEST(RunFlow, StepUnderflow) {
  FlowPolicy policy;
  policy.dt_floor = 1.0;
  const auto traj = run_flow(random_potential(sphere(), 1, 0.05), 1.0, policy);
  EXPECT_EQ(traj.termination, Termination::StepUnderflow);
}

TEST(RunFlow, ConvergedTolerance) {
  FlowPolicy policy;
  policy.converged_tolerance = 1e-3;
  const auto traj = run_flow(random_potential(sphere(16), 3, 0.05), 50.0, policy);
  EXPECT_EQ(traj.termination, Termination::Converged);
  EXPECT_LT(traj.final_state->t, 50.0);
}

TEST(RunFlow, BackgroundInnerProductAndStaleProjector) {
  FlowPolicy policy;
  policy.inner_product = InnerProductMode::BackgroundMetric;
  policy.projector_rebuild_every = 5;
  const auto traj = run_flow(random_potential(sphere(), 5, 0.05), 0.05, policy);
  ASSERT_EQ(traj.termination, Termination::TimeLimit) << traj.message;
  for (const auto& r : traj.records) EXPECT_NEAR(r.gauss_bonnet, 8 * kPi, 1e-6);
}
