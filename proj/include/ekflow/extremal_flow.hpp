#pragma once

// Extremal flow ∂_t φ = G_g(s - πs) on a conformal surface model.

#include "ekflow/holomorphy.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ekflow {

struct FlowPolicy {
  /// 0 selects the stability cap cfl / λ_max.
  double dt_initial = 0.0;
  double dt_floor = 1e-12;
  double cfl = 1.0;
  double growth = 2.0;
  double blowup_ceiling = 1e4;
  InnerProductMode inner_product = InnerProductMode::CurrentMetric;
  int projector_rebuild_every = 1;
  double monotonicity_slack = 1e-10;
  /// Absolute allowance for Φ increases: roundoff_slack · sup|s|² · Vol.
  double roundoff_slack = 1e-13;
  double volume_tolerance = 1e-8;
  /// Stop when sup|s - πs| falls below this; 0 disables.
  double converged_tolerance = 0.0;
  /// Evaluate the scalar-evolution residual every n accepted steps; 0 disables.
  int scalar_residual_every = 1;
  double scalar_residual_delta = 1e-5;
};

inline double stability_cap(const SurfaceModel& model, double cfl) { return cfl / model.max_eigenvalue(); }

/// A point on the flow with the quantities every consumer needs cached.
struct FlowState {
  double t = 0.0;
  ConformalMetric metric;
  HolomorphyProjector projector;
  SpectralField s;
  SpectralField pis;
  SpectralField rhs;

  const KahlerPotential& phi() const noexcept { return metric.potential(); }
  const ModelPtr& model() const noexcept { return metric.model(); }
};

namespace detail {

/// G_g(s - πs), normalized to zero g-mean.
inline SpectralField green_deviation(const ConformalMetric& m, const SpectralField& s, const SpectralField& pis) {
  return green_g(s - pis, m, GreenOptions{MeanPolicy::Remove});
}

inline FlowState assemble(double t, ConformalMetric m, HolomorphyProjector proj) {
  SpectralField s = scalar_curvature(m);
  SpectralField pis = proj.project(s);
  SpectralField rhs = green_deviation(m, s, pis);
  return FlowState{t, std::move(m), std::move(proj), std::move(s), std::move(pis), std::move(rhs)};
}

}  // namespace detail

inline FlowState make_state(const KahlerPotential& phi, double t = 0.0,
                            InnerProductMode mode = InnerProductMode::CurrentMetric) {
  ConformalMetric m = metric_from_potential(phi);
  HolomorphyProjector proj = build_projector(m, mode);
  return detail::assemble(t, std::move(m), std::move(proj));
}

/// State that keeps a previously built projector instead of rebuilding it.
inline FlowState make_state(const KahlerPotential& phi, double t, const HolomorphyProjector& reuse) {
  return detail::assemble(t, metric_from_potential(phi), reuse);
}

/// G_g(s - πs) at the state.
inline SpectralField flow_rhs(const FlowState& state) { return detail::green_deviation(state.metric, state.s, state.pis); }

namespace detail {

/// Node values of g₀(∇a, ∇b).
inline VectorXd gradient_dot0(const SpectralField& a, const SpectralField& b) {
  const SurfaceModel& model = *a.model();
  if (model.is_sphere()) {
    VectorXd out = model.dz_at_nodes(a.coeffs()).cwiseProduct(model.dz_at_nodes(b.coeffs()));
    for (Index i = 0; i < out.size(); ++i) out(i) *= 1.0 - model.sphere_z(i) * model.sphere_z(i);
    return out;
  }
  return model.dx_at_nodes(a.coeffs()).cwiseProduct(model.dx_at_nodes(b.coeffs())) +
         model.dy_at_nodes(a.coeffs()).cwiseProduct(model.dy_at_nodes(b.coeffs()));
}

}  // namespace detail

/// Derivative of flow_rhs at state in direction φ ↦ φ + b:
///   -½Δ_g b + G_g(½ πs Δ_g b) - G_g(½ g(∇b, ∇πs)) + c,
/// with c restoring the mean normalization of the perturbed right side.
inline SpectralField linearized_rhs(const FlowState& state, const SpectralField& b) {
  const ConformalMetric& m = state.metric;
  const ModelPtr& model = m.model();
  b.check_same(state.s);
  const SpectralField lap_b = laplacian_g(b, m);
  const GreenOptions remove{MeanPolicy::Remove};

  SpectralField out = -0.5 * lap_b;
  out = out + green_g(SpectralField::from_values(model, 0.5 * state.pis.values().cwiseProduct(lap_b.values())), m,
                      remove);
  const VectorXd grad = detail::gradient_dot0(b, state.pis).cwiseQuotient(m.density());
  if (grad.cwiseAbs().maxCoeff() > 0.0) {
    out = out - green_g(SpectralField::from_values(model, 0.5 * grad), m, remove);
  }

  const SpectralField delta_f = -0.5 * laplacian0(b);
  const double target = -integrate0(state.rhs.values().cwiseProduct(delta_f.values()), *model);
  const double c = (target - integrate_g(out, m)) / volume_g(m);
  return out + SpectralField::constant(model, c);
}

inline double calabi_energy(const FlowState& state) { return inner_product_g(state.s, state.s, state.metric); }

/// E(Ω) = ∫(πs)² dμ_g, the lower bound for Φ on the class.
inline double energy_lower_bound(const FlowState& state) {
  return inner_product_g(state.pis, state.pis, state.metric);
}

/// ⟨φ̇, s - πs⟩_g, the K-energy dissipation rate.
inline double k_energy_dissipation(const FlowState& state) {
  return inner_product_g(state.rhs, state.s - state.pis, state.metric);
}

/// Right side of the scalar curvature evolution: -½Δ_g(s - πs) + ½ s (s - πs).
inline VectorXd scalar_evolution_rhs(const FlowState& state) {
  const SpectralField dev = state.s - state.pis;
  return -0.5 * laplacian_g(dev, state.metric).values() + 0.5 * state.s.values().cwiseProduct(dev.values());
}

/// sup |central difference of s along φ̇ with step delta - scalar_evolution_rhs|.
inline double scalar_evolution_residual(const FlowState& state, double delta = 1e-5) {
  const KahlerPotential& phi = state.phi();
  const VectorXd plus = scalar_curvature_values(metric_from_potential(KahlerPotential{phi.phi + delta * state.rhs}));
  const VectorXd minus = scalar_curvature_values(metric_from_potential(KahlerPotential{phi.phi - delta * state.rhs}));
  const VectorXd fd = (plus - minus) / (2.0 * delta);
  return (fd - scalar_evolution_rhs(state)).cwiseAbs().maxCoeff();
}

struct DiagnosticsRecord {
  double t = 0.0;
  double dt = 0.0;
  double volume = 0.0;
  double calabi_energy = 0.0;
  double energy_lower_bound = 0.0;
  double k_energy = 0.0;
  double dissipation = 0.0;
  double pis_min = 0.0;
  double pis_max = 0.0;
  /// sup |πs_t - πs_prev| / dt.
  double pis_rate = 0.0;
  std::vector<double> futaki_values;
  double sup_abs_s = 0.0;
  /// sup |s - s₀| with s₀ the average scalar curvature.
  double sup_abs_s_dev = 0.0;
  double sup_abs_rhs = 0.0;
  double gauss_bonnet = 0.0;
  double min_density = 0.0;
  double scalar_evolution_residual = std::numeric_limits<double>::quiet_NaN();
};

/// Assembles the audited quantities. With prev given, enforces that Φ did not
/// increase and the volume did not drift, and integrates κ by the trapezoid rule.
inline DiagnosticsRecord diagnostics_record(const FlowState& state, const FlowState* prev_state,
                                            const DiagnosticsRecord* prev, const FlowPolicy& policy = {},
                                            bool with_scalar_residual = false) {
  const ConformalMetric& m = state.metric;
  const SurfaceModel& model = *m.model();
  const double s0 = average_scalar_curvature(model);
  const VectorXd s_values = state.s.values();
  const VectorXd pis_values = state.pis.values();

  DiagnosticsRecord r;
  r.t = state.t;
  r.volume = volume_g(m);
  r.calabi_energy = calabi_energy(state);
  r.energy_lower_bound = energy_lower_bound(state);
  r.dissipation = k_energy_dissipation(state);
  r.pis_min = pis_values.minCoeff();
  r.pis_max = pis_values.maxCoeff();
  for (const auto& p : momentum_potentials(m)) r.futaki_values.push_back(futaki(p, m, s0));
  r.sup_abs_s = s_values.cwiseAbs().maxCoeff();
  r.sup_abs_s_dev = (s_values.array() - s0).abs().maxCoeff();
  r.sup_abs_rhs = state.rhs.values().cwiseAbs().maxCoeff();
  r.gauss_bonnet = integrate_g(state.s, m);
  r.min_density = m.min_density();
  if (with_scalar_residual) r.scalar_evolution_residual = scalar_evolution_residual(state, policy.scalar_residual_delta);

  if (prev != nullptr) {
    r.dt = r.t - prev->t;
    r.k_energy = prev->k_energy - 0.5 * r.dt * (prev->dissipation + r.dissipation);
    if (prev_state != nullptr && r.dt > 0.0) {
      r.pis_rate = (pis_values - prev_state->pis.values()).cwiseAbs().maxCoeff() / r.dt;
    }
    const double floor = policy.roundoff_slack * r.sup_abs_s * r.sup_abs_s * r.volume;
    if (r.calabi_energy > prev->calabi_energy + policy.monotonicity_slack * prev->calabi_energy + floor) {
      throw MonotonicityViolation("calabi energy increased from " + std::to_string(prev->calabi_energy) + " to " +
                                  std::to_string(r.calabi_energy));
    }
    if (std::abs(r.volume - prev->volume) > policy.volume_tolerance * prev->volume) {
      throw MonotonicityViolation("volume drifted from " + std::to_string(prev->volume) + " to " +
                                  std::to_string(r.volume));
    }
  }
  return r;
}

struct StepResult {
  FlowState state;
  DiagnosticsRecord record;
  double dt_used;
  double dt_next;
  int rejections;
};

/// One classical RK4 step of size at most dt (clipped to t_end). Positivity
/// loss in any stage and diagnostic violations halve dt and retry.
inline StepResult step_adaptive(const FlowState& state, const DiagnosticsRecord& prev, double dt,
                                const FlowPolicy& policy, double t_end = std::numeric_limits<double>::infinity(),
                                bool rebuild_projector = true, bool with_scalar_residual = false) {
  const double cap = stability_cap(*state.model(), policy.cfl);
  dt = std::min(dt, cap);
  int rejections = 0;
  const SpectralField& phi = state.phi().phi;
  auto stage = [&](const SpectralField& p, double t) {
    return rebuild_projector ? make_state(KahlerPotential{p}, t, policy.inner_product)
                             : make_state(KahlerPotential{p}, t, state.projector);
  };
  for (;;) {
    const double remaining = t_end - state.t;
    const bool last = remaining - dt <= 1e-9 * dt;
    const double h = last ? remaining : dt;
    if (h < policy.dt_floor) throw StepUnderflow(h);
    try {
      const SpectralField& k1 = state.rhs;
      const SpectralField k2 = stage(phi + 0.5 * h * k1, state.t + 0.5 * h).rhs;
      const SpectralField k3 = stage(phi + 0.5 * h * k2, state.t + 0.5 * h).rhs;
      const SpectralField k4 = stage(phi + h * k3, state.t + h).rhs;
      const SpectralField next = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      FlowState out = stage(next, last ? t_end : state.t + h);
      DiagnosticsRecord rec = diagnostics_record(out, &state, &prev, policy, with_scalar_residual);
      if (!(rec.sup_abs_s <= policy.blowup_ceiling)) throw BlowUpSignal(rec.sup_abs_s);
      const double next_dt = std::min(dt * policy.growth, cap);
      return StepResult{std::move(out), std::move(rec), h, next_dt, rejections};
    } catch (const PositivityViolation&) {
    } catch (const MonotonicityViolation&) {
    }
    ++rejections;
    dt = 0.5 * h;
  }
}

enum class Termination { Converged, TimeLimit, BlowUp, PositivityViolation, StepUnderflow, FlowError };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "Converged";
    case Termination::TimeLimit: return "TimeLimit";
    case Termination::BlowUp: return "BlowUp";
    case Termination::PositivityViolation: return "PositivityViolation";
    case Termination::StepUnderflow: return "StepUnderflow";
    case Termination::FlowError: return "FlowError";
  }
  return "?";
}

struct Trajectory {
  std::vector<DiagnosticsRecord> records;
  std::optional<FlowState> final_state;
  Termination termination = Termination::TimeLimit;
  std::string message;
  long accepted_steps = 0;
  long rejected_steps = 0;
};

/// Integrates from φ₀ to t_end, recording diagnostics at t = 0 and after every
/// accepted step. Failures end the run and are reported in termination.
inline Trajectory run_flow(const KahlerPotential& phi0, double t_end, const FlowPolicy& policy = {},
                           const std::function<void(const FlowState&, const DiagnosticsRecord&)>& observer = {}) {
  Trajectory traj;
  std::optional<FlowState> state;
  try {
    state.emplace(make_state(phi0, 0.0, policy.inner_product));
    traj.records.push_back(diagnostics_record(*state, nullptr, nullptr, policy, policy.scalar_residual_every > 0));
    if (observer) observer(*state, traj.records.back());
    if (traj.records.back().sup_abs_s > policy.blowup_ceiling) throw BlowUpSignal(traj.records.back().sup_abs_s);

    double dt = policy.dt_initial > 0.0 ? policy.dt_initial : stability_cap(*state->model(), policy.cfl);
    while (state->t < t_end) {
      if (policy.converged_tolerance > 0.0 &&
          (state->s - state->pis).values().cwiseAbs().maxCoeff() < policy.converged_tolerance) {
        traj.termination = Termination::Converged;
        break;
      }
      const long n = traj.accepted_steps + 1;
      const bool rebuild = policy.projector_rebuild_every <= 1 || n % policy.projector_rebuild_every == 0;
      const bool residual = policy.scalar_residual_every > 0 && n % policy.scalar_residual_every == 0;
      StepResult step = step_adaptive(*state, traj.records.back(), dt, policy, t_end, rebuild, residual);
      traj.rejected_steps += step.rejections;
      ++traj.accepted_steps;
      dt = step.dt_next;
      state.emplace(std::move(step.state));
      traj.records.push_back(std::move(step.record));
      if (observer) observer(*state, traj.records.back());
    }
  } catch (const BlowUpSignal& e) {
    traj.termination = Termination::BlowUp;
    traj.message = e.what();
  } catch (const PositivityViolation& e) {
    traj.termination = Termination::PositivityViolation;
    traj.message = e.what();
  } catch (const StepUnderflow& e) {
    traj.termination = Termination::StepUnderflow;
    traj.message = e.what();
  } catch (const FlowError& e) {
    traj.termination = Termination::FlowError;
    traj.message = e.what();
  }
  traj.final_state = std::move(state);
  return traj;
}

/// Running κ from recorded times and dissipation rates, κ(first) = 0.
inline std::vector<double> k_energy_accumulate(const std::vector<DiagnosticsRecord>& records) {
  std::vector<double> kappa;
  kappa.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    if (i == 0) {
      kappa.push_back(0.0);
      continue;
    }
    const double dt = records[i].t - records[i - 1].t;
    kappa.push_back(kappa.back() - 0.5 * dt * (records[i - 1].dissipation + records[i].dissipation));
  }
  return kappa;
}

}  // namespace ekflow
