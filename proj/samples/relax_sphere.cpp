// Relaxes a random sphere potential and flows a class on CP2 blown up once.

#include "ekflow/class_flow.hpp"
#include "ekflow/extremal_flow.hpp"

#include <cstdio>

int main() {
  using namespace ekflow;

  auto model = build_model(SurfaceKind::AxisymSphere, 48);
  const auto phi0 = random_potential(model, 11, 0.05);
  int step = 0;
  const auto traj = run_flow(phi0, 1.0, {}, [&](const FlowState&, const DiagnosticsRecord& r) {
    if (step++ % 500 == 0) std::printf("t=%.4f  calabi=%.10f  sup|s-2|=%.3e\n", r.t, r.calabi_energy, r.sup_abs_s_dev);
  });
  std::printf("%s after %ld steps\n", to_string(traj.termination), traj.accepted_steps);

  const auto lattice = find_lattice(bundled_lattices(), "CP2_blowup1");
  VectorXd start(2);
  start << 2.0, -1.0;
  const auto flow = class_integrate(normalize_volume(CohClass(lattice, start)), 5.0);
  const auto& end = flow.samples.back();
  std::printf("class flow ends at (%.8f, %.8f), s = %.6f\n", end.omega(0), end.omega(1), end.s_class);
}
