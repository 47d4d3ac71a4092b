// Serial vs OpenMP timings for the two parallel kernels.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>

#include "wgpfr/experiment.hpp"

using namespace wgpfr;

namespace {

double best_of(int reps, const std::function<void()>& body) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-22s serial %9.4f s   parallel %9.4f s   speedup %5.2fx\n", name, serial, parallel, serial / parallel);
}

}  // namespace

int main() {
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());

  const SimulatedData sphere = simulate({ScenarioKind::Sphere, 30, 60, 7});
  const SimulatedData shape = simulate({ScenarioKind::Shape, 10, 20, 7});
  for (const auto* sim : {&sphere, &shape}) {
    const CurveDataset& d = sim->data;
    const char* label = d.manifold.is_sphere() ? "frechet_grid sphere" : "frechet_grid shape";
    const double s = best_of(3, [&] { frechet_mean_grid(d.manifold, d.curves, &d.observed, {}, Exec::Serial); });
    const double p = best_of(3, [&] { frechet_mean_grid(d.manifold, d.curves, &d.observed, {}, Exec::Parallel); });
    report(label, s, p);
  }

  const FitConfig cfg = scenario_fit_config({ScenarioKind::Sphere, 30, 20, 7});
  const SimulatedData small = simulate({ScenarioKind::Sphere, 30, 20, 7});
  const MeanStructure mean = fit_mean_structure(small.data, cfg);
  const Residuals tau = covariance_residuals(mean, small.data);
  const double s = best_of(2, [&] { fit_covariance(tau, small.data, cfg.gp, nullptr, Exec::Serial); });
  const double p = best_of(2, [&] { fit_covariance(tau, small.data, cfg.gp, nullptr, Exec::Parallel); });
  report("fit_covariance sphere", s, p);
  return 0;
}
