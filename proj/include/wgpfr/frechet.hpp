#pragma once

#include <optional>
#include <span>
#include <vector>

#include "wgpfr/geometry.hpp"
#include "wgpfr/parallel.hpp"

namespace wgpfr {

struct FrechetConfig {
  /// Step size l. Zero selects 1/M, M being the number of averaged points.
  double step_size = 0.0;
  double tolerance = 1e-8;
  int max_iter = 5000;

  void validate() const;
};

struct FrechetResult {
  Vec point;
  int iterations = 0;
  bool converged = false;
  /// Objective sum_m d(y_m, p)^2 at every accepted iterate, starting with the
  /// initializer.
  std::vector<double> objective_trace;
};

/// Riemannian gradient descent for argmin_p (1/M) sum_m d(y_m, p)^2.
/// Each step moves along Exp(p, 2l/M sum_m Log(p, y_m)); a step that would
/// increase the objective is halved until it does not.
FrechetResult sample_frechet_mean(const Manifold& manifold, std::span<const Vec> points,
                                  const FrechetConfig& cfg = {},
                                  const std::optional<Vec>& init = std::nullopt);

/// Sum of squared geodesic distances from p to the points.
double frechet_objective(const Manifold& manifold, std::span<const Vec> points, const Vec& p);

/// (2/M) sum_m Log(p, y_m): the negative Riemannian gradient of the mean
/// squared distance.
Vec frechet_descent_direction(const Manifold& manifold, std::span<const Vec> points, const Vec& p);

struct Curve {
  std::vector<double> times;
  std::vector<Vec> points;
};

/// Pointwise Frechet mean of curves sharing one time grid.
std::vector<Vec> frechet_mean_curve(const Manifold& manifold, std::span<const Curve> curves,
                                    const FrechetConfig& cfg = {}, Exec exec = Exec::Parallel);

/// Grid form used by model fitting: points[m][i] is curve m at time i and
/// observed[m][i] (when given) says whether it enters the mean at time i.
std::vector<Vec> frechet_mean_grid(const Manifold& manifold,
                                   const std::vector<std::vector<Vec>>& points,
                                   const std::vector<std::vector<char>>* observed,
                                   const FrechetConfig& cfg = {}, Exec exec = Exec::Parallel);

}  // namespace wgpfr
