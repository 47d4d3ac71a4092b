#include "wgpfr/frechet.hpp"

#include <cmath>
#include <exception>

namespace wgpfr {

void FrechetConfig::validate() const {
  if (!(step_size >= 0.0) || !(tolerance > 0.0) || max_iter < 1) {
    throw Error(ErrorCode::ConfigInvalid, "Frechet config needs step >= 0, tolerance > 0, max_iter >= 1");
  }
}

double frechet_objective(const Manifold& manifold, std::span<const Vec> points, const Vec& p) {
  double total = 0.0;
  for (const Vec& y : points) {
    const double d = manifold.dist(p, y);
    total += d * d;
  }
  return total;
}

Vec frechet_descent_direction(const Manifold& manifold, std::span<const Vec> points, const Vec& p) {
  Vec g = Vec::Zero(manifold.ambient_dim());
  for (const Vec& y : points) g += manifold.log_map(p, y);
  return (2.0 / static_cast<double>(points.size())) * g;
}

FrechetResult sample_frechet_mean(const Manifold& manifold, std::span<const Vec> points,
                                  const FrechetConfig& cfg, const std::optional<Vec>& init) {
  cfg.validate();
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "Frechet mean of an empty set");

  FrechetResult out;
  out.point = init ? *init : manifold.extrinsic_mean(points);
  manifold.check_point(out.point, 1e-8);

  double step = cfg.step_size > 0.0 ? cfg.step_size : 1.0 / static_cast<double>(points.size());
  double objective = frechet_objective(manifold, points, out.point);
  out.objective_trace.push_back(objective);

  for (out.iterations = 0; out.iterations < cfg.max_iter;) {
    const Vec direction = frechet_descent_direction(manifold, points, out.point);
    if (direction.norm() <= cfg.tolerance) {
      out.converged = true;
      break;
    }
    ++out.iterations;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Vec tangent = manifold.tangent_project(out.point, step * direction);
      const Vec candidate = manifold.exp_map(out.point, tangent);
      const double value = frechet_objective(manifold, points, candidate);
      if (value < objective) {
        out.point = candidate;
        objective = value;
        out.objective_trace.push_back(objective);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No representable step decreases the objective: numerically stationary.
      out.converged = direction.norm() <= std::sqrt(cfg.tolerance);
      break;
    }
  }
  return out;
}

std::vector<Vec> frechet_mean_grid(const Manifold& manifold,
                                   const std::vector<std::vector<Vec>>& points,
                                   const std::vector<std::vector<char>>* observed,
                                   const FrechetConfig& cfg, Exec exec) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "no curves");
  const std::size_t n_times = points.front().size();
  for (const auto& curve : points) {
    if (curve.size() != n_times) throw Error(ErrorCode::GridMismatch, "curves differ in length");
  }

  std::vector<Vec> mean(n_times);
  std::exception_ptr failure;

  auto solve_time = [&](std::size_t i) {
    std::vector<Vec> sample;
    sample.reserve(points.size());
    for (std::size_t m = 0; m < points.size(); ++m) {
      if (observed == nullptr || (*observed)[m][i]) sample.push_back(points[m][i]);
    }
    if (sample.empty()) {
      throw Error(ErrorCode::EmptyInput, "no observation at time index " + std::to_string(i));
    }
    mean[i] = sample_frechet_mean(manifold, sample, cfg).point;
  };

  if (exec == Exec::Parallel) {
    const auto n = static_cast<long>(n_times);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
      try {
        solve_time(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(wgpfr_frechet_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t i = 0; i < n_times; ++i) solve_time(i);
  }
  return mean;
}

std::vector<Vec> frechet_mean_curve(const Manifold& manifold, std::span<const Curve> curves,
                                    const FrechetConfig& cfg, Exec exec) {
  if (curves.empty()) throw Error(ErrorCode::EmptyInput, "no curves");
  const auto& grid = curves.front().times;
  std::vector<std::vector<Vec>> points;
  points.reserve(curves.size());
  for (const Curve& c : curves) {
    if (c.times.size() != grid.size() || c.points.size() != grid.size()) {
      throw Error(ErrorCode::GridMismatch, "curves are not observed on a common grid");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs(c.times[i] - grid[i]) > 1e-12) {
        throw Error(ErrorCode::GridMismatch, "time grids differ at index " + std::to_string(i));
      }
    }
    points.push_back(c.points);
  }
  return frechet_mean_grid(manifold, points, nullptr, cfg, exec);
}

}  // namespace wgpfr
