#pragma once

#include <span>
#include <vector>

#include "wgpfr/model.hpp"

namespace wgpfr {

enum class CurveMetric { Chordal, Geodesic };

struct EvalReport {
  double rmse = 0.0;
  /// NaN when the model has no covariance structure.
  double lppd = 0.0;
  double dfd = 0.0;
  int n_test = 0;
};

/// sqrt(mean |pred_i - truth_i|^2) in ambient coordinates.
double rmse_chordal(std::span<const Vec> pred, std::span<const Vec> truth);
/// Shapes are rotated onto the truth before the chordal distance; on the
/// sphere this is the plain version.
double rmse_chordal(const Manifold& manifold, std::span<const Vec> pred, std::span<const Vec> truth);

double point_distance(const Manifold& manifold, const Vec& a, const Vec& b, CurveMetric metric);

/// Minimum over monotone couplings of the largest coupled distance.
double discrete_frechet(const Manifold& manifold, std::span<const Vec> a, std::span<const Vec> b,
                        CurveMetric metric = CurveMetric::Chordal);

/// Sum over test indices and tangent coordinates of the pointwise predictive
/// log density of Log(mu_m(t_i), truth_i), with truth taken from `truth`.
double aggregate_lppd(const WGPFRModel& model, const CurveDataset& data, int curve,
                      std::span<const int> test_index, std::span<const Vec> truth);

/// Predictions of curve `curve` at `test_index` scored against `truth`.
EvalReport evaluate_predictions(const WGPFRModel& model, const CurveDataset& data, int curve,
                                std::span<const int> test_index, std::span<const Vec> truth,
                                CurveMetric metric = CurveMetric::Chordal);

}  // namespace wgpfr
