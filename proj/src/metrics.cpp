#include "wgpfr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wgpfr {

double rmse_chordal(std::span<const Vec> pred, std::span<const Vec> truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "prediction and truth lengths differ");
  if (pred.empty()) throw Error(ErrorCode::EmptyInput, "no points to score");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size()) throw Error(ErrorCode::DimensionMismatch, "point lengths differ");
    sum += (pred[i] - truth[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

double rmse_chordal(const Manifold& manifold, std::span<const Vec> pred, std::span<const Vec> truth) {
  if (manifold.is_sphere()) return rmse_chordal(pred, truth);
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "prediction and truth lengths differ");
  std::vector<Vec> aligned;
  aligned.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) aligned.push_back(manifold.align(truth[i], pred[i]));
  return rmse_chordal(aligned, truth);
}

double point_distance(const Manifold& manifold, const Vec& a, const Vec& b, CurveMetric metric) {
  if (metric == CurveMetric::Geodesic) return manifold.dist(a, b);
  return (manifold.align(a, b) - a).norm();
}

double discrete_frechet(const Manifold& manifold, std::span<const Vec> a, std::span<const Vec> b,
                        CurveMetric metric) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyCurve, "discrete Frechet distance of an empty curve");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // Rolling row of the coupling table.
  std::vector<double> prev(m);
  std::vector<double> cur(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = point_distance(manifold, a[i], b[j], metric);
      double reach;
      if (i == 0 && j == 0) {
        reach = d;
      } else if (i == 0) {
        reach = std::max(cur[j - 1], d);
      } else if (j == 0) {
        reach = std::max(prev[j], d);
      } else {
        reach = std::max(std::min({prev[j], prev[j - 1], cur[j - 1]}), d);
      }
      cur[j] = reach;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double aggregate_lppd(const WGPFRModel& model, const CurveDataset& data, int curve,
                      std::span<const int> test_index, std::span<const Vec> truth) {
  if (test_index.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "test indices and truth");
  if (!model.has_covariance()) return std::numeric_limits<double>::quiet_NaN();
  const Manifold& mf = model.manifold();
  const auto& cov = model.cov.at(static_cast<std::size_t>(curve));
  double total = 0.0;
  for (std::size_t r = 0; r < test_index.size(); ++r) {
    const int i = test_index[r];
    const Vec mu = model.curve_mean(curve, i);
    const Vec target = mf.log_map(mu, truth[r]);
    const Mat X = data.gp_input(curve, i).transpose();
    for (int d = 0; d < mf.ambient_dim(); ++d) {
      total += log_pointwise_predictive_density(cov.dims[static_cast<std::size_t>(d)], X,
                                                Vec::Constant(1, target[d]));
    }
  }
  return total;
}

EvalReport evaluate_predictions(const WGPFRModel& model, const CurveDataset& data, int curve,
                                std::span<const int> test_index, std::span<const Vec> truth,
                                CurveMetric metric) {
  if (test_index.empty()) throw Error(ErrorCode::EmptyInput, "no test points");
  std::vector<Vec> pred;
  pred.reserve(test_index.size());
  for (int i : test_index) pred.push_back(predict(model, data, curve, i).point);
  EvalReport rep;
  rep.n_test = static_cast<int>(test_index.size());
  rep.rmse = rmse_chordal(model.manifold(), pred, truth);
  rep.lppd = aggregate_lppd(model, data, curve, test_index, truth);
  rep.dfd = discrete_frechet(model.manifold(), pred, truth, metric);
  return rep;
}

}  // namespace wgpfr
