#pragma once

#include <array>
#include <cstdint>

#include "wgpfr/geometry.hpp"

namespace wgpfr {

/// k(x, x') = v0 exp(-|x - x'|^2 / (2 w0)) + a0 + a1 x.x' + sigma^2 [same index].
struct KernelHyperparams {
  double v0 = 1.0;
  double w0 = 1.0;
  double a0 = 0.0;
  double a1 = 0.0;
  double sigma = 0.1;

  static constexpr int kCount = 5;
  using Array = std::array<double, kCount>;

  /// Log-space box used by the optimizer, in the field order above.
  static const Array& lower_bounds();
  static const Array& upper_bounds();

  Array to_log() const;
  /// Inverse of to_log.
  static KernelHyperparams from_log(const Array& log_theta);
  /// Same parameters clipped into the optimizer box.
  KernelHyperparams clamped() const;

  /// Finite, v0, a0, a1, sigma >= 0 and w0 > 0. Throws ConfigInvalid otherwise.
  void validate() const;
  bool operator==(const KernelHyperparams&) const = default;
};

/// Inputs are stored one per row (n x Q).
double kernel_eval(const KernelHyperparams& theta, const Vec& x, const Vec& xp, bool same_index);
Mat gram_matrix(const KernelHyperparams& theta, const Mat& X, bool with_noise = true);
/// K(X, Xstar) without noise, n x n*.
Mat cross_kernel(const KernelHyperparams& theta, const Mat& X, const Mat& Xstar);

/// Inputs as a single column (scalar inputs such as time).
Mat column_inputs(std::span<const double> values);

/// Jitter levels tried in order when the Gram matrix fails to factor.
inline constexpr std::array<double, 4> kJitterLadder{0.0, 1e-10, 1e-8, 1e-6};

struct Likelihood {
  double value = 0.0;
  /// Gradient with respect to to_log() coordinates.
  KernelHyperparams::Array grad_log{};
};

double log_marginal_likelihood(const KernelHyperparams& theta, const Mat& X, const Vec& z);
Likelihood log_marginal_likelihood_with_gradient(const KernelHyperparams& theta, const Mat& X,
                                                 const Vec& z);

struct OptimizeConfig {
  /// Total number of starts: the given initializer plus restarts - 1 random
  /// standard-normal log-space draws.
  int restarts = 5;
  std::uint64_t seed = 0;
  int max_iter = 200;
  double grad_tol = 1e-6;
};

struct OptimizeResult {
  KernelHyperparams theta;
  double log_likelihood = 0.0;
  int failed_starts = 0;
  int iterations = 0;
};

/// Maximizes the log marginal likelihood by projected L-BFGS in log space.
/// Throws AllRestartsFailed when no start can be evaluated.
OptimizeResult optimize_hyperparams(const Mat& X, const Vec& z, const KernelHyperparams& init,
                                    const OptimizeConfig& cfg = {});
KernelHyperparams optimize_hyperparams(const Mat& X, const Vec& z, const KernelHyperparams& init,
                                       int restarts);

struct GPPrediction {
  Vec mean;
  Mat cov;
};

/// Zero-mean GP conditioned on (X, z). Immutable after construction.
class GPPosterior {
 public:
  GPPosterior(Mat X, Vec z, KernelHyperparams theta);

  const Mat& inputs() const noexcept { return X_; }
  const Vec& targets() const noexcept { return z_; }
  const KernelHyperparams& theta() const noexcept { return theta_; }
  Eigen::Index size() const noexcept { return z_.size(); }
  /// Lower factor L with L L^T = K + sigma^2 I + jitter I.
  Mat chol() const;
  const Vec& alpha() const noexcept { return alpha_; }
  double jitter() const noexcept { return jitter_; }

  /// Latent posterior: mean K*^T alpha, cov K** - K*^T (K + sigma^2 I)^-1 K*.
  GPPrediction predict(const Mat& Xstar) const;
  Vec predict_mean(const Mat& Xstar) const;
  /// Diagonal of the latent posterior covariance.
  Vec predict_variance(const Mat& Xstar) const;

 private:
  Mat X_;
  Vec z_;
  KernelHyperparams theta_;
  Eigen::LLT<Mat> llt_;
  Vec alpha_;
  double jitter_ = 0.0;
};

GPPrediction gp_predict(const GPPosterior& post, const Mat& Xstar);

inline constexpr double kVarianceFloor = 1e-12;

/// sum_i log N(zstar_i; mean_i, var_i + sigma^2), variances floored at 1e-12.
double log_pointwise_predictive_density(const GPPosterior& post, const Mat& Xstar, const Vec& zstar);

}  // namespace wgpfr
