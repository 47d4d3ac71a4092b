#include "wgpfr/gp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>

namespace wgpfr {

using Array = KernelHyperparams::Array;

const Array& KernelHyperparams::lower_bounds() {
  static const Array lo{std::log(1e-8), std::log(1e-4), std::log(1e-8), std::log(1e-8),
                        std::log(1e-5)};
  return lo;
}

const Array& KernelHyperparams::upper_bounds() {
  static const Array hi{std::log(1e3), std::log(1e4), std::log(1e3), std::log(1e3), std::log(1e2)};
  return hi;
}

Array KernelHyperparams::to_log() const {
  // Zero parameters sit at the box floor rather than at -inf.
  const Array& lo = lower_bounds();
  const Array raw{v0, w0, a0, a1, sigma};
  Array out{};
  for (int k = 0; k < kCount; ++k) out[k] = raw[k] > 0.0 ? std::max(std::log(raw[k]), lo[k]) : lo[k];
  return out;
}

KernelHyperparams KernelHyperparams::from_log(const Array& l) {
  return {std::exp(l[0]), std::exp(l[1]), std::exp(l[2]), std::exp(l[3]), std::exp(l[4])};
}

KernelHyperparams KernelHyperparams::clamped() const {
  Array l = to_log();
  for (int k = 0; k < kCount; ++k) l[k] = std::clamp(l[k], lower_bounds()[k], upper_bounds()[k]);
  return from_log(l);
}

void KernelHyperparams::validate() const {
  const bool finite = std::isfinite(v0) && std::isfinite(w0) && std::isfinite(a0) &&
                      std::isfinite(a1) && std::isfinite(sigma);
  if (!finite || v0 < 0.0 || a0 < 0.0 || a1 < 0.0 || sigma < 0.0 || !(w0 > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "kernel hyperparameters out of range");
  }
}

double kernel_eval(const KernelHyperparams& theta, const Vec& x, const Vec& xp, bool same_index) {
  if (x.size() != xp.size()) throw Error(ErrorCode::DimensionMismatch, "kernel input lengths differ");
  double k = theta.v0 * std::exp(-(x - xp).squaredNorm() / (2.0 * theta.w0)) + theta.a0 +
             theta.a1 * x.dot(xp);
  if (same_index) k += theta.sigma * theta.sigma;
  return k;
}

namespace {

Mat squared_distances(const Mat& A, const Mat& B) {
  Mat D(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) D(i, j) = (A.row(i) - B.row(j)).squaredNorm();
  }
  return D;
}

Mat kernel_from_parts(const KernelHyperparams& th, const Mat& D, const Mat& inner) {
  return (th.v0 * (-D.array() / (2.0 * th.w0)).exp() + th.a0 + th.a1 * inner.array()).matrix();
}

struct Factor {
  Eigen::LLT<Mat> llt;
  double jitter = 0.0;
};

Factor factorize(const Mat& K) {
  const Eigen::Index n = K.rows();
  for (double jitter : kJitterLadder) {
    Factor f;
    f.llt.compute(K + jitter * Mat::Identity(n, n));
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      f.jitter = jitter;
      return f;
    }
  }
  throw Error(ErrorCode::NotPositiveDefinite, "Gram matrix not positive definite after jitter");
}

void check_training(const Mat& X, const Vec& z) {
  if (X.rows() != z.size()) throw Error(ErrorCode::DimensionMismatch, "inputs and targets differ");
}

}  // namespace

Mat gram_matrix(const KernelHyperparams& theta, const Mat& X, bool with_noise) {
  Mat K = kernel_from_parts(theta, squared_distances(X, X), X * X.transpose());
  if (with_noise) K.diagonal().array() += theta.sigma * theta.sigma;
  return K;
}

Mat cross_kernel(const KernelHyperparams& theta, const Mat& X, const Mat& Xstar) {
  if (X.cols() != Xstar.cols()) throw Error(ErrorCode::DimensionMismatch, "input dimension differs");
  return kernel_from_parts(theta, squared_distances(X, Xstar), X * Xstar.transpose());
}

Mat column_inputs(std::span<const double> values) {
  Mat X(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) X(static_cast<Eigen::Index>(i), 0) = values[i];
  return X;
}

double log_marginal_likelihood(const KernelHyperparams& theta, const Mat& X, const Vec& z) {
  check_training(X, z);
  if (z.size() == 0) return 0.0;
  const Factor f = factorize(gram_matrix(theta, X));
  const Vec w = f.llt.matrixL().solve(z);
  const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(z.size());
  return -0.5 * w.squaredNorm() - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

Likelihood log_marginal_likelihood_with_gradient(const KernelHyperparams& th, const Mat& X,
                                                 const Vec& z) {
  check_training(X, z);
  Likelihood out;
  if (z.size() == 0) return out;
  const Eigen::Index n = z.size();
  const Mat D = squared_distances(X, X);
  const Mat inner = X * X.transpose();
  const Mat E = (-D.array() / (2.0 * th.w0)).exp().matrix();
  Mat K = th.v0 * E + (th.a0 + th.a1 * inner.array()).matrix();
  K.diagonal().array() += th.sigma * th.sigma;

  const Factor f = factorize(K);
  const Vec alpha = f.llt.solve(z);
  const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * z.dot(alpha) - 0.5 * logdet -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // d lml / d log(theta_k) = 1/2 tr(W dK_k), W = alpha alpha^T - K^-1.
  const Mat W = alpha * alpha.transpose() - f.llt.solve(Mat::Identity(n, n));
  out.grad_log[0] = 0.5 * th.v0 * (W.array() * E.array()).sum();
  out.grad_log[1] = 0.5 * th.v0 * (W.array() * E.array() * D.array()).sum() / (2.0 * th.w0);
  out.grad_log[2] = 0.5 * th.a0 * W.sum();
  out.grad_log[3] = 0.5 * th.a1 * (W.array() * inner.array()).sum();
  out.grad_log[4] = th.sigma * th.sigma * W.trace();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;

Vec5 to_vec(const Array& a) { return Eigen::Map<const Vec5>(a.data()); }
Array to_array(const Vec5& v) {
  Array a{};
  for (int k = 0; k < 5; ++k) a[k] = v[k];
  return a;
}

Vec5 project_box(Vec5 x) {
  for (int k = 0; k < 5; ++k) {
    x[k] = std::clamp(x[k], KernelHyperparams::lower_bounds()[k], KernelHyperparams::upper_bounds()[k]);
  }
  return x;
}

// Gradient components that point out of the box at an active bound are
// zeroed (for minimization of f = -lml).
Vec5 projected_gradient(const Vec5& x, const Vec5& g) {
  Vec5 pg = g;
  for (int k = 0; k < 5; ++k) {
    const bool at_lo = x[k] <= KernelHyperparams::lower_bounds()[k] + 1e-12;
    const bool at_hi = x[k] >= KernelHyperparams::upper_bounds()[k] - 1e-12;
    if ((at_lo && g[k] > 0.0) || (at_hi && g[k] < 0.0)) pg[k] = 0.0;
  }
  return pg;
}

struct Eval {
  bool ok = false;
  double f = std::numeric_limits<double>::infinity();
  Vec5 g = Vec5::Zero();
};

Eval evaluate(const Mat& X, const Vec& z, const Vec5& x) {
  Eval e;
  try {
    const Likelihood l = log_marginal_likelihood_with_gradient(KernelHyperparams::from_log(to_array(x)), X, z);
    if (!std::isfinite(l.value)) return e;
    e.ok = true;
    e.f = -l.value;
    e.g = -to_vec(l.grad_log);
    if (!e.g.allFinite()) e.ok = false;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::NotPositiveDefinite) throw;
  }
  return e;
}

struct LocalResult {
  Vec5 x;
  double f;
  int iterations;
};

LocalResult minimize_lbfgs(const Mat& X, const Vec& z, Vec5 x, Eval cur, const OptimizeConfig& cfg) {
  constexpr std::size_t kHistory = 8;
  std::deque<std::pair<Vec5, Vec5>> hist;
  int it = 0;
  for (; it < cfg.max_iter; ++it) {
    Vec5 pg = projected_gradient(x, cur.g);
    if (pg.lpNorm<Eigen::Infinity>() < cfg.grad_tol) break;

    // Two-loop recursion on the free variables.
    Vec5 q = pg;
    std::vector<double> a(hist.size());
    for (std::size_t h = hist.size(); h-- > 0;) {
      const auto& [s, y] = hist[h];
      a[h] = s.dot(q) / y.dot(s);
      q -= a[h] * y;
    }
    if (!hist.empty()) {
      const auto& [s, y] = hist.back();
      q *= s.dot(y) / y.squaredNorm();
    } else {
      q /= std::max(1.0, pg.norm());
    }
    for (std::size_t h = 0; h < hist.size(); ++h) {
      const auto& [s, y] = hist[h];
      q += (a[h] - y.dot(q) / y.dot(s)) * s;
    }
    Vec5 dir = -q;
    for (int k = 0; k < 5; ++k) {
      if (pg[k] == 0.0) dir[k] = 0.0;
    }
    if (!(dir.dot(pg) < 0.0)) {
      hist.clear();
      dir = -pg / std::max(1.0, pg.norm());
    }

    double step = 1.0;
    bool accepted = false;
    Vec5 xn;
    Eval next;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      xn = project_box(x + step * dir);
      next = evaluate(X, z, xn);
      if (next.ok && next.f <= cur.f + 1e-4 * cur.g.dot(xn - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const Vec5 s = xn - x;
    const Vec5 y = next.g - cur.g;
    const double df = cur.f - next.f;
    x = xn;
    const double f_prev = cur.f;
    cur = next;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      hist.emplace_back(s, y);
      if (hist.size() > kHistory) hist.pop_front();
    }
    if (df <= 1e-12 * std::max(1.0, std::abs(f_prev))) break;
  }
  return {x, cur.f, it};
}

}  // namespace

OptimizeResult optimize_hyperparams(const Mat& X, const Vec& z, const KernelHyperparams& init,
                                    const OptimizeConfig& cfg) {
  check_training(X, z);
  init.validate();
  if (z.size() < 2) throw Error(ErrorCode::EmptyInput, "hyperparameter fitting needs n >= 2");
  if (cfg.restarts < 1 || cfg.max_iter < 1) {
    throw Error(ErrorCode::ConfigInvalid, "restarts and max_iter must be >= 1");
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  OptimizeResult best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (int r = 0; r < cfg.restarts; ++r) {
    Vec5 x0;
    if (r == 0) {
      x0 = project_box(to_vec(init.to_log()));
    } else {
      for (int k = 0; k < 5; ++k) x0[k] = normal(rng);
      x0 = project_box(x0);
    }
    const Eval e0 = evaluate(X, z, x0);
    if (!e0.ok) {
      ++best.failed_starts;
      continue;
    }
    const LocalResult local = minimize_lbfgs(X, z, x0, e0, cfg);
    best.iterations += local.iterations;
    // Strict improvement keeps ties on the earliest start for determinism.
    if (!any || -local.f > best.log_likelihood) {
      best.theta = KernelHyperparams::from_log(to_array(local.x));
      best.log_likelihood = -local.f;
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::AllRestartsFailed, "every optimizer start failed to factor");
  return best;
}

KernelHyperparams optimize_hyperparams(const Mat& X, const Vec& z, const KernelHyperparams& init,
                                       int restarts) {
  OptimizeConfig cfg;
  cfg.restarts = restarts;
  return optimize_hyperparams(X, z, init, cfg).theta;
}

// ---------------------------------------------------------------------------

GPPosterior::GPPosterior(Mat X, Vec z, KernelHyperparams theta)
    : X_(std::move(X)), z_(std::move(z)), theta_(theta) {
  check_training(X_, z_);
  theta_.validate();
  if (z_.size() == 0) {
    alpha_ = Vec(0);
    return;
  }
  Factor f = factorize(gram_matrix(theta_, X_));
  llt_ = std::move(f.llt);
  jitter_ = f.jitter;
  alpha_ = llt_.solve(z_);
}

Mat GPPosterior::chol() const {
  if (z_.size() == 0) return Mat(0, 0);
  return llt_.matrixL();
}

GPPrediction GPPosterior::predict(const Mat& Xstar) const {
  GPPrediction out;
  Mat Kss = gram_matrix(theta_, Xstar, false);
  if (z_.size() == 0) {
    out.mean = Vec::Zero(Xstar.rows());
    out.cov = std::move(Kss);
    return out;
  }
  const Mat Ks = cross_kernel(theta_, X_, Xstar);
  out.mean = Ks.transpose() * alpha_;
  const Mat v = llt_.matrixL().solve(Ks);
  out.cov = Kss - v.transpose() * v;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

Vec GPPosterior::predict_mean(const Mat& Xstar) const {
  if (z_.size() == 0) return Vec::Zero(Xstar.rows());
  return cross_kernel(theta_, X_, Xstar).transpose() * alpha_;
}

Vec GPPosterior::predict_variance(const Mat& Xstar) const {
  Vec var(Xstar.rows());
  for (Eigen::Index r = 0; r < Xstar.rows(); ++r) {
    const Vec x = Xstar.row(r).transpose();
    var[r] = kernel_eval(theta_, x, x, false);
  }
  if (z_.size() == 0) return var;
  const Mat v = llt_.matrixL().solve(cross_kernel(theta_, X_, Xstar));
  var -= v.colwise().squaredNorm().transpose();
  return var;
}

GPPrediction gp_predict(const GPPosterior& post, const Mat& Xstar) { return post.predict(Xstar); }

double log_pointwise_predictive_density(const GPPosterior& post, const Mat& Xstar, const Vec& zstar) {
  if (Xstar.rows() != zstar.size()) throw Error(ErrorCode::DimensionMismatch, "test inputs and targets");
  const Vec mean = post.predict_mean(Xstar);
  const Vec var = post.predict_variance(Xstar);
  const double noise = post.theta().sigma * post.theta().sigma;
  double total = 0.0;
  for (Eigen::Index i = 0; i < zstar.size(); ++i) {
    const double s2 = std::max(var[i] + noise, kVarianceFloor);
    const double r = zstar[i] - mean[i];
    total += -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * r * r / s2;
  }
  return total;
}

}  // namespace wgpfr
