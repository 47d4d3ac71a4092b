#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "test_support.hpp"
#include "wgpfr/gp.hpp"

using namespace wgpfr;

namespace {

const KernelHyperparams theta1{0.012, 3.0, 0.01, 0.01, 0.02};

// Written out independently of the library kernel.
Mat oracle_gram(const KernelHyperparams& th, const Mat& A, const Mat& B, bool noise) {
  Mat K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      const double sq = (A.row(i) - B.row(j)).squaredNorm();
      K(i, j) = th.v0 * std::exp(-sq / (2 * th.w0)) + th.a0 + th.a1 * A.row(i).dot(B.row(j));
      if (noise && i == j) K(i, j) += th.sigma * th.sigma;
    }
  }
  return K;
}

double oracle_lml(const KernelHyperparams& th, const Mat& X, const Vec& z) {
  const Mat K = oracle_gram(th, X, X, true);
  const Eigen::FullPivLU<Mat> lu(K);
  const double n = static_cast<double>(z.size());
  return -0.5 * z.dot(lu.inverse() * z) - 0.5 * std::log(lu.determinant()) - 0.5 * n * std::log(2 * std::numbers::pi);
}

KernelHyperparams random_theta(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 1.0);
  return {std::exp(u(rng)), std::exp(u(rng)), std::exp(u(rng) - 1), std::exp(u(rng) - 1), std::exp(u(rng) - 0.5)};
}

Mat random_inputs(std::mt19937_64& rng, int n, int q) {
  Mat X(n, q);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < q; ++j) X(i, j) = u(rng);
  }
  return X;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("kernel examples") {
  const Vec zero = Vec::Zero(1), one = Vec::Ones(1);
  CHECK(kernel_eval(theta1, zero, zero, true) == doctest::Approx(0.0224).epsilon(1e-14));
  CHECK(kernel_eval(theta1, zero, one, false) == doctest::Approx(0.012 * std::exp(-1.0 / 6.0) + 0.01).epsilon(1e-14));
  CHECK(kernel_eval(theta1, zero, one, false) == doctest::Approx(0.0201578).epsilon(1e-6));
  const KernelHyperparams noise_only{0.0, 1.0, 0.0, 0.0, 1.0};
  const Vec x = Vec::Constant(2, 0.3), xp = Vec::Constant(2, 0.7);
  CHECK(kernel_eval(noise_only, x, x, true) == doctest::Approx(1.0));
  CHECK(kernel_eval(noise_only, x, xp, false) == 0.0);
  CHECK(kernel_eval(theta1, x, xp, false) == kernel_eval(theta1, xp, x, false));
}

TEST_CASE("gram matrices are symmetric and factor") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const KernelHyperparams th = random_theta(rng);
    const Mat X = random_inputs(rng, 7, 2);
    const Mat K = gram_matrix(th, X);
    CHECK((K - K.transpose()).norm() == 0.0);
    CHECK((K - oracle_gram(th, X, X, true)).norm() < 1e-12);
    CHECK(Eigen::LLT<Mat>(K).info() == Eigen::Success);
    CHECK((cross_kernel(th, X, X) - oracle_gram(th, X, X, false)).norm() < 1e-12);
  }
}

TEST_CASE("log marginal likelihood closed forms") {
  const Mat X = Mat::Constant(1, 1, 0.4);
  const double c = kernel_eval(theta1, X.row(0).transpose(), X.row(0).transpose(), true);
  const Vec z = Vec::Constant(1, 0.3);
  CHECK(log_marginal_likelihood(theta1, X, z) ==
        doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * c) - 0.09 / (2 * c)).epsilon(1e-12));

  std::mt19937_64 rng(4);
  const Mat X5 = random_inputs(rng, 5, 1);
  const Mat K = oracle_gram(theta1, X5, X5, true);
  CHECK(log_marginal_likelihood(theta1, X5, Vec::Zero(5)) ==
        doctest::Approx(-0.5 * std::log((2 * std::numbers::pi * K).determinant())).epsilon(1e-10));
}

TEST_CASE("likelihood and prediction match dense oracles on random problems") {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8;
    const int q = 1 + trial % 3;
    const KernelHyperparams th = random_theta(rng);
    const Mat X = random_inputs(rng, n, q);
    const Vec z = testing::gaussian_vector(rng, n, 0.5);
    CHECK(std::abs(log_marginal_likelihood(th, X, z) - oracle_lml(th, X, z)) < 1e-8);

    const Mat Xs = random_inputs(rng, 3, q);
    const GPPrediction pred = gp_predict(GPPosterior(X, z, th), Xs);
    const Mat Kinv = oracle_gram(th, X, X, true).inverse();
    const Mat Ks = oracle_gram(th, X, Xs, false);
    const Vec mean = Ks.transpose() * Kinv * z;
    const Mat cov = oracle_gram(th, Xs, Xs, false) - Ks.transpose() * Kinv * Ks;
    CHECK((pred.mean - mean).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK((pred.cov - cov).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + trial % 6;
    const KernelHyperparams th = random_theta(rng);
    const Mat X = random_inputs(rng, n, 1 + trial % 2);
    const Vec z = testing::gaussian_vector(rng, n, 0.7);
    const Likelihood lik = log_marginal_likelihood_with_gradient(th, X, z);
    CHECK(lik.value == doctest::Approx(log_marginal_likelihood(th, X, z)).epsilon(1e-12));
    const auto base = th.to_log();
    for (int k = 0; k < KernelHyperparams::kCount; ++k) {
      const double h = 1e-5;
      auto plus = base, minus = base;
      plus[static_cast<std::size_t>(k)] += h;
      minus[static_cast<std::size_t>(k)] -= h;
      const double fd = (log_marginal_likelihood(KernelHyperparams::from_log(plus), X, z) -
                         log_marginal_likelihood(KernelHyperparams::from_log(minus), X, z)) /
                        (2 * h);
      const double g = lik.grad_log[static_cast<std::size_t>(k)];
      // Relative check, with an absolute floor for nearly flat directions.
      CHECK((relative_error(g, fd) < 1e-4 || std::abs(g - fd) < 1e-7));
    }
  }
}

TEST_CASE("posterior special cases") {
  SUBCASE("empty training set is the prior") {
    const Mat Xs = Mat::Constant(2, 1, 0.5);
    const GPPosterior prior(Mat(0, 1), Vec(0), theta1);
    const GPPrediction p = prior.predict(Xs);
    CHECK(p.mean.norm() == 0.0);
    CHECK((p.cov - oracle_gram(theta1, Xs, Xs, false)).norm() < 1e-15);
  }
  SUBCASE("single noiseless observation is interpolated") {
    const KernelHyperparams th{0.7, 0.5, 0.1, 0.2, 0.0};
    const Mat X = Mat::Constant(1, 1, 0.3);
    const GPPosterior post(X, Vec::Constant(1, 1.25), th);
    const GPPrediction p = post.predict(X);
    CHECK(p.mean[0] == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(std::abs(p.cov(0, 0)) < 1e-10);
  }
  SUBCASE("tiny noise interpolates all training targets") {
    std::mt19937_64 rng(2);
    KernelHyperparams th{1.0, 0.05, 0.0, 0.0, 1e-8};
    const Mat X = random_inputs(rng, 6, 1);
    const Vec z = testing::gaussian_vector(rng, 6);
    const GPPosterior post(X, z, th);
    CHECK((post.predict_mean(X) - z).norm() < 1e-6);
  }
  SUBCASE("cached factors reconstruct the system") {
    std::mt19937_64 rng(5);
    const Mat X = random_inputs(rng, 8, 2);
    const Vec z = testing::gaussian_vector(rng, 8);
    const GPPosterior post(X, z, theta1);
    const Mat K = gram_matrix(theta1, X) + post.jitter() * Mat::Identity(8, 8);
    const Mat L = post.chol();
    CHECK((L * L.transpose() - K).norm() < 1e-8);
    CHECK((K * post.alpha() - z).norm() < 1e-8);
  }
  SUBCASE("duplicate inputs without noise need jitter") {
    const Mat X = Mat::Constant(3, 1, 0.2);
    const GPPosterior post(X, Vec::Zero(3), KernelHyperparams{1.0, 1.0, 0.0, 0.0, 0.0});
    CHECK(post.jitter() > 0.0);
  }
}

TEST_CASE("predictive variance never exceeds the prior") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const KernelHyperparams th = random_theta(rng);
    const Mat X = random_inputs(rng, 6, 1);
    const GPPosterior post(X, testing::gaussian_vector(rng, 6), th);
    const Mat Xs = random_inputs(rng, 10, 1);
    const GPPrediction p = post.predict(Xs);
    const Vec prior = oracle_gram(th, Xs, Xs, false).diagonal();
    CHECK(((p.cov.diagonal() - prior).array() <= 1e-8).all());
    CHECK((p.cov - p.cov.transpose()).norm() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(p.cov).eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("pointwise predictive density") {
  std::mt19937_64 rng(21);
  const Mat X = random_inputs(rng, 5, 1);
  const GPPosterior post(X, testing::gaussian_vector(rng, 5, 0.2), theta1);
  const Mat Xs = random_inputs(rng, 3, 1);
  const GPPrediction p = post.predict(Xs);
  const double s2 = theta1.sigma * theta1.sigma;

  double expected = 0.0;
  for (int i = 0; i < 3; ++i) expected += -0.5 * std::log(2 * std::numbers::pi * (p.cov(i, i) + s2));
  CHECK(log_pointwise_predictive_density(post, Xs, p.mean) == doctest::Approx(expected).epsilon(1e-12));

  const Mat x1 = Xs.topRows(1);
  const double var = p.cov(0, 0) + s2;
  const double z1 = p.mean[0] + 0.05;
  CHECK(log_pointwise_predictive_density(post, x1, Vec::Constant(1, z1)) ==
        doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * var) - 0.0025 / (2 * var)).epsilon(1e-12));

  double last = log_pointwise_predictive_density(post, x1, p.mean.head(1));
  for (double shift : {0.01, 0.05, 0.2, 1.0}) {
    const double v = log_pointwise_predictive_density(post, x1, Vec::Constant(1, p.mean[0] + shift));
    CHECK(v < last);
    last = v;
  }

  // Unit total variance: pure noise with sigma = 1 and no training data.
  const GPPosterior unit(Mat(0, 1), Vec(0), KernelHyperparams{0.0, 1.0, 0.0, 0.0, 1.0});
  CHECK(log_pointwise_predictive_density(unit, Xs, Vec::Zero(3)) ==
        doctest::Approx(-1.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("optimizer dominates its starting points") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat X = random_inputs(rng, 25, 1);
    const Vec z = testing::gaussian_vector(rng, 25, 0.3);
    const KernelHyperparams init = random_theta(rng);
    OptimizeConfig cfg;
    cfg.restarts = 3;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const OptimizeResult r = optimize_hyperparams(X, z, init, cfg);
    CHECK(r.log_likelihood >= log_marginal_likelihood(init.clamped(), X, z) - 1e-9);
    CHECK(r.log_likelihood == doctest::Approx(log_marginal_likelihood(r.theta, X, z)).epsilon(1e-12));
    // Same seed, same answer.
    CHECK(optimize_hyperparams(X, z, init, cfg).theta == r.theta);
  }
}

TEST_CASE("optimizer reaches at least the planted likelihood") {
  std::mt19937_64 rng(70);
  const KernelHyperparams truth{0.5, 0.02, 0.05, 0.05, 0.1};
  const Mat X = random_inputs(rng, 200, 1);
  const Mat L = oracle_gram(truth, X, X, true).llt().matrixL();
  const Vec z = L * testing::gaussian_vector(rng, 200);
  const OptimizeResult r = optimize_hyperparams(X, z, KernelHyperparams{}, OptimizeConfig{});
  CHECK(r.log_likelihood >= log_marginal_likelihood(truth, X, z) - 1e-6);
}

TEST_CASE("zero targets drive the signal terms to their floor") {
  std::mt19937_64 rng(71);
  const Mat X = random_inputs(rng, 12, 1);
  const KernelHyperparams r = optimize_hyperparams(X, Vec::Zero(12), KernelHyperparams{0.5, 1.0, 0.2, 0.2, 0.1}, 2);
  CHECK(r.v0 < 1e-4);
  CHECK(r.a0 < 1e-4);
  CHECK(r.a1 < 1e-4);
}

TEST_CASE("planted squared-exponential length scale is recovered") {
  const int seeds = 10;
  // A short planted length scale keeps the linear terms from absorbing the signal.
  const KernelHyperparams truth{1.0, 0.0025, 0.0, 0.0, 0.1};
  double total_error = 0.0;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(500 + s);
    const Mat X = random_inputs(rng, 500, 1);
    const Mat L = oracle_gram(truth, X, X, true).llt().matrixL();
    const Vec z = L * testing::gaussian_vector(rng, 500);
    OptimizeConfig cfg;
    cfg.restarts = 1;
    cfg.seed = static_cast<std::uint64_t>(s);
    const OptimizeResult r = optimize_hyperparams(X, z, KernelHyperparams{1.0, 0.02, 0.01, 0.01, 0.3}, cfg);
    const double err = std::abs(r.theta.w0 - truth.w0) / truth.w0;
    CHECK(err < 0.5);
    total_error += err;
  }
  CHECK(total_error / seeds < 0.25);
}

TEST_CASE("parameter transport") {
  const KernelHyperparams th{0.3, 2.0, 0.01, 0.02, 0.05};
  const KernelHyperparams back = KernelHyperparams::from_log(th.to_log());
  CHECK(back.v0 == doctest::Approx(th.v0));
  CHECK(back.w0 == doctest::Approx(th.w0));
  CHECK(back.sigma == doctest::Approx(th.sigma));
  CHECK_THROWS_AS((KernelHyperparams{1.0, 0.0, 0.0, 0.0, 0.1}).validate(), Error);
  CHECK_THROWS_AS((KernelHyperparams{-1.0, 1.0, 0.0, 0.0, 0.1}).validate(), Error);
  CHECK_THROWS_AS(optimize_hyperparams(Mat::Zero(1, 1), Vec::Zero(1), th, 1), Error);
}
