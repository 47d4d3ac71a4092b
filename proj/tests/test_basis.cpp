#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <numbers>

#include "test_support.hpp"
#include "wgpfr/basis_regression.hpp"

using namespace wgpfr;

namespace {

constexpr double pi = std::numbers::pi;
const Manifold s2 = Manifold::sphere(3);

std::vector<double> uniform_grid(int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
  return t;
}

// A mean curve that bends enough for the projected frames to span.
std::vector<Vec> wavy_mean(const std::vector<double>& times) {
  std::vector<Vec> mu;
  for (double t : times) {
    const double lon = 2.0 * t, colat = 0.6 + 0.4 * std::sin(3.0 * t);
    mu.push_back(Vec{{std::sin(colat) * std::cos(lon), std::sin(colat) * std::sin(lon), std::cos(colat)}});
  }
  return mu;
}

// Design rows follow the (d, i, m) stacking of vec(V) and columns the
// column-major vec(B).
Mat kron_design(const Mat& Phi, const Mat& U, const Mask* mask, int n) {
  const Eigen::Index M = U.rows(), p = U.cols(), K = Phi.cols();
  std::vector<std::array<Eigen::Index, 2>> rows;  // (Phi row, curve)
  for (Eigen::Index r = 0; r < Phi.rows(); ++r) {
    for (Eigen::Index m = 0; m < M; ++m) {
      if (mask && !(*mask)[static_cast<std::size_t>(m)][static_cast<std::size_t>(r % n)]) continue;
      rows.push_back({r, m});
    }
  }
  Mat A(static_cast<Eigen::Index>(rows.size()), p * K);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index j = 0; j < p; ++j) A(static_cast<Eigen::Index>(a), j + p * k) = Phi(rows[a][0], k) * U(rows[a][1], j);
    }
  }
  return A;
}

Vec stack(const Residuals& V, const Mask* mask) {
  const Eigen::Index n = V.front().rows(), d = V.front().cols();
  std::vector<double> out;
  for (Eigen::Index e = 0; e < d; ++e) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t m = 0; m < V.size(); ++m) {
        if (mask && !(*mask)[m][static_cast<std::size_t>(i)]) continue;
        out.push_back(V[m](i, e));
      }
    }
  }
  return Eigen::Map<Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Mat random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<Mat>(testing::gaussian_vector(rng, r * c).data(), r, c);
}

Vec vec(const Mat& B) { return Eigen::Map<const Vec>(B.data(), B.size()); }

struct Problem {
  TangentBasis basis;
  Mat U;
  Mat B;
  Residuals V;
};

// Residuals generated exactly from planted coefficients, plus optional noise.
Problem planted(std::mt19937_64& rng, int M, int n, int ks, int p, double noise) {
  const auto t = uniform_grid(n);
  TangentBasis basis(s2, t, wavy_mean(t), BasisSystem{ks});
  const Mat U = random_matrix(rng, M, p);
  const Mat B = random_matrix(rng, p, basis.columns());
  Residuals V(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    V[static_cast<std::size_t>(m)].resize(n, 3);
    const Vec coeffs = B.transpose() * U.row(m).transpose();
    for (int i = 0; i < n; ++i) {
      V[static_cast<std::size_t>(m)].row(i) = (basis.field(i, coeffs) + testing::gaussian_vector(rng, 3, noise)).transpose();
    }
  }
  return {basis, U, B, V};
}

}  // namespace

TEST_CASE("scalar Fourier family") {
  CHECK(BasisSystem::value(0, 0.37) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  for (double t : {0.0, 0.13, 0.5, 0.91}) {
    for (int j = 1; j < 8; ++j) {
      const double expected = j % 2 == 1 ? std::sin(2 * pi * j * t) : std::cos(2 * pi * j * t);
      CHECK(BasisSystem::value(j, t) == doctest::Approx(expected).epsilon(1e-14));
    }
  }
  CHECK(BasisSystem{4}.values(0.2).size() == 4);
}

TEST_CASE("log residual examples") {
  const Vec p{{0.0, 0.0, 1.0}};
  const Residuals single = log_residuals(s2, {p}, PointGrid{{Vec{{1.0, 0.0, 0.0}}}});
  CHECK((single[0].row(0).transpose() - Vec{{pi / 2, 0.0, 0.0}}).norm() < 1e-12);

  std::mt19937_64 rng(3);
  const auto t = uniform_grid(6);
  const auto mu = wavy_mean(t);
  PointGrid same(3, mu);
  for (const Mat& r : log_residuals(s2, mu, same)) CHECK(r.norm() == 0.0);

  PointGrid curves(4);
  for (auto& c : curves) {
    for (const Vec& m : mu) c.push_back(s2.exp_map(m, testing::random_tangent(s2, m, rng, 0.5)));
  }
  Mask mask = full_mask(4, 6);
  mask[2][1] = 0;
  const Residuals V = log_residuals(s2, mu, curves, &mask);
  for (std::size_t m = 0; m < 4; ++m) {
    for (std::size_t i = 0; i < 6; ++i) {
      const double n = V[m].row(static_cast<Eigen::Index>(i)).norm();
      CHECK(n == doctest::Approx(mask[m][i] ? s2.dist(mu[i], curves[m][i]) : 0.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("tangent basis construction") {
  const auto t = uniform_grid(2);
  const auto mu = wavy_mean(t);
  const Mat Phi = build_tangent_basis(s2, mu, t, BasisSystem{2});
  CHECK(Phi.rows() == 6);
  CHECK(Phi.cols() == 6);

  const auto t8 = uniform_grid(8);
  const auto mu8 = wavy_mean(t8);
  const Mat constant = build_tangent_basis(s2, mu8, t8, BasisSystem{1});
  for (int i = 0; i < 8; ++i) {
    for (int e = 0; e < 3; ++e) {
      const Vec frame = s2.tangent_project(mu8[static_cast<std::size_t>(i)], Vec::Unit(3, e)) / std::sqrt(2.0);
      for (int c = 0; c < 3; ++c) CHECK(constant(c * 8 + i, e) == doctest::Approx(frame[c]).epsilon(1e-12));
    }
  }

  const Mat Phi5 = build_tangent_basis(s2, mu8, t8, BasisSystem{5});
  for (Eigen::Index col = 0; col < Phi5.cols(); ++col) {
    for (int i = 0; i < 8; ++i) {
      const Vec slice{{Phi5(i, col), Phi5(8 + i, col), Phi5(16 + i, col)}};
      CHECK(std::abs(mu8[static_cast<std::size_t>(i)].dot(slice)) < 1e-10);
    }
  }
  TangentBasis tb(s2, t8, mu8, BasisSystem{5});
  CHECK((tb.dense() - Phi5).norm() == 0.0);
}

TEST_CASE("Kronecker solve") {
  std::mt19937_64 rng(10);
  SUBCASE("zero residuals give zero coefficients") {
    Problem pr = planted(rng, 6, 10, 3, 2, 0.0);
    for (Mat& r : pr.V) r.setZero();
    const FitBResult r = fit_B(pr.V, pr.U, pr.basis.dense());
    CHECK(r.B.norm() == 0.0);
    CHECK_FALSE(r.rank_deficient);
  }
  SUBCASE("planted coefficients are recovered") {
    for (int trial = 0; trial < 5; ++trial) {
      const Problem pr = planted(rng, 8, 20, 5, 3, 0.0);
      const FitBResult r = fit_B(pr.V, pr.U, pr.basis.dense());
      CHECK((r.B - pr.B).lpNorm<Eigen::Infinity>() < 1e-8);
    }
  }
  SUBCASE("matches a dense least-squares oracle") {
    for (int trial = 0; trial < 5; ++trial) {
      const Problem pr = planted(rng, 5 + trial, 9, 3, 2, 0.3);
      const Mat Phi = pr.basis.dense();
      const Mat A = kron_design(Phi, pr.U, nullptr, 9);
      const Vec y = stack(pr.V, nullptr);
      const Vec oracle = A.completeOrthogonalDecomposition().solve(y);
      const FitBResult r = fit_B(pr.V, pr.U, Phi);
      CHECK((vec(r.B) - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
      // Residual orthogonal to the column space.
      CHECK((A.transpose() * (y - A * vec(r.B))).lpNorm<Eigen::Infinity>() < 1e-8);
    }
  }
  SUBCASE("a repeated covariate is flagged and ridged") {
    Problem pr = planted(rng, 6, 10, 3, 2, 0.1);
    pr.U.col(1) = pr.U.col(0);
    const FitBResult r = fit_B(pr.V, pr.U, pr.basis.dense());
    CHECK(r.rank_deficient);
    CHECK(r.B.allFinite());
    // The ridge splits the shared effect evenly between the twin covariates.
    CHECK((r.B.row(0) - r.B.row(1)).norm() < 1e-6 * r.B.norm());
  }
  SUBCASE("shape errors") {
    const Problem pr = planted(rng, 4, 6, 2, 2, 0.0);
    CHECK_THROWS_AS(fit_B(pr.V, pr.U.topRows(3), pr.basis.dense()), Error);
    CHECK_THROWS_AS(fit_B(pr.V, pr.U, pr.basis.dense().topRows(10)), Error);
  }
}

TEST_CASE("solver routes agree") {
  std::mt19937_64 rng(12);
  const Problem pr = planted(rng, 7, 12, 4, 3, 0.2);
  const Mask full = full_mask(7, 12);
  const FitBResult kron = BSolver(full, pr.U, pr.basis, LstsqRoute::Kronecker).solve(pr.V);
  const FitBResult dense = BSolver(full, pr.U, pr.basis, LstsqRoute::Dense).solve(pr.V);
  const FitBResult cg = BSolver(full, pr.U, pr.basis, LstsqRoute::ConjugateGradient).solve(pr.V);
  CHECK((kron.B - dense.B).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK((kron.B - cg.B).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(BSolver(full, pr.U, pr.basis).route() == LstsqRoute::Kronecker);

  Mask partial = full;
  for (int m = 0; m < 7; ++m) partial[static_cast<std::size_t>(m)][static_cast<std::size_t>((3 * m) % 12)] = 0;
  partial[0][11] = 0;
  CHECK_THROWS_AS(BSolver(partial, pr.U, pr.basis, LstsqRoute::Kronecker), Error);
  CHECK(BSolver(partial, pr.U, pr.basis).route() == LstsqRoute::Dense);

  const Mat A = kron_design(pr.basis.dense(), pr.U, &partial, 12);
  const Vec oracle = A.completeOrthogonalDecomposition().solve(stack(pr.V, &partial));
  const FitBResult md = fit_B_masked(pr.V, partial, pr.U, pr.basis, LstsqRoute::Dense);
  const FitBResult mc = fit_B_masked(pr.V, partial, pr.U, pr.basis, LstsqRoute::ConjugateGradient);
  CHECK((vec(md.B) - oracle).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK((vec(mc.B) - oracle).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(mc.cg_iterations > 0);

  // Unobserved entries carry no information, whatever they hold.
  Residuals scrambled = pr.V;
  scrambled[0].row(11).setConstant(50.0);
  CHECK((fit_B_masked(scrambled, partial, pr.U, pr.basis).B - md.B).norm() < 1e-10);
}

TEST_CASE("shape problems carry the ridge on every route") {
  std::mt19937_64 rng(14);
  const Manifold k4 = Manifold::kendall(4);
  const auto t = uniform_grid(10);
  std::vector<Vec> mu;
  Vec base = testing::random_point(k4, rng);
  const Vec dir = testing::random_tangent(k4, base, rng).normalized();
  for (double ti : t) mu.push_back(k4.exp_map(base, 0.5 * ti * dir));
  const TangentBasis basis(k4, t, mu, BasisSystem{3});
  const Mat U = random_matrix(rng, 6, 2);
  Residuals V(6, Mat::Zero(10, 8));
  for (int m = 0; m < 6; ++m) {
    for (int i = 0; i < 10; ++i) {
      V[static_cast<std::size_t>(m)].row(i) = testing::random_tangent(k4, mu[static_cast<std::size_t>(i)], rng, 0.1).transpose();
    }
  }
  Mask mask = full_mask(6, 10);
  mask[3][4] = 0;
  const FitBResult dense = fit_B_masked(V, mask, U, basis, LstsqRoute::Dense);
  const FitBResult cg = fit_B_masked(V, mask, U, basis, LstsqRoute::ConjugateGradient);
  CHECK(dense.rank_deficient);
  CHECK(cg.rank_deficient);
  // Compare fitted fields; coefficients along unidentified directions are
  // only pinned down by the ridge.
  for (int m = 0; m < 6; ++m) {
    const Vec cd = dense.B.transpose() * U.row(m).transpose();
    const Vec cc = cg.B.transpose() * U.row(m).transpose();
    for (int i = 0; i < 10; ++i) CHECK((basis.field(i, cd) - basis.field(i, cc)).norm() < 1e-6);
  }
}

TEST_CASE("fitted slopes are tangent and locally optimal") {
  std::mt19937_64 rng(16);
  const Problem pr = planted(rng, 8, 15, 4, 2, 0.3);
  const Mask full = full_mask(8, 15);
  const Mat B = fit_B_masked(pr.V, full, pr.U, pr.basis).B;
  const MeanStructure ms(pr.basis, B);
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 15; ++i) CHECK(std::abs(ms.mu0()[static_cast<std::size_t>(i)].dot(ms.beta(j, i))) < 1e-9);
  }
  const double best = basis_loss(pr.V, full, pr.U, pr.basis, B);
  for (Eigen::Index r = 0; r < B.rows(); ++r) {
    for (Eigen::Index c = 0; c < B.cols(); ++c) {
      for (double h : {1e-4, -1e-4}) {
        Mat Bp = B;
        Bp(r, c) += h;
        CHECK(basis_loss(pr.V, full, pr.U, pr.basis, Bp) >= best);
      }
    }
  }
  // The loss agrees with the stacked residual of the oracle design.
  const Mat A = kron_design(pr.basis.dense(), pr.U, nullptr, 15);
  CHECK(best == doctest::Approx((stack(pr.V, nullptr) - A * vec(B)).squaredNorm()).epsilon(1e-10));
}

TEST_CASE("mean predictions") {
  std::mt19937_64 rng(18);
  const Problem pr = planted(rng, 6, 10, 3, 2, 0.0);
  const MeanStructure ms(pr.basis, pr.B);
  for (int i = 0; i < 10; ++i) {
    CHECK((ms.predict_mean(Vec::Zero(2), i) - ms.mu0()[static_cast<std::size_t>(i)]).norm() == 0.0);
  }
  const MeanStructure flat(pr.basis, Mat::Zero(2, pr.basis.columns()));
  CHECK((flat.predict_mean(Vec{{3.0, -1.0}}, 4) - flat.mu0()[4]).norm() == 0.0);
  CHECK_THROWS_AS(MeanStructure(pr.basis, Mat::Zero(2, 5)), Error);
  CHECK_THROWS_AS(ms.slope(Vec::Zero(3), 0), Error);

  // Generate curves from a single planted coefficient, small enough that Log
  // inverts Exp, refit on their residuals and reproduce the generating points.
  Mat single = Mat::Zero(2, pr.basis.columns());
  single(1, 4) = 0.3;
  const MeanStructure gen(pr.basis, single);
  PointGrid curves(6);
  for (int m = 0; m < 6; ++m) {
    for (int i = 0; i < 10; ++i) {
      curves[static_cast<std::size_t>(m)].push_back(gen.predict_mean(pr.U.row(m).transpose(), i));
    }
  }
  const Residuals V = log_residuals(s2, gen.mu0(), curves);
  const MeanStructure refit(pr.basis, fit_B(V, pr.U, pr.basis.dense()).B);
  for (int m = 0; m < 6; ++m) {
    for (int i = 0; i < 10; ++i) {
      CHECK((refit.predict_mean(pr.U.row(m).transpose(), i) - curves[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]).norm() < 1e-8);
    }
  }
}

TEST_CASE("off-grid evaluation") {
  const auto t = uniform_grid(5);
  const auto mu = wavy_mean(t);
  const TangentBasis tb(s2, t, mu, BasisSystem{3});
  for (int i = 0; i < 5; ++i) CHECK((tb.mean_at(t[static_cast<std::size_t>(i)]) - mu[static_cast<std::size_t>(i)]).norm() < 1e-12);
  const Vec mid = s2.exp_map(mu[1], 0.5 * s2.log_map(mu[1], mu[2]));
  CHECK((tb.mean_at(0.5 * (t[1] + t[2])) - mid).norm() < 1e-12);
  CHECK((tb.mean_at(-0.5) - mu.front()).norm() == 0.0);
  CHECK((tb.mean_at(2.0) - mu.back()).norm() == 0.0);

  std::mt19937_64 rng(2);
  const Vec coeffs = testing::gaussian_vector(rng, tb.columns());
  CHECK((tb.field_at(t[3], coeffs) - tb.field(3, coeffs)).norm() < 1e-12);
  const double off = 0.3;
  CHECK(std::abs(tb.mean_at(off).dot(tb.field_at(off, coeffs))) < 1e-12);
}
