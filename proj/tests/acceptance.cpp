// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "test_support.hpp"
#include "wgpfr/experiment.hpp"
#include "wgpfr/flight.hpp"
#include "wgpfr/frechet.hpp"
#include "wgpfr/gp.hpp"
#include "wgpfr/io.hpp"
#include "wgpfr/metrics.hpp"

using namespace wgpfr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double pi = std::numbers::pi;
constexpr std::uint64_t kRoot = 20240601;
// Flight seeds are kFlightSeed + r; the bundled sample is the first one.
constexpr std::uint64_t kFlightSeed = 1000;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

void geometry_suite() {
  const auto t0 = Clock::now();
  int bad = 0, tested = 0;
  std::mt19937_64 rng(1);
  for (const Manifold& m : {Manifold::sphere(3), Manifold::sphere(6), Manifold::kendall(5), Manifold::kendall(80)}) {
    int done = 0;
    while (done < 1000) {
      const Vec p = testing::random_point(m, rng);
      const Vec q = testing::random_point(m, rng);
      // Log is undefined at the cut locus; stay clear of it.
      if (m.dist(p, q) >= m.diameter() - 0.1) continue;
      ++done;
      ++tested;
      const Vec l = m.log_map(p, q);
      double tangency = m.is_sphere() ? std::abs(p.dot(l)) : (m.tangent_project(p, l) - l).norm();
      if (!m.is_sphere()) tangency = std::max(tangency, std::abs(testing::centroid(l)));
      const bool ok = tangency < 1e-10 && std::abs(l.norm() - m.dist(p, q)) < 1e-10 &&
                      m.dist(m.exp_map(p, l), q) < 1e-9 && m.is_point(m.exp_map(p, l), 1e-10);
      if (!ok) ++bad;
    }
  }
  const double secs = seconds_since(t0);
  report(1, bad == 0 && secs < 5.0,
         std::to_string(tested) + " roundtrips, " + std::to_string(bad) + " violations, " + fmt("%.2f s", secs));
}

// ---------------------------------------------------------------------------

Mat oracle_gram(const KernelHyperparams& th, const Mat& A, const Mat& B, bool noise) {
  Mat K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      K(i, j) = th.v0 * std::exp(-(A.row(i) - B.row(j)).squaredNorm() / (2 * th.w0)) + th.a0 +
                th.a1 * A.row(i).dot(B.row(j));
      if (noise && i == j) K(i, j) += th.sigma * th.sigma;
    }
  }
  return K;
}

double oracle_lml(const KernelHyperparams& th, const Mat& X, const Vec& z) {
  const Eigen::FullPivLU<Mat> lu(oracle_gram(th, X, X, true));
  return -0.5 * z.dot(lu.solve(z)) - 0.5 * std::log(lu.determinant()) - 0.5 * z.size() * std::log(2 * pi);
}

void gp_oracles() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0), lu(-2.0, 1.0);
  double worst_value = 0.0, worst_grad = 0.0;
  int grad_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8, q = 1 + trial % 3;
    const KernelHyperparams th{std::exp(lu(rng)), std::exp(lu(rng)), std::exp(lu(rng) - 1), std::exp(lu(rng) - 1),
                               std::exp(lu(rng) - 0.5)};
    Mat X(n, q), Xs(3, q);
    for (Mat* M : {&X, &Xs}) {
      for (Eigen::Index i = 0; i < M->size(); ++i) M->data()[i] = u(rng);
    }
    const Vec z = testing::gaussian_vector(rng, n, 0.5);

    worst_value = std::max(worst_value, std::abs(log_marginal_likelihood(th, X, z) - oracle_lml(th, X, z)));
    const GPPrediction pred = gp_predict(GPPosterior(X, z, th), Xs);
    const Mat Kinv = oracle_gram(th, X, X, true).inverse();
    const Mat Ks = oracle_gram(th, X, Xs, false);
    worst_value = std::max(worst_value, (pred.mean - Ks.transpose() * Kinv * z).cwiseAbs().maxCoeff());
    const Mat cov = oracle_gram(th, Xs, Xs, false) - Ks.transpose() * Kinv * Ks;
    worst_value = std::max(worst_value, (pred.cov - cov).cwiseAbs().maxCoeff());

    const Likelihood lik = log_marginal_likelihood_with_gradient(th, X, z);
    const auto base = th.to_log();
    for (int k = 0; k < KernelHyperparams::kCount; ++k) {
      const double h = 1e-5;
      auto plus = base, minus = base;
      plus[static_cast<std::size_t>(k)] += h;
      minus[static_cast<std::size_t>(k)] -= h;
      const double fd = (log_marginal_likelihood(KernelHyperparams::from_log(plus), X, z) -
                         log_marginal_likelihood(KernelHyperparams::from_log(minus), X, z)) /
                        (2 * h);
      const double an = lik.grad_log[static_cast<std::size_t>(k)];
      const double rel = std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
      // Near-zero components have no meaningful relative error.
      if (std::abs(an - fd) > 1e-7) {
        worst_grad = std::max(worst_grad, rel);
        if (rel > 1e-4) ++grad_bad;
      }
    }
  }
  report(2, worst_value < 1e-8 && grad_bad == 0,
         fmt("max oracle gap %.2e", worst_value) + fmt(", worst gradient relative error %.2e", worst_grad));
}

// ---------------------------------------------------------------------------

bool non_increasing(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k) {
    if (trace[k] > trace[k - 1]) return false;
  }
  return true;
}

void frechet_checks() {
  const Manifold s2 = Manifold::sphere(3);
  double worst = 0.0;
  bool monotone = true;

  const std::vector<Vec> pair{Vec::Unit(3, 0), Vec::Unit(3, 1)};
  FrechetResult r = sample_frechet_mean(s2, pair);
  worst = std::max(worst, (r.point - Vec{{1.0, 1.0, 0.0}}.normalized()).norm());
  monotone = monotone && non_increasing(r.objective_trace);

  // Midpoints of random pairs are the half-way geodesic point.
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec a = testing::random_point(s2, rng), b = testing::random_point(s2, rng);
    if (s2.dist(a, b) > pi - 0.2) continue;
    const std::vector<Vec> pts{a, b};
    r = sample_frechet_mean(s2, pts);
    worst = std::max(worst, (r.point - s2.exp_map(a, 0.5 * s2.log_map(a, b))).norm());
    monotone = monotone && non_increasing(r.objective_trace);
  }

  // Rings symmetric about the pole, started off the answer.
  for (int k = 3; k <= 8; ++k) {
    std::vector<Vec> ring;
    for (int j = 0; j < k; ++j) {
      const double lon = 2 * pi * j / k + 0.2;
      ring.push_back(Vec{{std::sin(0.6) * std::cos(lon), std::sin(0.6) * std::sin(lon), std::cos(0.6)}});
    }
    r = sample_frechet_mean(s2, ring, {}, Vec{{0.2, 0.3, 0.9}}.normalized());
    worst = std::max(worst, (r.point - Vec::Unit(3, 2)).norm());
    monotone = monotone && non_increasing(r.objective_trace);
  }

  // Compass search from the pole with shrinking steps as a derivative-free reference.
  std::vector<Vec> cloud;
  for (int m = 0; m < 7; ++m) cloud.push_back(s2.exp_map(Vec::Unit(3, 2), testing::random_tangent(s2, Vec::Unit(3, 2), rng, 0.3)));
  r = sample_frechet_mean(s2, cloud);
  monotone = monotone && non_increasing(r.objective_trace);
  Vec best = Vec::Unit(3, 2);
  double best_val = frechet_objective(s2, cloud, best);
  double step = 0.02;
  for (int level = 0; level < 40; ++level) {
    bool moved = false;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        const Vec cand = (best + step * Vec{{double(dx), double(dy), 0.0}}).normalized();
        const Vec c = (cand + step * Vec{{0.0, 0.0, double(dx * dy)}}).normalized();
        for (const Vec& v : {cand, c}) {
          if (const double f = frechet_objective(s2, cloud, v); f < best_val) {
            best_val = f;
            best = v;
            moved = true;
          }
        }
      }
    }
    if (!moved) step /= 2;
  }
  worst = std::max(worst, (r.point - best).norm());

  // Shapes: rotated copies of one configuration average to it.
  const Manifold k6 = Manifold::kendall(6);
  const Vec base = testing::random_point(k6, rng);
  std::vector<Vec> copies;
  for (int j = 0; j < 5; ++j) copies.push_back(rotate_configuration(base, 0.5 * j));
  r = sample_frechet_mean(k6, copies);
  worst = std::max(worst, k6.dist(r.point, base));
  monotone = monotone && non_increasing(r.objective_trace);

  report(3, worst < 1e-6 && monotone,
         fmt("worst error %.2e", worst) + (monotone ? ", objective monotone" : ", objective increased"));
}

// ---------------------------------------------------------------------------

double brute_force_frechet(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double worst) {
    worst = std::max(worst, (a[i] - b[j]).norm());
    if (worst >= best) return;
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = worst;
      return;
    }
    if (i + 1 < a.size()) walk(i + 1, j, worst);
    if (j + 1 < b.size()) walk(i, j + 1, worst);
    if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, worst);
  };
  walk(0, 0, 0.0);
  return best;
}

void dfd_checks() {
  const Manifold s2 = Manifold::sphere(3);
  std::mt19937_64 rng(4);
  int pairs = 0, mismatches = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (std::size_t m = 1; m <= 4; ++m) {
      for (int trial = 0; trial < 50; ++trial) {
        std::vector<Vec> a, b;
        for (std::size_t i = 0; i < n; ++i) a.push_back(testing::random_point(s2, rng));
        for (std::size_t i = 0; i < m; ++i) b.push_back(testing::random_point(s2, rng));
        ++pairs;
        if (discrete_frechet(s2, a, b) != brute_force_frechet(a, b)) ++mismatches;
      }
    }
  }
  report(4, mismatches == 0, std::to_string(pairs) + " curve pairs, " + std::to_string(mismatches) + " mismatches");
}

// ---------------------------------------------------------------------------

struct Means {
  double wgpfr = 0.0, flrm = 0.0, wgfmr = 0.0;
};

// Returns the descent verdict so it can be printed in order.
std::pair<bool, std::string> table1_and_descent() {
  const auto t0 = Clock::now();
  const std::vector<SplitType> splits{SplitType::Type1, SplitType::Type2, SplitType::Type3};
  const std::vector<ModelKind> kinds{ModelKind::WGPFR, ModelKind::FLRM, ModelKind::WGFmR};
  const int reps = 20;
  std::vector<Means> mean(splits.size());
  int fits = 0, violations = 0;
  for (int r = 0; r < reps; ++r) {
    const ScenarioConfig scn{ScenarioKind::Sphere, 30, 20, derive_seed(kRoot, static_cast<std::uint64_t>(r))};
    const auto results = run_replication_splits(scn, splits, scenario_fit_config(scn), kinds);
    for (std::size_t s = 0; s < splits.size(); ++s) {
      mean[s].wgpfr += results[s].scores[0].report.rmse / reps;
      mean[s].flrm += results[s].scores[1].report.rmse / reps;
      mean[s].wgfmr += results[s].scores[2].report.rmse / reps;
      ++fits;
      if (!non_increasing(results[s].scores[0].loss_trace)) ++violations;
    }
  }
  const double secs = seconds_since(t0);
  bool ordered = true;
  std::string detail;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    ordered = ordered && mean[s].wgpfr < mean[s].flrm && mean[s].wgpfr < mean[s].wgfmr;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %.4f/%.4f/%.4f; ", to_string(splits[s]), mean[s].wgpfr, mean[s].flrm,
                  mean[s].wgfmr);
    detail += buf;
  }
  report(5, mean[0].wgpfr <= 0.10 && ordered && secs < 600.0,
         "RMSE wgpfr/flrm/wgfmr " + detail + fmt("%.0f s", secs));
  return {violations == 0, std::to_string(fits) + " fits, " + std::to_string(violations) + " loss increases"};
}

void beta_trend() {
  double at[2] = {0.0, 0.0};
  const int sizes[2] = {20, 60};
  const int reps = 20;
  for (int k = 0; k < 2; ++k) {
    for (int r = 0; r < reps; ++r) {
      const ScenarioConfig scn{ScenarioKind::Sphere, 30, sizes[k], derive_seed(kRoot, static_cast<std::uint64_t>(r))};
      at[k] += sphere_beta_rmse(fit_mean_structure(simulate(scn).data, scenario_fit_config(scn))) / reps;
    }
  }
  report(6, at[1] < 0.5 * at[0],
         fmt("beta RMSE N=20 %.4f", at[0]) + fmt(", N=60 %.4f", at[1]) + fmt(", ratio %.3f (need < 0.5)", at[1] / at[0]));
}

void shape_ordering() {
  const std::vector<ModelKind> kinds{ModelKind::WGPFR, ModelKind::FLRM, ModelKind::WGFmR};
  const int reps = 10;
  Means m;
  for (int r = 0; r < reps; ++r) {
    const ScenarioConfig scn{ScenarioKind::Shape, 10, 20, derive_seed(kRoot ^ 0x5a, static_cast<std::uint64_t>(r))};
    const Replication rep = run_replication(scn, SplitType::Type1, scenario_fit_config(scn), kinds);
    m.wgpfr += rep.scores[0].report.rmse / reps;
    m.flrm += rep.scores[1].report.rmse / reps;
    m.wgfmr += rep.scores[2].report.rmse / reps;
  }
  report(7, m.wgpfr < m.flrm && m.wgpfr < m.wgfmr && m.wgpfr <= 0.08,
         fmt("type1 RMSE wgpfr %.4f", m.wgpfr) + fmt(", flrm %.4f", m.flrm) + fmt(", wgfmr %.4f", m.wgfmr));
}

// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WGPFR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / ("wgpfr_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  bool ok = true;
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = dir / std::to_string(run);
    ok = ok && run_cli("reproduce --table table1 --reps 2 --curves 10 --points 12 --seed 77 --out " + out.string()) == 0;
    if (ok) bytes[run] = io::read_text(out / "report.json");
  }
  fs::remove_all(dir);
  ok = ok && !bytes[0].empty() && bytes[0] == bytes[1];
  report(9, ok, ok ? std::to_string(bytes[0].size()) + " identical bytes" : "reports differ or the run failed");
}

void flights() {
  // The bundled sample is the first seed; it must match the generator.
  const auto bundled = io::read_flights_csv(fs::path(WGPFR_DATA_DIR) / "synthetic_flights.csv");
  const CurveDataset bundled_data = flights_to_dataset(bundled, default_carriers());
  int wins = 0, norm_bad = 0;
  bool bundle_matches = true;
  std::string detail;
  for (int r = 0; r < 10; ++r) {
    const ScenarioConfig scn{ScenarioKind::Flight, 8, 100, kFlightSeed + static_cast<std::uint64_t>(r)};
    const CurveDataset data = r == 0 ? bundled_data : simulate(scn).data;
    if (r == 0) {
      const CurveDataset fresh = simulate(scn).data;
      for (std::size_t m = 0; m < fresh.curves.size(); ++m) bundle_matches = bundle_matches && fresh.curves[m] == data.curves[m];
    }
    const FitConfig cfg = scenario_fit_config(scn);
    const int target = target_curve(scn, data);
    double rmse[2] = {0.0, 0.0};
    int k = 0;
    for (SplitType type : {SplitType::Short, SplitType::Long}) {
      const Split split = make_split(type, scn.kind, data.n_times(), target, derive_seed(scn.seed, 0x5b17));
      const CurveDataset train = apply_split(data, split);
      const WGPFRModel model = fit(train, cfg);
      std::vector<Vec> truth;
      for (int i : split.test) {
        truth.push_back(data.curves[static_cast<std::size_t>(target)][static_cast<std::size_t>(i)]);
        if (std::abs(predict(model, train, target, i).point.norm() - 1.0) > 1e-12) ++norm_bad;
      }
      rmse[k++] = evaluate_predictions(model, train, target, split.test, truth).rmse;
    }
    if (rmse[0] < rmse[1]) ++wins;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f<%.4f%s ", rmse[0], rmse[1], rmse[0] < rmse[1] ? "" : "(x)");
    detail += buf;
  }
  report(10, wins >= 8 && norm_bad == 0 && bundle_matches,
         std::to_string(wins) + "/10 short<long, " + std::to_string(norm_bad) + " off-sphere predictions" +
             (bundle_matches ? "" : ", bundled sample does not match its generator") + "; " + detail);
}

}  // namespace

int main() {
  try {
    geometry_suite();
    gp_oracles();
    frechet_checks();
    dfd_checks();
    const auto [descent_ok, descent_detail] = table1_and_descent();
    beta_trend();
    shape_ordering();
    report(8, descent_ok, descent_detail);
    determinism();
    flights();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
