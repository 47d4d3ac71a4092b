#include "wgpfr/simgen.hpp"

#include <cmath>
#include <numbers>

namespace wgpfr {

std::array<KernelHyperparams, 3> SphereScenario::default_thetas() {
  return {KernelHyperparams{0.012, 3.0, 0.01, 0.01, 0.02}, KernelHyperparams{0.017, 3.1, 0.011, 0.012, 0.015},
          KernelHyperparams{0.015, 3.2, 0.012, 0.013, 0.01}};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vec draw_gp_path(const KernelHyperparams& theta, std::span<const double> times, std::mt19937_64& rng) {
  const Mat X = column_inputs(times);
  const auto n = X.rows();
  Mat K = gram_matrix(theta, X);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec e(n);
  for (Eigen::Index i = 0; i < n; ++i) e[i] = normal(rng);
  // A degenerate kernel is a point mass at zero; jitter would invent noise.
  if (K.isZero(0.0)) return Vec::Zero(n);
  K.diagonal().array() += 1e-10;
  const Eigen::LLT<Mat> llt(K);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, "planted kernel is not positive definite");
  }
  return llt.matrixL() * e;
}

Vec rotate_to_tangent(const Manifold& manifold, const Vec& p, const Vec& v_raw) {
  const Vec proj = manifold.tangent_project(p, v_raw);
  const double np = proj.norm();
  if (np < 1e-12) throw Error(ErrorCode::ParallelVector, "vector has no tangent component");
  return proj * (v_raw.norm() / np);
}

Vec rotate_to_tangent(const Vec& p, const Vec& v_raw) {
  return rotate_to_tangent(Manifold::sphere(static_cast<int>(p.size())), p, v_raw);
}

// ---------------------------------------------------------------------------

Vec sphere_mu0(double t) {
  const double pi = std::numbers::pi;
  const Vec pole = Vec::Unit(3, 2);
  const double a = std::sin(t * pi / 2.0);
  const double b = std::sin(t * pi);
  const Vec v{{a * a, b * b * b, 0.0}};
  return Manifold::sphere(3).exp_map(pole, v);
}

double sphere_weight(int j, int i) {
  if (i < 1 || i > 20 || (j != 1 && j != 2)) throw Error(ErrorCode::OutOfRange, "weight index");
  if (j == 1) return i / 120.0;
  return -0.5 * std::sqrt(std::sin(i / 60.0));
}

Vec sphere_beta(int j, double t) {
  Vec raw = Vec::Zero(3);
  for (int i = 1; i <= 20; ++i) {
    const double w = sphere_weight(j, i);
    raw[0] += w * BasisSystem::value(i, t);
    raw[1] += w * BasisSystem::value(i, (t + 1.0) / 2.0);
    raw[2] += w * BasisSystem::value(i, (t + 2.0) / 2.0);
  }
  return rotate_to_tangent(sphere_mu0(t), raw);
}

std::vector<double> sphere_times(int n_points) {
  if (n_points < 2) throw Error(ErrorCode::ConfigInvalid, "need at least two time points");
  std::vector<double> t(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n_points - 1);
  return t;
}

namespace {

// Exp(mean, proj(tau)) for each time, tau drawn per ambient coordinate.
std::vector<Vec> perturb_curve(const Manifold& mf, const std::vector<Vec>& mean,
                               std::span<const KernelHyperparams> thetas, std::span<const double> times,
                               std::mt19937_64& rng) {
  const int d0 = mf.ambient_dim();
  Mat tau(static_cast<Eigen::Index>(times.size()), d0);
  for (int d = 0; d < d0; ++d) {
    tau.col(d) = draw_gp_path(thetas[thetas.size() == 1 ? 0 : static_cast<std::size_t>(d)], times, rng);
  }
  std::vector<Vec> out;
  out.reserve(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const Vec v = mf.tangent_project(mean[i], tau.row(static_cast<Eigen::Index>(i)).transpose());
    out.push_back(mf.exp_map(mean[i], v));
  }
  return out;
}

void finish_dataset(SimulatedData& sim) {
  auto& d = sim.data;
  d.observed = full_mask(d.curves.size(), d.times.size());
}

}  // namespace

SimulatedData generate_sphere_dataset(const SphereScenario& scn) {
  if (scn.m1 < 0 || scn.m2 < 0 || scn.m1 + scn.m2 < 1) throw Error(ErrorCode::ConfigInvalid, "curve counts");
  for (const auto& th : scn.thetas) th.validate();
  const Manifold mf = Manifold::sphere(3);
  SimulatedData sim;
  auto& data = sim.data;
  data.manifold = mf;
  data.times = sphere_times(scn.n_points);
  const int M = scn.m1 + scn.m2;
  data.U.resize(M, 2);

  std::vector<Vec> mu0;
  std::vector<Vec> b1;
  std::vector<Vec> b2;
  for (double t : data.times) {
    mu0.push_back(sphere_mu0(t));
    b1.push_back(sphere_beta(1, t));
    b2.push_back(sphere_beta(2, t));
  }
  for (int batch = 1; batch <= 2; ++batch) {
    std::vector<Vec> mean;
    for (std::size_t i = 0; i < mu0.size(); ++i) {
      const Vec tangent = batch == 1 ? b1[i] : Vec(b1[i] + b2[i]);
      mean.push_back(mf.exp_map(mu0[i], tangent));
    }
    const int count = batch == 1 ? scn.m1 : scn.m2;
    for (int c = 0; c < count; ++c) {
      const int m = static_cast<int>(data.curves.size());
      std::mt19937_64 rng(derive_seed(scn.seed, static_cast<std::uint64_t>(m)));
      data.curves.push_back(perturb_curve(mf, mean, scn.thetas, data.times, rng));
      sim.means.push_back(mean);
      data.U.row(m) << 1.0, batch == 1 ? 0.0 : 1.0;
      data.batch.push_back(batch);
    }
  }
  finish_dataset(sim);
  return sim;
}

// ---------------------------------------------------------------------------

std::complex<double> shape_landmark_raw(int z, double t) {
  if (z < 1 || z > ShapeScenario::kLandmarks) throw Error(ErrorCode::OutOfRange, "landmark index");
  const double x = z / 20.0 - 1.0;
  const double shrink = (1.0 - t / 2.0) * (1.0 - t / 2.0);
  if (z <= 40) return {x, std::sqrt(x * x + (1.0 - x * x) * shrink)};
  const double xr = 1.0 - z / 20.0;
  return {xr, -std::sqrt(xr * xr + (1.0 - x * x) * shrink)};
}

Vec shape_mu0(double t) {
  std::vector<std::complex<double>> raw;
  raw.reserve(ShapeScenario::kLandmarks);
  for (int z = 1; z <= ShapeScenario::kLandmarks; ++z) raw.push_back(shape_landmark_raw(z, t));
  return preshape(raw);
}

Vec shape_direction() {
  const int k = ShapeScenario::kLandmarks;
  Vec w(2 * k);
  for (int z = 0; z < k; ++z) {
    const double angle = 4.0 * std::numbers::pi * z / k;
    w[2 * z] = std::cos(angle);
    w[2 * z + 1] = std::sin(angle);
  }
  return w / w.norm();
}

std::vector<double> shape_times(int n_points) {
  if (n_points < 2) throw Error(ErrorCode::ConfigInvalid, "need at least two time points");
  std::vector<double> t(static_cast<std::size_t>(n_points));
  for (int i = 1; i <= n_points; ++i) t[static_cast<std::size_t>(i - 1)] = static_cast<double>(i) / (n_points + 1);
  return t;
}

double shape_batch_scalar(int batch, const Vec& u, double t, int rank) {
  const double s = std::pow(std::sin(t), 3) * std::sin(static_cast<double>(rank));
  const double factor = batch == 1 ? 1.0 : std::cos(static_cast<double>(rank));
  return u.sum() * s * factor;
}

SimulatedData generate_shape_dataset(const ShapeScenario& scn) {
  if (scn.curves_per_batch < 1) throw Error(ErrorCode::ConfigInvalid, "curves per batch must be >= 1");
  scn.theta.validate();
  const Manifold mf = Manifold::kendall(ShapeScenario::kLandmarks);
  SimulatedData sim;
  auto& data = sim.data;
  data.manifold = mf;
  data.times = shape_times(scn.n_points);
  const int M = 2 * scn.curves_per_batch;
  data.U.resize(M, 2);
  const Vec direction = shape_direction();
  const std::array<Vec, 2> u{Vec{{0.0, 0.0}}, Vec{{1.0, 2.0}}};

  std::array<std::vector<Vec>, 2> batch_means;
  for (std::size_t i = 0; i < data.times.size(); ++i) {
    const double t = data.times[i];
    const Vec base = shape_mu0(t);
    for (int b = 0; b < 2; ++b) {
      const double s = shape_batch_scalar(b + 1, u[static_cast<std::size_t>(b)], t, static_cast<int>(i) + 1);
      const Vec tangent = s == 0.0 ? Vec(Vec::Zero(mf.ambient_dim())) : rotate_to_tangent(mf, base, s * direction);
      batch_means[static_cast<std::size_t>(b)].push_back(mf.exp_map(base, tangent));
    }
  }
  const std::array<KernelHyperparams, 1> thetas{scn.theta};
  for (int b = 0; b < 2; ++b) {
    for (int c = 0; c < scn.curves_per_batch; ++c) {
      const int m = static_cast<int>(data.curves.size());
      std::mt19937_64 rng(derive_seed(scn.seed, static_cast<std::uint64_t>(m)));
      data.curves.push_back(perturb_curve(mf, batch_means[static_cast<std::size_t>(b)], thetas, data.times, rng));
      sim.means.push_back(batch_means[static_cast<std::size_t>(b)]);
      data.U.row(m) = u[static_cast<std::size_t>(b)].transpose();
      data.batch.push_back(b + 1);
    }
  }
  finish_dataset(sim);
  return sim;
}

}  // namespace wgpfr
