#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "wgpfr/model.hpp"

namespace wgpfr {

/// Two batches on S^2: batch 1 with u = (1, 0), batch 2 with u = (1, 1).
struct SphereScenario {
  int m1 = 15;
  int m2 = 15;
  int n_points = 20;
  /// Kernel for tangent coordinate d.
  std::array<KernelHyperparams, 3> thetas = default_thetas();
  std::uint64_t seed = 0;

  static std::array<KernelHyperparams, 3> default_thetas();
};

/// Two batches of 80-landmark planar shapes: covariates u1 = (0, 0) and
/// u2 = (1, 2), times t_i = i / (N + 1).
struct ShapeScenario {
  int curves_per_batch = 5;
  int n_points = 20;
  /// Kernel shared by all ambient tangent coordinates.
  KernelHyperparams theta{3e-4, 3.0, 1e-4, 1e-4, 3e-3};
  std::uint64_t seed = 0;

  static constexpr int kLandmarks = 80;
};

/// Generated data together with the noise-free curve means.
struct SimulatedData {
  CurveDataset data;
  PointGrid means;
};

/// Curve m, time i of the generator stream derives from (seed, m) only.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Zero-mean draw at `times` from the kernel including its noise term,
/// through the jittered (1e-10) triangular factor.
Vec draw_gp_path(const KernelHyperparams& theta, std::span<const double> times, std::mt19937_64& rng);

/// Projects v_raw onto the tangent space at p and rescales it to |v_raw|.
/// Throws ParallelVector when the projection nearly vanishes.
Vec rotate_to_tangent(const Manifold& manifold, const Vec& p, const Vec& v_raw);
Vec rotate_to_tangent(const Vec& p, const Vec& v_raw);

Vec sphere_mu0(double t);
/// Weight w_{j,i}, j in {1, 2}, i in 1..20.
double sphere_weight(int j, int i);
/// Slope function beta_j(t), tangent at sphere_mu0(t).
Vec sphere_beta(int j, double t);
/// Equally spaced grid on [0, 1].
std::vector<double> sphere_times(int n_points);
SimulatedData generate_sphere_dataset(const SphereScenario& scn);

/// Raw landmark z (1-based) of the elliptic template before preshaping.
std::complex<double> shape_landmark_raw(int z, double t);
Vec shape_mu0(double t);
/// Fixed centered unit-norm direction used to carry the scalar batch tangents.
Vec shape_direction();
std::vector<double> shape_times(int n_points);
/// Scalar batch tangent at grid rank r (1-based) and time t.
double shape_batch_scalar(int batch, const Vec& u, double t, int rank);
SimulatedData generate_shape_dataset(const ShapeScenario& scn);

}  // namespace wgpfr
