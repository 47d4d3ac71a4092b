#pragma once

#include <complex>
#include <span>

#include <Eigen/Dense>

#include "wgpfr/error.hpp"

namespace wgpfr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ManifoldType { Sphere, KendallShape };

/// Closed-form Riemannian geometry on S^n (ambient R^{n+1}) or on Kendall's
/// planar shape space, represented by centered unit-norm landmark
/// configurations with real/imaginary parts interleaved (length 2k).
///
/// All points and tangent vectors live in ambient coordinates. Shape tangent
/// vectors are horizontal: centered and Hermitian-orthogonal to the base.
class Manifold {
 public:
  static Manifold sphere(int ambient_dim);
  static Manifold kendall(int landmarks);

  ManifoldType type() const noexcept { return type_; }
  bool is_sphere() const noexcept { return type_ == ManifoldType::Sphere; }

  /// Length of a coordinate vector (d0).
  int ambient_dim() const noexcept { return ambient_; }
  /// Number of landmarks; zero for spheres.
  int landmarks() const noexcept { return is_sphere() ? 0 : ambient_ / 2; }
  /// Geodesic distances on this manifold never exceed this value.
  double diameter() const noexcept;

  Vec exp_map(const Vec& p, const Vec& v) const;
  Vec log_map(const Vec& p, const Vec& q) const;
  double dist(const Vec& p, const Vec& q) const;
  Vec tangent_project(const Vec& p, const Vec& w) const;

  /// Throws DimensionMismatch / OutOfRange when p is not a valid point.
  void check_point(const Vec& p, double tol = 1e-10) const;
  bool is_point(const Vec& p, double tol = 1e-10) const;
  bool is_tangent(const Vec& p, const Vec& v, double tol = 1e-8) const;

  /// Optimal rotation of q onto p (identity on the sphere).
  Vec align(const Vec& p, const Vec& q) const;

  /// Extrinsic mean projected back onto the manifold. Shapes are aligned to
  /// the first point before averaging. Falls back to the first point when
  /// the Euclidean average vanishes.
  Vec extrinsic_mean(std::span<const Vec> points) const;

  bool operator==(const Manifold&) const = default;

 private:
  Manifold(ManifoldType type, int ambient) : type_(type), ambient_(ambient) {}

  void check_dim(const Vec& v) const;

  ManifoldType type_;
  int ambient_;
};

/// Center a complex landmark configuration and scale it to unit norm.
Vec preshape(std::span<const std::complex<double>> raw_landmarks);
Vec preshape(const Vec& interleaved);

/// Rotate a single configuration in the complex plane by `angle` radians.
Vec rotate_configuration(const Vec& interleaved, double angle);

}  // namespace wgpfr
