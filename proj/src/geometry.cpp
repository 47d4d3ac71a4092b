#include "wgpfr/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace wgpfr {

namespace {

using Complex = std::complex<double>;

// Hermitian product <p, q> = sum conj(p_z) q_z over interleaved storage.
Complex hermitian(const Vec& p, const Vec& q) {
  double re = 0.0;
  double im = 0.0;
  for (Eigen::Index z = 0; z < p.size(); z += 2) {
    re += p[z] * q[z] + p[z + 1] * q[z + 1];
    im += p[z] * q[z + 1] - p[z + 1] * q[z];
  }
  return {re, im};
}

// v * c for a complex scalar c.
Vec complex_scale(const Vec& v, Complex c) {
  Vec out(v.size());
  for (Eigen::Index z = 0; z < v.size(); z += 2) {
    out[z] = c.real() * v[z] - c.imag() * v[z + 1];
    out[z + 1] = c.real() * v[z + 1] + c.imag() * v[z];
  }
  return out;
}

void center_in_place(Vec& v) {
  const Eigen::Index k = v.size() / 2;
  double re = 0.0;
  double im = 0.0;
  for (Eigen::Index z = 0; z < v.size(); z += 2) {
    re += v[z];
    im += v[z + 1];
  }
  re /= static_cast<double>(k);
  im /= static_cast<double>(k);
  for (Eigen::Index z = 0; z < v.size(); z += 2) {
    v[z] -= re;
    v[z + 1] -= im;
  }
}

// Angle between unit vectors, accurate near 0 and near pi.
double unit_angle(const Vec& a, const Vec& b) {
  return 2.0 * std::atan2((a - b).norm(), (a + b).norm());
}

}  // namespace

Manifold Manifold::sphere(int ambient_dim) {
  if (ambient_dim < 3) {
    throw Error(ErrorCode::ConfigInvalid, "sphere ambient dimension must be >= 3");
  }
  return Manifold(ManifoldType::Sphere, ambient_dim);
}

Manifold Manifold::kendall(int landmarks) {
  if (landmarks < 3) {
    throw Error(ErrorCode::ConfigInvalid, "shape space needs at least 3 landmarks");
  }
  return Manifold(ManifoldType::KendallShape, 2 * landmarks);
}

double Manifold::diameter() const noexcept {
  return is_sphere() ? std::numbers::pi : std::numbers::pi / 2.0;
}

void Manifold::check_dim(const Vec& v) const {
  if (v.size() != ambient_) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected length " + std::to_string(ambient_) + ", got " + std::to_string(v.size()));
  }
}

bool Manifold::is_point(const Vec& p, double tol) const {
  if (p.size() != ambient_ || !p.allFinite()) return false;
  if (std::abs(p.norm() - 1.0) > tol) return false;
  if (!is_sphere()) {
    double re = 0.0;
    double im = 0.0;
    for (Eigen::Index z = 0; z < p.size(); z += 2) {
      re += p[z];
      im += p[z + 1];
    }
    if (std::hypot(re, im) / landmarks() > tol) return false;
  }
  return true;
}

void Manifold::check_point(const Vec& p, double tol) const {
  check_dim(p);
  if (!is_point(p, tol)) {
    throw Error(ErrorCode::OutOfRange, "coordinates do not describe a point on the manifold");
  }
}

bool Manifold::is_tangent(const Vec& p, const Vec& v, double tol) const {
  if (p.size() != ambient_ || v.size() != ambient_) return false;
  const double scale = std::max(1.0, v.norm());
  return (v - tangent_project(p, v)).norm() <= tol * scale;
}

Vec Manifold::tangent_project(const Vec& p, const Vec& w) const {
  check_dim(p);
  check_dim(w);
  if (is_sphere()) {
    return w - p.dot(w) * p;
  }
  Vec out = w;
  center_in_place(out);
  out -= complex_scale(p, hermitian(p, out));
  return out;
}

Vec Manifold::exp_map(const Vec& p, const Vec& v) const {
  check_dim(p);
  check_dim(v);
  if (!is_tangent(p, v, 1e-8)) {
    throw Error(ErrorCode::NotTangent, "vector is not tangent at the base point");
  }
  const double theta = v.norm();
  if (theta < 1e-14) return p;
  Vec out = std::cos(theta) * p + (std::sin(theta) / theta) * v;
  out /= out.norm();
  return out;
}

Vec Manifold::log_map(const Vec& p, const Vec& q) const {
  check_dim(p);
  check_dim(q);
  if (is_sphere()) {
    const double c = p.dot(q);
    if (c <= -1.0 + 1e-10) {
      throw Error(ErrorCode::AntipodalPoints, "log map undefined for antipodal points");
    }
    Vec u = q - c * p;
    const double nu = u.norm();
    if (nu < 1e-300) return Vec::Zero(ambient_);
    u *= unit_angle(p, q) / nu;
    u -= p.dot(u) * p;
    return u;
  }
  const Vec aligned = align(p, q);
  Vec w = aligned - hermitian(p, aligned).real() * p;
  center_in_place(w);
  const double nw = w.norm();
  if (nw < 1e-300) return Vec::Zero(ambient_);
  w *= unit_angle(p, aligned) / nw;
  return tangent_project(p, w);
}

double Manifold::dist(const Vec& p, const Vec& q) const {
  check_dim(p);
  check_dim(q);
  if (is_sphere()) return unit_angle(p, q);
  return unit_angle(p, align(p, q));
}

Vec Manifold::align(const Vec& p, const Vec& q) const {
  check_dim(p);
  check_dim(q);
  if (is_sphere()) return q;
  const Complex c = hermitian(p, q);
  const double r = std::abs(c);
  if (r < 1e-300) return q;
  return complex_scale(q, std::conj(c) / r);
}

Vec Manifold::extrinsic_mean(std::span<const Vec> points) const {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "no points to average");
  Vec sum = Vec::Zero(ambient_);
  for (const Vec& q : points) {
    check_dim(q);
    sum += is_sphere() ? q : align(points.front(), q);
  }
  if (!is_sphere()) center_in_place(sum);
  const double n = sum.norm();
  if (n < 1e-12 * static_cast<double>(points.size())) return points.front();
  return sum / n;
}

Vec preshape(std::span<const std::complex<double>> raw_landmarks) {
  Vec v(2 * static_cast<Eigen::Index>(raw_landmarks.size()));
  for (std::size_t z = 0; z < raw_landmarks.size(); ++z) {
    v[2 * z] = raw_landmarks[z].real();
    v[2 * z + 1] = raw_landmarks[z].imag();
  }
  return preshape(v);
}

Vec preshape(const Vec& interleaved) {
  if (interleaved.size() < 6 || interleaved.size() % 2 != 0) {
    throw Error(ErrorCode::DimensionMismatch, "preshape needs at least 3 complex landmarks");
  }
  Vec v = interleaved;
  center_in_place(v);
  const double n = v.norm();
  if (!(n >= 1e-12)) {
    throw Error(ErrorCode::DegenerateConfiguration, "configuration collapses to a point");
  }
  return v / n;
}

Vec rotate_configuration(const Vec& interleaved, double angle) {
  return complex_scale(interleaved, std::polar(1.0, angle));
}

}  // namespace wgpfr
