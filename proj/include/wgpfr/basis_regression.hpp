#pragma once

#include <memory>
#include <vector>

#include "wgpfr/geometry.hpp"

namespace wgpfr {

/// Scalar Fourier family: phi_0 = 1/sqrt(2), phi_j = sin(2 pi j t) for odd j,
/// phi_j = cos(2 pi j t) for even j > 0. `k_scalar` functions phi_0 ..
/// phi_{k_scalar-1} are used.
struct BasisSystem {
  int k_scalar = 5;

  static double value(int j, double t);
  Vec values(double t) const;
};

/// Residual tensor: res[m](i, d) is coordinate d of the tangent residual of
/// curve m at time index i.
using Residuals = std::vector<Mat>;
/// observed[m][i] != 0 when curve m is observed at time index i.
using Mask = std::vector<std::vector<char>>;
using PointGrid = std::vector<std::vector<Vec>>;

Mask full_mask(std::size_t curves, std::size_t times);

/// Log(mu0(t_i), y_m(t_i)) for every observed entry; unobserved entries are
/// left at zero.
Residuals log_residuals(const Manifold& manifold, const std::vector<Vec>& mu0,
                        const PointGrid& curves, const Mask* observed = nullptr);

/// Tangent-valued basis functions along a mean curve: column (j, e) at time
/// t_i is phi_j(t_i) times the projection of the coordinate axis e_e onto the
/// tangent space at mu0(t_i). Column index is j * d0 + e.
class TangentBasis {
 public:
  TangentBasis(Manifold manifold, std::vector<double> times, std::vector<Vec> mu0,
               BasisSystem basis);

  const Manifold& manifold() const noexcept { return manifold_; }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<Vec>& mu0() const noexcept { return mu0_; }
  const BasisSystem& basis() const noexcept { return basis_; }
  int n_times() const noexcept { return static_cast<int>(times_.size()); }
  int d0() const noexcept { return manifold_.ambient_dim(); }
  int columns() const noexcept { return basis_.k_scalar * d0(); }
  /// phi_j(t_i), shape N x k_scalar.
  const Mat& scalar_values() const noexcept { return scalar_; }

  /// Dense (N d0) x K matrix with row index d * N + i.
  Mat dense() const;

  /// sum_k coeffs_k column_k(t_i), a tangent vector at mu0(t_i).
  Vec field(int i, const Vec& coeffs) const;

  /// Geodesic interpolation of mu0 between bracketing grid points; clamps to
  /// the end points outside the grid.
  Vec mean_at(double t) const;
  /// Field at an arbitrary time: Fourier values at t, frames at mean_at(t).
  Vec field_at(double t, const Vec& coeffs) const;

 private:
  Manifold manifold_;
  std::vector<double> times_;
  std::vector<Vec> mu0_;
  BasisSystem basis_;
  Mat scalar_;
};

Mat build_tangent_basis(const Manifold& manifold, const std::vector<Vec>& mu0,
                        const std::vector<double>& times, const BasisSystem& basis);

struct FitBResult {
  /// p x K coefficient matrix.
  Mat B;
  /// Smallest singular value of the design below 1e-10 of the largest; the
  /// solution then carries a 1e-8 ridge.
  bool rank_deficient = false;
  int cg_iterations = 0;
};

inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kRidge = 1e-8;

/// Least squares for vec(B) with the Kronecker design (Phi (x) U), all
/// curves observed at every time. Solved through the SVDs of U and Phi.
FitBResult fit_B(const Residuals& V, const Mat& U, const Mat& Phi);

enum class LstsqRoute { Auto, Kronecker, Dense, ConjugateGradient };

/// Least squares for B over the observed (m, i) entries, factored once for a
/// fixed mask, covariate matrix and tangent basis so that repeated solves
/// with new residuals are cheap.
///
/// Kronecker needs a full mask. Dense factors the expanded observed-row
/// design. ConjugateGradient solves the normal equations matrix-free,
/// preconditioned by the unprojected problem. Auto picks Kronecker for full
/// masks of moderate size, Dense for small problems and CG otherwise.
class BSolver {
 public:
  BSolver(const Mask& observed, const Mat& U, const TangentBasis& basis,
          LstsqRoute route = LstsqRoute::Auto);
  ~BSolver();
  BSolver(BSolver&&) noexcept;
  BSolver& operator=(BSolver&&) noexcept;

  FitBResult solve(const Residuals& V) const;
  LstsqRoute route() const noexcept { return route_; }
  bool rank_deficient() const noexcept;

 private:
  struct Impl;
  LstsqRoute route_;
  std::unique_ptr<Impl> impl_;
};

FitBResult fit_B_masked(const Residuals& V, const Mask& observed, const Mat& U,
                        const TangentBasis& basis, LstsqRoute route = LstsqRoute::Auto);

/// The loss sum_{m,i observed} ||V_m(t_i) - sum_j u_mj beta_j(t_i)||^2.
double basis_loss(const Residuals& V, const Mask& observed, const Mat& U, const TangentBasis& basis,
                  const Mat& B);

/// Estimated intercept curve plus slope coefficients, with the tangent basis
/// cached for prediction.
class MeanStructure {
 public:
  MeanStructure(TangentBasis basis, Mat B);

  const TangentBasis& basis() const noexcept { return basis_; }
  const Manifold& manifold() const noexcept { return basis_.manifold(); }
  const std::vector<Vec>& mu0() const noexcept { return basis_.mu0(); }
  const std::vector<double>& times() const noexcept { return basis_.times(); }
  const Mat& B() const noexcept { return B_; }
  int covariate_dim() const noexcept { return static_cast<int>(B_.rows()); }

  /// beta_j(t_i).
  Vec beta(int j, int i) const;
  /// sum_j u_j beta_j(t_i), projected onto the tangent space at mu0(t_i).
  Vec slope(const Vec& u, int i) const;
  Vec slope_at(const Vec& u, double t) const;
  /// Exp(mu0(t_i), u^T beta(t_i)).
  Vec predict_mean(const Vec& u, int i) const;
  Vec predict_mean_at(const Vec& u, double t) const;

 private:
  TangentBasis basis_;
  Mat B_;
};

}  // namespace wgpfr
