#include "wgpfr/basis_regression.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

namespace wgpfr {

double BasisSystem::value(int j, double t) {
  if (j == 0) return std::numbers::sqrt2 / 2.0;
  const double arg = 2.0 * std::numbers::pi * j * t;
  return (j % 2 == 1) ? std::sin(arg) : std::cos(arg);
}

Vec BasisSystem::values(double t) const {
  Vec out(k_scalar);
  for (int j = 0; j < k_scalar; ++j) out[j] = value(j, t);
  return out;
}

Mask full_mask(std::size_t curves, std::size_t times) {
  return Mask(curves, std::vector<char>(times, 1));
}

Residuals log_residuals(const Manifold& manifold, const std::vector<Vec>& mu0,
                        const PointGrid& curves, const Mask* observed) {
  const auto n = static_cast<Eigen::Index>(mu0.size());
  Residuals out;
  out.reserve(curves.size());
  for (std::size_t m = 0; m < curves.size(); ++m) {
    if (static_cast<Eigen::Index>(curves[m].size()) != n) {
      throw Error(ErrorCode::GridMismatch, "curve " + std::to_string(m) + " has the wrong length");
    }
    Mat r = Mat::Zero(n, manifold.ambient_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (observed != nullptr && !(*observed)[m][static_cast<std::size_t>(i)]) continue;
      r.row(i) = manifold.log_map(mu0[i], curves[m][i]).transpose();
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

TangentBasis::TangentBasis(Manifold manifold, std::vector<double> times, std::vector<Vec> mu0,
                           BasisSystem basis)
    : manifold_(manifold), times_(std::move(times)), mu0_(std::move(mu0)), basis_(basis) {
  if (basis_.k_scalar < 1) throw Error(ErrorCode::ConfigInvalid, "K_scalar must be >= 1");
  if (times_.size() != mu0_.size() || times_.empty()) {
    throw Error(ErrorCode::GridMismatch, "mean curve and time grid differ in length");
  }
  scalar_.resize(static_cast<Eigen::Index>(times_.size()), basis_.k_scalar);
  for (std::size_t i = 0; i < times_.size(); ++i) {
    scalar_.row(static_cast<Eigen::Index>(i)) = basis_.values(times_[i]).transpose();
  }
}

Mat TangentBasis::dense() const {
  const int n = n_times();
  const int d = d0();
  Mat phi = Mat::Zero(static_cast<Eigen::Index>(n) * d, columns());
  for (int i = 0; i < n; ++i) {
    // Column e of the projector: tangent_project(mu0_i, e_e).
    Mat proj(d, d);
    for (int e = 0; e < d; ++e) proj.col(e) = manifold_.tangent_project(mu0_[i], Vec::Unit(d, e));
    for (int j = 0; j < basis_.k_scalar; ++j) {
      for (int e = 0; e < d; ++e) {
        for (int r = 0; r < d; ++r) {
          phi(static_cast<Eigen::Index>(r) * n + i, j * d + e) = scalar_(i, j) * proj(r, e);
        }
      }
    }
  }
  return phi;
}

namespace {

// sum_j phi_j * coeffs[j*d0 .. j*d0 + d0).
Vec combine_blocks(const Vec& phi, const Vec& coeffs, int d0) {
  Vec acc = Vec::Zero(d0);
  for (Eigen::Index j = 0; j < phi.size(); ++j) acc += phi[j] * coeffs.segment(j * d0, d0);
  return acc;
}

}  // namespace

Vec TangentBasis::field(int i, const Vec& coeffs) const {
  if (coeffs.size() != columns()) throw Error(ErrorCode::DimensionMismatch, "coefficient length");
  const Vec raw = combine_blocks(scalar_.row(i).transpose(), coeffs, d0());
  return manifold_.tangent_project(mu0_[static_cast<std::size_t>(i)], raw);
}

Vec TangentBasis::mean_at(double t) const {
  if (t <= times_.front()) return mu0_.front();
  if (t >= times_.back()) return mu0_.back();
  const auto hi = static_cast<std::size_t>(
      std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
  const std::size_t lo = hi - 1;
  const double frac = (t - times_[lo]) / (times_[hi] - times_[lo]);
  if (frac == 0.0) return mu0_[lo];
  return manifold_.exp_map(mu0_[lo], frac * manifold_.log_map(mu0_[lo], mu0_[hi]));
}

Vec TangentBasis::field_at(double t, const Vec& coeffs) const {
  if (coeffs.size() != columns()) throw Error(ErrorCode::DimensionMismatch, "coefficient length");
  const Vec raw = combine_blocks(basis_.values(t), coeffs, d0());
  return manifold_.tangent_project(mean_at(t), raw);
}

Mat build_tangent_basis(const Manifold& manifold, const std::vector<Vec>& mu0,
                        const std::vector<double>& times, const BasisSystem& basis) {
  return TangentBasis(manifold, times, mu0, basis).dense();
}

// ---------------------------------------------------------------------------

namespace {

void check_covariates(std::size_t curves, const Mat& U) {
  if (curves == 0) throw Error(ErrorCode::EmptyInput, "no residual curves");
  if (U.rows() != static_cast<Eigen::Index>(curves)) {
    throw Error(ErrorCode::DimensionMismatch, "covariate rows must match the number of curves");
  }
  if (U.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "covariate dimension must be >= 1");
}

// Eigen 3.4's divide-and-conquer SVD can break down on exactly rank-deficient
// inputs, so moderate sizes go straight to Jacobi and larger results are
// checked before use.
struct ThinSvd {
  Mat u, v;
  Vec s;
};

ThinSvd thin_svd(const Mat& A, bool vectors = true) {
  const unsigned opts = vectors ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : 0u;
  ThinSvd out;
  if (std::min(A.rows(), A.cols()) > 400) {
    Eigen::BDCSVD<Mat> svd(A, opts);
    out.s = svd.singularValues();
    if (vectors) {
      out.u = svd.matrixU();
      out.v = svd.matrixV();
    }
    if (out.s.allFinite() && out.u.allFinite() && out.v.allFinite()) return out;
  }
  Eigen::JacobiSVD<Mat> svd(A, opts);
  out.s = svd.singularValues();
  if (vectors) {
    out.u = svd.matrixU();
    out.v = svd.matrixV();
  }
  return out;
}

bool ill_conditioned(const Vec& singular, Eigen::Index needed) {
  if (singular.size() < needed) return true;
  const double top = singular.size() > 0 ? singular.maxCoeff() : 0.0;
  return !(top > 0.0) || singular.minCoeff() < kRankTolerance * top;
}

// s / (s^2 + lambda), zero where the denominator vanishes.
Vec ridge_filter(const Vec& s, double lambda) {
  Vec out(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double denom = s[k] * s[k] + lambda;
    out[k] = denom > 0.0 ? s[k] / denom : 0.0;
  }
  return out;
}

// Y(m, d * N + i) = V[m](i, d).
Mat stack_residuals(const Residuals& V, Eigen::Index n, Eigen::Index d) {
  Mat Y(static_cast<Eigen::Index>(V.size()), n * d);
  for (std::size_t m = 0; m < V.size(); ++m) {
    if (V[m].rows() != n || V[m].cols() != d) {
      throw Error(ErrorCode::DimensionMismatch, "residual curves differ in shape");
    }
    for (Eigen::Index e = 0; e < d; ++e) {
      Y.row(static_cast<Eigen::Index>(m)).segment(e * n, n) = V[m].col(e).transpose();
    }
  }
  return Y;
}

// Factored Kronecker design: singular values of (Phi (x) U) are the pairwise
// products of those of U and Phi.
struct KroneckerFactor {
  Mat u_left, u_right, p_left, p_right;
  Vec s1, s2;
  bool rank_deficient = false;

  KroneckerFactor(const Mat& U, const Mat& Phi) {
    ThinSvd su = thin_svd(U);
    ThinSvd sp = thin_svd(Phi);
    u_left = std::move(su.u);
    u_right = std::move(su.v);
    p_left = std::move(sp.u);
    p_right = std::move(sp.v);
    s1 = std::move(su.s);
    s2 = std::move(sp.s);
    rank_deficient = ill_conditioned(s1, U.cols()) || ill_conditioned(s2, Phi.cols()) ||
                     s1.minCoeff() * s2.minCoeff() < kRankTolerance * s1.maxCoeff() * s2.maxCoeff();
  }

  Mat solve(const Mat& Y) const {
    const double lambda = rank_deficient ? kRidge : 0.0;
    const Mat H = u_left.transpose() * Y * p_left;
    Mat core(s1.size(), s2.size());
    for (Eigen::Index a = 0; a < s1.size(); ++a) {
      for (Eigen::Index b = 0; b < s2.size(); ++b) {
        const double g = s1[a] * s2[b];
        const double denom = g * g + lambda;
        core(a, b) = denom > 0.0 ? g * H(a, b) / denom : 0.0;
      }
    }
    return u_right * core * p_right.transpose();
  }
};

struct Observation {
  int m;
  int i;
};

std::vector<Observation> observed_entries(const Mask& observed, std::size_t curves, int n) {
  if (observed.size() != curves) throw Error(ErrorCode::DimensionMismatch, "mask rows");
  std::vector<Observation> obs;
  for (std::size_t m = 0; m < curves; ++m) {
    if (observed[m].size() != static_cast<std::size_t>(n)) {
      throw Error(ErrorCode::GridMismatch, "mask length differs from the time grid");
    }
    for (int i = 0; i < n; ++i) {
      if (observed[m][static_cast<std::size_t>(i)]) obs.push_back({static_cast<int>(m), i});
    }
  }
  if (obs.empty()) throw Error(ErrorCode::EmptyInput, "no observed entries");
  return obs;
}

bool all_observed(const Mask& observed) {
  for (const auto& row : observed) {
    for (char c : row) {
      if (!c) return false;
    }
  }
  return true;
}

// Feature z_{m,i} = u_m (x) phi(t_i) with index j * K_s + s.
Vec feature(const Mat& U, const Mat& scalar, const Observation& o) {
  const Eigen::Index p = U.cols();
  const Eigen::Index ks = scalar.cols();
  Vec z(p * ks);
  for (Eigen::Index j = 0; j < p; ++j) z.segment(j * ks, ks) = U(o.m, j) * scalar.row(o.i).transpose();
  return z;
}

}  // namespace

FitBResult fit_B(const Residuals& V, const Mat& U, const Mat& Phi) {
  check_covariates(V.size(), U);
  const Eigen::Index n = V.front().rows();
  const Eigen::Index d = V.front().cols();
  if (Phi.rows() != n * d) throw Error(ErrorCode::DimensionMismatch, "basis rows must equal N * d0");
  const KroneckerFactor f(U, Phi);
  FitBResult out;
  out.rank_deficient = f.rank_deficient;
  out.B = f.solve(stack_residuals(V, n, d));
  return out;
}

// ---------------------------------------------------------------------------

struct BSolver::Impl {
  TangentBasis basis;
  Mat U;
  std::vector<Observation> obs;
  bool rank_deficient = false;
  double lambda = 0.0;

  std::optional<KroneckerFactor> kron;

  // Dense route: thin SVD of the expanded design, unknowns in vec(B) order.
  Mat svd_u, svd_v;
  Vec filter;

  // CG route: features and the preconditioner (F^T F + lambda)^-1.
  std::vector<Vec> z;
  Eigen::LDLT<Mat> precond;

  Impl(TangentBasis b, Mat u, std::vector<Observation> o)
      : basis(std::move(b)), U(std::move(u)), obs(std::move(o)) {}

  void init_dense() {
    const Mat phi = basis.dense();
    const Eigen::Index p = U.cols();
    const Eigen::Index K = basis.columns();
    const int n = basis.n_times();
    const int d = basis.d0();
    Mat A(static_cast<Eigen::Index>(obs.size()) * d, p * K);
    Eigen::Index row = 0;
    for (const Observation& o : obs) {
      for (int e = 0; e < d; ++e, ++row) {
        const auto phi_row = phi.row(static_cast<Eigen::Index>(e) * n + o.i);
        for (Eigen::Index k = 0; k < K; ++k) {
          for (Eigen::Index j = 0; j < p; ++j) A(row, j + p * k) = U(o.m, j) * phi_row(k);
        }
      }
    }
    ThinSvd svd = thin_svd(A);
    rank_deficient = ill_conditioned(svd.s, A.cols());
    lambda = rank_deficient ? kRidge : 0.0;
    svd_u = std::move(svd.u);
    svd_v = std::move(svd.v);
    filter = ridge_filter(svd.s, lambda);
  }

  FitBResult solve_dense(const Residuals& V) const {
    const int d = basis.d0();
    Vec b(static_cast<Eigen::Index>(obs.size()) * d);
    Eigen::Index row = 0;
    for (const Observation& o : obs) {
      for (int e = 0; e < d; ++e, ++row) b[row] = V[static_cast<std::size_t>(o.m)](o.i, e);
    }
    const Vec x = svd_v * filter.cwiseProduct(svd_u.transpose() * b);
    FitBResult out;
    out.rank_deficient = rank_deficient;
    out.B = Eigen::Map<const Mat>(x.data(), U.cols(), basis.columns());
    return out;
  }

  void init_cg() {
    const Mat& scalar = basis.scalar_values();
    const Eigen::Index q = U.cols() * scalar.cols();
    z.resize(obs.size());
    Mat F(static_cast<Eigen::Index>(obs.size()), q);
    for (std::size_t r = 0; r < obs.size(); ++r) {
      z[r] = feature(U, scalar, obs[r]);
      F.row(static_cast<Eigen::Index>(r)) = z[r].transpose();
    }
    // Shape tangents are centered, so coefficients along the translation
    // directions are never identified and shapes always carry the ridge.
    rank_deficient = !basis.manifold().is_sphere() || ill_conditioned(thin_svd(F, false).s, q);
    lambda = rank_deficient ? kRidge : 0.0;
    precond.compute(F.transpose() * F + (lambda + 1e-12) * Mat::Identity(q, q));
  }

  // Normal equations in the d0 x (p K_s) layout C, where
  // B(j, s * d0 + e) = C(e, j * K_s + s).
  FitBResult solve_cg(const Residuals& V) const {
    const Manifold& mf = basis.manifold();
    const Eigen::Index p = U.cols();
    const Eigen::Index ks = basis.scalar_values().cols();
    const Eigen::Index q = p * ks;
    const int d = basis.d0();
    const auto& mu0 = basis.mu0();

    auto apply = [&](const Mat& C) {
      Mat result = lambda * C;
      for (std::size_t r = 0; r < obs.size(); ++r) {
        const Vec y = mf.tangent_project(mu0[static_cast<std::size_t>(obs[r].i)], C * z[r]);
        result.noalias() += y * z[r].transpose();
      }
      return result;
    };
    auto precondition = [&](const Mat& G) -> Mat { return precond.solve(G.transpose()).transpose(); };

    Mat R = Mat::Zero(d, q);
    for (std::size_t r = 0; r < obs.size(); ++r) {
      const auto& o = obs[r];
      const Vec v = mf.tangent_project(mu0[static_cast<std::size_t>(o.i)],
                                       V[static_cast<std::size_t>(o.m)].row(o.i).transpose());
      R.noalias() += v * z[r].transpose();
    }

    Mat C = precondition(R);
    Mat res = R - apply(C);
    Mat zres = precondition(res);
    Mat dir = zres;
    double rz = (res.array() * zres.array()).sum();
    const double target = 1e-13 * std::max(R.norm(), 1e-300);
    const int max_iter = std::max<int>(200, 4 * static_cast<int>(d * q));
    int it = 0;
    for (; it < max_iter && res.norm() > target; ++it) {
      const Mat Ad = apply(dir);
      const double curvature = (dir.array() * Ad.array()).sum();
      if (!(curvature > 0.0)) break;
      const double alpha = rz / curvature;
      C += alpha * dir;
      res -= alpha * Ad;
      zres = precondition(res);
      const double rz_next = (res.array() * zres.array()).sum();
      dir = zres + (rz_next / rz) * dir;
      rz = rz_next;
    }

    FitBResult out;
    out.rank_deficient = rank_deficient;
    out.cg_iterations = it;
    out.B.resize(p, ks * d);
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index s = 0; s < ks; ++s) {
        for (int e = 0; e < d; ++e) out.B(j, s * d + e) = C(e, j * ks + s);
      }
    }
    return out;
  }
};

BSolver::BSolver(const Mask& observed, const Mat& U, const TangentBasis& basis, LstsqRoute route)
    : route_(route) {
  check_covariates(observed.size(), U);
  impl_ = std::make_unique<Impl>(basis, U, observed_entries(observed, observed.size(), basis.n_times()));
  const bool full = all_observed(observed);
  const double rows = static_cast<double>(impl_->obs.size()) * basis.d0();
  const double unknowns = static_cast<double>(U.cols()) * basis.columns();
  if (route_ == LstsqRoute::Auto) {
    if (full && rows * basis.columns() <= 4e6) {
      route_ = LstsqRoute::Kronecker;
    } else {
      route_ = unknowns * unknowns * rows <= 5e8 ? LstsqRoute::Dense : LstsqRoute::ConjugateGradient;
    }
  }
  switch (route_) {
    case LstsqRoute::Kronecker:
      if (!full) throw Error(ErrorCode::ConfigInvalid, "the Kronecker route needs a full mask");
      impl_->kron.emplace(U, basis.dense());
      impl_->rank_deficient = impl_->kron->rank_deficient;
      break;
    case LstsqRoute::Dense:
      impl_->init_dense();
      break;
    default:
      impl_->init_cg();
      break;
  }
}

BSolver::~BSolver() = default;
BSolver::BSolver(BSolver&&) noexcept = default;
BSolver& BSolver::operator=(BSolver&&) noexcept = default;

bool BSolver::rank_deficient() const noexcept { return impl_->rank_deficient; }

FitBResult BSolver::solve(const Residuals& V) const {
  const TangentBasis& basis = impl_->basis;
  if (V.size() != static_cast<std::size_t>(impl_->U.rows())) {
    throw Error(ErrorCode::DimensionMismatch, "residual curves differ from covariate rows");
  }
  for (const Mat& r : V) {
    if (r.rows() != basis.n_times() || r.cols() != basis.d0()) {
      throw Error(ErrorCode::DimensionMismatch, "residual shape differs from the basis grid");
    }
  }
  switch (route_) {
    case LstsqRoute::Kronecker: {
      FitBResult out;
      out.rank_deficient = impl_->rank_deficient;
      out.B = impl_->kron->solve(stack_residuals(V, basis.n_times(), basis.d0()));
      return out;
    }
    case LstsqRoute::Dense:
      return impl_->solve_dense(V);
    default:
      return impl_->solve_cg(V);
  }
}

FitBResult fit_B_masked(const Residuals& V, const Mask& observed, const Mat& U,
                        const TangentBasis& basis, LstsqRoute route) {
  if (route == LstsqRoute::Auto) {
    // Callers of the masked entry point get a route that honours the mask
    // literally, even when it happens to be full.
    const double unknowns = static_cast<double>(U.cols()) * basis.columns();
    double rows = 0.0;
    for (const auto& r : observed) rows += static_cast<double>(std::count(r.begin(), r.end(), 1));
    rows *= basis.d0();
    route = unknowns * unknowns * rows <= 5e8 ? LstsqRoute::Dense : LstsqRoute::ConjugateGradient;
  }
  return BSolver(observed, U, basis, route).solve(V);
}

double basis_loss(const Residuals& V, const Mask& observed, const Mat& U, const TangentBasis& basis,
                  const Mat& B) {
  const auto obs = observed_entries(observed, V.size(), basis.n_times());
  double total = 0.0;
  for (const Observation& o : obs) {
    const Vec coeffs = B.transpose() * U.row(o.m).transpose();
    total += (V[static_cast<std::size_t>(o.m)].row(o.i).transpose() - basis.field(o.i, coeffs))
                 .squaredNorm();
  }
  return total;
}

// ---------------------------------------------------------------------------

MeanStructure::MeanStructure(TangentBasis basis, Mat B) : basis_(std::move(basis)), B_(std::move(B)) {
  if (B_.cols() != basis_.columns()) {
    throw Error(ErrorCode::DimensionMismatch, "B must have K = K_scalar * d0 columns");
  }
  if (!B_.allFinite()) throw Error(ErrorCode::OutOfRange, "B has non-finite entries");
}

Vec MeanStructure::beta(int j, int i) const { return basis_.field(i, B_.row(j).transpose()); }

Vec MeanStructure::slope(const Vec& u, int i) const {
  if (u.size() != B_.rows()) throw Error(ErrorCode::DimensionMismatch, "covariate length");
  return basis_.field(i, B_.transpose() * u);
}

Vec MeanStructure::slope_at(const Vec& u, double t) const {
  if (u.size() != B_.rows()) throw Error(ErrorCode::DimensionMismatch, "covariate length");
  return basis_.field_at(t, B_.transpose() * u);
}

Vec MeanStructure::predict_mean(const Vec& u, int i) const {
  return manifold().exp_map(mu0()[static_cast<std::size_t>(i)], slope(u, i));
}

Vec MeanStructure::predict_mean_at(const Vec& u, double t) const {
  return manifold().exp_map(basis_.mean_at(t), slope_at(u, t));
}

}  // namespace wgpfr
