#include "wgpfr/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

namespace wgpfr {

bool CurveDataset::fully_observed() const {
  for (const auto& row : observed) {
    if (std::find(row.begin(), row.end(), 0) != row.end()) return false;
  }
  return true;
}

Vec CurveDataset::gp_input(int m, int i) const {
  if (has_functional_covariates()) return x[static_cast<std::size_t>(m)].row(i).transpose();
  return Vec::Constant(1, times[static_cast<std::size_t>(i)]);
}

int CurveDataset::input_dim() const noexcept {
  return has_functional_covariates() ? static_cast<int>(x.front().cols()) : 1;
}

void CurveDataset::validate() const {
  const std::size_t n = times.size();
  const std::size_t m = curves.size();
  if (m < 1) throw Error(ErrorCode::EmptyInput, "dataset has no curves");
  if (n < 2) throw Error(ErrorCode::EmptyInput, "dataset needs at least two time points");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(times[i] > times[i - 1])) throw Error(ErrorCode::GridMismatch, "times must increase strictly");
  }
  if (times.front() < 0.0 || times.back() > 1.0) {
    throw Error(ErrorCode::OutOfRange, "times must lie in [0, 1]");
  }
  if (observed.size() != m) throw Error(ErrorCode::DimensionMismatch, "mask rows differ from curves");
  if (U.rows() != static_cast<Eigen::Index>(m) || U.cols() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "covariate matrix must be M x p with p >= 1");
  }
  if (!U.allFinite()) throw Error(ErrorCode::OutOfRange, "covariates must be finite");
  if (!batch.empty() && batch.size() != m) throw Error(ErrorCode::DimensionMismatch, "batch labels");
  if (!x.empty()) {
    if (x.size() != m) throw Error(ErrorCode::DimensionMismatch, "functional covariates per curve");
    for (const Mat& xm : x) {
      if (xm.rows() != static_cast<Eigen::Index>(n) || xm.cols() != x.front().cols() || xm.cols() < 1) {
        throw Error(ErrorCode::DimensionMismatch, "functional covariates must be N x Q");
      }
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (curves[c].size() != n || observed[c].size() != n) {
      throw Error(ErrorCode::GridMismatch, "curve " + std::to_string(c) + " is off the shared grid");
    }
    for (const Vec& p : curves[c]) manifold.check_point(p, 1e-9);
  }
}

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::WGPFR: return "wgpfr";
    case ModelKind::FLRM: return "flrm";
    case ModelKind::WGFmR: return "wgfmr";
  }
  return "unknown";
}

void FitConfig::validate() const {
  frechet.validate();
  if (basis.k_scalar < 1) throw Error(ErrorCode::ConfigInvalid, "K_scalar must be >= 1");
  if (gp.restarts < 1 || refine_restarts < 1) throw Error(ErrorCode::ConfigInvalid, "restarts >= 1");
  if (!(tol >= 0.0) || max_outer < 0 || !(step_size > 0.0) || max_halvings < 0) {
    throw Error(ErrorCode::ConfigInvalid, "refinement settings out of range");
  }
}

Vec WGPFRModel::curve_mean(int m, int i) const { return mean.predict_mean(U.row(m).transpose(), i); }

// ---------------------------------------------------------------------------

namespace {

PointGrid mean_grid(const MeanStructure& mean, const Mat& U, const CurveDataset& data) {
  PointGrid out(static_cast<std::size_t>(data.n_curves()));
  for (int m = 0; m < data.n_curves(); ++m) {
    const Vec u = U.row(m).transpose();
    auto& row = out[static_cast<std::size_t>(m)];
    row.reserve(static_cast<std::size_t>(data.n_times()));
    for (int i = 0; i < data.n_times(); ++i) row.push_back(mean.predict_mean(u, i));
  }
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

KernelHyperparams default_init(const Vec& z) {
  const double var = z.size() > 0 ? std::max(z.squaredNorm() / static_cast<double>(z.size()), 1e-8) : 1e-8;
  KernelHyperparams th;
  th.v0 = var;
  th.w0 = 1.0;
  th.a0 = 0.1 * var;
  th.a1 = 0.1 * var;
  th.sigma = std::max(0.1 * std::sqrt(var), 1e-5);
  return th.clamped();
}

template <class F>
void run_tasks(long count, Exec exec, F&& task) {
  if (exec == Exec::Serial) {
    for (long k = 0; k < count; ++k) task(k);
    return;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < count; ++k) {
    try {
      task(k);
    } catch (...) {
#pragma omp critical(wgpfr_model_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

Residuals covariance_residuals(const Manifold& manifold, const PointGrid& means, const CurveDataset& data) {
  Residuals tau(static_cast<std::size_t>(data.n_curves()));
  for (int m = 0; m < data.n_curves(); ++m) {
    const auto mi = static_cast<std::size_t>(m);
    Mat r = Mat::Zero(data.n_times(), manifold.ambient_dim());
    for (int i = 0; i < data.n_times(); ++i) {
      const auto ii = static_cast<std::size_t>(i);
      if (!data.observed[mi][ii]) continue;
      r.row(i) = manifold.log_map(means[mi][ii], data.curves[mi][ii]).transpose();
    }
    tau[mi] = std::move(r);
  }
  return tau;
}

Residuals covariance_residuals(const MeanStructure& mean, const CurveDataset& data) {
  return covariance_residuals(data.manifold, mean_grid(mean, data.U, data), data);
}

std::vector<CurveCovariance> fit_covariance(const Residuals& tau, const CurveDataset& data,
                                            const OptimizeConfig& gp,
                                            const std::vector<std::vector<KernelHyperparams>>* warm,
                                            Exec exec) {
  const int M = data.n_curves();
  const int d0 = data.manifold.ambient_dim();
  std::vector<CurveCovariance> cov(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    auto& c = cov[static_cast<std::size_t>(m)];
    for (int i = 0; i < data.n_times(); ++i) {
      if (data.observed[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]) c.time_index.push_back(i);
    }
    c.inputs.resize(static_cast<Eigen::Index>(c.time_index.size()), data.input_dim());
    for (std::size_t r = 0; r < c.time_index.size(); ++r) {
      c.inputs.row(static_cast<Eigen::Index>(r)) = data.gp_input(m, c.time_index[r]).transpose();
    }
  }

  // Fit results land in a flat table so the parallel loop never resizes.
  std::vector<std::optional<GPPosterior>> fitted(static_cast<std::size_t>(M) * d0);
  run_tasks(static_cast<long>(M) * d0, exec, [&](long k) {
    const int m = static_cast<int>(k / d0);
    const int d = static_cast<int>(k % d0);
    const auto& c = cov[static_cast<std::size_t>(m)];
    Vec z(static_cast<Eigen::Index>(c.time_index.size()));
    for (std::size_t r = 0; r < c.time_index.size(); ++r) {
      z[static_cast<Eigen::Index>(r)] = tau[static_cast<std::size_t>(m)](c.time_index[r], d);
    }
    const KernelHyperparams init = warm ? (*warm)[static_cast<std::size_t>(m)][static_cast<std::size_t>(d)]
                                        : default_init(z);
    KernelHyperparams theta = init;
    if (z.size() >= 2) {
      OptimizeConfig local = gp;
      // The seed depends on the curve only, so dimensions are interchangeable.
      local.seed = splitmix(gp.seed ^ splitmix(static_cast<std::uint64_t>(m)));
      theta = optimize_hyperparams(c.inputs, z, init, local).theta;
    }
    fitted[static_cast<std::size_t>(k)].emplace(c.inputs, z, theta);
  });

  for (int m = 0; m < M; ++m) {
    auto& dims = cov[static_cast<std::size_t>(m)].dims;
    dims.reserve(static_cast<std::size_t>(d0));
    for (int d = 0; d < d0; ++d) dims.push_back(std::move(*fitted[static_cast<std::size_t>(m) * d0 + d]));
  }
  return cov;
}

// ---------------------------------------------------------------------------

Residuals fitted_tangents(const WGPFRModel& model, const CurveDataset& data) {
  const int d0 = data.manifold.ambient_dim();
  Residuals out(static_cast<std::size_t>(data.n_curves()));
  for (int m = 0; m < data.n_curves(); ++m) {
    Mat t = Mat::Zero(data.n_times(), d0);
    if (model.has_covariance()) {
      const auto& c = model.cov[static_cast<std::size_t>(m)];
      for (int d = 0; d < d0; ++d) {
        const Vec mu = c.dims[static_cast<std::size_t>(d)].predict_mean(c.inputs);
        for (std::size_t r = 0; r < c.time_index.size(); ++r) {
          t(c.time_index[r], d) = mu[static_cast<Eigen::Index>(r)];
        }
      }
    }
    out[static_cast<std::size_t>(m)] = std::move(t);
  }
  return out;
}

double wgpfr_loss(const MeanStructure& mean, const Mat& U, const Residuals& tau_hat,
                  const CurveDataset& data) {
  const Manifold& mf = data.manifold;
  double total = 0.0;
  for (int m = 0; m < data.n_curves(); ++m) {
    const auto mi = static_cast<std::size_t>(m);
    const Vec u = U.row(m).transpose();
    for (int i = 0; i < data.n_times(); ++i) {
      if (!data.observed[mi][static_cast<std::size_t>(i)]) continue;
      const Vec mu = mean.predict_mean(u, i);
      const Vec fitted = mf.exp_map(mu, mf.tangent_project(mu, tau_hat[mi].row(i).transpose()));
      const double dist = mf.dist(fitted, data.curves[mi][static_cast<std::size_t>(i)]);
      total += dist * dist;
    }
  }
  return total;
}

double wgpfr_loss(const WGPFRModel& model, const CurveDataset& data) {
  return wgpfr_loss(model.mean, model.U, fitted_tangents(model, data), data);
}

RefineResult refine_mean_step(const WGPFRModel& model, const CurveDataset& data, const BSolver& solver,
                              double step_size, int max_halvings) {
  const Manifold& mf = data.manifold;
  const Residuals tau_hat = fitted_tangents(model, data);
  const double base_loss = wgpfr_loss(model.mean, model.U, tau_hat, data);
  const PointGrid means = mean_grid(model.mean, model.U, data);

  // Pullback of the data through the current fit, projected to T_{mu_m}.
  Residuals grad(static_cast<std::size_t>(data.n_curves()));
  for (int m = 0; m < data.n_curves(); ++m) {
    const auto mi = static_cast<std::size_t>(m);
    Mat g = Mat::Zero(data.n_times(), mf.ambient_dim());
    for (int i = 0; i < data.n_times(); ++i) {
      const auto ii = static_cast<std::size_t>(i);
      if (!data.observed[mi][ii]) continue;
      const Vec& mu = means[mi][ii];
      const Vec fitted = mf.exp_map(mu, mf.tangent_project(mu, tau_hat[mi].row(i).transpose()));
      g.row(i) = mf.tangent_project(mu, mf.log_map(fitted, data.curves[mi][ii])).transpose();
    }
    grad[mi] = std::move(g);
  }

  RefineResult out{model.mean, false, 0.0, base_loss};
  double step = step_size;
  for (int h = 0; h <= max_halvings; ++h, step *= 0.5) {
    PointGrid moved = means;
    for (int m = 0; m < data.n_curves(); ++m) {
      const auto mi = static_cast<std::size_t>(m);
      for (int i = 0; i < data.n_times(); ++i) {
        const auto ii = static_cast<std::size_t>(i);
        if (data.observed[mi][ii]) moved[mi][ii] = mf.exp_map(means[mi][ii], step * grad[mi].row(i).transpose());
      }
    }
    const Residuals V = log_residuals(mf, model.mean.mu0(), moved, &data.observed);
    MeanStructure candidate(model.mean.basis(), solver.solve(V).B);
    const double loss = wgpfr_loss(candidate, model.U, tau_hat, data);
    if (loss <= base_loss) {
      out = RefineResult{std::move(candidate), true, step, loss};
      return out;
    }
  }
  return out;
}

RefineResult refine_mean_step(const WGPFRModel& model, const CurveDataset& data, double step_size,
                              int max_halvings) {
  const BSolver solver(data.observed, model.U, model.mean.basis());
  return refine_mean_step(model, data, solver, step_size, max_halvings);
}

// ---------------------------------------------------------------------------

MeanStructure fit_mean_structure(const CurveDataset& data, const FitConfig& cfg) {
  const std::vector<Vec> mu0 = frechet_mean_grid(data.manifold, data.curves, &data.observed, cfg.frechet, cfg.exec);
  TangentBasis basis(data.manifold, data.times, mu0, cfg.basis);
  const BSolver solver(data.observed, data.U, basis, cfg.route);
  const Residuals V = log_residuals(data.manifold, mu0, data.curves, &data.observed);
  return MeanStructure(std::move(basis), solver.solve(V).B);
}

namespace {

std::vector<std::vector<KernelHyperparams>> thetas_of(const std::vector<CurveCovariance>& cov) {
  std::vector<std::vector<KernelHyperparams>> out;
  out.reserve(cov.size());
  for (const auto& c : cov) {
    auto& row = out.emplace_back();
    for (const auto& post : c.dims) row.push_back(post.theta());
  }
  return out;
}

}  // namespace

WGPFRModel fit(const CurveDataset& data, const FitConfig& cfg) {
  data.validate();
  cfg.validate();
  const Manifold& mf = data.manifold;
  const std::vector<Vec> mu0 = frechet_mean_grid(mf, data.curves, &data.observed, cfg.frechet, cfg.exec);
  TangentBasis basis(mf, data.times, mu0, cfg.basis);
  const BSolver solver(data.observed, data.U, basis, cfg.route);
  const Residuals V = log_residuals(mf, mu0, data.curves, &data.observed);

  WGPFRModel model{.kind = ModelKind::WGPFR, .mean = MeanStructure(std::move(basis), solver.solve(V).B), .U = data.U};
  model.cov = fit_covariance(covariance_residuals(model.mean, data), data, cfg.gp, nullptr, cfg.exec);
  double loss = wgpfr_loss(model, data);
  model.loss_trace.push_back(loss);

  OptimizeConfig warm_cfg = cfg.gp;
  warm_cfg.restarts = cfg.refine_restarts;
  for (int outer = 0; cfg.refine && outer < cfg.max_outer; ++outer) {
    RefineResult step = refine_mean_step(model, data, solver, cfg.step_size, cfg.max_halvings);
    if (!step.accepted) {
      model.converged = true;
      break;
    }
    const auto warm = thetas_of(model.cov);
    WGPFRModel next{.kind = ModelKind::WGPFR, .mean = std::move(step.mean), .U = data.U};
    next.cov = fit_covariance(covariance_residuals(next.mean, data), data, warm_cfg, &warm, cfg.exec);
    const double next_loss = wgpfr_loss(next, data);
    if (next_loss > loss) {
      // Re-optimized hyperparameters undid the gain: keep the previous model.
      model.converged = true;
      break;
    }
    const double change = std::abs(loss - next_loss) / std::max(loss, 1e-300);
    model.mean = std::move(next.mean);
    model.cov = std::move(next.cov);
    model.iterations_run += 1;
    model.loss_trace.push_back(next_loss);
    loss = next_loss;
    if (change < cfg.tol) {
      model.converged = true;
      break;
    }
  }
  model.final_loss = loss;
  return model;
}

WGPFRModel baseline_flrm(const CurveDataset& data, const FitConfig& cfg) {
  data.validate();
  cfg.validate();
  WGPFRModel model{.kind = ModelKind::FLRM, .mean = fit_mean_structure(data, cfg), .U = data.U};
  model.final_loss = wgpfr_loss(model, data);
  model.loss_trace.push_back(model.final_loss);
  model.converged = true;
  return model;
}

WGPFRModel baseline_wgfm(const CurveDataset& data, const FitConfig& cfg) {
  data.validate();
  cfg.validate();
  std::vector<Vec> pooled;
  for (int m = 0; m < data.n_curves(); ++m) {
    for (int i = 0; i < data.n_times(); ++i) {
      if (data.observed[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]) {
        pooled.push_back(data.curves[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]);
      }
    }
  }
  const Vec center = sample_frechet_mean(data.manifold, pooled, cfg.frechet).point;
  TangentBasis basis(data.manifold, data.times, std::vector<Vec>(data.times.size(), center), cfg.basis);
  const Mat B = Mat::Zero(data.U.cols(), basis.columns());
  WGPFRModel model{.kind = ModelKind::WGFmR, .mean = MeanStructure(std::move(basis), B), .U = data.U};
  model.cov = fit_covariance(covariance_residuals(model.mean, data), data, cfg.gp, nullptr, cfg.exec);
  model.final_loss = wgpfr_loss(model, data);
  model.loss_trace.push_back(model.final_loss);
  model.converged = true;
  return model;
}

// ---------------------------------------------------------------------------

PointPrediction predict(const WGPFRModel& model, const CurveDataset& data, int m, int i,
                        const std::optional<Vec>& xstar) {
  if (m < 0 || m >= static_cast<int>(model.U.rows()) || i < 0 || i >= data.n_times()) {
    throw Error(ErrorCode::OutOfRange, "curve or time index out of range");
  }
  const Manifold& mf = model.manifold();
  const int d0 = mf.ambient_dim();
  PointPrediction out;
  const Vec mu = model.curve_mean(m, i);
  out.variance = Vec::Zero(d0);
  if (!model.has_covariance()) {
    out.point = mu;
    return out;
  }
  const Vec x = xstar ? *xstar : data.gp_input(m, i);
  const Mat X = x.transpose();
  Vec tau(d0);
  const auto& c = model.cov[static_cast<std::size_t>(m)];
  for (int d = 0; d < d0; ++d) {
    const auto& post = c.dims[static_cast<std::size_t>(d)];
    tau[d] = post.predict_mean(X)[0];
    out.variance[d] = post.predict_variance(X)[0];
  }
  out.point = mf.exp_map(mu, mf.tangent_project(mu, tau));
  return out;
}

PointPrediction predict_new(const WGPFRModel& model, const Vec& u, int i, const Vec& xstar) {
  const int d0 = model.manifold().ambient_dim();
  PointPrediction out{model.mean.predict_mean(u, i), Vec::Zero(d0)};
  if (!model.has_covariance()) return out;
  for (const auto& c : model.cov) {
    for (int d = 0; d < d0; ++d) {
      out.variance[d] += kernel_eval(c.dims[static_cast<std::size_t>(d)].theta(), xstar, xstar, false);
    }
  }
  out.variance /= static_cast<double>(model.cov.size());
  return out;
}

}  // namespace wgpfr
