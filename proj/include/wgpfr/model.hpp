#pragma once

#include <optional>
#include <vector>

#include "wgpfr/basis_regression.hpp"
#include "wgpfr/frechet.hpp"
#include "wgpfr/gp.hpp"
#include "wgpfr/parallel.hpp"

namespace wgpfr {

/// M curves on a shared time grid. Entries with observed[m][i] == 0 are
/// held out: they take no part in fitting and their coordinates may hold
/// anything valid (typically the ground truth kept for evaluation).
struct CurveDataset {
  Manifold manifold = Manifold::sphere(3);
  std::vector<double> times;
  PointGrid curves;
  Mask observed;
  /// M x p scalar covariates.
  Mat U;
  /// Batch label per curve. Informational only.
  std::vector<int> batch;
  /// Optional functional covariates: x[m] is N x Q.
  std::vector<Mat> x;

  int n_curves() const noexcept { return static_cast<int>(curves.size()); }
  int n_times() const noexcept { return static_cast<int>(times.size()); }
  bool has_functional_covariates() const noexcept { return !x.empty(); }
  bool fully_observed() const;
  /// GP input for curve m at index i: x_m(t_i) when present, else t_i.
  Vec gp_input(int m, int i) const;
  int input_dim() const noexcept;

  /// Checks the invariants; throws on the first violation.
  void validate() const;
};

enum class ModelKind { WGPFR, FLRM, WGFmR };
const char* to_string(ModelKind kind) noexcept;

struct FitConfig {
  BasisSystem basis{};
  FrechetConfig frechet{};
  LstsqRoute route = LstsqRoute::Auto;
  /// Starts for the first GP fit; seed is mixed with the curve index.
  OptimizeConfig gp{};
  /// Starts when hyperparameters are re-optimized during refinement, warm
  /// started from the previous values.
  int refine_restarts = 1;
  bool refine = true;
  double tol = 1e-6;
  int max_outer = 20;
  double step_size = 1.0;
  int max_halvings = 10;
  Exec exec = Exec::Parallel;

  void validate() const;
};

/// Per-curve GP records, one posterior per ambient tangent coordinate.
struct CurveCovariance {
  std::vector<int> time_index;
  Mat inputs;
  std::vector<GPPosterior> dims;
};

struct WGPFRModel {
  ModelKind kind = ModelKind::WGPFR;
  MeanStructure mean;
  Mat U;
  /// Empty for FLRM.
  std::vector<CurveCovariance> cov{};
  int iterations_run = 0;
  bool converged = false;
  double final_loss = 0.0;
  /// Loss after the initial fit and after every accepted outer iteration.
  std::vector<double> loss_trace{};

  bool has_covariance() const noexcept { return !cov.empty(); }
  const Manifold& manifold() const noexcept { return mean.manifold(); }
  /// mu_m(t_i) from the mean structure.
  Vec curve_mean(int m, int i) const;
};

/// Log(mu_m(t_i), y_m(t_i)) at observed entries, zero elsewhere.
Residuals covariance_residuals(const MeanStructure& mean, const CurveDataset& data);
/// Same, with an explicit grid of mean points.
Residuals covariance_residuals(const Manifold& manifold, const PointGrid& means, const CurveDataset& data);

/// Per-(m, d) GP fits on the residuals. `warm` supplies initial
/// hyperparameters [m][d] (the default initializer is data driven).
std::vector<CurveCovariance> fit_covariance(const Residuals& tau, const CurveDataset& data,
                                            const OptimizeConfig& gp,
                                            const std::vector<std::vector<KernelHyperparams>>* warm,
                                            Exec exec);

/// The mean structure alone: Frechet mean curve plus least squares B.
MeanStructure fit_mean_structure(const CurveDataset& data, const FitConfig& cfg);

WGPFRModel fit(const CurveDataset& data, const FitConfig& cfg = {});
WGPFRModel baseline_flrm(const CurveDataset& data, const FitConfig& cfg = {});
WGPFRModel baseline_wgfm(const CurveDataset& data, const FitConfig& cfg = {});

/// GP posterior means tau_hat(m, i) at the training inputs of every curve,
/// zero where no covariance structure exists.
Residuals fitted_tangents(const WGPFRModel& model, const CurveDataset& data);

/// sum over observed entries of d(Exp(mu_m(t_i), tau_hat_m(t_i)), y_m(t_i))^2.
double wgpfr_loss(const WGPFRModel& model, const CurveDataset& data);
double wgpfr_loss(const MeanStructure& mean, const Mat& U, const Residuals& tau_hat,
                  const CurveDataset& data);

struct RefineResult {
  MeanStructure mean;
  bool accepted = false;
  double step = 0.0;
  double loss = 0.0;
};

/// One pullback descent step on the means followed by a refit of B; returns
/// the unchanged mean structure when no halving lowers the loss.
RefineResult refine_mean_step(const WGPFRModel& model, const CurveDataset& data, const BSolver& solver,
                              double step_size, int max_halvings = 10);
RefineResult refine_mean_step(const WGPFRModel& model, const CurveDataset& data, double step_size,
                              int max_halvings = 10);

struct PointPrediction {
  Vec point;
  /// Latent posterior variance per ambient tangent coordinate.
  Vec variance;
};

/// Prediction for training curve m at grid index i. xstar defaults to the
/// curve's GP input at i.
PointPrediction predict(const WGPFRModel& model, const CurveDataset& data, int m, int i,
                        const std::optional<Vec>& xstar = std::nullopt);
/// Prediction for a curve with no residual history: the mean structure, with
/// variances from the prior averaged over the fitted curves.
PointPrediction predict_new(const WGPFRModel& model, const Vec& u, int i, const Vec& xstar);

}  // namespace wgpfr
