#include "wgpfr/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "wgpfr/flight.hpp"

namespace wgpfr {

std::optional<ScenarioKind> parse_scenario(std::string_view text) {
  if (text == "sphere") return ScenarioKind::Sphere;
  if (text == "shape") return ScenarioKind::Shape;
  if (text == "flight") return ScenarioKind::Flight;
  return std::nullopt;
}

std::optional<SplitType> parse_split(std::string_view text) {
  if (text == "type1") return SplitType::Type1;
  if (text == "type2") return SplitType::Type2;
  if (text == "type3") return SplitType::Type3;
  if (text == "short") return SplitType::Short;
  if (text == "long") return SplitType::Long;
  return std::nullopt;
}

const char* to_string(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::Sphere: return "sphere";
    case ScenarioKind::Shape: return "shape";
    case ScenarioKind::Flight: return "flight";
  }
  return "unknown";
}

const char* to_string(SplitType split) noexcept {
  switch (split) {
    case SplitType::Type1: return "type1";
    case SplitType::Type2: return "type2";
    case SplitType::Type3: return "type3";
    case SplitType::Short: return "short";
    case SplitType::Long: return "long";
  }
  return "unknown";
}

namespace {

std::vector<int> range(int lo, int hi) {
  std::vector<int> out;
  for (int i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

std::vector<int> complement(int n, const std::vector<int>& test) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (!std::binary_search(test.begin(), test.end(), i)) out.push_back(i);
  }
  return out;
}

std::vector<int> random_subset(int n, int k, std::uint64_t seed) {
  std::vector<int> idx = range(0, n);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

Split make_split(SplitType type, ScenarioKind kind, int n_times, int curve, std::uint64_t seed) {
  if (n_times < 3) throw Error(ErrorCode::ConfigInvalid, "splits need at least three time points");
  // At least two training points remain on the target curve.
  auto clamp_test = [&](int k) { return std::clamp(k, 1, n_times - 2); };
  const int half = n_times / 2;
  // Forecast splits train on the first half, never on fewer than two points.
  const int lead = std::max(half, 2);
  Split s;
  s.curve = curve;
  switch (type) {
    case SplitType::Type1: {
      int k = 0;
      if (kind == ScenarioKind::Sphere) k = 15;
      else if (kind == ScenarioKind::Shape) k = static_cast<int>(std::lround(0.2 * n_times));
      else k = n_times - half;
      s.test = random_subset(n_times, clamp_test(k), seed);
      s.train = complement(n_times, s.test);
      break;
    }
    case SplitType::Type2:
    case SplitType::Type3: {
      int k = 0;
      if (kind == ScenarioKind::Sphere) k = type == SplitType::Type2 ? 5 : 15;
      else if (type == SplitType::Type2) k = n_times - half;
      else k = static_cast<int>(std::lround(0.3 * n_times));
      k = clamp_test(k);
      s.test = range(n_times - k, n_times);
      s.train = range(0, n_times - k);
      break;
    }
    case SplitType::Short: {
      const int k = std::max(1, static_cast<int>(std::lround(0.1 * n_times)));
      s.train = range(0, lead);
      s.test = range(lead, std::min(n_times, lead + k));
      break;
    }
    case SplitType::Long:
      s.train = range(0, lead);
      s.test = range(lead, n_times);
      break;
  }
  return s;
}

CurveDataset apply_split(const CurveDataset& data, const Split& split) {
  if (split.curve < 0 || split.curve >= data.n_curves()) throw Error(ErrorCode::OutOfRange, "split curve");
  CurveDataset out = data;
  auto& row = out.observed[static_cast<std::size_t>(split.curve)];
  std::fill(row.begin(), row.end(), 0);
  for (int i : split.train) {
    if (i < 0 || i >= data.n_times()) throw Error(ErrorCode::OutOfRange, "split index");
    row[static_cast<std::size_t>(i)] = data.observed[static_cast<std::size_t>(split.curve)][static_cast<std::size_t>(i)];
  }
  return out;
}

SimulatedData simulate(const ScenarioConfig& scn) {
  if (scn.curves < 2) throw Error(ErrorCode::ConfigInvalid, "scenarios need at least two curves");
  switch (scn.kind) {
    case ScenarioKind::Sphere: {
      SphereScenario s;
      s.m1 = scn.curves / 2;
      s.m2 = scn.curves - s.m1;
      s.n_points = scn.points;
      s.seed = scn.seed;
      return generate_sphere_dataset(s);
    }
    case ScenarioKind::Shape: {
      ShapeScenario s;
      s.curves_per_batch = scn.curves / 2;
      s.n_points = scn.points;
      s.seed = scn.seed;
      return generate_shape_dataset(s);
    }
    case ScenarioKind::Flight: {
      SyntheticFlightConfig f;
      f.flights_per_carrier = scn.curves / 2;
      f.records = 6 * scn.points;
      f.seed = scn.seed;
      SimulatedData sim;
      sim.data = flights_to_dataset(synthetic_flights(f), default_carriers());
      return sim;
    }
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown scenario");
}

int target_curve(const ScenarioConfig& scn, const CurveDataset& data) {
  if (scn.kind == ScenarioKind::Sphere) {
    std::mt19937_64 rng(derive_seed(scn.seed, 0x7a72));
    return static_cast<int>(rng() % static_cast<std::uint64_t>(data.n_curves()));
  }
  return data.n_curves() - 1;
}

FitConfig scenario_fit_config(const ScenarioConfig& scn) {
  FitConfig cfg;
  switch (scn.kind) {
    case ScenarioKind::Sphere:
      cfg.basis.k_scalar = 21;
      cfg.gp.restarts = 3;
      break;
    case ScenarioKind::Shape:
      cfg.basis.k_scalar = scn.points + 1;
      cfg.gp.restarts = 2;
      break;
    case ScenarioKind::Flight:
      cfg.basis.k_scalar = 5;
      cfg.gp.restarts = 3;
      break;
  }
  cfg.gp.seed = derive_seed(scn.seed, 0x6770);
  return cfg;
}

namespace {

WGPFRModel fit_kind(ModelKind kind, const CurveDataset& data, const FitConfig& cfg) {
  switch (kind) {
    case ModelKind::WGPFR: return fit(data, cfg);
    case ModelKind::FLRM: return baseline_flrm(data, cfg);
    case ModelKind::WGFmR: return baseline_wgfm(data, cfg);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown model kind");
}

Replication score_split(const ScenarioConfig& scn, const SimulatedData& sim, SplitType type, const FitConfig& cfg,
                        const std::vector<ModelKind>& kinds) {
  Replication rep;
  rep.seed = scn.seed;
  const int target = target_curve(scn, sim.data);
  rep.split = make_split(type, scn.kind, sim.data.n_times(), target, derive_seed(scn.seed, 0x5b17));
  const CurveDataset train = apply_split(sim.data, rep.split);
  std::vector<Vec> truth;
  for (int i : rep.split.test) truth.push_back(sim.data.curves[static_cast<std::size_t>(target)][static_cast<std::size_t>(i)]);
  for (ModelKind kind : kinds) {
    const WGPFRModel model = fit_kind(kind, train, cfg);
    rep.scores.push_back({kind, evaluate_predictions(model, train, target, rep.split.test, truth), model.loss_trace});
  }
  return rep;
}

}  // namespace

Replication run_replication(const ScenarioConfig& scn, SplitType split, const FitConfig& cfg,
                            const std::vector<ModelKind>& kinds) {
  return score_split(scn, simulate(scn), split, cfg, kinds);
}

std::vector<Replication> run_replication_splits(const ScenarioConfig& scn, const std::vector<SplitType>& splits,
                                                const FitConfig& cfg, const std::vector<ModelKind>& kinds) {
  const SimulatedData sim = simulate(scn);
  std::vector<Replication> out;
  for (SplitType s : splits) out.push_back(score_split(scn, sim, s, cfg, kinds));
  return out;
}

double sphere_beta_rmse(const MeanStructure& mean, int eval_points) {
  if (mean.covariate_dim() != 2 || !mean.manifold().is_sphere()) {
    throw Error(ErrorCode::DimensionMismatch, "beta recovery needs the two-covariate sphere model");
  }
  double sum = 0.0;
  for (int k = 0; k < eval_points; ++k) {
    const double t = static_cast<double>(k) / (eval_points - 1);
    for (int j = 0; j < 2; ++j) {
      const Vec est = mean.basis().field_at(t, mean.B().row(j).transpose());
      sum += (est - sphere_beta(j + 1, t)).squaredNorm();
    }
  }
  return std::sqrt(sum / (2.0 * eval_points));
}

// ---------------------------------------------------------------------------

namespace {

struct Accumulator {
  double rmse = 0.0;
  double lppd = 0.0;
  double dfd = 0.0;
  double beta = 0.0;
  int n_test = 0;
  int count = 0;

  void add(const EvalReport& r) {
    rmse += r.rmse;
    lppd += r.lppd;
    dfd += r.dfd;
    n_test = r.n_test;
    ++count;
  }
};

TableRow finish(const std::string& table, const std::string& setting, ModelKind kind, const Accumulator& a) {
  const double n = std::max(a.count, 1);
  return {table, setting, kind, a.rmse / n, a.lppd / n, a.dfd / n, a.beta / n, a.n_test, a.count};
}

const std::vector<ModelKind> kAllModels{ModelKind::WGPFR, ModelKind::FLRM, ModelKind::WGFmR};

std::vector<TableRow> prediction_table(const std::string& table, ScenarioConfig base,
                                       const std::vector<SplitType>& splits, int reps) {
  std::vector<std::vector<Accumulator>> acc(splits.size(), std::vector<Accumulator>(kAllModels.size()));
  const std::uint64_t root = base.seed;
  for (int r = 0; r < reps; ++r) {
    ScenarioConfig scn = base;
    scn.seed = derive_seed(root, static_cast<std::uint64_t>(r));
    const FitConfig cfg = scenario_fit_config(scn);
    const auto results = run_replication_splits(scn, splits, cfg, kAllModels);
    for (std::size_t s = 0; s < splits.size(); ++s) {
      for (std::size_t k = 0; k < kAllModels.size(); ++k) acc[s][k].add(results[s].scores[k].report);
    }
  }
  std::vector<TableRow> rows;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (std::size_t k = 0; k < kAllModels.size(); ++k) {
      rows.push_back(finish(table, to_string(splits[s]), kAllModels[k], acc[s][k]));
    }
  }
  return rows;
}

}  // namespace

std::vector<TableRow> reproduce(const ReproduceConfig& cfg) {
  if (cfg.replications < 1) throw Error(ErrorCode::ConfigInvalid, "replications must be >= 1");
  auto pick = [](int requested, int fallback) { return requested > 0 ? requested : fallback; };

  if (cfg.table == "table1") {
    const ScenarioConfig base{ScenarioKind::Sphere, pick(cfg.curves, 30), pick(cfg.points, 20), cfg.seed};
    return prediction_table("table1", base, {SplitType::Type1, SplitType::Type2, SplitType::Type3},
                            cfg.replications);
  }
  if (cfg.table == "table3") {
    const ScenarioConfig base{ScenarioKind::Shape, pick(cfg.curves, 10), pick(cfg.points, 20), cfg.seed};
    return prediction_table("table3", base, {SplitType::Type1, SplitType::Type2, SplitType::Type3},
                            cfg.replications);
  }
  if (cfg.table == "table6") {
    const ScenarioConfig base{ScenarioKind::Flight, pick(cfg.curves, 8), pick(cfg.points, 100), cfg.seed};
    return prediction_table("table6", base, {SplitType::Short, SplitType::Long}, cfg.replications);
  }
  if (cfg.table == "table2") {
    std::vector<TableRow> rows;
    const std::vector<int> sizes = cfg.points > 0 ? std::vector<int>{cfg.points} : std::vector<int>{20, 60};
    for (int n : sizes) {
      Accumulator acc;
      for (int r = 0; r < cfg.replications; ++r) {
        ScenarioConfig scn{ScenarioKind::Sphere, pick(cfg.curves, 30), n, derive_seed(cfg.seed, static_cast<std::uint64_t>(r))};
        const FitConfig fit_cfg = scenario_fit_config(scn);
        const SimulatedData sim = simulate(scn);
        acc.beta += sphere_beta_rmse(fit_mean_structure(sim.data, fit_cfg));
        acc.add(score_split(scn, sim, SplitType::Type1, fit_cfg, {ModelKind::WGPFR}).scores.front().report);
      }
      rows.push_back(finish("table2", "N=" + std::to_string(n), ModelKind::WGPFR, acc));
    }
    return rows;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown table '" + cfg.table + "'");
}

}  // namespace wgpfr
