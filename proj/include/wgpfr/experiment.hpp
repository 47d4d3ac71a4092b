#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wgpfr/metrics.hpp"
#include "wgpfr/simgen.hpp"

namespace wgpfr {

enum class ScenarioKind { Sphere, Shape, Flight };
enum class SplitType { Type1, Type2, Type3, Short, Long };

std::optional<ScenarioKind> parse_scenario(std::string_view text);
std::optional<SplitType> parse_split(std::string_view text);
const char* to_string(ScenarioKind kind) noexcept;
const char* to_string(SplitType split) noexcept;

/// Held-out layout of one target curve. Indices of the target outside both
/// lists are dropped entirely.
struct Split {
  int curve = 0;
  std::vector<int> train;
  std::vector<int> test;
};

/// Scenario-specific protocol:
///   sphere  type1 15 random, type2 last 5, type3 last 15 (clamped for small N);
///   shape   type1 20% random, type2 second half, type3 last 30%;
///   flight  type1 half random, type2 second half, short the next 10% after
///           the first half, long the whole second half (both trained on the
///           first half only).
Split make_split(SplitType type, ScenarioKind kind, int n_times, int curve, std::uint64_t seed);
/// Copy of the dataset with the split's non-training entries unobserved.
CurveDataset apply_split(const CurveDataset& data, const Split& split);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Sphere;
  /// Total curves; split evenly over two batches (flights: per carrier x 2).
  int curves = 30;
  int points = 20;
  std::uint64_t seed = 0;
};

SimulatedData simulate(const ScenarioConfig& scn);
/// The curve whose points are held out.
int target_curve(const ScenarioConfig& scn, const CurveDataset& data);
/// Library defaults adjusted per scenario (basis size, optimizer starts).
FitConfig scenario_fit_config(const ScenarioConfig& scn);

struct ModelScore {
  ModelKind kind = ModelKind::WGPFR;
  EvalReport report;
  std::vector<double> loss_trace;
};

struct Replication {
  std::uint64_t seed = 0;
  Split split;
  std::vector<ModelScore> scores;
};

/// Simulate, hold out, fit each model kind and score it on the held-out points.
Replication run_replication(const ScenarioConfig& scn, SplitType split, const FitConfig& cfg,
                            const std::vector<ModelKind>& kinds);
/// Several splits sharing one simulated dataset per replication.
std::vector<Replication> run_replication_splits(const ScenarioConfig& scn, const std::vector<SplitType>& splits,
                                                const FitConfig& cfg, const std::vector<ModelKind>& kinds);

/// sqrt of the mean over j and a dense time grid of |beta_hat_j(t) - beta_j(t)|^2
/// for the sphere generator's slope functions.
double sphere_beta_rmse(const MeanStructure& mean, int eval_points = 201);

struct TableRow {
  std::string table;
  std::string setting;
  ModelKind model = ModelKind::WGPFR;
  double rmse = 0.0;
  double lppd = 0.0;
  double dfd = 0.0;
  double beta_rmse = 0.0;
  int n_test = 0;
  int replications = 0;
};

struct ReproduceConfig {
  std::string table = "table1";
  int replications = 20;
  std::uint64_t seed = 0;
  /// 0 keeps the table's own size.
  int curves = 0;
  int points = 0;
};

/// Named scaled experiments: table1 (sphere prediction types), table2 (beta
/// recovery as N grows), table3 (shape prediction types), table6 (flight
/// short and long forecasts).
std::vector<TableRow> reproduce(const ReproduceConfig& cfg);

}  // namespace wgpfr
