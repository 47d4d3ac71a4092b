#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wgpfr/experiment.hpp"
#include "wgpfr/flight.hpp"
#include "wgpfr/metrics.hpp"
#include "wgpfr/model.hpp"

namespace wgpfr::io {

inline constexpr int kSchemaVersion = 1;

/// %.17g formatting; parses back to the identical double.
std::string format_double(double v);

/// Header `batch,curve,time,covariate_u_1..p,x_1..Q,coord_1..d0`, one row per
/// observed (curve, time). Unobserved entries are omitted.
void write_dataset_csv(std::ostream& out, const CurveDataset& data);
void write_dataset_csv(const std::filesystem::path& path, const CurveDataset& data);
/// Rebuilds the shared grid from the union of times; entries without a row
/// become unobserved (holding a copy of the curve's first observed point).
CurveDataset read_dataset_csv(std::istream& in, const Manifold& manifold);
CurveDataset read_dataset_csv(const std::filesystem::path& path, const Manifold& manifold);

struct Manifest {
  Manifold manifold = Manifold::sphere(3);
  std::string scenario;
  std::uint64_t seed = 0;
  int n_curves = 0;
  int n_times = 0;
  int covariate_dim = 0;
  int functional_dim = 0;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);
Manifest make_manifest(const CurveDataset& data, const std::string& scenario, std::uint64_t seed);
std::string manifold_name(const Manifold& m);
Manifold parse_manifold(const std::string& name, int ambient_dim);

/// A fitted model plus the split it was trained under.
struct StoredModel {
  WGPFRModel model;
  std::vector<double> times;
  std::optional<Split> split;
};

std::string model_to_json(const StoredModel& stored);
StoredModel model_from_json(const std::string& text);
void write_model(const std::filesystem::path& path, const StoredModel& stored);
StoredModel read_model(const std::filesystem::path& path);

struct PredictionRow {
  int curve = 0;
  int time_index = 0;
  double time = 0.0;
  PointPrediction prediction;
};

void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);

/// {"rmse", "lppd", "dfd", "n_test"}; non-finite values become null.
std::string report_to_json(const EvalReport& report);
std::string rows_to_json(const std::vector<TableRow>& rows);

/// Columns flight_id,carrier,timestamp,longitude,latitude.
void write_flights_csv(const std::filesystem::path& path, const std::vector<Flight>& flights);
std::vector<Flight> read_flights_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace wgpfr::io
