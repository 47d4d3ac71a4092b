// Command-line front end: simulate, ingest, fit, predict, evaluate, reproduce.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "wgpfr/experiment.hpp"
#include "wgpfr/flight.hpp"
#include "wgpfr/io.hpp"

namespace fs = std::filesystem;
using namespace wgpfr;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string scenario = "sphere";
  int curves = 0;
  int points = 0;
  std::string split = "type1";
  std::string out = ".";
  std::string dataset;
  std::string model;
  std::string manifold;
  std::string kind = "wgpfr";
  std::string table = "table1";
  std::string flights;
  int reps = 0;
  int k_scalar = 0;
  int restarts = 0;
  double tol = 0.0;
  int max_outer = 0;
  double bandwidth = 0.01;
  int subsample = 6;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

// Values from --config fill in every option the command line left unset.
void apply_config(CLI::App& app, Options& o) {
  if (o.config.empty()) return;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(o.config));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "config must be a JSON object");
  auto unset = [&](const char* flag) {
    for (CLI::App* sub : app.get_subcommands()) {
      if (const CLI::Option* opt = sub->get_option_no_throw(flag); opt && opt->count() > 0) return false;
    }
    return true;
  };
  try {
    auto take = [&](const char* key, const char* flag, auto& target) {
      if (j.contains(key) && unset(flag)) target = j.at(key).get<std::decay_t<decltype(target)>>();
    };
    take("seed", "--seed", o.seed);
    take("scenario", "--scenario", o.scenario);
    take("curves", "--curves", o.curves);
    take("points", "--points", o.points);
    take("split", "--split", o.split);
    take("out", "--out", o.out);
    take("dataset", "--dataset", o.dataset);
    take("model", "--model", o.model);
    take("manifold", "--manifold", o.manifold);
    take("kind", "--kind", o.kind);
    take("table", "--table", o.table);
    take("reps", "--reps", o.reps);
    take("k_scalar", "--k-scalar", o.k_scalar);
    take("restarts", "--restarts", o.restarts);
    take("tol", "--tol", o.tol);
    take("max_outer", "--max-outer", o.max_outer);
    take("bandwidth", "--bandwidth", o.bandwidth);
    take("subsample", "--subsample", o.subsample);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("config: ") + e.what());
  }
}

ScenarioKind scenario_of(const std::string& name) {
  const auto kind = parse_scenario(name);
  if (!kind) fail(ErrorCode::ConfigInvalid, "unknown scenario '" + name + "'");
  return *kind;
}

SplitType split_of(const std::string& name) {
  const auto s = parse_split(name);
  if (!s) fail(ErrorCode::ConfigInvalid, "unknown split '" + name + "'");
  return *s;
}

ModelKind kind_of(const std::string& name) {
  if (name == "wgpfr") return ModelKind::WGPFR;
  if (name == "flrm") return ModelKind::FLRM;
  if (name == "wgfmr") return ModelKind::WGFmR;
  fail(ErrorCode::ConfigInvalid, "unknown model kind '" + name + "'");
}

int default_curves(ScenarioKind k) { return k == ScenarioKind::Sphere ? 30 : k == ScenarioKind::Shape ? 10 : 8; }
int default_points(ScenarioKind k) { return k == ScenarioKind::Flight ? 100 : 20; }

struct LoadedData {
  CurveDataset data;
  std::optional<io::Manifest> manifest;
};

// The manifest next to the dataset names the manifold; --manifold overrides it.
LoadedData load_dataset(const Options& o) {
  if (o.dataset.empty()) fail(ErrorCode::ConfigInvalid, "--dataset is required");
  const fs::path path(o.dataset);
  if (!fs::exists(path)) fail(ErrorCode::FileNotFound, "dataset not found: " + o.dataset);
  LoadedData out;
  const fs::path manifest_path = path.parent_path() / "manifest.json";
  if (fs::exists(manifest_path)) out.manifest = io::read_manifest(manifest_path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  int coords = 0;
  for (std::size_t pos = header.find("coord_"); pos != std::string::npos; pos = header.find("coord_", pos + 1)) ++coords;
  Manifold manifold = Manifold::sphere(3);
  if (!o.manifold.empty()) {
    manifold = io::parse_manifold(o.manifold, coords);
  } else if (out.manifest) {
    manifold = out.manifest->manifold;
  } else {
    manifold = io::parse_manifold("sphere", coords);
  }
  out.data = io::read_dataset_csv(path, manifold);
  return out;
}

ScenarioConfig scenario_from(const Options& o, const LoadedData& d) {
  ScenarioConfig scn;
  scn.kind = d.manifest && !d.manifest->scenario.empty() ? scenario_of(d.manifest->scenario)
             : d.data.manifold.is_sphere()                ? ScenarioKind::Sphere
                                                          : ScenarioKind::Shape;
  scn.seed = d.manifest ? d.manifest->seed : o.seed;
  scn.curves = d.data.n_curves();
  scn.points = d.data.n_times();
  return scn;
}

FitConfig fit_config_from(const Options& o, const ScenarioConfig& scn) {
  FitConfig cfg = scenario_fit_config(scn);
  if (o.k_scalar > 0) cfg.basis.k_scalar = o.k_scalar;
  if (o.restarts > 0) cfg.gp.restarts = o.restarts;
  if (o.tol > 0.0) cfg.tol = o.tol;
  if (o.max_outer > 0) cfg.max_outer = o.max_outer;
  cfg.validate();
  return cfg;
}

void write_dataset_bundle(const fs::path& dir, const CurveDataset& data, const std::string& scenario,
                          std::uint64_t seed) {
  io::write_dataset_csv(dir / "dataset.csv", data);
  io::write_manifest(dir / "manifest.json", io::make_manifest(data, scenario, seed));
}

void cmd_simulate(const Options& o) {
  const ScenarioKind kind = scenario_of(o.scenario);
  ScenarioConfig scn{kind, o.curves > 0 ? o.curves : default_curves(kind), o.points > 0 ? o.points : default_points(kind),
                     o.seed};
  const fs::path dir(o.out);
  if (kind == ScenarioKind::Flight) {
    // Raw records are kept alongside so `ingest` can be exercised on them.
    SyntheticFlightConfig f{scn.curves / 2, 6 * scn.points, scn.seed};
    const auto flights = synthetic_flights(f);
    io::write_flights_csv(dir / "flights.csv", flights);
    write_dataset_bundle(dir, flights_to_dataset(flights, default_carriers(), o.bandwidth, o.subsample), "flight",
                         o.seed);
  } else {
    write_dataset_bundle(dir, simulate(scn).data, to_string(kind), o.seed);
  }
  std::cout << (dir / "dataset.csv").string() << '\n';
}

void cmd_ingest(const Options& o) {
  if (o.flights.empty()) fail(ErrorCode::ConfigInvalid, "--flights is required");
  if (!fs::exists(o.flights)) fail(ErrorCode::FileNotFound, "flights file not found: " + o.flights);
  const auto flights = io::read_flights_csv(o.flights);
  const fs::path dir(o.out);
  write_dataset_bundle(dir, flights_to_dataset(flights, default_carriers(), o.bandwidth, o.subsample), "flight",
                       o.seed);
  std::cout << (dir / "dataset.csv").string() << '\n';
}

void cmd_fit(const Options& o) {
  const LoadedData d = load_dataset(o);
  const ScenarioConfig scn = scenario_from(o, d);
  const FitConfig cfg = fit_config_from(o, scn);
  const Split split = make_split(split_of(o.split), scn.kind, d.data.n_times(), target_curve(scn, d.data),
                                 derive_seed(scn.seed, 0x5b17));
  const CurveDataset train = apply_split(d.data, split);
  io::StoredModel stored{[&] {
                           switch (kind_of(o.kind)) {
                             case ModelKind::FLRM: return baseline_flrm(train, cfg);
                             case ModelKind::WGFmR: return baseline_wgfm(train, cfg);
                             default: return fit(train, cfg);
                           }
                         }(),
                         train.times, split};
  const fs::path path = fs::path(o.out) / "model.json";
  io::write_model(path, stored);
  std::cout << path.string() << '\n';
}

struct Scored {
  io::StoredModel stored;
  LoadedData data;
  CurveDataset train;
  Split split;
};

Scored load_scored(const Options& o) {
  if (o.model.empty()) fail(ErrorCode::ConfigInvalid, "--model is required");
  if (!fs::exists(o.model)) fail(ErrorCode::FileNotFound, "model not found: " + o.model);
  Scored s{io::read_model(o.model), load_dataset(o), {}, {}};
  if (s.stored.times != s.data.data.times) fail(ErrorCode::SchemaViolation, "dataset grid differs from the model's");
  if (!s.stored.split) fail(ErrorCode::SchemaViolation, "model has no recorded split");
  s.split = *s.stored.split;
  s.train = apply_split(s.data.data, s.split);
  return s;
}

void cmd_predict(const Options& o) {
  const Scored s = load_scored(o);
  std::vector<io::PredictionRow> rows;
  for (int i : s.split.test) {
    rows.push_back({s.split.curve, i, s.train.times[static_cast<std::size_t>(i)],
                    predict(s.stored.model, s.train, s.split.curve, i)});
  }
  const fs::path path = fs::path(o.out) / "predictions.csv";
  io::write_predictions_csv(path, rows);
  std::cout << path.string() << '\n';
}

void cmd_evaluate(const Options& o) {
  const Scored s = load_scored(o);
  std::vector<Vec> truth;
  for (int i : s.split.test) {
    truth.push_back(s.data.data.curves[static_cast<std::size_t>(s.split.curve)][static_cast<std::size_t>(i)]);
  }
  const EvalReport report = evaluate_predictions(s.stored.model, s.train, s.split.curve, s.split.test, truth);
  const fs::path path = fs::path(o.out) / "report.json";
  io::write_text(path, io::report_to_json(report));
  std::cout << io::report_to_json(report);
}

void cmd_reproduce(const Options& o) {
  ReproduceConfig cfg;
  cfg.table = o.table;
  if (o.reps > 0) cfg.replications = o.reps;
  cfg.seed = o.seed;
  cfg.curves = o.curves;
  cfg.points = o.points;
  const auto rows = reproduce(cfg);
  const std::string json = io::rows_to_json(rows);
  io::write_text(fs::path(o.out) / "report.json", json);
  std::printf("%-8s %-10s %-6s %12s %12s %12s %12s\n", "table", "setting", "model", "rmse", "lppd", "dfd", "beta_rmse");
  for (const TableRow& r : rows) {
    std::printf("%-8s %-10s %-6s %12.6f %12.4f %12.6f %12.6f\n", r.table.c_str(), r.setting.c_str(),
                to_string(r.model), r.rmse, r.lppd, r.dfd, r.beta_rmse);
  }
}

void report_error(std::string_view code, const std::string& message) {
  nlohmann::json j{{"error", std::string(code)}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wrapped Gaussian process functional regression on manifolds"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON file of option values");
    sub->add_option("--seed", o.seed, "64-bit seed");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto data_opts = [&](CLI::App* sub) {
    sub->add_option("--dataset", o.dataset, "Dataset CSV");
    sub->add_option("--manifold", o.manifold, "sphere|kendall (default: manifest or sphere)");
  };

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Generate a scenario dataset");
  common(simulate_cmd);
  simulate_cmd->add_option("--scenario", o.scenario, "sphere|shape|flight");
  simulate_cmd->add_option("--curves", o.curves, "Number of curves");
  simulate_cmd->add_option("--points", o.points, "Points per curve");
  simulate_cmd->add_option("--bandwidth", o.bandwidth, "Flight smoothing bandwidth");
  simulate_cmd->add_option("--subsample", o.subsample, "Flight subsampling step");

  CLI::App* ingest_cmd = app.add_subcommand("ingest", "Convert flight records to a dataset");
  common(ingest_cmd);
  ingest_cmd->add_option("--flights", o.flights, "CSV flight_id,carrier,timestamp,longitude,latitude");
  ingest_cmd->add_option("--bandwidth", o.bandwidth, "Smoothing bandwidth in normalized time");
  ingest_cmd->add_option("--subsample", o.subsample, "Keep every n-th smoothed record");

  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model under a held-out split");
  common(fit_cmd);
  data_opts(fit_cmd);
  fit_cmd->add_option("--split", o.split, "type1|type2|type3|short|long");
  fit_cmd->add_option("--kind", o.kind, "wgpfr|flrm|wgfmr");
  fit_cmd->add_option("--k-scalar", o.k_scalar, "Scalar basis size");
  fit_cmd->add_option("--restarts", o.restarts, "GP optimizer starts");
  fit_cmd->add_option("--tol", o.tol, "Relative loss tolerance for refinement");
  fit_cmd->add_option("--max-outer", o.max_outer, "Refinement iteration cap");

  CLI::App* predict_cmd = app.add_subcommand("predict", "Predict the held-out points of a fitted model");
  common(predict_cmd);
  data_opts(predict_cmd);
  predict_cmd->add_option("--model", o.model, "Model JSON");

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Score the held-out points of a fitted model");
  common(evaluate_cmd);
  data_opts(evaluate_cmd);
  evaluate_cmd->add_option("--model", o.model, "Model JSON");

  CLI::App* reproduce_cmd = app.add_subcommand("reproduce", "Run a named table experiment");
  common(reproduce_cmd);
  reproduce_cmd->add_option("--table", o.table, "table1|table2|table3|table6");
  reproduce_cmd->add_option("--reps", o.reps, "Replications");
  reproduce_cmd->add_option("--curves", o.curves, "Override curve count");
  reproduce_cmd->add_option("--points", o.points, "Override points per curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("ConfigInvalid", e.what());
    return 2;
  }

  try {
    apply_config(app, o);
    if (!o.out.empty()) fs::create_directories(o.out);
    if (simulate_cmd->parsed()) cmd_simulate(o);
    else if (ingest_cmd->parsed()) cmd_ingest(o);
    else if (fit_cmd->parsed()) cmd_fit(o);
    else if (predict_cmd->parsed()) cmd_predict(o);
    else if (evaluate_cmd->parsed()) cmd_evaluate(o);
    else if (reproduce_cmd->parsed()) cmd_reproduce(o);
  } catch (const Error& e) {
    report_error(to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return 3;
  }
  return 0;
}
