#include "wgpfr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

namespace wgpfr::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << text;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s) {
  // strtod handles "nan"/"inf" and exponent forms uniformly.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw Error(ErrorCode::SchemaViolation, "not a number: '" + s + "'");
  return v;
}

long parse_int(const std::string& s) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::SchemaViolation, "not an integer: '" + s + "'");
  }
  return v;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

// null (a non-finite value on write) reads back as NaN.
double number(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw Error(ErrorCode::SchemaViolation, "expected a number");
  return j.get<double>();
}

Vec json_vec(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::SchemaViolation, "expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i]);
  return v;
}

Mat json_mat(const json& j, Eigen::Index cols) {
  if (!j.is_array()) throw Error(ErrorCode::SchemaViolation, "expected an array of rows");
  Mat m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vec row = json_vec(j[r]);
    if (row.size() != cols) throw Error(ErrorCode::SchemaViolation, "ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::SchemaViolation, std::string("missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

// ---------------------------------------------------------------------------

void write_dataset_csv(std::ostream& out, const CurveDataset& data) {
  const int p = static_cast<int>(data.U.cols());
  const int q = data.has_functional_covariates() ? data.input_dim() : 0;
  const int d0 = data.manifold.ambient_dim();
  out << "batch,curve,time";
  for (int j = 1; j <= p; ++j) out << ",covariate_u_" << j;
  for (int j = 1; j <= q; ++j) out << ",x_" << j;
  for (int j = 1; j <= d0; ++j) out << ",coord_" << j;
  out << '\n';
  for (int m = 0; m < data.n_curves(); ++m) {
    const auto mi = static_cast<std::size_t>(m);
    const int batch = data.batch.empty() ? 1 : data.batch[mi];
    for (int i = 0; i < data.n_times(); ++i) {
      const auto ii = static_cast<std::size_t>(i);
      if (!data.observed[mi][ii]) continue;
      out << batch << ',' << m << ',' << format_double(data.times[ii]);
      for (int j = 0; j < p; ++j) out << ',' << format_double(data.U(m, j));
      for (int j = 0; j < q; ++j) out << ',' << format_double(data.x[mi](i, j));
      for (int j = 0; j < d0; ++j) out << ',' << format_double(data.curves[mi][ii][j]);
      out << '\n';
    }
  }
}

void write_dataset_csv(const std::filesystem::path& path, const CurveDataset& data) {
  std::ostringstream ss;
  write_dataset_csv(ss, data);
  write_text(path, ss.str());
}

CurveDataset read_dataset_csv(std::istream& in, const Manifold& manifold) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaViolation, "empty dataset file");
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "batch" || header[1] != "curve" || header[2] != "time") {
    throw Error(ErrorCode::SchemaViolation, "header must start with batch,curve,time");
  }
  int p = 0;
  int q = 0;
  int d0 = 0;
  for (std::size_t c = 3; c < header.size(); ++c) {
    const std::string& h = header[c];
    const bool in_order = (starts_with(h, "covariate_u_") && q == 0 && d0 == 0) ||
                          (starts_with(h, "x_") && d0 == 0) || starts_with(h, "coord_");
    if (!in_order) throw Error(ErrorCode::SchemaViolation, "unexpected column '" + h + "'");
    if (starts_with(h, "covariate_u_")) ++p;
    else if (starts_with(h, "x_")) ++q;
    else ++d0;
  }
  if (p < 1) throw Error(ErrorCode::SchemaViolation, "at least one covariate_u column is required");
  if (d0 != manifold.ambient_dim()) {
    throw Error(ErrorCode::SchemaViolation, "coordinate columns do not match the manifold dimension");
  }

  struct Row {
    int batch;
    double time;
    Vec u, x, coords;
  };
  std::map<long, std::vector<Row>> by_curve;
  std::vector<double> times;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::SchemaViolation, "line " + std::to_string(line_no) + " has the wrong column count");
    }
    Row r;
    r.batch = static_cast<int>(parse_int(cells[0]));
    const long curve = parse_int(cells[1]);
    r.time = parse_double(cells[2]);
    r.u.resize(p);
    r.x.resize(q);
    r.coords.resize(d0);
    for (int j = 0; j < p; ++j) r.u[j] = parse_double(cells[static_cast<std::size_t>(3 + j)]);
    for (int j = 0; j < q; ++j) r.x[j] = parse_double(cells[static_cast<std::size_t>(3 + p + j)]);
    for (int j = 0; j < d0; ++j) r.coords[j] = parse_double(cells[static_cast<std::size_t>(3 + p + q + j)]);
    times.push_back(r.time);
    by_curve[curve].push_back(std::move(r));
  }
  if (by_curve.empty()) throw Error(ErrorCode::EmptyInput, "dataset has no rows");
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  CurveDataset data;
  data.manifold = manifold;
  data.times = times;
  const auto n = times.size();
  data.U.resize(static_cast<Eigen::Index>(by_curve.size()), p);
  int m = 0;
  for (auto& [id, rows] : by_curve) {
    std::vector<Vec> points(n, rows.front().coords);
    std::vector<char> seen(n, 0);
    Mat x = Mat::Constant(static_cast<Eigen::Index>(n), q, std::numeric_limits<double>::quiet_NaN());
    for (const Row& r : rows) {
      const auto i = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), r.time) - times.begin());
      if (seen[i]) throw Error(ErrorCode::SchemaViolation, "duplicate row for curve " + std::to_string(id));
      if (r.u != rows.front().u || r.batch != rows.front().batch) {
        throw Error(ErrorCode::SchemaViolation, "curve " + std::to_string(id) + " changes covariates between rows");
      }
      seen[i] = 1;
      points[i] = r.coords;
      if (q > 0) x.row(static_cast<Eigen::Index>(i)) = r.x.transpose();
    }
    data.curves.push_back(std::move(points));
    data.observed.push_back(std::move(seen));
    data.U.row(m) = rows.front().u.transpose();
    data.batch.push_back(rows.front().batch);
    if (q > 0) data.x.push_back(std::move(x));
    ++m;
  }
  data.validate();
  return data;
}

CurveDataset read_dataset_csv(const std::filesystem::path& path, const Manifold& manifold) {
  std::istringstream ss(read_text(path));
  return read_dataset_csv(ss, manifold);
}

// ---------------------------------------------------------------------------

std::string manifold_name(const Manifold& m) { return m.is_sphere() ? "sphere" : "kendall"; }

Manifold parse_manifold(const std::string& name, int ambient_dim) {
  if (name == "sphere") {
    if (ambient_dim < 3) throw Error(ErrorCode::SchemaViolation, "sphere data needs at least three coordinates");
    return Manifold::sphere(ambient_dim);
  }
  if (name == "kendall" || name == "shape") {
    if (ambient_dim % 2 != 0) throw Error(ErrorCode::SchemaViolation, "shape coordinates come in pairs");
    return Manifold::kendall(ambient_dim / 2);
  }
  throw Error(ErrorCode::SchemaViolation, "unknown manifold '" + name + "'");
}

Manifest make_manifest(const CurveDataset& data, const std::string& scenario, std::uint64_t seed) {
  Manifest m;
  m.manifold = data.manifold;
  m.scenario = scenario;
  m.seed = seed;
  m.n_curves = data.n_curves();
  m.n_times = data.n_times();
  m.covariate_dim = static_cast<int>(data.U.cols());
  m.functional_dim = data.has_functional_covariates() ? data.input_dim() : 0;
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["manifold"] = manifold_name(m.manifold);
  j["ambient_dim"] = m.manifold.ambient_dim();
  j["scenario"] = m.scenario;
  j["seed"] = m.seed;
  j["n_curves"] = m.n_curves;
  j["n_times"] = m.n_times;
  j["covariate_dim"] = m.covariate_dim;
  j["functional_dim"] = m.functional_dim;
  write_text(path, j.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("manifest: ") + e.what());
  }
  if (field(j, "schema_version").get<int>() != kSchemaVersion) {
    throw Error(ErrorCode::SchemaViolation, "unsupported manifest schema_version");
  }
  Manifest m;
  m.manifold = parse_manifold(field(j, "manifold").get<std::string>(), field(j, "ambient_dim").get<int>());
  m.scenario = j.value("scenario", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  m.n_curves = j.value("n_curves", 0);
  m.n_times = j.value("n_times", 0);
  m.covariate_dim = j.value("covariate_dim", 0);
  m.functional_dim = j.value("functional_dim", 0);
  return m;
}

// ---------------------------------------------------------------------------

std::string model_to_json(const StoredModel& stored) {
  const WGPFRModel& model = stored.model;
  const MeanStructure& mean = model.mean;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = to_string(model.kind);
  j["manifold"] = manifold_name(mean.manifold());
  j["ambient_dim"] = mean.manifold().ambient_dim();
  j["times"] = mean.times();
  json mu0 = json::array();
  for (const Vec& p : mean.mu0()) mu0.push_back(vec_json(p));
  j["mu0"] = mu0;
  j["k_scalar"] = mean.basis().basis().k_scalar;
  j["B"] = mat_json(mean.B());
  j["U"] = mat_json(model.U);
  json cov = json::array();
  for (const CurveCovariance& c : model.cov) {
    json cj;
    cj["time_index"] = c.time_index;
    cj["inputs"] = mat_json(c.inputs);
    json dims = json::array();
    for (const GPPosterior& post : c.dims) {
      const auto& th = post.theta();
      dims.push_back({{"theta", {{"v0", th.v0}, {"w0", th.w0}, {"a0", th.a0}, {"a1", th.a1}, {"sigma", th.sigma}}},
                      {"targets", vec_json(post.targets())}});
    }
    cj["dims"] = dims;
    cov.push_back(cj);
  }
  j["covariance"] = cov;
  j["iterations_run"] = model.iterations_run;
  j["converged"] = model.converged;
  j["final_loss"] = finite_or_null(model.final_loss);
  json trace = json::array();
  for (double v : model.loss_trace) trace.push_back(finite_or_null(v));
  j["loss_trace"] = trace;
  if (stored.split) {
    j["split"] = {{"curve", stored.split->curve}, {"train", stored.split->train}, {"test", stored.split->test}};
  } else {
    j["split"] = nullptr;
  }
  return j.dump(1) + "\n";
}

StoredModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("model: ") + e.what());
  }
  try {
    if (field(j, "schema_version").get<int>() != kSchemaVersion) {
      throw Error(ErrorCode::SchemaViolation, "unsupported model schema_version");
    }
    const Manifold mf = parse_manifold(field(j, "manifold").get<std::string>(), field(j, "ambient_dim").get<int>());
    const auto times = field(j, "times").get<std::vector<double>>();
    std::vector<Vec> mu0;
    for (const json& p : field(j, "mu0")) mu0.push_back(json_vec(p));
    BasisSystem basis{field(j, "k_scalar").get<int>()};
    TangentBasis tb(mf, times, mu0, basis);
    const Mat U = json_mat(field(j, "U"), field(j, "U").empty() ? 0 : static_cast<Eigen::Index>(field(j, "U")[0].size()));
    const Mat B = json_mat(field(j, "B"), tb.columns());

    const std::string kind = field(j, "kind").get<std::string>();
    ModelKind mk = ModelKind::WGPFR;
    if (kind == "flrm") mk = ModelKind::FLRM;
    else if (kind == "wgfmr") mk = ModelKind::WGFmR;
    else if (kind != "wgpfr") throw Error(ErrorCode::SchemaViolation, "unknown model kind '" + kind + "'");

    StoredModel out{WGPFRModel{.kind = mk, .mean = MeanStructure(std::move(tb), B), .U = U}, times, std::nullopt};
    for (const json& cj : field(j, "covariance")) {
      CurveCovariance c;
      c.time_index = field(cj, "time_index").get<std::vector<int>>();
      const json& inputs = field(cj, "inputs");
      c.inputs = json_mat(inputs, inputs.empty() ? 1 : static_cast<Eigen::Index>(inputs[0].size()));
      for (const json& dj : field(cj, "dims")) {
        const json& th = field(dj, "theta");
        const KernelHyperparams theta{number(field(th, "v0")), number(field(th, "w0")), number(field(th, "a0")),
                                      number(field(th, "a1")), number(field(th, "sigma"))};
        c.dims.emplace_back(c.inputs, json_vec(field(dj, "targets")), theta);
      }
      if (static_cast<int>(c.dims.size()) != mf.ambient_dim()) {
        throw Error(ErrorCode::SchemaViolation, "one GP per ambient coordinate is required");
      }
      out.model.cov.push_back(std::move(c));
    }
    out.model.iterations_run = j.value("iterations_run", 0);
    out.model.converged = j.value("converged", false);
    out.model.final_loss = number(field(j, "final_loss"));
    for (const json& v : field(j, "loss_trace")) out.model.loss_trace.push_back(number(v));
    if (j.contains("split") && !j["split"].is_null()) {
      const json& s = j["split"];
      out.split = Split{field(s, "curve").get<int>(), field(s, "train").get<std::vector<int>>(),
                        field(s, "test").get<std::vector<int>>()};
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("model: ") + e.what());
  }
}

void write_model(const std::filesystem::path& path, const StoredModel& stored) {
  write_text(path, model_to_json(stored));
}

StoredModel read_model(const std::filesystem::path& path) { return model_from_json(read_text(path)); }

// ---------------------------------------------------------------------------

void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows) {
  std::ostringstream out;
  const Eigen::Index d0 = rows.empty() ? 0 : rows.front().prediction.point.size();
  out << "curve,time_index,time";
  for (Eigen::Index j = 1; j <= d0; ++j) out << ",coord_" << j;
  for (Eigen::Index j = 1; j <= d0; ++j) out << ",var_" << j;
  out << '\n';
  for (const PredictionRow& r : rows) {
    out << r.curve << ',' << r.time_index << ',' << format_double(r.time);
    for (Eigen::Index j = 0; j < d0; ++j) out << ',' << format_double(r.prediction.point[j]);
    for (Eigen::Index j = 0; j < d0; ++j) out << ',' << format_double(r.prediction.variance[j]);
    out << '\n';
  }
  write_text(path, out.str());
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaViolation, "empty predictions file");
  const auto header = split_csv(line);
  if (header.size() < 5 || (header.size() - 3) % 2 != 0 || header[0] != "curve") {
    throw Error(ErrorCode::SchemaViolation, "predictions header");
  }
  const auto d0 = static_cast<Eigen::Index>((header.size() - 3) / 2);
  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw Error(ErrorCode::SchemaViolation, "predictions row width");
    PredictionRow r;
    r.curve = static_cast<int>(parse_int(cells[0]));
    r.time_index = static_cast<int>(parse_int(cells[1]));
    r.time = parse_double(cells[2]);
    r.prediction.point.resize(d0);
    r.prediction.variance.resize(d0);
    for (Eigen::Index j = 0; j < d0; ++j) {
      r.prediction.point[j] = parse_double(cells[static_cast<std::size_t>(3 + j)]);
      r.prediction.variance[j] = parse_double(cells[static_cast<std::size_t>(3 + d0 + j)]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["rmse"] = finite_or_null(report.rmse);
  j["lppd"] = finite_or_null(report.lppd);
  j["dfd"] = finite_or_null(report.dfd);
  j["n_test"] = report.n_test;
  return j.dump(2) + "\n";
}

std::string rows_to_json(const std::vector<TableRow>& rows) {
  json arr = json::array();
  for (const TableRow& r : rows) {
    arr.push_back({{"table", r.table},
                   {"setting", r.setting},
                   {"model", to_string(r.model)},
                   {"rmse", finite_or_null(r.rmse)},
                   {"lppd", finite_or_null(r.lppd)},
                   {"dfd", finite_or_null(r.dfd)},
                   {"beta_rmse", finite_or_null(r.beta_rmse)},
                   {"n_test", r.n_test},
                   {"replications", r.replications}});
  }
  json j;
  j["schema_version"] = kSchemaVersion;
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

void write_flights_csv(const std::filesystem::path& path, const std::vector<Flight>& flights) {
  std::ostringstream out;
  out << "flight_id,carrier,timestamp,longitude,latitude\n";
  for (const Flight& f : flights) {
    for (const TrajectoryRecord& r : f.records) {
      out << f.id << ',' << f.carrier << ',' << format_double(r.timestamp) << ',' << format_double(r.longitude)
          << ',' << format_double(r.latitude) << '\n';
    }
  }
  write_text(path, out.str());
}

std::vector<Flight> read_flights_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"flight_id", "carrier", "timestamp",
                                                                              "longitude", "latitude"}) {
    throw Error(ErrorCode::SchemaViolation, "flight header must be flight_id,carrier,timestamp,longitude,latitude");
  }
  std::vector<Flight> flights;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw Error(ErrorCode::SchemaViolation, "flight row width");
    auto [it, fresh] = index.try_emplace(cells[0], flights.size());
    if (fresh) flights.push_back({cells[0], cells[1], {}});
    Flight& f = flights[it->second];
    if (f.carrier != cells[1]) throw Error(ErrorCode::SchemaViolation, "flight " + f.id + " changes carrier");
    f.records.push_back({parse_double(cells[2]), parse_double(cells[3]), parse_double(cells[4]), cells[1]});
  }
  return flights;
}

}  // namespace wgpfr::io
