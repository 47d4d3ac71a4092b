#include "wgpfr/flight.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace wgpfr {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

Vec lonlat_to_sphere(double lon_deg, double lat_deg) {
  if (!(lon_deg >= -180.0 && lon_deg <= 180.0 && lat_deg >= -90.0 && lat_deg <= 90.0)) {
    throw Error(ErrorCode::OutOfRange, "longitude or latitude out of range");
  }
  const double lon = lon_deg * kDeg;
  const double lat = lat_deg * kDeg;
  return Vec{{std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)}};
}

std::pair<double, double> sphere_to_lonlat(const Vec& p) {
  const double lat = std::atan2(p[2], std::hypot(p[0], p[1]));
  const double lon = std::atan2(p[1], p[0]);
  return {lon / kDeg, lat / kDeg};
}

Curve preprocess_flight(const std::vector<TrajectoryRecord>& records, double bandwidth, int subsample) {
  if (records.size() < 2) throw Error(ErrorCode::TooFewRecords, "a flight needs at least two records");
  if (!(bandwidth > 0.0) || subsample < 1) {
    throw Error(ErrorCode::ConfigInvalid, "bandwidth must be positive and subsample >= 1");
  }
  const std::size_t n = records.size();
  for (std::size_t k = 1; k < n; ++k) {
    if (!(records[k].timestamp > records[k - 1].timestamp)) {
      throw Error(ErrorCode::SchemaViolation, "timestamps must increase strictly within a flight");
    }
  }
  const double t0 = records.front().timestamp;
  const double span = records.back().timestamp - t0;
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = (records[k].timestamp - t0) / span;
  t.back() = 1.0;

  Curve out;
  for (std::size_t k = 0; k < n; k += static_cast<std::size_t>(subsample)) {
    // Nadaraya-Watson estimate at t[k].
    double w_sum = 0.0;
    double lon = 0.0;
    double lat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = (t[j] - t[k]) / bandwidth;
      if (std::abs(r) > 8.0) continue;
      const double w = std::exp(-0.5 * r * r);
      w_sum += w;
      lon += w * records[j].longitude;
      lat += w * records[j].latitude;
    }
    out.times.push_back(t[k]);
    out.points.push_back(lonlat_to_sphere(std::clamp(lon / w_sum, -180.0, 180.0), std::clamp(lat / w_sum, -90.0, 90.0)));
  }
  return out;
}

CurveDataset flights_to_dataset(const std::vector<Flight>& flights, const std::vector<std::string>& carriers,
                                double bandwidth, int subsample) {
  if (flights.empty()) throw Error(ErrorCode::EmptyInput, "no flights");
  CurveDataset data;
  data.manifold = Manifold::sphere(3);
  data.U.resize(static_cast<Eigen::Index>(flights.size()), 1);
  for (std::size_t f = 0; f < flights.size(); ++f) {
    const Curve c = preprocess_flight(flights[f].records, bandwidth, subsample);
    if (f == 0) {
      data.times = c.times;
    } else if (c.times.size() != data.times.size()) {
      throw Error(ErrorCode::GridMismatch, "flight " + flights[f].id + " has a different number of points");
    } else {
      for (std::size_t i = 0; i < c.times.size(); ++i) {
        if (std::abs(c.times[i] - data.times[i]) > 1e-9) {
          throw Error(ErrorCode::GridMismatch, "flight " + flights[f].id + " is off the shared time grid");
        }
      }
    }
    const auto it = std::find(carriers.begin(), carriers.end(), flights[f].carrier);
    if (it == carriers.end()) throw Error(ErrorCode::SchemaViolation, "unknown carrier " + flights[f].carrier);
    const auto label = static_cast<int>(it - carriers.begin());
    data.U(static_cast<Eigen::Index>(f), 0) = label;
    data.batch.push_back(label + 1);
    data.curves.push_back(c.points);
  }
  data.observed = full_mask(data.curves.size(), data.times.size());
  return data;
}

std::vector<Flight> synthetic_flights(const SyntheticFlightConfig& cfg) {
  if (cfg.flights_per_carrier < 1 || cfg.records < 2) {
    throw Error(ErrorCode::ConfigInvalid, "need at least one flight per carrier and two records");
  }
  const Manifold s2 = Manifold::sphere(3);
  const Vec origin = lonlat_to_sphere(121.80, 31.14);
  const Vec dest = lonlat_to_sphere(-0.45, 51.47);
  const Vec route = s2.log_map(origin, dest);
  const Eigen::Vector3d o3 = origin;
  const Eigen::Vector3d d3 = dest;
  const Vec normal = o3.cross(d3).normalized();
  const double duration = 11.5 * 3600.0;
  const std::array<double, 2> carrier_bias{0.035, -0.035};

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal01(0.0, 1.0);
  std::vector<Flight> flights;
  for (int c = 0; c < 2; ++c) {
    for (int f = 0; f < cfg.flights_per_carrier; ++f) {
      Flight fl;
      fl.id = default_carriers()[static_cast<std::size_t>(c)] + "_" + std::to_string(f);
      fl.carrier = default_carriers()[static_cast<std::size_t>(c)];
      const double a1 = 0.03 * normal01(rng);
      const double a2 = 0.015 * normal01(rng);
      const double a3 = 0.01 * normal01(rng);
      const double speed = 0.08 * normal01(rng);
      const double start = 600.0 * std::abs(normal01(rng));
      for (int k = 0; k < cfg.records; ++k) {
        const double t = static_cast<double>(k) / (cfg.records - 1);
        const double progress = t + speed * std::sin(std::numbers::pi * t) / std::numbers::pi;
        const double lateral = carrier_bias[static_cast<std::size_t>(c)] * std::sin(std::numbers::pi * t) +
                               a1 * std::sin(std::numbers::pi * t) + a2 * std::sin(2.0 * std::numbers::pi * t) +
                               a3 * std::sin(3.0 * std::numbers::pi * t);
        const Vec along = s2.exp_map(origin, progress * route);
        const Vec p = std::cos(lateral) * along + std::sin(lateral) * normal;
        auto [lon, lat] = sphere_to_lonlat(p);
        lon += 0.01 * normal01(rng);
        lat += 0.01 * normal01(rng);
        fl.records.push_back({start + t * duration, lon, lat, fl.carrier});
      }
      flights.push_back(std::move(fl));
    }
  }
  return flights;
}

}  // namespace wgpfr
