#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wgpfr/frechet.hpp"
#include "wgpfr/model.hpp"

namespace wgpfr {

/// One airborne position fix.
struct TrajectoryRecord {
  double timestamp = 0.0;
  double longitude = 0.0;
  double latitude = 0.0;
  std::string carrier;
};

struct Flight {
  std::string id;
  std::string carrier;
  std::vector<TrajectoryRecord> records;
};

/// (cos lat cos lon, cos lat sin lon, sin lat), degrees in.
Vec lonlat_to_sphere(double lon_deg, double lat_deg);
/// Inverse of lonlat_to_sphere, degrees out.
std::pair<double, double> sphere_to_lonlat(const Vec& p);

/// Rescales time to [0, 1], Gaussian-kernel smooths longitude and latitude
/// (bandwidth in normalized time) and keeps every `subsample`-th record.
Curve preprocess_flight(const std::vector<TrajectoryRecord>& records, double bandwidth = 0.01,
                        int subsample = 6);

/// Carrier covariate: 0 for the first carrier label, 1 for the second.
CurveDataset flights_to_dataset(const std::vector<Flight>& flights, const std::vector<std::string>& carriers,
                                double bandwidth = 0.01, int subsample = 6);

struct SyntheticFlightConfig {
  int flights_per_carrier = 4;
  int records = 600;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& default_carriers() {
  static const std::vector<std::string> names{"eastern_china", "british_airways"};
  return names;
}

/// Perturbed great-circle routes between two fixed airports, one lateral
/// bias per carrier plus per-flight smooth deviations, speed variation and
/// position noise.
std::vector<Flight> synthetic_flights(const SyntheticFlightConfig& cfg);

}  // namespace wgpfr
