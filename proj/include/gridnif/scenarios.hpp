#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gridnif/scenario.hpp"

namespace gridnif {

/// Parses the `minute,bus,p_load,q_load,pv` CSV. Bus ids are 1..bus_count;
/// absent (minute, bus) pairs mean zero demand. Errors carry the line number.
ScenarioSet parse_scenarios_csv(std::istream& in, int bus_count, const std::string& origin = "<stream>");
ScenarioSet load_scenarios(const std::string& path, int bus_count, const std::string& format = "csv");
void write_scenarios_csv(std::ostream& out, const ScenarioSet& set);

struct LoadPeak {
  double minute = 0.0;
  double width = 60.0;  // standard deviation of the Gaussian bump, minutes
  double amplitude = 0.0;
};

struct BusLoad {
  int bus = 0;
  double p = 0.0;
  double q = 0.0;
};

struct SolarBus {
  int bus = 0;
  double capacity = 0.0;
};

/// Diurnal generator settings.
///
/// Load at bus n and minute t is base_n * (baseline + sum_k amp_k exp(-((t-mu_k)/w_k)^2 / 2)).
/// Solar is capacity * sin(pi (t - sunrise) / (sunset - sunrise)) inside the
/// daylight window and zero elsewhere; its peak is at the window midpoint.
/// Every load/solar sample is then scaled by an independent factor drawn
/// uniformly from [1 - noise, 1 + noise].
struct DayProfileConfig {
  int minutes = 1440;
  int start_minute = 0;
  double base_load_p = 0.0;
  double base_load_q = 0.0;
  std::vector<BusLoad> bus_loads;  // overrides of the default base load
  double load_baseline = 1.0;
  std::vector<LoadPeak> load_peaks;
  std::vector<SolarBus> solar;
  double sunrise = 360.0;
  double sunset = 1200.0;
  double noise = 0.0;

  double peak_solar_minute() const { return 0.5 * (sunrise + sunset); }
  double load_shape(double minute) const;
  double solar_shape(double minute) const;
  void validate(int bus_count) const;
};

DayProfileConfig parse_day_profile_json(const std::string& text);
DayProfileConfig load_day_profile(const std::string& path);

ScenarioSet synth_scenarios(int bus_count, const DayProfileConfig& config, std::uint64_t seed);

/// Scales Re(d_n) and Im(d_n) by independent factors from U[1 - fraction, 1 + fraction].
ScenarioSet perturb_scenarios(const ScenarioSet& set, double fraction, std::uint64_t seed);

}  // namespace gridnif
