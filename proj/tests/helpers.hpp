#pragma once

#include <string>
#include <vector>

#include "gridnif/grid.hpp"
#include "gridnif/random.hpp"

namespace gridnif::test {

inline std::string data_path(const std::string& rel) { return std::string(GRIDNIF_DATA_DIR) + "/" + rel; }

/// Random radial feeder: bus k hangs off a uniformly chosen earlier bus.
inline FeederSpec random_tree(Rng& rng, int buses, int controllable, double box = 1.0) {
  FeederSpec spec;
  spec.name = "random";
  spec.bus_count = buses;
  for (int k = 1; k < buses; ++k) {
    const int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    const double r = rng.uniform(0.002, 0.02);
    spec.lines.push_back({parent, k, r, r * rng.uniform(1.0, 2.0)});
  }
  std::vector<int> ids;
  for (int k = 1; k < buses; ++k) ids.push_back(k);
  for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i) {
    std::swap(ids[static_cast<size_t>(i)], ids[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  for (int i = 0; i < controllable; ++i) {
    spec.controllable.push_back({ids[static_cast<size_t>(i)], {0.0, box, -box, box}});
  }
  return spec;
}

/// Substation, one line, one controllable bus.
inline FeederSpec two_bus(double r, double x, PowerBox box) {
  FeederSpec spec;
  spec.name = "two-bus";
  spec.bus_count = 2;
  spec.lines.push_back({0, 1, r, x});
  spec.controllable.push_back({1, box});
  return spec;
}

inline GridModel standin_model() { return build_grid_model(load_feeder(data_path("feeders/ieee37_standin.json"))); }

}  // namespace gridnif::test
