#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace gridnif {

/// Uncontrollable injections for one minute.
///
/// `d` is indexed by original bus id minus one (bus 1 at index 0). Loads are
/// negative injections: d = (pv - p_load) - i q_load. `pv` keeps the solar
/// share of Re(d) so files can be written back in their load/pv split.
struct LoadScenario {
  int minute = 0;
  Eigen::VectorXcd d;
  Eigen::VectorXd pv;
};

struct ScenarioSet {
  std::vector<LoadScenario> scenarios;
  std::string source;       // "file:<path>" or "synthetic"
  std::uint64_t seed = 0;   // generator seed, 0 for file input

  bool empty() const { return scenarios.empty(); }
  std::size_t size() const { return scenarios.size(); }
  /// Buses per scenario (N), or 0 when empty.
  int bus_count() const { return scenarios.empty() ? 0 : static_cast<int>(scenarios.front().d.size()); }

  /// Throws ValidationError unless timestamps strictly increase and sizes agree.
  void validate() const;

  /// Scenarios whose minute lies in [first, last).
  ScenarioSet window(int first, int last) const;
};

}  // namespace gridnif
