#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

#include "gridnif/numerics.hpp"
#include "gridnif/scenario.hpp"

namespace gridnif {

struct Line {
  int from = 0;
  int to = 0;
  double r = 0.0;  // per-unit series resistance
  double x = 0.0;  // per-unit series reactance

  std::complex<double> admittance() const { return 1.0 / std::complex<double>(r, x); }
};

/// Feasible injection box of one controllable bus, per-unit power.
struct PowerBox {
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;

  double clamp_p(double p) const { return std::clamp(p, p_min, p_max); }
  double clamp_q(double q) const { return std::clamp(q, q_min, q_max); }
  bool contains(double p, double q, double slack = 0.0) const {
    return p >= p_min - slack && p <= p_max + slack && q >= q_min - slack && q <= q_max + slack;
  }
};

struct ControllableBus {
  int bus = 0;
  PowerBox box;
};

/// Radial feeder description. Bus 0 is the substation; buses are 0..bus_count-1.
struct FeederSpec {
  std::string name;
  int bus_count = 0;  // N + 1
  std::vector<Line> lines;
  std::vector<ControllableBus> controllable;
  std::string notes;

  /// Throws ValidationError on non-tree topology, bad admittances or boxes.
  void validate() const;
};

FeederSpec parse_feeder_json(const std::string& text);
FeederSpec load_feeder(const std::string& path);
std::string feeder_to_json(const FeederSpec& spec);

/// Full (N+1)x(N+1) bus admittance matrix, shunts neglected.
Eigen::MatrixXcd build_admittance(const FeederSpec& spec);

/// Linearised sensitivity model of a feeder.
///
/// Internally buses are reordered controllable-first (in ascending bus id),
/// then the remaining load buses ascending. Every length-N vector this class
/// returns or accepts uses that internal order; `bus_id()` maps back.
/// Length-C vectors (p, q) follow `controllable_buses()`.
class GridModel {
public:
  GridModel() = default;

  int bus_count() const { return static_cast<int>(order_.size()); }
  int controllable_count() const { return static_cast<int>(controllable_.size()); }
  int load_count() const { return bus_count() - controllable_count(); }

  int bus_id(int internal) const { return order_[static_cast<size_t>(internal)]; }
  const std::vector<int>& bus_order() const { return order_; }
  const std::vector<int>& controllable_buses() const { return controllable_; }
  const std::vector<PowerBox>& boxes() const { return boxes_; }
  /// Internal position of an original bus id, or -1 for the substation / unknown ids.
  int internal_index(int bus) const;

  const Eigen::MatrixXd& rtilde() const { return rtilde_; }
  const Eigen::MatrixXd& xtilde() const { return xtilde_; }
  Eigen::MatrixXd r() const { return rtilde_.topLeftCorner(controllable_count(), controllable_count()); }
  Eigen::MatrixXd x() const { return xtilde_.topLeftCorner(controllable_count(), controllable_count()); }
  Eigen::MatrixXd r_l() const { return rtilde_.topRightCorner(controllable_count(), load_count()); }
  Eigen::MatrixXd x_l() const { return xtilde_.topRightCorner(controllable_count(), load_count()); }
  /// [R; R_L^T], the N x C active-power sensitivity.
  const Eigen::MatrixXd& r_columns() const { return r_cols_; }
  /// [X; X_L^T], the N x C reactive-power sensitivity.
  const Eigen::MatrixXd& x_columns() const { return x_cols_; }
  /// Electrical distance of each controllable bus: diag(R).
  Eigen::VectorXd diag_r() const { return r().diagonal(); }

  /// Reorders a demand vector from bus-id order to internal order.
  Eigen::VectorXcd to_internal(const Eigen::VectorXcd& d_by_bus) const;
  /// Reorders an internal-order real vector back to bus-id order.
  Eigen::VectorXd to_bus_order(const Eigen::VectorXd& v_internal) const;

  const FeederSpec& spec() const { return spec_; }

private:
  friend GridModel build_grid_model(const FeederSpec& spec, const NumericTolerances& tol);

  FeederSpec spec_;
  std::vector<int> order_;
  std::vector<int> position_;  // bus id -> internal index, -1 for bus 0
  std::vector<int> controllable_;
  std::vector<PowerBox> boxes_;
  Eigen::MatrixXd rtilde_;
  Eigen::MatrixXd xtilde_;
  Eigen::MatrixXd r_cols_;
  Eigen::MatrixXd x_cols_;
};

GridModel build_grid_model(const FeederSpec& spec, const NumericTolerances& tol = {});

/// vhat = Rtilde Re(d) + Xtilde Im(d) + 1, internal order. `d` is in bus-id order.
Eigen::VectorXd nominal_voltage(const GridModel& model, const Eigen::VectorXcd& d);
inline Eigen::VectorXd nominal_voltage(const GridModel& model, const LoadScenario& s) {
  return nominal_voltage(model, s.d);
}

/// Linearised voltages (internal order) at controllable injections (p, q).
Eigen::VectorXd voltages(const GridModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                         const Eigen::VectorXcd& d);
inline Eigen::VectorXd voltages(const GridModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                const LoadScenario& s) {
  return voltages(model, p, q, s.d);
}
/// Same, starting from a precomputed vhat.
Eigen::VectorXd voltages_from_nominal(const GridModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& vhat);

/// Demand seen at each controllable bus, in controllable order.
Eigen::VectorXcd controllable_demand(const GridModel& model, const Eigen::VectorXcd& d);

}  // namespace gridnif
