#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <vector>

#include "gridnif/controllers.hpp"
#include "gridnif/grid.hpp"
#include "gridnif/opf.hpp"
#include "gridnif/scenario.hpp"

namespace gridnif {

struct SimState {
  int t = 0;
  Eigen::VectorXd p;  // length C
  Eigen::VectorXd q;  // length C
  Eigen::VectorXd v;  // length N, internal order
};

/// Zero injections clamped into each box, with matching voltages.
SimState initial_state(const GridModel& model, const Eigen::VectorXcd& d);
SimState make_state(const GridModel& model, const Eigen::VectorXcd& d, const Eigen::VectorXd& p,
                    const Eigen::VectorXd& q);

/// (p, q) <- (1 - eps)(p, q) + eps (gamma(v_C), xi(v_C)), then v from the affine model.
SimState step(const GridModel& model, const EquilibriumPolicy& policy, const SimState& state,
              const Eigen::VectorXcd& d, double eps);

struct SimResult {
  std::vector<SimState> trajectory;  // includes the initial state when recorded
  bool converged = false;
  int iterations = 0;
  SimState fixed_point;
  /// ||(p, q) - (gamma(v), xi(v))||_inf at the last state.
  double equilibrium_residual = 0.0;
};

struct FixedRunOptions {
  int max_iter = 100;
  double tol = 1e-9;
  bool record_trajectory = false;
  std::optional<SimState> initial;
};

/// Iterates until the sup-norm change of (p, q) is at most tol, or max_iter steps.
SimResult run_fixed(const GridModel& model, const EquilibriumPolicy& policy, const Eigen::VectorXcd& d, double eps,
                    const FixedRunOptions& opts = {});

/// ||(p, q) - (gamma(v), xi(v))||_inf.
double equilibrium_residual(const GridModel& model, const EquilibriumPolicy& policy, const SimState& state,
                            const Eigen::VectorXcd& d);

/// max(0, available - p), elementwise.
Eigen::VectorXd curtailment(const Eigen::VectorXd& available, const Eigen::VectorXd& p);

struct MinuteMetrics {
  int minute = 0;
  int iterations = 0;
  bool converged = false;
  double max_volt_dev = 0.0;  // max over all N buses of |v - 1|
  double opt_gap = 0.0;
  double equity_cost = 0.0;   // ||Z^T p||, 0 without features
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  Eigen::VectorXd v_c;        // controllable-bus voltages
  Eigen::VectorXd available;
  Eigen::VectorXd curtailment;
};

enum class AvailableSource {
  box_max,      // p_max of each static box
  scenario_pv,  // per-minute pv column of the scenario, capped at p_max
};

struct ProfileOptions {
  double eps = 0.1;
  int iters_per_minute = 100;
  /// Sup-norm step size below which a minute counts as converged (iteration continues regardless).
  double tol = 1e-6;
  /// Start every minute from the previous minute's final state; otherwise from initial_state.
  bool warm_start = true;
  AvailableSource available = AvailableSource::box_max;
  Eigen::MatrixXd protected_features;  // C x F
  OpfOptions opf;
};

struct ProfileResult {
  std::string label;
  std::vector<int> buses;
  std::vector<MinuteMetrics> minutes;

  double mean_opt_gap() const;
  double mean_max_volt_dev() const;
  double mean_equity_cost() const;
  /// Time-mean curtailment per controllable bus.
  Eigen::VectorXd mean_curtailment() const;
};

ProfileResult run_profile(const GridModel& model, const EquilibriumPolicy& policy, const ScenarioSet& scenarios,
                          const ProfileOptions& opts);

/// Long-format metrics: `minute,iter,max_volt_dev,opt_gap,equity_cost,bus,p,q,v,curtailment`.
void write_metrics_csv(std::ostream& out, const ProfileResult& result);
/// Same rows with `baseline_*` columns appended for a second run over the same minutes.
void write_comparison_csv(std::ostream& out, const ProfileResult& primary, const ProfileResult& baseline);
/// One row per step and bus: `t,bus,p,q,v`.
void write_trajectory_csv(std::ostream& out, const GridModel& model, const SimResult& result);

}  // namespace gridnif
