#pragma once

#include <Eigen/Dense>

#include <complex>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gridnif/grid.hpp"

namespace gridnif {

struct Setpoint {
  double p = 0.0;
  double q = 0.0;
};

/// Single-hidden-layer tanh controller of one bus.
///
///   p = sum_h w_p[h] tanh(a[h] v + b[h] p_L + c[h] q_L + bias[h]) + e_p
///   q = sum_h w_q[h] tanh(...same argument...) + e_q
///
/// `bias` is the hidden-unit offset (kept distinct from the demand d_n).
/// Non-increasing in v whenever a >= 0 and w_p, w_q <= 0.
struct NodeParams {
  Eigen::VectorXd w_p;
  Eigen::VectorXd w_q;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  Eigen::VectorXd bias;
  double e_p = 0.0;
  double e_q = 0.0;

  static NodeParams zeros(int neurons);
  int neurons() const { return static_cast<int>(w_p.size()); }
  bool consistent() const;
  /// a >= 0 and w_p, w_q <= 0 for every hidden unit.
  bool monotone_signs() const;
  /// sum_h |w_p[h] a[h]|, an upper bound on |d gamma / d v|.
  double p_slope_bound() const { return (w_p.cwiseProduct(a)).cwiseAbs().sum(); }
  /// sum_h |w_q[h] a[h]|, an upper bound on |d xi / d v|.
  double q_slope_bound() const { return (w_q.cwiseProduct(a)).cwiseAbs().sum(); }
};

/// Network output before saturation to the power box.
Setpoint eval_nif_raw(const NodeParams& params, double v, double p_load, double q_load);
/// Network output saturated to `box`.
Setpoint eval_nif(const NodeParams& params, const PowerBox& box, double v, double p_load, double q_load);

struct ControllerBank {
  std::vector<int> buses;
  std::vector<PowerBox> boxes;
  std::vector<NodeParams> nodes;
  std::map<std::string, std::string> metadata;
  /// Embedded certificate (JSON text), empty when the bank is uncertified.
  std::string certificate_json;

  int size() const { return static_cast<int>(nodes.size()); }
  /// Throws ValidationError when sizes disagree or a NodeParams is ragged.
  void validate() const;
  /// Throws unless the bank has one node per controllable bus of `model`, in the same order.
  void check_matches(const GridModel& model) const;
};

/// Bank of constant-output controllers (all weights zero, offsets at `outputs`).
ControllerBank make_constant_bank(const GridModel& model, int neurons, const std::vector<Setpoint>& outputs);

struct SlopeBounds {
  double l_p = 0.0;
  double l_q = 0.0;
};

/// max_n sum_h |w a| for each output. Saturation only shrinks slopes, so these
/// remain valid bounds for the clamped controllers.
SlopeBounds slope_bounds(const ControllerBank& bank);

std::string controllers_to_json(const ControllerBank& bank);
ControllerBank parse_controllers_json(const std::string& text);
ControllerBank load_controllers(const std::string& path);

/// Two-breakpoint Volt/Watt and Volt/Var droop curves.
struct LinearCurveParams {
  double v_min_th = 1.03;  // Volt/Watt knee
  double v_min = 0.95;     // Volt/Var lower knee
  double v_max = 1.05;     // shared upper knee
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;

  double volt_watt_slope() const { return (p_max - p_min) / (v_max - v_min_th); }
  double volt_var_slope() const { return (q_max - q_min) / (v_max - v_min); }
  void validate() const;
};

double eval_volt_watt(const LinearCurveParams& params, double v);
double eval_volt_var(const LinearCurveParams& params, double v);

/// Equilibrium functions (gamma_n, xi_n) of every controllable bus, as seen by
/// the incremental update. Implementations must return points inside box(k).
class EquilibriumPolicy {
public:
  virtual ~EquilibriumPolicy() = default;
  virtual int size() const = 0;
  virtual const PowerBox& box(int k) const = 0;
  virtual Setpoint respond(int k, double v, std::complex<double> demand) const = 0;
  virtual std::string label() const = 0;
};

class NifPolicy final : public EquilibriumPolicy {
public:
  explicit NifPolicy(const ControllerBank& bank) : bank_(&bank) {}
  int size() const override { return bank_->size(); }
  const PowerBox& box(int k) const override { return bank_->boxes[static_cast<size_t>(k)]; }
  Setpoint respond(int k, double v, std::complex<double> demand) const override {
    return eval_nif(bank_->nodes[static_cast<size_t>(k)], box(k), v, demand.real(), demand.imag());
  }
  std::string label() const override { return "nif"; }

private:
  const ControllerBank* bank_;
};

class LinearPolicy final : public EquilibriumPolicy {
public:
  explicit LinearPolicy(std::vector<LinearCurveParams> curves);
  int size() const override { return static_cast<int>(curves_.size()); }
  const PowerBox& box(int k) const override { return boxes_[static_cast<size_t>(k)]; }
  Setpoint respond(int k, double v, std::complex<double> demand) const override;
  std::string label() const override { return "linear"; }
  const std::vector<LinearCurveParams>& curves() const { return curves_; }

private:
  std::vector<LinearCurveParams> curves_;
  std::vector<PowerBox> boxes_;
};

/// Volt/Watt + Volt/Var baseline using the feeder's boxes and the given knees.
LinearPolicy make_linear_baseline(const GridModel& model, double v_min_th = 1.03, double v_min = 0.95,
                                  double v_max = 1.05);

}  // namespace gridnif
