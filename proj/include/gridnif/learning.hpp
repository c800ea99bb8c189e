#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gridnif/controllers.hpp"
#include "gridnif/grid.hpp"
#include "gridnif/scenario.hpp"
#include "gridnif/stability.hpp"

namespace gridnif {

enum class OptimizerKind { plain, adam };

/// Which voltage the controllers see while training.
///   pre_control: vhat_C(d), the voltage with zero controllable injection.
///   closed_loop: the fixed point of the incremental dynamics under the current bank,
///                recomputed every epoch and treated as a constant input.
enum class InputVoltage { pre_control, closed_loop };

struct TrainConfig {
  int neurons = 50;
  int epochs = 5000;
  int batch_size = 64;
  double learning_rate = 0.01;
  double equity_weight = 0.0154;
  int projection_period = 10;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  InputVoltage input_voltage = InputVoltage::pre_control;
  double closed_loop_eps = 0.1;
  /// Incremental steps per epoch, warm-started from the previous epoch's injections.
  int closed_loop_steps = 5;
  /// Hidden-unit voltage gains a[h] stay at their initial value 1 unless enabled.
  bool train_a = false;
  /// Abort when an epoch's mean loss exceeds this multiple of the first epoch's.
  double divergence_factor = 1e6;
  int jobs = 1;

  void validate() const;
  std::string to_json() const;
};

TrainConfig parse_train_config_json(const std::string& text);
TrainConfig load_train_config(const std::string& path);

/// Protected features, one unit-norm column per feature (C x F).
struct ProtectedFeatures {
  Eigen::MatrixXd z;

  int features() const { return static_cast<int>(z.cols()); }
  /// Normalises every column; throws on zero columns or F > C - 1.
  static ProtectedFeatures from_columns(const Eigen::MatrixXd& columns);
  void validate(int controllable) const;
};

/// Electrical distance to the substation, diag(R), as the single protected feature.
ProtectedFeatures electrical_distance_feature(const GridModel& model);

/// One training scenario with everything the loss needs precomputed.
struct TrainingSample {
  Eigen::VectorXd vhat;      // internal order, length N
  Eigen::VectorXd v_input;   // controller input voltage, length C
  Eigen::VectorXd p_load;    // Re(d_n) at controllable buses
  Eigen::VectorXd q_load;    // Im(d_n) at controllable buses
};

TrainingSample make_sample(const GridModel& model, const LoadScenario& scenario);
std::vector<TrainingSample> make_samples(const GridModel& model, const ScenarioSet& scenarios);

/// Saturated bank outputs (gamma, xi) for one sample.
void bank_outputs(const ControllerBank& bank, const TrainingSample& s, Eigen::VectorXd& p, Eigen::VectorXd& q);

/// ||v(gamma, xi, d) - 1||^2 over all N buses.
double loss_fv(const GridModel& model, const ControllerBank& bank, const TrainingSample& sample);
double loss_fv(const GridModel& model, const ControllerBank& bank, const LoadScenario& scenario);
/// ||Z^T gamma||.
double loss_feq(const Eigen::VectorXd& gamma, const ProtectedFeatures& features);

struct LossTerms {
  double f_v = 0.0;
  double f_eq = 0.0;
  double total(double lambda) const { return f_v + lambda * f_eq; }
};

/// Gradient with one NodeParams-shaped entry per bus.
using BankGradient = std::vector<NodeParams>;

/// Loss of one sample, adding d(f_v + lambda f_eq)/d(params) into `grad` when non-null.
LossTerms sample_loss(const GridModel& model, const ControllerBank& bank, const TrainingSample& sample,
                      double lambda, const ProtectedFeatures& features, BankGradient* grad);

struct BatchGradient {
  BankGradient grad;  // mean over the batch
  LossTerms mean;
};

/// Exact mean gradient over a batch. Per-sample terms are reduced in a fixed
/// pairwise tree so the result does not depend on `jobs`.
BatchGradient gradients(const GridModel& model, const ControllerBank& bank, std::span<const TrainingSample> batch,
                        double lambda, const ProtectedFeatures& features, int jobs = 1);

/// Flat parameter vector: per bus w_p, w_q, a, b, c, bias, e_p, e_q.
Eigen::VectorXd pack_params(const std::vector<NodeParams>& nodes);
void unpack_params(const Eigen::VectorXd& flat, std::vector<NodeParams>& nodes);

/// a = 1, w ~ U[-0.1, 0], b, c, bias ~ U[-0.5, 0.5], offsets at box midpoints.
ControllerBank initial_bank(const GridModel& model, int neurons, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double f_v = 0.0;
  double f_eq = 0.0;
  double total = 0.0;
  bool projected = false;
  double grad_norm = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  ControllerBank bank;
  TrainTrace trace;
};

using TrainProgress = std::function<void(const EpochRecord&)>;

TrainResult train(const GridModel& model, const ScenarioSet& scenarios, const ProtectedFeatures& features,
                  const TrainConfig& config, const StabilityOptions& stability = {},
                  const TrainProgress& progress = {});

}  // namespace gridnif
