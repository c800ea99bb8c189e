#pragma once

#include <Eigen/Dense>

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gridnif/controllers.hpp"
#include "gridnif/grid.hpp"

namespace gridnif {

struct StabilityOptions {
  /// Strict inequalities pass only with this relative slack, so boundary cases fail deterministically.
  double margin = 1e-9;
  /// project_bank aims at budget * (1 - projection_shrink) so projected banks clear `margin`.
  double projection_shrink = 1e-6;
  /// Bracket width for the alpha* line search.
  double alpha_tol = 1e-10;
  NumericTolerances numeric;
};

/// argmin_{alpha >= 0} ||X - alpha R|| in the spectral norm.
double alpha_star(const Eigen::MatrixXd& r, const Eigen::MatrixXd& x, double tol = 1e-10,
                  const NumericTolerances& num = {});

/// Feeder-only quantities entering the stability conditions.
struct NetworkConstants {
  double alpha_star = 0.0;
  Eigen::MatrixXd xhat;  // X - alpha* R
  double xhat_norm = 0.0;
  double kappa_r_half = 1.0;
  double r_norm = 0.0;
  Eigen::MatrixXd r_half;
  Eigen::MatrixXd r_inv_half;
  /// 1 / (kappa(R^{1/2}) ||Xhat||); +inf when Xhat vanishes.
  double lq_budget = std::numeric_limits<double>::infinity();
};

NetworkConstants network_constants(const GridModel& model, const StabilityOptions& opts = {});
NetworkConstants network_constants(const Eigen::MatrixXd& r, const Eigen::MatrixXd& x,
                                   const StabilityOptions& opts = {});

/// min{1, 2 / (1 + kappa L_q ||Xhat|| + (L_p + alpha* L_q) ||R||)}.
double eps_bound(const NetworkConstants& k, double l_p, double l_q);

struct StabilityCertificate {
  double alpha_star = 0.0;
  double xhat_norm = 0.0;
  double kappa_r_half = 1.0;
  double r_norm = 0.0;
  double l_p = 0.0;
  double l_q = 0.0;
  double lq_budget = 0.0;
  double eps_max = 0.0;
  double eps = 0.0;
  bool cond_monotone = false;  // every equilibrium function non-increasing in v
  bool cond_slope = false;     // L_q strictly below the budget
  bool cond_step = false;      // eps strictly below eps_max
  bool overall = false;        // cond_monotone && cond_slope
  std::vector<int> sign_violations;    // buses breaking the sign conditions
  std::vector<int> budget_violations;  // buses whose q-slope bound reaches the budget
  std::map<std::string, std::string> inputs;  // input fingerprints, filled by callers

  bool passes() const { return overall && cond_step; }
  std::string to_json() const;
};

StabilityCertificate certify(const ControllerBank& bank, const GridModel& model, double eps,
                             const StabilityOptions& opts = {});
StabilityCertificate certify(const ControllerBank& bank, const NetworkConstants& constants, double eps,
                             const StabilityOptions& opts = {});

/// Euclidean projection of w onto {w <= 0, sum_h a_h |w_h| <= budget} for fixed a >= 0.
/// Exact sort-based thresholding. `budget` may be +inf (sign clamp only).
Eigen::VectorXd project_q_weights(const Eigen::VectorXd& w, const Eigen::VectorXd& a, double budget);

/// Clamps signs (a >= 0, w_p <= 0, w_q <= 0) and projects each node's w_q onto the
/// weighted l1 ball of radius `budget`. Idempotent.
ControllerBank project_bank(const ControllerBank& bank, double budget);
/// Same, with the budget taken from the feeder and shrunk by opts.projection_shrink.
ControllerBank project_bank(const ControllerBank& bank, const GridModel& model, const StabilityOptions& opts = {});
ControllerBank project_bank(const ControllerBank& bank, const NetworkConstants& constants,
                            const StabilityOptions& opts = {});

struct SecantDiagnostics {
  Eigen::VectorXd p_secant;  // diagonal of P(t)
  Eigen::VectorXd q_secant;  // diagonal of Q(t)
  Eigen::MatrixXd s;         // (1 - eps) I + eps R P + eps X Q
  double z1_norm = 0.0;
  double z2_norm = 0.0;
  /// ||R^{-1/2} S R^{1/2}||, the contraction factor in the transformed frame.
  double similarity_norm = 0.0;
  /// ||Z1|| + ||Z2||, the bound used in the stability argument.
  double contraction_bound = 0.0;
};

/// Secant slopes of `policy` between controllable voltages v and v_other at
/// fixed demand `d` (bus-id order), and the matrices of one incremental step.
SecantDiagnostics secant_diagnostics(const GridModel& model, const NetworkConstants& constants,
                                     const EquilibriumPolicy& policy, const Eigen::VectorXcd& d,
                                     const Eigen::VectorXd& v, const Eigen::VectorXd& v_other, double eps);

}  // namespace gridnif
