#pragma once

#include <Eigen/Dense>

#include <vector>

#include "gridnif/grid.hpp"

namespace gridnif {

struct OpfOptions {
  /// Tikhonov term ridge * (||p||^2 + ||q||^2); picks the minimum-norm optimum.
  double ridge = 1e-8;
  /// Stop when the projected-gradient (gradient mapping) norm falls below this.
  double tol = 1e-10;
  int max_iter = 100000;
  /// Every `polish_period` iterations try an exact solve on the current free set;
  /// the result is kept only when it lowers the objective. 0 disables polishing.
  int polish_period = 25;
  /// Optional equity term weight * ||Z^T p|| (subgradient steps; off by default).
  double equity_weight = 0.0;
  Eigen::MatrixXd protected_features;  // C x F, used only when equity_weight > 0
  bool record_trace = false;
};

struct OpfSolution {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  /// ||v - 1||^2 at (p, q), no ridge.
  double objective = 0.0;
  /// Best ||v - 1||^2 over the box found by continuing without the ridge; used for gaps.
  double best_objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  std::vector<double> trace;  // regularised objective per iteration when requested
};

/// ||v(p, q) - 1||^2 under the linearised model, from a precomputed vhat (internal order).
double voltage_loss(const GridModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    const Eigen::VectorXd& vhat);

/// Box-constrained linearised OPF: min ||v - 1||^2 + ridge ||(p, q)||^2 by projected gradient (step 1/L).
OpfSolution solve_opf(const GridModel& model, const Eigen::VectorXcd& d, const OpfOptions& opts = {});
OpfSolution solve_opf_nominal(const GridModel& model, const Eigen::VectorXd& vhat, const OpfOptions& opts = {});

/// f_v(p, q, d) - f_v*(d). Throws ValidationError when (p, q) leaves the box.
double optimality_gap(const GridModel& model, const Eigen::VectorXcd& d, const Eigen::VectorXd& p,
                      const Eigen::VectorXd& q, const OpfOptions& opts = {});
/// Same against an already-solved optimum.
double optimality_gap(const GridModel& model, const Eigen::VectorXd& vhat, const OpfSolution& optimum,
                      const Eigen::VectorXd& p, const Eigen::VectorXd& q);

}  // namespace gridnif
