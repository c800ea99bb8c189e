#include "gridnif/opf.hpp"

#include <cmath>

#include "gridnif/errors.hpp"

namespace gridnif {

namespace {

struct BoxQp {
  Eigen::MatrixXd a;   // N x 2C stacked sensitivities
  Eigen::VectorXd r0;  // vhat - 1
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  Eigen::MatrixXd gram;  // a^T a
  Eigen::VectorXd atr;   // a^T r0
  int c = 0;

  double loss(const Eigen::VectorXd& x) const { return (a * x + r0).squaredNorm(); }
  Eigen::VectorXd project(const Eigen::VectorXd& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

BoxQp make_qp(const GridModel& model, const Eigen::VectorXd& vhat) {
  const int c = model.controllable_count();
  BoxQp qp;
  qp.c = c;
  qp.a.resize(model.bus_count(), 2 * c);
  qp.a << model.r_columns(), model.x_columns();
  qp.r0 = vhat - Eigen::VectorXd::Ones(model.bus_count());
  qp.lo.resize(2 * c);
  qp.hi.resize(2 * c);
  for (int n = 0; n < c; ++n) {
    const auto& b = model.boxes()[static_cast<size_t>(n)];
    qp.lo(n) = b.p_min;
    qp.hi(n) = b.p_max;
    qp.lo(c + n) = b.q_min;
    qp.hi(c + n) = b.q_max;
  }
  qp.gram = qp.a.transpose() * qp.a;
  qp.atr = qp.a.transpose() * qp.r0;
  return qp;
}

struct PgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;
};

// Exact minimiser over the free coordinates with the others pinned, then projected.
Eigen::VectorXd polish(const BoxQp& qp, double ridge, const Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
  const Eigen::Index m = x.size();
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool at_lo = x(i) <= qp.lo(i) && grad(i) > 0;
    const bool at_hi = x(i) >= qp.hi(i) && grad(i) < 0;
    if (!at_lo && !at_hi) free.push_back(i);
  }
  if (free.empty()) return x;
  const Eigen::Index f = static_cast<Eigen::Index>(free.size());
  Eigen::VectorXd fixed = x;
  for (auto i : free) fixed(i) = 0.0;
  const Eigen::VectorXd rhs_full = -(qp.a * fixed + qp.r0);
  Eigen::MatrixXd lhs(qp.a.rows() + f, f);
  lhs.setZero();
  for (Eigen::Index k = 0; k < f; ++k) lhs.col(k).head(qp.a.rows()) = qp.a.col(free[static_cast<size_t>(k)]);
  lhs.bottomRows(f).diagonal().setConstant(std::sqrt(ridge));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(qp.a.rows() + f);
  rhs.head(qp.a.rows()) = rhs_full;
  const Eigen::VectorXd sol = lhs.completeOrthogonalDecomposition().solve(rhs);
  Eigen::VectorXd out = x;
  for (Eigen::Index k = 0; k < f; ++k) out(free[static_cast<size_t>(k)]) = sol(k);
  return qp.project(out);
}

PgResult projected_gradient(const BoxQp& qp, double ridge, Eigen::VectorXd x, const OpfOptions& opts,
                            std::vector<double>* trace) {
  const Eigen::Index m = x.size();
  const Eigen::MatrixXd hess = 2.0 * (qp.gram + ridge * Eigen::MatrixXd::Identity(m, m));
  const double lip = std::max(spectral_norm(hess), 1e-300);
  const bool equity = opts.equity_weight > 0.0 && opts.protected_features.size() > 0;
  const Eigen::MatrixXd& z = opts.protected_features;

  auto objective = [&](const Eigen::VectorXd& y) {
    double f = qp.loss(y) + ridge * y.squaredNorm();
    if (equity) f += opts.equity_weight * (z.transpose() * y.head(qp.c)).norm();
    return f;
  };
  auto gradient = [&](const Eigen::VectorXd& y) {
    Eigen::VectorXd g = hess * y + 2.0 * qp.atr;
    if (equity) {
      const Eigen::VectorXd zt = z.transpose() * y.head(qp.c);
      const double nz = zt.norm();
      if (nz > 0) g.head(qp.c) += opts.equity_weight * z * zt / nz;
    }
    return g;
  };

  PgResult res;
  x = qp.project(x);
  double fx = objective(x);
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::VectorXd g = gradient(x);
    const Eigen::VectorXd stepped = qp.project(x - g / lip);
    res.residual = lip * (x - stepped).norm();
    if (res.residual <= opts.tol) {
      res.converged = true;
      break;
    }
    x = stepped;
    fx = objective(x);
    ++res.iterations;
    if (!equity && opts.polish_period > 0 && res.iterations % opts.polish_period == 0) {
      const Eigen::VectorXd cand = polish(qp, ridge, x, gradient(x));
      const double fc = objective(cand);
      if (fc <= fx) {
        x = cand;
        fx = fc;
      }
    }
    if (trace) trace->push_back(fx);
  }
  res.x = x;
  return res;
}

}  // namespace

double voltage_loss(const GridModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    const Eigen::VectorXd& vhat) {
  return (voltages_from_nominal(model, p, q, vhat) - Eigen::VectorXd::Ones(model.bus_count())).squaredNorm();
}

OpfSolution solve_opf_nominal(const GridModel& model, const Eigen::VectorXd& vhat, const OpfOptions& opts) {
  if (opts.ridge < 0) throw ValidationError("solve_opf: ridge must be nonnegative");
  const BoxQp qp = make_qp(model, vhat);
  const int c = qp.c;

  OpfSolution sol;
  const auto main = projected_gradient(qp, opts.ridge, Eigen::VectorXd::Zero(2 * c), opts,
                                       opts.record_trace ? &sol.trace : nullptr);
  sol.p = main.x.head(c);
  sol.q = main.x.tail(c);
  sol.iterations = main.iterations;
  sol.converged = main.converged;
  sol.kkt_residual = main.residual;
  sol.objective = qp.loss(main.x);
  sol.best_objective = sol.objective;
  if (opts.ridge > 0 && opts.equity_weight == 0.0) {
    OpfOptions cont = opts;
    cont.max_iter = std::min(opts.max_iter, 2000);
    const auto refined = projected_gradient(qp, 0.0, main.x, cont, nullptr);
    sol.best_objective = std::min(sol.objective, qp.loss(refined.x));
  }
  return sol;
}

OpfSolution solve_opf(const GridModel& model, const Eigen::VectorXcd& d, const OpfOptions& opts) {
  return solve_opf_nominal(model, nominal_voltage(model, d), opts);
}

double optimality_gap(const GridModel& model, const Eigen::VectorXd& vhat, const OpfSolution& optimum,
                      const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  const int c = model.controllable_count();
  if (p.size() != c || q.size() != c) throw ValidationError("optimality_gap: dimension mismatch");
  for (int n = 0; n < c; ++n) {
    if (!model.boxes()[static_cast<size_t>(n)].contains(p(n), q(n), 1e-12)) {
      throw ValidationError("optimality_gap: (p, q) infeasible at bus " +
                            std::to_string(model.controllable_buses()[static_cast<size_t>(n)]));
    }
  }
  return voltage_loss(model, p, q, vhat) - optimum.best_objective;
}

double optimality_gap(const GridModel& model, const Eigen::VectorXcd& d, const Eigen::VectorXd& p,
                      const Eigen::VectorXd& q, const OpfOptions& opts) {
  const Eigen::VectorXd vhat = nominal_voltage(model, d);
  return optimality_gap(model, vhat, solve_opf_nominal(model, vhat, opts), p, q);
}

}  // namespace gridnif
