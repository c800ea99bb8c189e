#include "gridnif/stability.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridnif/errors.hpp"

namespace gridnif {

using nlohmann::json;

double alpha_star(const Eigen::MatrixXd& r, const Eigen::MatrixXd& x, double tol, const NumericTolerances& num) {
  const auto er = sym_eig(r, num);
  const auto ex = sym_eig(x, num);
  const double r_min = er.eigenvalues(0);
  if (!(r_min > 0)) throw ValidationError("alpha_star: R must be positive definite");
  const double upper = 2.0 * ex.eigenvalues(ex.eigenvalues.size() - 1) / r_min;
  if (!(upper > 0)) return 0.0;
  auto objective = [&](double alpha) { return spectral_norm(Eigen::MatrixXd(x - alpha * r), num); };
  return minimize_scalar(objective, 0.0, upper, tol);
}

NetworkConstants network_constants(const Eigen::MatrixXd& r, const Eigen::MatrixXd& x, const StabilityOptions& opts) {
  NetworkConstants k;
  k.alpha_star = alpha_star(r, x, opts.alpha_tol, opts.numeric);
  k.xhat = x - k.alpha_star * r;
  k.xhat_norm = spectral_norm(k.xhat, opts.numeric);
  // The line search only pins alpha to alpha_tol, so test proportionality with
  // the least-squares ratio. A residual at rounding level means X = alpha R.
  const double rr = r.squaredNorm();
  const double ratio = rr > 0 ? (x.array() * r.array()).sum() / rr : 0.0;
  if (ratio >= 0 && spectral_norm(Eigen::MatrixXd(x - ratio * r), opts.numeric) <=
                        64.0 * std::numeric_limits<double>::epsilon() * spectral_norm(x, opts.numeric)) {
    k.alpha_star = ratio;
    k.xhat.setZero();
    k.xhat_norm = 0.0;
  }
  k.kappa_r_half = kappa_sqrt(r, opts.numeric);
  k.r_norm = spectral_norm(r, opts.numeric);
  k.r_half = sqrt_psd(r, opts.numeric);
  k.r_inv_half = inv_sqrt_psd(r, opts.numeric);
  const double denom = k.kappa_r_half * k.xhat_norm;
  k.lq_budget = denom > 0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
  return k;
}

NetworkConstants network_constants(const GridModel& model, const StabilityOptions& opts) {
  return network_constants(model.r(), model.x(), opts);
}

double eps_bound(const NetworkConstants& k, double l_p, double l_q) {
  const double denom = 1.0 + k.kappa_r_half * l_q * k.xhat_norm + (l_p + k.alpha_star * l_q) * k.r_norm;
  return std::min(1.0, 2.0 / denom);
}

StabilityCertificate certify(const ControllerBank& bank, const NetworkConstants& k, double eps,
                             const StabilityOptions& opts) {
  bank.validate();
  StabilityCertificate c;
  c.alpha_star = k.alpha_star;
  c.xhat_norm = k.xhat_norm;
  c.kappa_r_half = k.kappa_r_half;
  c.r_norm = k.r_norm;
  c.lq_budget = k.lq_budget;
  const auto slopes = slope_bounds(bank);
  c.l_p = slopes.l_p;
  c.l_q = slopes.l_q;
  c.eps = eps;
  c.eps_max = eps_bound(k, c.l_p, c.l_q);

  const double limit = std::isinf(k.lq_budget) ? k.lq_budget : k.lq_budget * (1.0 - opts.margin);
  for (size_t n = 0; n < bank.nodes.size(); ++n) {
    if (!bank.nodes[n].monotone_signs()) c.sign_violations.push_back(bank.buses[n]);
    if (!(bank.nodes[n].q_slope_bound() < limit)) c.budget_violations.push_back(bank.buses[n]);
  }
  c.cond_monotone = c.sign_violations.empty();
  c.cond_slope = c.budget_violations.empty();
  c.cond_step = eps >= 0.0 && eps < c.eps_max * (1.0 - opts.margin);
  c.overall = c.cond_monotone && c.cond_slope;
  return c;
}

StabilityCertificate certify(const ControllerBank& bank, const GridModel& model, double eps,
                             const StabilityOptions& opts) {
  bank.check_matches(model);
  return certify(bank, network_constants(model, opts), eps, opts);
}

std::string StabilityCertificate::to_json() const {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json doc;
  doc["alpha_star"] = alpha_star;
  doc["Xhat_norm"] = xhat_norm;
  doc["kappa_R_half"] = kappa_r_half;
  doc["R_norm"] = r_norm;
  doc["L_p"] = l_p;
  doc["L_q"] = l_q;
  doc["Lq_budget"] = finite_or_null(lq_budget);
  doc["eps_max"] = eps_max;
  doc["eps"] = eps;
  doc["cond_10a"] = cond_monotone;
  doc["cond_10b"] = cond_slope;
  doc["cond_10c"] = cond_step;
  doc["overall"] = overall;
  doc["sign_violations"] = sign_violations;
  doc["budget_violations"] = budget_violations;
  doc["inputs"] = json::object();
  for (const auto& [key, value] : inputs) doc["inputs"][key] = value;
  return doc.dump(2);
}

Eigen::VectorXd project_q_weights(const Eigen::VectorXd& w, const Eigen::VectorXd& a, double budget) {
  if (w.size() != a.size()) throw ValidationError("project_q_weights: size mismatch");
  if (!(budget > 0)) throw ValidationError("project_q_weights: budget must be positive");
  if ((a.array() < 0).any()) throw ValidationError("project_q_weights: weights a must be nonnegative");

  // Work with magnitudes u = -w >= 0: minimise ||u - y||^2 over u >= 0, a.u <= budget.
  const Eigen::VectorXd y = (-w).cwiseMax(0.0);
  if (std::isinf(budget) || a.dot(y) <= budget) return -y;

  std::vector<Eigen::Index> idx;
  for (Eigen::Index h = 0; h < y.size(); ++h)
    if (a(h) > 0 && y(h) > 0) idx.push_back(h);
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) {
    const double ti = y(i) / a(i);
    const double tj = y(j) / a(j);
    return ti > tj || (ti == tj && i < j);
  });

  // u_h(tau) = max(y_h - tau a_h, 0); find tau with a.u(tau) = budget.
  double s_ay = 0.0;
  double s_aa = 0.0;
  double tau = 0.0;
  for (size_t k = 0; k < idx.size(); ++k) {
    const auto h = idx[k];
    s_ay += a(h) * y(h);
    s_aa += a(h) * a(h);
    tau = (s_ay - budget) / s_aa;
    const bool last = k + 1 == idx.size();
    if (last || tau >= y(idx[k + 1]) / a(idx[k + 1])) break;
  }
  Eigen::VectorXd u = y;
  for (Eigen::Index h = 0; h < y.size(); ++h)
    if (a(h) > 0) u(h) = std::max(y(h) - tau * a(h), 0.0);
  return -u;
}

ControllerBank project_bank(const ControllerBank& bank, double budget) {
  if (!(budget > 0)) throw ValidationError("project_bank: budget must be positive");
  bank.validate();
  ControllerBank out = bank;
  for (auto& n : out.nodes) {
    n.a = n.a.cwiseMax(0.0);
    n.w_p = n.w_p.cwiseMin(0.0);
    n.w_q = n.w_q.cwiseMin(0.0);
    if (n.q_slope_bound() > budget) n.w_q = project_q_weights(n.w_q, n.a, budget);
  }
  return out;
}

ControllerBank project_bank(const ControllerBank& bank, const NetworkConstants& k, const StabilityOptions& opts) {
  const double budget = std::isinf(k.lq_budget) ? k.lq_budget : k.lq_budget * (1.0 - opts.projection_shrink);
  return project_bank(bank, budget);
}

ControllerBank project_bank(const ControllerBank& bank, const GridModel& model, const StabilityOptions& opts) {
  bank.check_matches(model);
  return project_bank(bank, network_constants(model, opts), opts);
}

SecantDiagnostics secant_diagnostics(const GridModel& model, const NetworkConstants& k,
                                     const EquilibriumPolicy& policy, const Eigen::VectorXcd& d,
                                     const Eigen::VectorXd& v, const Eigen::VectorXd& v_other, double eps) {
  const int c = model.controllable_count();
  if (v.size() != c || v_other.size() != c || policy.size() != c) {
    throw ValidationError("secant_diagnostics: dimension mismatch");
  }
  const Eigen::VectorXcd dc = controllable_demand(model, d);
  SecantDiagnostics out;
  out.p_secant = Eigen::VectorXd::Zero(c);
  out.q_secant = Eigen::VectorXd::Zero(c);
  for (int n = 0; n < c; ++n) {
    const double dv = v(n) - v_other(n);
    if (dv == 0.0) continue;
    const auto s1 = policy.respond(n, v(n), dc(n));
    const auto s2 = policy.respond(n, v_other(n), dc(n));
    out.p_secant(n) = (s1.p - s2.p) / dv;
    out.q_secant(n) = (s1.q - s2.q) / dv;
  }
  const Eigen::MatrixXd r = model.r();
  const Eigen::MatrixXd x = model.x();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(c, c);
  out.s = (1.0 - eps) * id + eps * r * out.p_secant.asDiagonal() + eps * x * out.q_secant.asDiagonal();

  const Eigen::VectorXd abs_p = out.p_secant.cwiseAbs();
  const Eigen::VectorXd abs_q = out.q_secant.cwiseAbs();
  const Eigen::MatrixXd z1 =
      (1.0 - eps) * id - eps * k.r_half * (abs_p + k.alpha_star * abs_q).asDiagonal() * k.r_half;
  const Eigen::MatrixXd z2 = eps * k.r_inv_half * k.xhat * abs_q.asDiagonal() * k.r_half;
  out.z1_norm = spectral_norm(Eigen::MatrixXd((z1 + z1.transpose()) / 2.0));
  out.z2_norm = operator_norm(z2);
  out.contraction_bound = out.z1_norm + out.z2_norm;
  out.similarity_norm = operator_norm(Eigen::MatrixXd(k.r_inv_half * out.s * k.r_half));
  return out;
}

}  // namespace gridnif
