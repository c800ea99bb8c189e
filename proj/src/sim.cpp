#include "gridnif/sim.hpp"

#include <cmath>
#include <map>
#include <ostream>

#include "gridnif/errors.hpp"
#include "gridnif/io.hpp"

namespace gridnif {

namespace {

struct Demand {
  Eigen::VectorXd vhat;
  Eigen::VectorXcd dc;
};

Demand prepare(const GridModel& model, const Eigen::VectorXcd& d) {
  return {nominal_voltage(model, d), controllable_demand(model, d)};
}

void check_policy(const GridModel& model, const EquilibriumPolicy& policy) {
  if (policy.size() != model.controllable_count()) {
    throw ValidationError("simulation: policy has " + std::to_string(policy.size()) + " buses, feeder has " +
                          std::to_string(model.controllable_count()));
  }
}

// Returns the sup-norm change of (p, q).
double advance(const GridModel& model, const EquilibriumPolicy& policy, const Demand& dem, double eps,
               SimState& s) {
  const int c = model.controllable_count();
  double change = 0.0;
  for (int n = 0; n < c; ++n) {
    const auto target = policy.respond(n, s.v(n), dem.dc(n));
    const double np = (1.0 - eps) * s.p(n) + eps * target.p;
    const double nq = (1.0 - eps) * s.q(n) + eps * target.q;
    change = std::max({change, std::abs(np - s.p(n)), std::abs(nq - s.q(n))});
    s.p(n) = np;
    s.q(n) = nq;
  }
  s.v = voltages_from_nominal(model, s.p, s.q, dem.vhat);
  ++s.t;
  return change;
}

double residual(const EquilibriumPolicy& policy, const Demand& dem, const SimState& s) {
  double r = 0.0;
  for (int n = 0; n < policy.size(); ++n) {
    const auto target = policy.respond(n, s.v(n), dem.dc(n));
    r = std::max({r, std::abs(s.p(n) - target.p), std::abs(s.q(n) - target.q)});
  }
  return r;
}

}  // namespace

SimState make_state(const GridModel& model, const Eigen::VectorXcd& d, const Eigen::VectorXd& p,
                    const Eigen::VectorXd& q) {
  SimState s;
  s.p = p;
  s.q = q;
  s.v = voltages(model, p, q, d);
  return s;
}

SimState initial_state(const GridModel& model, const Eigen::VectorXcd& d) {
  const int c = model.controllable_count();
  Eigen::VectorXd p(c), q(c);
  for (int n = 0; n < c; ++n) {
    const auto& box = model.boxes()[static_cast<size_t>(n)];
    p(n) = box.clamp_p(0.0);
    q(n) = box.clamp_q(0.0);
  }
  return make_state(model, d, p, q);
}

SimState step(const GridModel& model, const EquilibriumPolicy& policy, const SimState& state,
              const Eigen::VectorXcd& d, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ValidationError("step: eps must lie in [0, 1]");
  check_policy(model, policy);
  SimState next = state;
  advance(model, policy, prepare(model, d), eps, next);
  return next;
}

double equilibrium_residual(const GridModel& model, const EquilibriumPolicy& policy, const SimState& state,
                            const Eigen::VectorXcd& d) {
  check_policy(model, policy);
  return residual(policy, prepare(model, d), state);
}

SimResult run_fixed(const GridModel& model, const EquilibriumPolicy& policy, const Eigen::VectorXcd& d, double eps,
                    const FixedRunOptions& opts) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("run_fixed: eps must lie in (0, 1]");
  if (opts.max_iter < 0) throw ValidationError("run_fixed: max_iter must be nonnegative");
  check_policy(model, policy);
  const Demand dem = prepare(model, d);

  SimState s = opts.initial ? *opts.initial : initial_state(model, d);
  if (opts.initial) s.v = voltages_from_nominal(model, s.p, s.q, dem.vhat);
  s.t = 0;

  SimResult res;
  if (opts.record_trajectory) res.trajectory.push_back(s);
  for (int it = 0; it < opts.max_iter; ++it) {
    const double change = advance(model, policy, dem, eps, s);
    ++res.iterations;
    if (opts.record_trajectory) res.trajectory.push_back(s);
    if (change <= opts.tol) {
      res.converged = true;
      break;
    }
  }
  res.equilibrium_residual = residual(policy, dem, s);
  res.fixed_point = std::move(s);
  return res;
}

Eigen::VectorXd curtailment(const Eigen::VectorXd& available, const Eigen::VectorXd& p) {
  if (available.size() != p.size()) throw ValidationError("curtailment: size mismatch");
  return (available - p).cwiseMax(0.0);
}

double ProfileResult::mean_opt_gap() const {
  double s = 0.0;
  for (const auto& m : minutes) s += m.opt_gap;
  return minutes.empty() ? 0.0 : s / static_cast<double>(minutes.size());
}

double ProfileResult::mean_max_volt_dev() const {
  double s = 0.0;
  for (const auto& m : minutes) s += m.max_volt_dev;
  return minutes.empty() ? 0.0 : s / static_cast<double>(minutes.size());
}

double ProfileResult::mean_equity_cost() const {
  double s = 0.0;
  for (const auto& m : minutes) s += m.equity_cost;
  return minutes.empty() ? 0.0 : s / static_cast<double>(minutes.size());
}

Eigen::VectorXd ProfileResult::mean_curtailment() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(buses.size()));
  for (const auto& m : minutes) s += m.curtailment;
  return minutes.empty() ? s : Eigen::VectorXd(s / static_cast<double>(minutes.size()));
}

ProfileResult run_profile(const GridModel& model, const EquilibriumPolicy& policy, const ScenarioSet& scenarios,
                          const ProfileOptions& opts) {
  if (!(opts.eps > 0.0 && opts.eps <= 1.0)) throw ValidationError("run_profile: eps must lie in (0, 1]");
  if (opts.iters_per_minute < 1) throw ValidationError("run_profile: iters_per_minute must be >= 1");
  check_policy(model, policy);
  scenarios.validate();
  const int c = model.controllable_count();
  const Eigen::MatrixXd& z = opts.protected_features;
  if (z.cols() > 0 && z.rows() != c) throw ValidationError("run_profile: protected features need C rows");

  ProfileResult out;
  out.label = policy.label();
  out.buses = model.controllable_buses();

  std::optional<SimState> carry;
  for (const auto& sc : scenarios.scenarios) {
    const Demand dem = prepare(model, sc.d);
    SimState s = (opts.warm_start && carry) ? *carry : initial_state(model, sc.d);
    s.v = voltages_from_nominal(model, s.p, s.q, dem.vhat);

    MinuteMetrics m;
    m.minute = sc.minute;
    for (int it = 0; it < opts.iters_per_minute; ++it) {
      const double change = advance(model, policy, dem, opts.eps, s);
      ++m.iterations;
      m.converged = change <= opts.tol;
    }
    m.p = s.p;
    m.q = s.q;
    m.v_c = s.v.head(c);
    m.max_volt_dev = (s.v.array() - 1.0).abs().maxCoeff();
    const auto optimum = solve_opf_nominal(model, dem.vhat, opts.opf);
    m.opt_gap = optimality_gap(model, dem.vhat, optimum, s.p, s.q);
    m.equity_cost = z.cols() > 0 ? (z.transpose() * s.p).norm() : 0.0;
    m.available.resize(c);
    for (int n = 0; n < c; ++n) {
      const auto& box = model.boxes()[static_cast<size_t>(n)];
      double avail = box.p_max;
      if (opts.available == AvailableSource::scenario_pv && sc.pv.size() == sc.d.size()) {
        avail = std::min(box.p_max, sc.pv(model.controllable_buses()[static_cast<size_t>(n)] - 1));
      }
      m.available(n) = avail;
    }
    m.curtailment = curtailment(m.available, m.p);
    out.minutes.push_back(std::move(m));
    carry = std::move(s);
  }
  return out;
}

namespace {

void write_row(std::ostream& out, const MinuteMetrics& m, size_t k, int bus) {
  const auto n = static_cast<Eigen::Index>(k);
  out << m.minute << ',' << m.iterations << ',' << format_double(m.max_volt_dev) << ',' << format_double(m.opt_gap)
      << ',' << format_double(m.equity_cost) << ',' << bus << ',' << format_double(m.p(n)) << ','
      << format_double(m.q(n)) << ',' << format_double(m.v_c(n)) << ',' << format_double(m.curtailment(n));
}

}  // namespace

void write_metrics_csv(std::ostream& out, const ProfileResult& result) {
  out << "minute,iter,max_volt_dev,opt_gap,equity_cost,bus,p,q,v,curtailment\n";
  for (const auto& m : result.minutes) {
    for (size_t k = 0; k < result.buses.size(); ++k) {
      write_row(out, m, k, result.buses[k]);
      out << '\n';
    }
  }
}

void write_comparison_csv(std::ostream& out, const ProfileResult& primary, const ProfileResult& baseline) {
  if (primary.minutes.size() != baseline.minutes.size() || primary.buses != baseline.buses) {
    throw ValidationError("comparison: runs cover different minutes or buses");
  }
  out << "minute,iter,max_volt_dev,opt_gap,equity_cost,bus,p,q,v,curtailment,"
         "baseline_iter,baseline_max_volt_dev,baseline_opt_gap,baseline_equity_cost,baseline_p,baseline_q,"
         "baseline_v,baseline_curtailment\n";
  for (size_t t = 0; t < primary.minutes.size(); ++t) {
    const auto& m = primary.minutes[t];
    const auto& b = baseline.minutes[t];
    if (m.minute != b.minute) throw ValidationError("comparison: minute mismatch");
    for (size_t k = 0; k < primary.buses.size(); ++k) {
      const auto n = static_cast<Eigen::Index>(k);
      write_row(out, m, k, primary.buses[k]);
      out << ',' << b.iterations << ',' << format_double(b.max_volt_dev) << ',' << format_double(b.opt_gap) << ','
          << format_double(b.equity_cost) << ',' << format_double(b.p(n)) << ',' << format_double(b.q(n)) << ','
          << format_double(b.v_c(n)) << ',' << format_double(b.curtailment(n)) << '\n';
    }
  }
}

void write_trajectory_csv(std::ostream& out, const GridModel& model, const SimResult& result) {
  out << "t,bus,p,q,v\n";
  const auto& buses = model.controllable_buses();
  for (const auto& s : result.trajectory) {
    for (size_t k = 0; k < buses.size(); ++k) {
      const auto n = static_cast<Eigen::Index>(k);
      out << s.t << ',' << buses[k] << ',' << format_double(s.p(n)) << ',' << format_double(s.q(n)) << ','
          << format_double(s.v(n)) << '\n';
    }
  }
}

}  // namespace gridnif
