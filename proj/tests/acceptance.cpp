// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "gridnif/controllers.hpp"
#include "gridnif/grid.hpp"
#include "gridnif/io.hpp"
#include "gridnif/learning.hpp"
#include "gridnif/numerics.hpp"
#include "gridnif/opf.hpp"
#include "gridnif/random.hpp"
#include "gridnif/scenarios.hpp"
#include "gridnif/sim.hpp"
#include "gridnif/stability.hpp"

using namespace gridnif;

namespace {

std::string data(const std::string& rel) { return std::string(GRIDNIF_DATA_DIR) + "/" + rel; }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& why) {
    if (!ok) {
      if (pass) detail << "first failure: " << why << "; ";
      pass = false;
    }
  }
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) v.require(false, "runtime over " + std::to_string(budget_s) + " s");
  if (!v.pass) ++failures;
  std::printf("%s criterion %d (%s): %s[%.2f s]\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.str().c_str(),
              secs);
  std::fflush(stdout);
}

FeederSpec random_tree(Rng& rng, int buses, int controllable, double r_lo, double r_hi, double box) {
  FeederSpec spec;
  spec.bus_count = buses;
  for (int k = 1; k < buses; ++k) {
    const int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    const double r = rng.uniform(r_lo, r_hi);
    spec.lines.push_back({parent, k, r, r * rng.uniform(1.0, 2.0)});
  }
  std::vector<int> ids;
  for (int k = 1; k < buses; ++k) ids.push_back(k);
  for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i) {
    std::swap(ids[static_cast<size_t>(i)], ids[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  for (int i = 0; i < controllable; ++i) spec.controllable.push_back({ids[static_cast<size_t>(i)], {0, box, -box, box}});
  return spec;
}

Eigen::VectorXcd random_demand(Rng& rng, int n) {
  Eigen::VectorXcd d(n);
  for (int i = 0; i < n; ++i) d(i) = {rng.uniform(-0.3, 0.2), rng.uniform(-0.1, 0.0)};
  return d;
}

SimState random_state(Rng& rng, const GridModel& m, const Eigen::VectorXcd& d) {
  const int c = m.controllable_count();
  Eigen::VectorXd p(c), q(c);
  for (int n = 0; n < c; ++n) {
    const auto& b = m.boxes()[static_cast<size_t>(n)];
    p(n) = rng.uniform(b.p_min, b.p_max);
    q(n) = rng.uniform(b.q_min, b.q_max);
  }
  return make_state(m, d, p, q);
}

// Shared by the deployment criteria: one scenario pipeline, two trained banks.
struct Deployment {
  GridModel model;
  ScenarioSet day;
  ScenarioSet perturbed;
  TrainConfig config;
  ControllerBank equity_bank;  // lambda = 0.0154
  ControllerBank plain_bank;   // lambda = 0
  double train_seconds = 0.0;
  ProfileResult equity_run, plain_run, baseline_run;
  double profile_seconds = 0.0;
};

Deployment& deployment() {
  static Deployment d = [] {
    Deployment dep;
    dep.model = build_grid_model(load_feeder(data("feeders/ieee37_standin.json")));
    const DayProfileConfig day = load_day_profile(data("configs/day_profile.json"));
    dep.day = synth_scenarios(dep.model.bus_count(), day, 7);
    dep.perturbed = perturb_scenarios(dep.day, 0.05, 8);
    dep.config = load_train_config(data("configs/train_quick.json"));
    const auto z = electrical_distance_feature(dep.model);

    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig cfg = dep.config;
    cfg.equity_weight = 0.0154;
    dep.equity_bank = train(dep.model, dep.day, z, cfg).bank;
    cfg.equity_weight = 0.0;
    dep.plain_bank = train(dep.model, dep.day, z, cfg).bank;
    dep.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto t1 = std::chrono::steady_clock::now();
    const ScenarioSet window = dep.perturbed.window(720, 960);
    ProfileOptions po;
    po.eps = 0.1;
    po.iters_per_minute = 100;
    po.protected_features = z.z;
    dep.equity_run = run_profile(dep.model, NifPolicy(dep.equity_bank), window, po);
    dep.plain_run = run_profile(dep.model, NifPolicy(dep.plain_bank), window, po);
    dep.baseline_run = run_profile(dep.model, make_linear_baseline(dep.model), window, po);
    dep.profile_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    return dep;
  }();
  return d;
}

int call_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gridnif");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

// Euclidean projection of w onto {u <= 0, a.|u| <= budget} by nested grid
// refinement. The last coordinate is resolved exactly given the others.
Eigen::VectorXd brute_force_projection(const Eigen::VectorXd& w, const Eigen::VectorXd& a, double budget) {
  const int h = static_cast<int>(w.size());
  Eigen::VectorXd lo(h), hi(h);
  for (int i = 0; i < h; ++i) {
    lo(i) = -budget / a(i);
    hi(i) = 0.0;
  }
  Eigen::VectorXd best = Eigen::VectorXd::Zero(h);
  double best_d = std::numeric_limits<double>::infinity();
  const int steps = 240;
  for (int level = 0; level < 12; ++level) {
    const int free = h - 1;
    std::vector<int> idx(static_cast<size_t>(free), 0);
    while (true) {
      Eigen::VectorXd u(h);
      double used = 0.0;
      for (int i = 0; i < free; ++i) {
        u(i) = lo(i) + (hi(i) - lo(i)) * idx[static_cast<size_t>(i)] / steps;
        used += a(i) * std::abs(u(i));
      }
      if (used <= budget) {
        const double room = (budget - used) / a(h - 1);
        u(h - 1) = std::clamp(w(h - 1), -room, 0.0);
        const double d = (u - w).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = u;
        }
      }
      int k = 0;
      while (k < free && ++idx[static_cast<size_t>(k)] > steps) idx[static_cast<size_t>(k++)] = 0;
      if (k == free) break;
    }
    for (int i = 0; i < free; ++i) {
      const double span = 4.0 * (hi(i) - lo(i)) / steps;
      lo(i) = std::max(-budget / a(i), best(i) - span);
      hi(i) = std::min(0.0, best(i) + span);
    }
  }
  return best;
}

}  // namespace

int main() {
  criterion(1, "linear-model correctness", 10.0, [](Verdict& v) {
    Rng rng(101);
    double worst = 0.0;
    bool exact = true;
    for (int t = 0; t < 20; ++t) {
      const int buses = 2 + static_cast<int>(rng.below(39));
      const FeederSpec spec =
          random_tree(rng, buses, 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(6, buses - 1)))),
                      0.002, 0.02, 1.0);
      const GridModel m = build_grid_model(spec);
      const Eigen::MatrixXcd full = build_admittance(spec);
      const int n = m.bus_count();
      Eigen::MatrixXcd y(n, n), z(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) y(i, j) = full(m.bus_id(i), m.bus_id(j));
      z.real() = m.rtilde();
      z.imag() = m.xtilde();
      const double err = (y * z - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
      worst = std::max(worst, err);
      const Eigen::VectorXcd d = random_demand(rng, n);
      const int c = m.controllable_count();
      const Eigen::VectorXd v0 = voltages(m, Eigen::VectorXd::Zero(c), Eigen::VectorXd::Zero(c), d);
      exact = exact && (v0.array() == nominal_voltage(m, d).array()).all();
    }
    v.detail << "20 trees, max |Y Z - I| = " << worst << ", zero-injection voltages equal vhat: " << exact << "; ";
    v.require(worst <= 1e-9, "inverse identity");
    v.require(exact, "zero-injection voltages differ from vhat");
  });

  criterion(2, "stability of projected random banks", 60.0, [](Verdict& v) {
    const GridModel m = build_grid_model(load_feeder(data("feeders/ieee37_standin.json")));
    const auto k = network_constants(m);
    const ScenarioSet day = synth_scenarios(m.bus_count(), load_day_profile(data("configs/day_profile.json")), 3);
    Rng rng(202);
    int max_steps = 0;
    double min_eps = 1.0;
    for (int b = 0; b < 10; ++b) {
      ControllerBank bank = initial_bank(m, 10, 1000 + static_cast<std::uint64_t>(b));
      // Steeper than the training initialisation so the sampled banks exercise eps_max < 1.
      for (auto& node : bank.nodes) {
        for (int h = 0; h < node.neurons(); ++h) {
          node.w_p(h) = rng.uniform(-2.0, 0.5);
          node.w_q(h) = rng.uniform(-2.0, 0.5);
          node.a(h) = rng.uniform(-0.5, 5.0);
        }
      }
      bank = project_bank(bank, k);
      const auto cert = certify(bank, k, 0.0);
      const double eps = 0.9 * cert.eps_max;
      min_eps = std::min(min_eps, eps);
      v.require(cert.overall && certify(bank, k, eps).passes(), "projected bank not certified");
      const NifPolicy policy(bank);
      const Eigen::VectorXcd d = day.scenarios[rng.below(day.size())].d;
      SimState a = random_state(rng, m, d), c = random_state(rng, m, d);
      double prev = (k.r_inv_half * (a.v.head(5) - c.v.head(5))).norm();
      // Voltages near 1 carry rounding of about one ulp, magnified by R^{-1/2}.
      const double floor = 64.0 * std::numeric_limits<double>::epsilon() * spectral_norm(k.r_inv_half);
      int steps = 0;
      bool monotone = true;
      double gap = std::numeric_limits<double>::infinity();
      while (steps < 2000) {
        a = step(m, policy, a, d, eps);
        c = step(m, policy, c, d, eps);
        ++steps;
        const double dist = (k.r_inv_half * (a.v.head(5) - c.v.head(5))).norm();
        monotone = monotone && dist <= prev * (1.0 + 1e-12) + floor;
        prev = dist;
        gap = std::max((a.p - c.p).cwiseAbs().maxCoeff(), (a.q - c.q).cwiseAbs().maxCoeff());
        if (gap <= 1e-6 && equilibrium_residual(m, policy, a, d) <= 1e-6) break;
      }
      max_steps = std::max(max_steps, steps);
      v.require(monotone, "transformed distance increased");
      v.require(gap <= 1e-6, "trajectories did not meet within 2000 steps");
    }
    v.detail << "10 banks, smallest eps " << min_eps << ", worst " << max_steps << " steps; ";
  });

  criterion(3, "eps-bound protocol", 300.0, [](Verdict& v) {
    Deployment& dep = deployment();
    const ControllerBank& bank = dep.equity_bank;
    const auto cert = certify(bank, dep.model, 0.1);
    v.detail << "eps_max " << cert.eps_max << "; ";
    const LoadScenario* sc = nullptr;
    for (const auto& s : dep.day.scenarios)
      if (s.minute == 1095) sc = &s;
    v.require(sc != nullptr, "minute 1095 missing");
    if (!sc) return;
    const NifPolicy policy(bank);
    if (0.1 < cert.eps_max) {
      // Open-loop start: every controller applies its response to the uncontrolled voltage.
      const Eigen::VectorXd vhat = nominal_voltage(dep.model, sc->d);
      const Eigen::VectorXcd dc = controllable_demand(dep.model, sc->d);
      Eigen::VectorXd p(5), q(5);
      for (int n = 0; n < 5; ++n) {
        const Setpoint s = policy.respond(n, vhat(n), dc(n));
        p(n) = s.p;
        q(n) = s.q;
      }
      FixedRunOptions fo;
      fo.max_iter = 100;
      fo.tol = 1e-6;
      fo.initial = make_state(dep.model, sc->d, p, q);
      const SimResult open = run_fixed(dep.model, policy, sc->d, 0.1, fo);
      fo.initial.reset();
      const SimResult zero = run_fixed(dep.model, policy, sc->d, 0.1, fo);
      v.detail << "eps 0.1 at minute 1095: " << (open.converged ? "converged" : "not converged") << " in "
               << open.iterations << " iterations from the open-loop start (zero start: "
               << (zero.converged ? std::to_string(zero.iterations) : std::string("not within 100")) << "); ";
      v.require(open.converged, "eps 0.1 did not converge within 100 iterations");
      v.require(cert.cond_step && cert.overall, "certificate rejects eps 0.1");
    }
    if (cert.eps_max < 1.0) {
      const auto dir = std::filesystem::temp_directory_path() / ("gridnif_acc_" + std::to_string(::getpid()));
      std::filesystem::create_directories(dir);
      const std::string path = (dir / "bank.json").string();
      write_text_file(path, controllers_to_json(bank));
      const int code1 = call_cli({"verify", "--feeder", data("feeders/ieee37_standin.json"), "--controllers", path,
                                 "--eps", "1", "--out", (dir / "cert1.json").string()});
      const int code01 = call_cli({"verify", "--feeder", data("feeders/ieee37_standin.json"), "--controllers", path,
                                  "--eps", "0.1", "--out", (dir / "cert01.json").string()});
      std::filesystem::remove_all(dir);
      v.detail << "verify exit codes: eps 1 -> " << code1 << ", eps 0.1 -> " << code01 << "; ";
      v.require(code1 == 2, "verify accepted eps 1");
      v.require(code01 == 0, "verify rejected eps 0.1");
    }
  });

  criterion(4, "projection correctness", 10.0, [](Verdict& v) {
    Rng rng(404);
    const GridModel m = build_grid_model(load_feeder(data("feeders/ieee37_standin.json")));
    const auto k = network_constants(m);
    double worst_budget = 0.0;
    bool signs = true, idem = true;
    for (int t = 0; t < 20; ++t) {
      ControllerBank bank = initial_bank(m, 1 + static_cast<int>(rng.below(8)), rng.next());
      for (auto& n : bank.nodes) {
        for (int h = 0; h < n.neurons(); ++h) {
          n.w_p(h) = rng.uniform(-3.0, 1.0);
          n.w_q(h) = rng.uniform(-3.0, 1.0);
          n.a(h) = rng.uniform(-1.0, 4.0);
        }
      }
      const ControllerBank once = project_bank(bank, k);
      const ControllerBank twice = project_bank(once, k);
      idem = idem && pack_params(once.nodes) == pack_params(twice.nodes);
      for (const auto& n : once.nodes) {
        signs = signs && n.monotone_signs();
        worst_budget = std::max(worst_budget, n.q_slope_bound() - k.lq_budget);
      }
    }
    double worst_dev = 0.0;
    for (int t = 0; t < 60; ++t) {
      const int h = 1 + static_cast<int>(rng.below(3));
      Eigen::VectorXd w(h), a(h);
      for (int i = 0; i < h; ++i) {
        w(i) = rng.uniform(-2.0, 0.5);
        a(i) = rng.uniform(0.2, 2.0);
      }
      const double budget = rng.uniform(0.1, 1.5);
      const Eigen::VectorXd exact = project_q_weights(w, a, budget);
      const Eigen::VectorXd brute = brute_force_projection(w, a, budget);
      worst_dev = std::max(worst_dev, (exact - brute).cwiseAbs().maxCoeff());
    }
    v.detail << "signs exact: " << signs << ", max budget excess " << worst_budget << ", idempotent: " << idem
             << ", max deviation from grid QP (H <= 3) " << worst_dev << "; ";
    v.require(signs, "sign conditions");
    v.require(worst_budget <= 1e-9, "slope budget");
    v.require(idem, "idempotence");
    v.require(worst_dev <= 1e-4, "grid QP mismatch");
  });

  criterion(5, "gradient fidelity", 30.0, [](Verdict& v) {
    Rng rng(505);
    const GridModel m = build_grid_model(load_feeder(data("feeders/ieee37_standin.json")));
    const auto z = electrical_distance_feature(m);
    const ScenarioSet day = synth_scenarios(m.bus_count(), load_day_profile(data("configs/day_profile.json")), 5);
    const char* names[] = {"w_p", "w_q", "a", "b", "c", "bias", "e_p", "e_q"};
    double worst[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int t = 0; t < 50; ++t) {
      const int h = 1 + static_cast<int>(rng.below(4));
      ControllerBank bank = initial_bank(m, h, rng.next());
      for (size_t n = 0; n < bank.nodes.size(); ++n) {
        bank.boxes[n] = {-1e3, 1e3, -1e3, 1e3};  // no clamp is active anywhere
        auto& p = bank.nodes[n];
        for (int i = 0; i < h; ++i) {
          p.w_p(i) = rng.uniform(-1.0, 0.0);
          p.w_q(i) = rng.uniform(-1.0, 0.0);
          p.a(i) = rng.uniform(0.2, 2.0);
          p.b(i) = rng.uniform(-1.0, 1.0);
          p.c(i) = rng.uniform(-1.0, 1.0);
          p.bias(i) = rng.uniform(-1.0, 1.0);
        }
        p.e_p = rng.uniform(0.0, 0.5);
        p.e_q = rng.uniform(-0.3, 0.3);
      }
      const TrainingSample s = make_sample(m, day.scenarios[rng.below(day.size())]);
      const double lambda = t % 2 ? 0.0154 : 0.3;
      BankGradient g;
      sample_loss(m, bank, s, lambda, z, &g);
      const Eigen::VectorXd analytic = pack_params(g);
      const Eigen::VectorXd theta = pack_params(bank.nodes);
      const Eigen::Index per_node = 6 * h + 2;
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const Eigen::Index local = i % per_node;
        const int cls = local < 6 * h ? static_cast<int>(local / h) : static_cast<int>(6 + (local - 6 * h));
        const double step = 1e-6;
        Eigen::VectorXd tp = theta, tm = theta;
        tp(i) += step;
        tm(i) -= step;
        ControllerBank bp = bank, bm = bank;
        unpack_params(tp, bp.nodes);
        unpack_params(tm, bm.nodes);
        const double fd = (sample_loss(m, bp, s, lambda, z, nullptr).total(lambda) -
                           sample_loss(m, bm, s, lambda, z, nullptr).total(lambda)) /
                          (2 * step);
        const double scale = std::max({std::abs(fd), std::abs(analytic(i)), 1e-6});
        worst[cls] = std::max(worst[cls], std::abs(fd - analytic(i)) / scale);
      }
    }
    double overall = 0.0;
    v.detail << "max relative error per class:";
    for (int c = 0; c < 8; ++c) {
      v.detail << " " << names[c] << "=" << worst[c];
      overall = std::max(overall, worst[c]);
    }
    v.detail << "; ";
    v.require(overall < 1e-5, "finite-difference mismatch");
  });

  criterion(6, "OPF oracle vs exhaustive grid", 30.0, [](Verdict& v) {
    Rng rng(606);
    double worst = 0.0, worst_gap = std::numeric_limits<double>::infinity(), worst_below = 0.0;
    for (int t = 0; t < 8; ++t) {
      const int buses = 3 + static_cast<int>(rng.below(8));
      // Large impedances and small boxes keep a 1e-3 grid over all four injections tractable
      // while leaving the box constraints active.
      const FeederSpec spec = random_tree(rng, buses, 2, 0.15, 0.5, 0.015);
      const GridModel m = build_grid_model(spec);
      const int n = m.bus_count();
      Eigen::VectorXcd d(n);
      for (int i = 0; i < n; ++i) d(i) = {rng.uniform(-0.03, 0.03), rng.uniform(-0.015, 0.01)};
      const Eigen::VectorXd vhat = nominal_voltage(m, d);
      const auto sol = solve_opf_nominal(m, vhat);

      Eigen::MatrixXd a(n, 4);
      a << m.r_columns(), m.x_columns();
      const Eigen::Matrix4d hess = a.transpose() * a;
      const Eigen::VectorXd e = vhat - Eigen::VectorXd::Ones(n);
      const Eigen::Vector4d lin = a.transpose() * e;
      const double cst = e.squaredNorm();
      const auto& b0 = m.boxes()[0];
      const auto& b1 = m.boxes()[1];
      const int np0 = static_cast<int>(std::lround((b0.p_max - b0.p_min) / 1e-3));
      const int nq0 = static_cast<int>(std::lround((b0.q_max - b0.q_min) / 1e-3));
      const int np1 = static_cast<int>(std::lround((b1.p_max - b1.p_min) / 1e-3));
      const int nq1 = static_cast<int>(std::lround((b1.q_max - b1.q_min) / 1e-3));
      double best = std::numeric_limits<double>::infinity();
      for (int i0 = 0; i0 <= np0; ++i0)
        for (int j0 = 0; j0 <= nq0; ++j0)
          for (int i1 = 0; i1 <= np1; ++i1)
            for (int j1 = 0; j1 <= nq1; ++j1) {
              const Eigen::Vector4d u(b0.p_min + i0 * 1e-3, b1.p_min + i1 * 1e-3, b0.q_min + j0 * 1e-3,
                                      b1.q_min + j1 * 1e-3);
              best = std::min(best, cst + 2.0 * lin.dot(u) + u.dot(hess * u));
            }
      worst = std::max(worst, std::abs(sol.best_objective - best));
      worst_below = std::max(worst_below, sol.best_objective - best);
      for (int k = 0; k < 200; ++k) {
        Eigen::VectorXd p(2), q(2);
        p << rng.uniform(b0.p_min, b0.p_max), rng.uniform(b1.p_min, b1.p_max);
        q << rng.uniform(b0.q_min, b0.q_max), rng.uniform(b1.q_min, b1.q_max);
        worst_gap = std::min(worst_gap, optimality_gap(m, vhat, sol, p, q));
      }
    }
    v.detail << "8 feeders, max |oracle - grid| = " << worst << ", min gap of random feasible points " << worst_gap
             << "; ";
    v.require(worst <= 1e-5, "objective mismatch");
    v.require(worst_below <= 1e-12, "grid beat the oracle");
    v.require(worst_gap >= -1e-9, "negative gap");
  });

  criterion(7, "performance ordering vs linear baseline", 300.0, [](Verdict& v) {
    Deployment& dep = deployment();
    const double nif = dep.equity_run.mean_opt_gap();
    const double base = dep.baseline_run.mean_opt_gap();
    v.detail << "12:00-16:00 mean gap: NIF (lambda 0.0154) " << nif << " vs Volt/Watt+Volt/Var " << base
             << " (lambda 0 bank " << dep.plain_run.mean_opt_gap() << "), training " << dep.train_seconds
             << " s for both banks; ";
    v.require(dep.config.neurons == 10 && dep.config.epochs == 500, "reduced-scale config expected");
    v.require(nif <= base, "trained bank's gap exceeds the baseline's");
  });

  criterion(8, "equity effect", 600.0, [](Verdict& v) {
    Deployment& dep = deployment();
    const double feq_fair = dep.equity_run.mean_equity_cost();
    const double feq_plain = dep.plain_run.mean_equity_cost();
    const Eigen::VectorXd dist = dep.model.diag_r();
    Eigen::Index near = 0, far = 0;
    dist.minCoeff(&near);
    dist.maxCoeff(&far);
    const Eigen::VectorXd cf = dep.equity_run.mean_curtailment();
    const Eigen::VectorXd cp = dep.plain_run.mean_curtailment();
    const double diff_fair = std::abs(cf(near) - cf(far));
    const double diff_plain = std::abs(cp(near) - cp(far));
    const int near_bus = dep.model.controllable_buses()[static_cast<size_t>(near)];
    const int far_bus = dep.model.controllable_buses()[static_cast<size_t>(far)];
    v.detail << "mean f_eq " << feq_fair << " (lambda 0.0154) vs " << feq_plain << " (lambda 0); |curtailment bus "
             << near_bus << " - bus " << far_bus << "| " << diff_fair << " vs " << diff_plain
             << "; the 10% reduction floor is an artifact-chosen regression threshold; ";
    v.require(feq_fair < feq_plain, "equity cost not lower");
    v.require(diff_plain > 0.0 && diff_fair <= 0.9 * diff_plain, "near/far curtailment gap not reduced by 10%");
  });

  criterion(9, "one-step contraction identity", 5.0, [](Verdict& v) {
    Rng rng(909);
    const GridModel m = build_grid_model(load_feeder(data("feeders/ieee37_standin.json")));
    const auto k = network_constants(m);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      ControllerBank bank = initial_bank(m, 4, rng.next());
      for (auto& node : bank.nodes)
        for (int h = 0; h < 4; ++h) node.w_q(h) = rng.uniform(-3.0, 0.0);
      bank = project_bank(bank, k);
      const NifPolicy policy(bank);
      const Eigen::VectorXcd d = random_demand(rng, m.bus_count());
      const double eps = rng.uniform(0.0, 1.0);
      const SimState a = random_state(rng, m, d), b = random_state(rng, m, d);
      const SimState a1 = step(m, policy, a, d, eps), b1 = step(m, policy, b, d, eps);
      const auto diag = secant_diagnostics(m, k, policy, d, a.v.head(5), b.v.head(5), eps);
      const Eigen::VectorXd lhs = a1.v.head(5) - b1.v.head(5);
      const Eigen::VectorXd rhs = diag.s * (a.v.head(5) - b.v.head(5));
      worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
    v.detail << "100 pairs, max deviation " << worst << "; ";
    v.require(worst <= 1e-12, "identity violated");
  });

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
