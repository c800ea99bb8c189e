#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "gridnif/controllers.hpp"
#include "gridnif/errors.hpp"
#include "gridnif/grid.hpp"
#include "gridnif/io.hpp"
#include "gridnif/learning.hpp"
#include "gridnif/opf.hpp"
#include "gridnif/scenarios.hpp"
#include "gridnif/sim.hpp"
#include "gridnif/stability.hpp"

namespace gridnif::cli {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("gridnif");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("GRIDNIF_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return l;
  }();
  return log;
}

struct Options {
  std::string feeder;
  std::string scenarios;
  std::string controllers;
  std::string config;
  std::string out;
  double eps = 0.1;
  std::uint64_t seed = 1;
  bool seed_set = false;
  int jobs = 1;

  // scenarios perturb
  double fraction = 0.05;
  // train
  std::optional<double> lambda;
  std::string trace;
  // simulate
  std::string mode = "profile";
  int minute = -1;
  int iters = 100;
  double tol = 1e-6;
  std::string compare;
  double baseline_eps = -1.0;
  bool cold_start = false;
  std::string trajectory;
  std::string init = "zero";
  int window_first = -1;
  int window_last = -1;
  std::string available = "box";
  // report
  std::string metrics;
};

/// Collects the reproducibility record of one command.
class Manifest {
public:
  explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& role, const std::string& path) {
    if (!path.empty()) inputs_[role] = {path, hash_file(path)};
  }
  void output(const std::string& role, const std::string& path) {
    if (!path.empty()) outputs_[role] = {path, hash_file(path)};
  }
  void config(const std::string& text) { config_hash_ = hash_text(text); }
  void seed(std::uint64_t s) { seed_ = s; }

  std::string to_json() const {
    json doc;
    doc["command"] = command_;
    doc["config_hash"] = config_hash_;
    doc["seed"] = seed_ ? json(*seed_) : json(nullptr);
    doc["versions"] = {{"gridnif", kVersion}, {"controller_format", 1}};
    doc["inputs"] = json::object();
    for (const auto& [role, entry] : inputs_) doc["inputs"][role] = {{"path", entry.first}, {"hash", entry.second}};
    doc["outputs"] = json::object();
    for (const auto& [role, entry] : outputs_) doc["outputs"][role] = {{"path", entry.first}, {"hash", entry.second}};
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc["wall_clock_seconds"] = secs;
    return doc.dump(2) + "\n";
  }

  void emit(const std::string& out_path) const {
    if (out_path.empty()) {
      logger()->info("manifest: {}", to_json());
      return;
    }
    write_text_file(out_path + ".manifest.json", to_json());
  }

private:
  std::string command_;
  std::string config_hash_;
  std::optional<std::uint64_t> seed_;
  std::map<std::string, std::pair<std::string, std::string>> inputs_;
  std::map<std::string, std::pair<std::string, std::string>> outputs_;
  std::chrono::steady_clock::time_point start_;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing required flag ") + flag);
}

GridModel load_model(const Options& o) {
  require(o.feeder, "--feeder");
  return build_grid_model(load_feeder(o.feeder));
}

ScenarioSet load_window(const Options& o, const GridModel& model) {
  require(o.scenarios, "--scenarios");
  ScenarioSet set = load_scenarios(o.scenarios, model.bus_count());
  if (o.window_first >= 0 || o.window_last >= 0) {
    const int first = o.window_first >= 0 ? o.window_first : 0;
    const int last = o.window_last >= 0 ? o.window_last : std::numeric_limits<int>::max();
    set = set.window(first, last);
    if (set.empty()) throw ValidationError("scenario window [" + std::to_string(first) + ", " +
                                           std::to_string(last) + ") is empty");
  }
  return set;
}

void emit_text(const Options& o, const std::string& text, std::ostream& out) {
  if (o.out.empty()) {
    out << text;
  } else {
    write_text_file(o.out, text);
  }
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

int cmd_grid(const Options& o, std::ostream& out) {
  Manifest manifest("grid");
  manifest.input("feeder", o.feeder);
  const GridModel model = load_model(o);
  const auto er = sym_eig(model.r());
  const auto ex = sym_eig(model.x());
  const auto k = network_constants(model);

  json report;
  report["name"] = model.spec().name;
  report["N"] = model.bus_count();
  report["C"] = model.controllable_count();
  report["controllable_buses"] = model.controllable_buses();
  report["R_lambda_min"] = er.eigenvalues(0);
  report["R_lambda_max"] = er.eigenvalues(er.eigenvalues.size() - 1);
  report["X_lambda_min"] = ex.eigenvalues(0);
  report["X_lambda_max"] = ex.eigenvalues(ex.eigenvalues.size() - 1);
  report["kappa_R_half"] = k.kappa_r_half;
  report["alpha_star"] = k.alpha_star;
  report["Xhat_norm"] = k.xhat_norm;
  report["Lq_budget"] = std::isfinite(k.lq_budget) ? json(k.lq_budget) : json(nullptr);
  report["R"] = matrix_json(model.r());
  report["X"] = matrix_json(model.x());
  out << report.dump(2) << "\n";

  if (!o.out.empty()) {
    json cache = report;
    cache["bus_order"] = model.bus_order();
    cache["Rtilde"] = matrix_json(model.rtilde());
    cache["Xtilde"] = matrix_json(model.xtilde());
    write_text_file(o.out, cache.dump(2) + "\n");
    manifest.output("model", o.out);
  }
  manifest.emit(o.out);
  return ok;
}

int cmd_scenarios_gen(const Options& o) {
  Manifest manifest("scenarios gen");
  manifest.input("feeder", o.feeder);
  manifest.input("config", o.config);
  manifest.seed(o.seed);
  require(o.config, "--config");
  require(o.out, "--out");
  require(o.feeder, "--feeder");
  const FeederSpec spec = load_feeder(o.feeder);
  spec.validate();
  const auto text = read_text_file(o.config);
  manifest.config(text);
  const auto set = synth_scenarios(spec.bus_count - 1, parse_day_profile_json(text), o.seed);
  std::ostringstream csv;
  write_scenarios_csv(csv, set);
  write_text_file(o.out, csv.str());
  manifest.output("scenarios", o.out);
  manifest.emit(o.out);
  logger()->info("wrote {} scenarios to {}", set.size(), o.out);
  return ok;
}

int cmd_scenarios_perturb(const Options& o) {
  Manifest manifest("scenarios perturb");
  manifest.input("feeder", o.feeder);
  manifest.input("scenarios", o.scenarios);
  manifest.seed(o.seed);
  require(o.feeder, "--feeder");
  require(o.scenarios, "--scenarios");
  require(o.out, "--out");
  const FeederSpec spec = load_feeder(o.feeder);
  spec.validate();
  manifest.config("fraction=" + format_double(o.fraction));
  const auto set = load_scenarios(o.scenarios, spec.bus_count - 1);
  const auto perturbed = perturb_scenarios(set, o.fraction, o.seed);
  std::ostringstream csv;
  write_scenarios_csv(csv, perturbed);
  write_text_file(o.out, csv.str());
  manifest.output("scenarios", o.out);
  manifest.emit(o.out);
  return ok;
}

int cmd_train(const Options& o) {
  Manifest manifest("train");
  manifest.input("feeder", o.feeder);
  manifest.input("scenarios", o.scenarios);
  manifest.input("config", o.config);
  require(o.out, "--out");
  const GridModel model = load_model(o);
  const ScenarioSet scenarios = load_window(o, model);
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_train_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  if (o.lambda) cfg.equity_weight = *o.lambda;
  cfg.jobs = o.jobs;
  cfg.validate();
  manifest.seed(cfg.seed);
  manifest.config(cfg.to_json());

  const ProtectedFeatures features = electrical_distance_feature(model);
  auto log = logger();
  const auto progress = [&](const EpochRecord& e) {
    if (e.epoch == 1 || e.epoch % 50 == 0 || e.epoch == cfg.epochs) {
      log->info("epoch {} f_v {:.6e} f_eq {:.6e} total {:.6e}", e.epoch, e.f_v, e.f_eq, e.total);
    }
  };
  TrainResult result = train(model, scenarios, features, cfg, {}, progress);

  const auto k = network_constants(model);
  StabilityCertificate cert = certify(result.bank, k, o.eps);
  cert.inputs["feeder"] = hash_file(o.feeder);
  cert.inputs["scenarios"] = hash_file(o.scenarios);
  cert.inputs["train_config"] = hash_text(cfg.to_json());
  result.bank.certificate_json = cert.to_json();
  result.bank.metadata["feeder"] = model.spec().name;

  const std::string trace_path = o.trace.empty() ? o.out + ".trace.csv" : o.trace;
  std::ostringstream trace;
  result.trace.write_csv(trace);
  write_text_file(trace_path, trace.str());
  write_text_file(o.out, controllers_to_json(result.bank));
  manifest.output("controllers", o.out);
  manifest.output("trace", trace_path);
  manifest.emit(o.out);
  if (!cert.overall) {
    log->error("trained bank failed certification");
    return certification_failure;
  }
  return ok;
}

int cmd_verify(const Options& o, std::ostream& out) {
  Manifest manifest("verify");
  manifest.input("feeder", o.feeder);
  manifest.input("controllers", o.controllers);
  require(o.controllers, "--controllers");
  const GridModel model = load_model(o);
  const ControllerBank bank = load_controllers(o.controllers);
  manifest.config("eps=" + format_double(o.eps));
  StabilityCertificate cert = certify(bank, model, o.eps);
  cert.inputs["feeder"] = hash_file(o.feeder);
  cert.inputs["controllers"] = hash_file(o.controllers);
  const std::string text = cert.to_json() + "\n";
  out << text;
  if (!o.out.empty()) {
    write_text_file(o.out, text);
    manifest.output("certificate", o.out);
  }
  manifest.emit(o.out);
  if (!cert.cond_monotone) logger()->warn("sign condition violated at buses {}", json(cert.sign_violations).dump());
  if (!cert.cond_slope) logger()->warn("slope budget exceeded at buses {}", json(cert.budget_violations).dump());
  if (!cert.cond_step) logger()->warn("eps {} is not below eps_max {}", o.eps, cert.eps_max);
  return cert.passes() ? ok : certification_failure;
}

std::unique_ptr<EquilibriumPolicy> load_policy(const Options& o, const GridModel& model, ControllerBank& storage) {
  if (o.controllers == "baseline") return std::make_unique<LinearPolicy>(make_linear_baseline(model));
  require(o.controllers, "--controllers");
  storage = load_controllers(o.controllers);
  storage.check_matches(model);
  return std::make_unique<NifPolicy>(storage);
}

int cmd_simulate(const Options& o, std::ostream& out) {
  Manifest manifest("simulate");
  manifest.input("feeder", o.feeder);
  manifest.input("scenarios", o.scenarios);
  if (o.controllers != "baseline") manifest.input("controllers", o.controllers);
  const GridModel model = load_model(o);
  const ScenarioSet scenarios = load_window(o, model);
  ControllerBank bank;
  const auto policy = load_policy(o, model, bank);
  std::ostringstream cfg;
  cfg << "mode=" << o.mode << ";eps=" << format_double(o.eps) << ";iters=" << o.iters << ";tol=" << format_double(o.tol)
      << ";compare=" << o.compare << ";baseline_eps=" << format_double(o.baseline_eps) << ";cold=" << o.cold_start
      << ";init=" << o.init << ";available=" << o.available;
  manifest.config(cfg.str());

  if (o.mode == "fixed") {
    const LoadScenario* sc = nullptr;
    for (const auto& s : scenarios.scenarios)
      if (s.minute == o.minute) sc = &s;
    if (!sc) throw ValidationError("no scenario at minute " + std::to_string(o.minute));
    FixedRunOptions fo;
    fo.max_iter = o.iters;
    fo.tol = o.tol;
    fo.record_trajectory = !o.trajectory.empty();
    if (o.init == "open_loop") {
      const Eigen::VectorXd vhat = nominal_voltage(model, sc->d);
      const Eigen::VectorXcd dc = controllable_demand(model, sc->d);
      Eigen::VectorXd p(model.controllable_count()), q(model.controllable_count());
      for (int n = 0; n < model.controllable_count(); ++n) {
        const auto s = policy->respond(n, vhat(n), dc(n));
        p(n) = s.p;
        q(n) = s.q;
      }
      fo.initial = make_state(model, sc->d, p, q);
    } else if (o.init != "zero") {
      throw ValidationError("--init must be 'zero' or 'open_loop'");
    }
    const SimResult res = run_fixed(model, *policy, sc->d, o.eps, fo);
    json doc;
    doc["policy"] = policy->label();
    doc["minute"] = o.minute;
    doc["eps"] = o.eps;
    doc["converged"] = res.converged;
    doc["iterations"] = res.iterations;
    doc["equilibrium_residual"] = res.equilibrium_residual;
    doc["buses"] = model.controllable_buses();
    doc["p"] = vector_json(res.fixed_point.p);
    doc["q"] = vector_json(res.fixed_point.q);
    doc["v"] = vector_json(res.fixed_point.v.head(model.controllable_count()));
    doc["max_volt_dev"] = (res.fixed_point.v.array() - 1.0).abs().maxCoeff();
    emit_text(o, doc.dump(2) + "\n", out);
    if (!o.trajectory.empty()) {
      std::ostringstream tr;
      write_trajectory_csv(tr, model, res);
      write_text_file(o.trajectory, tr.str());
      manifest.output("trajectory", o.trajectory);
    }
    manifest.output("summary", o.out);
    manifest.emit(o.out);
    return ok;
  }
  if (o.mode != "profile") throw ValidationError("--mode must be 'fixed' or 'profile'");

  ProfileOptions po;
  po.eps = o.eps;
  po.iters_per_minute = o.iters;
  po.tol = o.tol;
  po.warm_start = !o.cold_start;
  if (o.available == "pv") {
    po.available = AvailableSource::scenario_pv;
  } else if (o.available != "box") {
    throw ValidationError("--available must be 'box' or 'pv'");
  }
  po.protected_features = electrical_distance_feature(model).z;
  const ProfileResult primary = run_profile(model, *policy, scenarios, po);
  std::ostringstream csv;
  if (o.compare.empty()) {
    write_metrics_csv(csv, primary);
  } else if (o.compare == "baseline") {
    const LinearPolicy baseline = make_linear_baseline(model);
    ProfileOptions bo = po;
    bo.eps = o.baseline_eps > 0 ? o.baseline_eps : o.eps;
    const ProfileResult base = run_profile(model, baseline, scenarios, bo);
    write_comparison_csv(csv, primary, base);
    logger()->info("mean opt gap: {} {:.6e}, baseline(eps={}) {:.6e}", primary.label, primary.mean_opt_gap(), bo.eps,
                   base.mean_opt_gap());
  } else {
    throw ValidationError("--compare only accepts 'baseline'");
  }
  emit_text(o, csv.str(), out);
  manifest.output("metrics", o.out);
  manifest.emit(o.out);
  return ok;
}

int cmd_opf(const Options& o, std::ostream& out) {
  Manifest manifest("opf");
  manifest.input("feeder", o.feeder);
  manifest.input("scenarios", o.scenarios);
  const GridModel model = load_model(o);
  const ScenarioSet scenarios = load_window(o, model);
  std::ostringstream csv;
  csv << "minute,bus,p,q,objective,iterations,converged\n";
  for (const auto& sc : scenarios.scenarios) {
    if (o.minute >= 0 && sc.minute != o.minute) continue;
    const auto sol = solve_opf(model, sc.d);
    for (int n = 0; n < model.controllable_count(); ++n) {
      csv << sc.minute << ',' << model.controllable_buses()[static_cast<size_t>(n)] << ','
          << format_double(sol.p(n)) << ',' << format_double(sol.q(n)) << ',' << format_double(sol.best_objective)
          << ',' << sol.iterations << ',' << (sol.converged ? 1 : 0) << '\n';
    }
  }
  emit_text(o, csv.str(), out);
  manifest.output("optimum", o.out);
  manifest.emit(o.out);
  return ok;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

// Summary statistics of a metrics CSV written by `simulate --mode profile`.
int cmd_report(const Options& o, std::ostream& out) {
  Manifest manifest("report");
  require(o.metrics, "--metrics");
  manifest.input("metrics", o.metrics);
  std::istringstream in(read_text_file(o.metrics));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("report: empty metrics file");
  const auto header = split_csv(line);
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"minute", "max_volt_dev", "opt_gap", "equity_cost", "bus", "curtailment"}) {
    if (!col.count(need)) throw ValidationError(std::string("report: missing column ") + need);
  }
  const bool paired = col.count("baseline_opt_gap") > 0;

  struct Acc {
    double volt = 0, gap = 0, equity = 0;
    std::map<int, double> curt;
    int minutes = 0;
  } nif, base;
  std::map<int, int> rows_per_bus;
  int last_minute = std::numeric_limits<int>::min();
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ValidationError("report: " + o.metrics + ":" + std::to_string(line_no) + ": wrong number of cells");
    }
    const int minute = std::stoi(cells[col["minute"]]);
    const int bus = std::stoi(cells[col["bus"]]);
    if (minute != last_minute) {
      nif.volt += std::stod(cells[col["max_volt_dev"]]);
      nif.gap += std::stod(cells[col["opt_gap"]]);
      nif.equity += std::stod(cells[col["equity_cost"]]);
      ++nif.minutes;
      if (paired) {
        base.volt += std::stod(cells[col["baseline_max_volt_dev"]]);
        base.gap += std::stod(cells[col["baseline_opt_gap"]]);
        base.equity += std::stod(cells[col["baseline_equity_cost"]]);
        ++base.minutes;
      }
      last_minute = minute;
    }
    nif.curt[bus] += std::stod(cells[col["curtailment"]]);
    if (paired) base.curt[bus] += std::stod(cells[col["baseline_curtailment"]]);
  }
  auto summary = [](const Acc& a) {
    json s;
    const double m = std::max(1, a.minutes);
    s["minutes"] = a.minutes;
    s["mean_max_volt_dev"] = a.volt / m;
    s["mean_opt_gap"] = a.gap / m;
    s["mean_equity_cost"] = a.equity / m;
    s["mean_curtailment"] = json::object();
    for (const auto& [bus, total] : a.curt) s["mean_curtailment"][std::to_string(bus)] = total / m;
    return s;
  };
  json doc;
  doc["primary"] = summary(nif);
  if (paired) doc["baseline"] = summary(base);
  emit_text(o, doc.dump(2) + "\n", out);
  manifest.output("report", o.out);
  manifest.emit(o.out);
  return ok;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stable, equity-aware local DER controllers on linearised radial feeders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--feeder", o.feeder, "Feeder JSON file");
    sub->add_option("--out", o.out, "Output file (a manifest is written to <out>.manifest.json)");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { o.seed = s; o.seed_set = true; }, "Random seed");
  };
  auto add_window = [&](CLI::App* sub) {
    sub->add_option("--from", o.window_first, "First minute to include");
    sub->add_option("--to", o.window_last, "Stop before this minute");
  };

  auto* grid = app.add_subcommand("grid", "Build the linearised model and print its constants");
  add_common(grid);

  auto* scen = app.add_subcommand("scenarios", "Generate or perturb minute-level scenarios");
  scen->require_subcommand(1);
  auto* gen = scen->add_subcommand("gen", "Synthesise a day profile");
  add_common(gen);
  add_seed(gen);
  gen->add_option("--config", o.config, "Day-profile JSON");
  auto* perturb = scen->add_subcommand("perturb", "Multiply demands by U[1-f, 1+f] factors");
  add_common(perturb);
  add_seed(perturb);
  perturb->add_option("--scenarios", o.scenarios, "Scenario CSV");
  perturb->add_option("--fraction", o.fraction, "Perturbation fraction")->check(CLI::Range(0.0, 0.999));

  auto* tr = app.add_subcommand("train", "Train, project and certify a controller bank");
  add_common(tr);
  add_seed(tr);
  add_window(tr);
  tr->add_option("--scenarios", o.scenarios, "Scenario CSV");
  tr->add_option("--config", o.config, "Training config JSON");
  tr->add_option("--eps", o.eps, "Step size recorded in the embedded certificate");
  tr->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  tr->add_option_function<double>("--lambda", [&](double l) { o.lambda = l; }, "Override the equity weight");
  tr->add_option("--trace", o.trace, "Training trace CSV (default <out>.trace.csv)");

  auto* verify = app.add_subcommand("verify", "Certify a bank; exit 0 only when stable at --eps");
  add_common(verify);
  verify->add_option("--controllers", o.controllers, "Controller JSON");
  verify->add_option("--eps", o.eps, "Step size to check");

  auto* sim = app.add_subcommand("simulate", "Run the incremental dynamics");
  add_common(sim);
  add_window(sim);
  sim->add_option("--controllers", o.controllers, "Controller JSON, or 'baseline' for Volt/Watt + Volt/Var");
  sim->add_option("--scenarios", o.scenarios, "Scenario CSV");
  sim->add_option("--eps", o.eps, "Step size");
  sim->add_option("--mode", o.mode, "fixed | profile")->check(CLI::IsMember({"fixed", "profile"}));
  sim->add_option("--minute", o.minute, "Scenario minute for fixed mode");
  sim->add_option("--iters", o.iters, "Iterations (per minute in profile mode)");
  sim->add_option("--tol", o.tol, "Convergence tolerance on injections");
  sim->add_option("--compare", o.compare, "'baseline' adds paired linear-control columns");
  sim->add_option("--baseline-eps", o.baseline_eps, "Step size of the baseline run (default --eps; 1 = direct)");
  sim->add_flag("--cold-start", o.cold_start, "Restart every minute from zero injections");
  sim->add_option("--init", o.init, "Fixed-mode start: zero | open_loop");
  sim->add_option("--trajectory", o.trajectory, "Fixed-mode trajectory CSV");
  sim->add_option("--available", o.available, "Curtailment reference: box | pv");
  sim->add_option("--jobs", o.jobs, "Accepted for symmetry; a simulation is sequential");

  auto* opf = app.add_subcommand("opf", "Solve the linearised OPF per minute");
  add_common(opf);
  add_window(opf);
  opf->add_option("--scenarios", o.scenarios, "Scenario CSV");
  opf->add_option("--minute", o.minute, "Only this minute");

  auto* report = app.add_subcommand("report", "Summarise a metrics CSV");
  report->add_option("--metrics", o.metrics, "Metrics CSV from simulate");
  report->add_option("--out", o.out, "Output JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  }

  try {
    if (grid->parsed()) return cmd_grid(o, out);
    if (gen->parsed()) return cmd_scenarios_gen(o);
    if (perturb->parsed()) return cmd_scenarios_perturb(o);
    if (tr->parsed()) return cmd_train(o);
    if (verify->parsed()) return cmd_verify(o, out);
    if (sim->parsed()) return cmd_simulate(o, out);
    if (opf->parsed()) return cmd_opf(o, out);
    if (report->parsed()) return cmd_report(o, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return divergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  }
  err << "error: no command\n";
  return validation_failure;
}

}  // namespace gridnif::cli
