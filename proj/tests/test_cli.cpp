#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "gridnif/io.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "gridnif");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = gridnif::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("gridnif_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
  fs::path path_;
};

const std::string kFeeder = gridnif::test::data_path("feeders/ieee37_standin.json");
const std::string kTwoBus = gridnif::test::data_path("feeders/two_bus.json");
const std::string kDay = gridnif::test::data_path("configs/day_profile.json");

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("grid command on the two-bus sample") {
  const auto r = run({"grid", "--feeder", kTwoBus});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc["N"] == 1);
  CHECK(doc["R"][0][0].get<double>() == doctest::Approx(0.01));
  CHECK(doc["X"][0][0].get<double>() == doctest::Approx(0.02));
  CHECK(doc["Lq_budget"].is_null());
}

TEST_CASE("grid command on the stand-in feeder writes a cache and manifest") {
  TempDir tmp;
  const auto r = run({"grid", "--feeder", kFeeder, "--out", tmp.file("model.json")});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc["C"] == 5);
  CHECK(doc["controllable_buses"] == json::array({10, 15, 16, 20, 25}));
  const json cache = json::parse(gridnif::read_text_file(tmp.file("model.json")));
  CHECK(cache["Rtilde"].size() == 36);
  const json manifest = json::parse(gridnif::read_text_file(tmp.file("model.json.manifest.json")));
  CHECK(manifest["command"] == "grid");
  CHECK(manifest["inputs"]["feeder"]["hash"] == gridnif::hash_file(kFeeder));
}

TEST_CASE("malformed input exits 1 without output") {
  TempDir tmp;
  {
    std::ofstream bad(tmp.file("bad.json"));
    bad << "{\"buses\": 2, \"edges\": [";
  }
  const auto r = run({"grid", "--feeder", tmp.file("bad.json"), "--out", tmp.file("model.json")});
  CHECK(r.code == 1);
  CHECK(r.err.find("error") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.file("model.json")));
  CHECK(run({"grid"}).code == 1);
  CHECK(run({"nonsense"}).code == 1);
  CHECK(run({"simulate", "--mode", "sideways"}).code == 1);
}

TEST_CASE("scenario generation and perturbation") {
  TempDir tmp;
  REQUIRE(run({"scenarios", "gen", "--feeder", kFeeder, "--config", kDay, "--seed", "7", "--out", tmp.file("a.csv")})
              .code == 0);
  REQUIRE(run({"scenarios", "gen", "--feeder", kFeeder, "--config", kDay, "--seed", "7", "--out", tmp.file("b.csv")})
              .code == 0);
  CHECK(gridnif::read_text_file(tmp.file("a.csv")) == gridnif::read_text_file(tmp.file("b.csv")));
  const json manifest = json::parse(gridnif::read_text_file(tmp.file("a.csv.manifest.json")));
  CHECK(manifest["seed"] == 7);
  REQUIRE(run({"scenarios", "perturb", "--feeder", kFeeder, "--scenarios", tmp.file("a.csv"), "--fraction", "0.05",
               "--seed", "8", "--out", tmp.file("p.csv")})
              .code == 0);
  CHECK(gridnif::read_text_file(tmp.file("p.csv")) != gridnif::read_text_file(tmp.file("a.csv")));
}

TEST_CASE("train, verify, simulate and report") {
  TempDir tmp;
  REQUIRE(run({"scenarios", "gen", "--feeder", kFeeder, "--config", kDay, "--seed", "7", "--out", tmp.file("day.csv")})
              .code == 0);
  {
    std::ofstream cfg(tmp.file("train.json"));
    cfg << R"({"neurons": 4, "epochs": 20, "batch_size": 32, "learning_rate": 0.01, "projection_period": 10})";
  }
  const std::vector<std::string> train_args{"train",   "--feeder", kFeeder, "--scenarios", tmp.file("day.csv"),
                                            "--config", tmp.file("train.json"), "--from", "720", "--to", "960",
                                            "--seed",  "3"};
  auto with_out = [&](const std::string& out, std::vector<std::string> extra = {}) {
    auto a = train_args;
    a.insert(a.end(), extra.begin(), extra.end());
    a.push_back("--out");
    a.push_back(out);
    return a;
  };
  REQUIRE(run(with_out(tmp.file("bank.json"))).code == 0);
  REQUIRE(run(with_out(tmp.file("bank2.json"), {"--jobs", "3"})).code == 0);
  CHECK(gridnif::read_text_file(tmp.file("bank.json")) == gridnif::read_text_file(tmp.file("bank2.json")));
  const json bank = json::parse(gridnif::read_text_file(tmp.file("bank.json")));
  CHECK(bank.contains("certificate"));
  CHECK(fs::exists(tmp.file("bank.json.trace.csv")));
  CHECK(count_lines(gridnif::read_text_file(tmp.file("bank.json.trace.csv"))) == 21);

  REQUIRE(run(with_out(tmp.file("bank0.json"), {"--lambda", "0"})).code == 0);
  const std::string trace0 = gridnif::read_text_file(tmp.file("bank0.json.trace.csv"));
  CHECK(trace0.rfind("epoch,f_v,f_eq,total,proj_event,grad_norm", 0) == 0);

  const auto v = run({"verify", "--feeder", kFeeder, "--controllers", tmp.file("bank.json"), "--eps", "0.1"});
  CHECK(v.code == 0);
  const json cert = json::parse(v.out);
  const double eps_max = cert["eps_max"].get<double>();
  CHECK(eps_max > 0.1);
  if (eps_max < 1.0) {
    CHECK(run({"verify", "--feeder", kFeeder, "--controllers", tmp.file("bank.json"), "--eps", "1"}).code == 2);
  }

  const auto fixed = run({"simulate", "--feeder", kFeeder, "--controllers", tmp.file("bank.json"), "--scenarios",
                          tmp.file("day.csv"), "--mode", "fixed", "--minute", "1095", "--eps", "0.1", "--iters", "2000",
                          "--trajectory", tmp.file("traj.csv"), "--out", tmp.file("fixed.json")});
  REQUIRE(fixed.code == 0);
  const json fp = json::parse(gridnif::read_text_file(tmp.file("fixed.json")));
  CHECK(fp["converged"] == true);
  CHECK(gridnif::read_text_file(tmp.file("traj.csv")).rfind("t,bus,p,q,v\n", 0) == 0);

  const auto prof = run({"simulate", "--feeder", kFeeder, "--controllers", tmp.file("bank.json"), "--scenarios",
                         tmp.file("day.csv"), "--from", "720", "--to", "960", "--eps", "0.1", "--out",
                         tmp.file("m.csv")});
  REQUIRE(prof.code == 0);
  const std::string metrics = gridnif::read_text_file(tmp.file("m.csv"));
  CHECK(metrics.rfind("minute,iter,max_volt_dev,opt_gap,equity_cost,bus,p,q,v,curtailment\n", 0) == 0);
  CHECK(count_lines(metrics) == 1 + 240 * 5);

  const auto cmp = run({"simulate", "--feeder", kFeeder, "--controllers", tmp.file("bank.json"), "--scenarios",
                        tmp.file("day.csv"), "--from", "720", "--to", "960", "--compare", "baseline", "--out",
                        tmp.file("c.csv")});
  REQUIRE(cmp.code == 0);
  const std::string paired = gridnif::read_text_file(tmp.file("c.csv"));
  CHECK(paired.find("baseline_opt_gap") != std::string::npos);
  CHECK(paired.find("baseline_curtailment") != std::string::npos);

  const auto rep = run({"report", "--metrics", tmp.file("c.csv")});
  REQUIRE(rep.code == 0);
  const json summary = json::parse(rep.out);
  CHECK(summary["primary"]["minutes"] == 240);
  CHECK(summary["baseline"]["mean_curtailment"].size() == 5);

  const auto base = run({"simulate", "--feeder", kFeeder, "--controllers", "baseline", "--scenarios",
                         tmp.file("day.csv"), "--from", "720", "--to", "730"});
  CHECK(base.code == 0);
  CHECK(count_lines(base.out) == 1 + 10 * 5);
}

TEST_CASE("verify reports slope-budget violations with exit 2") {
  TempDir tmp;
  const auto grid = json::parse(run({"grid", "--feeder", kFeeder}).out);
  const double budget = grid["Lq_budget"].get<double>();
  json bank;
  bank["format"] = "gridnif-controllers";
  bank["version"] = 1;
  bank["nodes"] = json::array();
  for (int bus : {10, 15, 16, 20, 25}) {
    const double wq = bus == 20 ? -2.0 * budget : 0.0;
    bank["nodes"].push_back({{"bus", bus}, {"H", 1}, {"w_p", {0.0}}, {"w_q", {wq}}, {"a", {1.0}}, {"b", {0.0}},
                             {"c", {0.0}}, {"bias", {0.0}}, {"e_p", 0.5}, {"e_q", 0.0}, {"p_min", 0.0},
                             {"p_max", 1.0}, {"q_min", -1.0}, {"q_max", 1.0}});
  }
  {
    std::ofstream f(tmp.file("bad.json"));
    f << bank.dump();
  }
  const auto r = run({"verify", "--feeder", kFeeder, "--controllers", tmp.file("bad.json"), "--eps", "0.01"});
  CHECK(r.code == 2);
  const json cert = json::parse(r.out);
  CHECK(cert["budget_violations"] == json::array({20}));

  for (auto& n : bank["nodes"]) n["w_q"] = {0.0};
  {
    std::ofstream f(tmp.file("zero.json"));
    f << bank.dump();
  }
  const auto z = run({"verify", "--feeder", kFeeder, "--controllers", tmp.file("zero.json"), "--eps", "0.5"});
  CHECK(z.code == 0);
  CHECK(json::parse(z.out)["eps_max"].get<double>() == 1.0);
}

TEST_CASE("opf command") {
  TempDir tmp;
  REQUIRE(run({"scenarios", "gen", "--feeder", kFeeder, "--config", kDay, "--seed", "7", "--out", tmp.file("day.csv")})
              .code == 0);
  const auto r = run({"opf", "--feeder", kFeeder, "--scenarios", tmp.file("day.csv"), "--minute", "800"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("minute,bus,p,q,objective,iterations,converged\n", 0) == 0);
  CHECK(count_lines(r.out) == 6);
}

TEST_CASE("divergent training exits 3") {
  TempDir tmp;
  REQUIRE(run({"scenarios", "gen", "--feeder", kFeeder, "--config", kDay, "--seed", "7", "--out", tmp.file("day.csv")})
              .code == 0);
  {
    std::ofstream cfg(tmp.file("wild.json"));
    cfg << R"({"neurons": 3, "epochs": 5, "optimizer": "adam", "learning_rate": 1e308})";
  }
  const auto r = run({"train", "--feeder", kFeeder, "--scenarios", tmp.file("day.csv"), "--config", tmp.file("wild.json"),
                      "--from", "700", "--to", "764", "--out", tmp.file("wild_bank.json")});
  CHECK(r.code == 3);
}
