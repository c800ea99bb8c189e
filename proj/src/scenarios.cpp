#include "gridnif/scenarios.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "gridnif/errors.hpp"
#include "gridnif/io.hpp"
#include "gridnif/random.hpp"

namespace gridnif {

using nlohmann::json;

void ScenarioSet::validate() const {
  for (size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    if (s.d.size() != bus_count() || s.pv.size() != s.d.size()) {
      throw ValidationError("scenario set: non-uniform bus count at minute " + std::to_string(s.minute));
    }
    if (!s.d.allFinite() || !s.pv.allFinite()) {
      throw ValidationError("scenario set: non-finite demand at minute " + std::to_string(s.minute));
    }
    if (i > 0 && s.minute <= scenarios[i - 1].minute) {
      throw ValidationError("scenario set: minutes must strictly increase (minute " + std::to_string(s.minute) + ")");
    }
  }
}

ScenarioSet ScenarioSet::window(int first, int last) const {
  ScenarioSet out;
  out.source = source;
  out.seed = seed;
  for (const auto& s : scenarios)
    if (s.minute >= first && s.minute < last) out.scenarios.push_back(s);
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, const std::string& where) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw ValidationError(where + ": expected a number, got '" + cell + "'");
  }
  while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
  if (used != cell.size() || !std::isfinite(v)) {
    throw ValidationError(where + ": expected a finite number, got '" + cell + "'");
  }
  return v;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace

ScenarioSet parse_scenarios_csv(std::istream& in, int bus_count, const std::string& origin) {
  struct Row {
    double p_load, q_load, pv;
  };
  std::map<int, std::map<int, Row>> rows;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (line != "minute,bus,p_load,q_load,pv") {
        throw ValidationError(where + ": expected header 'minute,bus,p_load,q_load,pv'");
      }
      header_seen = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw ValidationError(where + ": expected 5 columns, got " + std::to_string(cells.size()));
    const double minute_f = parse_number(trim(cells[0]), where);
    const double bus_f = parse_number(trim(cells[1]), where);
    if (minute_f != std::floor(minute_f) || minute_f < 0) {
      throw ValidationError(where + ": minute must be a nonnegative integer");
    }
    if (bus_f != std::floor(bus_f)) throw ValidationError(where + ": bus must be an integer");
    const int minute = static_cast<int>(minute_f);
    const int bus = static_cast<int>(bus_f);
    if (bus < 1 || bus > bus_count) {
      throw ValidationError(where + ": bus " + std::to_string(bus) + " out of range 1.." + std::to_string(bus_count));
    }
    Row r{parse_number(trim(cells[2]), where), parse_number(trim(cells[3]), where),
          parse_number(trim(cells[4]), where)};
    if (!rows[minute].emplace(bus, r).second) {
      throw ValidationError(where + ": duplicate row for minute " + std::to_string(minute) + ", bus " +
                            std::to_string(bus));
    }
  }
  if (!header_seen) throw ValidationError(origin + ": missing header");

  ScenarioSet set;
  set.source = "file:" + origin;
  for (const auto& [minute, buses] : rows) {
    LoadScenario s;
    s.minute = minute;
    s.d = Eigen::VectorXcd::Zero(bus_count);
    s.pv = Eigen::VectorXd::Zero(bus_count);
    for (const auto& [bus, r] : buses) {
      s.d(bus - 1) = {r.pv - r.p_load, -r.q_load};
      s.pv(bus - 1) = r.pv;
    }
    set.scenarios.push_back(std::move(s));
  }
  return set;
}

ScenarioSet load_scenarios(const std::string& path, int bus_count, const std::string& format) {
  if (format != "csv") throw ValidationError("scenarios: unsupported format '" + format + "'");
  std::ifstream in(path);
  if (!in) throw ValidationError("scenarios: cannot open " + path);
  return parse_scenarios_csv(in, bus_count, path);
}

void write_scenarios_csv(std::ostream& out, const ScenarioSet& set) {
  out << "minute,bus,p_load,q_load,pv\n";
  for (const auto& s : set.scenarios) {
    for (Eigen::Index i = 0; i < s.d.size(); ++i) {
      const double pv = s.pv(i);
      const double p_load = pv - s.d(i).real();
      const double q_load = -s.d(i).imag();
      if (p_load == 0.0 && q_load == 0.0 && pv == 0.0) continue;
      out << s.minute << ',' << (i + 1) << ',' << format_double(p_load) << ',' << format_double(q_load) << ','
          << format_double(pv) << '\n';
    }
  }
}

double DayProfileConfig::load_shape(double minute) const {
  double v = load_baseline;
  for (const auto& pk : load_peaks) {
    const double z = (minute - pk.minute) / pk.width;
    v += pk.amplitude * std::exp(-0.5 * z * z);
  }
  return v;
}

double DayProfileConfig::solar_shape(double minute) const {
  if (minute <= sunrise || minute >= sunset) return 0.0;
  return std::sin(std::numbers::pi * (minute - sunrise) / (sunset - sunrise));
}

void DayProfileConfig::validate(int bus_count) const {
  if (minutes < 0) throw ValidationError("day profile: minutes must be nonnegative");
  if (base_load_p < 0 || load_baseline < 0) throw ValidationError("day profile: negative load amplitude");
  for (const auto& pk : load_peaks) {
    if (pk.amplitude < 0) throw ValidationError("day profile: negative peak amplitude");
    if (!(pk.width > 0)) throw ValidationError("day profile: peak width must be positive");
  }
  for (const auto& b : bus_loads) {
    if (b.bus < 1 || b.bus > bus_count) throw ValidationError("day profile: load bus out of range");
    if (b.p < 0) throw ValidationError("day profile: negative base load");
  }
  for (const auto& s : solar) {
    if (s.bus < 1 || s.bus > bus_count) throw ValidationError("day profile: solar bus out of range");
    if (s.capacity < 0) throw ValidationError("day profile: negative solar capacity");
  }
  if (!(sunset > sunrise)) throw ValidationError("day profile: sunset must follow sunrise");
  if (noise < 0 || noise >= 1) throw ValidationError("day profile: noise must lie in [0, 1)");
}

DayProfileConfig parse_day_profile_json(const std::string& text) {
  DayProfileConfig c;
  try {
    const json doc = json::parse(text);
    c.minutes = doc.value("minutes", c.minutes);
    c.start_minute = doc.value("start_minute", c.start_minute);
    c.base_load_p = doc.value("base_load_p", c.base_load_p);
    c.base_load_q = doc.value("base_load_q", c.base_load_q);
    c.load_baseline = doc.value("load_baseline", c.load_baseline);
    c.sunrise = doc.value("sunrise", c.sunrise);
    c.sunset = doc.value("sunset", c.sunset);
    c.noise = doc.value("noise", c.noise);
    for (const auto& b : doc.value("bus_loads", json::array()))
      c.bus_loads.push_back({b.at("bus").get<int>(), b.at("p").get<double>(), b.value("q", 0.0)});
    for (const auto& p : doc.value("load_peaks", json::array()))
      c.load_peaks.push_back({p.at("minute").get<double>(), p.at("width").get<double>(), p.at("amplitude").get<double>()});
    for (const auto& s : doc.value("solar", json::array()))
      c.solar.push_back({s.at("bus").get<int>(), s.at("capacity").get<double>()});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("day profile: ") + e.what());
  }
  return c;
}

DayProfileConfig load_day_profile(const std::string& path) { return parse_day_profile_json(read_text_file(path)); }

ScenarioSet synth_scenarios(int bus_count, const DayProfileConfig& config, std::uint64_t seed) {
  config.validate(bus_count);
  Eigen::VectorXd base_p = Eigen::VectorXd::Constant(bus_count, config.base_load_p);
  Eigen::VectorXd base_q = Eigen::VectorXd::Constant(bus_count, config.base_load_q);
  for (const auto& b : config.bus_loads) {
    base_p(b.bus - 1) = b.p;
    base_q(b.bus - 1) = b.q;
  }
  Eigen::VectorXd capacity = Eigen::VectorXd::Zero(bus_count);
  for (const auto& s : config.solar) capacity(s.bus - 1) += s.capacity;

  Rng rng(seed);
  auto jitter = [&] { return config.noise == 0.0 ? 1.0 : rng.uniform(1.0 - config.noise, 1.0 + config.noise); };

  ScenarioSet set;
  set.source = "synthetic";
  set.seed = seed;
  set.scenarios.reserve(static_cast<size_t>(config.minutes));
  for (int k = 0; k < config.minutes; ++k) {
    const int minute = config.start_minute + k;
    const double load = config.load_shape(minute);
    const double sun = config.solar_shape(minute);
    LoadScenario s;
    s.minute = minute;
    s.d.resize(bus_count);
    s.pv.resize(bus_count);
    for (int i = 0; i < bus_count; ++i) {
      const double p_load = base_p(i) * load * jitter();
      const double q_load = base_q(i) * load * jitter();
      const double pv = capacity(i) * sun * jitter();
      s.d(i) = {pv - p_load, -q_load};
      s.pv(i) = pv;
    }
    set.scenarios.push_back(std::move(s));
  }
  return set;
}

ScenarioSet perturb_scenarios(const ScenarioSet& set, double fraction, std::uint64_t seed) {
  if (fraction < 0 || fraction >= 1) throw ValidationError("perturb: fraction must lie in [0, 1)");
  ScenarioSet out = set;
  if (fraction == 0.0) return out;
  Rng rng(seed);
  for (auto& s : out.scenarios) {
    for (Eigen::Index i = 0; i < s.d.size(); ++i) {
      const double fp = rng.uniform(1.0 - fraction, 1.0 + fraction);
      const double fq = rng.uniform(1.0 - fraction, 1.0 + fraction);
      s.d(i) = {s.d(i).real() * fp, s.d(i).imag() * fq};
      s.pv(i) *= fp;
    }
  }
  return out;
}

}  // namespace gridnif
