#include "gridnif/grid.hpp"

#include <json.hpp>

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "gridnif/errors.hpp"

namespace gridnif {

using nlohmann::json;

namespace {

int find_root(std::vector<int>& parent, int i) {
  while (parent[static_cast<size_t>(i)] != i) {
    parent[static_cast<size_t>(i)] = parent[static_cast<size_t>(parent[static_cast<size_t>(i)])];
    i = parent[static_cast<size_t>(i)];
  }
  return i;
}

std::string edge_label(const Line& l) {
  return "(" + std::to_string(l.from) + ", " + std::to_string(l.to) + ")";
}

}  // namespace

void FeederSpec::validate() const {
  if (bus_count < 2) throw ValidationError("feeder: need at least two buses (substation plus one)");
  if (static_cast<int>(lines.size()) != bus_count - 1) {
    throw ValidationError("feeder: a radial network on " + std::to_string(bus_count) + " buses needs " +
                          std::to_string(bus_count - 1) + " lines, got " + std::to_string(lines.size()));
  }
  std::set<std::pair<int, int>> seen;
  std::vector<int> parent(static_cast<size_t>(bus_count));
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& l : lines) {
    if (l.from < 0 || l.from >= bus_count || l.to < 0 || l.to >= bus_count) {
      throw ValidationError("feeder: line " + edge_label(l) + " references an unknown bus");
    }
    if (l.from == l.to) throw ValidationError("feeder: self-loop at bus " + std::to_string(l.from));
    if (!seen.insert({std::min(l.from, l.to), std::max(l.from, l.to)}).second) {
      throw ValidationError("feeder: duplicate line " + edge_label(l));
    }
    if (!(l.r > 0.0) || !std::isfinite(l.r) || !std::isfinite(l.x)) {
      throw ValidationError("feeder: line " + edge_label(l) + " needs finite r > 0");
    }
    const int a = find_root(parent, l.from);
    const int b = find_root(parent, l.to);
    if (a == b) throw ValidationError("feeder: line " + edge_label(l) + " closes a loop");
    parent[static_cast<size_t>(a)] = b;
  }

  std::set<int> ctrl;
  for (const auto& c : controllable) {
    if (c.bus < 1 || c.bus >= bus_count) {
      throw ValidationError("feeder: controllable bus " + std::to_string(c.bus) + " out of range");
    }
    if (!ctrl.insert(c.bus).second) {
      throw ValidationError("feeder: controllable bus " + std::to_string(c.bus) + " listed twice");
    }
    if (!(c.box.p_min <= c.box.p_max) || !(c.box.q_min <= c.box.q_max)) {
      throw ValidationError("feeder: empty power box at bus " + std::to_string(c.bus));
    }
  }
  if (controllable.empty()) throw ValidationError("feeder: no controllable buses");
}

FeederSpec parse_feeder_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("feeder: malformed JSON: ") + e.what());
  }
  FeederSpec spec;
  try {
    if (doc.contains("shunts") || doc.contains("shunt")) {
      throw ValidationError("feeder: shunt elements are not supported");
    }
    spec.name = doc.value("name", std::string{});
    spec.notes = doc.value("notes", std::string{});
    spec.bus_count = doc.at("buses").get<int>();
    for (const auto& e : doc.at("edges")) {
      for (const char* key : {"b", "g", "b_shunt", "g_shunt", "shunt"}) {
        if (e.contains(key)) throw ValidationError("feeder: shunt admittance on a line is not supported");
      }
      spec.lines.push_back({e.at("from").get<int>(), e.at("to").get<int>(), e.at("r").get<double>(),
                            e.at("x").get<double>()});
    }
    for (const auto& c : doc.at("controllable")) {
      spec.controllable.push_back({c.at("bus").get<int>(),
                                   {c.at("p_min").get<double>(), c.at("p_max").get<double>(),
                                    c.at("q_min").get<double>(), c.at("q_max").get<double>()}});
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("feeder: schema error: ") + e.what());
  }
  spec.validate();
  return spec;
}

FeederSpec load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("feeder: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_feeder_json(buf.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string feeder_to_json(const FeederSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  if (!spec.notes.empty()) doc["notes"] = spec.notes;
  doc["buses"] = spec.bus_count;
  doc["edges"] = json::array();
  for (const auto& l : spec.lines) doc["edges"].push_back({{"from", l.from}, {"to", l.to}, {"r", l.r}, {"x", l.x}});
  doc["controllable"] = json::array();
  for (const auto& c : spec.controllable) {
    doc["controllable"].push_back({{"bus", c.bus},
                                   {"p_min", c.box.p_min},
                                   {"p_max", c.box.p_max},
                                   {"q_min", c.box.q_min},
                                   {"q_max", c.box.q_max}});
  }
  return doc.dump(2);
}

Eigen::MatrixXcd build_admittance(const FeederSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.bus_count;
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& l : spec.lines) {
    const auto yl = l.admittance();
    y(l.from, l.to) -= yl;
    y(l.to, l.from) -= yl;
    y(l.from, l.from) += yl;
    y(l.to, l.to) += yl;
  }
  return y;
}

int GridModel::internal_index(int bus) const {
  if (bus < 0 || bus >= static_cast<int>(position_.size())) return -1;
  return position_[static_cast<size_t>(bus)];
}

Eigen::VectorXcd GridModel::to_internal(const Eigen::VectorXcd& d_by_bus) const {
  if (d_by_bus.size() != bus_count()) {
    throw ValidationError("demand vector has " + std::to_string(d_by_bus.size()) + " entries, feeder has " +
                          std::to_string(bus_count()) + " non-substation buses");
  }
  Eigen::VectorXcd out(bus_count());
  for (int i = 0; i < bus_count(); ++i) out(i) = d_by_bus(order_[static_cast<size_t>(i)] - 1);
  return out;
}

Eigen::VectorXd GridModel::to_bus_order(const Eigen::VectorXd& v_internal) const {
  Eigen::VectorXd out(bus_count());
  for (int i = 0; i < bus_count(); ++i) out(order_[static_cast<size_t>(i)] - 1) = v_internal(i);
  return out;
}

GridModel build_grid_model(const FeederSpec& spec, const NumericTolerances& tol) {
  const Eigen::MatrixXcd full = build_admittance(spec);
  const Eigen::Index n = spec.bus_count - 1;
  const Eigen::MatrixXcd y = full.bottomRightCorner(n, n);

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);
  Eigen::MatrixXcd z = lu.inverse();
  const double residual = (y * z - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual > 1e-9) {
    throw ValidationError("grid: reduced admittance matrix is singular (disconnected network)");
  }
  z = (z + z.transpose()).eval() / 2.0;

  GridModel m;
  m.spec_ = spec;
  for (const auto& c : spec.controllable) m.controllable_.push_back(c.bus);
  std::sort(m.controllable_.begin(), m.controllable_.end());
  for (int bus : m.controllable_) {
    for (const auto& c : spec.controllable)
      if (c.bus == bus) m.boxes_.push_back(c.box);
  }
  m.order_ = m.controllable_;
  for (int bus = 1; bus < spec.bus_count; ++bus) {
    if (!std::binary_search(m.controllable_.begin(), m.controllable_.end(), bus)) m.order_.push_back(bus);
  }
  m.position_.assign(static_cast<size_t>(spec.bus_count), -1);
  for (size_t i = 0; i < m.order_.size(); ++i) m.position_[static_cast<size_t>(m.order_[i])] = static_cast<int>(i);

  m.rtilde_.resize(n, n);
  m.xtilde_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto zij = z(m.order_[static_cast<size_t>(i)] - 1, m.order_[static_cast<size_t>(j)] - 1);
      m.rtilde_(i, j) = zij.real();
      m.xtilde_(i, j) = zij.imag();
    }
  }
  const int c = m.controllable_count();
  m.r_cols_ = m.rtilde_.leftCols(c);
  m.x_cols_ = m.xtilde_.leftCols(c);

  try {
    kappa_sqrt(m.r(), tol);
    kappa_sqrt(m.x(), tol);
  } catch (const ValidationError&) {
    throw ValidationError("grid: R or X is not positive definite (check line reactances)");
  }
  return m;
}

Eigen::VectorXd nominal_voltage(const GridModel& model, const Eigen::VectorXcd& d) {
  const Eigen::VectorXcd di = model.to_internal(d);
  return model.rtilde() * di.real() + model.xtilde() * di.imag() +
         Eigen::VectorXd::Ones(model.bus_count());
}

Eigen::VectorXd voltages_from_nominal(const GridModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& vhat) {
  if (p.size() != model.controllable_count() || q.size() != model.controllable_count()) {
    throw ValidationError("voltages: p and q must have one entry per controllable bus");
  }
  return model.r_columns() * p + model.x_columns() * q + vhat;
}

Eigen::VectorXd voltages(const GridModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                         const Eigen::VectorXcd& d) {
  return voltages_from_nominal(model, p, q, nominal_voltage(model, d));
}

Eigen::VectorXcd controllable_demand(const GridModel& model, const Eigen::VectorXcd& d) {
  return model.to_internal(d).head(model.controllable_count());
}

}  // namespace gridnif
