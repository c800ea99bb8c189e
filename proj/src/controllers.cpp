#include "gridnif/controllers.hpp"

#include <json.hpp>

#include <cmath>

#include "gridnif/errors.hpp"
#include "gridnif/io.hpp"

namespace gridnif {

using nlohmann::json;

NodeParams NodeParams::zeros(int neurons) {
  NodeParams p;
  p.w_p = p.w_q = p.a = p.b = p.c = p.bias = Eigen::VectorXd::Zero(neurons);
  return p;
}

bool NodeParams::consistent() const {
  const auto h = w_p.size();
  return w_q.size() == h && a.size() == h && b.size() == h && c.size() == h && bias.size() == h;
}

bool NodeParams::monotone_signs() const {
  return (a.array() >= 0.0).all() && (w_p.array() <= 0.0).all() && (w_q.array() <= 0.0).all();
}

Setpoint eval_nif_raw(const NodeParams& params, double v, double p_load, double q_load) {
  Setpoint out{params.e_p, params.e_q};
  for (int h = 0; h < params.neurons(); ++h) {
    const double t = std::tanh(params.a(h) * v + params.b(h) * p_load + params.c(h) * q_load + params.bias(h));
    out.p += params.w_p(h) * t;
    out.q += params.w_q(h) * t;
  }
  return out;
}

Setpoint eval_nif(const NodeParams& params, const PowerBox& box, double v, double p_load, double q_load) {
  const Setpoint raw = eval_nif_raw(params, v, p_load, q_load);
  return {box.clamp_p(raw.p), box.clamp_q(raw.q)};
}

void ControllerBank::validate() const {
  if (buses.size() != nodes.size() || boxes.size() != nodes.size()) {
    throw ValidationError("controller bank: buses, boxes and nodes differ in length");
  }
  for (size_t k = 0; k < nodes.size(); ++k) {
    if (!nodes[k].consistent()) {
      throw ValidationError("controller bank: ragged parameter arrays at bus " + std::to_string(buses[k]));
    }
  }
}

void ControllerBank::check_matches(const GridModel& model) const {
  validate();
  if (buses != model.controllable_buses()) {
    throw ValidationError("controller bank does not match the feeder's controllable buses");
  }
}

ControllerBank make_constant_bank(const GridModel& model, int neurons, const std::vector<Setpoint>& outputs) {
  if (static_cast<int>(outputs.size()) != model.controllable_count()) {
    throw ValidationError("make_constant_bank: one output per controllable bus required");
  }
  ControllerBank bank;
  bank.buses = model.controllable_buses();
  bank.boxes = model.boxes();
  for (const auto& o : outputs) {
    auto n = NodeParams::zeros(neurons);
    n.e_p = o.p;
    n.e_q = o.q;
    bank.nodes.push_back(std::move(n));
  }
  return bank;
}

SlopeBounds slope_bounds(const ControllerBank& bank) {
  SlopeBounds s;
  for (const auto& n : bank.nodes) {
    s.l_p = std::max(s.l_p, n.p_slope_bound());
    s.l_q = std::max(s.l_q, n.q_slope_bound());
  }
  return s;
}

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd json_vec(const json& arr, int expected, const std::string& what) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != expected) {
    throw ValidationError("controllers: field '" + what + "' must be an array of length H = " + std::to_string(expected));
  }
  Eigen::VectorXd v(expected);
  for (int i = 0; i < expected; ++i) v(i) = arr[static_cast<size_t>(i)].get<double>();
  return v;
}

}  // namespace

std::string controllers_to_json(const ControllerBank& bank) {
  bank.validate();
  json doc;
  doc["format"] = "gridnif-controllers";
  doc["version"] = 1;
  doc["metadata"] = json::object();
  for (const auto& [k, v] : bank.metadata) doc["metadata"][k] = v;
  if (!bank.certificate_json.empty()) doc["certificate"] = json::parse(bank.certificate_json);
  doc["nodes"] = json::array();
  for (size_t k = 0; k < bank.nodes.size(); ++k) {
    const auto& n = bank.nodes[k];
    const auto& box = bank.boxes[k];
    doc["nodes"].push_back({{"bus", bank.buses[k]},
                            {"H", n.neurons()},
                            {"w_p", vec_json(n.w_p)},
                            {"w_q", vec_json(n.w_q)},
                            {"a", vec_json(n.a)},
                            {"b", vec_json(n.b)},
                            {"c", vec_json(n.c)},
                            {"bias", vec_json(n.bias)},
                            {"e_p", n.e_p},
                            {"e_q", n.e_q},
                            {"p_min", box.p_min},
                            {"p_max", box.p_max},
                            {"q_min", box.q_min},
                            {"q_max", box.q_max}});
  }
  return doc.dump(2) + "\n";
}

ControllerBank parse_controllers_json(const std::string& text) {
  ControllerBank bank;
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{}) != "gridnif-controllers") {
      throw ValidationError("controllers: not a gridnif-controllers file");
    }
    const json metadata = doc.value("metadata", json::object());
    for (const auto& [k, v] : metadata.items()) {
      bank.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    if (doc.contains("certificate")) bank.certificate_json = doc["certificate"].dump();
    for (const auto& n : doc.at("nodes")) {
      const int h = n.at("H").get<int>();
      if (h < 0) throw ValidationError("controllers: negative neuron count");
      NodeParams p;
      p.w_p = json_vec(n.at("w_p"), h, "w_p");
      p.w_q = json_vec(n.at("w_q"), h, "w_q");
      p.a = json_vec(n.at("a"), h, "a");
      p.b = json_vec(n.at("b"), h, "b");
      p.c = json_vec(n.at("c"), h, "c");
      p.bias = json_vec(n.at("bias"), h, "bias");
      p.e_p = n.at("e_p").get<double>();
      p.e_q = n.at("e_q").get<double>();
      bank.buses.push_back(n.at("bus").get<int>());
      bank.boxes.push_back({n.at("p_min").get<double>(), n.at("p_max").get<double>(), n.at("q_min").get<double>(),
                            n.at("q_max").get<double>()});
      bank.nodes.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("controllers: ") + e.what());
  }
  bank.validate();
  return bank;
}

ControllerBank load_controllers(const std::string& path) {
  try {
    return parse_controllers_json(read_text_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void LinearCurveParams::validate() const {
  if (!(v_min < v_max) || !(v_min_th < v_max)) throw ValidationError("linear curve: knees out of order");
  if (!(p_min <= p_max) || !(q_min <= q_max)) throw ValidationError("linear curve: empty output range");
}

double eval_volt_watt(const LinearCurveParams& c, double v) {
  if (v <= c.v_min_th) return c.p_max;
  if (v >= c.v_max) return c.p_min;
  return -c.volt_watt_slope() * (v - c.v_min_th) + c.p_max;
}

double eval_volt_var(const LinearCurveParams& c, double v) {
  if (v <= c.v_min) return c.q_max;
  if (v >= c.v_max) return c.q_min;
  return -c.volt_var_slope() * (v - c.v_min) + c.q_max;
}

LinearPolicy::LinearPolicy(std::vector<LinearCurveParams> curves) : curves_(std::move(curves)) {
  for (const auto& c : curves_) {
    c.validate();
    boxes_.push_back({c.p_min, c.p_max, c.q_min, c.q_max});
  }
}

Setpoint LinearPolicy::respond(int k, double v, std::complex<double>) const {
  const auto& c = curves_[static_cast<size_t>(k)];
  return {eval_volt_watt(c, v), eval_volt_var(c, v)};
}

LinearPolicy make_linear_baseline(const GridModel& model, double v_min_th, double v_min, double v_max) {
  std::vector<LinearCurveParams> curves;
  for (const auto& box : model.boxes()) {
    curves.push_back({v_min_th, v_min, v_max, box.p_min, box.p_max, box.q_min, box.q_max});
  }
  return LinearPolicy(std::move(curves));
}

}  // namespace gridnif
