#include "gridnif/learning.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include "gridnif/errors.hpp"
#include "gridnif/io.hpp"
#include "gridnif/random.hpp"

namespace gridnif {

using nlohmann::json;

void TrainConfig::validate() const {
  if (neurons < 0) throw ValidationError("train config: neurons must be nonnegative");
  if (epochs < 0) throw ValidationError("train config: epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ValidationError("train config: learning_rate must be positive");
  if (!(equity_weight >= 0)) throw ValidationError("train config: equity_weight must be nonnegative");
  if (projection_period < 1) throw ValidationError("train config: projection_period must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0)) {
    throw ValidationError("train config: invalid Adam constants");
  }
  if (!(closed_loop_eps > 0 && closed_loop_eps <= 1)) {
    throw ValidationError("train config: closed_loop_eps must lie in (0, 1]");
  }
  if (closed_loop_steps < 1) throw ValidationError("train config: closed_loop_steps must be >= 1");
  if (!(divergence_factor > 1)) throw ValidationError("train config: divergence_factor must exceed 1");
  if (jobs < 1) throw ValidationError("train config: jobs must be >= 1");
}

std::string TrainConfig::to_json() const {
  json doc;
  doc["neurons"] = neurons;
  doc["epochs"] = epochs;
  doc["batch_size"] = batch_size;
  doc["learning_rate"] = learning_rate;
  doc["equity_weight"] = equity_weight;
  doc["projection_period"] = projection_period;
  doc["seed"] = seed;
  doc["optimizer"] = optimizer == OptimizerKind::adam ? "adam" : "plain";
  doc["beta1"] = beta1;
  doc["beta2"] = beta2;
  doc["adam_eps"] = adam_eps;
  doc["input_voltage"] = input_voltage == InputVoltage::pre_control ? "pre_control" : "closed_loop";
  doc["closed_loop_eps"] = closed_loop_eps;
  doc["closed_loop_steps"] = closed_loop_steps;
  doc["train_a"] = train_a;
  doc["divergence_factor"] = divergence_factor;
  return doc.dump(2);
}

TrainConfig parse_train_config_json(const std::string& text) {
  TrainConfig c;
  try {
    const json doc = json::parse(text);
    c.neurons = doc.value("neurons", doc.value("H", c.neurons));
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.equity_weight = doc.value("equity_weight", c.equity_weight);
    c.projection_period = doc.value("projection_period", c.projection_period);
    c.seed = doc.value("seed", c.seed);
    const auto opt = doc.value("optimizer", std::string("adam"));
    if (opt == "adam") {
      c.optimizer = OptimizerKind::adam;
    } else if (opt == "plain") {
      c.optimizer = OptimizerKind::plain;
    } else {
      throw ValidationError("train config: optimizer must be 'adam' or 'plain'");
    }
    c.beta1 = doc.value("beta1", c.beta1);
    c.beta2 = doc.value("beta2", c.beta2);
    c.adam_eps = doc.value("adam_eps", c.adam_eps);
    const auto iv = doc.value("input_voltage", std::string("pre_control"));
    if (iv == "pre_control") {
      c.input_voltage = InputVoltage::pre_control;
    } else if (iv == "closed_loop") {
      c.input_voltage = InputVoltage::closed_loop;
    } else {
      throw ValidationError("train config: input_voltage must be 'pre_control' or 'closed_loop'");
    }
    c.closed_loop_eps = doc.value("closed_loop_eps", c.closed_loop_eps);
    c.closed_loop_steps = doc.value("closed_loop_steps", c.closed_loop_steps);
    c.train_a = doc.value("train_a", c.train_a);
    c.divergence_factor = doc.value("divergence_factor", c.divergence_factor);
    c.jobs = doc.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) { return parse_train_config_json(read_text_file(path)); }

ProtectedFeatures ProtectedFeatures::from_columns(const Eigen::MatrixXd& columns) {
  ProtectedFeatures f;
  f.z = columns;
  for (Eigen::Index j = 0; j < f.z.cols(); ++j) {
    const double nrm = f.z.col(j).norm();
    if (!(nrm > 0)) throw ValidationError("protected features: zero column");
    f.z.col(j) /= nrm;
  }
  f.validate(static_cast<int>(columns.rows()));
  return f;
}

void ProtectedFeatures::validate(int controllable) const {
  if (z.cols() == 0) return;
  if (z.rows() != controllable) throw ValidationError("protected features: need one row per controllable bus");
  if (z.cols() > std::max(1, controllable - 1)) {
    throw ValidationError("protected features: at most C - 1 features are meaningful");
  }
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    if (std::abs(z.col(j).norm() - 1.0) > 1e-12) throw ValidationError("protected features: columns must be unit norm");
  }
}

ProtectedFeatures electrical_distance_feature(const GridModel& model) {
  return ProtectedFeatures::from_columns(model.diag_r());
}

TrainingSample make_sample(const GridModel& model, const LoadScenario& scenario) {
  TrainingSample s;
  s.vhat = nominal_voltage(model, scenario);
  const int c = model.controllable_count();
  s.v_input = s.vhat.head(c);
  const Eigen::VectorXcd dc = controllable_demand(model, scenario.d);
  s.p_load = dc.real();
  s.q_load = dc.imag();
  return s;
}

std::vector<TrainingSample> make_samples(const GridModel& model, const ScenarioSet& scenarios) {
  std::vector<TrainingSample> out;
  out.reserve(scenarios.size());
  for (const auto& s : scenarios.scenarios) out.push_back(make_sample(model, s));
  return out;
}

void bank_outputs(const ControllerBank& bank, const TrainingSample& s, Eigen::VectorXd& p, Eigen::VectorXd& q) {
  const int c = bank.size();
  p.resize(c);
  q.resize(c);
  for (int n = 0; n < c; ++n) {
    const auto out = eval_nif(bank.nodes[static_cast<size_t>(n)], bank.boxes[static_cast<size_t>(n)], s.v_input(n),
                              s.p_load(n), s.q_load(n));
    p(n) = out.p;
    q(n) = out.q;
  }
}

double loss_fv(const GridModel& model, const ControllerBank& bank, const TrainingSample& sample) {
  Eigen::VectorXd p, q;
  bank_outputs(bank, sample, p, q);
  return (voltages_from_nominal(model, p, q, sample.vhat) - Eigen::VectorXd::Ones(model.bus_count())).squaredNorm();
}

double loss_fv(const GridModel& model, const ControllerBank& bank, const LoadScenario& scenario) {
  return loss_fv(model, bank, make_sample(model, scenario));
}

double loss_feq(const Eigen::VectorXd& gamma, const ProtectedFeatures& features) {
  if (features.z.cols() == 0) return 0.0;
  if (features.z.rows() != gamma.size()) throw ValidationError("loss_feq: dimension mismatch");
  return (features.z.transpose() * gamma).norm();
}

namespace {

std::vector<Eigen::Index> param_offsets(const ControllerBank& bank) {
  std::vector<Eigen::Index> off(bank.nodes.size() + 1, 0);
  for (size_t n = 0; n < bank.nodes.size(); ++n) off[n + 1] = off[n] + 6 * bank.nodes[n].neurons() + 2;
  return off;
}

// Accumulates the per-sample gradient into `g` (flat layout, see pack_params).
LossTerms flat_sample_loss(const GridModel& model, const ControllerBank& bank, const std::vector<Eigen::Index>& off,
                           const TrainingSample& s, double lambda, const ProtectedFeatures& features,
                           Eigen::Ref<Eigen::VectorXd> g) {
  const int c = bank.size();
  Eigen::VectorXd p(c), q(c);
  Eigen::Array<bool, Eigen::Dynamic, 1> pass_p(c), pass_q(c);
  std::vector<Eigen::VectorXd> act(static_cast<size_t>(c));
  for (int n = 0; n < c; ++n) {
    const auto& prm = bank.nodes[static_cast<size_t>(n)];
    const auto& box = bank.boxes[static_cast<size_t>(n)];
    auto& t = act[static_cast<size_t>(n)];
    t = (prm.a * s.v_input(n) + prm.b * s.p_load(n) + prm.c * s.q_load(n) + prm.bias).array().tanh().matrix();
    const double rp = prm.w_p.dot(t) + prm.e_p;
    const double rq = prm.w_q.dot(t) + prm.e_q;
    pass_p(n) = rp > box.p_min && rp < box.p_max;
    pass_q(n) = rq > box.q_min && rq < box.q_max;
    p(n) = box.clamp_p(rp);
    q(n) = box.clamp_q(rq);
  }
  const Eigen::VectorXd err = voltages_from_nominal(model, p, q, s.vhat) - Eigen::VectorXd::Ones(model.bus_count());
  LossTerms loss;
  loss.f_v = err.squaredNorm();
  Eigen::VectorXd gp = 2.0 * model.r_columns().transpose() * err;
  const Eigen::VectorXd gq = 2.0 * model.x_columns().transpose() * err;
  if (features.z.cols() > 0) {
    const Eigen::VectorXd zt = features.z.transpose() * p;
    loss.f_eq = zt.norm();
    if (lambda != 0.0 && loss.f_eq > 0.0) gp += lambda * (features.z * zt) / loss.f_eq;
  }

  for (int n = 0; n < c; ++n) {
    const auto& prm = bank.nodes[static_cast<size_t>(n)];
    const auto& t = act[static_cast<size_t>(n)];
    const Eigen::Index h = prm.neurons();
    const double dp = pass_p(n) ? gp(n) : 0.0;
    const double dq = pass_q(n) ? gq(n) : 0.0;
    if (dp == 0.0 && dq == 0.0) continue;
    auto node = g.segment(off[static_cast<size_t>(n)], 6 * h + 2);
    const Eigen::VectorXd du = ((dp * prm.w_p + dq * prm.w_q).array() * (1.0 - t.array().square())).matrix();
    node.segment(0, h) += dp * t;
    node.segment(h, h) += dq * t;
    node.segment(2 * h, h) += s.v_input(n) * du;
    node.segment(3 * h, h) += s.p_load(n) * du;
    node.segment(4 * h, h) += s.q_load(n) * du;
    node.segment(5 * h, h) += du;
    node(6 * h) += dp;
    node(6 * h + 1) += dq;
  }
  return loss;
}

struct FlatBatch {
  Eigen::VectorXd grad;
  LossTerms mean;
};

FlatBatch flat_batch_gradient(const GridModel& model, const ControllerBank& bank,
                              const std::vector<Eigen::Index>& off, const std::vector<const TrainingSample*>& batch,
                              double lambda, const ProtectedFeatures& features, int jobs) {
  const Eigen::Index m = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index dim = off.back();
  Eigen::MatrixXd per(dim, m);
  per.setZero();
  std::vector<LossTerms> losses(batch.size());

  auto work = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i) {
      losses[static_cast<size_t>(i)] =
          flat_sample_loss(model, bank, off, *batch[static_cast<size_t>(i)], lambda, features, per.col(i));
    }
  };
  const int workers = static_cast<int>(std::min<Eigen::Index>(jobs, m));
  if (workers <= 1) {
    work(0, m);
  } else {
    std::vector<std::jthread> pool;
    const Eigen::Index chunk = (m + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index b = w * chunk;
      const Eigen::Index e = std::min(m, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }

  // Fixed pairwise tree: column i absorbs column i + stride.
  for (Eigen::Index stride = 1; stride < m; stride *= 2) {
    for (Eigen::Index i = 0; i + stride < m; i += 2 * stride) {
      per.col(i) += per.col(i + stride);
      losses[static_cast<size_t>(i)].f_v += losses[static_cast<size_t>(i + stride)].f_v;
      losses[static_cast<size_t>(i)].f_eq += losses[static_cast<size_t>(i + stride)].f_eq;
    }
  }
  FlatBatch out;
  if (m == 0) {
    out.grad = Eigen::VectorXd::Zero(dim);
    return out;
  }
  out.grad = per.col(0) / static_cast<double>(m);
  out.mean = {losses[0].f_v / static_cast<double>(m), losses[0].f_eq / static_cast<double>(m)};
  return out;
}

BankGradient zero_gradient_like(const ControllerBank& bank) {
  BankGradient g;
  for (const auto& n : bank.nodes) g.push_back(NodeParams::zeros(n.neurons()));
  return g;
}

}  // namespace

Eigen::VectorXd pack_params(const std::vector<NodeParams>& nodes) {
  Eigen::Index dim = 0;
  for (const auto& n : nodes) dim += 6 * n.neurons() + 2;
  Eigen::VectorXd flat(dim);
  Eigen::Index o = 0;
  for (const auto& n : nodes) {
    const Eigen::Index h = n.neurons();
    flat.segment(o, h) = n.w_p;
    flat.segment(o + h, h) = n.w_q;
    flat.segment(o + 2 * h, h) = n.a;
    flat.segment(o + 3 * h, h) = n.b;
    flat.segment(o + 4 * h, h) = n.c;
    flat.segment(o + 5 * h, h) = n.bias;
    flat(o + 6 * h) = n.e_p;
    flat(o + 6 * h + 1) = n.e_q;
    o += 6 * h + 2;
  }
  return flat;
}

void unpack_params(const Eigen::VectorXd& flat, std::vector<NodeParams>& nodes) {
  Eigen::Index o = 0;
  for (auto& n : nodes) {
    const Eigen::Index h = n.neurons();
    if (o + 6 * h + 2 > flat.size()) throw ValidationError("unpack_params: vector too short");
    n.w_p = flat.segment(o, h);
    n.w_q = flat.segment(o + h, h);
    n.a = flat.segment(o + 2 * h, h);
    n.b = flat.segment(o + 3 * h, h);
    n.c = flat.segment(o + 4 * h, h);
    n.bias = flat.segment(o + 5 * h, h);
    n.e_p = flat(o + 6 * h);
    n.e_q = flat(o + 6 * h + 1);
    o += 6 * h + 2;
  }
  if (o != flat.size()) throw ValidationError("unpack_params: size mismatch");
}

LossTerms sample_loss(const GridModel& model, const ControllerBank& bank, const TrainingSample& sample,
                      double lambda, const ProtectedFeatures& features, BankGradient* grad) {
  const auto off = param_offsets(bank);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(off.back());
  const LossTerms loss = flat_sample_loss(model, bank, off, sample, lambda, features, g);
  if (grad) {
    if (grad->size() != bank.nodes.size()) *grad = zero_gradient_like(bank);
    Eigen::VectorXd acc = pack_params(*grad) + g;
    unpack_params(acc, *grad);
  }
  return loss;
}

BatchGradient gradients(const GridModel& model, const ControllerBank& bank, std::span<const TrainingSample> batch,
                        double lambda, const ProtectedFeatures& features, int jobs) {
  const auto off = param_offsets(bank);
  std::vector<const TrainingSample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  const auto flat = flat_batch_gradient(model, bank, off, ptrs, lambda, features, jobs);
  BatchGradient out;
  out.grad = zero_gradient_like(bank);
  unpack_params(flat.grad, out.grad);
  out.mean = flat.mean;
  return out;
}

ControllerBank initial_bank(const GridModel& model, int neurons, std::uint64_t seed) {
  Rng rng(seed);
  ControllerBank bank;
  bank.buses = model.controllable_buses();
  bank.boxes = model.boxes();
  for (const auto& box : bank.boxes) {
    auto n = NodeParams::zeros(neurons);
    for (int h = 0; h < neurons; ++h) {
      n.a(h) = 1.0;
      n.w_p(h) = rng.uniform(-0.1, 0.0);
      n.w_q(h) = rng.uniform(-0.1, 0.0);
      n.b(h) = rng.uniform(-0.5, 0.5);
      n.c(h) = rng.uniform(-0.5, 0.5);
      n.bias(h) = rng.uniform(-0.5, 0.5);
    }
    n.e_p = 0.5 * (box.p_min + box.p_max);
    n.e_q = 0.5 * (box.q_min + box.q_max);
    bank.nodes.push_back(std::move(n));
  }
  return bank;
}

void TrainTrace::write_csv(std::ostream& out) const {
  out << "epoch,f_v,f_eq,total,proj_event,grad_norm\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.f_v) << ',' << format_double(e.f_eq) << ',' << format_double(e.total)
        << ',' << (e.projected ? 1 : 0) << ',' << format_double(e.grad_norm) << '\n';
  }
}

namespace {

// Warm-started from the previous epoch's injections, so a few steps per epoch
// keep each sample near the fixed point of the slowly changing bank.
struct ClosedLoopState {
  std::vector<Eigen::VectorXd> p;
  std::vector<Eigen::VectorXd> q;
};

void refresh_closed_loop_inputs(const GridModel& model, const ControllerBank& bank, double eps, int steps,
                                std::vector<TrainingSample>& samples, ClosedLoopState& state) {
  const int c = model.controllable_count();
  const Eigen::MatrixXd r = model.r();
  const Eigen::MatrixXd x = model.x();
  if (state.p.size() != samples.size()) {
    state.p.assign(samples.size(), Eigen::VectorXd::Zero(c));
    state.q.assign(samples.size(), Eigen::VectorXd::Zero(c));
  }
  Eigen::VectorXd v(c);
  for (size_t i = 0; i < samples.size(); ++i) {
    auto& s = samples[i];
    Eigen::VectorXd& p = state.p[i];
    Eigen::VectorXd& q = state.q[i];
    v.noalias() = s.vhat.head(c);
    v.noalias() += r * p;
    v.noalias() += x * q;
    for (int it = 0; it < steps; ++it) {
      for (int n = 0; n < c; ++n) {
        const auto out = eval_nif(bank.nodes[static_cast<size_t>(n)], bank.boxes[static_cast<size_t>(n)], v(n),
                                  s.p_load(n), s.q_load(n));
        p(n) = (1.0 - eps) * p(n) + eps * out.p;
        q(n) = (1.0 - eps) * q(n) + eps * out.q;
      }
      v.noalias() = s.vhat.head(c);
      v.noalias() += r * p;
      v.noalias() += x * q;
    }
    s.v_input = v;
  }
}

}  // namespace

TrainResult train(const GridModel& model, const ScenarioSet& scenarios, const ProtectedFeatures& features,
                  const TrainConfig& config, const StabilityOptions& stability, const TrainProgress& progress) {
  config.validate();
  if (scenarios.empty()) throw ValidationError("train: no scenarios");
  scenarios.validate();
  features.validate(model.controllable_count());
  if (config.equity_weight > 0 && features.features() == 0) {
    throw ValidationError("train: equity_weight > 0 needs at least one protected feature");
  }

  const NetworkConstants constants = network_constants(model, stability);
  std::vector<TrainingSample> samples = make_samples(model, scenarios);
  ControllerBank bank = initial_bank(model, config.neurons, config.seed);
  bank = project_bank(bank, constants, stability);
  const auto off = param_offsets(bank);

  Eigen::VectorXd theta = pack_params(bank.nodes);
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(theta.size());
  if (!config.train_a) {
    for (size_t n = 0; n < bank.nodes.size(); ++n) {
      const Eigen::Index h = bank.nodes[n].neurons();
      mask.segment(off[n] + 2 * h, h).setZero();
    }
  }
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  long long step = 0;

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  ClosedLoopState closed_loop;
  double reference = -1.0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.input_voltage == InputVoltage::closed_loop) {
      refresh_closed_loop_inputs(model, bank, config.closed_loop_eps, config.closed_loop_steps, samples, closed_loop);
    }
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    double grad_norm_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<const TrainingSample*> batch;
      for (size_t i = start; i < stop; ++i) batch.push_back(&samples[order[i]]);
      const auto bg =
          flat_batch_gradient(model, bank, off, batch, config.equity_weight, features, config.jobs);
      const double weight = static_cast<double>(stop - start);
      rec.f_v += bg.mean.f_v * weight;
      rec.f_eq += bg.mean.f_eq * weight;
      const Eigen::VectorXd g = bg.grad.cwiseProduct(mask);
      grad_norm_sum += g.norm();
      ++batches;

      if (config.optimizer == OptimizerKind::adam) {
        ++step;
        m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
        m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
        theta.array() -= config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.adam_eps);
      } else {
        // theta <- theta - delta / (2B) * sum of per-sample gradients
        theta -= 0.5 * config.learning_rate * g;
      }
      unpack_params(theta, bank.nodes);
    }
    rec.f_v /= static_cast<double>(samples.size());
    rec.f_eq /= static_cast<double>(samples.size());
    rec.total = rec.f_v + config.equity_weight * rec.f_eq;
    rec.grad_norm = batches ? grad_norm_sum / batches : 0.0;

    if (!std::isfinite(rec.total) || !theta.allFinite()) {
      throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    if (reference < 0) reference = rec.total;
    if (reference > 0 && rec.total > config.divergence_factor * reference) {
      throw DivergenceError("train: mean loss " + format_double(rec.total) + " at epoch " + std::to_string(epoch) +
                            " exceeds " + format_double(config.divergence_factor) + "x the first epoch's " +
                            format_double(reference));
    }

    if (epoch % config.projection_period == 0) {
      bank = project_bank(bank, constants, stability);
      theta = pack_params(bank.nodes);
      rec.projected = true;
    }
    result.trace.epochs.push_back(rec);
    if (progress) progress(rec);
  }

  bank = project_bank(bank, constants, stability);
  bank.metadata["train_config_hash"] = hash_text(config.to_json());
  bank.metadata["equity_weight"] = format_double(config.equity_weight);
  bank.metadata["neurons"] = std::to_string(config.neurons);
  bank.metadata["epochs"] = std::to_string(config.epochs);
  bank.metadata["seed"] = std::to_string(config.seed);
  result.bank = std::move(bank);
  return result;
}

}  // namespace gridnif
