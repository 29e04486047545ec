#include "rodenet/odenet/trainer.hpp"

#include <cmath>
#include <random>
#include <string>

#include "rodenet/error.hpp"

namespace rodenet::odenet {

void TrainConfig::validate() const {
  if (lambda_h < 0.0) throw ConfigError("lambda_h must be >= 0");
  if (!(huber_knee > 0.0)) throw ConfigError("huber_knee must be > 0");
  if (s_max < 1) throw ConfigError("s_max must be >= 1");
  if (epochs_per_stage < 0) throw ConfigError("epochs_per_stage must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (init_std < 0.0) throw ConfigError("init_std must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda_h", c.lambda_h},         {"huber_knee", c.huber_knee},
          {"s_max", c.s_max},               {"epochs_per_stage", c.epochs_per_stage},
          {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
          {"init_std", c.init_std},         {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lambda_h = j.at("lambda_h").get<double>();
  c.huber_knee = j.at("huber_knee").get<double>();
  c.s_max = j.at("s_max").get<int>();
  c.epochs_per_stage = j.at("epochs_per_stage").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.init_std = j.at("init_std").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<double> initial_parameters(symnet::SymNetShape shape, double init_std, Rng& rng) {
  std::vector<double> xi(shape.total_size(), 0.0);
  std::normal_distribution<double> init(0.0, init_std);
  if (init_std > 0.0)
    for (double& p : xi) p = init(rng);
  return xi;
}

OdeNetTrainer::OdeNetTrainer(symnet::SymNetShape shape, double dt, const TrainConfig& cfg, Rng rng)
    : shape_(shape), dt_(dt), cfg_(cfg), rng_(std::move(rng)) {
  cfg_.validate();
  xi_ = initial_parameters(shape_, cfg_.init_std, rng_);
  adam_ = ad::AdamState(xi_.size(), ad::AdamConfig{cfg_.learning_rate, 0.9, 0.999, 1e-8});
}

OdeNetTrainer::OdeNetTrainer(symnet::SymNetShape shape, double dt, const TrainConfig& cfg, Rng rng,
                             std::vector<double> xi0)
    : shape_(shape), dt_(dt), cfg_(cfg), xi_(std::move(xi0)), rng_(std::move(rng)) {
  cfg_.validate();
  if (xi_.size() != shape_.total_size()) throw ContractViolation("initial ODE-Net parameters have the wrong length");
  adam_ = ad::AdamState(xi_.size(), ad::AdamConfig{cfg_.learning_rate, 0.9, 0.999, 1e-8});
}

double OdeNetTrainer::step(std::span<const Trajectory> data, int unroll, const Regularizer& reg) {
  std::size_t total = 0;
  for (const auto& t : data)
    if (t.size() > static_cast<std::size_t>(unroll)) total += t.size() - static_cast<std::size_t>(unroll);
  if (total == 0) throw ContractViolation("no trajectory is long enough for the unroll length");

  std::vector<std::pair<std::size_t, std::size_t>> windows;
  windows.reserve(static_cast<std::size_t>(cfg_.batch_size));
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int b = 0; b < cfg_.batch_size; ++b) {
    std::size_t r = pick(rng_);
    for (std::size_t j = 0; j < data.size(); ++j) {
      const std::size_t n = data[j].size() > static_cast<std::size_t>(unroll)
                                ? data[j].size() - static_cast<std::size_t>(unroll)
                                : 0;
      if (r < n) {
        windows.emplace_back(j, r);
        break;
      }
      r -= n;
    }
  }

  thread_local ad::Graph g;
  g.clear();
  ad::Var xi = g.leaf(xi_);
  auto params = symnet::scalar_params(xi);
  auto batch = make_batch(data, windows, unroll);
  ad::Var loss = data_loss_graph(params, shape_, dt_, batch, unroll) +
                 huber_graph(xi, cfg_.huber_knee) * cfg_.lambda_h;
  if (reg) loss = loss + reg(xi);
  const double value = loss.scalar();
  if (!std::isfinite(value))
    throw TrainingError("ODE-Net loss became non-finite after " + std::to_string(adam_.t) +
                        " steps (unroll " + std::to_string(unroll) + ")");
  const ad::Var leaves[] = {xi};
  auto grads = g.grad(loss, leaves);
  ad::adam_update(xi_, grads[0], adam_);
  history_.push_back(value);
  return value;
}

void OdeNetTrainer::run_steps(std::span<const Trajectory> data, int unroll, int steps, const Regularizer& reg) {
  for (int s = 0; s < steps; ++s) step(data, unroll, reg);
}

void OdeNetTrainer::run_curriculum(std::span<const Trajectory> data) {
  for (int unroll = 1; unroll <= cfg_.s_max; ++unroll) run_steps(data, unroll, cfg_.epochs_per_stage);
}

nlohmann::json OdeNetTrainer::to_json() const {
  return {{"d", shape_.dim},
          {"alpha", shape_.hidden},
          {"dt", dt_},
          {"config", odenet::to_json(cfg_)},
          {"xi", xi_},
          {"adam", {{"m", adam_.m}, {"v", adam_.v}, {"t", adam_.t}}},
          {"rng", rng_to_string(rng_)},
          {"loss_history", history_}};
}

OdeNetTrainer OdeNetTrainer::from_json(const nlohmann::json& j) {
  OdeNetTrainer t;
  t.shape_ = symnet::SymNetShape(j.at("d").get<int>(), j.at("alpha").get<int>());
  t.dt_ = j.at("dt").get<double>();
  t.cfg_ = train_config_from_json(j.at("config"));
  t.xi_ = j.at("xi").get<std::vector<double>>();
  t.adam_ = ad::AdamState(t.xi_.size(), ad::AdamConfig{t.cfg_.learning_rate, 0.9, 0.999, 1e-8});
  t.adam_.m = j.at("adam").at("m").get<std::vector<double>>();
  t.adam_.v = j.at("adam").at("v").get<std::vector<double>>();
  t.adam_.t = j.at("adam").at("t").get<std::uint64_t>();
  t.rng_ = rng_from_string(j.at("rng").get<std::string>());
  t.history_ = j.at("loss_history").get<std::vector<double>>();
  return t;
}

TrainResult train_warmup1(std::span<const Trajectory> data, const TrainConfig& cfg, symnet::SymNetShape shape,
                          double dt) {
  if (data.empty()) throw ContractViolation("warm-up-1 needs at least one trajectory");
  OdeNetTrainer trainer(shape, dt, cfg, make_rng(cfg.seed, "odenet"));
  trainer.run_curriculum(data);
  return {trainer.xi(), trainer.loss_history()};
}

}  // namespace rodenet::odenet
