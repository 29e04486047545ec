#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "rodenet/diffengine/adam.hpp"
#include "rodenet/odenet/odenet.hpp"
#include "rodenet/rng.hpp"

namespace rodenet::odenet {

struct TrainConfig {
  double lambda_h = 0.001;
  double huber_knee = 0.001;
  int s_max = 6;
  int epochs_per_stage = 500;  // Adam steps per unroll length
  int batch_size = 128;
  double learning_rate = 0.01;
  double init_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Extra loss term added to the ODE-Net objective; receives the parameter
/// leaf and returns an already weighted scalar node.
using Regularizer = std::function<ad::Var(ad::Var xi)>;

/// Owns everything one ODE-Net needs to keep training across stages:
/// parameters, Adam moments and its private random stream.
class OdeNetTrainer {
 public:
  OdeNetTrainer() = default;
  OdeNetTrainer(symnet::SymNetShape shape, double dt, const TrainConfig& cfg, Rng rng);
  /// Starts from the given parameters instead of a random draw.
  OdeNetTrainer(symnet::SymNetShape shape, double dt, const TrainConfig& cfg, Rng rng, std::vector<double> xi0);

  /// One Adam step on a fresh minibatch of windows; returns the loss.
  double step(std::span<const Trajectory> data, int unroll, const Regularizer& reg = {});
  /// Curriculum: unroll = 1..s_max, epochs_per_stage steps each.
  void run_curriculum(std::span<const Trajectory> data);
  void run_steps(std::span<const Trajectory> data, int unroll, int steps, const Regularizer& reg = {});

  OdeNet net() const { return OdeNet(shape_, xi_, dt_); }
  const std::vector<double>& xi() const { return xi_; }
  const std::vector<double>& loss_history() const { return history_; }
  const TrainConfig& config() const { return cfg_; }
  const ad::AdamState& adam() const { return adam_; }
  void clear_history() { history_.clear(); }

  nlohmann::json to_json() const;
  static OdeNetTrainer from_json(const nlohmann::json& j);

 private:
  symnet::SymNetShape shape_;
  double dt_ = 0.05;
  TrainConfig cfg_;
  std::vector<double> xi_;
  ad::AdamState adam_;
  Rng rng_;
  std::vector<double> history_;
};

struct TrainResult {
  std::vector<double> xi;
  std::vector<double> loss_history;
};

/// Initial parameters as drawn by the trainer: N(0, init_std^2) per entry.
std::vector<double> initial_parameters(symnet::SymNetShape shape, double init_std, Rng& rng);

/// Warm-up-1 for one instance.
TrainResult train_warmup1(std::span<const Trajectory> data, const TrainConfig& cfg,
                          symnet::SymNetShape shape = {3, 2}, double dt = 0.05);

}  // namespace rodenet::odenet
