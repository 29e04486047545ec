#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rodenet/diffengine/adam.hpp"
#include "rodenet/diffengine/graph.hpp"
#include "rodenet/parallel.hpp"
#include "rodenet/rng.hpp"
#include "rodenet/symnet/polynomial.hpp"

namespace rodenet::gan {

// Fully connected networks with leaky-rectifier hidden layers and a linear
// output. `layers` lists every width, input first. Parameters are stored per
// layer as a row-major weight block followed by the bias.
std::size_t mlp_param_count(const std::vector<int>& layers);
std::vector<double> mlp_forward(std::span<const double> params, std::span<const double> x,
                                const std::vector<int>& layers, double slope);
ad::Var mlp_forward(ad::Var params, ad::Var x, const std::vector<int>& layers, double slope);
/// Same map applied to many inputs at once.
std::vector<std::vector<double>> mlp_forward_batch(std::span<const double> params,
                                                   std::span<const std::vector<double>> xs,
                                                   const std::vector<int>& layers, double slope);

/// Per-dimension affine standardization, u = (x - mean) / std.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;

  static Scaler fit(std::span<const std::vector<double>> data);
  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> inverse(std::span<const double> u) const;
};

struct GanArchitecture {
  int latent_dim = 32;
  std::vector<int> g_hidden{128, 128};
  std::vector<int> d_hidden{128, 128};
  double slope = 0.2;
};

struct GanModel {
  int latent_dim = 0;
  std::vector<int> g_layers;  // latent .. data_dim
  std::vector<int> d_layers;  // data_dim .. 1
  double slope = 0.2;
  std::vector<double> theta;  // generator
  std::vector<double> v;      // discriminator
  std::optional<Scaler> scaler;
  std::uint64_t seed = 0;

  std::size_t data_dim() const { return static_cast<std::size_t>(g_layers.back()); }
  void validate() const;
};

/// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
GanModel make_gan(std::size_t data_dim, const GanArchitecture& arch, std::uint64_t seed);

/// G(z), mapped back through the scaler when one is attached.
std::vector<double> generate(const GanModel& m, std::span<const double> z);
/// D(xi) for a parameter vector in data space (standardized first if a scaler is attached).
double discriminate(const GanModel& m, std::span<const double> xi);

/// Graph versions. `theta` and `v` are leaves (or any nodes) holding the
/// generator and discriminator parameters. Both operate in the model's
/// training space, i.e. after standardization.
ad::Var generate(const GanModel& m, ad::Var theta, ad::Var z);
ad::Var discriminate(const GanModel& m, ad::Var v, ad::Var x);
/// D applied to a data-space vector, including the scaler when present.
ad::Var discriminate_data(const GanModel& m, ad::Var v, ad::Var xi);

/// (|grad_x D(x')| - 1)^2 with x' = eps * real + (1 - eps) * fake, emitted so
/// that it can be differentiated with respect to `v`.
ad::Var gradient_penalty(const GanModel& m, ad::Var v, std::span<const double> real,
                         std::span<const double> fake, double eps);
double gradient_penalty(const GanModel& m, std::span<const double> real, std::span<const double> fake,
                        double eps);

// Minibatch gradients, all in the model's training space. The fused kernels
// run batched matrix products over fixed column chunks (parallel across
// chunks); the reference versions build one diffengine graph per sample.
struct CriticBatch {
  std::vector<std::vector<double>> real;
  std::vector<std::vector<double>> fake;
  std::vector<double> eps;
};

struct CriticStats {
  double loss = 0.0;
  double wasserstein = 0.0;  // mean D(real) - mean D(fake)
  double penalty = 0.0;
};

struct CriticGradient {
  std::vector<double> grad;  // d loss / d v
  CriticStats stats;
};

struct GeneratorGradient {
  std::vector<double> grad;  // d loss / d theta
  double loss = 0.0;         // -mean D(G(z))
};

CriticGradient critic_gradient(const GanModel& m, const CriticBatch& b, double lambda_gp,
                               Execution exec = Execution::Parallel);
CriticGradient critic_gradient_reference(const GanModel& m, const CriticBatch& b, double lambda_gp);
GeneratorGradient generator_gradient(const GanModel& m, std::span<const std::vector<double>> z,
                                     Execution exec = Execution::Parallel);
GeneratorGradient generator_gradient_reference(const GanModel& m, std::span<const std::vector<double>> z);

enum class GanKernel { Fused, Graph };

struct GanTrainConfig {
  double lambda_gp = 10.0;
  int n_critic = 5;
  int batch_size = 64;
  double learning_rate = 1e-3;  // generator; the critic uses learning_rate * critic_lr_ratio
  double critic_lr_ratio = 1.0;
  double beta1 = 0.0;
  double beta2 = 0.9;
  int iterations = 6000;  // generator updates in warm-up-2
  bool linear_decay = true;  // warm-up-2 step size falls linearly to 0
  // Exponential moving average of the generator weights, switched on once
  // average_start * iterations generator steps have been taken. 0 disables it.
  double average_decay = 0.998;
  double average_start = 0.5;
  bool standardize = false;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const GanArchitecture& a);
GanArchitecture gan_architecture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GanTrainConfig& c);
GanTrainConfig gan_train_config_from_json(const nlohmann::json& j);

/// Everything needed to continue adversarial training: model, both Adam
/// states and the private random stream.
class GanTrainer {
 public:
  GanTrainer() = default;
  GanTrainer(GanModel model, const GanTrainConfig& cfg, Rng rng);

  /// One discriminator update on a minibatch drawn from `data` (data space).
  CriticStats critic_step(std::span<const std::vector<double>> data);
  /// One generator update; returns the generator loss -mean D(G(z)).
  double generator_step();
  /// n_critic critic steps then one generator step.
  CriticStats iteration(std::span<const std::vector<double>> data);

  const GanModel& model() const { return model_; }
  /// The model with the averaged generator weights (or the current ones
  /// while averaging has not started).
  GanModel averaged_model() const;
  const GanTrainConfig& config() const { return cfg_; }
  const std::vector<CriticStats>& critic_history() const { return critic_history_; }
  const std::vector<double>& generator_history() const { return generator_history_; }
  std::uint64_t generator_steps() const { return g_adam_.t; }
  std::uint64_t critic_steps() const { return d_adam_.t; }

  void clear_history() {
    critic_history_.clear();
    generator_history_.clear();
  }
  void set_execution(Execution e) { exec_ = e; }
  void set_kernel(GanKernel k) { kernel_ = k; }
  /// Sets the generator step size to `lr` and the critic's to `lr * critic_lr_ratio`
  /// (moments are kept).
  void set_learning_rate(double lr);

  nlohmann::json to_json() const;
  static GanTrainer from_json(const nlohmann::json& j);

 private:
  GanModel model_;
  GanTrainConfig cfg_;
  ad::AdamState g_adam_;
  ad::AdamState d_adam_;
  Rng rng_;
  Execution exec_ = Execution::Parallel;
  GanKernel kernel_ = GanKernel::Fused;
  std::vector<CriticStats> critic_history_;
  std::vector<double> generator_history_;
  std::vector<double> theta_avg_;
};

struct Warmup2Result {
  GanModel model;
  std::vector<CriticStats> critic_history;
  std::vector<double> generator_history;
};

/// Warm-up-2: fits a fresh WGAN-GP to the given parameter vectors.
Warmup2Result train_warmup2(std::span<const std::vector<double>> data, const GanTrainConfig& cfg,
                            const GanArchitecture& arch = {}, Execution exec = Execution::Parallel);
GanTrainer make_trainer(std::span<const std::vector<double>> data, const GanTrainConfig& cfg,
                        const GanArchitecture& arch = {});

struct SampledOde {
  std::vector<double> xi;
  std::vector<symnet::Polynomial> system;
};

/// n latent draws pushed through G and read back as polynomial systems.
std::vector<SampledOde> sample_odes(const GanModel& m, std::size_t n, int d, int alpha, Rng& rng);

nlohmann::json to_json(const GanModel& m);
GanModel gan_from_json(const nlohmann::json& j);

}  // namespace rodenet::gan
