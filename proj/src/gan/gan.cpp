#include "rodenet/gan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rodenet/error.hpp"
#include "rodenet/symnet/symnet.hpp"

namespace rodenet::gan {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}

void check_layers(const std::vector<int>& layers) {
  require(layers.size() >= 2, "mlp needs at least an input and an output width");
  for (int w : layers) require(w >= 1, "mlp widths must be positive");
}

std::vector<double> standard_normal(Rng& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(n);
  for (double& v : z) v = normal(rng);
  return z;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::size_t mlp_param_count(const std::vector<int>& layers) {
  check_layers(layers);
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    n += static_cast<std::size_t>(layers[i] + 1) * static_cast<std::size_t>(layers[i + 1]);
  return n;
}

std::vector<double> mlp_forward(std::span<const double> params, std::span<const double> x,
                                const std::vector<int>& layers, double slope) {
  require(params.size() == mlp_param_count(layers), "mlp parameter length mismatch");
  require(x.size() == static_cast<std::size_t>(layers.front()), "mlp input width mismatch");
  std::vector<double> h(x.begin(), x.end()), next;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto in = static_cast<std::size_t>(layers[l]), out = static_cast<std::size_t>(layers[l + 1]);
    const double* w = params.data() + off;
    const double* b = w + in * out;
    next.assign(out, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < in; ++c) acc += w[r * in + c] * h[c];
      acc += b[r];
      if (l + 2 < layers.size() && acc < 0.0) acc *= slope;
      next[r] = acc;
    }
    h.swap(next);
    off += (in + 1) * out;
  }
  return h;
}

ad::Var mlp_forward(ad::Var params, ad::Var x, const std::vector<int>& layers, double slope) {
  require(params.size() == mlp_param_count(layers), "mlp parameter length mismatch");
  require(x.size() == static_cast<std::size_t>(layers.front()), "mlp input width mismatch");
  ad::Var h = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto in = static_cast<std::size_t>(layers[l]), out = static_cast<std::size_t>(layers[l + 1]);
    ad::Var w = ad::slice(params, off, in * out);
    ad::Var b = ad::slice(params, off + in * out, out);
    h = ad::affine(w, h, b);
    if (l + 2 < layers.size()) h = ad::leaky_relu(h, slope);
    off += (in + 1) * out;
  }
  return h;
}

Scaler Scaler::fit(std::span<const std::vector<double>> data) {
  require(!data.empty(), "cannot fit a scaler to no data");
  const std::size_t dim = data[0].size();
  Scaler s;
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 0.0);
  const double n = static_cast<double>(data.size());
  for (const auto& x : data) {
    require(x.size() == dim, "scaler data has ragged rows");
    for (std::size_t i = 0; i < dim; ++i) s.mean[i] += x[i] / n;
  }
  for (const auto& x : data)
    for (std::size_t i = 0; i < dim; ++i) s.std[i] += (x[i] - s.mean[i]) * (x[i] - s.mean[i]) / n;
  for (double& v : s.std) v = v > 1e-24 ? std::sqrt(v) : 1.0;
  return s;
}

std::vector<double> Scaler::forward(std::span<const double> x) const {
  require(x.size() == mean.size(), "scaler width mismatch");
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - mean[i]) / std[i];
  return u;
}

std::vector<double> Scaler::inverse(std::span<const double> u) const {
  require(u.size() == mean.size(), "scaler width mismatch");
  std::vector<double> x(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) x[i] = u[i] * std[i] + mean[i];
  return x;
}

void GanModel::validate() const {
  check_layers(g_layers);
  check_layers(d_layers);
  require(g_layers.front() == latent_dim, "generator input width differs from the latent dimension");
  require(g_layers.back() == d_layers.front(), "generator output and discriminator input widths differ");
  require(d_layers.back() == 1, "discriminator must output a scalar");
  require(theta.size() == mlp_param_count(g_layers), "generator parameter length mismatch");
  require(v.size() == mlp_param_count(d_layers), "discriminator parameter length mismatch");
  if (scaler) require(scaler->mean.size() == data_dim() && scaler->std.size() == data_dim(), "scaler width mismatch");
}

GanModel make_gan(std::size_t data_dim, const GanArchitecture& arch, std::uint64_t seed) {
  require(data_dim >= 1 && arch.latent_dim >= 1, "GAN dimensions must be positive");
  GanModel m;
  m.latent_dim = arch.latent_dim;
  m.slope = arch.slope;
  m.seed = seed;
  m.g_layers.push_back(arch.latent_dim);
  m.g_layers.insert(m.g_layers.end(), arch.g_hidden.begin(), arch.g_hidden.end());
  m.g_layers.push_back(static_cast<int>(data_dim));
  m.d_layers.push_back(static_cast<int>(data_dim));
  m.d_layers.insert(m.d_layers.end(), arch.d_hidden.begin(), arch.d_hidden.end());
  m.d_layers.push_back(1);

  auto init = [](const std::vector<int>& layers, Rng rng) {
    std::vector<double> p;
    p.reserve(mlp_param_count(layers));
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layers[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      const std::size_t n = static_cast<std::size_t>(layers[l] + 1) * static_cast<std::size_t>(layers[l + 1]);
      for (std::size_t i = 0; i < n; ++i) p.push_back(u(rng));
    }
    return p;
  };
  m.theta = init(m.g_layers, make_rng(seed, "gan-generator-init"));
  m.v = init(m.d_layers, make_rng(seed, "gan-discriminator-init"));
  m.validate();
  return m;
}

std::vector<double> generate(const GanModel& m, std::span<const double> z) {
  if (z.size() != static_cast<std::size_t>(m.latent_dim)) throw ContractViolation("latent vector has the wrong length");
  auto u = mlp_forward(m.theta, z, m.g_layers, m.slope);
  return m.scaler ? m.scaler->inverse(u) : u;
}

double discriminate(const GanModel& m, std::span<const double> xi) {
  if (xi.size() != m.data_dim()) throw ContractViolation("discriminator input has the wrong length");
  if (m.scaler) return mlp_forward(m.v, m.scaler->forward(xi), m.d_layers, m.slope)[0];
  return mlp_forward(m.v, xi, m.d_layers, m.slope)[0];
}

ad::Var generate(const GanModel& m, ad::Var theta, ad::Var z) {
  if (z.size() != static_cast<std::size_t>(m.latent_dim)) throw ContractViolation("latent vector has the wrong length");
  return mlp_forward(theta, z, m.g_layers, m.slope);
}

ad::Var discriminate(const GanModel& m, ad::Var v, ad::Var x) {
  if (x.size() != m.data_dim()) throw ContractViolation("discriminator input has the wrong length");
  return mlp_forward(v, x, m.d_layers, m.slope);
}

ad::Var discriminate_data(const GanModel& m, ad::Var v, ad::Var xi) {
  if (!m.scaler) return discriminate(m, v, xi);
  ad::Graph& g = *xi.graph();
  ad::Var u = (xi - g.leaf(m.scaler->mean)) / g.leaf(m.scaler->std);
  return discriminate(m, v, u);
}

ad::Var gradient_penalty(const GanModel& m, ad::Var v, std::span<const double> real,
                         std::span<const double> fake, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ContractViolation("interpolation weight must lie in [0, 1]");
  if (real.size() != m.data_dim() || fake.size() != m.data_dim())
    throw ContractViolation("penalty inputs have the wrong length");
  std::vector<double> mix(real.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = eps * real[i] + (1.0 - eps) * fake[i];
  ad::Graph& g = *v.graph();
  ad::Var x = g.leaf(mix);
  ad::Var score = discriminate(m, v, x);
  const ad::Var wrt[] = {x};
  ad::Var grad_x = g.grad_as_graph(score, wrt)[0];
  ad::Var gap = ad::norm(grad_x) - g.scalar(1.0);
  return ad::square(gap);
}

double gradient_penalty(const GanModel& m, std::span<const double> real, std::span<const double> fake,
                        double eps) {
  ad::Graph g;
  return gradient_penalty(m, g.leaf(m.v), real, fake, eps).scalar();
}

void GanTrainConfig::validate() const {
  if (lambda_gp < 0.0) throw ConfigError("lambda_gp must be >= 0");
  if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
  if (batch_size < 1) throw ConfigError("GAN batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("GAN learning_rate must be > 0");
  if (!(critic_lr_ratio > 0.0)) throw ConfigError("GAN critic_lr_ratio must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("Adam betas must lie in [0, 1)");
  if (iterations < 0) throw ConfigError("GAN iterations must be >= 0");
  if (average_decay < 0.0 || average_decay >= 1.0) throw ConfigError("GAN average_decay must lie in [0, 1)");
  if (average_start < 0.0 || average_start > 1.0) throw ConfigError("GAN average_start must lie in [0, 1]");
}

nlohmann::json to_json(const GanArchitecture& a) {
  return {{"latent_dim", a.latent_dim}, {"g_hidden", a.g_hidden}, {"d_hidden", a.d_hidden}, {"slope", a.slope}};
}

GanArchitecture gan_architecture_from_json(const nlohmann::json& j) {
  GanArchitecture a;
  a.latent_dim = j.at("latent_dim").get<int>();
  a.g_hidden = j.at("g_hidden").get<std::vector<int>>();
  a.d_hidden = j.at("d_hidden").get<std::vector<int>>();
  a.slope = j.at("slope").get<double>();
  if (a.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  for (int w : a.g_hidden)
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  for (int w : a.d_hidden)
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  return a;
}

nlohmann::json to_json(const GanTrainConfig& c) {
  return {{"lambda_gp", c.lambda_gp}, {"n_critic", c.n_critic},   {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"critic_lr_ratio", c.critic_lr_ratio}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"iterations", c.iterations}, {"linear_decay", c.linear_decay},
          {"average_decay", c.average_decay}, {"average_start", c.average_start}, {"standardize", c.standardize},
          {"seed", c.seed}};
}

GanTrainConfig gan_train_config_from_json(const nlohmann::json& j) {
  GanTrainConfig c;
  c.lambda_gp = j.at("lambda_gp").get<double>();
  c.n_critic = j.at("n_critic").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.critic_lr_ratio = j.at("critic_lr_ratio").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.iterations = j.at("iterations").get<int>();
  c.linear_decay = j.at("linear_decay").get<bool>();
  c.average_decay = j.at("average_decay").get<double>();
  c.average_start = j.at("average_start").get<double>();
  c.standardize = j.at("standardize").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

GanTrainer::GanTrainer(GanModel model, const GanTrainConfig& cfg, Rng rng)
    : model_(std::move(model)), cfg_(cfg), rng_(std::move(rng)) {
  cfg_.validate();
  model_.validate();
  const ad::AdamConfig adam{cfg_.learning_rate, cfg_.beta1, cfg_.beta2, 1e-8};
  g_adam_ = ad::AdamState(model_.theta.size(), adam);
  d_adam_ = ad::AdamState(model_.v.size(), adam);
  d_adam_.config.learning_rate *= cfg_.critic_lr_ratio;
}

CriticStats GanTrainer::critic_step(std::span<const std::vector<double>> data) {
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);
  if (data.size() < batch) throw ContractViolation("GAN training set is smaller than the batch size");
  const std::size_t dim = model_.data_dim();
  for (const auto& x : data)
    if (x.size() != dim) throw ContractViolation("GAN training vector has the wrong length");

  // All randomness is drawn up front, in a fixed order.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng_)]);
  }
  CriticBatch cb;
  cb.real.resize(batch);
  cb.fake.resize(batch);
  cb.eps.resize(batch);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> z(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    cb.real[s] = model_.scaler ? model_.scaler->forward(data[order[s]]) : data[order[s]];
    z[s] = standard_normal(rng_, static_cast<std::size_t>(model_.latent_dim));
    cb.eps[s] = unit(rng_);
  }
  if (kernel_ == GanKernel::Fused) {
    cb.fake = mlp_forward_batch(model_.theta, z, model_.g_layers, model_.slope);
  } else {
    for (std::size_t s = 0; s < batch; ++s) cb.fake[s] = mlp_forward(model_.theta, z[s], model_.g_layers, model_.slope);
  }

  auto [grads, st] = kernel_ == GanKernel::Fused ? critic_gradient(model_, cb, cfg_.lambda_gp, exec_)
                                                 : critic_gradient_reference(model_, cb, cfg_.lambda_gp);
  if (!std::isfinite(st.loss) || !all_finite(grads))
    throw TrainingError("discriminator loss became non-finite at critic step " + std::to_string(d_adam_.t + 1));
  ad::adam_update(model_.v, grads, d_adam_);
  critic_history_.push_back(st);
  return st;
}

double GanTrainer::generator_step() {
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<std::vector<double>> z(batch);
  for (auto& zs : z) zs = standard_normal(rng_, static_cast<std::size_t>(model_.latent_dim));

  auto [grads, loss] = kernel_ == GanKernel::Fused ? generator_gradient(model_, z, exec_)
                                                   : generator_gradient_reference(model_, z);
  if (!std::isfinite(loss) || !all_finite(grads))
    throw TrainingError("generator loss became non-finite at generator step " + std::to_string(g_adam_.t + 1));
  ad::adam_update(model_.theta, grads, g_adam_);
  generator_history_.push_back(loss);
  if (cfg_.average_decay > 0.0 &&
      static_cast<double>(g_adam_.t) > cfg_.average_start * static_cast<double>(cfg_.iterations)) {
    if (theta_avg_.empty()) {
      theta_avg_ = model_.theta;
    } else {
      const double a = cfg_.average_decay;
      for (std::size_t k = 0; k < theta_avg_.size(); ++k) theta_avg_[k] = a * theta_avg_[k] + (1.0 - a) * model_.theta[k];
    }
  }
  return loss;
}

GanModel GanTrainer::averaged_model() const {
  GanModel m = model_;
  if (!theta_avg_.empty()) m.theta = theta_avg_;
  return m;
}

void GanTrainer::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) throw ContractViolation("learning rate must be >= 0");
  g_adam_.config.learning_rate = lr;
  d_adam_.config.learning_rate = lr * cfg_.critic_lr_ratio;
}

CriticStats GanTrainer::iteration(std::span<const std::vector<double>> data) {
  CriticStats last;
  for (int k = 0; k < cfg_.n_critic; ++k) last = critic_step(data);
  generator_step();
  return last;
}

nlohmann::json GanTrainer::to_json() const {
  nlohmann::json critic = nlohmann::json::array();
  for (const auto& c : critic_history_) critic.push_back({c.loss, c.wasserstein, c.penalty});
  return {{"model", gan::to_json(model_)},
          {"config", gan::to_json(cfg_)},
          {"g_adam", {{"m", g_adam_.m}, {"v", g_adam_.v}, {"t", g_adam_.t}}},
          {"d_adam", {{"m", d_adam_.m}, {"v", d_adam_.v}, {"t", d_adam_.t}}},
          {"rng", rng_to_string(rng_)},
          {"learning_rate", g_adam_.config.learning_rate},
          {"critic_history", critic},
          {"generator_history", generator_history_},
          {"theta_avg", theta_avg_}};
}

GanTrainer GanTrainer::from_json(const nlohmann::json& j) {
  GanTrainer t(gan_from_json(j.at("model")), gan_train_config_from_json(j.at("config")), Rng{});
  auto load = [](const nlohmann::json& a, ad::AdamState& s) {
    s.m = a.at("m").get<std::vector<double>>();
    s.v = a.at("v").get<std::vector<double>>();
    s.t = a.at("t").get<std::uint64_t>();
  };
  load(j.at("g_adam"), t.g_adam_);
  load(j.at("d_adam"), t.d_adam_);
  if (t.g_adam_.m.size() != t.model_.theta.size() || t.d_adam_.m.size() != t.model_.v.size())
    throw ContractViolation("GAN optimizer state does not match the model");
  t.rng_ = rng_from_string(j.at("rng").get<std::string>());
  t.set_learning_rate(j.at("learning_rate").get<double>());
  for (const auto& c : j.at("critic_history"))
    t.critic_history_.push_back({c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()});
  t.generator_history_ = j.at("generator_history").get<std::vector<double>>();
  t.theta_avg_ = j.at("theta_avg").get<std::vector<double>>();
  if (!t.theta_avg_.empty() && t.theta_avg_.size() != t.model_.theta.size())
    throw ContractViolation("averaged generator does not match the model");
  return t;
}

GanTrainer make_trainer(std::span<const std::vector<double>> data, const GanTrainConfig& cfg,
                        const GanArchitecture& arch) {
  cfg.validate();
  if (data.empty()) throw ContractViolation("warm-up-2 needs training vectors");
  GanModel model = make_gan(data[0].size(), arch, cfg.seed);
  if (cfg.standardize) model.scaler = Scaler::fit(data);
  return GanTrainer(std::move(model), cfg, make_rng(cfg.seed, "gan"));
}

Warmup2Result train_warmup2(std::span<const std::vector<double>> data, const GanTrainConfig& cfg,
                            const GanArchitecture& arch, Execution exec) {
  GanTrainer t = make_trainer(data, cfg, arch);
  t.set_execution(exec);
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.linear_decay)
      t.set_learning_rate(cfg.learning_rate * (1.0 - static_cast<double>(it) / static_cast<double>(cfg.iterations)));
    t.iteration(data);
  }
  return {t.averaged_model(), t.critic_history(), t.generator_history()};
}

std::vector<SampledOde> sample_odes(const GanModel& m, std::size_t n, int d, int alpha, Rng& rng) {
  const symnet::SymNetShape shape(d, alpha);
  if (shape.total_size() != m.data_dim()) throw ContractViolation("GAN output width does not match the SymNet shape");
  std::vector<SampledOde> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = standard_normal(rng, static_cast<std::size_t>(m.latent_dim));
    SampledOde s;
    s.xi = generate(m, z);
    s.system = symnet::extract_system(s.xi, shape);
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json to_json(const GanModel& m) {
  nlohmann::json j = {{"latent_dim", m.latent_dim}, {"g_layers", m.g_layers}, {"d_layers", m.d_layers},
                      {"slope", m.slope},           {"theta", m.theta},       {"v", m.v},
                      {"seed", m.seed}};
  if (m.scaler) j["scaler"] = {{"mean", m.scaler->mean}, {"std", m.scaler->std}};
  else j["scaler"] = nullptr;
  return j;
}

GanModel gan_from_json(const nlohmann::json& j) {
  GanModel m;
  m.latent_dim = j.at("latent_dim").get<int>();
  m.g_layers = j.at("g_layers").get<std::vector<int>>();
  m.d_layers = j.at("d_layers").get<std::vector<int>>();
  m.slope = j.value("slope", 0.2);
  m.theta = j.at("theta").get<std::vector<double>>();
  m.v = j.at("v").get<std::vector<double>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("scaler") && !j.at("scaler").is_null())
    m.scaler = Scaler{j.at("scaler").at("mean").get<std::vector<double>>(),
                      j.at("scaler").at("std").get<std::vector<double>>()};
  m.validate();
  return m;
}

}  // namespace rodenet::gan
