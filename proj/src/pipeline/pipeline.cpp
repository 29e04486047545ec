#include "rodenet/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <regex>

#include "rodenet/error.hpp"
#include "rodenet/json_util.hpp"

namespace rodenet::pipeline {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
  odenet.validate();
  gan.validate();
  if (alpha < 0) throw ConfigError("alpha must be >= 0");
  if (lambda_g < 0.0) throw ConfigError("lambda_g must be >= 0");
  if (n_d < 0) throw ConfigError("n_d must be >= 0");
  if (n_gan < 0) throw ConfigError("n_gan must be >= 0");
  if (steps_per_outer < 0) throw ConfigError("steps_per_outer must be >= 0");
  if (max_outer < 0) throw ConfigError("max_outer must be >= 0");
  if (convergence_tol < 0.0) throw ConfigError("convergence_tol must be >= 0");
  if (!(gan_alternating_lr >= 0.0)) throw ConfigError("gan_alternating_lr must be >= 0");
  if (keep_checkpoints < 0) throw ConfigError("keep_checkpoints must be >= 0");
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"odenet", odenet::to_json(c.odenet)},
          {"gan", gan::to_json(c.gan)},
          {"arch", gan::to_json(c.arch)},
          {"alpha", c.alpha},
          {"lambda_g", c.lambda_g},
          {"n_d", c.n_d},
          {"n_gan", c.n_gan},
          {"steps_per_outer", c.steps_per_outer},
          {"max_outer", c.max_outer},
          {"convergence_tol", c.convergence_tol},
          {"gan_alternating_lr", c.gan_alternating_lr},
          {"shared_init", c.shared_init},
          {"keep_checkpoints", c.keep_checkpoints},
          {"seed", c.seed}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  return parse_config("pipeline config", [&] {
    require_keys(j,
                 {"odenet", "gan", "arch", "alpha", "lambda_g", "n_d", "n_gan", "steps_per_outer", "max_outer",
                  "convergence_tol", "gan_alternating_lr", "shared_init", "keep_checkpoints", "seed"},
                 "pipeline config");
    require_keys(j.at("odenet"),
                 {"lambda_h", "huber_knee", "s_max", "epochs_per_stage", "batch_size", "learning_rate", "init_std",
                  "seed"},
                 "odenet config");
    require_keys(j.at("gan"),
                 {"lambda_gp", "n_critic", "batch_size", "learning_rate", "critic_lr_ratio", "beta1", "beta2",
                  "iterations", "linear_decay", "average_decay", "average_start", "standardize", "seed"},
                 "gan config");
    require_keys(j.at("arch"), {"latent_dim", "g_hidden", "d_hidden", "slope"}, "gan architecture");
    PipelineConfig c;
    c.odenet = odenet::train_config_from_json(j.at("odenet"));
    c.gan = gan::gan_train_config_from_json(j.at("gan"));
    c.arch = gan::gan_architecture_from_json(j.at("arch"));
    c.alpha = j.at("alpha").get<int>();
    c.lambda_g = j.at("lambda_g").get<double>();
    c.n_d = j.at("n_d").get<int>();
    c.n_gan = j.at("n_gan").get<int>();
    c.steps_per_outer = j.at("steps_per_outer").get<int>();
    c.max_outer = j.at("max_outer").get<int>();
    c.convergence_tol = j.at("convergence_tol").get<double>();
    c.gan_alternating_lr = j.at("gan_alternating_lr").get<double>();
    c.shared_init = j.at("shared_init").get<bool>();
    c.keep_checkpoints = j.at("keep_checkpoints").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  });
}

LossTerms rodenet_loss(std::span<const double> xi, std::span<const Trajectory> data, const gan::GanModel& gan,
                       double lambda_h, double huber_knee, double lambda_g, int unroll, symnet::SymNetShape shape,
                       double dt) {
  if (data.empty()) throw ContractViolation("rodenet_loss needs at least one trajectory");
  const odenet::OdeNet net(shape, std::vector<double>(xi.begin(), xi.end()), dt);
  LossTerms t;
  double acc = 0.0;
  for (const auto& traj : data) acc += odenet::data_loss(net, traj, unroll);
  t.data = acc / static_cast<double>(data.size());
  t.huber = odenet::huber_loss(xi, huber_knee);
  t.gan = gan::discriminate(gan, xi);
  t.total = odenet::warmup1_objective(net, data, lambda_h, huber_knee, unroll) + lambda_g * t.gan;
  return t;
}

odenet::Regularizer gan_regularizer(const gan::GanModel& gan, double lambda_g) {
  if (lambda_g == 0.0) return {};
  auto model = std::make_shared<const gan::GanModel>(gan);
  return [model, lambda_g](ad::Var xi) {
    ad::Graph& g = *xi.graph();
    return gan::discriminate_data(*model, g.leaf(model->v), xi) * lambda_g;
  };
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Warmup1: return "warmup1";
    case Stage::Warmup2: return "warmup2";
    case Stage::Alternating: return "alternating";
    case Stage::Done: return "done";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::Warmup1, Stage::Warmup2, Stage::Alternating, Stage::Done})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown pipeline stage '" + s + "'");
}

std::vector<std::vector<double>> PipelineState::xis() const {
  std::vector<std::vector<double>> out;
  out.reserve(odenets.size());
  for (const auto& t : odenets) out.push_back(t.xi());
  return out;
}

gan::GanModel PipelineState::sampling_model() const {
  if (!gan) throw ContractViolation("no GAN has been trained yet");
  return gan->averaged_model();
}

nlohmann::json to_json(const PipelineState& s) {
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& t : s.odenets) nets.push_back(t.to_json());
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : s.records)
    records.push_back({{"iteration", r.iteration},
                       {"max_delta", r.max_delta},
                       {"mean_odenet_loss", r.mean_odenet_loss},
                       {"critic_loss", r.critic_loss},
                       {"wasserstein", r.wasserstein}});
  return {{"config", to_json(s.config)},
          {"stage", to_string(s.stage)},
          {"odenets", nets},
          {"gan", s.gan ? s.gan->to_json() : nlohmann::json(nullptr)},
          {"outer_iteration", s.outer_iteration},
          {"converged", s.converged},
          {"records", records}};
}

PipelineState pipeline_state_from_json(const nlohmann::json& j) {
  return parse_config("pipeline checkpoint", [&] {
    PipelineState s;
    s.config = pipeline_config_from_json(j.at("config"));
    s.stage = stage_from_string(j.at("stage").get<std::string>());
    for (const auto& t : j.at("odenets")) s.odenets.push_back(odenet::OdeNetTrainer::from_json(t));
    if (!j.at("gan").is_null()) s.gan = gan::GanTrainer::from_json(j.at("gan"));
    s.outer_iteration = j.at("outer_iteration").get<int>();
    s.converged = j.at("converged").get<bool>();
    for (const auto& r : j.at("records"))
      s.records.push_back({r.at("iteration").get<int>(), r.at("max_delta").get<double>(),
                           r.at("mean_odenet_loss").get<double>(), r.at("critic_loss").get<double>(),
                           r.at("wasserstein").get<double>()});
    return s;
  });
}

namespace {

struct Problem {
  std::vector<std::vector<Trajectory>> observed;
  symnet::SymNetShape shape;
  double dt = 0.05;
};

Problem problem_of(const sim::Dataset& data, int alpha) {
  if (data.instances.empty()) throw ContractViolation("the dataset has no instances");
  Problem p;
  p.observed.reserve(data.instances.size());
  for (std::size_t i = 0; i < data.instances.size(); ++i) p.observed.push_back(data.observed(i));
  const auto& first = p.observed[0];
  if (first.empty() || first[0].empty()) throw ContractViolation("instance 0 has no trajectories");
  p.shape = symnet::SymNetShape(static_cast<int>(first[0][0].size()), alpha);
  p.dt = data.config.dt;
  return p;
}

void expect_stage(const PipelineState& s, Stage want, const char* what) {
  if (s.stage != want)
    throw ContractViolation(std::string(what) + " requires stage " + to_string(want) + ", the run is at " +
                            to_string(s.stage));
}

/// Re-raises a failure with the stage (and instance) that produced it.
template <class F>
void tagged(const std::string& tag, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    throw Error(e.category(), "[" + tag + "] " + e.what());
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

gan::GanTrainConfig seeded(gan::GanTrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

}  // namespace

PipelineState initial_state(const PipelineConfig& cfg) {
  cfg.validate();
  PipelineState s;
  s.config = cfg;
  s.config.odenet.seed = cfg.seed;
  s.config.gan.seed = cfg.seed;
  return s;
}

void run_warmup1(PipelineState& state, const sim::Dataset& data, Execution exec, const LogSink& log) {
  expect_stage(state, Stage::Warmup1, "warm-up-1");
  const auto& cfg = state.config;
  const Problem p = problem_of(data, cfg.alpha);
  const std::size_t m = p.observed.size();

  std::vector<double> shared;
  if (cfg.shared_init) {
    Rng init = make_rng(cfg.seed, "odenet-init");
    shared = odenet::initial_parameters(p.shape, cfg.odenet.init_std, init);
  }
  std::vector<odenet::OdeNetTrainer> nets(m);
  std::vector<double> final_loss(m, 0.0);
  for_each_index(exec, m, [&](std::size_t i) {
    tagged("warmup1 instance " + std::to_string(i), [&] {
      Rng rng = make_rng(cfg.seed, "odenet", i);
      nets[i] = cfg.shared_init ? odenet::OdeNetTrainer(p.shape, p.dt, cfg.odenet, std::move(rng), shared)
                                : odenet::OdeNetTrainer(p.shape, p.dt, cfg.odenet, std::move(rng));
      nets[i].run_curriculum(p.observed[i]);
      const auto& h = nets[i].loss_history();
      final_loss[i] = h.empty() ? 0.0 : h.back();
      nets[i].clear_history();
    });
  });
  state.odenets = std::move(nets);
  state.stage = Stage::Warmup2;
  if (log)
    for (std::size_t i = 0; i < m; ++i)
      log({{"stage", "warmup1"}, {"instance", i}, {"final_loss", final_loss[i]}});
}

void run_warmup2(PipelineState& state, Execution exec, const LogSink& log) {
  expect_stage(state, Stage::Warmup2, "warm-up-2");
  const auto& cfg = state.config;
  const auto data = state.xis();
  tagged("warmup2", [&] {
    gan::GanTrainer t = gan::make_trainer(data, seeded(cfg.gan, cfg.seed), cfg.arch);
    t.set_execution(exec);
    const int total = cfg.gan.iterations;
    const int every = std::max(1, total / 100);
    for (int it = 0; it < total; ++it) {
      if (cfg.gan.linear_decay)
        t.set_learning_rate(cfg.gan.learning_rate * (1.0 - static_cast<double>(it) / static_cast<double>(total)));
      const auto st = t.iteration(data);
      if (log && ((it + 1) % every == 0 || it + 1 == total))
        log({{"stage", "warmup2"},
             {"iteration", it + 1},
             {"critic_loss", st.loss},
             {"wasserstein", st.wasserstein},
             {"penalty", st.penalty},
             {"generator_loss", t.generator_history().back()}});
    }
    t.set_learning_rate(cfg.gan_alternating_lr);
    t.clear_history();
    state.gan = std::move(t);
  });
  state.stage = Stage::Alternating;
}

OuterRecord run_outer_iteration(PipelineState& state, const sim::Dataset& data, Execution exec, const LogSink& log) {
  expect_stage(state, Stage::Alternating, "the alternating stage");
  const auto& cfg = state.config;
  const Problem p = problem_of(data, cfg.alpha);
  const std::size_t m = state.odenets.size();
  if (p.observed.size() != m) throw ContractViolation("dataset and pipeline state disagree on the instance count");
  if (!state.gan) throw ContractViolation("the alternating stage needs a trained GAN");
  const int iter = state.outer_iteration + 1;
  const std::string tag = "alternating " + std::to_string(iter);

  const auto before = state.xis();
  const odenet::Regularizer reg = gan_regularizer(state.gan->model(), cfg.lambda_g);
  std::vector<double> mean_loss(m, 0.0);
  for_each_index(exec, m, [&](std::size_t i) {
    tagged(tag + " instance " + std::to_string(i), [&] {
      auto& t = state.odenets[i];
      t.run_steps(p.observed[i], cfg.odenet.s_max, cfg.steps_per_outer, reg);
      mean_loss[i] = mean_of(t.loss_history());
      t.clear_history();
    });
  });

  const auto after = state.xis();
  gan::CriticStats last{};
  tagged(tag + " gan", [&] {
    auto& g = *state.gan;
    for (int k = 0; k < cfg.n_d; ++k) last = g.critic_step(after);
    for (int k = 0; k < cfg.n_gan; ++k) last = g.iteration(after);
    g.clear_history();
  });

  OuterRecord r;
  r.iteration = iter;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < after[i].size(); ++k) r.max_delta = std::max(r.max_delta, std::abs(after[i][k] - before[i][k]));
  r.mean_odenet_loss = mean_of(mean_loss);
  r.critic_loss = last.loss;
  r.wasserstein = last.wasserstein;
  state.records.push_back(r);
  state.outer_iteration = iter;
  state.converged = r.max_delta < cfg.convergence_tol;
  if (state.converged || state.outer_iteration >= cfg.max_outer) state.stage = Stage::Done;
  if (log)
    log({{"stage", "alternating"},
         {"iteration", iter},
         {"max_delta", r.max_delta},
         {"mean_odenet_loss", r.mean_odenet_loss},
         {"instance_loss", mean_loss},
         {"critic_loss", r.critic_loss},
         {"wasserstein", r.wasserstein},
         {"converged", state.converged}});
  return r;
}

std::string checkpoint_path(const std::string& run_dir, int outer_iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "iter%03d.json", outer_iteration);
  return (fs::path(run_dir) / "checkpoints" / name).string();
}

namespace {

std::string warmup1_path(const std::string& run_dir) {
  return (fs::path(run_dir) / "checkpoints" / "warmup1.json").string();
}

std::vector<std::pair<int, fs::path>> outer_checkpoints(const std::string& run_dir) {
  std::vector<std::pair<int, fs::path>> out;
  const fs::path dir = fs::path(run_dir) / "checkpoints";
  if (!fs::is_directory(dir)) return out;
  static const std::regex pattern(R"(iter(\d+)\.json)");
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch mt;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, mt, pattern)) out.emplace_back(std::stoi(mt[1].str()), e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void prune(const std::string& run_dir, int keep) {
  if (keep <= 0) return;
  auto all = outer_checkpoints(run_dir);
  for (std::size_t i = 0; i + static_cast<std::size_t>(keep) < all.size(); ++i) fs::remove(all[i].second);
}

class RunLog {
 public:
  explicit RunLog(const std::string& run_dir) {
    if (run_dir.empty()) return;
    out_.open(fs::path(run_dir) / "log.jsonl", std::ios::app);
    if (!out_) throw IoError("cannot open the run log in " + run_dir);
  }
  LogSink sink() {
    if (!out_.is_open()) return {};
    return [this](const nlohmann::json& j) { out_ << j.dump() << '\n' << std::flush; };
  }

 private:
  std::ofstream out_;
};

void write_outputs(const PipelineState& s, const std::string& run_dir, const nlohmann::json& prov) {
  const fs::path nets = fs::path(run_dir) / "odenets";
  fs::create_directories(nets);
  for (std::size_t i = 0; i < s.odenets.size(); ++i)
    write_json_file((nets / ("inst_" + std::to_string(i) + ".json")).string(),
                    with_provenance(odenet::to_json(s.odenets[i].net()), prov));
  if (s.gan)
    write_json_file((fs::path(run_dir) / "gan.json").string(), with_provenance(gan::to_json(s.sampling_model()), prov));
}

}  // namespace

std::optional<PipelineState> load_latest_checkpoint(const std::string& run_dir) {
  const auto all = outer_checkpoints(run_dir);
  if (!all.empty()) return pipeline_state_from_json(without_provenance(read_json_file(all.back().second.string())));
  if (fs::exists(warmup1_path(run_dir)))
    return pipeline_state_from_json(without_provenance(read_json_file(warmup1_path(run_dir))));
  return std::nullopt;
}

PipelineState run_training(const sim::Dataset& data, const PipelineConfig& cfg, const RunOptions& opt,
                           Execution exec) {
  if (opt.stop_after == Stage::Alternating) throw ContractViolation("the alternating stage has no stopping point");
  const std::string& run_dir = opt.run_dir;
  const auto& prov = opt.provenance;
  const auto save = [&](const std::string& path, const nlohmann::json& j) {
    if (!run_dir.empty()) write_json_file(path, with_provenance(j, prov));
  };
  PipelineState state = initial_state(cfg);
  if (!run_dir.empty()) {
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    if (auto prev = load_latest_checkpoint(run_dir)) {
      if (to_json(prev->config) != to_json(state.config))
        throw ConfigError("the run directory " + run_dir + " holds a run with a different configuration");
      state = std::move(*prev);
    } else {
      save((fs::path(run_dir) / "config.json").string(), to_json(state.config));
      save((fs::path(run_dir) / "dataset.json").string(), sim::to_json(data));
    }
  }
  RunLog run_log(run_dir);
  const LogSink log = run_log.sink();
  if (log) {
    nlohmann::json start{{"event", "start"}, {"stage", to_string(state.stage)}, {"outer_iteration", state.outer_iteration}};
    log(with_provenance(std::move(start), prov));
  }

  if (state.stage == Stage::Warmup1) {
    run_warmup1(state, data, exec, log);
    save(warmup1_path(run_dir), to_json(state));
  }
  if (state.stage == Stage::Warmup2 && opt.stop_after != Stage::Warmup1) {
    run_warmup2(state, exec, log);
    if (cfg.max_outer == 0) state.stage = Stage::Done;
    save(checkpoint_path(run_dir, 0), to_json(state));
  }
  while (state.stage == Stage::Alternating && opt.stop_after == Stage::Done) {
    run_outer_iteration(state, data, exec, log);
    save(checkpoint_path(run_dir, state.outer_iteration), to_json(state));
    if (!run_dir.empty()) prune(run_dir, cfg.keep_checkpoints);
  }
  if (!run_dir.empty()) write_outputs(state, run_dir, prov);
  if (log) log({{"event", "finish"}, {"stage", to_string(state.stage)}, {"outer_iteration", state.outer_iteration},
                {"converged", state.converged}});
  return state;
}

PipelineState run_full_training(const sim::Dataset& data, const PipelineConfig& cfg, const std::string& run_dir,
                                Execution exec) {
  return run_training(data, cfg, RunOptions{run_dir, Stage::Done, nullptr}, exec);
}

std::vector<std::vector<double>> continue_without_gan(PipelineState warm, const sim::Dataset& data, int extra_outer,
                                                      Execution exec) {
  expect_stage(warm, Stage::Warmup2, "continuing warm-up-1");
  if (extra_outer < 0) throw ContractViolation("extra_outer must be >= 0");
  const auto& cfg = warm.config;
  const Problem p = problem_of(data, cfg.alpha);
  if (p.observed.size() != warm.odenets.size())
    throw ContractViolation("dataset and pipeline state disagree on the instance count");
  for_each_index(exec, warm.odenets.size(), [&](std::size_t i) {
    tagged("no-gan instance " + std::to_string(i), [&] {
      auto& t = warm.odenets[i];
      for (int k = 0; k < extra_outer; ++k) t.run_steps(p.observed[i], cfg.odenet.s_max, cfg.steps_per_outer);
      t.clear_history();
    });
  });
  return warm.xis();
}

std::vector<std::vector<double>> train_without_gan(const sim::Dataset& data, const PipelineConfig& cfg, int extra_outer,
                                                   Execution exec) {
  PipelineState s = initial_state(cfg);
  run_warmup1(s, data, exec);
  return continue_without_gan(std::move(s), data, extra_outer, exec);
}

}  // namespace rodenet::pipeline
