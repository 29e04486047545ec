#include "rodenet/cli/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rodenet/cli/run_config.hpp"
#include "rodenet/error.hpp"
#include "rodenet/evaluator/evaluator.hpp"
#include "rodenet/gan/gan.hpp"
#include "rodenet/json_util.hpp"
#include "rodenet/odenet/odenet.hpp"
#include "rodenet/parallel.hpp"
#include "rodenet/pipeline/pipeline.hpp"
#include "rodenet/symnet/symnet.hpp"

namespace rodenet::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  int jobs = 0;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON run configuration (defaults when omitted)");
  sub->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  sub->add_option("--jobs", f.jobs, "Worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);
}

RunConfig prepare(const CommonFlags& f) {
  if (f.jobs > 0) set_thread_count(f.jobs);
  return load_config(f.config, f.seed);
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

sim::Dataset read_dataset(const std::string& path) {
  if (!fs::exists(path)) throw DependencyError("dataset " + path + " does not exist; run 'simulate' first");
  return sim::load_dataset(path);
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  CommonFlags common;
  std::string out;
};

void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const RunConfig rc = prepare(a.common);
  const auto ds = sim::generate_dataset(rc.simulation);
  ensure_parent(a.out);
  write_json_file(a.out, with_provenance(sim::to_json(ds), rc.provenance()));
  std::size_t trajectories = 0;
  for (const auto& inst : ds.instances) trajectories += inst.trajectories.size();
  out << json{{"command", "simulate"},
              {"output", a.out},
              {"instances", ds.instances.size()},
              {"trajectories", trajectories},
              {"blowup_retries", ds.blowup_retries},
              {"seed", rc.seed},
              {"config_hash", rc.hash()}}
             .dump()
      << '\n';
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  CommonFlags common;
  std::string dataset;
  std::string out;
  std::string mode = "full";
  bool resume = false;
  int extra_outer = 0;
};

void check_run_dir(const TrainArgs& a, const sim::Dataset& data, const std::optional<pipeline::PipelineState>& prev) {
  const fs::path dir(a.out);
  const bool no_gan = a.mode == "no-gan";
  if (fs::exists(dir / "run.json")) {
    const auto mode = read_json_file((dir / "run.json").string()).at("mode").get<std::string>();
    if ((mode == "no-gan") != no_gan)
      throw ConfigError("run directory " + a.out + " holds a '" + mode + "' run, which mode '" + a.mode +
                        "' cannot continue");
  }
  if (a.mode == "warmup2" && !prev)
    throw DependencyError("stage dependency: warm-up-2 needs the warm-up-1 checkpoint in " + a.out +
                          "; run 'train --mode warmup1' first");
  if (prev && !a.resume && a.mode != "warmup2")
    throw ConfigError("run directory " + a.out + " already holds a run; pass --resume to continue it");
  if (prev && (a.mode == "warmup1" || no_gan) && prev->stage != pipeline::Stage::Warmup2)
    throw ConfigError("run directory " + a.out + " is past warm-up-1 (stage " + to_string(prev->stage) + ")");
  if (prev && fs::exists(dir / "dataset.json") &&
      without_provenance(read_json_file((dir / "dataset.json").string())) != sim::to_json(data))
    throw ConfigError("the dataset differs from the one the run in " + a.out + " was started with");
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig rc = prepare(a.common);
  const auto data = read_dataset(a.dataset);
  const auto prev = fs::is_directory(a.out) ? pipeline::load_latest_checkpoint(a.out) : std::nullopt;
  check_run_dir(a, data, prev);
  if (a.extra_outer < 0 || (a.extra_outer > 0 && a.mode != "no-gan"))
    throw ConfigError("--extra-outer takes a non-negative count and applies to --mode no-gan only");

  pipeline::Stage stop = pipeline::Stage::Done;
  if (a.mode == "warmup1" || a.mode == "no-gan") stop = pipeline::Stage::Warmup1;
  if (a.mode == "warmup2") stop = pipeline::Stage::Warmup2;
  const json prov = rc.provenance();
  auto state = pipeline::run_training(data, rc.training, {a.out, stop, prov});

  if (a.mode == "no-gan" && a.extra_outer > 0) {
    const auto shape = state.odenets.front().net().shape;
    const auto xis = pipeline::continue_without_gan(state, data, a.extra_outer);
    for (std::size_t i = 0; i < xis.size(); ++i)
      write_json_file((fs::path(a.out) / "odenets" / ("inst_" + std::to_string(i) + ".json")).string(),
                      with_provenance(odenet::to_json(odenet::OdeNet(shape, xis[i], data.config.dt)), prov));
  }

  json summary{{"mode", a.mode},
               {"extra_outer", a.extra_outer},
               {"stage", to_string(state.stage)},
               {"outer_iteration", state.outer_iteration},
               {"converged", state.converged},
               {"instances", state.odenets.size()}};
  write_json_file((fs::path(a.out) / "run.json").string(), with_provenance(summary, prov));
  summary["command"] = "train";
  summary["output"] = a.out;
  summary["seed"] = rc.seed;
  summary["config_hash"] = rc.hash();
  out << summary.dump() << '\n';
}

// ---- sample ---------------------------------------------------------------

struct SampleArgs {
  CommonFlags common;
  std::string gan;
  std::string out;
  long long n = 100;
};

std::string gan_file(const std::string& path) {
  const fs::path p = fs::is_directory(path) ? fs::path(path) / "gan.json" : fs::path(path);
  if (!fs::exists(p)) throw DependencyError("GAN checkpoint " + p.string() + " does not exist; train a GAN first");
  return p.string();
}

gan::GanModel load_gan(const std::string& file, json* provenance = nullptr) {
  const json j = read_json_file(file);
  if (provenance && j.is_object() && j.contains("provenance")) *provenance = j.at("provenance");
  try {
    return gan::gan_from_json(without_provenance(j));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt GAN checkpoint " + file + ": " + e.what());
  } catch (const ContractViolation& e) {
    throw IoError("corrupt GAN checkpoint " + file + ": " + e.what());
  }
}

int alpha_for(std::size_t data_dim, int d) {
  for (int alpha = 1; alpha <= 8; ++alpha)
    if (symnet::param_count(d, alpha) == data_dim) return alpha;
  throw IoError("GAN output width " + std::to_string(data_dim) + " is not a SymNet parameter count");
}

void cmd_sample(const SampleArgs& a, std::ostream& out) {
  const RunConfig rc = prepare(a.common);
  if (a.n < 0) throw ConfigError("--n must be >= 0");
  const std::string file = gan_file(a.gan);
  json inherited;
  const auto model = load_gan(file, &inherited);
  json prov = rc.provenance();
  if (a.common.config.empty() && inherited.is_object() && inherited.contains("config_hash"))
    prov["config_hash"] = inherited.at("config_hash");

  const int d = 3;
  const int alpha = alpha_for(model.data_dim(), d);
  Rng rng = make_rng(rc.seed, "sample");
  const auto odes = gan::sample_odes(model, static_cast<std::size_t>(a.n), d, alpha, rng);
  json systems = json::array();
  for (const auto& s : odes) {
    json comps = json::array(), text = json::array();
    for (const auto& p : s.system) {
      const auto q = rc.evaluation.prune_tol > 0.0 ? p.pruned(rc.evaluation.prune_tol) : p;
      comps.push_back(symnet::to_json(q));
      text.push_back(symnet::to_string(q));
    }
    systems.push_back({{"components", std::move(comps)}, {"text", std::move(text)}});
  }
  ensure_parent(a.out);
  write_json_file(a.out, json{{"provenance", prov},
                              {"source", file},
                              {"dim", d},
                              {"alpha", alpha},
                              {"count", odes.size()},
                              {"systems", std::move(systems)}});
  out << json{{"command", "sample"}, {"output", a.out}, {"count", odes.size()}, {"seed", rc.seed},
              {"config_hash", prov.at("config_hash")}}
             .dump()
      << '\n';
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  CommonFlags common;
  std::vector<std::string> runs;
  std::string dataset;
  std::string gan;
  std::string out;
};

struct LoadedRun {
  std::string label;
  std::string dir;
  std::vector<std::vector<double>> xis;
  symnet::SymNetShape shape;
};

LoadedRun load_run(const std::string& dir, std::size_t instances) {
  LoadedRun r;
  r.dir = dir;
  r.label = fs::path(dir).filename().string();
  if (fs::exists(fs::path(dir) / "run.json"))
    r.label = read_json_file((fs::path(dir) / "run.json").string()).at("mode").get<std::string>();
  for (std::size_t i = 0; i < instances; ++i) {
    const auto f = fs::path(dir) / "odenets" / ("inst_" + std::to_string(i) + ".json");
    if (!fs::exists(f)) throw DependencyError("missing trained ODE-Net " + f.string() + "; run 'train' first");
    const auto net = odenet::odenet_from_json(without_provenance(read_json_file(f.string())));
    if (i == 0) r.shape = net.shape;
    r.xis.push_back(net.xi);
  }
  return r;
}

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig rc = prepare(a.common);
  const std::string ds_path = a.dataset.empty() ? (fs::path(a.runs.front()) / "dataset.json").string() : a.dataset;
  const auto data = read_dataset(ds_path);

  std::vector<LoadedRun> runs;
  for (const auto& dir : a.runs) {
    if (!fs::is_directory(dir)) throw DependencyError("run directory " + dir + " does not exist");
    runs.push_back(load_run(dir, data.instances.size()));
    int copies = 0;
    for (std::size_t k = 0; k + 1 < runs.size(); ++k) copies += runs[k].label == runs.back().label;
    if (copies > 0) runs.back().label += "_" + std::to_string(copies + 1);
  }

  std::string gan_path;
  if (!a.gan.empty()) {
    gan_path = gan_file(a.gan);
  } else {
    for (const auto& r : runs)
      if (fs::exists(fs::path(r.dir) / "gan.json")) {
        gan_path = (fs::path(r.dir) / "gan.json").string();
        break;
      }
  }

  eval::EvalReport rep;
  rep.metadata = rc.provenance();
  json labels = json::array();
  for (const auto& r : runs) labels.push_back({{"label", r.label}, {"dir", r.dir}});
  rep.metadata["runs"] = labels;
  rep.metadata["dataset"] = ds_path;
  rep.metadata["gan"] = gan_path.empty() ? json(nullptr) : json(gan_path);
  for (const auto& r : runs) rep.runs.push_back(eval::evaluate_run(r.label, r.xis, data, r.shape, rc.evaluation));
  if (!gan_path.empty()) {
    eval::add_gan_statistics(rep, load_gan(gan_path), data, runs.front().shape, rc.evaluation);
  } else {
    if (rep.basis.empty())
      rep.basis = symnet::monomial_basis(runs.front().shape.dim, runs.front().shape.max_degree());
    err << json{{"note", "no GAN checkpoint found; reporting ODE-Net metrics only"}}.dump() << '\n';
  }
  eval::write_report(rep, a.out);

  json summary{{"command", "evaluate"}, {"output", a.out}, {"seed", rc.seed}, {"config_hash", rc.hash()},
               {"gan", !gan_path.empty()}};
  for (const auto& r : rep.runs)
    summary["runs"].push_back({{"label", r.label},
                               {"mean_expression_error", r.mean_expression_error()},
                               {"prediction_error_above_2", r.above_count(2.0)}});
  out << summary.dump() << '\n';
}

void report_error(std::ostream& err, const std::string& category, const std::string& message) {
  err << json{{"error", {{"category", category}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learning random ODE systems from trajectory data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("rodenet config schema ") + std::to_string(kSchemaVersion));

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a dataset of random Lorenz-type trajectories");
  add_common(sim_cmd, sim_args.common);
  sim_cmd->add_option("--out", sim_args.out, "Dataset JSON to write")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Run training stages into a run directory");
  add_common(train_cmd, train_args.common);
  train_cmd->add_option("--dataset", train_args.dataset, "Dataset JSON")->required();
  train_cmd->add_option("--out", train_args.out, "Run directory")->required();
  train_cmd->add_option("--mode", train_args.mode, "Stages to run")
      ->check(CLI::IsMember({"warmup1", "warmup2", "full", "no-gan"}))
      ->capture_default_str();
  train_cmd->add_flag("--resume", train_args.resume, "Continue the run in --out from its latest checkpoint");
  train_cmd->add_option("--extra-outer", train_args.extra_outer,
                        "no-gan only: further steps_per_outer-step blocks after warm-up-1");

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Draw ODE systems from a trained GAN");
  add_common(sample_cmd, sample_args.common);
  sample_cmd->add_option("--gan", sample_args.gan, "gan.json or a run directory holding one")->required();
  sample_cmd->add_option("--n", sample_args.n, "Number of systems")->capture_default_str();
  sample_cmd->add_option("--out", sample_args.out, "Output JSON")->required();

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Write report tables for one or more runs");
  add_common(eval_cmd, eval_args.common);
  eval_cmd->add_option("--run", eval_args.runs, "Run directory (repeatable)")->required();
  eval_cmd->add_option("--dataset", eval_args.dataset, "Dataset JSON (default: the first run's copy)");
  eval_cmd->add_option("--gan", eval_args.gan, "GAN checkpoint (default: the first run that has one)");
  eval_cmd->add_option("--out", eval_args.out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (sim_cmd->parsed()) cmd_simulate(sim_args, out);
    if (train_cmd->parsed()) cmd_train(train_args, out);
    if (sample_cmd->parsed()) cmd_sample(sample_args, out);
    if (eval_cmd->parsed()) cmd_evaluate(eval_args, out, err);
  } catch (const ConfigError& e) {
    report_error(err, e.category(), e.what());
    return 2;
  } catch (const Error& e) {
    report_error(err, e.category(), e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    report_error(err, "io", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return 1;
  }
  return 0;
}

}  // namespace rodenet::cli
