#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rodenet/gan/gan.hpp"
#include "rodenet/odenet/trainer.hpp"
#include "rodenet/parallel.hpp"
#include "rodenet/simulator/simulator.hpp"

namespace rodenet::pipeline {

struct PipelineConfig {
  odenet::TrainConfig odenet;
  gan::GanTrainConfig gan;
  gan::GanArchitecture arch;
  int alpha = 2;                  // SymNet hidden products per component
  double lambda_g = 0.1;
  int n_d = 1;                    // critic steps after each ODE-Net sweep
  int n_gan = 100;                // full GAN iterations after the critic steps
  int steps_per_outer = 50;       // ODE-Net Adam steps per instance at the longest unroll
  int max_outer = 50;
  double convergence_tol = 1e-4;  // on max_i |delta xi_i|_inf per outer iteration
  double gan_alternating_lr = 1e-4;
  bool shared_init = true;        // every instance starts from the same xi
  int keep_checkpoints = 3;       // newest outer-iteration checkpoints kept on disk, 0 keeps all
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Components of the alternating-stage objective for one instance.
struct LossTerms {
  double data = 0.0;   // mean over trajectories of the weighted data loss
  double huber = 0.0;  // unweighted
  double gan = 0.0;    // D(xi), unweighted
  double total = 0.0;
};

/// data + lambda_h * huber + lambda_g * D(xi), every trajectory unrolled
/// `unroll` steps from its first sample. The critic enters with its
/// parameters held fixed.
LossTerms rodenet_loss(std::span<const double> xi, std::span<const Trajectory> data, const gan::GanModel& gan,
                       double lambda_h, double huber_knee, double lambda_g, int unroll,
                       symnet::SymNetShape shape = {3, 2}, double dt = 0.05);

/// Weighted critic score to add to an ODE-Net objective. Returns an empty
/// regularizer when lambda_g is 0 so the update reduces exactly to warm-up-1.
odenet::Regularizer gan_regularizer(const gan::GanModel& gan, double lambda_g);

enum class Stage { Warmup1, Warmup2, Alternating, Done };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct OuterRecord {
  int iteration = 0;
  double max_delta = 0.0;
  double mean_odenet_loss = 0.0;
  double critic_loss = 0.0;
  double wasserstein = 0.0;
};

/// Full training state. Loss histories are not kept here; they are streamed to
/// the run log, so a resumed run and an uninterrupted one hold equal states.
struct PipelineState {
  PipelineConfig config;
  Stage stage = Stage::Warmup1;
  std::vector<odenet::OdeNetTrainer> odenets;
  std::optional<gan::GanTrainer> gan;
  int outer_iteration = 0;
  bool converged = false;
  std::vector<OuterRecord> records;

  std::vector<std::vector<double>> xis() const;
  /// Sampling model: critic as trained, generator weights averaged.
  gan::GanModel sampling_model() const;
};

nlohmann::json to_json(const PipelineState& s);
PipelineState pipeline_state_from_json(const nlohmann::json& j);

/// Called with a JSON object after every recorded step; used to write log.jsonl.
using LogSink = std::function<void(const nlohmann::json&)>;

/// Stage drivers. Each advances `state` and checks that stages run in order.
void run_warmup1(PipelineState& state, const sim::Dataset& data, Execution exec = Execution::Parallel,
                 const LogSink& log = {});
void run_warmup2(PipelineState& state, Execution exec = Execution::Parallel, const LogSink& log = {});
/// One outer iteration of the alternating stage; returns its record.
OuterRecord run_outer_iteration(PipelineState& state, const sim::Dataset& data,
                                Execution exec = Execution::Parallel, const LogSink& log = {});

PipelineState initial_state(const PipelineConfig& cfg);

struct RunOptions {
  std::string run_dir;               // empty: nothing is written
  Stage stop_after = Stage::Done;    // Warmup1 or Warmup2 end the run after that stage
  nlohmann::json provenance;         // copied into every file under "provenance" when not null
};

/// Runs the remaining stages up to `stop_after`, or until convergence or
/// max_outer. With a run directory, a checkpoint is stored after every stage
/// and outer iteration and an existing run there is resumed.
PipelineState run_training(const sim::Dataset& data, const PipelineConfig& cfg, const RunOptions& opt,
                           Execution exec = Execution::Parallel);

PipelineState run_full_training(const sim::Dataset& data, const PipelineConfig& cfg, const std::string& run_dir = "",
                                Execution exec = Execution::Parallel);

/// Warm-up-1 followed by `extra_outer * steps_per_outer` further plain steps
/// at the longest unroll, matching the ODE-Net budget of a GAN-regularized
/// run with `extra_outer` outer iterations.
std::vector<std::vector<double>> train_without_gan(const sim::Dataset& data, const PipelineConfig& cfg,
                                                   int extra_outer, Execution exec = Execution::Parallel);
/// Same, continuing from an already finished warm-up-1 state.
std::vector<std::vector<double>> continue_without_gan(PipelineState warm, const sim::Dataset& data, int extra_outer,
                                                      Execution exec = Execution::Parallel);

/// Run directory helpers.
std::string checkpoint_path(const std::string& run_dir, int outer_iteration);
/// Latest checkpoint in the directory, if any.
std::optional<PipelineState> load_latest_checkpoint(const std::string& run_dir);

}  // namespace rodenet::pipeline
