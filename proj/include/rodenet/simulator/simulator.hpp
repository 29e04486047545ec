#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rodenet/rng.hpp"
#include "rodenet/types.hpp"

namespace rodenet::sim {

using Eta = std::array<double, 3>;  // (a, b, c)
using Covariance = std::array<std::array<double, 3>, 3>;

enum class RodeKind { Independent, Dependent, Custom };

std::string to_string(RodeKind k);
RodeKind rode_kind_from_string(const std::string& s);

/// Gaussian law of (a, b, c).
struct RodeSpec {
  RodeKind kind = RodeKind::Independent;
  Eta mean{2.0, -1.0, 1.0};
  Covariance cov{};

  /// a ~ N(2,1), b ~ N(-1,4), c ~ N(1,1), independent.
  static RodeSpec independent();
  /// Rank-one joint law with covariance [[1,-2,1],[-2,4,-2],[1,-2,1]].
  static RodeSpec dependent();
  static RodeSpec custom(Eta mean, Covariance cov);
};

nlohmann::json to_json(const RodeSpec& s);
RodeSpec rode_spec_from_json(const nlohmann::json& j);

std::vector<Eta> sample_parameters(const RodeSpec& spec, std::size_t count, Rng& rng);

/// (a (x2 - x1), x1 (b - x3) - x2, x1 x2 - c x3).
State lorenz_rhs(const Eta& eta, std::span<const double> x);

using Rhs = std::function<State(std::span<const double>)>;

/// Classical fourth-order Runge-Kutta step. Throws BlowUpError on
/// non-finite stages.
State rk4_step(const Rhs& rhs, std::span<const double> x, double dt);

/// steps RK4 steps; also aborts once |x| exceeds the blow-up bound.
Trajectory rk4_integrate(const Rhs& rhs, std::span<const double> x0, double dt, std::size_t steps);

/// x~(t) = x(t) + n_r * std_l * w, std_l the standard deviation of component
/// l over the trajectory's time samples.
Trajectory inject_noise(const Trajectory& clean, double noise_ratio, Rng& rng);

struct TrajectoryRecord {
  State x0;
  Trajectory clean;
  Trajectory noisy;
};

struct Instance {
  Eta eta{};
  std::vector<TrajectoryRecord> trajectories;
};

struct SimulationConfig {
  RodeSpec spec = RodeSpec::independent();
  std::size_t instances = 500;       // M
  std::size_t initial_values = 5;    // N_i
  std::size_t steps = 50;            // S
  double dt = 0.05;
  double init_low = -10.0;
  double init_high = 10.0;
  double noise_ratio = 0.0;          // n_r
  std::uint64_t seed = 0;
  int retry_budget = 20;
};

nlohmann::json to_json(const SimulationConfig& c);

struct Dataset {
  SimulationConfig config;
  std::vector<Instance> instances;
  std::size_t blowup_retries = 0;

  /// Noisy trajectories of instance i (what training sees).
  std::vector<Trajectory> observed(std::size_t i) const;
  std::size_t state_sample_count() const;
};

Dataset generate_dataset(const SimulationConfig& cfg);

nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace rodenet::sim
