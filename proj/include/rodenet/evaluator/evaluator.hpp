#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rodenet/gan/gan.hpp"
#include "rodenet/odenet/odenet.hpp"
#include "rodenet/rng.hpp"
#include "rodenet/simulator/simulator.hpp"
#include "rodenet/symnet/polynomial.hpp"

namespace rodenet::eval {

/// |xhat - x|_2 / |x|_2.
double prediction_error(std::span<const double> xhat, std::span<const double> x);

double median(std::vector<double> v);

/// Nearest-rank percentile (p in [0, 100]); p = 0 gives the minimum.
double percentile(std::vector<double> v, double p);

/// Reference solution from x0 over `steps` steps; the default integrates the
/// true system with RK4.
using Reference = std::function<Trajectory(std::span<const double> x0, std::size_t steps)>;
Reference rk4_reference(const sim::Eta& eta, double dt);

struct InstanceError {
  double median = 0.0;
  std::vector<double> errors;  // +inf where the learned rollout blew up
  std::size_t blowups = 0;
  std::size_t reference_blowups = 0;
};

/// Draws n_inits initial points from U([lo, hi]^d), rolls the learned net and
/// the reference `steps` steps forward and reports the median relative error
/// at the final step. A learned rollout that blows up counts as an infinite
/// error; draws where the reference itself blows up are skipped. Throws
/// EvaluationError when the reference blows up from every draw.
InstanceError instance_error_median(const odenet::OdeNet& net, const Reference& reference, int n_inits,
                                    std::size_t steps, Rng& rng, double lo = -10.0, double hi = 10.0);

/// Fixed Lorenz-type system with parameters (a, b, c) as polynomials.
std::vector<symnet::Polynomial> true_system(const sim::Eta& eta);

struct CoefStat {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
};
/// [component][monomial].
using CoefTable = std::vector<std::vector<CoefStat>>;

CoefTable coefficient_stats(std::span<const std::vector<symnet::Polynomial>> systems,
                            std::span<const symnet::Exponents> basis);

/// A coefficient read off a system, multiplied by `sign`.
struct Pick {
  int component = 0;
  symnet::Exponents monomial;
  double sign = 1.0;
  std::string name;
};

/// (a, b, c): x2 in dx1/dt, x1 in dx2/dt, minus x3 in dx3/dt.
std::array<Pick, 3> lorenz_picks();

/// Population covariances (cov(p0,p1), cov(p0,p2), cov(p1,p2)).
std::array<double, 3> coefficient_covariance(std::span<const std::vector<symnet::Polynomial>> systems,
                                             const std::array<Pick, 3>& picks);

struct Bands {
  std::vector<double> percentiles;
  std::vector<State> mean;                    // [t]
  std::vector<std::vector<double>> distance;  // [t][trajectory]
  std::vector<std::vector<double>> envelope;  // [percentile][t]
};

inline constexpr double kDefaultBandValues[] = {75.0, 99.0};
inline constexpr std::span<const double> kDefaultBands{kDefaultBandValues};

Bands trajectory_bands(std::span<const Trajectory> trajs, std::span<const double> percentiles = kDefaultBands);

/// l1 distance between the coefficient vectors of the learned system and the
/// true one with parameters eta (all monomials, every component).
double expression_error(std::span<const symnet::Polynomial> learned, const sim::Eta& eta);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t below = 0;
  std::size_t above = 0;  // includes +inf and NaN (blown-up rollouts)

  std::size_t total() const;
};

Histogram error_histogram(std::span<const double> errors, double lo, double hi, int bins);

struct EvalOptions {
  std::size_t samples = 100;      // ODEs drawn from the GAN
  int n_inits = 100;              // initial points per instance
  std::size_t steps = 50;         // prediction horizon in steps
  double hist_lo = 0.2;
  double hist_hi = 2.0;
  int hist_bins = 18;
  std::size_t band_trajectories = 100;
  double prune_tol = 0.0;
  std::uint64_t seed = 0;
};

struct RunEvaluation {
  std::string label;
  std::vector<double> prediction_error;  // per instance, +inf when every rollout blew up
  std::vector<std::size_t> blowups;
  std::vector<double> expression_error;  // per instance
  Histogram histogram;
  std::size_t above_count(double threshold) const;
  double mean_expression_error() const;
};

struct EvalReport {
  nlohmann::json metadata;
  std::vector<symnet::Exponents> basis;
  std::optional<CoefTable> coefficients;  // over GAN samples
  std::optional<std::array<double, 3>> covariance;
  std::optional<std::array<double, 3>> true_covariance;
  std::optional<Bands> bands;
  std::vector<RunEvaluation> runs;
};

/// Per-instance metrics for one set of learned parameter vectors.
RunEvaluation evaluate_run(const std::string& label, std::span<const std::vector<double>> xis,
                           const sim::Dataset& data, const symnet::SymNetShape& shape, const EvalOptions& opt,
                           Execution exec = Execution::Parallel);

/// GAN-sample statistics: coefficient table, covariance and trajectory bands.
void add_gan_statistics(EvalReport& report, const gan::GanModel& model, const sim::Dataset& data,
                        const symnet::SymNetShape& shape, const EvalOptions& opt);

nlohmann::json to_json(const EvalReport& r);
/// report.json plus table1.csv, table2.csv, fig3_bands.csv, fig4_hist.csv and
/// fig5_expr_err.csv (tables without data are skipped).
void write_report(const EvalReport& r, const std::string& dir);

/// "x1^2*x3" style label, "1" for the constant monomial.
std::string monomial_name(const symnet::Exponents& e);

}  // namespace rodenet::eval
