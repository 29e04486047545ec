#include "rodenet/evaluator/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "rodenet/error.hpp"
#include "rodenet/parallel.hpp"

namespace rodenet::eval {

namespace fs = std::filesystem;
using symnet::Exponents;
using symnet::Polynomial;

double prediction_error(std::span<const double> xhat, std::span<const double> x) {
  if (xhat.size() != x.size()) throw ContractViolation("prediction_error: state lengths differ");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    num += (xhat[k] - x[k]) * (xhat[k] - x[k]);
    den += x[k] * x[k];
  }
  if (den == 0.0) throw EvaluationError("prediction error is undefined for a zero reference state");
  return std::sqrt(num) / std::sqrt(den);
}

double median(std::vector<double> v) {
  if (v.empty()) throw EvaluationError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw EvaluationError("percentile of an empty list");
  if (!(p >= 0.0 && p <= 100.0)) throw ContractViolation("percentile must lie in [0, 100]");
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[rank == 0 ? 0 : rank - 1];
}

Reference rk4_reference(const sim::Eta& eta, double dt) {
  return [eta, dt](std::span<const double> x0, std::size_t steps) {
    const sim::Rhs rhs = [&eta](std::span<const double> x) { return sim::lorenz_rhs(eta, x); };
    return sim::rk4_integrate(rhs, x0, dt, steps);
  };
}

InstanceError instance_error_median(const odenet::OdeNet& net, const Reference& reference, int n_inits,
                                    std::size_t steps, Rng& rng, double lo, double hi) {
  if (n_inits < 1) throw ContractViolation("n_inits must be >= 1");
  const auto d = static_cast<std::size_t>(net.shape.dim);
  std::uniform_real_distribution<double> box(lo, hi);
  InstanceError out;
  for (int k = 0; k < n_inits; ++k) {
    State x0(d);
    for (double& v : x0) v = box(rng);
    Trajectory truth;
    try {
      truth = reference(x0, steps);
    } catch (const BlowUpError&) {
      ++out.reference_blowups;
      continue;
    }
    double e = std::numeric_limits<double>::infinity();
    try {
      const Trajectory pred = odenet::rollout(net, x0, steps);
      e = prediction_error(pred.back(), truth.back());
    } catch (const BlowUpError&) {
    }
    if (!std::isfinite(e)) {
      e = std::numeric_limits<double>::infinity();
      ++out.blowups;
    }
    out.errors.push_back(e);
  }
  if (out.errors.empty())
    throw EvaluationError("the reference blew up from all " + std::to_string(out.reference_blowups) +
                          " initial points");
  out.median = median(out.errors);
  return out;
}

std::vector<Polynomial> true_system(const sim::Eta& eta) {
  const auto x1 = Polynomial::variable(3, 0), x2 = Polynomial::variable(3, 1), x3 = Polynomial::variable(3, 2);
  return {(x2 - x1).scaled(eta[0]), x1.scaled(eta[1]) - x1 * x3 - x2, x1 * x2 - x3.scaled(eta[2])};
}

CoefTable coefficient_stats(std::span<const std::vector<Polynomial>> systems, std::span<const Exponents> basis) {
  if (systems.empty()) throw EvaluationError("coefficient statistics need at least one system");
  const std::size_t comps = systems[0].size();
  const double n = static_cast<double>(systems.size());
  CoefTable table(comps, std::vector<CoefStat>(basis.size()));
  for (std::size_t l = 0; l < comps; ++l)
    for (std::size_t b = 0; b < basis.size(); ++b) {
      double mean = 0.0;
      for (const auto& s : systems) mean += s.at(l).coefficient(basis[b]);
      mean /= n;
      double var = 0.0;
      for (const auto& s : systems) {
        const double r = s[l].coefficient(basis[b]) - mean;
        var += r * r;
      }
      table[l][b] = {mean, std::sqrt(var / n), systems.size()};
    }
  return table;
}

std::array<Pick, 3> lorenz_picks() {
  return {Pick{0, {0, 1, 0}, 1.0, "a"}, Pick{1, {1, 0, 0}, 1.0, "b"}, Pick{2, {0, 0, 1}, -1.0, "c"}};
}

std::array<double, 3> coefficient_covariance(std::span<const std::vector<Polynomial>> systems,
                                             const std::array<Pick, 3>& picks) {
  if (systems.empty()) throw EvaluationError("covariance needs at least one system");
  const double n = static_cast<double>(systems.size());
  std::array<std::vector<double>, 3> v;
  std::array<double, 3> mean{};
  for (int p = 0; p < 3; ++p) {
    for (const auto& s : systems)
      v[p].push_back(picks[p].sign * s.at(static_cast<std::size_t>(picks[p].component)).coefficient(picks[p].monomial));
    for (double x : v[p]) mean[p] += x / n;
  }
  auto cov = [&](int i, int j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < systems.size(); ++k) acc += (v[i][k] - mean[i]) * (v[j][k] - mean[j]);
    return acc / n;
  };
  return {cov(0, 1), cov(0, 2), cov(1, 2)};
}

Bands trajectory_bands(std::span<const Trajectory> trajs, std::span<const double> percentiles) {
  if (trajs.size() < 2) throw EvaluationError("bands need at least two trajectories");
  const std::size_t len = trajs[0].size();
  for (const auto& t : trajs)
    if (t.size() != len) throw EvaluationError("trajectories in a band have different lengths");
  Bands b;
  b.percentiles.assign(percentiles.begin(), percentiles.end());
  const double n = static_cast<double>(trajs.size());
  for (std::size_t t = 0; t < len; ++t) {
    State mean(trajs[0][t].size(), 0.0);
    for (const auto& tr : trajs)
      for (std::size_t l = 0; l < mean.size(); ++l) mean[l] += tr[t][l] / n;
    std::vector<double> dist;
    dist.reserve(trajs.size());
    for (const auto& tr : trajs) {
      double s = 0.0;
      for (std::size_t l = 0; l < mean.size(); ++l) s += (tr[t][l] - mean[l]) * (tr[t][l] - mean[l]);
      dist.push_back(std::sqrt(s));
    }
    b.mean.push_back(std::move(mean));
    b.distance.push_back(std::move(dist));
  }
  for (double p : b.percentiles) {
    std::vector<double> env;
    for (const auto& d : b.distance) env.push_back(percentile(d, p));
    b.envelope.push_back(std::move(env));
  }
  return b;
}

double expression_error(std::span<const Polynomial> learned, const sim::Eta& eta) {
  const auto truth = true_system(eta);
  if (learned.size() != truth.size()) throw ContractViolation("expression_error expects three components");
  double acc = 0.0;
  for (std::size_t l = 0; l < truth.size(); ++l) {
    const Polynomial diff = learned[l] - truth[l];
    for (const auto& [e, c] : diff.terms()) acc += std::abs(c);
  }
  return acc;
}

std::size_t Histogram::total() const {
  std::size_t n = below + above;
  for (auto c : counts) n += c;
  return n;
}

Histogram error_histogram(std::span<const double> errors, double lo, double hi, int bins) {
  if (!(lo < hi)) throw ContractViolation("histogram range must satisfy lo < hi");
  if (bins < 1) throw ContractViolation("histogram needs at least one bin");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (double e : errors) {
    if (std::isnan(e) || e > hi) {
      ++h.above;
    } else if (e < lo) {
      ++h.below;
    } else {
      auto k = static_cast<std::size_t>((e - lo) / width);
      h.counts[std::min(k, h.counts.size() - 1)] += 1;
    }
  }
  return h;
}

std::size_t RunEvaluation::above_count(double threshold) const {
  std::size_t n = 0;
  for (double e : prediction_error)
    if (std::isnan(e) || e > threshold) ++n;
  return n;
}

double RunEvaluation::mean_expression_error() const {
  if (expression_error.empty()) return 0.0;
  double acc = 0.0;
  for (double e : expression_error) acc += e;
  return acc / static_cast<double>(expression_error.size());
}

RunEvaluation evaluate_run(const std::string& label, std::span<const std::vector<double>> xis, const sim::Dataset& data,
                           const symnet::SymNetShape& shape, const EvalOptions& opt, Execution exec) {
  if (xis.size() != data.instances.size())
    throw EvaluationError("run '" + label + "' has " + std::to_string(xis.size()) + " ODE-Nets for " +
                          std::to_string(data.instances.size()) + " instances");
  const std::size_t m = xis.size();
  RunEvaluation r;
  r.label = label;
  r.prediction_error.assign(m, 0.0);
  r.blowups.assign(m, 0);
  r.expression_error.assign(m, 0.0);
  for_each_index(exec, m, [&](std::size_t i) {
    const odenet::OdeNet net(shape, xis[i], data.config.dt);
    const auto& eta = data.instances[i].eta;
    // Initial points depend only on the seed and the instance index.
    Rng rng = make_rng(opt.seed, "eval-inits", i);
    try {
      auto ie = instance_error_median(net, rk4_reference(eta, data.config.dt), opt.n_inits, opt.steps, rng,
                                      data.config.init_low, data.config.init_high);
      r.prediction_error[i] = ie.median;
      r.blowups[i] = ie.blowups;
    } catch (const EvaluationError&) {
      r.prediction_error[i] = std::numeric_limits<double>::infinity();
    }
    r.expression_error[i] = expression_error(symnet::extract_system(xis[i], shape, opt.prune_tol), eta);
  });
  r.histogram = error_histogram(r.prediction_error, opt.hist_lo, opt.hist_hi, opt.hist_bins);
  return r;
}

void add_gan_statistics(EvalReport& report, const gan::GanModel& model, const sim::Dataset& data,
                        const symnet::SymNetShape& shape, const EvalOptions& opt) {
  Rng rng = make_rng(opt.seed, "eval-samples");
  const auto samples = gan::sample_odes(model, opt.samples, shape.dim, shape.hidden, rng);
  std::vector<std::vector<Polynomial>> systems;
  for (const auto& s : samples) systems.push_back(s.system);
  if (report.basis.empty()) report.basis = symnet::monomial_basis(shape.dim, shape.max_degree());
  if (!systems.empty()) {
    report.coefficients = coefficient_stats(systems, report.basis);
    report.covariance = coefficient_covariance(systems, lorenz_picks());
  }
  const auto& c = data.config.spec.cov;
  report.true_covariance = std::array<double, 3>{c[0][1], c[0][2], c[1][2]};

  Rng brng = make_rng(opt.seed, "eval-bands");
  std::uniform_real_distribution<double> box(data.config.init_low, data.config.init_high);
  State x0(static_cast<std::size_t>(shape.dim));
  for (double& v : x0) v = box(brng);
  const auto band_samples = gan::sample_odes(model, opt.band_trajectories, shape.dim, shape.hidden, brng);
  std::vector<Trajectory> trajs;
  std::size_t blown = 0;
  for (const auto& s : band_samples) {
    try {
      trajs.push_back(odenet::rollout(odenet::OdeNet(shape, s.xi, data.config.dt), x0, opt.steps));
    } catch (const BlowUpError&) {
      ++blown;
    }
  }
  report.metadata["band_x0"] = x0;
  report.metadata["band_blowups"] = blown;
  if (trajs.size() >= 2) report.bands = trajectory_bands(trajs);
}

std::string monomial_name(const Exponents& e) {
  std::string s;
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (e[k] == 0) continue;
    if (!s.empty()) s += "*";
    s += "x" + std::to_string(k + 1);
    if (e[k] > 1) s += "^" + std::to_string(e[k]);
  }
  return s.empty() ? "1" : s;
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class Csv {
 public:
  Csv(const fs::path& path, const nlohmann::json& meta, const std::string& header) : out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
    out_ << "# config_hash=" << meta.value("config_hash", std::string("none"))
         << " seed=" << meta.value("seed", nlohmann::json(0)).dump() << '\n'
         << header << '\n';
  }
  std::ostream& row() { return out_; }

 private:
  std::ofstream out_;
};

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["metadata"] = r.metadata;
  j["metadata"]["conventions"] = {{"std", "population"}, {"covariance", "population"}, {"percentile", "nearest-rank"}};
  nlohmann::json basis = nlohmann::json::array();
  for (const auto& e : r.basis) basis.push_back(monomial_name(e));
  j["basis"] = basis;
  if (r.coefficients) {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& comp : *r.coefficients) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& c : comp) row.push_back({{"mean", c.mean}, {"std", c.std}, {"count", c.count}});
      t.push_back(row);
    }
    j["coefficients"] = t;
  }
  if (r.covariance) j["covariance"] = {{"ab", (*r.covariance)[0]}, {"ac", (*r.covariance)[1]}, {"bc", (*r.covariance)[2]}};
  if (r.true_covariance)
    j["true_covariance"] = {{"ab", (*r.true_covariance)[0]}, {"ac", (*r.true_covariance)[1]}, {"bc", (*r.true_covariance)[2]}};
  if (r.bands) j["bands"] = {{"percentiles", r.bands->percentiles}, {"mean", r.bands->mean}, {"envelope", r.bands->envelope}};
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json pe = nlohmann::json::array();
    for (double e : run.prediction_error) pe.push_back(finite_or_null(e));
    runs.push_back({{"label", run.label},
                    {"prediction_error", pe},
                    {"blowups", run.blowups},
                    {"expression_error", run.expression_error},
                    {"mean_expression_error", run.mean_expression_error()},
                    {"count_above_hi", run.histogram.above},
                    {"count_below_lo", run.histogram.below},
                    {"histogram", {{"lo", run.histogram.lo}, {"hi", run.histogram.hi}, {"counts", run.histogram.counts}}}});
  }
  j["runs"] = runs;
  return j;
}

void write_report(const EvalReport& r, const std::string& dir) {
  const fs::path out(dir);
  fs::create_directories(out);
  {
    std::ofstream f(out / "report.json");
    if (!f) throw IoError("cannot write " + (out / "report.json").string());
    f << to_json(r).dump(2) << '\n';
  }
  const auto& meta = r.metadata;
  if (r.coefficients) {
    Csv csv(out / "table1.csv", meta, "component,monomial,mean,std,count");
    for (std::size_t l = 0; l < r.coefficients->size(); ++l)
      for (std::size_t b = 0; b < r.basis.size(); ++b) {
        const auto& c = (*r.coefficients)[l][b];
        csv.row() << "dx" << l + 1 << "/dt," << monomial_name(r.basis[b]) << ',' << num(c.mean) << ',' << num(c.std)
                  << ',' << c.count << '\n';
      }
  }
  if (r.covariance) {
    Csv csv(out / "table2.csv", meta, "pair,estimate,truth");
    const char* names[] = {"cov(a,b)", "cov(a,c)", "cov(b,c)"};
    for (int k = 0; k < 3; ++k)
      csv.row() << names[k] << ',' << num((*r.covariance)[k]) << ','
                << (r.true_covariance ? num((*r.true_covariance)[k]) : std::string()) << '\n';
  }
  if (r.bands) {
    std::string header = "step";
    for (std::size_t l = 0; l < r.bands->mean[0].size(); ++l) header += ",mean_x" + std::to_string(l + 1);
    for (double p : r.bands->percentiles) header += ",band_" + num(p);
    Csv csv(out / "fig3_bands.csv", meta, header);
    for (std::size_t t = 0; t < r.bands->mean.size(); ++t) {
      csv.row() << t;
      for (double v : r.bands->mean[t]) csv.row() << ',' << num(v);
      for (const auto& env : r.bands->envelope) csv.row() << ',' << num(env[t]);
      csv.row() << '\n';
    }
  }
  if (!r.runs.empty()) {
    Csv hist(out / "fig4_hist.csv", meta, "run,bin_lo,bin_hi,count");
    for (const auto& run : r.runs) {
      const auto& h = run.histogram;
      const double w = (h.hi - h.lo) / static_cast<double>(h.counts.size());
      hist.row() << run.label << ",-inf," << num(h.lo) << ',' << h.below << '\n';
      for (std::size_t k = 0; k < h.counts.size(); ++k)
        hist.row() << run.label << ',' << num(h.lo + w * static_cast<double>(k)) << ','
                   << num(k + 1 == h.counts.size() ? h.hi : h.lo + w * static_cast<double>(k + 1)) << ','
                   << h.counts[k] << '\n';
      hist.row() << run.label << ',' << num(h.hi) << ",inf," << h.above << '\n';
    }
    std::string header = "instance";
    for (const auto& run : r.runs) header += ",e_eta_" + run.label + ",prediction_error_" + run.label;
    Csv expr(out / "fig5_expr_err.csv", meta, header);
    const std::size_t m = r.runs[0].expression_error.size();
    for (std::size_t i = 0; i < m; ++i) {
      expr.row() << i;
      for (const auto& run : r.runs)
        expr.row() << ',' << num(run.expression_error.at(i)) << ',' << num(run.prediction_error.at(i));
      expr.row() << '\n';
    }
  }
}

}  // namespace rodenet::eval
