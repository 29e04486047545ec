#include "rodenet/simulator/simulator.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Eigenvalues>

#include "rodenet/error.hpp"
#include "rodenet/parallel.hpp"

namespace rodenet::sim {

namespace {

constexpr double kBlowUpBound = 1e6;

nlohmann::json cov_to_json(const Covariance& c) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : c) j.push_back(row);
  return j;
}

}  // namespace

std::string to_string(RodeKind k) {
  switch (k) {
    case RodeKind::Independent:
      return "independent";
    case RodeKind::Dependent:
      return "dependent";
    case RodeKind::Custom:
      return "custom";
  }
  return "custom";
}

RodeKind rode_kind_from_string(const std::string& s) {
  if (s == "independent" || s == "RODE_ind") return RodeKind::Independent;
  if (s == "dependent" || s == "RODE_dep") return RodeKind::Dependent;
  if (s == "custom") return RodeKind::Custom;
  throw SpecError("unknown RODE kind '" + s + "'");
}

RodeSpec RodeSpec::independent() {
  RodeSpec s;
  s.kind = RodeKind::Independent;
  s.cov = {{{1.0, 0.0, 0.0}, {0.0, 4.0, 0.0}, {0.0, 0.0, 1.0}}};
  return s;
}

RodeSpec RodeSpec::dependent() {
  RodeSpec s;
  s.kind = RodeKind::Dependent;
  s.cov = {{{1.0, -2.0, 1.0}, {-2.0, 4.0, -2.0}, {1.0, -2.0, 1.0}}};
  return s;
}

RodeSpec RodeSpec::custom(Eta mean, Covariance cov) {
  RodeSpec s;
  s.kind = RodeKind::Custom;
  s.mean = mean;
  s.cov = cov;
  return s;
}

nlohmann::json to_json(const RodeSpec& s) {
  return {{"kind", to_string(s.kind)}, {"mean", s.mean}, {"cov", cov_to_json(s.cov)}};
}

RodeSpec rode_spec_from_json(const nlohmann::json& j) {
  RodeSpec s;
  s.kind = rode_kind_from_string(j.at("kind").get<std::string>());
  if (s.kind == RodeKind::Independent) s = RodeSpec::independent();
  if (s.kind == RodeKind::Dependent) s = RodeSpec::dependent();
  if (j.contains("mean")) s.mean = j.at("mean").get<Eta>();
  if (j.contains("cov")) {
    const auto& c = j.at("cov");
    for (std::size_t r = 0; r < 3; ++r) s.cov[r] = c.at(r).get<std::array<double, 3>>();
  }
  return s;
}

std::vector<Eta> sample_parameters(const RodeSpec& spec, std::size_t count, Rng& rng) {
  if (count < 1) throw ContractViolation("need at least one parameter draw");
  const auto& C = spec.cov;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (C[r][c] != C[c][r]) throw SpecError("covariance is not symmetric");

  // draw = mean + L z with L L^T = cov.
  std::array<std::array<double, 3>, 3> L{};
  std::size_t rank = 3;
  switch (spec.kind) {
    case RodeKind::Independent:
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
          if (r != c && C[r][c] != 0.0) throw SpecError("independent RODE spec with off-diagonal covariance");
        if (C[r][r] < 0.0) throw SpecError("negative variance");
        L[r][r] = std::sqrt(C[r][r]);
      }
      break;
    case RodeKind::Dependent: {
      // cov = s s^T with s = sqrt(C00) * (1, C10/C00, C20/C00); exact for the
      // rank-one family and checked below.
      if (C[0][0] <= 0.0) throw SpecError("dependent RODE spec needs a positive variance for a");
      const double s0 = std::sqrt(C[0][0]);
      const std::array<double, 3> factor{s0, C[1][0] / s0, C[2][0] / s0};
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          if (std::abs(factor[r] * factor[c] - C[r][c]) > 1e-12 * (1.0 + std::abs(C[r][c])))
            throw SpecError("dependent RODE spec covariance is not rank one");
      for (int r = 0; r < 3; ++r) L[r][0] = factor[r];
      rank = 1;
      break;
    }
    case RodeKind::Custom: {
      Eigen::Matrix3d m;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = C[r][c];
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m);
      const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
      for (int k = 0; k < 3; ++k)
        if (eig.eigenvalues()(k) < -1e-10 * scale) throw SpecError("covariance is not positive semi-definite");
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k)
          L[r][k] = eig.eigenvectors()(r, k) * std::sqrt(std::max(0.0, eig.eigenvalues()(k)));
      break;
    }
  }

  std::vector<Eta> out;
  out.reserve(count);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    std::array<double, 3> z{};
    for (std::size_t k = 0; k < rank; ++k) z[k] = normal(rng);
    Eta eta = spec.mean;
    for (int r = 0; r < 3; ++r)
      for (std::size_t k = 0; k < rank; ++k) eta[r] += L[r][k] * z[k];
    out.push_back(eta);
  }
  return out;
}

State lorenz_rhs(const Eta& eta, std::span<const double> x) {
  if (x.size() != 3) throw ContractViolation("lorenz_rhs needs a 3-dimensional state");
  const auto [a, b, c] = eta;
  return {a * (x[1] - x[0]), x[0] * (b - x[2]) - x[1], x[0] * x[1] - c * x[2]};
}

State rk4_step(const Rhs& rhs, std::span<const double> x, double dt) {
  if (!(dt > 0.0)) throw ContractViolation("rk4 step size must be positive");
  const std::size_t n = x.size();
  auto check = [](const State& s) {
    for (double v : s)
      if (!std::isfinite(v)) throw BlowUpError(0, "non-finite Runge-Kutta stage");
  };
  State tmp(n);
  const State k1 = rhs(x);
  check(k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  const State k2 = rhs(tmp);
  check(k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  const State k3 = rhs(tmp);
  check(k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
  const State k4 = rhs(tmp);
  check(k4);
  State out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  check(out);
  return out;
}

Trajectory rk4_integrate(const Rhs& rhs, std::span<const double> x0, double dt, std::size_t steps) {
  Trajectory traj;
  traj.reserve(steps + 1);
  traj.emplace_back(x0.begin(), x0.end());
  for (std::size_t k = 0; k < steps; ++k) {
    State next;
    try {
      next = rk4_step(rhs, traj.back(), dt);
    } catch (const BlowUpError&) {
      throw BlowUpError(k + 1, "RK4 integration blew up at step " + std::to_string(k + 1));
    }
    for (double v : next)
      if (std::abs(v) > kBlowUpBound)
        throw BlowUpError(k + 1, "RK4 integration exceeded the state bound at step " + std::to_string(k + 1));
    traj.push_back(std::move(next));
  }
  return traj;
}

Trajectory inject_noise(const Trajectory& clean, double noise_ratio, Rng& rng) {
  if (noise_ratio < 0.0) throw ContractViolation("noise ratio must be >= 0");
  if (noise_ratio == 0.0 || clean.empty()) return clean;
  const std::size_t d = clean[0].size();
  const double n = static_cast<double>(clean.size());
  std::vector<double> sd(d, 0.0);
  for (std::size_t l = 0; l < d; ++l) {
    double mean = 0.0;
    for (const auto& s : clean) mean += s[l];
    mean /= n;
    double var = 0.0;
    for (const auto& s : clean) var += (s[l] - mean) * (s[l] - mean);
    sd[l] = std::sqrt(var / n);
  }
  Trajectory noisy = clean;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& s : noisy)
    for (std::size_t l = 0; l < d; ++l) {
      const double w = normal(rng);
      if (sd[l] > 0.0) s[l] += noise_ratio * sd[l] * w;
    }
  return noisy;
}

nlohmann::json to_json(const SimulationConfig& c) {
  return {{"spec", to_json(c.spec)},        {"M", c.instances},
          {"N_i", c.initial_values},        {"S", c.steps},
          {"dt", c.dt},                     {"init_box", {c.init_low, c.init_high}},
          {"n_r", c.noise_ratio},           {"seed", c.seed},
          {"retry_budget", c.retry_budget}, {"generator", std::string(kGeneratorName)},
          {"noise_variance", "per-component variance over each trajectory's time samples"}};
}

std::vector<Trajectory> Dataset::observed(std::size_t i) const {
  std::vector<Trajectory> out;
  for (const auto& t : instances.at(i).trajectories) out.push_back(t.noisy);
  return out;
}

std::size_t Dataset::state_sample_count() const {
  std::size_t n = 0;
  for (const auto& inst : instances)
    for (const auto& t : inst.trajectories) n += t.noisy.size();
  return n;
}

Dataset generate_dataset(const SimulationConfig& cfg) {
  if (cfg.instances < 1 || cfg.initial_values < 1 || cfg.steps < 1)
    throw ContractViolation("dataset sizes must be >= 1");
  if (!(cfg.dt > 0.0)) throw ContractViolation("dt must be positive");
  if (!(cfg.init_low < cfg.init_high)) throw ContractViolation("empty initial-value box");

  Dataset ds;
  ds.config = cfg;
  Rng param_rng = make_rng(cfg.seed, "parameters");
  const auto etas = sample_parameters(cfg.spec, cfg.instances, param_rng);
  ds.instances.resize(cfg.instances);
  std::vector<std::size_t> retries(cfg.instances, 0);

  for_each_index(Execution::Parallel, cfg.instances, [&](std::size_t i) {
    Instance inst;
    inst.eta = etas[i];
    Rng init_rng = make_rng(cfg.seed, "initial-values", i);
    Rng noise_rng = make_rng(cfg.seed, "noise", i);
    std::uniform_real_distribution<double> box(cfg.init_low, cfg.init_high);
    const Rhs rhs = [eta = inst.eta](std::span<const double> x) { return lorenz_rhs(eta, x); };
    for (std::size_t j = 0; j < cfg.initial_values; ++j) {
      TrajectoryRecord rec;
      for (int attempt = 0;; ++attempt) {
        rec.x0 = {box(init_rng), box(init_rng), box(init_rng)};
        try {
          rec.clean = rk4_integrate(rhs, rec.x0, cfg.dt, cfg.steps);
          break;
        } catch (const BlowUpError& e) {
          if (attempt >= cfg.retry_budget)
            throw BlowUpError(e.step(), "instance " + std::to_string(i) + " (a,b,c)=(" +
                                            std::to_string(inst.eta[0]) + "," + std::to_string(inst.eta[1]) +
                                            "," + std::to_string(inst.eta[2]) + ") blew up for " +
                                            std::to_string(attempt + 1) + " initial points");
          ++retries[i];
        }
      }
      rec.noisy = inject_noise(rec.clean, cfg.noise_ratio, noise_rng);
      inst.trajectories.push_back(std::move(rec));
    }
    ds.instances[i] = std::move(inst);
  });
  for (auto r : retries) ds.blowup_retries += r;
  return ds;
}

nlohmann::json to_json(const Dataset& d) {
  nlohmann::json meta = to_json(d.config);
  meta["blowup_retries"] = d.blowup_retries;
  nlohmann::json instances = nlohmann::json::array();
  for (const auto& inst : d.instances) {
    nlohmann::json trajs = nlohmann::json::array();
    for (const auto& t : inst.trajectories)
      trajs.push_back({{"x0", t.x0}, {"clean", t.clean}, {"noisy", t.noisy}});
    instances.push_back({{"eta", inst.eta}, {"trajectories", trajs}});
  }
  return {{"meta", meta}, {"instances", instances}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset d;
  const auto& m = j.at("meta");
  auto& c = d.config;
  c.spec = rode_spec_from_json(m.at("spec"));
  c.instances = m.at("M").get<std::size_t>();
  c.initial_values = m.at("N_i").get<std::size_t>();
  c.steps = m.at("S").get<std::size_t>();
  c.dt = m.at("dt").get<double>();
  c.init_low = m.at("init_box").at(0).get<double>();
  c.init_high = m.at("init_box").at(1).get<double>();
  c.noise_ratio = m.at("n_r").get<double>();
  c.seed = m.at("seed").get<std::uint64_t>();
  c.retry_budget = m.value("retry_budget", 20);
  d.blowup_retries = m.value("blowup_retries", std::size_t{0});
  for (const auto& ij : j.at("instances")) {
    Instance inst;
    inst.eta = ij.at("eta").get<Eta>();
    for (const auto& tj : ij.at("trajectories")) {
      TrajectoryRecord t;
      t.x0 = tj.at("x0").get<State>();
      t.clean = tj.at("clean").get<Trajectory>();
      t.noisy = tj.at("noisy").get<Trajectory>();
      inst.trajectories.push_back(std::move(t));
    }
    d.instances.push_back(std::move(inst));
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_json(d).dump();
  if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  try {
    return dataset_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset '" + path + "': " + e.what());
  }
}

}  // namespace rodenet::sim
