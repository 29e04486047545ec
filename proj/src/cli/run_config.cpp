#include "rodenet/cli/run_config.hpp"

#include <cstdio>
#include <fstream>

#include "rodenet/error.hpp"
#include "rodenet/json_util.hpp"

namespace rodenet::cli {

namespace {

using nlohmann::json;

void strip_seeds(json& j) {
  if (!j.is_object()) return;
  j.erase("seed");
  for (auto& [k, v] : j.items()) strip_seeds(v);
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Overlays `user` onto `base` in place. A null default accepts any value.
void overlay(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, *it, path);
    } else if (slot.is_null() || same_kind(slot, *it)) {
      if (slot.is_number_integer() && it->is_number_float())
        throw ConfigError("'" + path + "' must be an integer");
      slot = *it;
    } else {
      throw ConfigError("'" + path + "' has the wrong type (expected " + std::string(slot.type_name()) + ")");
    }
  }
}

json simulation_defaults() {
  const sim::SimulationConfig c;
  return {{"rode", "independent"},
          {"mean", nullptr},
          {"cov", nullptr},
          {"M", c.instances},
          {"N_i", c.initial_values},
          {"S", c.steps},
          {"dt", c.dt},
          {"init_box", {c.init_low, c.init_high}},
          {"n_r", c.noise_ratio},
          {"retry_budget", c.retry_budget}};
}

json evaluation_defaults() {
  const eval::EvalOptions o;
  return {{"samples", o.samples},
          {"n_inits", o.n_inits},
          {"steps", o.steps},
          {"hist_lo", o.hist_lo},
          {"hist_hi", o.hist_hi},
          {"hist_bins", o.hist_bins},
          {"band_trajectories", o.band_trajectories},
          {"prune_tol", o.prune_tol}};
}

sim::SimulationConfig simulation_from(const json& j, std::uint64_t seed) {
  sim::SimulationConfig c;
  json spec{{"kind", j.at("rode")}};
  if (!j.at("mean").is_null()) spec["mean"] = j.at("mean");
  if (!j.at("cov").is_null()) spec["cov"] = j.at("cov");
  c.spec = sim::rode_spec_from_json(spec);
  if (c.spec.kind == sim::RodeKind::Custom && (j.at("mean").is_null() || j.at("cov").is_null()))
    throw ConfigError("a custom RODE needs both 'mean' and 'cov'");
  c.instances = j.at("M").get<std::size_t>();
  c.initial_values = j.at("N_i").get<std::size_t>();
  c.steps = j.at("S").get<std::size_t>();
  c.dt = j.at("dt").get<double>();
  const auto box = j.at("init_box").get<std::array<double, 2>>();
  c.init_low = box[0];
  c.init_high = box[1];
  c.noise_ratio = j.at("n_r").get<double>();
  c.retry_budget = j.at("retry_budget").get<int>();
  c.seed = seed;
  if (c.instances < 1 || c.initial_values < 1 || c.steps < 1) throw ConfigError("simulation sizes must be >= 1");
  if (!(c.dt > 0.0)) throw ConfigError("simulation.dt must be positive");
  if (!(c.init_low < c.init_high)) throw ConfigError("simulation.init_box is empty");
  if (!(c.noise_ratio >= 0.0)) throw ConfigError("simulation.n_r must be >= 0");
  return c;
}

eval::EvalOptions evaluation_from(const json& j, std::uint64_t seed) {
  eval::EvalOptions o;
  o.samples = j.at("samples").get<std::size_t>();
  o.n_inits = j.at("n_inits").get<int>();
  o.steps = j.at("steps").get<std::size_t>();
  o.hist_lo = j.at("hist_lo").get<double>();
  o.hist_hi = j.at("hist_hi").get<double>();
  o.hist_bins = j.at("hist_bins").get<int>();
  o.band_trajectories = j.at("band_trajectories").get<std::size_t>();
  o.prune_tol = j.at("prune_tol").get<double>();
  o.seed = seed;
  if (o.n_inits < 1 || o.steps < 1) throw ConfigError("evaluation.n_inits and evaluation.steps must be >= 1");
  if (o.hist_bins < 1 || !(o.hist_lo < o.hist_hi)) throw ConfigError("invalid evaluation histogram range");
  if (!(o.prune_tol >= 0.0)) throw ConfigError("evaluation.prune_tol must be >= 0");
  return o;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::hash() const { return fnv1a_hex(resolved.dump()); }

nlohmann::json RunConfig::provenance() const {
  return {{"config_hash", hash()}, {"seed", seed}, {"schema_version", kSchemaVersion}};
}

nlohmann::json default_config() {
  json training = pipeline::to_json(pipeline::PipelineConfig{});
  strip_seeds(training);
  return {{"version", kSchemaVersion},
          {"simulation", simulation_defaults()},
          {"training", std::move(training)},
          {"evaluation", evaluation_defaults()}};
}

RunConfig resolve_config(const nlohmann::json& user, std::uint64_t seed) {
  if (!user.is_object()) throw ConfigError("the config must be a JSON object");
  if (!user.contains("version")) throw ConfigError("the config has no 'version'");
  if (!user.at("version").is_number_integer() || user.at("version").get<int>() != kSchemaVersion)
    throw ConfigError("unsupported config version " + user.at("version").dump() + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  RunConfig rc;
  rc.seed = seed;
  rc.resolved = default_config();
  overlay(rc.resolved, user, "config");

  parse_config("simulation config", [&] { rc.simulation = simulation_from(rc.resolved.at("simulation"), seed); });
  parse_config("evaluation config", [&] { rc.evaluation = evaluation_from(rc.resolved.at("evaluation"), seed); });
  json training = rc.resolved.at("training");
  training["seed"] = seed;
  training["odenet"]["seed"] = seed;
  training["gan"]["seed"] = seed;
  rc.training = parse_config("training config", [&] { return pipeline::pipeline_config_from_json(training); });
  return rc;
}

RunConfig load_config(const std::string& path, std::uint64_t seed) {
  if (path.empty()) return resolve_config({{"version", kSchemaVersion}}, seed);
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  json user;
  try {
    user = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  return resolve_config(user, seed);
}

}  // namespace rodenet::cli
