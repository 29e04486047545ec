#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "rodenet/evaluator/evaluator.hpp"
#include "rodenet/pipeline/pipeline.hpp"
#include "rodenet/simulator/simulator.hpp"

namespace rodenet::cli {

inline constexpr int kSchemaVersion = 1;

/// Resolved command-line configuration. The file holds the sections
/// "simulation", "training" and "evaluation" (each optional, partial objects
/// allowed) plus "version". Seeds are not part of the file; the --seed flag
/// feeds every section.
struct RunConfig {
  sim::SimulationConfig simulation;
  pipeline::PipelineConfig training;
  eval::EvalOptions evaluation;
  std::uint64_t seed = 0;
  nlohmann::json resolved;  // every section with defaults filled in

  std::string hash() const;
  nlohmann::json provenance() const;
};

/// Every key with its default value.
nlohmann::json default_config();

/// Throws ConfigError on unknown keys, type mismatches, a missing or
/// unsupported version, or values rejected by validation.
RunConfig resolve_config(const nlohmann::json& user, std::uint64_t seed);

/// Reads and resolves a config file; an empty path gives the defaults.
RunConfig load_config(const std::string& path, std::uint64_t seed);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace rodenet::cli
