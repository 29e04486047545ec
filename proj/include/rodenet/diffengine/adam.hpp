#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace rodenet::ad {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;  // completed steps
  AdamConfig config;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : m(n, 0.0), v(n, 0.0), config(cfg) {}
};

/// Bias-corrected Adam update. Returns the new parameters and state.
std::pair<std::vector<double>, AdamState> adam_step(std::span<const double> params,
                                                    std::span<const double> grads,
                                                    AdamState state);

/// In-place variant used by the training loops.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace rodenet::ad
