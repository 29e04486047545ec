#include "rodenet/diffengine/adam.hpp"

#include <cmath>

#include "rodenet/error.hpp"

namespace rodenet::ad {

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw ContractViolation("adam: parameter, gradient and state lengths differ");
  const auto& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

std::pair<std::vector<double>, AdamState> adam_step(std::span<const double> params,
                                                    std::span<const double> grads,
                                                    AdamState state) {
  std::vector<double> out(params.begin(), params.end());
  adam_update(out, grads, state);
  return {std::move(out), std::move(state)};
}

}  // namespace rodenet::ad
