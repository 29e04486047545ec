#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "rodenet/diffengine/graph.hpp"
#include "rodenet/symnet/symnet.hpp"
#include "rodenet/types.hpp"

namespace rodenet::odenet {

/// Rollouts abort once any state component exceeds this magnitude.
inline constexpr double kBlowUpBound = 1e6;

/// Forward-Euler network: x(t + dt) = x(t) + dt * SymNet(x(t)), one SymNet per
/// state component.
struct OdeNet {
  symnet::SymNetShape shape;
  std::vector<double> xi;
  double dt = 0.05;

  OdeNet() = default;
  OdeNet(symnet::SymNetShape shape, std::vector<double> xi, double dt);

  std::span<const double> component(int l) const;
};

State delta_t_block(const OdeNet& net, std::span<const double> x);

/// steps + 1 states starting at x0. Throws BlowUpError with the failing step.
Trajectory rollout(const OdeNet& net, std::span<const double> x0, std::size_t steps);

/// w_k = e^k / sum_{s=1}^{n} e^s for k = 1..n.
std::vector<double> step_weights(int n);

/// sum_k w_k |xhat(t_k) - x(t_k)|^2 / dt^2 over the first `unroll` steps of
/// a rollout started at segment[0].
double data_loss(const OdeNet& net, const Trajectory& segment, int unroll);

/// sum_p l_s(p): |p| - s/2 outside [-s, s], p^2 / (2 s) inside.
double huber_loss(std::span<const double> xi, double knee);

/// (1/N) sum_j L_data(traj_j) + lambda_h * L_Huber, each trajectory unrolled
/// from its first sample.
double warmup1_objective(const OdeNet& net, std::span<const Trajectory> trajectories, double lambda_h,
                         double knee, int unroll);

/// Targets for a batch of windows: targets[k][l] holds component l of sample
/// k of every window (k = 0 is the initial state).
struct WindowBatch {
  std::vector<std::vector<std::vector<double>>> targets;
  std::size_t size() const { return targets.empty() ? 0 : targets[0][0].size(); }
};

WindowBatch make_batch(std::span<const Trajectory> trajectories,
                       std::span<const std::pair<std::size_t, std::size_t>> windows, int unroll);

/// Mean data loss over the batch, built on the graph. `params` are the
/// size-1 parameter nodes of the full ODE-Net (canonical layout).
ad::Var data_loss_graph(std::span<const ad::Var> params, const symnet::SymNetShape& shape, double dt,
                        const WindowBatch& batch, int unroll);

ad::Var huber_graph(ad::Var xi, double knee);

nlohmann::json to_json(const OdeNet& net, std::span<const double> loss_history = {});
OdeNet odenet_from_json(const nlohmann::json& j);

}  // namespace rodenet::odenet
