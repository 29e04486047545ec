#include "rodenet/odenet/odenet.hpp"

#include <cmath>
#include <string>

#include "rodenet/error.hpp"

namespace rodenet::odenet {

OdeNet::OdeNet(symnet::SymNetShape s, std::vector<double> p, double step)
    : shape(s), xi(std::move(p)), dt(step) {
  if (!(dt > 0.0)) throw ContractViolation("ODE-Net time step must be positive");
  if (xi.size() != shape.total_size())
    throw ContractViolation("ODE-Net parameter vector has " + std::to_string(xi.size()) +
                            " entries, expected " + std::to_string(shape.total_size()));
}

std::span<const double> OdeNet::component(int l) const {
  const std::size_t n = shape.component_size();
  return std::span<const double>(xi).subspan(static_cast<std::size_t>(l) * n, n);
}

State delta_t_block(const OdeNet& net, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(net.shape.dim)) throw ContractViolation("state dimension mismatch");
  State out(x.begin(), x.end());
  for (int l = 0; l < net.shape.dim; ++l)
    out[static_cast<std::size_t>(l)] += net.dt * symnet::symnet_forward(net.component(l), x, net.shape);
  return out;
}

Trajectory rollout(const OdeNet& net, std::span<const double> x0, std::size_t steps) {
  Trajectory traj;
  traj.reserve(steps + 1);
  traj.emplace_back(x0.begin(), x0.end());
  for (std::size_t k = 0; k < steps; ++k) {
    State next = delta_t_block(net, traj.back());
    for (double v : next) {
      if (!std::isfinite(v) || std::abs(v) > kBlowUpBound)
        throw BlowUpError(k + 1, "ODE-Net rollout blew up at step " + std::to_string(k + 1));
    }
    traj.push_back(std::move(next));
  }
  return traj;
}

std::vector<double> step_weights(int n) {
  if (n < 1) throw ContractViolation("step_weights needs at least one step");
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int k = 1; k <= n; ++k) {
    w[static_cast<std::size_t>(k - 1)] = std::exp(static_cast<double>(k - n));
    total += w[static_cast<std::size_t>(k - 1)];
  }
  for (double& v : w) v /= total;
  return w;
}

double data_loss(const OdeNet& net, const Trajectory& segment, int unroll) {
  if (unroll < 1 || segment.size() < static_cast<std::size_t>(unroll) + 1)
    throw ContractViolation("segment shorter than the unroll length");
  const auto w = step_weights(unroll);
  State x = segment[0];
  double loss = 0.0;
  for (int k = 1; k <= unroll; ++k) {
    x = delta_t_block(net, x);
    double err = 0.0;
    for (std::size_t l = 0; l < x.size(); ++l) {
      const double e = x[l] - segment[static_cast<std::size_t>(k)][l];
      err += e * e;
    }
    loss += w[static_cast<std::size_t>(k - 1)] * err;
  }
  return loss / (net.dt * net.dt);
}

double huber_loss(std::span<const double> xi, double knee) {
  if (!(knee > 0.0)) throw ContractViolation("Huber knee must be positive");
  double acc = 0.0;
  for (double p : xi) {
    const double a = std::abs(p);
    acc += a > knee ? a - 0.5 * knee : p * p / (2.0 * knee);
  }
  return acc;
}

double warmup1_objective(const OdeNet& net, std::span<const Trajectory> trajectories, double lambda_h,
                         double knee, int unroll) {
  if (trajectories.empty()) throw ContractViolation("no trajectories");
  double acc = 0.0;
  for (const auto& t : trajectories) acc += data_loss(net, t, unroll);
  return acc / static_cast<double>(trajectories.size()) + lambda_h * huber_loss(net.xi, knee);
}

WindowBatch make_batch(std::span<const Trajectory> trajectories,
                       std::span<const std::pair<std::size_t, std::size_t>> windows, int unroll) {
  if (windows.empty()) throw ContractViolation("empty window batch");
  const std::size_t d = trajectories[windows[0].first][0].size();
  WindowBatch batch;
  batch.targets.assign(static_cast<std::size_t>(unroll) + 1,
                       std::vector<std::vector<double>>(d, std::vector<double>(windows.size())));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& [j, start] = windows[b];
    const Trajectory& t = trajectories[j];
    if (start + static_cast<std::size_t>(unroll) >= t.size()) throw ContractViolation("window exceeds trajectory");
    for (std::size_t k = 0; k <= static_cast<std::size_t>(unroll); ++k)
      for (std::size_t l = 0; l < d; ++l) batch.targets[k][l][b] = t[start + k][l];
  }
  return batch;
}

ad::Var data_loss_graph(std::span<const ad::Var> params, const symnet::SymNetShape& shape, double dt,
                        const WindowBatch& batch, int unroll) {
  if (params.size() != shape.total_size()) throw ContractViolation("parameter node count mismatch");
  if (batch.targets.size() < static_cast<std::size_t>(unroll) + 1) throw ContractViolation("batch too short");
  ad::Graph& g = *params[0].graph();
  const std::size_t d = static_cast<std::size_t>(shape.dim);
  const std::size_t n = shape.component_size();
  const auto w = step_weights(unroll);

  std::vector<ad::Var> x;
  for (std::size_t l = 0; l < d; ++l) x.push_back(g.leaf(batch.targets[0][l]));

  ad::Var loss;
  for (int k = 1; k <= unroll; ++k) {
    std::vector<ad::Var> next;
    next.reserve(d);
    for (std::size_t l = 0; l < d; ++l) {
      ad::Var f = symnet::symnet_forward(params.subspan(l * n, n), x, shape);
      next.push_back(x[l] + f * dt);
    }
    x = std::move(next);
    ad::Var err;
    for (std::size_t l = 0; l < d; ++l) {
      ad::Var target = g.leaf(batch.targets[static_cast<std::size_t>(k)][l]);
      ad::Var e = ad::sum(ad::square(x[l] - target));
      err = err.valid() ? err + e : e;
    }
    ad::Var term = err * w[static_cast<std::size_t>(k - 1)];
    loss = loss.valid() ? loss + term : term;
  }
  return loss * (1.0 / (static_cast<double>(batch.size()) * dt * dt));
}

ad::Var huber_graph(ad::Var xi, double knee) { return ad::sum(ad::huber(xi, knee)); }

nlohmann::json to_json(const OdeNet& net, std::span<const double> loss_history) {
  return {{"d", net.shape.dim},
          {"alpha", net.shape.hidden},
          {"dt", net.dt},
          {"xi", net.xi},
          {"loss_history", std::vector<double>(loss_history.begin(), loss_history.end())}};
}

OdeNet odenet_from_json(const nlohmann::json& j) {
  symnet::SymNetShape shape(j.at("d").get<int>(), j.at("alpha").get<int>());
  return OdeNet(shape, j.at("xi").get<std::vector<double>>(), j.at("dt").get<double>());
}

}  // namespace rodenet::odenet
