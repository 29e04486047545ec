#pragma once

// Primitive operations of the differentiation engine with their input ranges,
// and a central-difference comparison for any graph builder.

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "fd_oracle.hpp"
#include "rodenet/diffengine/graph.hpp"

namespace rodenet::testing {

using ad::Graph;
using ad::Mask;
using ad::Var;
using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Builds f(leaves) = dot(builder(leaves), r) and compares engine gradients
// with central differences for every leaf.
inline double worst_fd_error(const Builder& build, const std::vector<std::vector<double>>& inits, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Graph g;
  std::vector<Var> leaves;
  for (const auto& v : inits) leaves.push_back(g.leaf(v));
  Var y = build(g, leaves);
  Var r = g.leaf(uniform_vector(rng, y.size(), 0.5, 1.5));
  Var out = dot(y, r);
  auto grads = g.grad(out, leaves);

  double worst = 0.0;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto f = [&](std::span<const double> x) {
      g.set_value(leaves[k], x);
      g.reevaluate();
      return out.scalar();
    };
    auto fd = central_differences(f, inits[k]);
    g.set_value(leaves[k], inits[k]);
    g.reevaluate();
    worst = std::max(worst, max_relative_error(grads[k], fd));
  }
  return worst;
}

struct OpCase {
  const char* name;
  Builder build;
  std::vector<std::size_t> sizes;
  double lo = -2.0, hi = 2.0;
};

inline std::vector<OpCase> primitive_cases() {
  return {
      {"add", [](Graph&, const std::vector<Var>& v) { return v[0] + v[1]; }, {5, 5}},
      {"sub", [](Graph&, const std::vector<Var>& v) { return v[0] - v[1]; }, {5, 5}},
      {"mul", [](Graph&, const std::vector<Var>& v) { return v[0] * v[1]; }, {5, 5}},
      {"div", [](Graph&, const std::vector<Var>& v) { return v[0] / v[1]; }, {5, 5}, 0.5, 2.0},
      {"scale", [](Graph&, const std::vector<Var>& v) { return scale(v[0], v[1]); }, {5, 1}},
      {"scale_const", [](Graph&, const std::vector<Var>& v) { return v[0] * 1.7; }, {5}},
      {"shift", [](Graph&, const std::vector<Var>& v) { return shift(v[0], v[1]); }, {5, 1}},
      {"dot", [](Graph&, const std::vector<Var>& v) { return dot(v[0], v[1]); }, {5, 5}},
      {"affine", [](Graph&, const std::vector<Var>& v) { return affine(v[0], v[1], v[2]); }, {12, 4, 3}},
      {"matvec_transposed", [](Graph&, const std::vector<Var>& v) { return matvec_transposed(v[0], v[1]); }, {12, 3}},
      {"outer", [](Graph&, const std::vector<Var>& v) { return outer(v[0], v[1]); }, {3, 4}},
      {"tanh", [](Graph&, const std::vector<Var>& v) { return tanh(v[0]); }, {6}},
      {"leaky_relu", [](Graph&, const std::vector<Var>& v) { return leaky_relu(v[0], 0.2); }, {6}},
      {"square", [](Graph&, const std::vector<Var>& v) { return square(v[0]); }, {6}},
      {"sqrt", [](Graph&, const std::vector<Var>& v) { return sqrt(v[0]); }, {6}, 0.2, 2.0},
      {"abs", [](Graph&, const std::vector<Var>& v) { return abs(v[0]); }, {6}},
      {"huber", [](Graph&, const std::vector<Var>& v) { return huber(v[0], 0.5); }, {8}},
      {"sum", [](Graph&, const std::vector<Var>& v) { return sum(v[0]); }, {6}},
      {"broadcast", [](Graph&, const std::vector<Var>& v) { return broadcast(v[0], 4); }, {1}},
      {"norm", [](Graph&, const std::vector<Var>& v) { return norm(v[0]); }, {6}},
      {"slice", [](Graph&, const std::vector<Var>& v) { return slice(v[0], 2, 3); }, {6}},
      {"pad", [](Graph&, const std::vector<Var>& v) { return pad(v[0], 7, 2); }, {3}},
      {"mask_mul_huber", [](Graph&, const std::vector<Var>& v) { return mask_mul(v[0], v[1], Mask::HuberClamp, 1.0); }, {6, 6}},
  };
}

}  // namespace rodenet::testing
