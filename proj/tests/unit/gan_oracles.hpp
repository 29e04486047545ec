#pragma once

// Direct evaluations of discriminator input gradients and the penalized
// critic loss, written out layer by layer without the differentiation engine.

#include <cmath>
#include <span>
#include <vector>

#include "rodenet/gan/gan.hpp"

namespace rodenet::testing {

using gan::CriticBatch;
using gan::GanModel;

// Input gradient of the discriminator by explicit reverse sweep over the
// layer formula, independent of the differentiation engine.
inline std::vector<double> input_gradient(const GanModel& m, std::span<const double> x) {
  const auto& L = m.d_layers;
  std::vector<std::vector<double>> pre;
  std::vector<double> h(x.begin(), x.end());
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (std::size_t l = 0; l + 1 < L.size(); ++l) {
    offsets.push_back(off);
    const auto in = static_cast<std::size_t>(L[l]), out = static_cast<std::size_t>(L[l + 1]);
    std::vector<double> a(out);
    for (std::size_t r = 0; r < out; ++r) {
      a[r] = m.v[off + in * out + r];
      for (std::size_t c = 0; c < in; ++c) a[r] += m.v[off + r * in + c] * h[c];
    }
    pre.push_back(a);
    h = a;
    if (l + 2 < L.size())
      for (double& v : h) v = v > 0 ? v : m.slope * v;
    off += (in + 1) * out;
  }
  std::vector<double> g{1.0};
  for (std::size_t l = L.size() - 1; l-- > 0;) {
    const auto in = static_cast<std::size_t>(L[l]), out = static_cast<std::size_t>(L[l + 1]);
    if (l + 2 < L.size())
      for (std::size_t r = 0; r < out; ++r) g[r] *= pre[l][r] > 0 ? 1.0 : m.slope;
    std::vector<double> back(in, 0.0);
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < in; ++c) back[c] += m.v[offsets[l] + r * in + c] * g[r];
    g = back;
  }
  return g;
}

inline double critic_loss_direct(const GanModel& base, std::span<const double> v, const CriticBatch& b, double lambda) {
  GanModel m = base;
  m.v.assign(v.begin(), v.end());
  double acc = 0.0;
  const double n = static_cast<double>(b.real.size());
  for (std::size_t s = 0; s < b.real.size(); ++s) {
    std::vector<double> mix(m.data_dim());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = b.eps[s] * b.real[s][i] + (1 - b.eps[s]) * b.fake[s][i];
    double norm = 0.0;
    for (double g : input_gradient(m, mix)) norm += g * g;
    norm = std::sqrt(norm);
    acc += (discriminate(m, b.fake[s]) - discriminate(m, b.real[s]) + lambda * (norm - 1) * (norm - 1)) / n;
  }
  return acc;
}

}  // namespace rodenet::testing
