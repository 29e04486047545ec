#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "rodenet/error.hpp"
#include "rodenet/gan/gan.hpp"

namespace rodenet::gan {

namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMat>;
using Weights = Eigen::Map<RowMat>;

// Samples per chunk. Chunk boundaries depend only on the batch size, so the
// summation order (and hence every bit of the result) is independent of the
// thread count.
constexpr std::size_t kChunkWidth = 16;

struct Layer {
  std::size_t in, out, offset;
};

std::vector<Layer> layout(const std::vector<int>& layers) {
  std::vector<Layer> out;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto in = static_cast<std::size_t>(layers[l]), o = static_cast<std::size_t>(layers[l + 1]);
    out.push_back({in, o, off});
    off += (in + 1) * o;
  }
  return out;
}

ConstWeights weights(const std::vector<double>& p, const Layer& L) {
  return ConstWeights(p.data() + L.offset, static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in));
}

Eigen::Map<const Eigen::VectorXd> bias(const std::vector<double>& p, const Layer& L) {
  return Eigen::Map<const Eigen::VectorXd>(p.data() + L.offset + L.in * L.out, static_cast<Eigen::Index>(L.out));
}

// Column-batched forward pass; keeps every layer input (h[0] = x) and the
// pre-activations of the hidden layers.
struct Forward {
  std::vector<Mat> h;  // h[l] is the input of layer l
  std::vector<Mat> a;  // pre-activations, a[l] = W_l h[l] + b_l
  Mat out;
};

Forward forward(const std::vector<double>& p, const std::vector<Layer>& net, const Mat& x, double slope) {
  Forward f;
  f.h.push_back(x);
  for (std::size_t l = 0; l < net.size(); ++l) {
    Mat a = weights(p, net[l]) * f.h.back();
    a.colwise() += bias(p, net[l]);
    if (l + 1 < net.size()) {
      f.h.push_back(a.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; }));
      f.a.push_back(std::move(a));
    } else {
      f.out = std::move(a);
    }
  }
  return f;
}

Mat slope_mask(const Mat& a, double slope) {
  return a.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

// Backpropagates `upstream` (d loss / d output, one column per sample).
// Accumulates parameter gradients into `grad` when it is non-null and
// returns d loss / d input.
Mat backprop(const std::vector<double>& p, const std::vector<Layer>& net, const Forward& f, Mat upstream,
             double slope, std::vector<double>* grad) {
  Mat delta = std::move(upstream);
  for (std::size_t l = net.size(); l-- > 0;) {
    const Layer& L = net[l];
    if (grad) {
      Weights gw(grad->data() + L.offset, static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in));
      gw.noalias() += delta * f.h[l].transpose();
      // Column by column: a rowwise reduction would let heap alignment
      // change the summation order.
      Eigen::Map<Eigen::VectorXd> gb(grad->data() + L.offset + L.in * L.out, static_cast<Eigen::Index>(L.out));
      for (Eigen::Index s = 0; s < delta.cols(); ++s) gb += delta.col(s);
    }
    Mat back = weights(p, L).transpose() * delta;
    if (l > 0) back.array() *= slope_mask(f.a[l - 1], slope).array();
    delta = std::move(back);
  }
  return delta;
}

Mat columns(const std::vector<std::vector<double>>& v, std::size_t lo, std::size_t hi, std::size_t dim) {
  Mat m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(hi - lo));
  for (std::size_t s = lo; s < hi; ++s) {
    if (v[s].size() != dim) throw ContractViolation("batch vector has the wrong length");
    m.col(static_cast<Eigen::Index>(s - lo)) = Eigen::Map<const Eigen::VectorXd>(v[s].data(), static_cast<Eigen::Index>(dim));
  }
  return m;
}

template <class Chunk>
std::vector<double> chunked(Execution exec, std::size_t batch, std::size_t n_params, Chunk&& chunk) {
  const std::size_t chunks = (batch + kChunkWidth - 1) / kChunkWidth;
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(n_params, 0.0));
  for_each_index(exec, chunks, [&](std::size_t c) {
    chunk(c * kChunkWidth, std::min(batch, (c + 1) * kChunkWidth), partial[c]);
  });
  std::vector<double> total(n_params, 0.0);
  for (const auto& part : partial)
    for (std::size_t i = 0; i < n_params; ++i) total[i] += part[i];
  return total;
}

void check_batch(const GanModel& m, const CriticBatch& b) {
  if (b.real.empty()) throw ContractViolation("empty critic batch");
  if (b.fake.size() != b.real.size() || b.eps.size() != b.real.size())
    throw ContractViolation("critic batch parts have different sizes");
  for (double e : b.eps)
    if (!(e >= 0.0 && e <= 1.0)) throw ContractViolation("interpolation weight must lie in [0, 1]");
  (void)m;
}

}  // namespace

std::vector<std::vector<double>> mlp_forward_batch(std::span<const double> params,
                                                   std::span<const std::vector<double>> xs,
                                                   const std::vector<int>& layers, double slope) {
  if (params.size() != mlp_param_count(layers)) throw ContractViolation("mlp parameter length mismatch");
  if (xs.empty()) return {};
  const std::vector<double> p(params.begin(), params.end());
  const std::vector<std::vector<double>> in(xs.begin(), xs.end());
  const Mat out = forward(p, layout(layers), columns(in, 0, in.size(), static_cast<std::size_t>(layers.front())), slope).out;
  std::vector<std::vector<double>> res(xs.size());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    res[s].resize(static_cast<std::size_t>(out.rows()));
    Eigen::VectorXd::Map(res[s].data(), out.rows()) = out.col(static_cast<Eigen::Index>(s));
  }
  return res;
}

CriticGradient critic_gradient(const GanModel& m, const CriticBatch& b, double lambda_gp, Execution exec) {
  check_batch(m, b);
  const std::size_t batch = b.real.size(), dim = m.data_dim();
  const auto net = layout(m.d_layers);
  const double inv_b = 1.0 / static_cast<double>(batch);
  std::vector<double> d_real(batch), d_fake(batch), pen(batch);

  CriticGradient out;
  out.grad = chunked(exec, batch, m.v.size(), [&](std::size_t lo, std::size_t hi, std::vector<double>& g) {
    const auto n = static_cast<Eigen::Index>(hi - lo);
    const Mat xr = columns(b.real, lo, hi, dim), xf = columns(b.fake, lo, hi, dim);
    Eigen::RowVectorXd e(n);
    for (Eigen::Index s = 0; s < n; ++s) e(s) = b.eps[lo + static_cast<std::size_t>(s)];
    const Mat xm = xr.array().rowwise() * e.array() + xf.array().rowwise() * (1.0 - e.array());

    const Forward fr = forward(m.v, net, xr, m.slope);
    const Forward ff = forward(m.v, net, xf, m.slope);
    backprop(m.v, net, fr, Mat::Constant(1, n, -inv_b), m.slope, &g);
    backprop(m.v, net, ff, Mat::Constant(1, n, inv_b), m.slope, &g);

    // Input gradient of D at the interpolates: gx = W_1^T d_1 with
    // d_L = 1 and d_l = m_l * (W_{l+1}^T d_{l+1}).
    const Forward fm = forward(m.v, net, xm, m.slope);
    const std::size_t L = net.size();
    std::vector<Mat> delta(L);
    std::vector<Mat> mask(L);
    delta[L - 1] = Mat::Ones(1, n);
    for (std::size_t l = L - 1; l > 0; --l) {
      mask[l - 1] = slope_mask(fm.a[l - 1], m.slope);
      delta[l - 1] = (weights(m.v, net[l]).transpose() * delta[l]).cwiseProduct(mask[l - 1]);
    }
    const Mat gx = weights(m.v, net[0]).transpose() * delta[0];

    // Penalty adjoint: rho_0 = dP/dgx, then for each layer
    //   dW_l += d_l rho_{l-1}^T,  rho_l = m_l * (W_l rho_{l-1}).
    Mat rho(gx.rows(), n);
    for (Eigen::Index s = 0; s < n; ++s) {
      const double norm = gx.col(s).norm();
      const std::size_t idx = lo + static_cast<std::size_t>(s);
      pen[idx] = (norm - 1.0) * (norm - 1.0);
      rho.col(s) = norm > 0.0 ? Eigen::VectorXd(gx.col(s) * (2.0 * (norm - 1.0) / norm * lambda_gp * inv_b))
                              : Eigen::VectorXd::Zero(gx.rows());
      d_real[idx] = fr.out(0, s);
      d_fake[idx] = ff.out(0, s);
    }
    for (std::size_t l = 0; l < L; ++l) {
      const Layer& Ly = net[l];
      Weights gw(g.data() + Ly.offset, static_cast<Eigen::Index>(Ly.out), static_cast<Eigen::Index>(Ly.in));
      gw.noalias() += delta[l] * rho.transpose();
      if (l + 1 < L) rho = (weights(m.v, Ly) * rho).cwiseProduct(mask[l]);
    }
  });

  for (std::size_t s = 0; s < batch; ++s) {
    out.stats.wasserstein += (d_real[s] - d_fake[s]) * inv_b;
    out.stats.penalty += pen[s] * inv_b;
  }
  out.stats.loss = -out.stats.wasserstein + lambda_gp * out.stats.penalty;
  return out;
}

CriticGradient critic_gradient_reference(const GanModel& m, const CriticBatch& b, double lambda_gp) {
  check_batch(m, b);
  const std::size_t batch = b.real.size();
  const double inv_b = 1.0 / static_cast<double>(batch);
  CriticGradient out;
  out.grad.assign(m.v.size(), 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    ad::Graph g;
    ad::Var v = g.leaf(m.v);
    ad::Var dr = discriminate(m, v, g.leaf(b.real[s]));
    ad::Var df = discriminate(m, v, g.leaf(b.fake[s]));
    ad::Var gp = gradient_penalty(m, v, b.real[s], b.fake[s], b.eps[s]);
    ad::Var loss = (df - dr + gp * lambda_gp) * inv_b;
    const ad::Var wrt[] = {v};
    const auto gv = g.grad(loss, wrt)[0];
    for (std::size_t i = 0; i < gv.size(); ++i) out.grad[i] += gv[i];
    out.stats.wasserstein += (dr.scalar() - df.scalar()) * inv_b;
    out.stats.penalty += gp.scalar() * inv_b;
  }
  out.stats.loss = -out.stats.wasserstein + lambda_gp * out.stats.penalty;
  return out;
}

GeneratorGradient generator_gradient(const GanModel& m, std::span<const std::vector<double>> z, Execution exec) {
  if (z.empty()) throw ContractViolation("empty generator batch");
  const std::size_t batch = z.size();
  const auto gnet = layout(m.g_layers), dnet = layout(m.d_layers);
  const double inv_b = 1.0 / static_cast<double>(batch);
  std::vector<double> scores(batch);
  const std::vector<std::vector<double>> zs(z.begin(), z.end());

  GeneratorGradient out;
  out.grad = chunked(exec, batch, m.theta.size(), [&](std::size_t lo, std::size_t hi, std::vector<double>& g) {
    const auto n = static_cast<Eigen::Index>(hi - lo);
    const Forward fg = forward(m.theta, gnet, columns(zs, lo, hi, static_cast<std::size_t>(m.latent_dim)), m.slope);
    const Forward fd = forward(m.v, dnet, fg.out, m.slope);
    for (Eigen::Index s = 0; s < n; ++s) scores[lo + static_cast<std::size_t>(s)] = fd.out(0, s);
    Mat gx = backprop(m.v, dnet, fd, Mat::Constant(1, n, -inv_b), m.slope, nullptr);
    backprop(m.theta, gnet, fg, std::move(gx), m.slope, &g);
  });
  for (double s : scores) out.loss -= s * inv_b;
  return out;
}

GeneratorGradient generator_gradient_reference(const GanModel& m, std::span<const std::vector<double>> z) {
  if (z.empty()) throw ContractViolation("empty generator batch");
  const double inv_b = 1.0 / static_cast<double>(z.size());
  GeneratorGradient out;
  out.grad.assign(m.theta.size(), 0.0);
  for (const auto& zs : z) {
    ad::Graph g;
    ad::Var theta = g.leaf(m.theta);
    ad::Var score = discriminate(m, g.leaf(m.v), generate(m, theta, g.leaf(zs)));
    const ad::Var wrt[] = {theta};
    const auto gt = g.grad(score * -inv_b, wrt)[0];
    for (std::size_t i = 0; i < gt.size(); ++i) out.grad[i] += gt[i];
    out.loss -= score.scalar() * inv_b;
  }
  return out;
}

}  // namespace rodenet::gan
