#include "rodenet/diffengine/graph.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "rodenet/error.hpp"

namespace rodenet::ad {

namespace {

double mask_value(Mask mask, double param, double a) {
  switch (mask) {
    case Mask::Leaky:
      return a > 0.0 ? 1.0 : param;
    case Mask::Sign:
      return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    case Mask::HuberClamp:
      return std::clamp(a / param, -1.0, 1.0);
    case Mask::HuberInside:
      return std::abs(a) <= param ? 1.0 / param : 0.0;
  }
  return 0.0;
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}

Graph& graph_of(Var a) {
  require(a.valid(), "operation on an empty Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  require(a.valid() && b.valid(), "operation on an empty Var");
  require(a.graph() == b.graph(), "operands belong to different graphs");
  return *a.graph();
}

}  // namespace

std::span<const double> Var::value() const { return graph_->value(*this); }

double Var::scalar() const {
  auto v = value();
  if (v.size() != 1) throw ContractViolation("scalar() on a non-scalar node");
  return v[0];
}

std::size_t Var::size() const { return graph_->node(id_).size; }

void Graph::check_var(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size())
    throw LookupError("node does not belong to this graph");
}

Var Graph::leaf(std::span<const double> values) {
  Node n;
  n.op = Op::Leaf;
  n.begin = values_.size();
  n.size = values.size();
  values_.insert(values_.end(), values.begin(), values.end());
  nodes_.push_back(n);
  return {this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Graph::filled(std::size_t size, double value) {
  std::vector<double> v(size, value);
  return leaf(v);
}

void Graph::set_value(Var v, std::span<const double> values) {
  check_var(v);
  const Node& n = nodes_[v.id()];
  if (n.op != Op::Leaf) throw ContractViolation("set_value on a non-leaf node");
  if (values.size() != n.size) throw ContractViolation("set_value size mismatch");
  std::copy(values.begin(), values.end(), values_.begin() + static_cast<std::ptrdiff_t>(n.begin));
}

void Graph::reevaluate() {
  for (const Node& n : nodes_)
    if (n.op != Op::Leaf) compute(n);
}

std::span<const double> Graph::value(Var v) const {
  check_var(v);
  return val(v.id());
}

Var Graph::make(Op op, std::initializer_list<Var> args, std::size_t size, double param,
                std::size_t aux, Mask mask) {
  Node n;
  n.op = op;
  n.mask = mask;
  n.param = param;
  n.aux = aux;
  std::size_t k = 0;
  for (Var a : args) {
    check_var(a);
    n.args[k++] = a.id();
  }
  n.begin = values_.size();
  n.size = size;
  values_.resize(values_.size() + size);
  nodes_.push_back(n);
  compute(nodes_.back());
  return {this, static_cast<NodeId>(nodes_.size() - 1)};
}

void Graph::compute(const Node& n) {
  auto y = mut(n);
  auto arg = [&](int k) { return val(n.args[k]); };
  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::Add: {
      auto a = arg(0), b = arg(1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
      return;
    }
    case Op::Sub: {
      auto a = arg(0), b = arg(1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
      return;
    }
    case Op::Mul: {
      auto a = arg(0), b = arg(1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
      return;
    }
    case Op::Div: {
      auto a = arg(0), b = arg(1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] / b[i];
      return;
    }
    case Op::Scale: {
      auto a = arg(0);
      const double s = arg(1)[0];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * s;
      return;
    }
    case Op::ScaleConst: {
      auto a = arg(0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * n.param;
      return;
    }
    case Op::Shift: {
      auto a = arg(0);
      const double s = arg(1)[0];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + s;
      return;
    }
    case Op::Dot: {
      auto a = arg(0), b = arg(1);
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
      y[0] = acc;
      return;
    }
    case Op::Affine: {
      auto w = arg(0), x = arg(1);
      const std::size_t cols = x.size();
      for (std::size_t r = 0; r < y.size(); ++r) {
        const double* row = w.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
      }
      if (n.args[2] != kNoNode) {
        auto b = arg(2);
        for (std::size_t r = 0; r < y.size(); ++r) y[r] += b[r];
      }
      return;
    }
    case Op::AffineT: {
      auto w = arg(0), h = arg(1);
      const std::size_t cols = y.size();
      std::fill(y.begin(), y.end(), 0.0);
      for (std::size_t r = 0; r < h.size(); ++r) {
        const double* row = w.data() + r * cols;
        const double hr = h[r];
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * hr;
      }
      return;
    }
    case Op::Outer: {
      auto a = arg(0), b = arg(1);
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) y[i * b.size() + j] = a[i] * b[j];
      return;
    }
    case Op::Tanh: {
      auto a = arg(0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(a[i]);
      return;
    }
    case Op::LeakyRelu: {
      auto a = arg(0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] > 0.0 ? a[i] : n.param * a[i];
      return;
    }
    case Op::Square: {
      auto a = arg(0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * a[i];
      return;
    }
    case Op::Sqrt: {
      auto a = arg(0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sqrt(a[i]);
      return;
    }
    case Op::Abs: {
      auto a = arg(0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::abs(a[i]);
      return;
    }
    case Op::Huber: {
      auto a = arg(0);
      const double s = n.param;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = std::abs(a[i]);
        y[i] = p > s ? p - 0.5 * s : a[i] * a[i] / (2.0 * s);
      }
      return;
    }
    case Op::MaskMul: {
      auto h = arg(0), a = arg(1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = h[i] * mask_value(n.mask, n.param, a[i]);
      return;
    }
    case Op::Sum: {
      double acc = 0.0;
      for (double v : arg(0)) acc += v;
      y[0] = acc;
      return;
    }
    case Op::Broadcast: {
      std::fill(y.begin(), y.end(), arg(0)[0]);
      return;
    }
    case Op::Norm: {
      double acc = 0.0;
      for (double v : arg(0)) acc += v * v;
      y[0] = std::sqrt(acc);
      return;
    }
    case Op::Slice: {
      auto a = arg(0);
      std::copy_n(a.begin() + static_cast<std::ptrdiff_t>(n.aux), y.size(), y.begin());
      return;
    }
    case Op::Pad: {
      auto a = arg(0);
      std::fill(y.begin(), y.end(), 0.0);
      std::copy(a.begin(), a.end(), y.begin() + static_cast<std::ptrdiff_t>(n.aux));
      return;
    }
  }
}

std::vector<char> Graph::needed_mask(Var output, std::span<const Var> leaves) const {
  check_var(output);
  if (nodes_[output.id()].size != 1) throw ContractViolation("gradient of a non-scalar output");
  std::vector<char> needed(output.id() + 1, 0);
  for (Var l : leaves) {
    check_var(l);
    if (nodes_[l.id()].op != Op::Leaf) throw ContractViolation("gradient w.r.t. a non-leaf node");
    if (l.id() <= output.id()) needed[l.id()] = 1;
  }
  for (NodeId id = 0; id <= output.id(); ++id) {
    const Node& n = nodes_[id];
    if (n.op == Op::Leaf) continue;
    for (NodeId a : n.args)
      if (a != kNoNode && needed[a]) needed[id] = 1;
  }
  return needed;
}

std::vector<std::vector<double>> Graph::grad(Var output, std::span<const Var> leaves) const {
  auto needed = needed_mask(output, leaves);
  const NodeId out = output.id();
  std::vector<double> adj(nodes_[out].begin + nodes_[out].size, 0.0);
  adj[nodes_[out].begin] = 1.0;

  auto A = [&](NodeId id) { return std::span<double>(adj.data() + nodes_[id].begin, nodes_[id].size); };
  auto need = [&](NodeId id) { return id != kNoNode && needed[id]; };

  for (NodeId id = out + 1; id-- > 0;) {
    if (!needed[id]) continue;
    const Node& n = nodes_[id];
    if (n.op == Op::Leaf) continue;
    auto g = std::span<const double>(A(id));
    auto y = val(id);
    const NodeId a0 = n.args[0], a1 = n.args[1], a2 = n.args[2];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; }
        if (need(a1)) { auto gb = A(a1); for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i]; }
        break;
      case Op::Sub:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; }
        if (need(a1)) { auto gb = A(a1); for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i]; }
        break;
      case Op::Mul: {
        auto a = val(a0), b = val(a1);
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i]; }
        if (need(a1)) { auto gb = A(a1); for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i]; }
        break;
      }
      case Op::Div: {
        auto b = val(a1);
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / b[i]; }
        if (need(a1)) { auto gb = A(a1); for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * y[i] / b[i]; }
        break;
      }
      case Op::Scale: {
        auto a = val(a0);
        const double s = val(a1)[0];
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s; }
        if (need(a1)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a[i];
          A(a1)[0] += acc;
        }
        break;
      }
      case Op::ScaleConst:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.param; }
        break;
      case Op::Shift:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; }
        if (need(a1)) {
          double acc = 0.0;
          for (double v : g) acc += v;
          A(a1)[0] += acc;
        }
        break;
      case Op::Dot: {
        auto a = val(a0), b = val(a1);
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0] * b[i]; }
        if (need(a1)) { auto gb = A(a1); for (std::size_t i = 0; i < a.size(); ++i) gb[i] += g[0] * a[i]; }
        break;
      }
      case Op::Affine: {
        auto w = val(a0), x = val(a1);
        const std::size_t cols = x.size();
        if (need(a0)) {
          auto gw = A(a0);
          for (std::size_t r = 0; r < g.size(); ++r)
            for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * x[c];
        }
        if (need(a1)) {
          auto gx = A(a1);
          for (std::size_t r = 0; r < g.size(); ++r)
            for (std::size_t c = 0; c < cols; ++c) gx[c] += w[r * cols + c] * g[r];
        }
        if (need(a2)) { auto gb = A(a2); for (std::size_t r = 0; r < g.size(); ++r) gb[r] += g[r]; }
        break;
      }
      case Op::AffineT: {
        auto w = val(a0), h = val(a1);
        const std::size_t cols = g.size();
        if (need(a0)) {
          auto gw = A(a0);
          for (std::size_t r = 0; r < h.size(); ++r)
            for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += h[r] * g[c];
        }
        if (need(a1)) {
          auto gh = A(a1);
          for (std::size_t r = 0; r < h.size(); ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * g[c];
            gh[r] += acc;
          }
        }
        break;
      }
      case Op::Outer: {
        auto a = val(a0), b = val(a1);
        if (need(a0)) {
          auto ga = A(a0);
          for (std::size_t i = 0; i < a.size(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < b.size(); ++j) acc += g[i * b.size() + j] * b[j];
            ga[i] += acc;
          }
        }
        if (need(a1)) {
          auto gb = A(a1);
          for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) gb[j] += g[i * b.size() + j] * a[i];
        }
        break;
      }
      case Op::Tanh:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]); }
        break;
      case Op::LeakyRelu: {
        auto a = val(a0);
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask_value(Mask::Leaky, n.param, a[i]); }
        break;
      }
      case Op::Square: {
        auto a = val(a0);
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * a[i] * g[i]; }
        break;
      }
      case Op::Sqrt:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (2.0 * y[i]); }
        break;
      case Op::Abs: {
        auto a = val(a0);
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask_value(Mask::Sign, 0.0, a[i]); }
        break;
      }
      case Op::Huber: {
        auto a = val(a0);
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask_value(Mask::HuberClamp, n.param, a[i]); }
        break;
      }
      case Op::MaskMul: {
        auto h = val(a0), a = val(a1);
        if (need(a0)) { auto gh = A(a0); for (std::size_t i = 0; i < g.size(); ++i) gh[i] += g[i] * mask_value(n.mask, n.param, a[i]); }
        if (need(a1) && n.mask == Mask::HuberClamp) {
          auto ga = A(a1);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * h[i] * mask_value(Mask::HuberInside, n.param, a[i]);
        }
        break;
      }
      case Op::Sum:
        if (need(a0)) { auto ga = A(a0); for (double& v : ga) v += g[0]; }
        break;
      case Op::Broadcast:
        if (need(a0)) {
          double acc = 0.0;
          for (double v : g) acc += v;
          A(a0)[0] += acc;
        }
        break;
      case Op::Norm: {
        auto a = val(a0);
        if (need(a0) && y[0] > 0.0) {
          auto ga = A(a0);
          const double f = g[0] / y[0];
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] += f * a[i];
        }
        break;
      }
      case Op::Slice:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < g.size(); ++i) ga[n.aux + i] += g[i]; }
        break;
      case Op::Pad:
        if (need(a0)) { auto ga = A(a0); for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[n.aux + i]; }
        break;
    }
  }

  std::vector<std::vector<double>> result;
  result.reserve(leaves.size());
  for (Var l : leaves) {
    const Node& n = nodes_[l.id()];
    if (l.id() > out) {
      result.emplace_back(n.size, 0.0);
    } else {
      auto a = std::span<const double>(adj.data() + n.begin, n.size);
      result.emplace_back(a.begin(), a.end());
    }
  }
  return result;
}

std::vector<Var> Graph::grad_as_graph(Var output, std::span<const Var> leaves) {
  auto needed = needed_mask(output, leaves);
  const NodeId out = output.id();
  std::vector<std::optional<Var>> adj(out + 1);
  adj[out] = scalar(1.0);

  auto need = [&](NodeId id) { return id != kNoNode && needed[id]; };
  auto accumulate = [&](NodeId id, Var contribution) {
    if (adj[id]) adj[id] = *adj[id] + contribution;
    else adj[id] = contribution;
  };
  auto V = [&](NodeId id) { return Var(this, id); };

  for (NodeId id = out + 1; id-- > 0;) {
    if (!needed[id] || !adj[id]) continue;
    const Node n = nodes_[id];  // copy: nodes_ grows below
    if (n.op == Op::Leaf) continue;
    const Var g = *adj[id];
    const Var y = V(id);
    const NodeId a0 = n.args[0], a1 = n.args[1], a2 = n.args[2];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        if (need(a0)) accumulate(a0, g);
        if (need(a1)) accumulate(a1, g);
        break;
      case Op::Sub:
        if (need(a0)) accumulate(a0, g);
        if (need(a1)) accumulate(a1, g * -1.0);
        break;
      case Op::Mul:
        if (need(a0)) accumulate(a0, g * V(a1));
        if (need(a1)) accumulate(a1, g * V(a0));
        break;
      case Op::Div:
        if (need(a0)) accumulate(a0, g / V(a1));
        if (need(a1)) accumulate(a1, ((g * y) / V(a1)) * -1.0);
        break;
      case Op::Scale:
        if (need(a0)) accumulate(a0, scale(g, V(a1)));
        if (need(a1)) accumulate(a1, dot(g, V(a0)));
        break;
      case Op::ScaleConst:
        if (need(a0)) accumulate(a0, g * n.param);
        break;
      case Op::Shift:
        if (need(a0)) accumulate(a0, g);
        if (need(a1)) accumulate(a1, sum(g));
        break;
      case Op::Dot:
        if (need(a0)) accumulate(a0, scale(V(a1), g));
        if (need(a1)) accumulate(a1, scale(V(a0), g));
        break;
      case Op::Affine:
        if (need(a0)) accumulate(a0, outer(g, V(a1)));
        if (need(a1)) accumulate(a1, matvec_transposed(V(a0), g));
        if (need(a2)) accumulate(a2, g);
        break;
      case Op::AffineT:
        if (need(a0)) accumulate(a0, outer(V(a1), g));
        if (need(a1)) accumulate(a1, matvec(V(a0), g));
        break;
      case Op::Outer:
        if (need(a0)) accumulate(a0, matvec(g, V(a1)));
        if (need(a1)) accumulate(a1, matvec_transposed(g, V(a0)));
        break;
      case Op::Tanh:
        if (need(a0)) accumulate(a0, g * (filled(n.size, 1.0) - square(y)));
        break;
      case Op::LeakyRelu:
        if (need(a0)) accumulate(a0, mask_mul(g, V(a0), Mask::Leaky, n.param));
        break;
      case Op::Square:
        if (need(a0)) accumulate(a0, g * (V(a0) * 2.0));
        break;
      case Op::Sqrt:
        if (need(a0)) accumulate(a0, g / (y * 2.0));
        break;
      case Op::Abs:
        if (need(a0)) accumulate(a0, mask_mul(g, V(a0), Mask::Sign, 0.0));
        break;
      case Op::Huber:
        if (need(a0)) accumulate(a0, mask_mul(g, V(a0), Mask::HuberClamp, n.param));
        break;
      case Op::MaskMul:
        if (need(a0)) accumulate(a0, mask_mul(g, V(a1), n.mask, n.param));
        if (need(a1) && n.mask == Mask::HuberClamp)
          accumulate(a1, mask_mul(g * V(a0), V(a1), Mask::HuberInside, n.param));
        break;
      case Op::Sum:
        if (need(a0)) accumulate(a0, broadcast(g, nodes_[a0].size));
        break;
      case Op::Broadcast:
        if (need(a0)) accumulate(a0, sum(g));
        break;
      case Op::Norm:
        if (need(a0)) {
          if (val(id)[0] > 0.0) accumulate(a0, scale(V(a0), g / y));
          else accumulate(a0, filled(nodes_[a0].size, 0.0));
        }
        break;
      case Op::Slice:
        if (need(a0)) accumulate(a0, pad(g, nodes_[a0].size, n.aux));
        break;
      case Op::Pad:
        if (need(a0)) accumulate(a0, slice(g, n.aux, nodes_[a0].size));
        break;
    }
  }

  std::vector<Var> result;
  result.reserve(leaves.size());
  for (Var l : leaves) {
    if (l.id() <= out && adj[l.id()]) result.push_back(*adj[l.id()]);
    else result.push_back(filled(nodes_[l.id()].size, 0.0));
  }
  return result;
}

// ---- free functions ----

Var operator+(Var a, Var b) {
  auto& g = graph_of(a, b);
  require(a.size() == b.size(), "add: size mismatch");
  return g.make(Op::Add, {a, b}, a.size());
}

Var operator-(Var a, Var b) {
  auto& g = graph_of(a, b);
  require(a.size() == b.size(), "sub: size mismatch");
  return g.make(Op::Sub, {a, b}, a.size());
}

Var operator*(Var a, Var b) {
  auto& g = graph_of(a, b);
  require(a.size() == b.size(), "mul: size mismatch");
  return g.make(Op::Mul, {a, b}, a.size());
}

Var operator/(Var a, Var b) {
  auto& g = graph_of(a, b);
  require(a.size() == b.size(), "div: size mismatch");
  return g.make(Op::Div, {a, b}, a.size());
}

Var operator*(Var a, double c) { return graph_of(a).make(Op::ScaleConst, {a}, a.size(), c); }
Var operator*(double c, Var a) { return a * c; }
Var operator-(Var a) { return a * -1.0; }

Var scale(Var a, Var s) {
  auto& g = graph_of(a, s);
  require(s.size() == 1, "scale: factor must be scalar");
  return g.make(Op::Scale, {a, s}, a.size());
}

Var shift(Var a, Var s) {
  auto& g = graph_of(a, s);
  require(s.size() == 1, "shift: offset must be scalar");
  return g.make(Op::Shift, {a, s}, a.size());
}

Var dot(Var a, Var b) {
  auto& g = graph_of(a, b);
  require(a.size() == b.size(), "dot: size mismatch");
  return g.make(Op::Dot, {a, b}, 1);
}

Var affine(Var w, Var x, Var b) {
  auto& g = graph_of(w, x);
  require(x.size() > 0 && w.size() % x.size() == 0, "affine: weight size not a multiple of input size");
  const std::size_t rows = w.size() / x.size();
  if (!b.valid()) return g.make(Op::Affine, {w, x}, rows);
  graph_of(w, b);
  require(b.size() == rows, "affine: bias size mismatch");
  return g.make(Op::Affine, {w, x, b}, rows);
}

Var matvec(Var w, Var x) { return affine(w, x, Var{}); }

Var matvec_transposed(Var w, Var h) {
  auto& g = graph_of(w, h);
  require(h.size() > 0 && w.size() % h.size() == 0, "matvec_transposed: size mismatch");
  return g.make(Op::AffineT, {w, h}, w.size() / h.size());
}

Var outer(Var a, Var b) {
  auto& g = graph_of(a, b);
  return g.make(Op::Outer, {a, b}, a.size() * b.size());
}

Var tanh(Var a) { return graph_of(a).make(Op::Tanh, {a}, a.size()); }

Var leaky_relu(Var a, double slope) {
  return graph_of(a).make(Op::LeakyRelu, {a}, a.size(), slope);
}

Var square(Var a) { return graph_of(a).make(Op::Square, {a}, a.size()); }
Var sqrt(Var a) { return graph_of(a).make(Op::Sqrt, {a}, a.size()); }
Var abs(Var a) { return graph_of(a).make(Op::Abs, {a}, a.size()); }

Var huber(Var a, double knee) {
  require(knee > 0.0, "huber: knee must be positive");
  return graph_of(a).make(Op::Huber, {a}, a.size(), knee);
}

Var mask_mul(Var h, Var a, Mask mask, double param) {
  auto& g = graph_of(h, a);
  require(h.size() == a.size(), "mask_mul: size mismatch");
  return g.make(Op::MaskMul, {h, a}, h.size(), param, 0, mask);
}

Var sum(Var a) { return graph_of(a).make(Op::Sum, {a}, 1); }

Var broadcast(Var s, std::size_t size) {
  require(s.size() == 1, "broadcast: source must be scalar");
  return graph_of(s).make(Op::Broadcast, {s}, size);
}

Var norm(Var a) { return graph_of(a).make(Op::Norm, {a}, 1); }

Var slice(Var a, std::size_t offset, std::size_t length) {
  require(offset + length <= a.size(), "slice: out of range");
  return graph_of(a).make(Op::Slice, {a}, length, 0.0, offset);
}

Var element(Var a, std::size_t index) { return slice(a, index, 1); }

Var pad(Var a, std::size_t size, std::size_t offset) {
  require(offset + a.size() <= size, "pad: out of range");
  return graph_of(a).make(Op::Pad, {a}, size, 0.0, offset);
}

}  // namespace rodenet::ad
