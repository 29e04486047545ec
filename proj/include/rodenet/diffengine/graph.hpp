#pragma once

// Reverse-mode differentiation over a graph of vector-valued nodes.
//
// Nodes are evaluated eagerly when they are created, so a Graph doubles as a
// tape. Two backward passes are available:
//   * grad() propagates plain numbers and is what training loops use;
//   * grad_as_graph() emits the backward computation as new nodes, so the
//     resulting gradient can itself be differentiated (needed for gradient
//     penalties).
// Both passes implement the same local derivative rules independently.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

namespace rodenet::ad {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Scale,       // vector * scalar node
  ScaleConst,  // vector * double
  Shift,       // vector + scalar node (broadcast)
  Dot,
  Affine,   // W x (+ b), W row-major rows x cols with cols = |x|
  AffineT,  // W^T h, rows = |h|
  Outer,
  Tanh,
  LeakyRelu,
  Square,
  Sqrt,
  Abs,
  Huber,  // elementwise Huber function with knee `param`
  MaskMul,
  Sum,
  Broadcast,
  Norm,
  Slice,
  Pad,
};

// Elementwise multipliers m(a) used by MaskMul(h, a) = h * m(a).
enum class Mask : std::uint8_t {
  Leaky,        // a > 0 ? 1 : slope
  Sign,         // sign(a)
  HuberClamp,   // clamp(a / s, -1, 1)
  HuberInside,  // |a| <= s ? 1 / s : 0
};

class Graph;

/// Handle to a node in a specific graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  Graph* graph() const { return graph_; }
  NodeId id() const { return id_; }
  bool valid() const { return graph_ != nullptr && id_ != kNoNode; }

  std::span<const double> value() const;
  double scalar() const;
  std::size_t size() const;

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = kNoNode;
};

class Graph {
 public:
  struct Node {
    Op op = Op::Leaf;
    Mask mask = Mask::Leaky;
    NodeId args[3] = {kNoNode, kNoNode, kNoNode};
    double param = 0.0;     // slope, knee, constant factor
    std::size_t aux = 0;    // slice/pad offset
    std::size_t begin = 0;  // offset into the value buffer
    std::size_t size = 0;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  /// Drops every node but keeps the allocated buffers for reuse.
  void clear() {
    nodes_.clear();
    values_.clear();
  }

  Var leaf(std::span<const double> values);
  Var leaf(std::initializer_list<double> values) {
    return leaf(std::span<const double>(values.begin(), values.size()));
  }
  Var scalar(double value) { return leaf({value}); }
  Var filled(std::size_t size, double value);

  /// Overwrites a leaf's value. Dependent nodes keep stale values until
  /// reevaluate() is called.
  void set_value(Var leaf, std::span<const double> values);
  /// Recomputes every non-leaf node in creation (topological) order.
  void reevaluate();

  std::span<const double> value(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[id]; }

  /// d output / d leaf for each requested leaf. The graph is not modified.
  std::vector<std::vector<double>> grad(Var output, std::span<const Var> leaves) const;
  /// Same derivatives, emitted as nodes of this graph (differentiable again).
  std::vector<Var> grad_as_graph(Var output, std::span<const Var> leaves);

  // Node construction. Prefer the free functions below.
  Var make(Op op, std::initializer_list<Var> args, std::size_t size, double param = 0.0,
           std::size_t aux = 0, Mask mask = Mask::Leaky);

 private:
  void compute(const Node& n);
  void check_var(Var v) const;
  std::vector<char> needed_mask(Var output, std::span<const Var> leaves) const;
  std::span<double> mut(const Node& n) { return {values_.data() + n.begin, n.size}; }
  std::span<const double> val(NodeId id) const {
    const Node& n = nodes_[id];
    return {values_.data() + n.begin, n.size};
  }

  std::vector<Node> nodes_;
  std::vector<double> values_;
};

// Elementwise (equal sizes).
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator-(Var a);

/// Vector times a size-1 node.
Var scale(Var a, Var s);
/// Vector plus a size-1 node added to every element.
Var shift(Var a, Var s);
Var dot(Var a, Var b);
/// W x + b with W stored row-major; the row count is |W| / |x|.
Var affine(Var w, Var x, Var b);
Var matvec(Var w, Var x);
/// W^T h with W row-major and |h| rows.
Var matvec_transposed(Var w, Var h);
Var outer(Var a, Var b);
Var tanh(Var a);
Var leaky_relu(Var a, double slope);
Var square(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var huber(Var a, double knee);
Var mask_mul(Var h, Var a, Mask mask, double param);
Var sum(Var a);
Var broadcast(Var s, std::size_t size);
Var norm(Var a);
Var slice(Var a, std::size_t offset, std::size_t length);
Var element(Var a, std::size_t index);
Var pad(Var a, std::size_t size, std::size_t offset);

}  // namespace rodenet::ad
