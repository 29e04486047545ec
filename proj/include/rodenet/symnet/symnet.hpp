#pragma once

// SymNet: a polynomial network whose hidden layers each append the product of
// two affine forms of the current features.
//
//   f0 = x
//   layer i:  u = a_i . f_{i-1} + b_i,  v = c_i . f_{i-1} + e_i,  f_i = (f_{i-1}, u v)
//   output:   w . f_alpha + w0
//
// Canonical flat layout of one component (hidden layers in order):
//   [a_1 (d), b_1, c_1 (d), e_1,  a_2 (d+1), b_2, c_2 (d+1), e_2, ...,  w (d+alpha), w0]
// A full ODE-Net vector concatenates the d components in order l = 1..d.

#include <cstddef>
#include <span>
#include <vector>

#include "rodenet/diffengine/graph.hpp"
#include "rodenet/symnet/polynomial.hpp"

namespace rodenet::symnet {

struct SymNetShape {
  int dim = 3;
  int hidden = 2;

  SymNetShape() = default;
  SymNetShape(int d, int alpha);

  std::size_t component_size() const;
  std::size_t total_size() const { return component_size() * static_cast<std::size_t>(dim); }
  /// Offset of hidden layer i (0-based) inside a component.
  std::size_t layer_offset(int i) const;
  std::size_t output_offset() const { return layer_offset(hidden); }
  /// Highest total degree any output can reach (2^alpha).
  int max_degree() const { return 1 << hidden; }
};

/// d * (alpha^2 + 2 d alpha + d + 2 alpha + 1).
std::size_t param_count(int d, int alpha);

/// Evaluates one component on a single state.
double symnet_forward(std::span<const double> component, std::span<const double> x,
                      const SymNetShape& shape);

/// Graph route over a batch: `params` holds one size-1 node per component
/// parameter (canonical order) and `x` one node per state variable, each a
/// vector over the batch. Returns the component output over the batch.
ad::Var symnet_forward(std::span<const ad::Var> params, std::span<const ad::Var> x,
                       const SymNetShape& shape);

/// Size-1 slice nodes for every entry of a parameter vector node.
std::vector<ad::Var> scalar_params(ad::Var xi);

/// Exact expansion of one component into a polynomial. Coefficients with
/// |c| < prune_tol are dropped (0 keeps everything but exact zeros).
Polynomial extract_polynomial(std::span<const double> component, const SymNetShape& shape,
                              double prune_tol = 0.0);

/// One polynomial per component of a full parameter vector.
std::vector<Polynomial> extract_system(std::span<const double> xi, const SymNetShape& shape,
                                       double prune_tol = 0.0);

/// Parameters of a component that represents `p` exactly. Supports affine
/// parts plus quadratic parts that split into at most `alpha` products of
/// a variable with a linear form.
std::vector<double> encode_polynomial(const Polynomial& p, const SymNetShape& shape);

std::vector<double> encode_system(std::span<const Polynomial> components, const SymNetShape& shape);

}  // namespace rodenet::symnet
