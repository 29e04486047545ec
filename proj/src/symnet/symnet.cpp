#include "rodenet/symnet/symnet.hpp"

#include <algorithm>
#include <string>

#include "rodenet/error.hpp"

namespace rodenet::symnet {

SymNetShape::SymNetShape(int d, int alpha) : dim(d), hidden(alpha) {
  if (d < 1 || alpha < 1) throw ContractViolation("SymNet needs d >= 1 and alpha >= 1");
}

std::size_t SymNetShape::component_size() const {
  return param_count(dim, hidden) / static_cast<std::size_t>(dim);
}

std::size_t SymNetShape::layer_offset(int i) const {
  std::size_t off = 0;
  for (int k = 0; k < i; ++k) off += 2 * static_cast<std::size_t>(dim + k) + 2;
  return off;
}

std::size_t param_count(int d, int alpha) {
  if (d < 1 || alpha < 1) throw ContractViolation("param_count needs d >= 1 and alpha >= 1");
  const auto D = static_cast<std::size_t>(d), A = static_cast<std::size_t>(alpha);
  return D * (A * A + 2 * D * A + D + 2 * A + 1);
}

namespace {

void check_component(std::size_t n, const SymNetShape& shape) {
  if (n != shape.component_size())
    throw ContractViolation("SymNet component has " + std::to_string(n) + " parameters, expected " +
                            std::to_string(shape.component_size()));
}

}  // namespace

double symnet_forward(std::span<const double> component, std::span<const double> x,
                      const SymNetShape& shape) {
  check_component(component.size(), shape);
  if (x.size() != static_cast<std::size_t>(shape.dim)) throw ContractViolation("SymNet input dimension mismatch");
  double features[64];
  const std::size_t width0 = x.size();
  if (width0 + static_cast<std::size_t>(shape.hidden) > 64) throw ContractViolation("SymNet too wide");
  std::copy(x.begin(), x.end(), features);
  const double* p = component.data();
  for (int i = 0; i < shape.hidden; ++i) {
    const std::size_t w = width0 + static_cast<std::size_t>(i);
    double u = 0.0, v = 0.0;
    for (std::size_t j = 0; j < w; ++j) u += p[j] * features[j];
    u += p[w];
    p += w + 1;
    for (std::size_t j = 0; j < w; ++j) v += p[j] * features[j];
    v += p[w];
    p += w + 1;
    features[w] = u * v;
  }
  const std::size_t w = width0 + static_cast<std::size_t>(shape.hidden);
  double out = 0.0;
  for (std::size_t j = 0; j < w; ++j) out += p[j] * features[j];
  return out + p[w];
}

ad::Var symnet_forward(std::span<const ad::Var> params, std::span<const ad::Var> x,
                       const SymNetShape& shape) {
  check_component(params.size(), shape);
  if (x.size() != static_cast<std::size_t>(shape.dim)) throw ContractViolation("SymNet input dimension mismatch");
  std::vector<ad::Var> features(x.begin(), x.end());
  std::size_t k = 0;
  auto unit = [&](std::size_t width) {
    ad::Var acc = ad::scale(features[0], params[k++]);
    for (std::size_t j = 1; j < width; ++j) acc = acc + ad::scale(features[j], params[k++]);
    return ad::shift(acc, params[k++]);
  };
  for (int i = 0; i < shape.hidden; ++i) {
    const std::size_t w = features.size();
    ad::Var u = unit(w);
    ad::Var v = unit(w);
    features.push_back(u * v);
  }
  return unit(features.size());
}

std::vector<ad::Var> scalar_params(ad::Var xi) {
  std::vector<ad::Var> out;
  out.reserve(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) out.push_back(ad::element(xi, i));
  return out;
}

Polynomial extract_polynomial(std::span<const double> component, const SymNetShape& shape,
                              double prune_tol) {
  check_component(component.size(), shape);
  const int d = shape.dim;
  std::vector<Polynomial> features;
  for (int j = 0; j < d; ++j) features.push_back(Polynomial::variable(d, j));
  std::size_t k = 0;
  auto unit = [&]() {
    Polynomial acc(d);
    for (const auto& f : features) acc += f.scaled(component[k++]);
    acc += Polynomial::constant(d, component[k++]);
    return acc;
  };
  for (int i = 0; i < shape.hidden; ++i) {
    Polynomial u = unit();
    Polynomial v = unit();
    features.push_back(u * v);
  }
  Polynomial out = unit();
  return prune_tol > 0.0 ? out.pruned(prune_tol) : out;
}

std::vector<Polynomial> extract_system(std::span<const double> xi, const SymNetShape& shape,
                                       double prune_tol) {
  if (xi.size() != shape.total_size()) throw ContractViolation("parameter vector length mismatch");
  std::vector<Polynomial> out;
  const std::size_t n = shape.component_size();
  for (int l = 0; l < shape.dim; ++l)
    out.push_back(extract_polynomial(xi.subspan(static_cast<std::size_t>(l) * n, n), shape, prune_tol));
  return out;
}

std::vector<double> encode_polynomial(const Polynomial& p, const SymNetShape& shape) {
  const int d = shape.dim;
  if (p.dim() != d) throw ContractViolation("polynomial dimension does not match SymNet input");
  if (p.degree() > 2) throw UnsupportedPolynomial("only polynomials of degree <= 2 can be encoded");

  // Quadratic monomials as (i, j, coef) with i <= j.
  struct Quad {
    int i, j;
    double coef;
  };
  std::vector<Quad> quads;
  std::vector<double> linear(static_cast<std::size_t>(d), 0.0);
  double constant = 0.0;
  for (const auto& [e, c] : p.terms()) {
    const int deg = total_degree(e);
    if (deg == 0) {
      constant = c;
    } else if (deg == 1) {
      for (int j = 0; j < d; ++j)
        if (e[static_cast<std::size_t>(j)] == 1) linear[static_cast<std::size_t>(j)] = c;
    } else {
      int i = -1, j = -1;
      for (int k = 0; k < d; ++k) {
        for (int r = 0; r < e[static_cast<std::size_t>(k)]; ++r) (i < 0 ? i : j) = k;
      }
      quads.push_back({i, j, c});
    }
  }

  // Greedy cover: each product is x_v times a linear form collecting every
  // remaining monomial that contains x_v.
  struct Product {
    int var;
    std::vector<double> form;
  };
  std::vector<Product> products;
  std::vector<char> used(quads.size(), 0);
  std::size_t remaining = quads.size();
  while (remaining > 0) {
    std::vector<int> count(static_cast<std::size_t>(d), 0);
    for (std::size_t q = 0; q < quads.size(); ++q) {
      if (used[q]) continue;
      count[static_cast<std::size_t>(quads[q].i)]++;
      if (quads[q].j != quads[q].i) count[static_cast<std::size_t>(quads[q].j)]++;
    }
    const int v = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
    Product prod{v, std::vector<double>(static_cast<std::size_t>(d), 0.0)};
    for (std::size_t q = 0; q < quads.size(); ++q) {
      if (used[q] || (quads[q].i != v && quads[q].j != v)) continue;
      const int other = quads[q].i == v ? quads[q].j : quads[q].i;
      prod.form[static_cast<std::size_t>(other)] = quads[q].coef;
      used[q] = 1;
      --remaining;
    }
    products.push_back(std::move(prod));
  }
  if (products.size() > static_cast<std::size_t>(shape.hidden))
    throw UnsupportedPolynomial("quadratic part needs " + std::to_string(products.size()) +
                                " product layers but the SymNet has " + std::to_string(shape.hidden));

  std::vector<double> xi(shape.component_size(), 0.0);
  for (std::size_t k = 0; k < products.size(); ++k) {
    const std::size_t w = static_cast<std::size_t>(d) + k;
    const std::size_t off = shape.layer_offset(static_cast<int>(k));
    xi[off + static_cast<std::size_t>(products[k].var)] = 1.0;  // u = x_v
    const std::size_t voff = off + w + 1;
    for (int j = 0; j < d; ++j) xi[voff + static_cast<std::size_t>(j)] = products[k].form[static_cast<std::size_t>(j)];
  }
  const std::size_t out = shape.output_offset();
  for (int j = 0; j < d; ++j) xi[out + static_cast<std::size_t>(j)] = linear[static_cast<std::size_t>(j)];
  for (std::size_t k = 0; k < products.size(); ++k) xi[out + static_cast<std::size_t>(d) + k] = 1.0;
  xi[out + static_cast<std::size_t>(d + shape.hidden)] = constant;
  return xi;
}

std::vector<double> encode_system(std::span<const Polynomial> components, const SymNetShape& shape) {
  if (components.size() != static_cast<std::size_t>(shape.dim))
    throw ContractViolation("need one polynomial per state component");
  std::vector<double> xi;
  xi.reserve(shape.total_size());
  for (const auto& p : components) {
    auto c = encode_polynomial(p, shape);
    xi.insert(xi.end(), c.begin(), c.end());
  }
  return xi;
}

}  // namespace rodenet::symnet
