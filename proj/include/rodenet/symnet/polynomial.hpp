#pragma once

#include <map>
#include <span>
#include <vector>

#include <json.hpp>

namespace rodenet::symnet {

using Exponents = std::vector<int>;

/// Graded lexicographic order: lower total degree first; ties broken so that
/// x1 precedes x2 precedes x3 (i.e. exponent vectors compared descending).
struct GradedLexLess {
  bool operator()(const Exponents& a, const Exponents& b) const;
};

int total_degree(const Exponents& e);

/// Sparse multivariate polynomial with real coefficients. Exact zeros are
/// never stored.
class Polynomial {
 public:
  using TermMap = std::map<Exponents, double, GradedLexLess>;

  explicit Polynomial(int dim = 1);
  static Polynomial constant(int dim, double c);
  static Polynomial variable(int dim, int index, double coef = 1.0);

  int dim() const { return dim_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  /// -1 for the zero polynomial.
  int degree() const;

  double coefficient(const Exponents& e) const;
  void add_term(const Exponents& e, double coef);

  Polynomial& operator+=(const Polynomial& other);
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a += b.scaled(-1.0); }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  Polynomial scaled(double c) const;

  double evaluate(std::span<const double> x) const;
  /// Drops terms with |coef| < tol.
  Polynomial pruned(double tol) const;

  bool operator==(const Polynomial& other) const {
    return dim_ == other.dim_ && terms_ == other.terms_;
  }

 private:
  int dim_;
  TermMap terms_;
};

/// All monomials in `dim` variables with total degree <= max_degree, in
/// graded-lex order.
std::vector<Exponents> monomial_basis(int dim, int max_degree);

/// Coefficients of `p` on `basis` (absent terms are 0).
std::vector<double> coefficients_on(const Polynomial& p, std::span<const Exponents> basis);

/// Human-readable form, e.g. "2*x2 - 2*x1".
std::string to_string(const Polynomial& p, int precision = 4);

/// {"terms": [{"exps": [...], "coef": c}, ...]} in graded-lex order.
nlohmann::json to_json(const Polynomial& p);
Polynomial polynomial_from_json(const nlohmann::json& j, int dim);

}  // namespace rodenet::symnet
