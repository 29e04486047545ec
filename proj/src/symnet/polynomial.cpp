#include "rodenet/symnet/polynomial.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "rodenet/error.hpp"

namespace rodenet::symnet {

int total_degree(const Exponents& e) { return std::accumulate(e.begin(), e.end(), 0); }

bool GradedLexLess::operator()(const Exponents& a, const Exponents& b) const {
  const int da = total_degree(a), db = total_degree(b);
  if (da != db) return da < db;
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

Polynomial::Polynomial(int dim) : dim_(dim) {
  if (dim < 1) throw ContractViolation("polynomial dimension must be >= 1");
}

Polynomial Polynomial::constant(int dim, double c) {
  Polynomial p(dim);
  p.add_term(Exponents(static_cast<std::size_t>(dim), 0), c);
  return p;
}

Polynomial Polynomial::variable(int dim, int index, double coef) {
  if (index < 0 || index >= dim) throw ContractViolation("variable index out of range");
  Polynomial p(dim);
  Exponents e(static_cast<std::size_t>(dim), 0);
  e[static_cast<std::size_t>(index)] = 1;
  p.add_term(e, coef);
  return p;
}

int Polynomial::degree() const {
  int deg = -1;
  for (const auto& [e, c] : terms_) deg = std::max(deg, total_degree(e));
  return deg;
}

double Polynomial::coefficient(const Exponents& e) const {
  auto it = terms_.find(e);
  return it == terms_.end() ? 0.0 : it->second;
}

void Polynomial::add_term(const Exponents& e, double coef) {
  if (e.size() != static_cast<std::size_t>(dim_)) throw ContractViolation("exponent length mismatch");
  if (coef == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(e, coef);
  if (!inserted) {
    it->second += coef;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  if (other.dim_ != dim_) throw ContractViolation("polynomial dimension mismatch");
  for (const auto& [e, c] : other.terms_) add_term(e, c);
  return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  if (a.dim_ != b.dim_) throw ContractViolation("polynomial dimension mismatch");
  Polynomial out(a.dim_);
  Exponents e(static_cast<std::size_t>(a.dim_));
  for (const auto& [ea, ca] : a.terms_) {
    for (const auto& [eb, cb] : b.terms_) {
      for (std::size_t k = 0; k < e.size(); ++k) e[k] = ea[k] + eb[k];
      out.add_term(e, ca * cb);
    }
  }
  return out;
}

Polynomial Polynomial::scaled(double c) const {
  Polynomial out(dim_);
  for (const auto& [e, v] : terms_) out.add_term(e, v * c);
  return out;
}

double Polynomial::evaluate(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(dim_)) throw ContractViolation("evaluation point dimension mismatch");
  double acc = 0.0;
  for (const auto& [e, c] : terms_) {
    double m = c;
    for (std::size_t k = 0; k < e.size(); ++k)
      for (int p = 0; p < e[k]; ++p) m *= x[k];
    acc += m;
  }
  return acc;
}

Polynomial Polynomial::pruned(double tol) const {
  Polynomial out(dim_);
  for (const auto& [e, c] : terms_)
    if (std::abs(c) >= tol) out.terms_.emplace(e, c);
  return out;
}

std::vector<Exponents> monomial_basis(int dim, int max_degree) {
  std::vector<Exponents> basis;
  Exponents e(static_cast<std::size_t>(dim), 0);
  // Enumerate every exponent vector with entries in [0, max_degree] whose
  // total degree fits, then sort.
  auto rec = [&](auto&& self, std::size_t k, int remaining) -> void {
    if (k == e.size()) {
      basis.push_back(e);
      return;
    }
    for (int p = 0; p <= remaining; ++p) {
      e[k] = p;
      self(self, k + 1, remaining - p);
    }
    e[k] = 0;
  };
  rec(rec, 0, max_degree);
  std::sort(basis.begin(), basis.end(), GradedLexLess{});
  return basis;
}

std::vector<double> coefficients_on(const Polynomial& p, std::span<const Exponents> basis) {
  std::vector<double> out;
  out.reserve(basis.size());
  for (const auto& e : basis) out.push_back(p.coefficient(e));
  return out;
}

std::string to_string(const Polynomial& p, int precision) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  os.precision(precision);
  bool first = true;
  for (const auto& [e, c] : p.terms()) {
    double mag = c;
    if (first) {
      if (c < 0) os << "-";
    } else {
      os << (c < 0 ? " - " : " + ");
    }
    mag = std::abs(c);
    first = false;
    const bool constant = total_degree(e) == 0;
    if (constant || mag != 1.0) os << mag;
    bool need_star = !constant && mag != 1.0;
    for (std::size_t k = 0; k < e.size(); ++k) {
      for (int q = 0; q < e[k]; ++q) {
        if (need_star) os << "*";
        os << "x" << (k + 1);
        need_star = true;
      }
    }
  }
  return os.str();
}

nlohmann::json to_json(const Polynomial& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [e, c] : p.terms()) terms.push_back({{"exps", e}, {"coef", c}});
  return {{"terms", terms}};
}

Polynomial polynomial_from_json(const nlohmann::json& j, int dim) {
  Polynomial p(dim);
  for (const auto& t : j.at("terms")) {
    auto e = t.at("exps").get<Exponents>();
    p.add_term(e, t.at("coef").get<double>());
  }
  return p;
}

}  // namespace rodenet::symnet
