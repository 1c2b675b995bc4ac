#pragma once

#include <optional>

#include "sdrep/domain.hpp"
#include "sdrep/polynomial.hpp"

namespace sdrep::poly {

// num/den with exact polynomial entries. No gcd reduction is attempted; the
// callers that need a specific denominator pass it explicitly.
// positivity_domain, when set, records the caller's assertion that den > 0 on
// the interior of that domain; nothing here verifies it.
struct RationalFunction {
  Polynomial num;
  Polynomial den;
  std::optional<Domain> positivity_domain;

  RationalFunction() = default;
  RationalFunction(Polynomial n, Polynomial d) : num(std::move(n)), den(std::move(d)) {
    if (den.is_zero()) throw std::invalid_argument("zero denominator");
    if (num.nvars() != den.nvars()) throw std::invalid_argument("ring mismatch");
  }
  static RationalFunction from_poly(const Polynomial& p) {
    return {p, Polynomial::constant(p.nvars(), Rational(1))};
  }

  int nvars() const { return num.nvars(); }
  bool is_polynomial() const { return den.degree() == 0; }
  Polynomial as_polynomial() const {  // valid when den is a nonzero constant
    Polynomial p = num;
    p *= Rational(1) / den.coeff(Exponent(num.nvars(), 0));
    return p;
  }

  RationalFunction operator-() const { return {-num, den}; }
  friend RationalFunction operator+(const RationalFunction& a, const RationalFunction& b) {
    return {a.num * b.den + b.num * a.den, a.den * b.den};
  }
  friend RationalFunction operator-(const RationalFunction& a, const RationalFunction& b) {
    return {a.num * b.den - b.num * a.den, a.den * b.den};
  }
  friend RationalFunction operator*(const RationalFunction& a, const RationalFunction& b) {
    return {a.num * b.num, a.den * b.den};
  }

  RationalFunction derivative(int var) const {
    return {num.derivative(var) * den - num * den.derivative(var), den * den};
  }

  std::optional<double> eval_d(std::span<const double> x) const {
    double d = den.eval_d(x);
    if (d == 0) return std::nullopt;
    return num.eval_d(x) / d;
  }
  std::optional<Rational> eval(std::span<const Rational> x) const {
    Rational d = den.eval(x);
    if (d == 0) return std::nullopt;
    return num.eval(x) / d;
  }
};

// p(x) q(u) R_f(x,u) for rational f, where R_f is the first-order remainder
// f(x) - f(u) - grad f(u)^T (x-u).  p lives on the x block, q on the u block
// (both given as polynomials in the original n variables).  Errors unless
// p(x) q(u) clears every denominator exactly.
Polynomial cleared_rational_remainder(const RationalFunction& f, const Polynomial& p,
                                      const Polynomial& q);

// Default clearing pair per the construction: p = den(x), q = den(u)^2.
std::pair<Polynomial, Polynomial> default_clearing(const RationalFunction& f);

}  // namespace sdrep::poly
