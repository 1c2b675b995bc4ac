#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "sdrep/rational.hpp"

namespace sdrep::poly {

// Monomial exponent vector, one entry per variable.
using Exponent = std::vector<int>;

inline int exp_deg(const Exponent& e) {
  int d = 0;
  for (int k : e) d += k;
  return d;
}

// Lex with x1 > x2 > ... : first differing coordinate decides.
inline bool lex_greater(const Exponent& a, const Exponent& b) {
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return a[i] > b[i];
  return false;
}

inline bool lex_less(const Exponent& a, const Exponent& b) { return lex_greater(b, a); }

// Canonical term order: total degree ascending, then lex descending.
// This matches the usual monomial vector (1, x1, x2, x1^2, x1 x2, x2^2, ...).
struct GradedLexLess {
  bool operator()(const Exponent& a, const Exponent& b) const {
    int da = exp_deg(a), db = exp_deg(b);
    if (da != db) return da < db;
    return lex_greater(a, b);
  }
};

inline bool exp_divides(const Exponent& a, const Exponent& b) {  // a | b componentwise
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] > b[i]) return false;
  return true;
}

inline Exponent exp_add(const Exponent& a, const Exponent& b) {
  Exponent r(a);
  for (size_t i = 0; i < a.size(); ++i) r[i] += b[i];
  return r;
}

inline Exponent exp_sub(const Exponent& a, const Exponent& b) {
  Exponent r(a);
  for (size_t i = 0; i < a.size(); ++i) r[i] -= b[i];
  return r;
}

class Polynomial {
 public:
  using TermMap = std::map<Exponent, Rational, GradedLexLess>;

  Polynomial() : nvars_(0) {}
  explicit Polynomial(int nvars) : nvars_(nvars) {}

  static Polynomial constant(int nvars, const Rational& c);
  static Polynomial variable(int nvars, int i);
  static Polynomial monomial(int nvars, const Exponent& e, const Rational& c);

  int nvars() const { return nvars_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  size_t term_count() const { return terms_.size(); }

  Rational coeff(const Exponent& e) const;
  void add_term(const Exponent& e, const Rational& c);

  int degree() const;  // -1 for the zero polynomial
  // Max total degree over the variable window [first, first+count).
  int degree_in(int first, int count) const;
  int degree_in_var(int v) const;
  bool is_constant() const { return degree() <= 0; }
  bool is_affine() const { return degree() <= 1; }

  Polynomial operator-() const;
  Polynomial& operator+=(const Polynomial& o);
  Polynomial& operator-=(const Polynomial& o);
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  Polynomial& operator*=(const Polynomial& o) { return *this = *this * o; }
  Polynomial& operator*=(const Rational& c);
  friend Polynomial operator*(Polynomial a, const Rational& c) { return a *= c; }
  friend Polynomial operator*(const Rational& c, Polynomial a) { return a *= c; }
  bool operator==(const Polynomial& o) const { return nvars_ == o.nvars_ && terms_ == o.terms_; }

  Polynomial pow(int e) const;

  Rational eval(std::span<const Rational> x) const;
  double eval_d(std::span<const double> x) const;

  Polynomial derivative(int var) const;

  // Composition: variable i is replaced by images[i]; all images share a ring.
  Polynomial substitute(const std::vector<Polynomial>& images) const;

  // Re-index into a ring with new_nvars variables; var i of *this becomes var_map[i].
  Polynomial embed(int new_nvars, const std::vector<int>& var_map) const;

  // degree -> homogeneous component (only nonzero components are present)
  std::map<int, Polynomial> homogeneous_parts() const;

  Exponent lex_leading_exponent() const;  // throws on zero polynomial
  Rational lex_leading_coeff() const;

 private:
  int nvars_;
  TermMap terms_;
};

// All exponents e with per-variable window caps: total degree <= total_cap and,
// when window caps are given, degree over [0,nx) <= cap_x, over [nx,n) <= cap_u.
// Order: graded-lex ascending (the canonical monomial vector order).
std::vector<Exponent> monomial_exponents(int nvars, int total_cap);
std::vector<Exponent> monomial_exponents_split(int nvars, int nx, int cap_x, int cap_u,
                                               int total_cap);

Polynomial gradient_dot(const Polynomial& f, const std::vector<Polynomial>& dirs);
std::vector<Polynomial> gradient(const Polynomial& f);
std::vector<std::vector<Polynomial>> hessian(const Polynomial& f);

// R_f(x,u) = f(x) - f(u) - grad f(u)^T (x - u), a polynomial in 2n variables
// (x block first, then u block).
Polynomial lagrange_remainder(const Polynomial& f);

// Exact division: returns a/b if b divides a, nullopt otherwise.
std::optional<Polynomial> exact_divide(const Polynomial& a, const Polynomial& b);

// f(A x + b) for an affine change of variables; A is row-major nvars x nvars.
Polynomial affine_substitute(const Polynomial& f, const std::vector<std::vector<Rational>>& A,
                             const std::vector<Rational>& b);
// Translation-only convenience: f(x + t).
Polynomial translate(const Polynomial& f, const std::vector<Rational>& t);

}  // namespace sdrep::poly
