#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace sdrep::poly {

// Exact rational scalar. All symbolic data in the library is built on this;
// doubles appear only at the numeric boundary (solver, sampling, rendering).
using Rational = mpq_class;

inline Rational rat(long num, long den = 1) {
  if (den == 0) throw std::invalid_argument("rational with zero denominator");
  Rational r(num, den);
  r.canonicalize();
  return r;
}

// Accepts "p", "p/q", and decimal literals like "-1.25".
inline Rational rat_from_string(const std::string& s) {
  std::string t;
  for (char c : s)
    if (!isspace(static_cast<unsigned char>(c))) t += c;
  if (t.empty()) throw std::invalid_argument("empty rational literal");
  auto dot = t.find('.');
  if (dot != std::string::npos) {
    std::string digits = t.substr(0, dot) + t.substr(dot + 1);
    size_t frac_len = t.size() - dot - 1;
    Rational num(digits, 10);
    Rational den(1);
    for (size_t i = 0; i < frac_len; ++i) den *= 10;
    Rational r = num / den;
    r.canonicalize();
    return r;
  }
  Rational r;
  if (r.set_str(t, 10) != 0) throw std::invalid_argument("bad rational literal: " + s);
  r.canonicalize();
  return r;
}

inline std::string rat_to_string(const Rational& r) { return r.get_str(); }

inline double rat_to_double(const Rational& r) { return r.get_d(); }

inline Rational rat_from_double(double x) {
  Rational r(x);  // exact binary-to-rational conversion
  r.canonicalize();
  return r;
}

inline Rational rat_pow(const Rational& b, unsigned e) {
  Rational r(1);
  Rational base = b;
  while (e) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

inline int rat_sign(const Rational& r) { return sgn(r); }

// Best rational approximation with denominator <= max_den (continued fractions).
inline Rational rat_round(const Rational& x, unsigned long max_den) {
  if (x.get_den() <= max_den) return x;
  mpz_class p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  mpz_class num = x.get_num(), den = x.get_den();
  mpz_class p2, q2, a;
  while (den != 0) {
    a = num / den;
    mpz_class rem = num - a * den;
    if (rem < 0) {
      a -= 1;
      rem += den;
    }
    p2 = a * p1 + p0;
    q2 = a * q1 + q0;
    if (q2 > max_den) {
      // largest admissible semiconvergent
      mpz_class k = (mpz_class(max_den) - q0) / q1;
      mpz_class ps = k * p1 + p0, qs = k * q1 + q0;
      Rational best(p1, q1), semi(ps, qs);
      best.canonicalize();
      semi.canonicalize();
      return abs(x - semi) < abs(x - best) ? semi : best;
    }
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    num = den;
    den = rem;
  }
  Rational r(p1, q1);
  r.canonicalize();
  return r;
}

}  // namespace sdrep::poly
