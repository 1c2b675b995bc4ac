#pragma once

#include <cstdint>
#include <vector>

#include "sdrep/polynomial.hpp"

// Deterministic pseudo-random values for property tests (splitmix64).
struct TestRng {
  uint64_t state;
  explicit TestRng(uint64_t seed) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // uniform in [0, n)
  uint64_t below(uint64_t n) { return next() % n; }
  long range(long lo, long hi) {  // inclusive
    return lo + static_cast<long>(below(static_cast<uint64_t>(hi - lo + 1)));
  }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  sdrep::poly::Rational rational(long mag = 9, long max_den = 9) {
    return sdrep::poly::rat(range(-mag, mag), range(1, max_den));
  }
  sdrep::poly::Rational nonzero_rational(long mag = 9, long max_den = 9) {
    sdrep::poly::Rational r = rational(mag, max_den);
    return r == 0 ? sdrep::poly::Rational(1) : r;
  }

  std::vector<sdrep::poly::Rational> rational_point(int n, long mag = 4, long max_den = 5) {
    std::vector<sdrep::poly::Rational> x(n);
    for (auto& v : x) v = rational(mag, max_den);
    return x;
  }
  std::vector<double> double_point(int n, double lo, double hi) {
    std::vector<double> x(n);
    for (auto& v : x) v = lo + unit() * (hi - lo);
    return x;
  }

  sdrep::poly::Polynomial polynomial(int nvars, int max_deg, int nterms) {
    sdrep::poly::Polynomial f(nvars);
    for (int t = 0; t < nterms; ++t) {
      sdrep::poly::Exponent e(nvars, 0);
      int budget = static_cast<int>(below(static_cast<uint64_t>(max_deg) + 1));
      for (int i = 0; i < nvars && budget > 0; ++i) {
        int k = static_cast<int>(below(static_cast<uint64_t>(budget) + 1));
        e[i] = k;
        budget -= k;
      }
      f.add_term(e, rational());
    }
    return f;
  }
  sdrep::poly::Polynomial nonzero_polynomial(int nvars, int max_deg, int nterms) {
    auto f = polynomial(nvars, max_deg, nterms);
    if (f.is_zero()) f.add_term(sdrep::poly::Exponent(nvars, 0), sdrep::poly::Rational(1));
    return f;
  }
};
