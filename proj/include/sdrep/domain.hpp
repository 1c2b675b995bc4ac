#pragma once

#include <optional>
#include <vector>

#include "sdrep/polynomial.hpp"

namespace sdrep::poly {

// D = { x : g_i(x) >= 0 for all i }.  An empty generator list is R^n.
struct Domain {
  int nvars = 0;
  std::vector<Polynomial> gens;

  Domain() = default;
  explicit Domain(int n) : nvars(n) {}
  Domain(int n, std::vector<Polynomial> g) : nvars(n), gens(std::move(g)) {
    for (const auto& p : gens)
      if (p.nvars() != nvars) throw std::invalid_argument("generator ring mismatch");
  }

  static Domain nonneg_orthant(int n) {
    Domain d(n);
    for (int i = 0; i < n; ++i) d.gens.push_back(Polynomial::variable(n, i));
    return d;
  }

  // Univariate interval; either end may be absent (unbounded side).
  static Domain interval(std::optional<Rational> a, std::optional<Rational> b) {
    Domain d(1);
    Polynomial x = Polynomial::variable(1, 0);
    if (a) d.gens.push_back(x - Polynomial::constant(1, *a));
    if (b) d.gens.push_back(Polynomial::constant(1, *b) - x);
    return d;
  }

  bool contains_d(std::span<const double> x, double tol = 0.0) const {
    for (const auto& g : gens)
      if (g.eval_d(x) < -tol) return false;
    return true;
  }
  bool contains(std::span<const Rational> x) const {
    for (const auto& g : gens)
      if (rat_sign(g.eval(x)) < 0) return false;
    return true;
  }
};

// Axis-aligned sampling window.
struct Box {
  std::vector<double> lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
  std::vector<double> point(std::span<const double> unit) const {
    std::vector<double> x(lo.size());
    for (size_t i = 0; i < lo.size(); ++i) x[i] = lo[i] + unit[i] * (hi[i] - lo[i]);
    return x;
  }
};

}  // namespace sdrep::poly
