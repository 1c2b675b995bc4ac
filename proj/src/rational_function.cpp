#include "sdrep/rational_function.hpp"

#include <stdexcept>

namespace sdrep::poly {

Polynomial cleared_rational_remainder(const RationalFunction& f, const Polynomial& p,
                                      const Polynomial& q) {
  int n = f.nvars();
  if (p.nvars() != n || q.nvars() != n) throw std::invalid_argument("clearing ring mismatch");
  std::vector<int> to_x(n), to_u(n);
  for (int i = 0; i < n; ++i) {
    to_x[i] = i;
    to_u[i] = n + i;
  }
  Polynomial Nx = f.num.embed(2 * n, to_x), Dx = f.den.embed(2 * n, to_x);
  Polynomial Nu = f.num.embed(2 * n, to_u), Du = f.den.embed(2 * n, to_u);

  // R_f = [N(x)D(u)^2 - N(u)D(u)D(x) - D(x) sum_i (N_i D - N D_i)(u)(x_i-u_i)] / (D(x)D(u)^2)
  Polynomial core = Nx * Du * Du - Nu * Du * Dx;
  for (int i = 0; i < n; ++i) {
    Polynomial di = (f.num.derivative(i) * f.den - f.num * f.den.derivative(i)).embed(2 * n, to_u);
    Polynomial diff = Polynomial::variable(2 * n, i) - Polynomial::variable(2 * n, n + i);
    core -= Dx * di * diff;
  }

  Polynomial scale = p.embed(2 * n, to_x) * q.embed(2 * n, to_u);
  auto quot = exact_divide(core * scale, Dx * Du * Du);
  if (!quot)
    throw std::domain_error("clearing pair does not clear the remainder denominator exactly");
  return *quot;
}

std::pair<Polynomial, Polynomial> default_clearing(const RationalFunction& f) {
  return {f.den, f.den * f.den};
}

}  // namespace sdrep::poly
