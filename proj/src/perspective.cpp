#include "sdrep/perspective.hpp"

#include <stdexcept>

namespace sdrep::poly {

Polynomial perspective_homogenize(const Polynomial& g, int deg) {
  const int n = g.nvars();
  const int d = deg < 0 ? g.degree() : deg;
  if (d < g.degree()) throw std::invalid_argument("perspective_homogenize: deg below deg g");
  Polynomial out(n);
  for (const auto& [e, c] : g.terms()) {
    Exponent t(e);
    t[0] = d - exp_deg(e);
    out.add_term(t, c);
  }
  return out;
}

Polynomial dehomogenized_part(const Polynomial& f, int k) {
  Polynomial out(f.nvars());
  for (const auto& [e, c] : f.terms()) {
    if (exp_deg(e) != k) continue;
    Exponent t(e);
    t[0] = 0;
    out.add_term(t, c);
  }
  return out;
}

std::vector<std::vector<double>> halton_points(int dim, int count) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  if (dim > static_cast<int>(std::size(primes)))
    throw std::invalid_argument("halton_points: dimension too large");
  std::vector<std::vector<double>> pts(count, std::vector<double>(dim));
  for (int j = 0; j < dim; ++j) {
    const int base = primes[j];
    for (int i = 0; i < count; ++i) {
      double v = 0.0, scale = 1.0 / base;
      for (int k = i + 1; k > 0; k /= base) {
        v += (k % base) * scale;
        scale /= base;
      }
      pts[i][j] = v;
    }
  }
  return pts;
}

PerspectiveData perspective_transform(const Polynomial& f, const Domain& D,
                                      const std::optional<Box>& sample_box,
                                      bool require_singular) {
  const int n = f.nvars();
  if (n < 1) throw std::invalid_argument("perspective_transform: empty ring");
  if (D.nvars != n) throw std::invalid_argument("perspective_transform: ring mismatch");
  if (f.is_zero()) throw std::invalid_argument("perspective_transform: zero polynomial");

  if (sample_box) {
    if (sample_box->dim() != n) throw std::invalid_argument("perspective_transform: box dimension");
    for (const auto& u : halton_points(n, 100)) {
      std::vector<double> x = sample_box->point(u);
      if (!D.contains_d(x, 1e-12) || f.eval_d(x) < 0) continue;
      if (x[0] < -1e-9)
        throw std::runtime_error(
            "perspective_transform: set sample with x1 < 0; the map 1/x1 does not preserve it");
    }
  }

  PerspectiveData out;
  out.degree = f.degree();
  int b = out.degree;
  for (const auto& [e, c] : f.terms()) b = std::min(b, exp_deg(e));
  out.valuation = b;
  if (b == 0 || (require_singular && b < 2))
    throw std::runtime_error("perspective_transform: not singular at origin");

  out.base = dehomogenized_part(f, b);
  for (int i = 1; i <= out.degree - b; ++i) out.parts.push_back(-dehomogenized_part(f, b + i));

  // numerator = x1^{d-b} * base - sum_i x1^{d-b-i} * parts[i-1]
  const int db = out.degree - b;
  Polynomial x1 = Polynomial::variable(n, 0);
  Polynomial num = x1.pow(db) * out.base;
  for (int i = 1; i <= db; ++i) num = num - x1.pow(db - i) * out.parts[i - 1];
  out.image = RationalFunction{num, x1.pow(db)};

  for (const auto& g : D.gens) out.gens.push_back(perspective_homogenize(g));
  return out;
}

}  // namespace sdrep::poly
