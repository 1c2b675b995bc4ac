#include "sdrep/mixed_basis.hpp"

#include <stdexcept>

namespace sdrep::poly {

Polynomial MixedBasisExpansion::reconstruct_numerator() const {
  Polynomial q(divisor.nvars());
  for (const auto& [e, c] : poly_part) q.add_term(e, c);
  Polynomial r(divisor.nvars());
  for (const auto& [e, c] : frac_part) r.add_term(e, c);
  return q * divisor + r;
}

MixedBasisExpansion mixed_basis_divide(const Polynomial& h, const Polynomial& p, int half_degree) {
  if (p.is_zero()) throw std::invalid_argument("mixed_basis_divide: zero divisor");
  if (h.nvars() != p.nvars()) throw std::invalid_argument("mixed_basis_divide: nvars mismatch");

  MixedBasisExpansion out;
  out.divisor = p;
  out.p_leading = p.lex_leading_exponent();
  out.half_degree = half_degree;
  const Rational lc = p.lex_leading_coeff();
  const int lead_deg = exp_deg(out.p_leading);
  const int budget = 2 * half_degree;

  // Work polynomial; repeatedly act on its lex-leading term.
  Polynomial rem = h;
  while (!rem.is_zero()) {
    // Find the lex-greatest exponent still present.
    Exponent e = rem.lex_leading_exponent();
    Rational c = rem.coeff(e);
    if (exp_divides(out.p_leading, e)) {
      Exponent a = exp_sub(e, out.p_leading);
      if (exp_deg(a) + lead_deg > budget)
        throw std::runtime_error("mixed_basis_divide: degree budget exceeded");
      Rational k = c / lc;
      out.poly_part[a] += k;
      Polynomial shift = Polynomial::monomial(p.nvars(), a, k);
      rem = rem - shift * p;
    } else if (lex_less(e, out.p_leading)) {
      if (exp_deg(e) > budget)
        throw std::runtime_error("mixed_basis_divide: degree budget exceeded");
      out.frac_part[e] += c;
      rem.add_term(e, -c);
    } else {
      throw std::runtime_error("mixed_basis_divide: mixed basis violation");
    }
  }
  // Drop exact zeros that can appear through cancellation.
  for (auto it = out.poly_part.begin(); it != out.poly_part.end();)
    it = (it->second == 0) ? out.poly_part.erase(it) : std::next(it);
  for (auto it = out.frac_part.begin(); it != out.frac_part.end();)
    it = (it->second == 0) ? out.frac_part.erase(it) : std::next(it);
  return out;
}

}  // namespace sdrep::poly
