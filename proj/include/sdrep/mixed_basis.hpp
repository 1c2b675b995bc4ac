#pragma once

#include <map>

#include "sdrep/polynomial.hpp"

namespace sdrep::poly {

// h = sum_a poly_part[a] x^a  +  (sum_b frac_part[b] x^b) / p
// with every frac exponent b strictly lex-below the lex leading exponent of p.
struct MixedBasisExpansion {
  Polynomial divisor;  // p
  Exponent p_leading;
  int half_degree = 0;  // the budget d the expansion was produced under
  std::map<Exponent, Rational, GradedLexLess> poly_part;
  std::map<Exponent, Rational, GradedLexLess> frac_part;

  Polynomial reconstruct_numerator() const;  // (poly_part)*p + frac_part == h
};

// Lex division of h by p.  Errors when a shelved remainder term is not lex-below
// LE(p) ("mixed basis violation") or when a quotient exponent a breaks
// |a| + |LE(p)| <= 2d, or a remainder exponent breaks |b| <= 2d
// ("degree budget exceeded").
MixedBasisExpansion mixed_basis_divide(const Polynomial& h, const Polynomial& p, int half_degree);

}  // namespace sdrep::poly
