#pragma once

#include <optional>
#include <vector>

#include "sdrep/domain.hpp"
#include "sdrep/rational_function.hpp"

namespace sdrep::poly {

// Image of f and a domain under the involution p(x) = (1/x1, x2/x1, ..., xn/x1).
//
// With homogeneous parts f = h_b + ... + h_d (b = valuation, d = degree):
//   base      = h_b(1, x2, ..., xn)
//   parts[i]  = -h_{b+1+i}(1, x2, ..., xn)              (i = 0 .. d-b-1)
//   image     = base - sum_i parts[i] / x1^{i+1}
//             = x1^b * f(p(x))   as rational functions.
// All pieces live in the same n-variable ring; base and parts never involve x1.
struct PerspectiveData {
  int valuation = 0;  // b
  int degree = 0;     // d
  Polynomial base;
  std::vector<Polynomial> parts;
  RationalFunction image;        // numerator over x1^{d-b}
  std::vector<Polynomial> gens;  // transformed domain generators, same order as input
};

// x1^{deg} * g(p(x)); per-term: c x^a  ->  c x1^{deg - |a|} x2^{a2} ... xn^{an}.
// deg defaults to deg g; a larger value multiplies the image by a power of x1.
// Applying the map twice with the same deg is the identity on polynomials of
// degree deg (the perspective map is an involution).
Polynomial perspective_homogenize(const Polynomial& g, int deg = -1);

// Part of f of total degree k, with x1 set to 1: h_k(1, x2, ..., xn).
Polynomial dehomogenized_part(const Polynomial& f, int k);

// Transform f and the generators of D.  By default requires f(0) = 0 and
// grad f(0) = 0 (throws "not singular at origin"); require_singular = false
// lifts that to f(0) = 0 only.  When a sampling box is supplied, quasirandom
// points of the box lying in {x in D : f(x) >= 0} are required to satisfy
// x1 >= -tol; a violation throws (the transform is only meaningful for sets on
// one side of the hyperplane x1 = 0).
PerspectiveData perspective_transform(const Polynomial& f, const Domain& D,
                                      const std::optional<Box>& sample_box = std::nullopt,
                                      bool require_singular = true);

// Low-discrepancy points in [0,1)^dim (Halton, prime bases), index starts at 1.
std::vector<std::vector<double>> halton_points(int dim, int count);

}  // namespace sdrep::poly
