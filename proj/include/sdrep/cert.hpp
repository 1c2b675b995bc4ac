#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sdrep/conic.hpp"
#include "sdrep/domain.hpp"
#include "sdrep/rational_function.hpp"

namespace sdrep::cert {

using poly::Domain;
using poly::Exponent;
using poly::Polynomial;
using poly::Rational;
using poly::RationalFunction;

enum class Mode { QModule, Preordering };
enum class Sense { Convex, Concave };

// Feasibility question: does the first-order remainder of `target` admit a
// generator-weighted sum-of-squares identity over `domain`?  Rational targets
// are cleared by p(x) q(u); the default pair is (den(x), den(u)^2).
struct ConvexityQuery {
  RationalFunction target;
  Domain domain;
  Mode mode = Mode::QModule;
  Sense sense = Sense::Convex;
  std::optional<std::pair<Polynomial, Polynomial>> clearing;
  int degree_cap = 0;  // 0: start at the minimum degree and deepen twice
};

// One generator-product slot of an identity: multiplier * (basis^T G basis).
// The multiplier lives in the identity ring (2n variables for remainder
// identities, (x,y) for Hessian ones, n variables for univariate ones).
struct Slot {
  std::vector<int> x_tag, u_tag;  // generator index subsets; empty = unit
  Polynomial multiplier;
  std::vector<Exponent> basis;
  bool exact = false;                          // gram_q holds the matrix
  std::vector<std::vector<Rational>> gram_q;   // set when exact
  Eigen::MatrixXd gram_d;                      // always set
};

struct Certificate {
  Polynomial identity_lhs;
  std::vector<Slot> slots;
  int degree = 0;
  bool rationalized = false;  // all slots exact; residual is exactly zero
  double residual = 0.0;
};

enum class CertStatus { Success, Infeasible, SolverError };

struct CertifyResult {
  CertStatus status = CertStatus::SolverError;
  std::optional<Certificate> certificate;
  int degree = 0;  // degree reached by the search
  std::string note;
  // segment identities established as side conditions (Hessian route)
  std::vector<Certificate> side_conditions;

  bool ok() const { return status == CertStatus::Success; }
};

// Solve at increasing degrees up to the cap (degree_cap, or minimum + 2).
CertifyResult certify(const ConvexityQuery& query);

// Single-degree solve; throws if `degree` is below the identity's minimum.
CertifyResult certify_at(const ConvexityQuery& query, int degree);

// Decompose the Hessian as sum_i g_i(x) H_i(x) with H_i sums of squares,
// scalarized as y^T H y over (x, y).  For generators of degree >= 2 a segment
// identity witness is searched first and its absence is a SolverError.
CertifyResult certify_via_hessian(const Polynomial& f, const Domain& domain, Mode mode,
                                  Sense sense, int degree_cap = 0);

// Interval convexity of a univariate polynomial: f'' = s0 + (x-a) s1 + (b-x) s2
// at the fixed degree bound, which decides convexity over the interval exactly
// (Infeasible here is a disproof, not a degree limitation).
CertifyResult certify_univariate_interval(const Polynomial& f, std::optional<Rational> a,
                                          std::optional<Rational> b);

struct VerifyReport {
  bool pass = false;
  double residual = 0.0;
};

// Re-expand the identity (exactly when rationalized) and check gram matrices
// for positive semidefiniteness.
VerifyReport verify_certificate(const Certificate& c);

// Assembled feasibility problem for one degree, exposed for inspection.
conic::ConicProblem assemble(const ConvexityQuery& query, int degree);

nlohmann::json to_json(const Certificate& c);
Certificate certificate_from_json(const nlohmann::json& j);

}  // namespace sdrep::cert
