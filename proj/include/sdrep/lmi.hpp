#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sdrep/conic.hpp"
#include "sdrep/domain.hpp"
#include "sdrep/polynomial.hpp"
#include "sdrep/rational_function.hpp"

namespace sdrep::lmi {

using poly::Domain;
using poly::Exponent;
using poly::Polynomial;
using poly::Rational;
using poly::RationalFunction;

enum class Mode { QModule, Preordering };

// Affine expression over the joint variable vector (ambient point variables
// followed by lifted ones), with exact rational coefficients.
struct LinExprQ {
  Rational c;
  std::map<int, Rational> a;

  LinExprQ() : c(0) {}
  explicit LinExprQ(Rational cc) : c(std::move(cc)) {}
  static LinExprQ var(int idx, Rational coeff = Rational(1));

  void add(int idx, const Rational& coeff);
  LinExprQ& operator+=(const LinExprQ& o);
  LinExprQ& operator-=(const LinExprQ& o);
  LinExprQ& operator*=(const Rational& s);
  friend LinExprQ operator+(LinExprQ l, const LinExprQ& r) { return l += r; }
  friend LinExprQ operator-(LinExprQ l, const LinExprQ& r) { return l -= r; }
  friend LinExprQ operator*(const Rational& s, LinExprQ e) { return e *= s; }

  Rational eval(std::span<const Rational> w) const;
  double eval_d(std::span<const double> w) const;
  bool is_zero() const { return c == 0 && a.empty(); }
  bool is_constant() const { return a.empty(); }
  bool operator==(const LinExprQ& o) const { return c == o.c && a == o.a; }
};

// Symmetric matrix of affine expressions; entries stored upper-triangular.
struct Block {
  int size = 0;
  std::map<std::pair<int, int>, LinExprQ> entries;

  Block() = default;
  explicit Block(int n) : size(n) {}
  void set(int r, int c, LinExprQ e);
  void accumulate(int r, int c, const LinExprQ& e);
  const LinExprQ* find(int r, int c) const;  // nullptr when the entry is zero
  std::vector<std::vector<Rational>> eval(std::span<const Rational> w) const;
};

struct VarInfo {
  enum class Kind { Point, MomentY, MomentZ, Aux };
  std::string name;
  Kind kind = Kind::Aux;
  Exponent tag;  // unit exponent for point vars, monomial exponent for moments
};

struct LmiMeta {
  int degree = -1;
  std::string mode;
  std::string input_hash;
  std::vector<std::string> assumptions;
};

// Spectrahedral shadow: the set of ambient points x for which the lifted
// variables can be completed so that every block is positive semidefinite and
// every linear inequality holds.  Point variables occupy indices
// 0..x_dim-1 of the joint vector; `projection` lists them explicitly.
struct LiftedLMI {
  int x_dim = 0;
  std::vector<VarInfo> vars;
  std::vector<Block> blocks;
  std::vector<LinExprQ> linear_ineqs;  // each expression >= 0
  std::vector<std::pair<std::string, Rational>> normalizations;
  std::vector<int> projection;
  std::optional<Polynomial> divisor;  // z_b moments stand for x^b / divisor
  LmiMeta meta;

  int lifted_count() const { return static_cast<int>(vars.size()) - x_dim; }
};

// ---------------------------------------------------------------------------
// constructions

// Moment/localizer relaxation of S = {x in D : f(x) >= 0} at half-degree d.
// Preordering mode multiplies generator subsets (at most 8 generators);
// generator products whose degree exceeds 2d contribute no block.
LiftedLMI build_L(const Polynomial& f, const Domain& D, int d, Mode mode);

// Rational variant: moments are taken against the mixed basis attached to a
// polynomial p that is positive on the interior of D.  Lifted variables split
// into ordinary moments y_a (|a| + |lex lead of p| <= 2d) and divided moments
// z_b = x^b / p with b lexicographically below the leading exponent of p.
LiftedLMI build_R(const RationalFunction& f, const Domain& D, const Polynomial& p, int d,
                  Mode mode);

// Epigraph {(x, t) : x in D, t >= f(x)}; the scalar t is the last point
// variable.  Affine f yields a plain halfspace.  d < 0 picks the minimal
// feasible half-degree.
LiftedLMI build_epigraph(const Polynomial& f, const Domain& D, int d = -1,
                         Mode mode = Mode::QModule);

// Rational epigraph over an interval domain (one ambient variable): divided
// moment block for the denominator plus one localizer per interval generator.
// Polynomial inputs delegate to the polynomial overload.
LiftedLMI build_epigraph(const RationalFunction& f, const Domain& D, int d = -1,
                         Mode mode = Mode::QModule);

// K_{r,s} = {(w, v) >= 0 : w_1 ... w_r >= v^s} for 1 <= r <= s, as a balanced
// tower of 2x2 blocks over auxiliary geometric-mean variables.
LiftedLMI build_Krs(int r, int s);

// Structured sums  h(x) = sum_k F_k(x)^{pow_k}  with each base
// F = sum_i q_i^{s_i} / (p_1 ... p_r), s_i >= r + 1.
struct PowerFraction {
  std::vector<std::pair<Polynomial, int>> numer;  // (q_i, s_i)
  std::vector<Polynomial> denom;                  // p_j, positive on D
};
struct StructuredSum {
  std::vector<std::pair<PowerFraction, int>> terms;  // (F_k, pow_k)
};

// Without `bound`: epigraph {(x, t) : t >= h(x)} over D.  With `bound`:
// the set {x in D : bound(x) >= h(x)} in the ambient variables alone.
LiftedLMI build_structured_epigraph(const StructuredSum& h, const Domain& D,
                                    const std::optional<Polynomial>& bound = std::nullopt);

// ---------------------------------------------------------------------------
// builder utilities (shared with the singularity pipeline)

int add_aux(LiftedLMI& L, const std::string& name);

// Tower encoding  prod(legs) >= root^s  with legs, root >= 0; returns the
// number of auxiliary variables created.  Aux names use `aux_prefix` plus a
// running index starting at aux_start.  A `root >= 0` inequality is emitted
// unless the tower itself places the root on a diagonal or `root_nonneg`
// promises it is already forced elsewhere.
int append_power_cone(LiftedLMI& L, const std::vector<LinExprQ>& legs, const LinExprQ& root,
                      int s, const std::string& aux_prefix = "a", int aux_start = 1,
                      bool root_nonneg = false);

// Arrow block for  value >= q(x)  with q of degree <= 2 whose quadratic part
// M is positive semidefinite: [[value - q_aff, (L^T x)^T], [L^T x, D^{-1}]]
// from an exact LDL^T split of M.  Returns false when M is not PSD over the
// rationals (no block appended).
bool append_quadratic_epigraph(LiftedLMI& L, const LinExprQ& value, const Polynomial& q);

// Circle block [[1 + A, B], [B, 1 - A]] encoding A^2 + B^2 <= 1.
void append_circle_block(LiftedLMI& L, const LinExprQ& A, const LinExprQ& B);

// If 1 - a is the exact square of an affine polynomial (or zero), return that
// affine root.
std::optional<Polynomial> unit_deficit_sqrt(const Polynomial& a);

// Reorder the ambient coordinates: new point variable j is old perm[j].
LiftedLMI permute_ambient(const LiftedLMI& L, const std::vector<int>& perm);

// Rewrite all expressions under the substitution x_i -> x_i - shift_i (the
// LMI built in translated coordinates, expressed in original ones).
LiftedLMI shift_ambient(const LiftedLMI& L, std::span<const Rational> shift);

// ---------------------------------------------------------------------------
// evaluation / membership

// Canonical lifting of an ambient point: moments x^a and divided moments
// x^b / divisor(x).  Throws if the LMI has auxiliary variables or if a
// divided moment is present without a divisor.
std::vector<Rational> canonical_lift(const LiftedLMI& L, std::span<const Rational> x);

// Exact feasibility of the fully assigned joint vector.
bool satisfied_at(const LiftedLMI& L, std::span<const Rational> joint);

// Exact positive semidefiniteness over the rationals.
bool exact_psd(std::vector<std::vector<Rational>> A);

enum class Membership { Inside, Outside, BoundaryAmbiguous, SolverError };

struct MembershipResult {
  Membership status = Membership::SolverError;
  double margin = 0.0;
  std::optional<std::vector<double>> witness;  // joint vector when feasible
  std::string note;
};

conic::ConicProblem lmi_to_conic(const LiftedLMI& L, std::span<const double> x);

// Decide x in proj(L) by maximizing a uniform slack over the lifted
// variables.  |margin| below 10*tol reports BoundaryAmbiguous.
MembershipResult membership(const LiftedLMI& L, std::span<const double> x, double tol = 1e-7);

// ---------------------------------------------------------------------------
// boundary tracing

using Polyline = std::vector<std::array<double, 2>>;

// Marching squares over a res x res sample field (row-major, value(i,j) at
// node (x_j, y_i)); crossings of level 0 are joined into polylines.
std::vector<Polyline> trace_contour(const std::vector<double>& field, int res,
                                    const poly::Box& bbox);

// Boundary of a two-dimensional projection: membership margins sampled on the
// grid, then contoured.  Solver failures are treated as outside.
std::vector<Polyline> trace_boundary_2d(const LiftedLMI& L, const poly::Box& bbox, int res,
                                        double tol = 1e-7);

// ---------------------------------------------------------------------------
// identity / serialization

// Structural fingerprint invariant under renaming of lifted variables and
// simultaneous row/column permutation of blocks.
std::string canonical_form(const LiftedLMI& L);
bool canonically_equal(const LiftedLMI& a, const LiftedLMI& b);

nlohmann::json to_json(const LiftedLMI& L);
LiftedLMI lmi_from_json(const nlohmann::json& j);

std::string fnv1a64_hex(const std::string& s);

}  // namespace sdrep::lmi
