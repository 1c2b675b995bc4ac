#include "sdrep/lmi.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "sdrep/mixed_basis.hpp"
#include "sdrep/perspective.hpp"
#include "sdrep/poly_io.hpp"

namespace sdrep::lmi {

using poly::exp_add;
using poly::exp_deg;
using poly::GradedLexLess;

// ---------------------------------------------------------------------------
// LinExprQ / Block

LinExprQ LinExprQ::var(int idx, Rational coeff) {
  LinExprQ e;
  e.add(idx, coeff);
  return e;
}

void LinExprQ::add(int idx, const Rational& coeff) {
  if (coeff == 0) return;
  auto [it, fresh] = a.try_emplace(idx, coeff);
  if (!fresh) {
    it->second += coeff;
    if (it->second == 0) a.erase(it);
  }
}

LinExprQ& LinExprQ::operator+=(const LinExprQ& o) {
  c += o.c;
  for (const auto& [v, cf] : o.a) add(v, cf);
  return *this;
}

LinExprQ& LinExprQ::operator-=(const LinExprQ& o) {
  c -= o.c;
  for (const auto& [v, cf] : o.a) add(v, -cf);
  return *this;
}

LinExprQ& LinExprQ::operator*=(const Rational& s) {
  if (s == 0) return *this = LinExprQ();
  c *= s;
  for (auto& [v, cf] : a) cf *= s;
  return *this;
}

Rational LinExprQ::eval(std::span<const Rational> w) const {
  Rational r = c;
  for (const auto& [v, cf] : a) r += cf * w[v];
  return r;
}

double LinExprQ::eval_d(std::span<const double> w) const {
  double r = c.get_d();
  for (const auto& [v, cf] : a) r += cf.get_d() * w[v];
  return r;
}

void Block::set(int r, int c, LinExprQ e) {
  auto key = std::minmax(r, c);
  if (e.is_zero())
    entries.erase({key.first, key.second});
  else
    entries[{key.first, key.second}] = std::move(e);
}

void Block::accumulate(int r, int c, const LinExprQ& e) {
  auto key = std::minmax(r, c);
  auto& slot = entries[{key.first, key.second}];
  slot += e;
  if (slot.is_zero()) entries.erase({key.first, key.second});
}

const LinExprQ* Block::find(int r, int c) const {
  auto key = std::minmax(r, c);
  auto it = entries.find({key.first, key.second});
  return it == entries.end() ? nullptr : &it->second;
}

std::vector<std::vector<Rational>> Block::eval(std::span<const Rational> w) const {
  std::vector<std::vector<Rational>> m(size, std::vector<Rational>(size, Rational(0)));
  for (const auto& [rc, e] : entries) m[rc.first][rc.second] = m[rc.second][rc.first] = e.eval(w);
  return m;
}

// ---------------------------------------------------------------------------
// small helpers

std::string fnv1a64_hex(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string rat_str(const Rational& r) { return r.get_str(); }

std::string tag_digits(const Exponent& e) {
  if (e.size() == 1) return std::to_string(e[0]);
  bool wide = false;
  for (int k : e)
    if (k > 9) wide = true;
  std::string s;
  for (size_t i = 0; i < e.size(); ++i) {
    if (i && wide) s += '_';
    s += std::to_string(e[i]);
  }
  return s;
}

std::string moment_name(char prefix, const Exponent& e) {
  return std::string(1, prefix) + tag_digits(e);
}

Exponent unit_exp(int n, int i) {
  Exponent e(n, 0);
  e[i] = 1;
  return e;
}

int single_var_of(const Exponent& e) {
  for (size_t i = 0; i < e.size(); ++i)
    if (e[i]) return static_cast<int>(i);
  throw std::logic_error("constant exponent has no variable");
}

std::optional<Rational> rational_sqrt(const Rational& r) {
  if (r < 0) return std::nullopt;
  mpz_class num = r.get_num(), den = r.get_den();
  if (!mpz_perfect_square_p(num.get_mpz_t()) || !mpz_perfect_square_p(den.get_mpz_t()))
    return std::nullopt;
  mpz_class sn, sd;
  mpz_sqrt(sn.get_mpz_t(), num.get_mpz_t());
  mpz_sqrt(sd.get_mpz_t(), den.get_mpz_t());
  return Rational(sn) / Rational(sd);
}

// Affine polynomial as an expression over the point variables (x_i -> var i).
LinExprQ affine_expr(const Polynomial& p) {
  if (!p.is_affine()) throw std::logic_error("affine expression requested for a nonaffine polynomial");
  LinExprQ e;
  for (const auto& [a, c] : p.terms()) {
    if (exp_deg(a) == 0)
      e.c += c;
    else
      e.add(single_var_of(a), c);
  }
  return e;
}

// Moments indexed by exponent; degree 0 and 1 fold to the constant 1 and the
// point variables.
struct MomentTable {
  std::map<Exponent, int, GradedLexLess> y, z;

  LinExprQ yexpr(const Exponent& a) const {
    int deg = exp_deg(a);
    if (deg == 0) return LinExprQ(Rational(1));
    if (deg == 1) return LinExprQ::var(single_var_of(a));
    auto it = y.find(a);
    if (it == y.end()) throw std::logic_error("moment outside the table: " + tag_digits(a));
    return LinExprQ::var(it->second);
  }

  LinExprQ zexpr(const Exponent& b) const {
    auto it = z.find(b);
    if (it == z.end()) throw std::logic_error("divided moment outside the table: " + tag_digits(b));
    return LinExprQ::var(it->second);
  }

  LinExprQ of(const poly::MixedBasisExpansion& e) const {
    LinExprQ out;
    for (const auto& [a, c] : e.poly_part) out += c * yexpr(a);
    for (const auto& [b, c] : e.frac_part) out += c * zexpr(b);
    return out;
  }

  LinExprQ of_poly(const Polynomial& h) const {
    LinExprQ out;
    for (const auto& [a, c] : h.terms()) out += c * yexpr(a);
    return out;
  }
};

// Generator products forming the block slots: the unit plus each generator in
// q-module mode, every subset product in preordering mode.
std::vector<Polynomial> generator_products(const Domain& D, Mode mode) {
  int m = static_cast<int>(D.gens.size());
  std::vector<Polynomial> out;
  if (mode == Mode::QModule) {
    out.push_back(Polynomial::constant(D.nvars, 1));
    for (const auto& g : D.gens) out.push_back(g);
  } else {
    if (m > 8) throw std::invalid_argument("preordering mode is limited to 8 generators");
    for (int mask = 0; mask < (1 << m); ++mask) {
      Polynomial g = Polynomial::constant(D.nvars, 1);
      for (int i = 0; i < m; ++i)
        if (mask & (1 << i)) g = g * D.gens[i];
      out.push_back(g);
    }
  }
  return out;
}

int half_deg(const Polynomial& g) { return (g.degree() + 1) / 2; }

std::string mode_name(Mode mode) { return mode == Mode::QModule ? "qmod" : "pre"; }

std::string domain_text(const Domain& D) {
  std::string s = "n=" + std::to_string(D.nvars);
  for (const auto& g : D.gens) s += ";" + poly::to_text(g);
  return s;
}

void init_points(LiftedLMI& L, int n, bool with_t) {
  L.x_dim = n + (with_t ? 1 : 0);
  for (int i = 0; i < n; ++i)
    L.vars.push_back({"x" + std::to_string(i + 1), VarInfo::Kind::Point, unit_exp(L.x_dim, i)});
  if (with_t) L.vars.push_back({"t", VarInfo::Kind::Point, unit_exp(L.x_dim, n)});
  L.projection.resize(L.x_dim);
  std::iota(L.projection.begin(), L.projection.end(), 0);
}

// Moment variable roster plus localizer blocks for a polynomial relaxation.
MomentTable make_moment_core(LiftedLMI& L, const Domain& D, int d, Mode mode, bool with_t,
                             std::vector<std::string>& notes) {
  int n = D.nvars;
  init_points(L, n, with_t);
  MomentTable tab;
  for (const auto& a : poly::monomial_exponents(n, 2 * d)) {
    if (exp_deg(a) < 2) continue;
    tab.y[a] = static_cast<int>(L.vars.size());
    L.vars.push_back({moment_name('y', a), VarInfo::Kind::MomentY, a});
  }
  for (const auto& g : generator_products(D, mode)) {
    int dg = half_deg(g);
    if (d - dg < 0) {
      notes.push_back("generator product " + poly::to_text(g) + " inactive at half-degree " +
                      std::to_string(d));
      continue;
    }
    auto basis = poly::monomial_exponents(n, d - dg);
    Block blk(static_cast<int>(basis.size()));
    for (size_t r = 0; r < basis.size(); ++r)
      for (size_t c = r; c < basis.size(); ++c) {
        LinExprQ e;
        for (const auto& [gamma, cf] : g.terms())
          e += cf * tab.yexpr(exp_add(gamma, exp_add(basis[r], basis[c])));
        blk.set(static_cast<int>(r), static_cast<int>(c), std::move(e));
      }
    L.blocks.push_back(std::move(blk));
  }
  L.normalizations.emplace_back(moment_name('y', Exponent(n, 0)), Rational(1));
  return tab;
}

// Interior sample of the domain inside [-3,3]^n (strictly positive generator
// values); best effort, possibly fewer than `want` points.
std::vector<std::vector<double>> domain_sample(const Domain& D, int want) {
  auto u = poly::halton_points(D.nvars, want * 8);
  std::vector<std::vector<double>> pts;
  for (const auto& row : u) {
    std::vector<double> x(D.nvars);
    for (int i = 0; i < D.nvars; ++i) x[i] = 6.0 * row[i] - 3.0;
    bool ok = true;
    for (const auto& g : D.gens)
      if (g.eval_d(x) <= 1e-9) ok = false;
    if (ok) pts.push_back(std::move(x));
    if (static_cast<int>(pts.size()) >= want) break;
  }
  return pts;
}

}  // namespace

// ---------------------------------------------------------------------------
// build_L

LiftedLMI build_L(const Polynomial& f, const Domain& D, int d, Mode mode) {
  if (f.nvars() != D.nvars) throw std::invalid_argument("polynomial/domain ring mismatch");
  if (d < 1) throw std::invalid_argument("half-degree must be at least 1");
  if (f.degree() > 2 * d) throw std::invalid_argument("polynomial degree exceeds 2d");
  LiftedLMI L;
  std::vector<std::string> notes;
  MomentTable tab = make_moment_core(L, D, d, mode, false, notes);
  L.linear_ineqs.push_back(tab.of_poly(f));
  L.meta.degree = d;
  L.meta.mode = mode_name(mode);
  L.meta.assumptions = std::move(notes);
  L.meta.input_hash = fnv1a64_hex("L;" + poly::to_text(f) + ";" + domain_text(D) + ";d=" +
                                  std::to_string(d) + ";" + L.meta.mode);
  return L;
}

// ---------------------------------------------------------------------------
// build_R

LiftedLMI build_R(const RationalFunction& f, const Domain& D, const Polynomial& p, int d,
                  Mode mode) {
  int n = D.nvars;
  if (f.num.nvars() != n || p.nvars() != n)
    throw std::invalid_argument("rational function/domain ring mismatch");
  if (d < 1) throw std::invalid_argument("half-degree must be at least 1");

  if (p.degree() == 0) {
    // constant positive p: plain moment relaxation
    Rational pc = p.coeff(Exponent(n, 0));
    if (pc <= 0) throw std::invalid_argument("constant denominator must be positive");
    if (f.den.degree() != 0) throw std::invalid_argument("denominator does not divide p");
    Rational dc = f.den.coeff(Exponent(n, 0));
    return build_L(f.num * Polynomial::constant(n, 1 / dc), D, d, mode);
  }

  Exponent lead = p.lex_leading_exponent();
  if (exp_deg(lead) > 2 * d)
    throw std::invalid_argument("half-degree too small for the mixed basis of p");

  std::vector<std::string> notes;
  auto pts = domain_sample(D, 100);
  for (const auto& x : pts)
    if (p.eval_d(x) <= 1e-12)
      throw std::invalid_argument("denominator polynomial is not positive on the domain sample");
  notes.push_back(pts.empty() ? "domain interior sample empty; positivity of p unchecked"
                              : "p positive on the domain interior (sampled " +
                                    std::to_string(pts.size()) + " points)");

  // symbolic pass: mixed-basis expansion of every block entry and of f
  struct SlotExp {
    std::vector<Exponent> basis;
    std::map<std::pair<int, int>, poly::MixedBasisExpansion> ent;
  };
  std::vector<SlotExp> slots;
  for (const auto& g : generator_products(D, mode)) {
    int dg = half_deg(g);
    if (d - dg < 0) {
      notes.push_back("generator product " + poly::to_text(g) + " inactive at half-degree " +
                      std::to_string(d));
      continue;
    }
    SlotExp se;
    se.basis = poly::monomial_exponents(n, d - dg);
    int sz = static_cast<int>(se.basis.size());
    for (int r = 0; r < sz; ++r)
      for (int c = r; c < sz; ++c) {
        Polynomial h = g * Polynomial::monomial(n, exp_add(se.basis[r], se.basis[c]), Rational(1));
        se.ent[{r, c}] = poly::mixed_basis_divide(h, p, d);
      }
    slots.push_back(std::move(se));
  }
  auto mult = poly::exact_divide(p, f.den);
  if (!mult) throw std::invalid_argument("denominator of f does not divide p");
  poly::MixedBasisExpansion frow = poly::mixed_basis_divide(f.num * *mult, p, d);

  // variable roster: complete moments up to 2d - |lead|, divided moments as used
  LiftedLMI L;
  init_points(L, n, false);
  MomentTable tab;
  for (const auto& a : poly::monomial_exponents(n, 2 * d - exp_deg(lead))) {
    if (exp_deg(a) < 2) continue;
    tab.y[a] = static_cast<int>(L.vars.size());
    L.vars.push_back({moment_name('y', a), VarInfo::Kind::MomentY, a});
  }
  std::map<Exponent, int, GradedLexLess> zs;
  auto note_z = [&](const poly::MixedBasisExpansion& e) {
    for (const auto& [b, c] : e.frac_part) zs.emplace(b, 0);
  };
  for (const auto& se : slots)
    for (const auto& [rc, e] : se.ent) note_z(e);
  note_z(frow);
  for (auto& [b, idx] : zs) {
    idx = static_cast<int>(L.vars.size());
    tab.z[b] = idx;
    L.vars.push_back({moment_name('z', b), VarInfo::Kind::MomentZ, b});
  }

  for (const auto& se : slots) {
    Block blk(static_cast<int>(se.basis.size()));
    for (const auto& [rc, e] : se.ent) blk.set(rc.first, rc.second, tab.of(e));
    L.blocks.push_back(std::move(blk));
  }
  L.linear_ineqs.push_back(tab.of(frow));
  L.normalizations.emplace_back(moment_name('y', Exponent(n, 0)), Rational(1));
  L.divisor = p;
  L.meta.degree = d;
  L.meta.mode = mode_name(mode);
  L.meta.assumptions = std::move(notes);
  L.meta.input_hash =
      fnv1a64_hex("R;" + poly::to_text(f) + ";p=" + poly::to_text(p) + ";" + domain_text(D) +
                  ";d=" + std::to_string(d) + ";" + L.meta.mode);
  return L;
}

// ---------------------------------------------------------------------------
// epigraphs

LiftedLMI build_epigraph(const Polynomial& f, const Domain& D, int d, Mode mode) {
  int n = D.nvars;
  if (f.nvars() != n) throw std::invalid_argument("polynomial/domain ring mismatch");
  LiftedLMI L;
  if (f.is_affine()) {
    init_points(L, n, true);
    LinExprQ row = LinExprQ::var(n);
    row -= affine_expr(f);
    L.linear_ineqs.push_back(std::move(row));
    for (const auto& g : D.gens) {
      if (!g.is_affine())
        throw std::invalid_argument("affine epigraph over a nonaffine domain needs a degree");
      L.linear_ineqs.push_back(affine_expr(g));
    }
    L.meta.degree = 0;
    L.meta.mode = "affine";
    L.meta.input_hash =
        fnv1a64_hex("E;" + poly::to_text(f) + ";" + domain_text(D) + ";affine");
    return L;
  }
  int dmin = std::max(1, (f.degree() + 1) / 2);
  for (const auto& g : D.gens) dmin = std::max(dmin, half_deg(g));
  if (d < 0) d = dmin;
  if (f.degree() > 2 * d) throw std::invalid_argument("polynomial degree exceeds 2d");
  std::vector<std::string> notes;
  MomentTable tab = make_moment_core(L, D, d, mode, true, notes);
  LinExprQ row = LinExprQ::var(n);
  row -= tab.of_poly(f);
  L.linear_ineqs.push_back(std::move(row));
  L.meta.degree = d;
  L.meta.mode = mode_name(mode);
  L.meta.assumptions = std::move(notes);
  L.meta.input_hash = fnv1a64_hex("E;" + poly::to_text(f) + ";" + domain_text(D) + ";d=" +
                                  std::to_string(d) + ";" + L.meta.mode);
  return L;
}

LiftedLMI build_epigraph(const RationalFunction& f, const Domain& D, int d, Mode mode) {
  if (f.is_polynomial()) return build_epigraph(f.as_polynomial(), D, d, mode);
  if (f.den.degree() == 0) {
    Rational dc = f.den.coeff(Exponent(f.den.nvars(), 0));
    return build_epigraph(f.num * Polynomial::constant(f.num.nvars(), 1 / dc), D, d, mode);
  }
  int n = D.nvars;
  if (n != 1)
    throw std::invalid_argument(
        "rational epigraphs are univariate; use a structured decomposition otherwise");
  if (f.num.nvars() != 1) throw std::invalid_argument("rational function/domain ring mismatch");

  Polynomial num = f.num, p = f.den;
  for (const auto& g : D.gens)
    if (g.degree() > 2)
      throw std::invalid_argument("interval generators must have degree at most 2");

  // sample box from affine generators, default [-3,3]
  double lo = -3.0, hi = 3.0;
  for (const auto& g : D.gens) {
    if (!g.is_affine()) continue;
    double c0 = g.coeff(Exponent(1, 0)).get_d();
    double c1 = g.coeff(Exponent{1}).get_d();
    if (c1 > 0)
      lo = std::max(lo, -c0 / c1);
    else if (c1 < 0)
      hi = std::min(hi, -c0 / c1);
  }
  std::vector<double> samples;
  if (lo < hi) {
    for (const auto& row : poly::halton_points(1, 400)) {
      double x = lo + row[0] * (hi - lo);
      std::vector<double> xv{x};
      bool ok = true;
      for (const auto& g : D.gens)
        if (g.eval_d(xv) <= 1e-9) ok = false;
      if (ok) samples.push_back(x);
      if (samples.size() >= 100) break;
    }
  }
  std::vector<std::string> notes;
  if (!samples.empty()) {
    int neg = 0, pos = 0;
    for (double x : samples) {
      std::vector<double> xv{x};
      double v = p.eval_d(xv);
      (v < 0 ? neg : pos)++;
      if (std::abs(v) <= 1e-12)
        throw std::invalid_argument("denominator vanishes on the domain sample");
    }
    if (neg && pos) throw std::invalid_argument("denominator changes sign on the domain");
    if (neg) {
      num = -num;
      p = -p;
    }
    notes.push_back("denominator positive on the domain (sampled " +
                    std::to_string(samples.size()) + " points)");
  } else {
    notes.push_back("domain sample empty; denominator sign unchecked");
  }

  int dmin = std::max({1, (p.degree() + 2) / 2, (num.degree() + 1) / 2});
  for (const auto& g : D.gens) dmin = std::max(dmin, half_deg(g));
  if (d < 0) d = dmin;
  if (d < dmin)
    throw std::invalid_argument("half-degree below the minimum " + std::to_string(dmin));

  // symbolic pass
  std::map<std::pair<int, int>, poly::MixedBasisExpansion> q0;
  for (int r = 0; r <= d; ++r)
    for (int c = r; c <= d; ++c)
      q0[{r, c}] = poly::mixed_basis_divide(Polynomial::monomial(1, Exponent{r + c}, Rational(1)),
                                            p, d);
  poly::MixedBasisExpansion hrow = poly::mixed_basis_divide(num, p, d);
  struct Loc {
    std::vector<Exponent> basis;
    std::map<std::pair<int, int>, Polynomial> ent;
  };
  std::vector<Loc> locs;
  for (const auto& g : D.gens) {
    int dg = half_deg(g);
    if (d - dg < 0) {
      notes.push_back("generator " + poly::to_text(g) + " inactive at half-degree " +
                      std::to_string(d));
      continue;
    }
    Loc lc;
    lc.basis = poly::monomial_exponents(1, d - dg);
    int sz = static_cast<int>(lc.basis.size());
    for (int r = 0; r < sz; ++r)
      for (int c = r; c < sz; ++c)
        lc.ent[{r, c}] =
            g * Polynomial::monomial(1, exp_add(lc.basis[r], lc.basis[c]), Rational(1));
    locs.push_back(std::move(lc));
  }

  // rosters: moments actually appearing
  std::map<Exponent, int, GradedLexLess> ys, zs;
  auto note_exp = [&](const poly::MixedBasisExpansion& e) {
    for (const auto& [a, c] : e.poly_part)
      if (exp_deg(a) >= 2) ys.emplace(a, 0);
    for (const auto& [b, c] : e.frac_part) zs.emplace(b, 0);
  };
  for (const auto& [rc, e] : q0) note_exp(e);
  note_exp(hrow);
  for (const auto& lc : locs)
    for (const auto& [rc, h] : lc.ent)
      for (const auto& [a, c] : h.terms())
        if (exp_deg(a) >= 2) ys.emplace(a, 0);

  LiftedLMI L;
  init_points(L, 1, true);
  MomentTable tab;
  for (auto& [a, idx] : ys) {
    idx = static_cast<int>(L.vars.size());
    tab.y[a] = idx;
    L.vars.push_back({moment_name('y', a), VarInfo::Kind::MomentY, a});
  }
  for (auto& [b, idx] : zs) {
    idx = static_cast<int>(L.vars.size());
    tab.z[b] = idx;
    L.vars.push_back({moment_name('z', b), VarInfo::Kind::MomentZ, b});
  }

  Block blk(d + 1);
  for (const auto& [rc, e] : q0) blk.set(rc.first, rc.second, tab.of(e));
  L.blocks.push_back(std::move(blk));
  for (const auto& lc : locs) {
    Block lb(static_cast<int>(lc.basis.size()));
    for (const auto& [rc, h] : lc.ent) lb.set(rc.first, rc.second, tab.of_poly(h));
    L.blocks.push_back(std::move(lb));
  }
  LinExprQ row = LinExprQ::var(1);
  row -= tab.of(hrow);
  L.linear_ineqs.push_back(std::move(row));
  L.normalizations.emplace_back("y0", Rational(1));
  L.divisor = p;
  L.meta.degree = d;
  L.meta.mode = "qmod";
  L.meta.assumptions = std::move(notes);
  L.meta.input_hash = fnv1a64_hex("Eq;" + poly::to_text(f) + ";" + domain_text(D) + ";d=" +
                                  std::to_string(d));
  return L;
}

// ---------------------------------------------------------------------------
// power-cone towers

int add_aux(LiftedLMI& L, const std::string& name) {
  L.vars.push_back({name, VarInfo::Kind::Aux, {}});
  return static_cast<int>(L.vars.size()) - 1;
}

int append_power_cone(LiftedLMI& L, const std::vector<LinExprQ>& legs, const LinExprQ& root,
                      int s, const std::string& aux_prefix, int aux_start, bool root_nonneg) {
  int r = static_cast<int>(legs.size());
  if (r < 1 || s < r) throw std::invalid_argument("power cone requires 1 <= r <= s");
  if (s == 1) {
    LinExprQ row = legs[0];
    row -= root;
    L.linear_ineqs.push_back(std::move(row));
    if (!root_nonneg) L.linear_ineqs.push_back(root);
    return 0;
  }
  unsigned K = std::bit_ceil(static_cast<unsigned>(s));
  std::vector<LinExprQ> level = legs;
  for (unsigned i = 0; i < K - static_cast<unsigned>(s); ++i) level.push_back(root);
  for (int i = 0; i < s - r; ++i) level.push_back(LinExprQ(Rational(1)));
  bool root_on_diag = K > static_cast<unsigned>(s);
  int created = 0;
  while (level.size() > 2) {
    std::vector<LinExprQ> next;
    for (size_t i = 0; i < level.size(); i += 2) {
      int av = add_aux(L, aux_prefix + std::to_string(aux_start + created));
      ++created;
      Block b(2);
      b.set(0, 0, level[i]);
      b.set(0, 1, LinExprQ::var(av));
      b.set(1, 1, level[i + 1]);
      L.blocks.push_back(std::move(b));
      next.push_back(LinExprQ::var(av));
    }
    level = std::move(next);
  }
  Block b(2);
  b.set(0, 0, level[0]);
  b.set(0, 1, root);
  b.set(1, 1, level[1]);
  L.blocks.push_back(std::move(b));
  if (!root_on_diag && !root_nonneg) L.linear_ineqs.push_back(root);
  return created;
}

LiftedLMI build_Krs(int r, int s) {
  if (r < 1 || s < r) throw std::invalid_argument("build_Krs requires 1 <= r <= s");
  LiftedLMI L;
  L.x_dim = r + 1;
  for (int i = 0; i < r; ++i)
    L.vars.push_back({"w" + std::to_string(i + 1), VarInfo::Kind::Point, unit_exp(r + 1, i)});
  L.vars.push_back({"v", VarInfo::Kind::Point, unit_exp(r + 1, r)});
  L.projection.resize(L.x_dim);
  std::iota(L.projection.begin(), L.projection.end(), 0);
  if (r == 1 && s == 1) {
    LinExprQ row = LinExprQ::var(0);
    row -= LinExprQ::var(1);
    L.linear_ineqs.push_back(std::move(row));
    L.linear_ineqs.push_back(LinExprQ::var(1));
    L.linear_ineqs.push_back(LinExprQ::var(0));
  } else {
    std::vector<LinExprQ> legs;
    for (int i = 0; i < r; ++i) legs.push_back(LinExprQ::var(i));
    append_power_cone(L, legs, LinExprQ::var(r), s);
  }
  L.meta.degree = -1;
  L.meta.mode = "krs";
  L.meta.input_hash = fnv1a64_hex("K;" + std::to_string(r) + ";" + std::to_string(s));
  return L;
}

// ---------------------------------------------------------------------------
// quadratic folds

bool append_quadratic_epigraph(LiftedLMI& L, const LinExprQ& value, const Polynomial& q) {
  if (q.degree() > 2)
    throw std::invalid_argument("quadratic epigraph fold needs degree at most 2");
  if (q.is_affine()) {
    LinExprQ row = value;
    row -= affine_expr(q);
    L.linear_ineqs.push_back(std::move(row));
    return true;
  }
  int n = q.nvars();
  Rational c0 = q.coeff(Exponent(n, 0));
  std::vector<Rational> lin(n, Rational(0));
  std::vector<std::vector<Rational>> M(n, std::vector<Rational>(n, Rational(0)));
  for (const auto& [a, c] : q.terms()) {
    int deg = exp_deg(a);
    if (deg == 1) {
      lin[single_var_of(a)] = c;
    } else if (deg == 2) {
      int i = -1, j = -1;
      for (int k = 0; k < n; ++k) {
        if (a[k] == 2) i = j = k;
        if (a[k] == 1) (i < 0 ? i : j) = k;
      }
      if (i == j)
        M[i][i] = c;
      else
        M[i][j] = M[j][i] = c / 2;
    }
  }
  // exact pivoted LDL^T; fails when M is not PSD
  std::vector<std::pair<std::vector<Rational>, Rational>> pivots;
  for (;;) {
    int k = -1;
    for (int i = 0; i < n; ++i) {
      if (M[i][i] < 0) return false;
      if (k < 0 && M[i][i] > 0) k = i;
    }
    if (k < 0) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (M[i][j] != 0) return false;
      break;
    }
    Rational dk = M[k][k];
    std::vector<Rational> u(n);
    for (int i = 0; i < n; ++i) u[i] = M[i][k] / dk;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M[i][j] -= dk * u[i] * u[j];
    pivots.emplace_back(std::move(u), dk);
  }
  int m = static_cast<int>(pivots.size());
  Block b(1 + m);
  LinExprQ corner = value;
  corner.c -= c0;
  for (int i = 0; i < n; ++i) corner.add(i, -lin[i]);
  b.set(0, 0, std::move(corner));
  for (int j = 0; j < m; ++j) {
    LinExprQ col;
    for (int i = 0; i < n; ++i) col.add(i, pivots[j].first[i]);
    b.set(0, 1 + j, std::move(col));
    b.set(1 + j, 1 + j, LinExprQ(1 / pivots[j].second));
  }
  L.blocks.push_back(std::move(b));
  return true;
}

void append_circle_block(LiftedLMI& L, const LinExprQ& A, const LinExprQ& B) {
  Block b(2);
  LinExprQ d0(Rational(1)), d1(Rational(1));
  d0 += A;
  d1 -= A;
  b.set(0, 0, std::move(d0));
  b.set(0, 1, B);
  b.set(1, 1, std::move(d1));
  L.blocks.push_back(std::move(b));
}

std::optional<Polynomial> unit_deficit_sqrt(const Polynomial& a) {
  int n = a.nvars();
  Polynomial A = Polynomial::constant(n, 1) - a;
  if (A.is_zero()) return Polynomial(n);
  if (A.degree() > 2) return std::nullopt;
  Rational c00 = A.coeff(Exponent(n, 0));
  auto alpha = rational_sqrt(c00);
  if (!alpha) return std::nullopt;
  Polynomial ell = Polynomial::constant(n, *alpha);
  if (*alpha != 0) {
    for (int i = 0; i < n; ++i) {
      Rational li = A.coeff(unit_exp(n, i));
      if (li != 0)
        ell = ell + Polynomial::monomial(n, unit_exp(n, i), li / (2 * *alpha));
    }
  } else {
    int i0 = -1;
    for (int i = 0; i < n && i0 < 0; ++i) {
      Exponent sq(n, 0);
      sq[i] = 2;
      if (A.coeff(sq) != 0) i0 = i;
    }
    if (i0 < 0) return std::nullopt;
    Exponent sq(n, 0);
    sq[i0] = 2;
    auto b0 = rational_sqrt(A.coeff(sq));
    if (!b0) return std::nullopt;
    ell = Polynomial::monomial(n, unit_exp(n, i0), *b0);
    for (int j = 0; j < n; ++j) {
      if (j == i0) continue;
      Rational cj = A.coeff(exp_add(unit_exp(n, i0), unit_exp(n, j)));
      if (cj != 0) ell = ell + Polynomial::monomial(n, unit_exp(n, j), cj / (2 * *b0));
    }
  }
  if (ell * ell == A) return ell;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// structured epigraphs

namespace {

struct StructuredBuilder {
  LiftedLMI& L;
  int u_cnt = 1, w_cnt = 1, v_cnt = 1, s_cnt = 1, a_cnt = 1;

  LinExprQ denominator_leg(const Polynomial& p) {
    if (p.is_affine()) return affine_expr(p);
    int wv = add_aux(L, "w" + std::to_string(w_cnt++));
    LinExprQ neg;
    neg.add(wv, Rational(-1));
    if (!append_quadratic_epigraph(L, neg, -p))
      throw std::invalid_argument("denominators must be affine or concave quadratic");
    return LinExprQ::var(wv);
  }

  // expression forced to dominate q, on a block diagonal when auxiliary
  std::pair<LinExprQ, bool> numerator_root(const Polynomial& q) {
    if (q.is_affine()) return {affine_expr(q), false};
    int uv = add_aux(L, "u" + std::to_string(u_cnt++));
    if (!append_quadratic_epigraph(L, LinExprQ::var(uv), q))
      throw std::invalid_argument("term bases must be affine or convex quadratic");
    return {LinExprQ::var(uv), true};
  }

  // constraints forcing value >= F(x)
  void emit_fraction(const PowerFraction& F, const LinExprQ& value) {
    int r = static_cast<int>(F.denom.size());
    int P = static_cast<int>(F.numer.size());
    if (P < 1) throw std::invalid_argument("structured fraction needs at least one term");
    for (const auto& [q, s] : F.numer)
      if (s < r + 1) throw std::invalid_argument("term power below denominator count + 1");

    bool arrow = r == 1 && F.denom[0].is_affine();
    if (arrow)
      for (const auto& [q, s] : F.numer) arrow = arrow && s == 2 && q.is_affine();
    if (arrow) {
      Block b(P + 1);
      LinExprQ pe = affine_expr(F.denom[0]);
      for (int i = 0; i < P; ++i) {
        b.set(i, i, pe);
        b.set(i, P, affine_expr(F.numer[i].first));
      }
      b.set(P, P, value);
      L.blocks.push_back(std::move(b));
      return;
    }

    std::vector<LinExprQ> wlegs;
    for (const auto& p : F.denom) wlegs.push_back(denominator_leg(p));
    std::vector<LinExprQ> vs;
    if (P == 1) {
      vs.push_back(value);
    } else {
      LinExprQ row = value;
      for (int i = 0; i < P; ++i) {
        int vv = add_aux(L, "v" + std::to_string(v_cnt++));
        vs.push_back(LinExprQ::var(vv));
        row.add(vv, Rational(-1));
      }
      L.linear_ineqs.push_back(std::move(row));
    }
    for (int i = 0; i < P; ++i) {
      auto [root, diag] = numerator_root(F.numer[i].first);
      std::vector<LinExprQ> legs{vs[i]};
      for (const auto& wl : wlegs) legs.push_back(wl);
      a_cnt += append_power_cone(L, legs, root, F.numer[i].second, "a", a_cnt, diag);
    }
  }
};

bool expr_on_some_diagonal(const LiftedLMI& L, const LinExprQ& e) {
  for (const auto& blk : L.blocks)
    for (const auto& [rc, entry] : blk.entries)
      if (rc.first == rc.second && entry == e) return true;
  return false;
}

std::string structured_text(const StructuredSum& h, const std::optional<Polynomial>& bound) {
  std::string s;
  for (const auto& [F, b] : h.terms) {
    s += "term^" + std::to_string(b) + "{";
    for (const auto& [q, e] : F.numer) s += "(" + poly::to_text(q) + ")^" + std::to_string(e) + "+";
    s += "}/(";
    for (const auto& p : F.denom) s += "(" + poly::to_text(p) + ")";
    s += ");";
  }
  if (bound) s += "bound=" + poly::to_text(*bound);
  return s;
}

}  // namespace

LiftedLMI build_structured_epigraph(const StructuredSum& h, const Domain& D,
                                    const std::optional<Polynomial>& bound) {
  int n = D.nvars;
  if (h.terms.empty()) throw std::invalid_argument("structured sum needs at least one term");
  for (const auto& [F, b] : h.terms) {
    if (b < 1) throw std::invalid_argument("term exponent must be positive");
    for (const auto& [q, s] : F.numer)
      if (q.nvars() != n) throw std::invalid_argument("structured term ring mismatch");
    for (const auto& p : F.denom)
      if (p.nvars() != n) throw std::invalid_argument("structured term ring mismatch");
  }
  if (bound && bound->nvars() != n) throw std::invalid_argument("bound ring mismatch");

  LiftedLMI L;
  bool has_t = !bound.has_value();
  init_points(L, n, has_t);
  StructuredBuilder sb{L};
  size_t nterms = h.terms.size();

  // circle fold: bound 1 - ell^2 against at most two squared values
  std::optional<Polynomial> ell;
  bool circle = false;
  if (bound) {
    ell = unit_deficit_sqrt(*bound);
    if (ell) {
      bool all2 = true;
      for (const auto& [F, b] : h.terms) all2 = all2 && b == 2;
      size_t slots = nterms + (ell->is_zero() ? 0 : 1);
      circle = all2 && slots <= 2;
    }
  }

  if (circle) {
    std::vector<LinExprQ> slots;
    for (const auto& [F, b] : h.terms) {
      int uv = add_aux(L, "u" + std::to_string(sb.u_cnt++));
      sb.emit_fraction(F, LinExprQ::var(uv));
      slots.push_back(LinExprQ::var(uv));
    }
    if (!ell->is_zero()) slots.push_back(affine_expr(*ell));
    append_circle_block(L, slots[0], slots.size() > 1 ? slots[1] : LinExprQ());
  } else {
    bool single_plain = nterms == 1 && has_t;
    std::vector<LinExprQ> taus;
    for (const auto& [F, b] : h.terms) {
      if (b == 1) {
        if (single_plain) {
          sb.emit_fraction(F, LinExprQ::var(n));
        } else {
          int uv = add_aux(L, "u" + std::to_string(sb.u_cnt++));
          sb.emit_fraction(F, LinExprQ::var(uv));
          taus.push_back(LinExprQ::var(uv));
        }
      } else {
        LinExprQ tslot;
        if (single_plain) {
          tslot = LinExprQ::var(n);
        } else {
          int sv = add_aux(L, "s" + std::to_string(sb.s_cnt++));
          tslot = LinExprQ::var(sv);
          taus.push_back(tslot);
        }
        int uv = add_aux(L, "u" + std::to_string(sb.u_cnt++));
        sb.emit_fraction(F, LinExprQ::var(uv));
        sb.a_cnt += append_power_cone(L, {tslot}, LinExprQ::var(uv), b, "a", sb.a_cnt, true);
      }
    }
    if (!single_plain) {
      if (has_t) {
        LinExprQ row = LinExprQ::var(n);
        for (const auto& tau : taus) row -= tau;
        L.linear_ineqs.push_back(std::move(row));
      } else if (bound->is_affine()) {
        LinExprQ row = affine_expr(*bound);
        for (const auto& tau : taus) row -= tau;
        L.linear_ineqs.push_back(std::move(row));
      } else if (taus.size() == 1) {
        LinExprQ neg;
        neg -= taus[0];
        if (!append_quadratic_epigraph(L, neg, -*bound))
          throw std::invalid_argument("bound must be affine or concave quadratic");
      } else {
        int th = add_aux(L, "s" + std::to_string(sb.s_cnt++));
        LinExprQ row = LinExprQ::var(th);
        for (const auto& tau : taus) row -= tau;
        L.linear_ineqs.push_back(std::move(row));
        LinExprQ neg;
        neg.add(th, Rational(-1));
        if (!append_quadratic_epigraph(L, neg, -*bound))
          throw std::invalid_argument("bound must be affine or concave quadratic");
      }
    }
  }

  for (const auto& g : D.gens) {
    if (!g.is_affine())
      throw std::invalid_argument("structured representations require affine domain generators");
    LinExprQ ge = affine_expr(g);
    if (!expr_on_some_diagonal(L, ge)) L.linear_ineqs.push_back(std::move(ge));
  }

  L.meta.degree = -1;
  L.meta.mode = "structured";
  L.meta.assumptions.push_back(
      "structured decomposition hypotheses assumed (q_i >= 0 and p_j > 0 on the domain)");
  L.meta.input_hash =
      fnv1a64_hex("S;" + structured_text(h, bound) + ";" + domain_text(D));
  return L;
}

// ---------------------------------------------------------------------------
// ambient reshaping

LiftedLMI permute_ambient(const LiftedLMI& L, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != L.x_dim)
    throw std::invalid_argument("permutation size mismatch");
  std::vector<int> seen(L.x_dim, 0), inv(L.x_dim, -1);
  for (int j = 0; j < L.x_dim; ++j) {
    if (perm[j] < 0 || perm[j] >= L.x_dim || seen[perm[j]]++)
      throw std::invalid_argument("not a permutation");
    inv[perm[j]] = j;
  }
  auto remap = [&](const LinExprQ& e) {
    LinExprQ out(e.c);
    for (const auto& [v, cf] : e.a) out.add(v < L.x_dim ? inv[v] : v, cf);
    return out;
  };
  LiftedLMI out = L;
  for (int j = 0; j < L.x_dim; ++j) out.vars[j] = L.vars[perm[j]];
  for (auto& blk : out.blocks)
    for (auto& [rc, e] : blk.entries) e = remap(e);
  for (auto& e : out.linear_ineqs) e = remap(e);
  return out;
}

LiftedLMI shift_ambient(const LiftedLMI& L, std::span<const Rational> shift) {
  if (static_cast<int>(shift.size()) != L.x_dim)
    throw std::invalid_argument("shift size mismatch");
  auto reroot = [&](const LinExprQ& e) {
    LinExprQ out = e;
    for (const auto& [v, cf] : e.a)
      if (v < L.x_dim) out.c -= cf * shift[v];
    return out;
  };
  LiftedLMI out = L;
  for (auto& blk : out.blocks)
    for (auto& [rc, e] : blk.entries) e = reroot(e);
  for (auto& e : out.linear_ineqs) e = reroot(e);
  if (L.divisor) {
    std::vector<Rational> neg(shift.size());
    for (size_t i = 0; i < shift.size(); ++i) neg[i] = -shift[i];
    out.divisor = poly::translate(*L.divisor, neg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// exact evaluation

std::vector<Rational> canonical_lift(const LiftedLMI& L, std::span<const Rational> x) {
  if (static_cast<int>(x.size()) != L.x_dim)
    throw std::invalid_argument("ambient point dimension mismatch");
  std::vector<Rational> w(L.vars.size(), Rational(0));
  for (size_t v = 0; v < L.vars.size(); ++v) {
    const auto& info = L.vars[v];
    switch (info.kind) {
      case VarInfo::Kind::Point:
        w[v] = x[v];
        break;
      case VarInfo::Kind::MomentY: {
        Rational m(1);
        for (size_t i = 0; i < info.tag.size(); ++i)
          for (int k = 0; k < info.tag[i]; ++k) m *= x[i];
        w[v] = m;
        break;
      }
      case VarInfo::Kind::MomentZ: {
        if (!L.divisor) throw std::logic_error("divided moment without a divisor");
        Rational m(1);
        for (size_t i = 0; i < info.tag.size(); ++i)
          for (int k = 0; k < info.tag[i]; ++k) m *= x[i];
        Rational pv = L.divisor->eval(x.subspan(0, L.divisor->nvars()));
        if (pv == 0) throw std::domain_error("divisor vanishes at the sample point");
        w[v] = m / pv;
        break;
      }
      case VarInfo::Kind::Aux:
        throw std::logic_error("canonical lift undefined with auxiliary variables");
    }
  }
  return w;
}

bool exact_psd(std::vector<std::vector<Rational>> A) {
  int n = static_cast<int>(A.size());
  for (int step = 0; step < n; ++step) {
    int k = -1;
    for (int i = 0; i < n; ++i) {
      if (A[i][i] < 0) return false;
      if (k < 0 && A[i][i] > 0) k = i;
    }
    if (k < 0) break;
    Rational d = A[k][k];
    std::vector<Rational> col(n);
    for (int i = 0; i < n; ++i) col[i] = A[i][k] / d;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A[i][j] -= d * col[i] * col[j];
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (A[i][j] != 0) return false;
  return true;
}

bool satisfied_at(const LiftedLMI& L, std::span<const Rational> joint) {
  if (joint.size() != L.vars.size()) throw std::invalid_argument("joint vector size mismatch");
  for (const auto& e : L.linear_ineqs)
    if (e.eval(joint) < 0) return false;
  for (const auto& blk : L.blocks)
    if (!exact_psd(blk.eval(joint))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// membership

conic::ConicProblem lmi_to_conic(const LiftedLMI& L, std::span<const double> x) {
  if (static_cast<int>(x.size()) != L.x_dim)
    throw std::invalid_argument("ambient point dimension mismatch");
  conic::ConicProblem pr;
  pr.free_vars = L.lifted_count();
  auto subst = [&](const LinExprQ& e) {
    conic::LinExpr le;
    le.c = e.c.get_d();
    for (const auto& [v, cf] : e.a) {
      if (v < L.x_dim)
        le.c += cf.get_d() * x[v];
      else
        le.add(v - L.x_dim, cf.get_d());
    }
    return le;
  };
  for (const auto& blk : L.blocks) {
    conic::PsdBlock pb;
    pb.size = blk.size;
    for (const auto& [rc, e] : blk.entries) {
      conic::LinExpr le = subst(e);
      if (le.c != 0.0 || !le.a.empty()) pb.entries[rc] = std::move(le);
    }
    if (!pb.entries.empty()) pr.psd_blocks.push_back(std::move(pb));
  }
  for (const auto& e : L.linear_ineqs) pr.linear_ineqs.push_back(subst(e));
  return pr;
}

MembershipResult membership(const LiftedLMI& L, std::span<const double> x, double tol) {
  MembershipResult res;
  conic::ConicProblem pr = lmi_to_conic(L, x);
  if (pr.psd_blocks.empty() && pr.linear_ineqs.empty()) {
    res.status = Membership::Inside;
    res.margin = 1.0;
    res.witness = std::vector<double>(x.begin(), x.end());
    return res;
  }
  if (pr.free_vars == 0) {
    // everything is determined by the point itself; evaluate directly
    double m = 1.0;
    for (const auto& e : pr.linear_ineqs) m = std::min(m, e.c);
    for (const auto& blk : pr.psd_blocks) {
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(blk.size, blk.size);
      for (const auto& [rc, e] : blk.entries)
        A(rc.first, rc.second) = A(rc.second, rc.first) = e.c;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
      m = std::min(m, es.eigenvalues().minCoeff());
    }
    res.margin = m;
    double band = 10.0 * tol;
    res.status = std::abs(m) < band ? Membership::BoundaryAmbiguous
                 : m > 0            ? Membership::Inside
                                    : Membership::Outside;
    if (m >= 0) res.witness = std::vector<double>(x.begin(), x.end());
    return res;
  }
  conic::SolveOptions opts;
  conic::SolveOutcome out = conic::solve(pr, opts);
  res.margin = out.margin;
  res.note = out.note;
  if (out.status == conic::Status::Unknown) {
    res.status = Membership::SolverError;
    return res;
  }
  double band = 10.0 * tol;
  if (std::abs(out.margin) < band) {
    res.status = Membership::BoundaryAmbiguous;
  } else if (out.status == conic::Status::Feasible && out.margin >= band) {
    res.status = Membership::Inside;
  } else if (out.status == conic::Status::Infeasible && out.margin <= -band) {
    res.status = Membership::Outside;
  } else {
    res.status = Membership::BoundaryAmbiguous;
  }
  if (out.status == conic::Status::Feasible) {
    std::vector<double> w(x.begin(), x.end());
    w.insert(w.end(), out.point.begin(), out.point.end());
    res.witness = std::move(w);
  }
  return res;
}

// ---------------------------------------------------------------------------
// contour tracing

namespace {

struct SegmentSink {
  int res;
  const poly::Box& bbox;
  std::map<int64_t, std::array<double, 2>> node;  // crossing point per grid edge
  std::vector<std::pair<int64_t, int64_t>> segs;

  double xof(double j) const { return bbox.lo[0] + j * (bbox.hi[0] - bbox.lo[0]) / (res - 1); }
  double yof(double i) const { return bbox.lo[1] + i * (bbox.hi[1] - bbox.lo[1]) / (res - 1); }
};

}  // namespace

std::vector<Polyline> trace_contour(const std::vector<double>& field, int res,
                                    const poly::Box& bbox) {
  if (res < 2) throw std::invalid_argument("grid resolution must be at least 2");
  if (static_cast<int>(field.size()) != res * res)
    throw std::invalid_argument("field size does not match the resolution");
  if (bbox.dim() != 2) throw std::invalid_argument("contour tracing needs a 2d box");

  SegmentSink sk{res, bbox, {}, {}};
  auto val = [&](int i, int j) {
    double v = field[static_cast<size_t>(i) * res + j];
    return std::isnan(v) ? -1.0 : v;
  };
  auto hedge = [&](int i, int j) { return (static_cast<int64_t>(i) * res + j) << 1; };
  auto vedge = [&](int i, int j) { return ((static_cast<int64_t>(i) * res + j) << 1) | 1; };
  auto crossing = [&](int64_t key, int i0, int j0, int i1, int j1) {
    if (!sk.node.count(key)) {
      double v0 = val(i0, j0), v1 = val(i1, j1);
      double t = v0 == v1 ? 0.5 : v0 / (v0 - v1);
      t = std::clamp(t, 0.0, 1.0);
      sk.node[key] = {sk.xof(j0 + t * (j1 - j0)), sk.yof(i0 + t * (i1 - i0))};
    }
    return key;
  };

  for (int i = 0; i + 1 < res; ++i)
    for (int j = 0; j + 1 < res; ++j) {
      double va = val(i, j), vb = val(i, j + 1), vc = val(i + 1, j + 1), vd = val(i + 1, j);
      int cs = (va >= 0 ? 1 : 0) | (vb >= 0 ? 2 : 0) | (vc >= 0 ? 4 : 0) | (vd >= 0 ? 8 : 0);
      if (cs == 0 || cs == 15) continue;
      auto B = [&] { return crossing(hedge(i, j), i, j, i, j + 1); };
      auto R = [&] { return crossing(vedge(i, j + 1), i, j + 1, i + 1, j + 1); };
      auto T = [&] { return crossing(hedge(i + 1, j), i + 1, j, i + 1, j + 1); };
      auto Le = [&] { return crossing(vedge(i, j), i, j, i + 1, j); };
      auto seg = [&](int64_t a, int64_t b) { sk.segs.emplace_back(a, b); };
      switch (cs) {
        case 1: seg(Le(), B()); break;
        case 2: seg(B(), R()); break;
        case 3: seg(Le(), R()); break;
        case 4: seg(R(), T()); break;
        case 6: seg(B(), T()); break;
        case 7: seg(Le(), T()); break;
        case 8: seg(T(), Le()); break;
        case 9: seg(B(), T()); break;
        case 11: seg(R(), T()); break;
        case 12: seg(Le(), R()); break;
        case 13: seg(B(), R()); break;
        case 14: seg(Le(), B()); break;
        case 5:
          if (va + vb + vc + vd >= 0) {
            seg(B(), R());
            seg(T(), Le());
          } else {
            seg(Le(), B());
            seg(R(), T());
          }
          break;
        case 10:
          if (va + vb + vc + vd >= 0) {
            seg(Le(), B());
            seg(R(), T());
          } else {
            seg(B(), R());
            seg(T(), Le());
          }
          break;
        default: break;
      }
    }

  // chain segments through shared grid edges
  std::map<int64_t, std::vector<int>> at;
  for (size_t k = 0; k < sk.segs.size(); ++k) {
    at[sk.segs[k].first].push_back(static_cast<int>(k));
    at[sk.segs[k].second].push_back(static_cast<int>(k));
  }
  std::vector<char> used(sk.segs.size(), 0);
  std::vector<Polyline> out;
  auto walk = [&](int start) {
    std::deque<int64_t> chain{sk.segs[start].first, sk.segs[start].second};
    used[start] = 1;
    for (int dir = 0; dir < 2; ++dir) {
      for (;;) {
        int64_t tip = dir == 0 ? chain.back() : chain.front();
        int next = -1;
        for (int k : at[tip])
          if (!used[k]) {
            next = k;
            break;
          }
        if (next < 0) break;
        used[next] = 1;
        int64_t other = sk.segs[next].first == tip ? sk.segs[next].second : sk.segs[next].first;
        if (dir == 0)
          chain.push_back(other);
        else
          chain.push_front(other);
        if (other == (dir == 0 ? chain.front() : chain.back())) break;  // closed loop
      }
      if (chain.front() == chain.back() && chain.size() > 2) break;
    }
    Polyline pl;
    for (int64_t key : chain) pl.push_back(sk.node[key]);
    out.push_back(std::move(pl));
  };
  for (size_t k = 0; k < sk.segs.size(); ++k)
    if (!used[k]) walk(static_cast<int>(k));
  return out;
}

std::vector<Polyline> trace_boundary_2d(const LiftedLMI& L, const poly::Box& bbox, int res,
                                        double tol) {
  if (L.x_dim != 2) throw std::invalid_argument("boundary tracing needs a 2d projection");
  if (bbox.dim() != 2) throw std::invalid_argument("boundary tracing needs a 2d box");
  std::vector<double> field(static_cast<size_t>(res) * res);
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      double x = bbox.lo[0] + j * (bbox.hi[0] - bbox.lo[0]) / (res - 1);
      double y = bbox.lo[1] + i * (bbox.hi[1] - bbox.lo[1]) / (res - 1);
      std::array<double, 2> pt{x, y};
      MembershipResult m = membership(L, pt, tol);
      field[static_cast<size_t>(i) * res + j] =
          m.status == Membership::SolverError ? -1.0 : m.margin;
    }
  return trace_contour(field, res, bbox);
}

// ---------------------------------------------------------------------------
// canonical form

namespace {

std::string expr_text(const LinExprQ& e, const std::vector<std::string>& lab) {
  std::vector<std::string> parts;
  for (const auto& [v, cf] : e.a) parts.push_back(lab[v] + "*" + rat_str(cf));
  std::sort(parts.begin(), parts.end());
  std::string s = rat_str(e.c);
  for (const auto& p : parts) s += "+" + p;
  return s;
}

std::string render_lmi(const LiftedLMI& L, const std::vector<std::string>& lab) {
  std::vector<std::string> bs;
  for (const auto& blk : L.blocks) {
    int n = blk.size;
    std::vector<std::vector<std::string>> ent(n, std::vector<std::string>(n, "0"));
    for (const auto& [rc, e] : blk.entries)
      ent[rc.first][rc.second] = ent[rc.second][rc.first] = expr_text(e, lab);
    auto render_perm = [&](const std::vector<int>& p) {
      std::string s;
      for (int r = 0; r < n; ++r)
        for (int c = r; c < n; ++c) s += ent[p[r]][p[c]] + ";";
      return s;
    };
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    if (n <= 7) {
      std::vector<int> p = perm;
      std::string best = render_perm(p);
      while (std::next_permutation(p.begin(), p.end())) {
        std::string cur = render_perm(p);
        if (cur < best) best = std::move(cur);
      }
      bs.push_back("B" + std::to_string(n) + "[" + best + "]");
    } else {
      // large blocks: order rows by signature (ties keep index order)
      std::vector<std::pair<std::string, int>> sig(n);
      for (int r = 0; r < n; ++r) {
        std::vector<std::string> row(ent[r]);
        std::sort(row.begin(), row.end());
        std::string s;
        for (const auto& t : row) s += t + ",";
        sig[r] = {s, r};
      }
      std::stable_sort(sig.begin(), sig.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (int r = 0; r < n; ++r) perm[r] = sig[r].second;
      bs.push_back("B" + std::to_string(n) + "[" + render_perm(perm) + "]");
    }
  }
  std::sort(bs.begin(), bs.end());
  std::vector<std::string> rs;
  for (const auto& e : L.linear_ineqs) rs.push_back(expr_text(e, lab));
  std::sort(rs.begin(), rs.end());
  std::vector<std::string> ns;
  for (const auto& [name, v] : L.normalizations) ns.push_back(name + "=" + rat_str(v));
  std::sort(ns.begin(), ns.end());
  std::string out = "dim:" + std::to_string(L.x_dim) + "\n";
  if (L.divisor) out += "div:" + poly::to_text(*L.divisor) + "\n";
  for (const auto& s : bs) out += s + "\n";
  for (const auto& s : rs) out += "I[" + s + "]\n";
  for (const auto& s : ns) out += "N[" + s + "]\n";
  return out;
}

}  // namespace

std::string canonical_form(const LiftedLMI& L) {
  size_t N = L.vars.size();
  std::vector<std::string> lab(N);
  std::vector<int> auxv;
  for (size_t i = 0; i < N; ++i) {
    const auto& v = L.vars[i];
    switch (v.kind) {
      case VarInfo::Kind::Point: lab[i] = "P" + std::to_string(i); break;
      case VarInfo::Kind::MomentY: lab[i] = "Y[" + tag_digits(v.tag) + "]"; break;
      case VarInfo::Kind::MomentZ: lab[i] = "Z[" + tag_digits(v.tag) + "]"; break;
      case VarInfo::Kind::Aux:
        lab[i] = "A?";
        auxv.push_back(static_cast<int>(i));
        break;
    }
  }
  if (auxv.empty()) return render_lmi(L, lab);

  // refine auxiliary labels by their incidence structure
  for (int round = 0; round < 4; ++round) {
    std::vector<std::string> next = lab;
    for (int v : auxv) {
      std::vector<std::string> occ;
      for (const auto& blk : L.blocks)
        for (const auto& [rc, e] : blk.entries) {
          auto it = e.a.find(v);
          if (it == e.a.end()) continue;
          std::vector<std::string> others;
          for (const auto& [w, cf] : e.a)
            if (w != v) others.push_back(lab[w] + "*" + rat_str(cf));
          std::sort(others.begin(), others.end());
          std::string o = "{";
          for (const auto& s : others) o += s + ",";
          occ.push_back("B" + std::to_string(blk.size) + (rc.first == rc.second ? "d" : "o") +
                        rat_str(it->second) + ":" + rat_str(e.c) + o + "}");
        }
      for (const auto& e : L.linear_ineqs) {
        auto it = e.a.find(v);
        if (it == e.a.end()) continue;
        std::vector<std::string> others;
        for (const auto& [w, cf] : e.a)
          if (w != v) others.push_back(lab[w] + "*" + rat_str(cf));
        std::sort(others.begin(), others.end());
        std::string o = "{";
        for (const auto& s : others) o += s + ",";
        occ.push_back("R" + rat_str(it->second) + ":" + rat_str(e.c) + o + "}");
      }
      std::sort(occ.begin(), occ.end());
      std::string all;
      for (const auto& s : occ) all += s + "|";
      next[v] = "A<" + fnv1a64_hex(all) + ">";
    }
    lab = std::move(next);
  }

  // rank the auxiliaries; brute-force small groups of identical labels
  std::stable_sort(auxv.begin(), auxv.end(),
                   [&](int a, int b) { return lab[a] < lab[b]; });
  std::vector<std::vector<int>> groups;
  for (size_t k = 0; k < auxv.size(); ++k) {
    if (k == 0 || lab[auxv[k]] != lab[auxv[k - 1]]) groups.push_back({});
    groups.back().push_back(auxv[k]);
  }
  size_t combos = 1;
  for (const auto& g : groups) {
    size_t f = 1;
    for (size_t i = 2; i <= g.size(); ++i) f *= i;
    combos *= f;
    if (combos > 720) break;
  }
  auto assign = [&](const std::vector<int>& order) {
    std::vector<std::string> l2 = lab;
    for (size_t k = 0; k < order.size(); ++k)
      l2[order[k]] = "A" + std::to_string(k);
    return l2;
  };
  if (combos <= 720 && combos > 1) {
    std::vector<std::vector<int>> gperm = groups;
    std::string best;
    std::vector<int> order;
    std::function<void(size_t)> rec = [&](size_t gi) {
      if (gi == gperm.size()) {
        std::vector<int> flat;
        for (const auto& g : gperm) flat.insert(flat.end(), g.begin(), g.end());
        std::string cur = render_lmi(L, assign(flat));
        if (best.empty() || cur < best) best = std::move(cur);
        return;
      }
      std::vector<int> g = gperm[gi];
      std::sort(g.begin(), g.end());
      do {
        gperm[gi] = g;
        rec(gi + 1);
      } while (std::next_permutation(g.begin(), g.end()));
      gperm[gi] = groups[gi];
    };
    rec(0);
    return best;
  }
  std::vector<int> flat;
  for (const auto& g : groups) flat.insert(flat.end(), g.begin(), g.end());
  return render_lmi(L, assign(flat));
}

bool canonically_equal(const LiftedLMI& a, const LiftedLMI& b) {
  return canonical_form(a) == canonical_form(b);
}

// ---------------------------------------------------------------------------
// serialization

namespace {

std::string kind_name(VarInfo::Kind k) {
  switch (k) {
    case VarInfo::Kind::Point: return "point";
    case VarInfo::Kind::MomentY: return "moment_y";
    case VarInfo::Kind::MomentZ: return "moment_z";
    case VarInfo::Kind::Aux: return "aux";
  }
  return "aux";
}

VarInfo::Kind kind_of(const std::string& s) {
  if (s == "point") return VarInfo::Kind::Point;
  if (s == "moment_y") return VarInfo::Kind::MomentY;
  if (s == "moment_z") return VarInfo::Kind::MomentZ;
  if (s == "aux") return VarInfo::Kind::Aux;
  throw std::invalid_argument("unknown variable kind: " + s);
}

nlohmann::json expr_json(const LinExprQ& e) {
  nlohmann::json lin = nlohmann::json::array();
  for (const auto& [v, cf] : e.a) lin.push_back({{"var", v}, {"coeff", rat_str(cf)}});
  return {{"const", rat_str(e.c)}, {"lin", lin}};
}

LinExprQ expr_from_json(const nlohmann::json& j) {
  LinExprQ e;
  e.c = Rational(j.at("const").get<std::string>());
  for (const auto& t : j.at("lin"))
    e.add(t.at("var").get<int>(), Rational(t.at("coeff").get<std::string>()));
  return e;
}

}  // namespace

nlohmann::json to_json(const LiftedLMI& L) {
  nlohmann::json j;
  j["x_dim"] = L.x_dim;
  j["vars"] = nlohmann::json::array();
  for (const auto& v : L.vars)
    j["vars"].push_back({{"name", v.name}, {"kind", kind_name(v.kind)}, {"tag", v.tag}});
  j["blocks"] = nlohmann::json::array();
  for (const auto& blk : L.blocks) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [rc, e] : blk.entries) {
      nlohmann::json je = expr_json(e);
      je["row"] = rc.first;
      je["col"] = rc.second;
      entries.push_back(std::move(je));
    }
    j["blocks"].push_back({{"size", blk.size}, {"entries", std::move(entries)}});
  }
  j["linear_ineqs"] = nlohmann::json::array();
  for (const auto& e : L.linear_ineqs) j["linear_ineqs"].push_back(expr_json(e));
  j["normalizations"] = nlohmann::json::array();
  for (const auto& [name, v] : L.normalizations)
    j["normalizations"].push_back({{"var", name}, {"value", rat_str(v)}});
  j["projection"] = L.projection;
  if (L.divisor) j["divisor"] = poly::to_json(*L.divisor);
  j["meta"] = {{"degree", L.meta.degree},
               {"mode", L.meta.mode},
               {"input_hash", L.meta.input_hash},
               {"assumptions", L.meta.assumptions}};
  return j;
}

LiftedLMI lmi_from_json(const nlohmann::json& j) {
  LiftedLMI L;
  L.x_dim = j.at("x_dim").get<int>();
  for (const auto& jv : j.at("vars")) {
    VarInfo v;
    v.name = jv.at("name").get<std::string>();
    v.kind = kind_of(jv.at("kind").get<std::string>());
    v.tag = jv.at("tag").get<Exponent>();
    L.vars.push_back(std::move(v));
  }
  for (const auto& jb : j.at("blocks")) {
    Block blk(jb.at("size").get<int>());
    for (const auto& je : jb.at("entries"))
      blk.set(je.at("row").get<int>(), je.at("col").get<int>(), expr_from_json(je));
    L.blocks.push_back(std::move(blk));
  }
  for (const auto& je : j.at("linear_ineqs")) L.linear_ineqs.push_back(expr_from_json(je));
  for (const auto& jn : j.at("normalizations"))
    L.normalizations.emplace_back(jn.at("var").get<std::string>(),
                                  Rational(jn.at("value").get<std::string>()));
  L.projection = j.at("projection").get<std::vector<int>>();
  if (j.contains("divisor")) L.divisor = poly::polynomial_from_json(j.at("divisor"));
  const auto& jm = j.at("meta");
  L.meta.degree = jm.at("degree").get<int>();
  L.meta.mode = jm.at("mode").get<std::string>();
  L.meta.input_hash = jm.at("input_hash").get<std::string>();
  L.meta.assumptions = jm.at("assumptions").get<std::vector<std::string>>();
  return L;
}

}  // namespace sdrep::lmi
