#include "sdrep/cert.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "sdrep/poly_io.hpp"

namespace sdrep::cert {

namespace {

using poly::exp_deg;
using poly::Exponent;
using poly::GradedLexLess;
using poly::monomial_exponents;
using poly::monomial_exponents_split;

int half_up(int d) { return d <= 0 ? 0 : (d + 1) / 2; }

Polynomial embed_window(const Polynomial& g, int ring, int first) {
  std::vector<int> map(g.nvars());
  for (int i = 0; i < g.nvars(); ++i) map[i] = first + i;
  return g.embed(ring, map);
}

int window_degree(const Exponent& e, int first, int count) {
  int d = 0;
  for (int i = 0; i < count; ++i) d += e[first + i];
  return d;
}

// ---------------------------------------------------------------------------
// slot specifications and the assembled coefficient structure
// ---------------------------------------------------------------------------

struct SlotSpec {
  std::vector<int> x_tag, u_tag;
  Polynomial multiplier;  // in the identity ring
  std::vector<Exponent> basis;
  // optional reparametrized gram basis: row i is the polynomial
  // sum_j red[i][j].second * basis[red[i][j].first]; empty means the
  // monomial basis itself
  std::vector<std::vector<std::pair<int, Rational>>> red;
};

int gram_dim(const SlotSpec& sp) {
  return static_cast<int>(sp.red.empty() ? sp.basis.size() : sp.red.size());
}

// When the identity's left side vanishes at u = x and all multipliers are
// positive on an open set, every feasible gram must annihilate the vector
// summing each class of basis monomials that coincide under u = x.  These
// forced kernels drive the structural reductions below.
Exponent fold_exponent(const Exponent& e, int n) {
  Exponent f(e.size() - n);
  for (int i = 0; i < n; ++i) f[i] = e[i] + e[n + i];
  for (size_t i = 2 * static_cast<size_t>(n); i < e.size(); ++i) f[i - n] = e[i];
  return f;
}

std::vector<std::pair<int, Rational>> red_row(const SlotSpec& sp, int i) {
  if (sp.red.empty()) return {{i, Rational(1)}};
  return sp.red[i];
}

std::vector<std::vector<int>> tag_sets(Mode mode, int m) {
  std::vector<std::vector<int>> tags;
  if (mode == Mode::QModule) {
    tags.push_back({});
    for (int i = 0; i < m; ++i) tags.push_back({i});
  } else {
    for (int mask = 0; mask < (1 << m); ++mask) {
      std::vector<int> t;
      for (int i = 0; i < m; ++i)
        if (mask & (1 << i)) t.push_back(i);
      tags.push_back(std::move(t));
    }
  }
  return tags;
}

Polynomial tag_product(const Domain& D, const std::vector<int>& tag) {
  Polynomial p = Polynomial::constant(D.nvars, 1);
  for (int i : tag) p *= D.gens[i];
  return p;
}

// slots for the remainder identity in (x, u)
std::vector<SlotSpec> remainder_slots(const Domain& D, Mode mode, int d) {
  const int n = D.nvars;
  std::vector<SlotSpec> slots;
  auto tags = tag_sets(mode, static_cast<int>(D.gens.size()));
  for (const auto& tx : tags) {
    Polynomial gx = tag_product(D, tx);
    int dx = half_up(gx.degree());
    if (d - dx < 0) continue;
    for (const auto& tu : tags) {
      Polynomial gu = tag_product(D, tu);
      int du = half_up(gu.degree());
      if (d - du < 0) continue;
      SlotSpec s;
      s.x_tag = tx;
      s.u_tag = tu;
      s.multiplier = embed_window(gx, 2 * n, 0) * embed_window(gu, 2 * n, n);
      s.basis = monomial_exponents_split(2 * n, n, d - dx, d - du, (d - dx) + (d - du));
      slots.push_back(std::move(s));
    }
  }
  return slots;
}

struct GramStructure {
  struct VarPos {
    int slot, r, c;
  };
  std::vector<VarPos> vars;
  std::vector<std::vector<std::pair<int, Rational>>> rows;  // (var, coefficient)
  std::vector<Rational> rhs;
  std::vector<Exponent> row_monos;
};

GramStructure build_structure(const Polynomial& lhs, const std::vector<SlotSpec>& slots) {
  GramStructure st;
  std::map<Exponent, int, GradedLexLess> row_of;
  std::vector<std::map<int, Rational>> acc;
  auto row_id = [&](const Exponent& e) {
    auto [it, fresh] = row_of.try_emplace(e, static_cast<int>(acc.size()));
    if (fresh) {
      acc.emplace_back();
      st.rhs.emplace_back(0);
      st.row_monos.push_back(e);
    }
    return it->second;
  };
  for (const auto& [e, c] : lhs.terms()) st.rhs[row_id(e)] = c;
  for (size_t s = 0; s < slots.size(); ++s) {
    const auto& spec = slots[s];
    const int nb = gram_dim(spec);
    for (int r = 0; r < nb; ++r)
      for (int c = r; c < nb; ++c) {
        int v = static_cast<int>(st.vars.size());
        st.vars.push_back({static_cast<int>(s), r, c});
        Rational w(r == c ? 1 : 2);
        for (const auto& [i1, c1] : red_row(spec, r))
          for (const auto& [i2, c2] : red_row(spec, c)) {
            Exponent bb = poly::exp_add(spec.basis[i1], spec.basis[i2]);
            for (const auto& [me, mc] : spec.multiplier.terms())
              acc[row_id(poly::exp_add(bb, me))][v] += w * c1 * c2 * mc;
          }
      }
  }
  st.rows.resize(acc.size());
  for (size_t k = 0; k < acc.size(); ++k)
    for (const auto& [v, c] : acc[k])
      if (sgn(c) != 0) st.rows[k].push_back({v, c});
  return st;
}

// The reparametrized expansion vanishes to second order on u = x, which ties
// the coefficient rows together, and dependent equality rows make the
// solver's normal equations singular everywhere.  Keep a maximal linearly
// independent subset, found by exact elimination.  Returns false when a
// dependent row disagrees on the right-hand side: the linear system then has
// no solution of any signature, refuting the identity at this degree.
// Inconsistency witnesses are kept so the emitted problem stays equivalent.
bool independent_rows(GramStructure& st) {
  struct Pivot {
    int var;
    std::map<int, Rational> row;
    Rational rhs;
  };
  std::vector<Pivot> pivots;
  std::vector<size_t> keep;
  bool consistent = true;
  for (size_t k = 0; k < st.rows.size(); ++k) {
    std::map<int, Rational> w(st.rows[k].begin(), st.rows[k].end());
    Rational b = st.rhs[k];
    for (const auto& p : pivots) {
      auto it = w.find(p.var);
      if (it == w.end() || sgn(it->second) == 0) continue;
      Rational f = it->second / p.row.at(p.var);
      for (const auto& [v, c] : p.row) w[v] -= f * c;
      b -= f * p.rhs;
    }
    int pv = -1;
    for (const auto& [v, c] : w)
      if (sgn(c) != 0) {
        pv = v;
        break;
      }
    if (pv < 0) {
      if (sgn(b) != 0) {
        consistent = false;
        keep.push_back(k);
      }
      continue;
    }
    pivots.push_back({pv, std::move(w), std::move(b)});
    keep.push_back(k);
  }
  if (keep.size() == st.rows.size()) return consistent;
  GramStructure out;
  out.vars = std::move(st.vars);
  for (size_t k : keep) {
    out.rows.push_back(std::move(st.rows[k]));
    out.rhs.push_back(std::move(st.rhs[k]));
    out.row_monos.push_back(std::move(st.row_monos[k]));
  }
  st = std::move(out);
  return consistent;
}

// Iteratively removes basis monomials whose squares have nothing to cancel
// against: a monomial row absent from the left side whose producers are all
// gram diagonals of one sign forces those diagonals (hence their rows and
// columns) to zero, so dropping them loses no solutions.  Returns false when
// a row is outright unsatisfiable, which refutes the identity at this degree.
bool prune_bases(const Polynomial& lhs, std::vector<SlotSpec>& slots) {
  for (;;) {
    struct RowInfo {
      bool off = false;
      int pos = 0, neg = 0;
      std::vector<std::pair<int, int>> diag;  // (slot, basis index)
    };
    std::map<Exponent, RowInfo, GradedLexLess> rows;
    for (size_t s = 0; s < slots.size(); ++s) {
      const auto& sp = slots[s];
      const int nb = static_cast<int>(sp.basis.size());
      for (int r = 0; r < nb; ++r)
        for (int c = r; c < nb; ++c) {
          Exponent bb = poly::exp_add(sp.basis[r], sp.basis[c]);
          for (const auto& [me, mc] : sp.multiplier.terms()) {
            RowInfo& info = rows[poly::exp_add(bb, me)];
            if (r == c) {
              (sgn(mc) > 0 ? info.pos : info.neg)++;
              info.diag.push_back({static_cast<int>(s), r});
            } else {
              info.off = true;
            }
          }
        }
    }
    for (const auto& [e, c] : lhs.terms())
      if (!rows.count(e)) return false;  // nothing can produce this monomial
    std::set<std::pair<int, int>> kill;
    for (const auto& [e, info] : rows) {
      if (info.off || (info.pos > 0 && info.neg > 0)) continue;
      int rs = poly::rat_sign(lhs.coeff(e));
      if (rs == 0) {
        for (const auto& d : info.diag) kill.insert(d);
      } else if ((rs > 0 && info.pos == 0) || (rs < 0 && info.neg == 0)) {
        return false;  // the only producers point the wrong way
      }
    }
    if (kill.empty()) return true;
    std::vector<SlotSpec> next;
    for (size_t s = 0; s < slots.size(); ++s) {
      SlotSpec t = slots[s];
      t.basis.clear();
      for (size_t r = 0; r < slots[s].basis.size(); ++r)
        if (!kill.count({static_cast<int>(s), static_cast<int>(r)}))
          t.basis.push_back(slots[s].basis[r]);
      if (!t.basis.empty()) next.push_back(std::move(t));
    }
    slots = std::move(next);
  }
}

// a basis element alone in its fold class has its whole gram row forced to
// zero, so it can be dropped without losing solutions
void remove_fold_singletons(std::vector<SlotSpec>& slots, int n) {
  for (auto& sp : slots) {
    std::map<Exponent, int, GradedLexLess> count;
    for (const auto& e : sp.basis) count[fold_exponent(e, n)]++;
    std::vector<Exponent> kept;
    for (const auto& e : sp.basis)
      if (count[fold_exponent(e, n)] > 1) kept.push_back(e);
    sp.basis = std::move(kept);
  }
  std::erase_if(slots, [](const SlotSpec& s) { return s.basis.empty(); });
}

// joint fixpoint of the two sound reductions; false refutes the identity
bool reduce_bases(const Polynomial& lhs, std::vector<SlotSpec>& slots, int fold_n) {
  for (;;) {
    size_t before = 0;
    for (const auto& s : slots) before += s.basis.size();
    if (fold_n >= 0) remove_fold_singletons(slots, fold_n);
    if (!prune_bases(lhs, slots)) return false;
    size_t after = 0;
    for (const auto& s : slots) after += s.basis.size();
    if (after == before) return true;
  }
}

// Reparametrize each gram on the complement of its forced kernel.  Every
// feasible gram annihilates each fold class's sum vector, so the admissible
// directions within a class are the differences of its monomials; solving
// over that subspace restores an interior the solver can converge to and
// makes the kernel exact by construction.
void fold_reduce(std::vector<SlotSpec>& slots, int n) {
  for (auto& sp : slots) {
    std::map<Exponent, std::vector<int>, GradedLexLess> groups;
    for (size_t i = 0; i < sp.basis.size(); ++i)
      groups[fold_exponent(sp.basis[i], n)].push_back(static_cast<int>(i));
    sp.red.clear();
    for (const auto& [fe, idx] : groups)
      for (size_t t = 0; t + 1 < idx.size(); ++t)
        sp.red.push_back({{idx[t], Rational(1)}, {idx[t + 1], Rational(-1)}});
  }
  std::erase_if(slots, [](const SlotSpec& s) { return s.red.empty(); });
}

conic::ConicProblem to_conic(const GramStructure& st, const std::vector<SlotSpec>& slots) {
  conic::ConicProblem pr;
  pr.free_vars = static_cast<int>(st.vars.size());
  for (const auto& spec : slots) {
    conic::PsdBlock blk;
    blk.size = gram_dim(spec);
    pr.psd_blocks.push_back(std::move(blk));
  }
  for (size_t v = 0; v < st.vars.size(); ++v) {
    const auto& p = st.vars[v];
    pr.psd_blocks[p.slot].at(p.r, p.c).add(static_cast<int>(v), 1.0);
  }
  for (size_t k = 0; k < st.rows.size(); ++k) {
    if (st.rows[k].empty() && sgn(st.rhs[k]) == 0) continue;
    conic::LinExpr e(-st.rhs[k].get_d());
    for (const auto& [v, c] : st.rows[k]) e.add(static_cast<int>(v), c.get_d());
    pr.linear_eqs.push_back(std::move(e));
  }
  return pr;
}

std::vector<Eigen::MatrixXd> extract_grams(const GramStructure& st,
                                           const std::vector<SlotSpec>& slots,
                                           const std::vector<double>& point) {
  std::vector<Eigen::MatrixXd> grams;
  for (const auto& spec : slots) {
    int nb = gram_dim(spec);
    grams.push_back(Eigen::MatrixXd::Zero(nb, nb));
  }
  for (size_t v = 0; v < st.vars.size(); ++v) {
    const auto& p = st.vars[v];
    grams[p.slot](p.r, p.c) = point[v];
    grams[p.slot](p.c, p.r) = point[v];
  }
  return grams;
}

// ---------------------------------------------------------------------------
// exact rationalization: round, project back onto the equality system, and
// confirm positive semidefiniteness in exact arithmetic
// ---------------------------------------------------------------------------

// destructive psd test via pivoted rational Cholesky; a zero diagonal forces
// its whole row to vanish
bool exact_psd(std::vector<std::vector<Rational>> G) {
  const int n = static_cast<int>(G.size());
  std::vector<int> act(n);
  for (int i = 0; i < n; ++i) act[i] = i;
  while (!act.empty()) {
    int pivot = -1;
    for (size_t t = 0; t < act.size(); ++t) {
      const Rational& d = G[act[t]][act[t]];
      if (sgn(d) < 0) return false;
      if (sgn(d) > 0 && (pivot < 0 || d > G[act[pivot]][act[pivot]])) pivot = static_cast<int>(t);
    }
    if (pivot < 0) {
      // all remaining diagonals vanish: PSD iff the rest of the matrix does
      for (int i : act)
        for (int j : act)
          if (sgn(G[i][j]) != 0) return false;
      return true;
    }
    int p = act[pivot];
    act.erase(act.begin() + pivot);
    const Rational d = G[p][p];
    for (int i : act)
      for (int j : act) G[i][j] -= G[i][p] * G[p][j] / d;
  }
  return true;
}

std::optional<std::vector<std::vector<std::vector<Rational>>>> project_and_check(
    const GramStructure& st, const std::vector<SlotSpec>& slots, std::vector<Rational> g) {
  const size_t nv = st.vars.size();
  const std::vector<std::vector<std::pair<int, Rational>>>& rows = st.rows;
  const std::vector<Rational>& rhs = st.rhs;
  const size_t m = rows.size();

  auto residual = [&]() {
    std::vector<Rational> r(m, Rational(0));
    for (size_t k = 0; k < m; ++k) {
      r[k] = rhs[k];
      for (const auto& [v, c] : rows[k]) r[k] -= c * g[v];
    }
    return r;
  };
  std::vector<Rational> r = residual();
  bool clean = std::all_of(r.begin(), r.end(), [](const Rational& x) { return sgn(x) == 0; });

  if (!clean) {
    // solve (A A^T) lambda = r exactly and shift by A^T lambda
    std::vector<std::vector<Rational>> B(m, std::vector<Rational>(m, Rational(0)));
    std::vector<std::vector<std::pair<int, Rational>>> var_rows(nv);
    for (size_t k = 0; k < m; ++k)
      for (const auto& [v, c] : rows[k]) var_rows[v].push_back({static_cast<int>(k), c});
    for (size_t v = 0; v < nv; ++v)
      for (const auto& [j, cj] : var_rows[v])
        for (const auto& [k, ck] : var_rows[v]) B[j][k] += cj * ck;

    // gaussian elimination with full pivoting; dependent rows must be consistent
    std::vector<Rational> lam(m, Rational(0));
    std::vector<int> rows_left(m), cols_left(m);
    for (size_t i = 0; i < m; ++i) rows_left[i] = cols_left[i] = static_cast<int>(i);
    std::vector<std::pair<int, int>> pivots;
    while (!rows_left.empty()) {
      int pr = -1, pc = -1;
      Rational best(0);
      for (int i : rows_left)
        for (int j : cols_left)
          if (abs(B[i][j]) > best) {
            best = abs(B[i][j]);
            pr = i;
            pc = j;
          }
      if (pr < 0) break;
      pivots.push_back({pr, pc});
      rows_left.erase(std::find(rows_left.begin(), rows_left.end(), pr));
      cols_left.erase(std::find(cols_left.begin(), cols_left.end(), pc));
      for (int i : rows_left) {
        if (sgn(B[i][pc]) == 0) continue;
        Rational f = B[i][pc] / B[pr][pc];
        for (size_t j = 0; j < m; ++j) B[i][j] -= f * B[pr][j];
        r[i] -= f * r[pr];
      }
    }
    for (int i : rows_left)
      if (sgn(r[i]) != 0) return std::nullopt;  // inconsistent beyond rank
    for (auto it = pivots.rbegin(); it != pivots.rend(); ++it) {
      auto [pr, pc] = *it;
      Rational acc = r[pr];
      for (size_t j = 0; j < m; ++j)
        if (static_cast<int>(j) != pc) acc -= B[pr][j] * lam[j];
      lam[pc] = acc / B[pr][pc];
    }
    for (size_t v = 0; v < nv; ++v)
      for (const auto& [j, cj] : var_rows[v]) g[v] += cj * lam[j];
    r = residual();
    for (const Rational& x : r)
      if (sgn(x) != 0) return std::nullopt;
  }

  std::vector<std::vector<std::vector<Rational>>> out;
  for (const auto& spec : slots) {
    int nb = gram_dim(spec);
    out.emplace_back(nb, std::vector<Rational>(nb, Rational(0)));
  }
  for (size_t v = 0; v < nv; ++v) {
    const auto& p = st.vars[v];
    out[p.slot][p.r][p.c] = g[v];
    out[p.slot][p.c][p.r] = g[v];
  }
  for (const auto& G : out)
    if (!exact_psd(G)) return std::nullopt;
  return out;
}

std::optional<std::vector<std::vector<std::vector<Rational>>>> rationalize(
    const GramStructure& st, const std::vector<SlotSpec>& slots,
    const std::vector<Eigen::MatrixXd>& grams) {
  const size_t nv = st.vars.size();
  if (nv > 1500 || st.rows.size() > 600) return std::nullopt;

  // coarse roundings first: solver noise in flat directions snaps onto the
  // same small rational, and the exact projection then has little left to fix
  for (long max_den : {10L, 100L, 1000L, 10000L}) {
    std::vector<Rational> g(nv);
    for (size_t v = 0; v < nv; ++v) {
      const auto& p = st.vars[v];
      g[v] = poly::rat_round(Rational(grams[p.slot](p.r, p.c)), max_den);
    }
    if (auto out = project_and_check(st, slots, std::move(g))) return out;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// identity expansion
// ---------------------------------------------------------------------------

Polynomial expand_exact(const std::vector<Slot>& slots, int ring) {
  Polynomial acc(ring);
  for (const auto& s : slots) {
    const int nb = static_cast<int>(s.basis.size());
    Polynomial part(ring);
    for (int r = 0; r < nb; ++r)
      for (int c = r; c < nb; ++c) {
        const Rational& w = s.gram_q[r][c];
        if (sgn(w) == 0) continue;
        part.add_term(poly::exp_add(s.basis[r], s.basis[c]), (r == c ? w : 2 * w));
      }
    acc += part * s.multiplier;
  }
  return acc;
}

std::map<Exponent, double, GradedLexLess> expand_double(const std::vector<Slot>& slots) {
  std::map<Exponent, double, GradedLexLess> acc;
  for (const auto& s : slots) {
    const int nb = static_cast<int>(s.basis.size());
    for (int r = 0; r < nb; ++r)
      for (int c = r; c < nb; ++c) {
        double w = s.gram_d(r, c) * (r == c ? 1.0 : 2.0);
        if (w == 0.0) continue;
        Exponent bb = poly::exp_add(s.basis[r], s.basis[c]);
        for (const auto& [me, mc] : s.multiplier.terms())
          acc[poly::exp_add(bb, me)] += w * mc.get_d();
      }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// the shared single-degree gram solve
// ---------------------------------------------------------------------------

// expand a reduced gram back over the monomial basis and drop monomials whose
// rows vanish; for exact input the congruence keeps positive semidefiniteness
Slot build_slot(const SlotSpec& sp, const Eigen::MatrixXd& gram,
                const std::vector<std::vector<Rational>>* exact) {
  Slot slot;
  slot.x_tag = sp.x_tag;
  slot.u_tag = sp.u_tag;
  slot.multiplier = sp.multiplier;
  if (sp.red.empty() && !exact) {
    slot.basis = sp.basis;
    slot.gram_d = gram;
    return slot;
  }
  const int nb = static_cast<int>(sp.basis.size());
  const int nr = gram_dim(sp);
  std::vector<std::vector<Rational>> Gq;
  Eigen::MatrixXd Gd = Eigen::MatrixXd::Zero(nb, nb);
  if (exact) Gq.assign(nb, std::vector<Rational>(nb, Rational(0)));
  for (int r = 0; r < nr; ++r)
    for (int c = 0; c < nr; ++c)
      for (const auto& [i1, c1] : red_row(sp, r))
        for (const auto& [i2, c2] : red_row(sp, c)) {
          if (exact)
            Gq[i1][i2] += c1 * c2 * (*exact)[r][c];
          else
            Gd(i1, i2) += c1.get_d() * c2.get_d() * gram(r, c);
        }
  if (exact)
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) Gd(i, j) = Gq[i][j].get_d();
  std::vector<int> keep;
  for (int i = 0; i < nb; ++i) {
    bool live = false;
    for (int j = 0; j < nb && !live; ++j)
      live = exact ? sgn(Gq[i][j]) != 0 : Gd(i, j) != 0.0;
    if (live) keep.push_back(i);
  }
  const int nk = static_cast<int>(keep.size());
  slot.gram_d = Eigen::MatrixXd::Zero(nk, nk);
  if (exact) {
    slot.exact = true;
    slot.gram_q.assign(nk, std::vector<Rational>(nk, Rational(0)));
  }
  for (int i = 0; i < nk; ++i) {
    slot.basis.push_back(sp.basis[keep[i]]);
    for (int j = 0; j < nk; ++j) {
      slot.gram_d(i, j) = Gd(keep[i], keep[j]);
      if (exact) slot.gram_q[i][j] = Gq[keep[i]][keep[j]];
    }
  }
  return slot;
}

std::vector<Slot> make_slots(const std::vector<SlotSpec>& specs,
                             const std::vector<Eigen::MatrixXd>& grams,
                             const std::vector<std::vector<std::vector<Rational>>>* exact = nullptr) {
  std::vector<Slot> out;
  for (size_t s = 0; s < specs.size(); ++s) {
    Slot slot = build_slot(specs[s], grams[s], exact ? &(*exact)[s] : nullptr);
    if (!slot.basis.empty()) out.push_back(std::move(slot));
  }
  return out;
}

CertifyResult solve_gram_problem(const Polynomial& lhs, std::vector<SlotSpec> slots,
                                 int degree, int fold_n = -1) {
  CertifyResult res;
  res.degree = degree;
  std::erase_if(slots, [](const SlotSpec& s) { return s.basis.empty(); });

  if (lhs.is_zero()) {
    Certificate c;
    c.identity_lhs = lhs;
    c.degree = degree;
    c.rationalized = true;
    c.residual = 0.0;
    for (const auto& spec : slots) {
      Slot s;
      s.x_tag = spec.x_tag;
      s.u_tag = spec.u_tag;
      s.multiplier = spec.multiplier;
      s.basis = spec.basis;
      s.exact = true;
      int nb = static_cast<int>(spec.basis.size());
      s.gram_q.assign(nb, std::vector<Rational>(nb, Rational(0)));
      s.gram_d = Eigen::MatrixXd::Zero(nb, nb);
      c.slots.push_back(std::move(s));
    }
    res.status = CertStatus::Success;
    res.certificate = std::move(c);
    return res;
  }
  if (!reduce_bases(lhs, slots, fold_n) || slots.empty()) {
    res.status = CertStatus::Infeasible;
    res.note = "a left-side monomial cannot be matched at this degree";
    return res;
  }
  if (fold_n >= 0) fold_reduce(slots, fold_n);
  if (slots.empty()) {
    res.status = CertStatus::Infeasible;
    res.note = "a left-side monomial cannot be matched at this degree";
    return res;
  }

  GramStructure st = build_structure(lhs, slots);
  for (size_t k = 0; k < st.rows.size(); ++k)
    if (st.rows[k].empty() && sgn(st.rhs[k]) != 0) {
      res.status = CertStatus::Infeasible;
      res.note = "a left-side monomial cannot be matched at this degree";
      return res;
    }
  if (fold_n >= 0 && !independent_rows(st)) {
    res.status = CertStatus::Infeasible;
    res.note = "the left side is inconsistent with the gram expansion at this degree";
    return res;
  }
  conic::SolveOutcome out = conic::solve(to_conic(st, slots));
  if (out.status == conic::Status::Infeasible) {
    res.status = CertStatus::Infeasible;
    return res;
  }
  // an undecided solve can still carry a near-feasible iterate; use it as a
  // hint and let exact rationalization be the judge
  bool hint_only = out.status == conic::Status::Unknown;
  if (hint_only && out.point.empty()) {
    res.status = CertStatus::SolverError;
    res.note = "solver could not decide feasibility: " + out.note;
    return res;
  }
  std::vector<Eigen::MatrixXd> grams = extract_grams(st, slots, out.point);

  // facial trim: drop gram rows with vanishing diagonal, re-solve
  for (int round = 0; round < 3; ++round) {
    std::vector<SlotSpec> trimmed;
    bool changed = false;
    for (size_t s = 0; s < slots.size(); ++s) {
      double scale = 1.0;
      const int nb = gram_dim(slots[s]);
      for (int r = 0; r < nb; ++r) scale = std::max(scale, grams[s](r, r));
      std::vector<int> keep;
      for (int r = 0; r < nb; ++r)
        if (grams[s](r, r) > 1e-7 * scale)
          keep.push_back(r);
        else
          changed = true;
      if (keep.empty()) continue;
      SlotSpec t = slots[s];
      if (t.red.empty()) {
        t.basis.clear();
        for (int r : keep) t.basis.push_back(slots[s].basis[r]);
      } else {
        t.red.clear();
        for (int r : keep) t.red.push_back(slots[s].red[r]);
      }
      trimmed.push_back(std::move(t));
    }
    if (!changed) break;
    GramStructure st2 = build_structure(lhs, trimmed);
    if (fold_n >= 0 && !independent_rows(st2)) break;
    conic::SolveOutcome out2 = conic::solve(to_conic(st2, trimmed));
    bool ok2 = out2.status == conic::Status::Feasible ||
               (hint_only && out2.status == conic::Status::Unknown && !out2.point.empty());
    if (!ok2) break;  // trim went too far
    hint_only = out2.status != conic::Status::Feasible;
    slots = std::move(trimmed);
    st = std::move(st2);
    grams = extract_grams(st, slots, out2.point);
  }

  if (auto exact = rationalize(st, slots, grams)) {
    Certificate c{lhs, make_slots(slots, grams, &*exact), degree, true, 0.0};
    VerifyReport rep = verify_certificate(c);
    if (rep.pass) {
      res.status = CertStatus::Success;
      res.certificate = std::move(c);
      return res;
    }
  }

  std::vector<Slot> built = make_slots(slots, grams);
  Certificate c{lhs, built, degree, false, 0.0};
  VerifyReport rep = verify_certificate(c);
  c.residual = rep.residual;
  if (!rep.pass) {
    res.status = CertStatus::SolverError;
    res.note = hint_only ? "solver could not decide feasibility: " + out.note
                         : "certificate failed verification";
    return res;
  }
  res.status = CertStatus::Success;
  res.certificate = std::move(c);
  return res;
}

// ---------------------------------------------------------------------------
// query preparation
// ---------------------------------------------------------------------------

struct Prepared {
  Polynomial lhs;  // sense-adjusted identity left-hand side in (x, u)
  int d_min = 0;
};

Prepared prepare(const ConvexityQuery& q) {
  const int n = q.domain.nvars;
  if (q.target.num.nvars() != n || q.target.den.nvars() != n)
    throw std::invalid_argument("cert: target and domain rings differ");
  if (q.mode == Mode::Preordering && q.domain.gens.size() > 8)
    throw std::invalid_argument("cert: preordering mode supports at most 8 generators");
  Polynomial R;
  if (q.target.is_polynomial() && !q.clearing) {
    R = poly::lagrange_remainder(q.target.as_polynomial());
  } else {
    auto [p, qq] = q.clearing ? *q.clearing : poly::default_clearing(q.target);
    if (p.nvars() != n || qq.nvars() != n)
      throw std::invalid_argument("cert: clearing pair ring mismatch");
    R = poly::cleared_rational_remainder(q.target, p, qq);
  }
  if (q.sense == Sense::Concave) R = -R;
  Prepared prep;
  prep.lhs = std::move(R);
  prep.d_min = std::max(half_up(prep.lhs.degree_in(0, n)), half_up(prep.lhs.degree_in(n, n)));
  return prep;
}

}  // namespace

// ---------------------------------------------------------------------------

CertifyResult certify_at(const ConvexityQuery& q, int degree) {
  Prepared prep = prepare(q);
  if (degree < prep.d_min)
    throw std::invalid_argument("cert: degree below the identity's minimum");
  return solve_gram_problem(prep.lhs, remainder_slots(q.domain, q.mode, degree), degree,
                            q.domain.nvars);
}

CertifyResult certify(const ConvexityQuery& q) {
  Prepared prep = prepare(q);
  int cap = q.degree_cap > 0 ? q.degree_cap : prep.d_min + 2;
  if (cap < prep.d_min)
    throw std::invalid_argument("cert: degree cap below the identity's minimum");
  CertifyResult last;
  for (int d = prep.d_min; d <= cap; ++d) {
    last = solve_gram_problem(prep.lhs, remainder_slots(q.domain, q.mode, d), d,
                              q.domain.nvars);
    if (last.status == CertStatus::Success) return last;
  }
  return last;
}

conic::ConicProblem assemble(const ConvexityQuery& q, int degree) {
  Prepared prep = prepare(q);
  if (degree < prep.d_min)
    throw std::invalid_argument("cert: degree below the identity's minimum");
  auto slots = remainder_slots(q.domain, q.mode, degree);
  std::erase_if(slots, [](const SlotSpec& s) { return s.basis.empty(); });
  if (reduce_bases(prep.lhs, slots, q.domain.nvars)) fold_reduce(slots, q.domain.nvars);
  GramStructure st = build_structure(prep.lhs, slots);
  independent_rows(st);
  return to_conic(st, slots);
}

CertifyResult certify_via_hessian(const Polynomial& f, const Domain& D, Mode mode, Sense sense,
                                  int degree_cap) {
  const int n = D.nvars;
  if (f.nvars() != n) throw std::invalid_argument("cert: target and domain rings differ");
  if (mode == Mode::Preordering && D.gens.size() > 8)
    throw std::invalid_argument("cert: preordering mode supports at most 8 generators");

  // scalarized Hessian form y^T (grad^2 f)(x) y over (x, y)
  auto H = poly::hessian(f);
  Polynomial lhs(2 * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Polynomial yij = Polynomial::variable(2 * n, n + i) * Polynomial::variable(2 * n, n + j);
      lhs += embed_window(H[i][j], 2 * n, 0) * yij;
    }
  if (sense == Sense::Concave) lhs = -lhs;

  CertifyResult res;

  // segment identities for curved generators come first; affine ones hold
  // identically
  std::vector<Certificate> side;
  for (size_t k = 0; k < D.gens.size(); ++k) {
    const Polynomial& g = D.gens[k];
    if (g.degree() <= 1) continue;
    // g(sx + (1-s)u) - s g(x) - (1-s) g(u) over (x, u, s)
    const int ring = 2 * n + 1;
    Polynomial s_var = Polynomial::variable(ring, 2 * n);
    Polynomial one = Polynomial::constant(ring, 1);
    std::vector<Polynomial> images;
    for (int i = 0; i < n; ++i)
      images.push_back(s_var * Polynomial::variable(ring, i) +
                       (one - s_var) * Polynomial::variable(ring, n + i));
    Polynomial seg = g.substitute(images) - s_var * embed_window(g, ring, 0) -
                     (one - s_var) * embed_window(g, ring, n);
    const int cap = g.degree() + 2;
    std::vector<Polynomial> mults = {one, s_var, one - s_var, s_var * (one - s_var)};
    std::vector<SlotSpec> segslots;
    for (size_t t = 0; t < mults.size(); ++t) {
      SlotSpec sp;
      sp.x_tag = {static_cast<int>(k)};
      sp.u_tag = {static_cast<int>(t)};  // which of 1, s, 1-s, s(1-s)
      sp.multiplier = mults[t];
      sp.basis = monomial_exponents(ring, (cap - mults[t].degree()) / 2);
      segslots.push_back(std::move(sp));
    }
    CertifyResult seg_res = solve_gram_problem(seg, std::move(segslots), cap, n);
    if (seg_res.status != CertStatus::Success) {
      res.status = CertStatus::SolverError;
      res.note = "segment identity not found for generator " + std::to_string(k);
      return res;
    }
    side.push_back(std::move(*seg_res.certificate));
  }

  const int d_min = half_up(lhs.degree_in(0, n));
  int cap = degree_cap > 0 ? degree_cap : d_min + 2;
  if (cap < d_min) throw std::invalid_argument("cert: degree cap below the identity's minimum");

  auto tags = tag_sets(mode, static_cast<int>(D.gens.size()));
  CertifyResult last;
  for (int d = d_min; d <= cap; ++d) {
    std::vector<SlotSpec> slots;
    for (const auto& tag : tags) {
      Polynomial g = tag_product(D, tag);
      int dg = half_up(g.degree());
      if (d - dg < 0) continue;
      SlotSpec sp;
      sp.x_tag = tag;
      sp.multiplier = embed_window(g, 2 * n, 0);
      // x-degree capped as usual, y-degree exactly one
      for (const auto& e : monomial_exponents_split(2 * n, n, d - dg, 1, d - dg + 1))
        if (window_degree(e, n, n) == 1) sp.basis.push_back(e);
      slots.push_back(std::move(sp));
    }
    last = solve_gram_problem(lhs, std::move(slots), d);
    if (last.status == CertStatus::Success) {
      last.side_conditions = side;
      return last;
    }
  }
  last.side_conditions = std::move(side);
  return last;
}

CertifyResult certify_univariate_interval(const Polynomial& f, std::optional<Rational> a,
                                          std::optional<Rational> b) {
  if (f.nvars() != 1) throw std::invalid_argument("cert: univariate routine needs one variable");
  if (a && b && *a > *b) throw std::invalid_argument("cert: empty interval");
  Polynomial fpp = f.derivative(0).derivative(0);
  const int D = half_up(f.degree());

  std::vector<SlotSpec> slots;
  SlotSpec unit;
  unit.multiplier = Polynomial::constant(1, 1);
  unit.basis = monomial_exponents(1, D);
  slots.push_back(unit);
  int tag = 0;
  Polynomial x = Polynomial::variable(1, 0);
  if (a) {
    SlotSpec s;
    s.x_tag = {tag++};
    s.multiplier = x - Polynomial::constant(1, *a);
    s.basis = monomial_exponents(1, D);
    slots.push_back(std::move(s));
  }
  if (b) {
    SlotSpec s;
    s.x_tag = {tag++};
    s.multiplier = Polynomial::constant(1, *b) - x;
    s.basis = monomial_exponents(1, D);
    slots.push_back(std::move(s));
  }
  CertifyResult res = solve_gram_problem(fpp, std::move(slots), D);
  if (res.status == CertStatus::Infeasible)
    res.note = "second derivative is negative somewhere on the interval";
  return res;
}

// ---------------------------------------------------------------------------

VerifyReport verify_certificate(const Certificate& c) {
  VerifyReport rep;
  const int ring = c.identity_lhs.nvars();
  bool all_exact =
      std::all_of(c.slots.begin(), c.slots.end(), [](const Slot& s) { return s.exact; });

  if (all_exact) {
    for (const auto& s : c.slots) {
      if (!exact_psd(s.gram_q)) return rep;
    }
    Polynomial diff = expand_exact(c.slots, ring) - c.identity_lhs;
    if (diff.is_zero()) {
      rep.pass = true;
      rep.residual = 0.0;
      return rep;
    }
    double worst = 0.0;
    for (const auto& [e, v] : diff.terms()) worst = std::max(worst, std::abs(v.get_d()));
    rep.residual = worst;
    return rep;
  }

  double scale = 1.0;
  for (const auto& [e, v] : c.identity_lhs.terms())
    scale = std::max(scale, std::abs(v.get_d()));
  auto acc = expand_double(c.slots);
  for (const auto& [e, v] : c.identity_lhs.terms()) acc[e] -= v.get_d();
  double worst = 0.0;
  for (const auto& [e, v] : acc) worst = std::max(worst, std::abs(v));
  rep.residual = worst;
  bool psd_ok = true;
  for (const auto& s : c.slots) {
    if (s.basis.empty()) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.gram_d, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9) psd_ok = false;
  }
  rep.pass = psd_ok && worst <= 1e-7 * scale;
  return rep;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j;
  j["degree"] = c.degree;
  j["rationalized"] = c.rationalized;
  j["residual"] = c.residual;
  j["identity"] = poly::to_json(c.identity_lhs);
  j["slots"] = nlohmann::json::array();
  for (const auto& s : c.slots) {
    nlohmann::json js;
    js["x_tag"] = s.x_tag;
    js["u_tag"] = s.u_tag;
    js["multiplier"] = poly::to_json(s.multiplier);
    js["basis"] = s.basis;
    js["exact"] = s.exact;
    auto gram = nlohmann::json::array();
    int nb = static_cast<int>(s.basis.size());
    for (int r = 0; r < nb; ++r) {
      auto row = nlohmann::json::array();
      for (int cc = 0; cc < nb; ++cc) {
        if (s.exact)
          row.push_back(s.gram_q[r][cc].get_str());
        else
          row.push_back(s.gram_d(r, cc));
      }
      gram.push_back(std::move(row));
    }
    js["gram"] = std::move(gram);
    j["slots"].push_back(std::move(js));
  }
  return j;
}

Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate c;
  c.degree = j.at("degree").get<int>();
  c.rationalized = j.at("rationalized").get<bool>();
  c.residual = j.at("residual").get<double>();
  c.identity_lhs = poly::polynomial_from_json(j.at("identity"));
  for (const auto& js : j.at("slots")) {
    Slot s;
    s.x_tag = js.at("x_tag").get<std::vector<int>>();
    s.u_tag = js.at("u_tag").get<std::vector<int>>();
    s.multiplier = poly::polynomial_from_json(js.at("multiplier"));
    s.basis = js.at("basis").get<std::vector<Exponent>>();
    s.exact = js.at("exact").get<bool>();
    const auto& gram = js.at("gram");
    int nb = static_cast<int>(s.basis.size());
    s.gram_d = Eigen::MatrixXd::Zero(nb, nb);
    if (s.exact) s.gram_q.assign(nb, std::vector<Rational>(nb, Rational(0)));
    for (int r = 0; r < nb; ++r)
      for (int cc = 0; cc < nb; ++cc) {
        if (s.exact) {
          Rational v(gram.at(r).at(cc).get<std::string>());
          v.canonicalize();
          s.gram_q[r][cc] = v;
          s.gram_d(r, cc) = v.get_d();
        } else {
          s.gram_d(r, cc) = gram.at(r).at(cc).get<double>();
        }
      }
    c.slots.push_back(std::move(s));
  }
  return c;
}

}  // namespace sdrep::cert
