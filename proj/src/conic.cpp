#include "sdrep/conic.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace sdrep::conic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int env_max_iter(int fallback) {
  const char* s = std::getenv("SDREP_CONIC_MAXITER");
  if (!s) return fallback;
  int v = std::atoi(s);
  return v > 0 ? std::min(v, 100000) : fallback;
}

// ---------------------------------------------------------------------------
// block-structured symmetric iterate
// ---------------------------------------------------------------------------

struct BlockVec {
  std::vector<Eigen::MatrixXd> psd;
  Eigen::VectorXd lp;

  static BlockVec zero(const std::vector<int>& sizes, int nlp) {
    BlockVec v;
    for (int s : sizes) v.psd.push_back(Eigen::MatrixXd::Zero(s, s));
    v.lp = Eigen::VectorXd::Zero(nlp);
    return v;
  }
  static BlockVec identity(const std::vector<int>& sizes, int nlp, double scale = 1.0) {
    BlockVec v;
    for (int s : sizes) v.psd.push_back(Eigen::MatrixXd::Identity(s, s) * scale);
    v.lp = Eigen::VectorXd::Constant(nlp, scale);
    return v;
  }
  double dot(const BlockVec& o) const {
    double acc = lp.dot(o.lp);
    for (size_t b = 0; b < psd.size(); ++b) acc += psd[b].cwiseProduct(o.psd[b]).sum();
    return acc;
  }
  double max_abs() const {
    double m = lp.size() ? lp.cwiseAbs().maxCoeff() : 0.0;
    for (const auto& p : psd)
      if (p.size()) m = std::max(m, p.cwiseAbs().maxCoeff());
    return m;
  }
  int dim() const {  // barrier parameter nu
    int n = static_cast<int>(lp.size());
    for (const auto& p : psd) n += static_cast<int>(p.rows());
    return n;
  }
  BlockVec& axpy(double alpha, const BlockVec& o) {
    for (size_t b = 0; b < psd.size(); ++b) psd[b] += alpha * o.psd[b];
    lp += alpha * o.lp;
    return *this;
  }
};

// one sparse coefficient of a constraint matrix A_k
struct Coef {
  int blk;  // psd block index, or -1 for the lp block
  int r, c; // r <= c for psd; (r, r) unused for lp where r indexes the lp slot
  double v;
};

struct StdForm {
  std::vector<int> sizes;
  int nlp = 0;
  std::vector<std::vector<Coef>> A;  // constraint matrices, k = 0..m-1
  BlockVec C;
  Eigen::VectorXd b;

  int m() const { return static_cast<int>(b.size()); }

  double apply(int k, const BlockVec& X) const {  // <A_k, X>
    double acc = 0;
    for (const Coef& t : A[k]) {
      if (t.blk < 0)
        acc += t.v * X.lp[t.r];
      else
        acc += (t.r == t.c ? t.v * X.psd[t.blk](t.r, t.r)
                           : 2.0 * t.v * X.psd[t.blk](t.r, t.c));
    }
    return acc;
  }
  void accumulate(BlockVec& out, const Eigen::VectorXd& y, double sign) const {  // out += sign*A^T y
    for (int k = 0; k < m(); ++k) {
      double w = sign * y[k];
      if (w == 0.0) continue;
      for (const Coef& t : A[k]) {
        if (t.blk < 0) {
          out.lp[t.r] += w * t.v;
        } else {
          out.psd[t.blk](t.r, t.c) += w * t.v;
          if (t.r != t.c) out.psd[t.blk](t.c, t.r) += w * t.v;
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// interior-point engine (HKM direction, Mehrotra predictor-corrector)
// ---------------------------------------------------------------------------

struct IpmResult {
  bool converged = false;
  BlockVec X, S;
  Eigen::VectorXd y;
  double pobj = 0, dobj = 0, pinf = 0, dinf = 0, gap = 0;
  int iters = 0;
  std::string note;
};

double max_step_psd(const Eigen::MatrixXd& P, const Eigen::MatrixXd& D) {
  // largest a with P + a D >= 0, via eigmin of L^-1 D L^-T
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) return 0.0;
  Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd W = L.triangularView<Eigen::Lower>().solve(D);
  W = L.triangularView<Eigen::Lower>().solve(W.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (W + W.transpose()),
                                                    Eigen::EigenvaluesOnly);
  double lmin = es.eigenvalues().minCoeff();
  return lmin >= -1e-14 ? kInf : -1.0 / lmin;
}

double max_step(const BlockVec& P, const BlockVec& D) {
  double a = kInf;
  for (size_t b = 0; b < P.psd.size(); ++b) a = std::min(a, max_step_psd(P.psd[b], D.psd[b]));
  for (int i = 0; i < P.lp.size(); ++i)
    if (D.lp[i] < 0) a = std::min(a, -P.lp[i] / D.lp[i]);
  return a;
}

bool is_pd(const BlockVec& V) {
  for (const auto& p : V.psd) {
    Eigen::LLT<Eigen::MatrixXd> llt(p);
    if (llt.info() != Eigen::Success) return false;
  }
  for (int i = 0; i < V.lp.size(); ++i)
    if (V.lp[i] <= 0) return false;
  return true;
}

IpmResult ipm_solve(const StdForm& P, const BlockVec& X0, const BlockVec& S0,
                    const Eigen::VectorXd& y0, double tol, int max_iter) {
  const int m = P.m();
  const double nu = std::max(1, BlockVec::zero(P.sizes, P.nlp).dim());
  const double bnorm = 1.0 + (m ? P.b.cwiseAbs().maxCoeff() : 0.0);
  const double cnorm = 1.0 + P.C.max_abs();

  IpmResult R;
  R.X = X0;
  R.S = S0;
  R.y = y0;

  // constraint data regrouped for the Schur products: per psd block, the
  // constraints touching it with symmetrized entry lists; per lp slot, the
  // touching constraints with coefficients
  struct Entry {
    int r, c;
    double v;
  };
  const int nblk = static_cast<int>(P.sizes.size());
  std::vector<std::vector<std::pair<int, std::vector<Entry>>>> by_block(nblk);
  std::vector<std::vector<std::pair<int, double>>> by_slot(P.nlp);
  {
    std::vector<std::vector<std::vector<Entry>>> tmp(nblk,
                                                     std::vector<std::vector<Entry>>(m));
    std::vector<std::vector<double>> slot_tmp(P.nlp, std::vector<double>(m, 0.0));
    for (int k = 0; k < m; ++k)
      for (const Coef& t : P.A[k]) {
        if (t.blk < 0) {
          slot_tmp[t.r][k] += t.v;
        } else {
          tmp[t.blk][k].push_back({t.r, t.c, t.v});
          if (t.r != t.c) tmp[t.blk][k].push_back({t.c, t.r, t.v});
        }
      }
    for (int b = 0; b < nblk; ++b)
      for (int k = 0; k < m; ++k)
        if (!tmp[b][k].empty()) by_block[b].push_back({k, std::move(tmp[b][k])});
    for (int i = 0; i < P.nlp; ++i)
      for (int k = 0; k < m; ++k)
        if (slot_tmp[i][k] != 0.0) by_slot[i].push_back({k, slot_tmp[i][k]});
  }

  double best_score = kInf;
  int stall = 0, tiny_steps = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    R.iters = iter;
    // residuals
    Eigen::VectorXd rp(m);
    for (int k = 0; k < m; ++k) rp[k] = P.b[k] - P.apply(k, R.X);
    BlockVec Rd = P.C;  // C - A^T y - S
    P.accumulate(Rd, R.y, -1.0);
    Rd.axpy(-1.0, R.S);

    double mu = R.X.dot(R.S) / nu;
    R.pobj = P.C.dot(R.X);
    R.dobj = P.b.dot(R.y);
    R.pinf = (m ? rp.cwiseAbs().maxCoeff() : 0.0) / bnorm;
    R.dinf = Rd.max_abs() / cnorm;
    R.gap = std::abs(R.pobj - R.dobj) / (1.0 + std::abs(R.pobj) + std::abs(R.dobj));

    if (R.pinf <= tol && R.dinf <= tol && (R.gap <= tol || mu <= tol * 1e-2)) {
      R.converged = true;
      return R;
    }

    double score = std::max({R.pinf, R.dinf, R.gap});
    if (score < 0.5 * best_score) {
      best_score = score;
      stall = 0;
    } else if (++stall > 60) {
      R.note = "stalled";
      return R;
    }
    if (std::abs(R.dobj) > 1e12 || std::abs(R.pobj) > 1e12) {
      R.note = "diverged";
      return R;
    }

    // per-block S^-1 and X (lp: componentwise)
    std::vector<Eigen::LLT<Eigen::MatrixXd>> Sllt;
    std::vector<Eigen::MatrixXd> Sinv;
    Sllt.reserve(P.sizes.size());
    for (const auto& sb : R.S.psd) {
      Sllt.emplace_back(sb);
      if (Sllt.back().info() != Eigen::Success) {
        R.note = "slack factorization failed";
        return R;
      }
      Sinv.push_back(Sllt.back().solve(Eigen::MatrixXd::Identity(sb.rows(), sb.cols())));
    }

    // Schur complement M_jk = tr(A_j X A_k S^-1) + lp part; the trace is a
    // sparse pair product over symmetrized entries, symmetric in (j, k)
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
    for (int b = 0; b < nblk; ++b) {
      const Eigen::MatrixXd& Xb = R.X.psd[b];
      const Eigen::MatrixXd& Si = Sinv[b];
      const auto& rows = by_block[b];
      for (size_t a1 = 0; a1 < rows.size(); ++a1)
        for (size_t a2 = a1; a2 < rows.size(); ++a2) {
          double acc = 0;
          for (const Entry& e1 : rows[a1].second)
            for (const Entry& e2 : rows[a2].second)
              acc += e1.v * e2.v * Xb(e1.c, e2.r) * Si(e2.c, e1.r);
          M(rows[a1].first, rows[a2].first) += acc;
          if (a1 != a2) M(rows[a2].first, rows[a1].first) += acc;
        }
    }
    for (int i = 0; i < P.nlp; ++i) {
      double w = R.X.lp[i] / R.S.lp[i];
      const auto& rows = by_slot[i];
      for (size_t a1 = 0; a1 < rows.size(); ++a1)
        for (size_t a2 = a1; a2 < rows.size(); ++a2) {
          double acc = rows[a1].second * rows[a2].second * w;
          M(rows[a1].first, rows[a2].first) += acc;
          if (a1 != a2) M(rows[a2].first, rows[a1].first) += acc;
        }
    }

    Eigen::LDLT<Eigen::MatrixXd> Mldlt;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 3; ++attempt) {
      Mldlt.compute(M + ridge * Eigen::MatrixXd::Identity(m, m));
      if (Mldlt.info() == Eigen::Success && Mldlt.isPositive()) break;
      ridge = ridge == 0.0 ? 1e-12 * (1.0 + M.diagonal().cwiseAbs().maxCoeff()) : ridge * 1e3;
    }

    // directions for a given sigma and optional corrector term
    auto newton = [&](double sigma, const BlockVec* dXa, const BlockVec* dSa, BlockVec& dX,
                      BlockVec& dS, Eigen::VectorXd& dy) {
      // per block: H = sym(-sigma mu S^-1 + X Rd S^-1 + dXa dSa S^-1); an
      // upper-triangle entry (r,c) of A_j pairs with (r==c ? 1 : 2) H(r,c)
      Eigen::VectorXd rhs = P.b;
      for (int b = 0; b < nblk; ++b) {
        Eigen::MatrixXd G = R.X.psd[b] * Rd.psd[b] * Sinv[b];
        if (dXa && dSa) G += dXa->psd[b] * dSa->psd[b] * Sinv[b];
        Eigen::MatrixXd H = 0.5 * (G + G.transpose().eval()) - sigma * mu * Sinv[b];
        for (const auto& [j, entries] : by_block[b]) {
          double acc = 0;
          for (const Entry& e : entries) acc += e.v * H(e.r, e.c);
          rhs[j] += acc;
        }
      }
      for (int i = 0; i < P.nlp; ++i) {
        double xi = R.X.lp[i], si = R.S.lp[i];
        double corr = (dXa && dSa) ? dXa->lp[i] * dSa->lp[i] / si : 0.0;
        double g = -sigma * mu / si + xi * Rd.lp[i] / si + corr;
        for (const auto& [j, v] : by_slot[i]) rhs[j] += v * g;
      }
      dy = Mldlt.solve(rhs);
      dS = Rd;
      P.accumulate(dS, dy, -1.0);
      dX = BlockVec::zero(P.sizes, P.nlp);
      for (size_t b = 0; b < P.sizes.size(); ++b) {
        Eigen::MatrixXd T = sigma * mu * Sinv[b] - R.X.psd[b] -
                            R.X.psd[b] * dS.psd[b] * Sinv[b];
        if (dXa && dSa) T -= dXa->psd[b] * dSa->psd[b] * Sinv[b];
        dX.psd[b] = 0.5 * (T + T.transpose().eval());
      }
      for (int i = 0; i < P.nlp; ++i) {
        double corr = (dXa && dSa) ? dXa->lp[i] * dSa->lp[i] : 0.0;
        dX.lp[i] =
            (sigma * mu - corr) / R.S.lp[i] - R.X.lp[i] - R.X.lp[i] * dS.lp[i] / R.S.lp[i];
      }
    };

    BlockVec dXa, dSa;
    Eigen::VectorXd dya;
    newton(0.0, nullptr, nullptr, dXa, dSa, dya);
    double apa = std::min(1.0, max_step(R.X, dXa));
    double ada = std::min(1.0, max_step(R.S, dSa));
    BlockVec Xa = R.X, Sa = R.S;
    Xa.axpy(apa, dXa);
    Sa.axpy(ada, dSa);
    double mu_aff = Xa.dot(Sa) / nu;
    double sigma = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0), 1e-8, 1.0);

    BlockVec dX, dS;
    Eigen::VectorXd dy;
    newton(sigma, &dXa, &dSa, dX, dS, dy);

    double ap = std::min(1.0, 0.98 * max_step(R.X, dX));
    double ad = std::min(1.0, 0.98 * max_step(R.S, dS));
    // backtrack to strict positive definiteness
    for (int bt = 0; bt < 30; ++bt) {
      BlockVec Xn = R.X;
      Xn.axpy(ap, dX);
      if (is_pd(Xn)) break;
      ap *= 0.8;
    }
    for (int bt = 0; bt < 30; ++bt) {
      BlockVec Sn = R.S;
      Sn.axpy(ad, dS);
      if (is_pd(Sn)) break;
      ad *= 0.8;
    }
    if (ap < 1e-7 && ad < 1e-7) {
      if (++tiny_steps >= 5) {
        R.note = "step collapse";
        return R;
      }
    } else {
      tiny_steps = 0;
    }
    R.X.axpy(ap, dX);
    R.S.axpy(ad, dS);
    R.y += ad * dy;
  }
  R.note = "iteration cap";
  return R;
}

// ---------------------------------------------------------------------------
// certificate verification shared by both orientations
// ---------------------------------------------------------------------------

// Phi(w) = sum_b <Z_b, Block_b(w)> + sum_i z_i ineq_i(w) + sum_k g_k eq_k(w).
// Valid refutation: Z_b >= 0, z_i >= 0 (within eps), the linear part of Phi
// vanishes, and the constant part is certifiably negative.
bool verify_certificate(const ConicProblem& pr, DualCertificate& cert, double eps) {
  double worst = 0.0;
  double scale = 1.0;
  for (const auto& Z : cert.psd_duals)
    if (Z.size()) scale = std::max(scale, Z.cwiseAbs().maxCoeff());
  for (double z : cert.ineq_duals) scale = std::max(scale, std::abs(z));
  for (double g : cert.eq_duals) scale = std::max(scale, std::abs(g));

  for (size_t b = 0; b < pr.psd_blocks.size(); ++b) {
    const auto& Z = cert.psd_duals[b];
    if (Z.rows() != pr.psd_blocks[b].size) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Z + Z.transpose().eval()),
                                                      Eigen::EigenvaluesOnly);
    worst = std::max(worst, -es.eigenvalues().minCoeff() / scale);
  }
  for (double z : cert.ineq_duals) worst = std::max(worst, -z / scale);

  // affine expansion of Phi
  double constant = 0.0;
  std::map<int, double> lin;
  auto add_expr = [&](const LinExpr& e, double w) {
    constant += w * e.c;
    for (const auto& [v, a] : e.a) lin[v] += w * a;
  };
  for (size_t b = 0; b < pr.psd_blocks.size(); ++b)
    for (const auto& [rc, e] : pr.psd_blocks[b].entries) {
      double w = cert.psd_duals[b](rc.first, rc.second);
      if (rc.first != rc.second) w *= 2.0;
      add_expr(e, w);
    }
  for (size_t i = 0; i < pr.linear_ineqs.size(); ++i)
    add_expr(pr.linear_ineqs[i], cert.ineq_duals[i]);
  for (size_t k = 0; k < pr.linear_eqs.size(); ++k) add_expr(pr.linear_eqs[k], cert.eq_duals[k]);

  double coef_scale = scale;
  auto see_coefs = [&](const LinExpr& e) {
    for (const auto& [v, a] : e.a) coef_scale = std::max(coef_scale, std::abs(a));
  };
  for (const auto& blk : pr.psd_blocks)
    for (const auto& [rc, e] : blk.entries) see_coefs(e);
  for (const auto& e : pr.linear_ineqs) see_coefs(e);
  for (const auto& e : pr.linear_eqs) see_coefs(e);
  for (const auto& [v, a] : lin) worst = std::max(worst, std::abs(a) / coef_scale);

  cert.value = constant;
  cert.verify_error = worst;
  return worst <= eps && constant < -eps * scale;
}

void normalize_certificate(DualCertificate& cert) {
  double total = 0.0;
  for (const auto& Z : cert.psd_duals) total += std::abs(Z.trace());
  for (double z : cert.ineq_duals) total += std::abs(z);
  for (double g : cert.eq_duals) total += std::abs(g);
  if (total <= 0) return;
  for (auto& Z : cert.psd_duals) Z /= total;
  for (auto& z : cert.ineq_duals) z /= total;
  for (auto& g : cert.eq_duals) g /= total;
}

// ---------------------------------------------------------------------------
// orientation: Gram / phase-1 (primal form)
// ---------------------------------------------------------------------------

struct GramMap {
  bool ok = false;
  // var -> (block, r, c) for entry variables; others are free scalars
  std::map<int, std::tuple<int, int, int>> entry_of;
  std::vector<int> free_scalars;
};

GramMap detect_gram(const ConicProblem& pr) {
  GramMap g;
  if (pr.linear_eqs.empty() || !pr.linear_ineqs.empty() || pr.objective.has_value()) return g;
  if (pr.psd_blocks.empty()) return g;
  for (size_t b = 0; b < pr.psd_blocks.size(); ++b)
    for (const auto& [rc, e] : pr.psd_blocks[b].entries) {
      if (e.c != 0.0 || e.a.size() != 1) return g;
      const auto& [v, coef] = *e.a.begin();
      if (coef != 1.0) return g;
      if (g.entry_of.count(v)) return g;  // a variable tied to two positions
      g.entry_of[v] = {static_cast<int>(b), rc.first, rc.second};
    }
  std::vector<char> used(pr.free_vars, 0);
  for (const auto& [v, pos] : g.entry_of) used[v] = 1;
  for (const auto& eq : pr.linear_eqs)
    for (const auto& [v, a] : eq.a)
      if (!used[v]) {
        used[v] = 1;
        g.free_scalars.push_back(v);
      }
  g.ok = true;
  return g;
}

SolveOutcome solve_gram(const ConicProblem& pr, const GramMap& gm, const SolveOptions& opts) {
  SolveOutcome out;
  const int m = static_cast<int>(pr.linear_eqs.size());
  StdForm P;
  for (const auto& blk : pr.psd_blocks) P.sizes.push_back(blk.size);
  const int nfree = static_cast<int>(gm.free_scalars.size());
  P.nlp = 2 * nfree + 1;  // (v+, v-) pairs then tau
  const int tau = P.nlp - 1;
  std::map<int, int> free_slot;
  for (int i = 0; i < nfree; ++i) free_slot[gm.free_scalars[i]] = 2 * i;

  P.A.resize(m);
  P.b = Eigen::VectorXd::Zero(m);
  // row scaling for conditioning only
  for (int k = 0; k < m; ++k) {
    const LinExpr& eq = pr.linear_eqs[k];
    double rs = std::abs(eq.c);
    for (const auto& [v, a] : eq.a) rs = std::max(rs, std::abs(a));
    if (rs <= 0) rs = 1.0;
    P.b[k] = -eq.c / rs;
    for (const auto& [v, a] : eq.a) {
      double av = a / rs;
      auto it = gm.entry_of.find(v);
      if (it != gm.entry_of.end()) {
        auto [blk, r, c] = it->second;
        P.A[k].push_back({blk, r, c, r == c ? av : av / 2.0});
      } else {
        int s = free_slot.at(v);
        P.A[k].push_back({-1, s, s, av});
        P.A[k].push_back({-1, s + 1, s + 1, -av});
      }
    }
  }
  // phase-1 variable: <A_k, X0> + d_k tau = b_k at X0 = I, tau = 1
  BlockVec X0 = BlockVec::identity(P.sizes, P.nlp);
  for (int k = 0; k < m; ++k) {
    double dk = P.b[k];
    for (const Coef& t : P.A[k])
      dk -= (t.blk < 0) ? t.v : (t.r == t.c ? t.v : 2.0 * t.v);
    if (dk != 0.0) P.A[k].push_back({-1, tau, tau, dk});
  }
  P.C = BlockVec::zero(P.sizes, P.nlp);
  P.C.lp[tau] = 1.0;

  // the feasibility question sits exactly at tau = 0, so a single pass at the
  // stock tolerance can land just outside the acceptance band; tighten and
  // warm-start until the candidate or the refutation verifies outright
  IpmResult R;
  BlockVec Xw = X0, Sw = BlockVec::identity(P.sizes, P.nlp);
  Eigen::VectorXd yw = Eigen::VectorXd::Zero(m);
  double tol_k = opts.tol;
  out.iterations = 0;
  std::vector<double> w_best;
  double w_best_err = kInf;
  for (int round = 0; round < 3; ++round) {
    R = ipm_solve(P, Xw, Sw, yw, tol_k, env_max_iter(opts.max_iter));
    out.iterations += R.iters;
    out.primal_infeas = R.pinf;
    out.dual_infeas = R.dinf;
    out.gap = R.gap;
    const double tau_star = R.X.lp[tau];

    // direct check of the extracted candidate; sound regardless of solver state
    std::vector<double> w(pr.free_vars, 0.0);
    for (const auto& [v, pos] : gm.entry_of) {
      auto [blk, r, c] = pos;
      w[v] = R.X.psd[blk](r, c);
    }
    for (const auto& [v, s] : free_slot) w[v] = R.X.lp[s] - R.X.lp[s + 1];
    double eq_err = 0.0, eq_scale = 1.0;
    for (const auto& eq : pr.linear_eqs) {
      eq_err = std::max(eq_err, std::abs(eq.eval(w)));
      eq_scale = std::max(eq_scale, std::abs(eq.c));
      for (const auto& [v, a] : eq.a) eq_scale = std::max(eq_scale, std::abs(a));
    }
    double min_eig = kInf;
    for (const auto& blk : pr.psd_blocks) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk.eval(w), Eigen::EigenvaluesOnly);
      min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
    if (std::getenv("SDREP_CONIC_DEBUG"))
      std::fprintf(stderr,
                   "[gram phase-1] round=%d conv=%d tau=%.3e eq_err=%.3e eq_scale=%.3e "
                   "min_eig=%.3e note='%s' iters=%d\n",
                   round, R.converged, tau_star, eq_err, eq_scale, min_eig, R.note.c_str(),
                   R.iters);
    if (eq_err <= opts.feas_tol * eq_scale && min_eig >= -opts.feas_tol) {
      out.status = Status::Feasible;
      out.point = std::move(w);
      out.margin = min_eig;
      return out;
    }
    if (double q = std::max(eq_err, -min_eig); q < w_best_err) {
      w_best_err = q;
      w_best = std::move(w);
    }

    // refutation from the dual multipliers
    if (tau_star > opts.feas_tol || !R.converged) {
      DualCertificate cert;
      double ymax = R.y.size() ? R.y.cwiseAbs().maxCoeff() : 0.0;
      if (ymax > 0) {
        Eigen::VectorXd y = R.y / ymax;
        // Z_b = -sum_k y_k A_k|_b ; eq weight scaled back to the original row
        cert.psd_duals.clear();
        for (const auto& blk : pr.psd_blocks)
          cert.psd_duals.push_back(Eigen::MatrixXd::Zero(blk.size, blk.size));
        cert.eq_duals.assign(pr.linear_eqs.size(), 0.0);
        for (int k = 0; k < m; ++k) {
          const LinExpr& eq = pr.linear_eqs[k];
          double rs = std::abs(eq.c);
          for (const auto& [v, a] : eq.a) rs = std::max(rs, std::abs(a));
          if (rs <= 0) rs = 1.0;
          cert.eq_duals[k] = y[k] / rs;
        }
        for (size_t b = 0; b < pr.psd_blocks.size(); ++b)
          for (const auto& [rc, e] : pr.psd_blocks[b].entries) {
            const auto& [v, coef] = *e.a.begin();
            (void)coef;
            double zv = 0.0;  // -(coefficient of w_v in sum_k eq_dual_k eq_k)
            for (size_t k = 0; k < pr.linear_eqs.size(); ++k) {
              auto it = pr.linear_eqs[k].a.find(v);
              if (it != pr.linear_eqs[k].a.end()) zv -= cert.eq_duals[k] * it->second;
            }
            if (rc.first == rc.second) {
              cert.psd_duals[b](rc.first, rc.second) = zv;
            } else {
              cert.psd_duals[b](rc.first, rc.second) = zv / 2.0;
              cert.psd_duals[b](rc.second, rc.first) = zv / 2.0;
            }
          }
        normalize_certificate(cert);
        if (verify_certificate(pr, cert, opts.feas_tol)) {
          out.status = Status::Infeasible;
          out.certificate = std::move(cert);
          return out;
        }
      }
    }

    Xw = R.X;
    Sw = R.S;
    yw = R.y;
    tol_k *= 1e-3;
    if (tol_k < 1e-14) break;
  }
  out.status = Status::Unknown;
  out.note = R.note.empty() ? "unconfirmed phase-1 outcome" : R.note;
  out.point = std::move(w_best);  // best near-feasible iterate, usable as a hint
  return out;
}

// ---------------------------------------------------------------------------
// orientation: affine pencil, maximize margin (or a given objective)
// ---------------------------------------------------------------------------

struct Reduced {
  bool inconsistent = false;
  Eigen::VectorXd residual;           // when inconsistent
  std::vector<int> vars;              // original indices of used variables
  Eigen::VectorXd w0;                 // particular solution over `vars`
  Eigen::MatrixXd N;                  // null-space basis over `vars`
};

Reduced reduce_equalities(const ConicProblem& pr) {
  Reduced red;
  std::vector<char> used(pr.free_vars, 0);
  auto mark = [&](const LinExpr& e) {
    for (const auto& [v, a] : e.a) used[v] = 1;
  };
  for (const auto& blk : pr.psd_blocks)
    for (const auto& [rc, e] : blk.entries) mark(e);
  for (const auto& e : pr.linear_ineqs) mark(e);
  for (const auto& e : pr.linear_eqs) mark(e);
  if (pr.objective) mark(*pr.objective);
  for (int v = 0; v < pr.free_vars; ++v)
    if (used[v]) red.vars.push_back(v);
  const int p = static_cast<int>(red.vars.size());
  std::map<int, int> col;
  for (int i = 0; i < p; ++i) col[red.vars[i]] = i;

  const int q = static_cast<int>(pr.linear_eqs.size());
  if (q == 0) {
    red.w0 = Eigen::VectorXd::Zero(p);
    red.N = Eigen::MatrixXd::Identity(p, p);
    return red;
  }
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(q, p);
  Eigen::VectorXd h(q);
  for (int k = 0; k < q; ++k) {
    h[k] = pr.linear_eqs[k].c;
    for (const auto& [v, a] : pr.linear_eqs[k].a) E(k, col[v]) = a;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(E);
  red.w0 = cod.solve(-h);
  Eigen::VectorXd r = E * red.w0 + h;
  double scale = std::max(1.0, std::max(E.cwiseAbs().maxCoeff(), h.cwiseAbs().maxCoeff()));
  if (r.cwiseAbs().maxCoeff() > 1e-9 * scale) {
    red.inconsistent = true;
    red.residual = r;
    return red;
  }
  // null basis from the full SVD
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(E, Eigen::ComputeFullV);
  int rank = 0;
  double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > 1e-12 * std::max(1.0, smax)) ++rank;
  red.N = svd.matrixV().rightCols(p - rank);
  return red;
}

SolveOutcome solve_pencil(const ConicProblem& pr, const SolveOptions& opts) {
  SolveOutcome out;
  Reduced red = reduce_equalities(pr);
  if (red.inconsistent) {
    DualCertificate cert;
    for (const auto& blk : pr.psd_blocks)
      cert.psd_duals.push_back(Eigen::MatrixXd::Zero(blk.size, blk.size));
    cert.ineq_duals.assign(pr.linear_ineqs.size(), 0.0);
    cert.eq_duals.assign(pr.linear_eqs.size(), 0.0);
    for (int k = 0; k < red.residual.size(); ++k) cert.eq_duals[k] = -red.residual[k];
    normalize_certificate(cert);
    if (verify_certificate(pr, cert, opts.feas_tol)) {
      out.status = Status::Infeasible;
      out.certificate = std::move(cert);
      out.note = "inconsistent linear equalities";
      return out;
    }
    out.status = Status::Unknown;
    out.note = "equalities nearly inconsistent";
    return out;
  }

  const int p = static_cast<int>(red.vars.size());
  const int q = static_cast<int>(red.N.cols());
  std::map<int, int> col;
  for (int i = 0; i < p; ++i) col[red.vars[i]] = i;

  const bool margin_mode = !pr.objective.has_value();

  // substituted affine data: per expression a constant plus dense z-coefficients
  auto subst = [&](const LinExpr& e) {
    std::pair<double, Eigen::VectorXd> r{e.c, Eigen::VectorXd::Zero(q)};
    for (const auto& [v, a] : e.a) {
      int i = col.at(v);
      r.first += a * red.w0[i];
      r.second += a * red.N.row(i).transpose();
    }
    return r;
  };

  // column equilibration over z
  Eigen::VectorXd colscale = Eigen::VectorXd::Zero(q);
  auto see = [&](const Eigen::VectorXd& coefs) {
    for (int j = 0; j < q; ++j) colscale[j] = std::max(colscale[j], std::abs(coefs[j]));
  };
  std::vector<std::vector<std::pair<std::pair<int, int>, std::pair<double, Eigen::VectorXd>>>>
      blocks;
  for (const auto& blk : pr.psd_blocks) {
    blocks.emplace_back();
    for (const auto& [rc, e] : blk.entries) {
      blocks.back().push_back({rc, subst(e)});
      see(blocks.back().back().second.second);
    }
  }
  std::vector<std::pair<double, Eigen::VectorXd>> rows;
  for (const auto& e : pr.linear_ineqs) {
    rows.push_back(subst(e));
    see(rows.back().second);
  }
  std::pair<double, Eigen::VectorXd> obj{0.0, Eigen::VectorXd::Zero(q)};
  if (pr.objective) {
    obj = subst(*pr.objective);
    see(obj.second);
  }
  for (int j = 0; j < q; ++j)
    if (colscale[j] <= 0) colscale[j] = 1.0;

  // standard dual form: y = (z, [t]); S(y) = C - sum y_k Ahat_k >= 0
  const int m = q + (margin_mode ? 1 : 0);
  const int tvar = q;
  StdForm P;
  for (const auto& blk : pr.psd_blocks) P.sizes.push_back(blk.size);
  P.nlp = static_cast<int>(pr.linear_ineqs.size()) + (margin_mode ? 1 : 0);
  P.C = BlockVec::zero(P.sizes, P.nlp);
  P.A.resize(m);
  P.b = Eigen::VectorXd::Zero(m);
  if (margin_mode)
    P.b[tvar] = 1.0;
  else
    for (int j = 0; j < q; ++j) P.b[j] = obj.second[j] / colscale[j];

  for (size_t b = 0; b < blocks.size(); ++b) {
    for (const auto& [rc, cv] : blocks[b]) {
      P.C.psd[b](rc.first, rc.second) = cv.first;
      P.C.psd[b](rc.second, rc.first) = cv.first;
      for (int j = 0; j < q; ++j) {
        double a = cv.second[j] / colscale[j];
        if (a != 0.0)
          P.A[j].push_back({static_cast<int>(b), std::min(rc.first, rc.second),
                            std::max(rc.first, rc.second), -a});
      }
    }
    if (margin_mode)
      for (int r = 0; r < P.sizes[b]; ++r) P.A[tvar].push_back({static_cast<int>(b), r, r, 1.0});
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    P.C.lp[i] = rows[i].first;
    for (int j = 0; j < q; ++j) {
      double a = rows[i].second[j] / colscale[j];
      if (a != 0.0) P.A[j].push_back({-1, static_cast<int>(i), static_cast<int>(i), -a});
    }
    if (margin_mode) P.A[tvar].push_back({-1, static_cast<int>(i), static_cast<int>(i), 1.0});
  }
  if (margin_mode) {
    int cap = P.nlp - 1;
    P.C.lp[cap] = 1.0;
    P.A[tvar].push_back({-1, cap, cap, 1.0});
  }

  // starting point: dual-interior for margin mode, neutral otherwise
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(m);
  BlockVec S0 = BlockVec::identity(P.sizes, P.nlp);
  if (margin_mode) {
    double lo = kInf;
    for (size_t b = 0; b < P.sizes.size(); ++b) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P.C.psd[b], Eigen::EigenvaluesOnly);
      if (P.sizes[b]) lo = std::min(lo, es.eigenvalues().minCoeff());
    }
    for (int i = 0; i + 1 < P.nlp; ++i) lo = std::min(lo, P.C.lp[i]);
    double t0 = std::min(lo - 1.0, 0.0);
    y0[tvar] = t0;
    S0 = P.C;
    for (size_t b = 0; b < P.sizes.size(); ++b)
      S0.psd[b] -= t0 * Eigen::MatrixXd::Identity(P.sizes[b], P.sizes[b]);
    for (int i = 0; i + 1 < P.nlp; ++i) S0.lp[i] -= t0;
    S0.lp[P.nlp - 1] = 1.0 - t0;
  }
  int nu = std::max(1, BlockVec::zero(P.sizes, P.nlp).dim());
  BlockVec X0 = BlockVec::identity(P.sizes, P.nlp, 1.0 / nu);

  IpmResult R = ipm_solve(P, X0, S0, y0, opts.tol, env_max_iter(opts.max_iter));
  out.iterations = R.iters;
  out.primal_infeas = R.pinf;
  out.dual_infeas = R.dinf;
  out.gap = R.gap;

  // candidate point
  Eigen::VectorXd z(q);
  for (int j = 0; j < q; ++j) z[j] = R.y[j] / colscale[j];
  Eigen::VectorXd wv = red.w0 + red.N * z;
  std::vector<double> w(pr.free_vars, 0.0);
  for (int i = 0; i < p; ++i) w[red.vars[i]] = wv[i];
  double tstar = margin_mode ? R.y[tvar] : (pr.objective ? pr.objective->eval(w) : 0.0);

  if (R.converged || (margin_mode && tstar > 0)) {
    double scale = 1.0, min_slack = kInf, eq_err = 0.0;
    for (const auto& blk : pr.psd_blocks) {
      Eigen::MatrixXd Mb = blk.eval(w);
      if (Mb.size()) scale = std::max(scale, Mb.cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Mb, Eigen::EigenvaluesOnly);
      min_slack = std::min(min_slack, es.eigenvalues().minCoeff());
    }
    for (const auto& e : pr.linear_ineqs) min_slack = std::min(min_slack, e.eval(w));
    for (const auto& e : pr.linear_eqs) eq_err = std::max(eq_err, std::abs(e.eval(w)));
    if (min_slack >= -opts.feas_tol * scale && eq_err <= opts.feas_tol * scale &&
        (!margin_mode || R.converged || min_slack >= 0)) {
      out.status = Status::Feasible;
      out.point = std::move(w);
      out.margin = tstar;
      return out;
    }
  }

  if (margin_mode && (tstar < 0 || !R.converged)) {
    // Farkas functional from the primal optimum X*
    DualCertificate cert;
    for (size_t b = 0; b < P.sizes.size(); ++b) cert.psd_duals.push_back(R.X.psd[b]);
    cert.ineq_duals.clear();
    for (size_t i = 0; i < pr.linear_ineqs.size(); ++i) cert.ineq_duals.push_back(R.X.lp[i]);
    cert.eq_duals.assign(pr.linear_eqs.size(), 0.0);
    if (!pr.linear_eqs.empty()) {
      // choose equality weights g with E^T g = linear part of the block/ineq pairing
      Eigen::VectorXd phi = Eigen::VectorXd::Zero(p);
      for (size_t b = 0; b < pr.psd_blocks.size(); ++b)
        for (const auto& [rc, e] : pr.psd_blocks[b].entries) {
          double wgt = cert.psd_duals[b](rc.first, rc.second) * (rc.first == rc.second ? 1.0 : 2.0);
          for (const auto& [v, a] : e.a) phi[col.at(v)] += wgt * a;
        }
      for (size_t i = 0; i < pr.linear_ineqs.size(); ++i)
        for (const auto& [v, a] : pr.linear_ineqs[i].a) phi[col.at(v)] += cert.ineq_duals[i] * a;
      const int qe = static_cast<int>(pr.linear_eqs.size());
      Eigen::MatrixXd E = Eigen::MatrixXd::Zero(qe, p);
      for (int k = 0; k < qe; ++k)
        for (const auto& [v, a] : pr.linear_eqs[k].a) E(k, col.at(v)) = a;
      Eigen::VectorXd g = E.transpose().jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                              .solve(-phi);
      for (int k = 0; k < qe; ++k) cert.eq_duals[k] = g[k];
    }
    normalize_certificate(cert);
    if (verify_certificate(pr, cert, opts.feas_tol)) {
      out.status = Status::Infeasible;
      out.certificate = std::move(cert);
      out.margin = tstar;
      return out;
    }
  }

  out.status = Status::Unknown;
  out.margin = tstar;
  out.note = R.note.empty() ? "unconfirmed outcome" : R.note;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_sdpa(const ConicProblem& pr) {
  // dual form over the raw variables: equalities written as opposing inequalities
  std::ostringstream os;
  os.precision(17);
  os << "\"pencil dump: max 0 subject to blocks(w) >= 0\"\n";
  int m = pr.free_vars;
  std::vector<int> bsizes;
  for (const auto& blk : pr.psd_blocks) bsizes.push_back(blk.size);
  int nlp = static_cast<int>(pr.linear_ineqs.size() + 2 * pr.linear_eqs.size());
  os << m << " = mDIM\n" << (bsizes.size() + (nlp ? 1 : 0)) << " = nBLOCK\n";
  for (size_t i = 0; i < bsizes.size(); ++i) os << bsizes[i] << " ";
  if (nlp) os << -nlp;
  os << " = bLOCKsTRUCT\n";
  for (int j = 0; j < m; ++j) {
    double cj = 0.0;
    if (pr.objective) {
      auto it = pr.objective->a.find(j);
      if (it != pr.objective->a.end()) cj = it->second;
    }
    os << -cj << (j + 1 < m ? " " : "");
  }
  os << "\n";
  auto emit = [&](int mat, int blk, int r, int c, double v) {
    if (v != 0.0) os << mat << " " << blk << " " << r + 1 << " " << c + 1 << " " << v << "\n";
  };
  for (size_t b = 0; b < pr.psd_blocks.size(); ++b)
    for (const auto& [rc, e] : pr.psd_blocks[b].entries) {
      emit(0, static_cast<int>(b) + 1, rc.first, rc.second, -e.c);
      for (const auto& [v, a] : e.a) emit(v + 1, static_cast<int>(b) + 1, rc.first, rc.second, a);
    }
  int lpb = static_cast<int>(bsizes.size()) + 1;
  int slot = 0;
  auto emit_row = [&](const LinExpr& e, double sgn) {
    emit(0, lpb, slot, slot, -sgn * e.c);
    for (const auto& [v, a] : e.a) emit(v + 1, lpb, slot, slot, sgn * a);
    ++slot;
  };
  for (const auto& e : pr.linear_ineqs) emit_row(e, 1.0);
  for (const auto& e : pr.linear_eqs) {
    emit_row(e, 1.0);
    emit_row(e, -1.0);
  }
  return os.str();
}

SolveOutcome solve(const ConicProblem& pr, const SolveOptions& opts) {
  // validation
  for (const auto& blk : pr.psd_blocks) {
    if (blk.size < 1) throw std::invalid_argument("conic: block size < 1");
    for (const auto& [rc, e] : blk.entries) {
      if (rc.first < 0 || rc.second < rc.first || rc.second >= blk.size)
        throw std::invalid_argument("conic: entry out of range");
      for (const auto& [v, a] : e.a) {
        if (v < 0 || v >= pr.free_vars) throw std::invalid_argument("conic: variable out of range");
        if (!std::isfinite(a)) throw std::invalid_argument("conic: non-finite coefficient");
      }
      if (!std::isfinite(e.c)) throw std::invalid_argument("conic: non-finite constant");
    }
  }
  auto check_exprs = [&](const std::vector<LinExpr>& es) {
    for (const auto& e : es) {
      if (!std::isfinite(e.c)) throw std::invalid_argument("conic: non-finite constant");
      for (const auto& [v, a] : e.a) {
        if (v < 0 || v >= pr.free_vars) throw std::invalid_argument("conic: variable out of range");
        if (!std::isfinite(a)) throw std::invalid_argument("conic: non-finite coefficient");
      }
    }
  };
  check_exprs(pr.linear_ineqs);
  check_exprs(pr.linear_eqs);
  if (pr.objective) check_exprs({*pr.objective});

  if (opts.dump_sdpa || std::getenv("SDREP_CONIC_DUMP")) {
    std::string path = opts.dump_path;
    if (path.empty()) {
      const char* env = std::getenv("SDREP_CONIC_DUMP");
      path = env ? env : "conic_dump.dat-s";
    }
    std::ofstream(path) << to_sdpa(pr);
  }

  GramMap gm = detect_gram(pr);
  if (gm.ok) return solve_gram(pr, gm, opts);
  return solve_pencil(pr, opts);
}

}  // namespace sdrep::conic
