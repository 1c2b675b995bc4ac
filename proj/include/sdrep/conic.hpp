#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sdrep::conic {

// Affine expression c + sum_v a[v] * w_v over the problem's free variables.
struct LinExpr {
  double c = 0.0;
  std::map<int, double> a;

  LinExpr() = default;
  LinExpr(double cc) : c(cc) {}  // NOLINT implicit constant
  void add(int var, double coeff) {
    if (coeff != 0.0) {
      double& slot = a[var];
      slot += coeff;
      if (slot == 0.0) a.erase(var);
    }
  }
  double eval(const std::vector<double>& w) const {
    double v = c;
    for (const auto& [i, ai] : a) v += ai * w[i];
    return v;
  }
};

// Symmetric block, entries stored upper-triangular (r <= c).
struct PsdBlock {
  int size = 0;
  std::map<std::pair<int, int>, LinExpr> entries;

  LinExpr& at(int r, int c) {
    if (r > c) std::swap(r, c);
    return entries[{r, c}];
  }
  Eigen::MatrixXd eval(const std::vector<double>& w) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size, size);
    for (const auto& [rc, e] : entries) m(rc.first, rc.second) = m(rc.second, rc.first) = e.eval(w);
    return m;
  }
};

// Find w with every block PSD, every inequality >= 0, every equality == 0.
// With an objective, additionally maximize it; without one, maximize the
// uniform slack margin t (capped at 1):  block - t I >= 0, ineq - t >= 0.
struct ConicProblem {
  int free_vars = 0;
  std::vector<PsdBlock> psd_blocks;
  std::vector<LinExpr> linear_ineqs;
  std::vector<LinExpr> linear_eqs;
  std::optional<LinExpr> objective;
};

enum class Status { Feasible, Infeasible, Unknown };

// Farkas-style refutation: nonnegative weights (psd_duals >= 0 as matrices,
// ineq_duals >= 0) and free equality weights under which any point satisfying
// the constraints would give a nonnegative pairing, yet the certified pairing
// value is negative.  solve() only returns one after re-verifying it.
struct DualCertificate {
  std::vector<Eigen::MatrixXd> psd_duals;
  std::vector<double> ineq_duals;
  std::vector<double> eq_duals;
  double value = 0.0;          // certified pairing, < 0
  double verify_error = 0.0;   // worst residual seen while re-checking
};

struct SolveOutcome {
  Status status = Status::Unknown;
  std::vector<double> point;  // free-variable values when Feasible
  double margin = 0.0;        // max slack t (or objective value) when Feasible
  std::optional<DualCertificate> certificate;

  double primal_infeas = 0.0;
  double dual_infeas = 0.0;
  double gap = 0.0;
  int iterations = 0;
  std::string note;

  bool feasible() const { return status == Status::Feasible; }
};

struct SolveOptions {
  double tol = 1e-8;       // interior-point convergence tolerance
  double feas_tol = 1e-7;  // independent re-verification tolerance
  int max_iter = 500;      // overridable via SDREP_CONIC_MAXITER
  bool dump_sdpa = false;  // also honored when SDREP_CONIC_DUMP is set
  std::string dump_path;
};

// Deterministic, reentrant, no shared mutable state.  Every Feasible outcome
// has been re-checked by direct constraint evaluation and every Infeasible
// outcome's certificate re-verified; anything unconfirmed returns Unknown.
SolveOutcome solve(const ConicProblem& problem, const SolveOptions& opts = {});

// Sparse SDPA-like text dump of the problem (dual form) for cross-checking.
std::string to_sdpa(const ConicProblem& problem);

}  // namespace sdrep::conic
