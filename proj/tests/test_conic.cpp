#include "sdrep/conic.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "test_util.hpp"

using namespace sdrep::conic;

namespace {

double min_eig(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// smallest slack of a candidate point across all constraints
double point_slack(const ConicProblem& pr, const std::vector<double>& w) {
  double s = std::numeric_limits<double>::infinity();
  for (const auto& blk : pr.psd_blocks) s = std::min(s, min_eig(blk.eval(w)));
  for (const auto& e : pr.linear_ineqs) s = std::min(s, e.eval(w));
  return s;
}

double eq_violation(const ConicProblem& pr, const std::vector<double>& w) {
  double s = 0;
  for (const auto& e : pr.linear_eqs) s = std::max(s, std::abs(e.eval(w)));
  return s;
}

// independent check of a returned refutation certificate
void check_certificate(const ConicProblem& pr, const DualCertificate& cert) {
  REQUIRE(cert.psd_duals.size() == pr.psd_blocks.size());
  REQUIRE(cert.ineq_duals.size() == pr.linear_ineqs.size());
  REQUIRE(cert.eq_duals.size() == pr.linear_eqs.size());
  for (const auto& Z : cert.psd_duals) CHECK(min_eig(Z) >= -1e-7);
  for (double z : cert.ineq_duals) CHECK(z >= -1e-7);
  double constant = 0;
  std::map<int, double> lin;
  auto add = [&](const LinExpr& e, double wgt) {
    constant += wgt * e.c;
    for (const auto& [v, a] : e.a) lin[v] += wgt * a;
  };
  for (size_t b = 0; b < pr.psd_blocks.size(); ++b)
    for (const auto& [rc, e] : pr.psd_blocks[b].entries)
      add(e, cert.psd_duals[b](rc.first, rc.second) * (rc.first == rc.second ? 1.0 : 2.0));
  for (size_t i = 0; i < pr.linear_ineqs.size(); ++i) add(pr.linear_ineqs[i], cert.ineq_duals[i]);
  for (size_t k = 0; k < pr.linear_eqs.size(); ++k) add(pr.linear_eqs[k], cert.eq_duals[k]);
  for (const auto& [v, a] : lin) CHECK(std::abs(a) <= 1e-6);
  CHECK(constant < 0);
}

}  // namespace

TEST_CASE("linexpr arithmetic and cancellation") {
  LinExpr e(2.0);
  e.add(0, 1.5);
  e.add(1, -3.0);
  e.add(0, -1.5);
  CHECK(e.a.size() == 1);
  CHECK(e.eval({7.0, 2.0}) == doctest::Approx(2.0 - 6.0));
}

TEST_CASE("psd block entry access symmetrizes indices") {
  PsdBlock blk;
  blk.size = 2;
  blk.at(1, 0).add(0, 1.0);
  CHECK(blk.entries.count({0, 1}) == 1);
  Eigen::MatrixXd M = blk.eval({3.0});
  CHECK(M(0, 1) == 3.0);
  CHECK(M(1, 0) == 3.0);
}

TEST_CASE("unit interval pencil attains the margin cap") {
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0) = LinExpr(1.0);
  blk.at(1, 1) = LinExpr(1.0);
  blk.at(0, 1).add(0, 1.0);
  pr.psd_blocks.push_back(blk);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.margin == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(std::abs(out.point[0]) < 1e-4);
}

TEST_CASE("pinned variable gives an exact margin") {
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0) = LinExpr(1.0);
  blk.at(1, 1) = LinExpr(1.0);
  blk.at(0, 1).add(0, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr eq(-0.5);  // x = 1/2
  eq.add(0, 1.0);
  pr.linear_eqs.push_back(eq);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.point[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(out.margin == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("constant negative block is refuted") {
  ConicProblem pr;
  pr.free_vars = 0;
  PsdBlock blk;
  blk.size = 1;
  blk.at(0, 0) = LinExpr(-1.0);
  pr.psd_blocks.push_back(blk);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Infeasible);
  REQUIRE(out.certificate.has_value());
  check_certificate(pr, *out.certificate);
}

TEST_CASE("indefinite pencil with no feasible slice is refuted") {
  // [[1, x], [x, -1]] has determinant -1 - x^2 < 0 for every x
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0) = LinExpr(1.0);
  blk.at(1, 1) = LinExpr(-1.0);
  blk.at(0, 1).add(0, 1.0);
  pr.psd_blocks.push_back(blk);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Infeasible);
  REQUIRE(out.certificate.has_value());
  check_certificate(pr, *out.certificate);
}

TEST_CASE("conflicting scalar constraints are refuted") {
  // x >= 0 from a block, x <= -1 from a row
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 1;
  blk.at(0, 0).add(0, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr row(-1.0);
  row.add(0, -1.0);
  pr.linear_ineqs.push_back(row);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Infeasible);
  REQUIRE(out.certificate.has_value());
  check_certificate(pr, *out.certificate);
}

TEST_CASE("pure linear program margin") {
  // x >= 0 and x <= 1: the deepest point is x = 1/2 with slack 1/2
  ConicProblem pr;
  pr.free_vars = 1;
  LinExpr lo;
  lo.add(0, 1.0);
  LinExpr hi(1.0);
  hi.add(0, -1.0);
  pr.linear_ineqs = {lo, hi};

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.margin == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(out.point[0] == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("equalities are eliminated before the cone solve") {
  ConicProblem pr;
  pr.free_vars = 2;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0).add(0, 1.0);
  blk.at(1, 1).add(1, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr e1(-2.0);  // x + y = 2
  e1.add(0, 1.0);
  e1.add(1, 1.0);
  LinExpr e2;  // x - y = 0
  e2.add(0, 1.0);
  e2.add(1, -1.0);
  pr.linear_eqs = {e1, e2};

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.point[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.point[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.margin == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(eq_violation(pr, out.point) < 1e-6);
}

TEST_CASE("inconsistent equalities are refuted without a cone solve") {
  ConicProblem pr;
  pr.free_vars = 1;
  LinExpr e1(-1.0);  // x = 1
  e1.add(0, 1.0);
  LinExpr e2(1.0);  // x = -1
  e2.add(0, 1.0);
  pr.linear_eqs = {e1, e2};
  PsdBlock blk;
  blk.size = 1;
  blk.at(0, 0).add(0, 1.0);
  pr.psd_blocks.push_back(blk);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Infeasible);
  REQUIRE(out.certificate.has_value());
  check_certificate(pr, *out.certificate);
}

TEST_CASE("equality forcing a negative diagonal is refuted with equality weights") {
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 1;
  blk.at(0, 0).add(0, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr eq(1.0);  // x = -1
  eq.add(0, 1.0);
  pr.linear_eqs.push_back(eq);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Infeasible);
  REQUIRE(out.certificate.has_value());
  check_certificate(pr, *out.certificate);
}

TEST_CASE("gram orientation finds a boundary completion") {
  // [[a, b], [b, c]] with a = c = 1, b = 1: only the rank-one completion works
  ConicProblem pr;
  pr.free_vars = 3;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0).add(0, 1.0);
  blk.at(0, 1).add(1, 1.0);
  blk.at(1, 1).add(2, 1.0);
  pr.psd_blocks.push_back(blk);
  auto pin = [](int v, double val) {
    LinExpr e(-val);
    e.add(v, 1.0);
    return e;
  };
  pr.linear_eqs = {pin(0, 1.0), pin(1, 1.0), pin(2, 1.0)};

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.point[1] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(point_slack(pr, out.point) >= -1e-6);
}

TEST_CASE("gram orientation refutes an impossible completion") {
  ConicProblem pr;
  pr.free_vars = 3;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0).add(0, 1.0);
  blk.at(0, 1).add(1, 1.0);
  blk.at(1, 1).add(2, 1.0);
  pr.psd_blocks.push_back(blk);
  auto pin = [](int v, double val) {
    LinExpr e(-val);
    e.add(v, 1.0);
    return e;
  };
  pr.linear_eqs = {pin(0, 1.0), pin(1, 2.0), pin(2, 1.0)};

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Infeasible);
  REQUIRE(out.certificate.has_value());
  check_certificate(pr, *out.certificate);
}

TEST_CASE("gram orientation handles free scalars") {
  ConicProblem pr;
  pr.free_vars = 4;  // a, b, c in the block plus a free scalar s
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0).add(0, 1.0);
  blk.at(0, 1).add(1, 1.0);
  blk.at(1, 1).add(2, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr e1(-1.0);  // a = 1
  e1.add(0, 1.0);
  LinExpr e2(-1.0);  // c = 1
  e2.add(2, 1.0);
  LinExpr e3(-1.0);  // b + s = 1
  e3.add(1, 1.0);
  e3.add(3, 1.0);
  LinExpr e4(-1.0);  // s = 1, hence b = 0
  e4.add(3, 1.0);
  pr.linear_eqs = {e1, e2, e3, e4};

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.point[1] == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(out.point[3] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(point_slack(pr, out.point) >= -1e-6);
}

TEST_CASE("quartic sum of squares gram completion") {
  // x^4 + 1 over the basis (1, x, x^2): q22 = 1, 2 q12 = 0, q11 + 2 q02 = 0,
  // 2 q01 = 0, q00 = 1, with the Gram matrix [[q00,q01,q02],...] required psd
  ConicProblem pr;
  pr.free_vars = 6;
  PsdBlock blk;
  blk.size = 3;
  int v = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = r; c < 3; ++c) blk.at(r, c).add(v++, 1.0);
  pr.psd_blocks.push_back(blk);
  // variable order: q00 q01 q02 q11 q12 q22
  auto eq = [](std::initializer_list<std::pair<int, double>> terms, double rhs) {
    LinExpr e(-rhs);
    for (auto [var, coef] : terms) e.add(var, coef);
    return e;
  };
  pr.linear_eqs = {
      eq({{0, 1.0}}, 1.0),            // constant term
      eq({{1, 2.0}}, 0.0),            // x
      eq({{3, 1.0}, {2, 2.0}}, 0.0),  // x^2
      eq({{4, 2.0}}, 0.0),            // x^3
      eq({{5, 1.0}}, 1.0),            // x^4
  };

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(point_slack(pr, out.point) >= -1e-6);
  CHECK(eq_violation(pr, out.point) < 1e-6);

  // flipping the constant term to -1 makes the target negative at zero
  pr.linear_eqs[0] = eq({{0, 1.0}}, -1.0);
  SolveOutcome bad = solve(pr);
  REQUIRE(bad.status == Status::Infeasible);
  REQUIRE(bad.certificate.has_value());
  check_certificate(pr, *bad.certificate);
}

TEST_CASE("objective mode maximizes a linear functional") {
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0) = LinExpr(1.0);
  blk.at(1, 1) = LinExpr(1.0);
  blk.at(0, 1).add(0, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr obj;
  obj.add(0, 1.0);
  pr.objective = obj;

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.margin == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(out.point[0] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("unbounded objective reports unknown") {
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 1;
  blk.at(0, 0).add(0, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr obj;
  obj.add(0, 1.0);
  pr.objective = obj;

  SolveOutcome out = solve(pr);
  CHECK(out.status == Status::Unknown);
}

TEST_CASE("empty problem is trivially feasible") {
  ConicProblem pr;
  pr.free_vars = 2;
  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.margin == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("solver output is deterministic") {
  ConicProblem pr;
  pr.free_vars = 2;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0) = LinExpr(2.0);
  blk.at(0, 0).add(0, 1.0);
  blk.at(1, 1) = LinExpr(2.0);
  blk.at(1, 1).add(1, -1.0);
  blk.at(0, 1).add(0, 0.5);
  blk.at(0, 1).add(1, 0.5);
  pr.psd_blocks.push_back(blk);

  SolveOutcome a = solve(pr);
  SolveOutcome b = solve(pr);
  REQUIRE(a.status == b.status);
  CHECK(a.margin == b.margin);
  CHECK(a.point == b.point);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("random interior pencils are solved feasible") {
  TestRng rng(20240517);
  for (int trial = 0; trial < 12; ++trial) {
    int n = 2 + static_cast<int>(rng.below(3));
    int nv = 1 + static_cast<int>(rng.below(3));
    ConicProblem pr;
    pr.free_vars = nv;
    PsdBlock blk;
    blk.size = n;
    // A0 = R R^T + I is comfortably positive definite at w = 0
    Eigen::MatrixXd R(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) R(r, c) = 2.0 * rng.unit() - 1.0;
    Eigen::MatrixXd A0 = R * R.transpose() + Eigen::MatrixXd::Identity(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = r; c < n; ++c) {
        blk.at(r, c) = LinExpr(A0(r, c));
        for (int v = 0; v < nv; ++v) blk.at(r, c).add(v, 2.0 * rng.unit() - 1.0);
      }
    pr.psd_blocks.push_back(blk);

    SolveOutcome out = solve(pr);
    REQUIRE(out.status == Status::Feasible);
    CHECK(point_slack(pr, out.point) >= -1e-6);
    CHECK(out.margin > 0);
  }
}

TEST_CASE("random traceless pencils with negative base are refuted") {
  TestRng rng(777001);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + static_cast<int>(rng.below(3));
    int nv = 1 + static_cast<int>(rng.below(2));
    ConicProblem pr;
    pr.free_vars = nv;
    PsdBlock blk;
    blk.size = n;
    double d = 0.2 + rng.unit();
    for (int r = 0; r < n; ++r) blk.at(r, r) = LinExpr(-d);
    // off-diagonal coefficient matrices have zero trace, so the trace of the
    // pencil stays negative for every w
    for (int v = 0; v < nv; ++v)
      for (int r = 0; r < n; ++r)
        for (int c = r + 1; c < n; ++c) blk.at(r, c).add(v, 2.0 * rng.unit() - 1.0);
    pr.psd_blocks.push_back(blk);

    SolveOutcome out = solve(pr);
    REQUIRE(out.status == Status::Infeasible);
    REQUIRE(out.certificate.has_value());
    check_certificate(pr, *out.certificate);
  }
}

TEST_CASE("random gram completions built from a psd target are feasible") {
  TestRng rng(90210);
  for (int trial = 0; trial < 8; ++trial) {
    int n = 2 + static_cast<int>(rng.below(3));
    ConicProblem pr;
    PsdBlock blk;
    blk.size = n;
    int nv = 0;
    std::vector<std::pair<int, int>> pos;
    for (int r = 0; r < n; ++r)
      for (int c = r; c < n; ++c) {
        blk.at(r, c).add(nv++, 1.0);
        pos.push_back({r, c});
      }
    pr.free_vars = nv;
    pr.psd_blocks.push_back(blk);
    Eigen::MatrixXd R(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) R(r, c) = 2.0 * rng.unit() - 1.0;
    Eigen::MatrixXd T = R * R.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    // pin a handful of random linear functionals to their target values
    int m = 2 + static_cast<int>(rng.below(3));
    for (int k = 0; k < m; ++k) {
      LinExpr e;
      double rhs = 0;
      for (int v = 0; v < nv; ++v) {
        double a = 2.0 * rng.unit() - 1.0;
        e.add(v, a);
        rhs += a * T(pos[v].first, pos[v].second);
      }
      e.c = -rhs;
      pr.linear_eqs.push_back(e);
    }

    SolveOutcome out = solve(pr);
    REQUIRE(out.status == Status::Feasible);
    CHECK(point_slack(pr, out.point) >= -1e-6);
    CHECK(eq_violation(pr, out.point) < 1e-6);
  }
}

TEST_CASE("input validation rejects malformed problems") {
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 1).add(5, 1.0);  // variable out of range
  pr.psd_blocks.push_back(blk);
  CHECK_THROWS_AS(solve(pr), std::invalid_argument);

  pr.psd_blocks.clear();
  PsdBlock bad;
  bad.size = 0;
  pr.psd_blocks.push_back(bad);
  CHECK_THROWS_AS(solve(pr), std::invalid_argument);

  pr.psd_blocks.clear();
  LinExpr e;
  e.add(0, std::numeric_limits<double>::quiet_NaN());
  pr.linear_ineqs.push_back(e);
  CHECK_THROWS_AS(solve(pr), std::invalid_argument);
}

TEST_CASE("sdpa dump covers the block structure") {
  ConicProblem pr;
  pr.free_vars = 1;
  PsdBlock blk;
  blk.size = 2;
  blk.at(0, 0) = LinExpr(1.0);
  blk.at(1, 1) = LinExpr(1.0);
  blk.at(0, 1).add(0, 1.0);
  pr.psd_blocks.push_back(blk);
  LinExpr row(1.0);
  row.add(0, -1.0);
  pr.linear_ineqs.push_back(row);

  std::string dump = to_sdpa(pr);
  CHECK(dump.find("1 = mDIM") != std::string::npos);
  CHECK(dump.find("2 = nBLOCK") != std::string::npos);
  CHECK(dump.find("2 -1 = bLOCKsTRUCT") != std::string::npos);
}

TEST_CASE("larger pencil converges within the iteration budget") {
  TestRng rng(424242);
  int n = 10, nv = 5;
  ConicProblem pr;
  pr.free_vars = nv;
  PsdBlock blk;
  blk.size = n;
  Eigen::MatrixXd R(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) R(r, c) = 2.0 * rng.unit() - 1.0;
  Eigen::MatrixXd A0 = R * R.transpose() + 2.0 * Eigen::MatrixXd::Identity(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = r; c < n; ++c) {
      blk.at(r, c) = LinExpr(A0(r, c));
      for (int v = 0; v < nv; ++v) blk.at(r, c).add(v, rng.unit() - 0.5);
    }
  pr.psd_blocks.push_back(blk);

  SolveOutcome out = solve(pr);
  REQUIRE(out.status == Status::Feasible);
  CHECK(out.iterations < 200);
  CHECK(point_slack(pr, out.point) >= -1e-6);
}
