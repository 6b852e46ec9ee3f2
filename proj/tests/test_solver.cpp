#include <gtest/gtest.h>

#include <random>

#include <Eigen/Dense>

#include "sctep/formulation.hpp"
#include "sctep/ipm_solver.hpp"
#include "sctep/kkt_factor.hpp"
#include "test_support.hpp"

using namespace sctep;
using sctep::testing::case5_path;

namespace {

using SpMat = BorderedBlockFactor::SpMat;

// Random symmetric matrix with `blocks` dense diagonal blocks of size `bs`
// and a border of `nb` unknowns placed last.
Eigen::MatrixXd bordered_matrix(int blocks, int bs, int nb, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const int n = blocks * bs + nb;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < blocks; ++k) {
    for (int i = 0; i < bs; ++i) {
      for (int j = 0; j <= i; ++j) a(k * bs + i, k * bs + j) = g(rng);
      for (int j = 0; j < nb; ++j) a(blocks * bs + j, k * bs + i) = g(rng);
    }
  }
  for (int i = 0; i < nb; ++i) {
    for (int j = 0; j <= i; ++j) a(blocks * bs + i, blocks * bs + j) = g(rng);
  }
  return a.selfadjointView<Eigen::Lower>();
}

SpMat lower_sparse(const Eigen::MatrixXd& a) {
  SpMat s = a.triangularView<Eigen::Lower>().toDenseMatrix().sparseView();
  // Keep explicit entries for the whole block pattern, zeros included.
  return s;
}

double max_row_residual(const SctepProblem& p, const std::vector<double>& x, std::size_t lo,
                        std::size_t hi) {
  const auto v = row_violations(p.qp, x);
  double m = 0.0;
  for (std::size_t r = lo; r < hi; ++r) m = std::max(m, v[r]);
  return m;
}

// Network problems start from the flat voltage profile, as every caller does.
SolveResult solve_flat(const SctepProblem& p, const SolverSettings& s = {}) {
  return solve(p.qp, s, InitialPoint{flat_start(p), std::nullopt});
}

}  // namespace

TEST(KktFactor, InertiaAndSolveMatchDenseOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    const int blocks = 3;
    const int bs = 5;
    const int nb = 2;
    const auto a = bordered_matrix(blocks, bs, nb, rng);
    const int n = static_cast<int>(a.rows());
    std::vector<int> part(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < blocks * bs; ++i) part[i] = i / bs;

    BorderedBlockFactor f;
    const auto k = lower_sparse(a);
    f.analyze(k, part);
    ASSERT_TRUE(f.factorize(k));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (int i = 0; i < n; ++i) (eig.eigenvalues()[i] > 0 ? pos : neg) += 1;
    EXPECT_EQ(f.inertia().positive, pos);
    EXPECT_EQ(f.inertia().negative, neg);
    EXPECT_EQ(f.inertia().zero, 0u);

    Eigen::VectorXd rhs = Eigen::VectorXd::NullaryExpr(n, [&] {
      return std::normal_distribution<double>()(rng);
    });
    const Eigen::VectorXd want = a.fullPivLu().solve(rhs);
    const Eigen::VectorXd got = f.solve(rhs);
    EXPECT_LT((got - want).norm() / want.norm(), 1e-9);
  }
}

TEST(KktFactor, SingularBlockIsReported) {
  // Block {0, 1} is [[1, 1], [1, 1]], rank one.
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 3);
  a(2, 0) = a(0, 2) = a(2, 1) = a(1, 2) = 0.5;
  const SpMat k = lower_sparse(a);
  BorderedBlockFactor f;
  f.analyze(k, {0, 0, -1});
  f.factorize(k);
  EXPECT_GE(f.inertia().zero, 1u);
}

TEST(KktFactor, ComponentsSplitAroundBorder) {
  // 0-1 connected, 2-3 connected, 4 is the border and touches everything.
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(5, 5);
  a(1, 0) = a(3, 2) = 1.0;
  for (int i = 0; i < 4; ++i) a(4, i) = 1.0;
  const SpMat k = lower_sparse(a);
  const auto part = partition_by_components(k, {false, false, false, false, true});
  EXPECT_EQ(part[4], -1);
  EXPECT_EQ(part[0], part[1]);
  EXPECT_EQ(part[2], part[3]);
  EXPECT_NE(part[0], part[2]);
}

TEST(Solver, BoundConstrainedQuadratic) {
  // min (x - 2)^2 with 0 <= x <= 1: x = 1, objective 1.
  QcqpProblem qp;
  qp.x_lo = {0.0};
  qp.x_hi = {1.0};
  qp.objective.constant = 4.0;
  qp.objective.add_linear(0, -4.0);
  qp.objective.add_quad(0, 0, 1.0);
  const auto r = solve(qp, {});
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.objective, 1.0, 1e-6);
}

TEST(Solver, LinearObjectiveOnDisc) {
  // min x + y with x^2 + y^2 <= 2: x = y = -1.
  QcqpProblem qp;
  qp.x_lo = {-kInf, -kInf};
  qp.x_hi = {kInf, kInf};
  qp.objective.add_linear(0, 1.0);
  qp.objective.add_linear(1, 1.0);
  ConstraintRow disc;
  disc.hi = 2.0;
  disc.fn.add_quad(0, 0, 1.0);
  disc.fn.add_quad(1, 1, 1.0);
  qp.rows.push_back(disc);
  const auto r = solve(qp, {});
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_NEAR(r.x[0], -1.0, 1e-6);
  EXPECT_NEAR(r.x[1], -1.0, 1e-6);
  EXPECT_NEAR(r.duals.rows[0], 0.5, 1e-5);
}

TEST(Solver, RowViolatedByFixedVariablesIsInfeasible) {
  QcqpProblem qp;
  qp.x_lo = {1.0, 0.0};
  qp.x_hi = {1.0, 1.0};
  qp.objective.add_linear(1, 1.0);
  ConstraintRow r;
  r.lo = r.hi = 2.0;
  r.fn.add_linear(0, 1.0);
  qp.rows.push_back(r);
  const auto res = solve(qp, {});
  EXPECT_EQ(res.status, SolveStatus::Infeasible);
  EXPECT_EQ(res.x.size(), 2u);
}

TEST(Solver, InfeasibleProblemIsNotOptimal) {
  QcqpProblem qp;
  qp.x_lo = {0.0};
  qp.x_hi = {1.0};
  qp.objective.add_linear(0, 1.0);
  ConstraintRow r;
  r.lo = r.hi = 5.0;
  r.fn.add_linear(0, 1.0);
  qp.rows.push_back(r);
  EXPECT_FALSE(solve(qp, {}).ok());
}

TEST(Solver, StatusStringsRoundTrip) {
  for (auto s : {SolveStatus::Optimal, SolveStatus::IterationLimit, SolveStatus::Infeasible,
                 SolveStatus::NumericalFailure}) {
    EXPECT_EQ(solve_status_from_string(to_string(s)), s);
  }
  EXPECT_FALSE(solve_status_from_string("bogus").has_value());
}

TEST(Solver, OutageIsolatingLoadCurtailsIt) {
  // The only line to the 50 MW load is out in k1, so all of it is curtailed
  // there and none in k0.
  const auto c = sctep::testing::two_bus_islanding_case();
  const auto p = build_nlp(c, {}, ObjectiveKind::MinCurtailment);
  const auto r = solve_flat(p);
  ASSERT_TRUE(r.ok()) << r.message;
  const auto& L = p.layout;
  EXPECT_NEAR(r.x[L.lc(L.block(0, 1), 1)] * c.base_mva, 50.0, 1e-5);
  EXPECT_NEAR(r.x[L.lc(L.block(0, 0), 1)] * c.base_mva, 0.0, 1e-5);
  EXPECT_NEAR(r.objective, 50.0, 1e-4);
}

TEST(Solver, Case5NoInvestmentCurtails) {
  const auto c = load_case(case5_path());
  const auto p = build_nlp(c, {}, ObjectiveKind::MinCurtailment);
  const auto r = solve_flat(p);
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_GT(r.objective, 1.0);
  EXPECT_LT(r.wall_seconds, 5.0);
  for (const auto& br : p.block_rows) {
    EXPECT_LE(max_row_residual(p, r.x, br.flow, br.thermal), 1e-6);
    EXPECT_LE(max_row_residual(p, r.x, br.thermal, br.end), 1e-6);
  }
  EXPECT_LE(r.residuals.stationarity, 1e-6);
  EXPECT_LE(r.residuals.feasibility, 1e-6);
  EXPECT_LE(r.residuals.complementarity, 1e-6);
}

TEST(Solver, ZeroDemandNeedsNoCurtailment) {
  auto c = load_case(case5_path());
  for (auto& b : c.buses) b.demand_p = b.demand_q = b.res_p = 0.0;
  for (auto& s : c.scenarios) s.overrides.clear();
  const auto p = build_nlp(c, {}, ObjectiveKind::MinCurtailment);
  const auto r = solve_flat(p);
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_NEAR(r.objective, 0.0, 1e-6);
}

TEST(Solver, GrandCoalitionCostInvestsInFlex) {
  const auto c = load_case(case5_path());
  const auto p = build_nlp(c, Coalition::all(8), ObjectiveKind::MinExpectedCost);
  const auto r = solve_flat(p);
  ASSERT_TRUE(r.ok()) << r.message;
  const auto& L = p.layout;
  for (std::size_t f = 0; f < c.flex_providers.size(); ++f) {
    EXPECT_GT(r.x[L.fi(f)] * c.base_mva, 99.0);
  }
  double li = 0.0;
  for (std::size_t l = 0; l < c.lines.size(); ++l) li += r.x[L.li(l)];
  EXPECT_GT(li * c.base_mva, 1.0);
}

TEST(Solver, RepeatedSolvesAreBitIdentical) {
  const auto c = sctep::testing::three_bus_case();
  const auto p = build_nlp(c, Coalition::all(3), ObjectiveKind::MinExpectedCost);
  const auto a = solve_flat(p);
  const auto b = solve_flat(p);
  ASSERT_TRUE(a.ok());
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.objective, b.objective);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].mu, b.trace[i].mu);
    EXPECT_EQ(a.trace[i].inf_pr, b.trace[i].inf_pr);
    EXPECT_EQ(a.trace[i].alpha_pr, b.trace[i].alpha_pr);
  }
}

TEST(Solver, IterationCallbackSeesEveryIteration) {
  const auto c = sctep::testing::three_bus_case();
  const auto p = build_nlp(c, {}, ObjectiveKind::MinCurtailment);
  SolverSettings s;
  int calls = 0;
  s.on_iteration = [&](const IterationRecord&) { ++calls; };
  const auto r = solve_flat(p, s);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(static_cast<std::size_t>(calls), r.trace.size());
}

TEST(Solver, IterationLimitIsReported) {
  const auto c = load_case(case5_path());
  const auto p = build_nlp(c, {}, ObjectiveKind::MinCurtailment);
  SolverSettings s;
  s.max_iter = 2;
  EXPECT_EQ(solve_flat(p, s).status, SolveStatus::IterationLimit);
}

TEST(WarmStart, ClipsIntoNewBounds) {
  const auto c = sctep::testing::three_bus_case();
  const auto big = build_nlp(c, Coalition::all(3), ObjectiveKind::MinExpectedCost);
  const auto small = build_nlp(c, {}, ObjectiveKind::MinExpectedCost);
  const auto r = solve_flat(big);
  ASSERT_TRUE(r.ok());
  const auto ip = warm_start_from(r, small.qp);
  for (std::size_t v = 0; v < ip.x.size(); ++v) {
    EXPECT_GE(ip.x[v], small.qp.x_lo[v]);
    EXPECT_LE(ip.x[v], std::max(small.qp.x_lo[v], small.qp.x_hi[v]));
  }
  EXPECT_TRUE(ip.duals.has_value());
}

TEST(WarmStart, SizeMismatchThrows) {
  const auto r = solve_flat(
      build_nlp(sctep::testing::three_bus_case(), {}, ObjectiveKind::MinCurtailment));
  const auto other = build_nlp(load_case(case5_path()), {}, ObjectiveKind::MinCurtailment);
  EXPECT_THROW(warm_start_from(r, other.qp), std::invalid_argument);
}

TEST(WarmStart, FromOwnSolutionIsCheap) {
  const auto c = load_case(case5_path());
  const auto p = build_nlp(c, Coalition::all(8), ObjectiveKind::MinCurtailment);
  const auto cold = solve_flat(p);
  ASSERT_TRUE(cold.ok());
  const auto warm = solve(p.qp, {}, warm_start_from(cold, p.qp));
  ASSERT_TRUE(warm.ok()) << warm.message;
  EXPECT_LT(warm.iterations, cold.iterations);
  EXPECT_NEAR(warm.objective, cold.objective, 1e-4 * std::max(1.0, cold.objective));
}

TEST(WarmStart, SmallerCoalitionSeedsLargerOne) {
  const auto c = load_case(case5_path());
  const auto s = build_nlp(c, Coalition{0b01000000}, ObjectiveKind::MinCurtailment);
  const auto t = build_nlp(c, Coalition{0b11000000}, ObjectiveKind::MinCurtailment);
  const auto rs = solve_flat(s);
  ASSERT_TRUE(rs.ok());
  const auto rt = solve(t.qp, {}, warm_start_from(rs, t.qp));
  ASSERT_TRUE(rt.ok()) << rt.message;
  EXPECT_LE(rt.objective, rs.objective + 1e-4 * std::max(1.0, rs.objective));
}

TEST(WarmStart, PrimalOnlyPointKeepsColdSchedule) {
  const auto c = sctep::testing::three_bus_case();
  const auto p = build_nlp(c, Coalition::all(3), ObjectiveKind::MinCurtailment);
  const auto cold = solve_flat(p);
  ASSERT_TRUE(cold.ok());
  // Primal point of the optimum without multipliers: still a cold start.
  const auto r = solve(p.qp, {}, InitialPoint{cold.x, std::nullopt});
  ASSERT_FALSE(r.trace.empty());
  EXPECT_EQ(r.trace.front().mu, SolverSettings{}.mu_init);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(r.objective, cold.objective, 1e-5 * std::max(1.0, cold.objective));
}
