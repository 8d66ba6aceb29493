#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "fogml/gadmm.hpp"

using namespace fogml;

namespace {

QuadraticObjective scalar_quadratic(double h, double b) {
  Matrix m(1, 1, h);
  return {m, Vec{h * b}, 0.5 * h * b * b};
}

Vec to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(Groups, EvenAndOddChains) {
  const auto four = assign_groups(4);
  EXPECT_EQ(four.heads, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(four.tails, (std::vector<std::size_t>{1, 3}));
  const auto five = assign_groups(5);
  EXPECT_EQ(five.heads, (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(five.tails, (std::vector<std::size_t>{1, 3}));
  EXPECT_THROW(assign_groups(1), Error);
}

TEST(Groups, EveryEdgeJoinsHeadAndTail) {
  const std::vector<std::size_t> ids{4, 2, 0, 3, 1, 5, 6};
  const auto a = assign_groups(ids);
  EXPECT_EQ(a.order, ids);
  auto is_head = [&](std::size_t d) {
    return std::find(a.heads.begin(), a.heads.end(), d) != a.heads.end();
  };
  for (std::size_t p = 0; p + 1 < ids.size(); ++p) {
    EXPECT_NE(is_head(ids[p]), is_head(ids[p + 1]));
  }
  EXPECT_EQ(a.heads.size() + a.tails.size(), ids.size());
}

TEST(Primal, PureProximityCopiesNeighbor) {
  auto s = make_gadmm_state(2, 2, 1.5);
  s.theta[1] = {0.7, -3.0};
  QuadraticObjective zero{Matrix(2, 2), Vec{0, 0}, 0};
  const auto got = primal_update(0, s, zero);
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(got[j], s.theta[1][j], 1e-14);
}

TEST(Primal, ScalarClosedForm) {
  for (double rho : {0.5, 1.0, 3.0}) {
    auto s = make_gadmm_state(2, 1, rho);
    s.theta[1] = {2.0};
    const double b = -1.0;
    const auto got = primal_update(0, s, scalar_quadratic(1.0, b));
    EXPECT_NEAR(got[0], (b + rho * 2.0) / (1.0 + rho), 1e-14);
  }
}

TEST(Primal, InteriorDeviceMatchesGridMinimizer) {
  auto s = make_gadmm_state(3, 1, 0.8);
  s.theta = {{1.5}, {0.0}, {-0.5}};
  s.lambda = {{0.3}, {-0.7}};
  const auto f = scalar_quadratic(2.0, 0.4);
  auto lagrangian = [&](double x) {
    const Vec t{x};
    return f.value(t) - s.lambda[0][0] * x + s.lambda[1][0] * x +
           0.5 * s.rho * ((x - 1.5) * (x - 1.5) + (x + 0.5) * (x + 0.5));
  };
  double lo = -10, hi = 10, best = 0;
  for (int level = 0; level < 8; ++level) {
    double best_val = 1e300;
    const double step = (hi - lo) / 1000;
    for (int i = 0; i <= 1000; ++i) {
      const double x = lo + i * step;
      if (lagrangian(x) < best_val) {
        best_val = lagrangian(x);
        best = x;
      }
    }
    lo = best - 2 * step;
    hi = best + 2 * step;
  }
  EXPECT_NEAR(primal_update(1, s, f)[0], best, 1e-6);
}

TEST(Dual, Arithmetic) {
  auto s = make_gadmm_state(2, 1, 2.0);
  s.theta = {{1.0}, {0.0}};
  dual_update(s);
  EXPECT_EQ(s.lambda[0], Vec{2.0});
  auto c = make_gadmm_state(3, 2, 1.0);
  c.theta = {{1, 2}, {1, 2}, {1, 2}};
  c.lambda = {{0.5, 0.1}, {-1, 3}};
  const auto before = c.lambda;
  dual_update(c);
  EXPECT_EQ(c.lambda, before);
}

TEST(Gadmm, SixDeviceLeastSquaresReachesOptimum) {
  const auto ls = fixture::least_squares(6, 8, 4, 11);
  RunContext ctx;
  GadmmOptions opt;
  opt.max_rounds = 2000;
  opt.tol = 1e-9;
  const auto res = run_gadmm<QuadraticObjective>(ls.objectives, assign_groups(6), opt, &ctx);
  ASSERT_TRUE(res.converged);
  EXPECT_LE(res.history.back().residual, 1e-6);
  EXPECT_LE(std::abs(res.history.back().objective_mean - ls.optimal_value), 1e-6);
  for (const auto& th : res.state.theta) {
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(th[j], ls.optimum(j), 1e-6);
  }
}

TEST(Gadmm, HalfTheDevicesBroadcastPerHalfRound) {
  for (std::size_t n : {5u, 6u}) {
    const auto ls = fixture::least_squares(n, 5, 3, 2);
    RunContext ctx;
    GadmmOptions opt;
    opt.max_rounds = 7;
    opt.tol = 0;
    const auto chain = assign_groups(n);
    run_gadmm<QuadraticObjective>(ls.objectives, chain, opt, &ctx);
    std::map<std::size_t, std::vector<NodeId>> by_round;
    for (const auto& e : ctx.ledger.entries()) by_round[e.round].push_back(e.src);
    ASSERT_EQ(by_round.size(), 7u);
    for (const auto& [r, srcs] : by_round) {
      ASSERT_EQ(srcs.size(), n);
      for (std::size_t i = 0; i < (n + 1) / 2; ++i) EXPECT_EQ(srcs[i] % 2, 0) << "head first";
      for (std::size_t i = (n + 1) / 2; i < n; ++i) EXPECT_EQ(srcs[i] % 2, 1);
    }
  }
}

TEST(Gadmm, DeliveriesOnlyReachChainNeighbors) {
  const std::vector<std::size_t> order{3, 0, 4, 1, 2};
  const auto ls = fixture::least_squares(5, 5, 2, 3);
  GadmmOptions opt;
  opt.max_rounds = 5;
  const auto chain = assign_groups(order);
  const auto res = run_gadmm<QuadraticObjective>(ls.objectives, chain, opt);
  const auto topo = Topology::chain(5);
  auto pos = [&](std::size_t d) {
    return static_cast<NodeId>(std::find(order.begin(), order.end(), d) - order.begin());
  };
  ASSERT_FALSE(res.deliveries.empty());
  for (const auto& d : res.deliveries) EXPECT_TRUE(topo.adjacent(pos(d.src), pos(d.dst)));
}

TEST(Gadmm, TwoDevicesMatchClassicAdmm) {
  const auto ls = fixture::least_squares(2, 6, 3, 4);
  const double rho = 1.3;
  std::vector<Eigen::VectorXd> ref0, ref1;
  {
    Eigen::VectorXd t0 = Eigen::VectorXd::Zero(3), t1 = t0, lam = t0;
    const Eigen::MatrixXd h0 = ls.a[0].transpose() * ls.a[0], h1 = ls.a[1].transpose() * ls.a[1];
    const Eigen::VectorXd c0 = ls.a[0].transpose() * ls.b[0], c1 = ls.a[1].transpose() * ls.b[1];
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
    for (int k = 0; k < 30; ++k) {
      t0 = (h0 + rho * id).ldlt().solve(c0 - lam + rho * t1);
      t1 = (h1 + rho * id).ldlt().solve(c1 + lam + rho * t0);
      lam += rho * (t0 - t1);
      ref0.push_back(t0);
      ref1.push_back(t1);
    }
  }
  GadmmOptions opt;
  opt.rho = rho;
  opt.max_rounds = 30;
  opt.tol = 0;
  std::size_t k = 0;
  opt.on_round = [&](const ConsensusRecord&, const GadmmState& s) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(s.theta[0][j], ref0[k](j), 1e-10);
      EXPECT_NEAR(s.theta[1][j], ref1[k](j), 1e-10);
    }
    ++k;
  };
  run_gadmm<QuadraticObjective>(ls.objectives, assign_groups(2), opt);
  EXPECT_EQ(k, 30u);
}

TEST(Gadmm, DualsMatchKktMultipliers) {
  const auto ls = fixture::least_squares(4, 5, 2, 5);
  GadmmOptions opt;
  opt.max_rounds = 5000;
  opt.tol = 1e-12;
  const auto res = run_gadmm<QuadraticObjective>(ls.objectives, assign_groups(4), opt);
  ASSERT_TRUE(res.converged);
  // Lagrangian sum f_n - sum nu_e^T (theta_e - theta_{e+1}):
  // grad f_0 = nu_0, grad f_n = nu_n - nu_{n-1}.
  const Vec star = to_vec(ls.optimum);
  Vec nu(2, 0.0);
  for (std::size_t e = 0; e < 3; ++e) {
    axpy(1.0, ls.objectives[e].gradient(star), nu);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(-res.state.lambda[e][j], nu[j], 1e-5) << e;
  }
}

TEST(Gadmm, UnconvergedRunIsFlagged) {
  const auto ls = fixture::least_squares(4, 5, 3, 6);
  GadmmOptions opt;
  opt.max_rounds = 2;
  opt.tol = 1e-12;
  const auto res = run_gadmm<QuadraticObjective>(ls.objectives, assign_groups(4), opt);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.history.size(), 2u);
}

TEST(Gadmm, FasterThanDecentralizedGradientDescent) {
  const auto ls = fixture::least_squares(6, 8, 4, 11);
  GadmmOptions g;
  g.max_rounds = 5000;
  g.tol = 0;
  DgdOptions d;
  double beta = 0;
  for (const auto& f : ls.objectives) beta = std::max(beta, f.smoothness());
  d.step = 1.0 / beta;
  d.max_rounds = 5000;
  d.tol = 0;
  const auto chain = assign_groups(6);
  const auto gr = run_gadmm<QuadraticObjective>(ls.objectives, chain, g);
  const auto dr = run_dgd<QuadraticObjective>(ls.objectives, chain, d);
  const std::size_t kg = fixture::rounds_to_gap(gr, ls.optimal_value, 1e-3);
  const std::size_t kd = fixture::rounds_to_gap(dr, ls.optimal_value, 1e-3);
  ASSERT_GT(kg, 0u);
  EXPECT_TRUE(kd == 0 || kg < kd) << kg << " vs " << kd;
}

TEST(Gadmm, LogisticObjectiveReachesConsensus) {
  fixture::BlobSetup s;
  s.labels = 3;
  s.dim = 3;
  const auto fed = fixture::blob_federation(s);
  std::vector<LogisticObjective> obj;
  for (const auto& d : fed.devices) obj.emplace_back(fed.spec, d.data, 20);
  GadmmOptions opt;
  opt.max_rounds = 300;
  opt.tol = 1e-4;
  const auto res = run_gadmm<LogisticObjective>(obj, assign_groups(fed.num_devices()), opt);
  EXPECT_LT(res.history.back().residual, res.history.front().residual);
  EXPECT_LE(res.history.back().residual, 1e-3);
}
