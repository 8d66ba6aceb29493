#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "fogml/fedavg.hpp"
#include "oracles.hpp"

using namespace fogml;

TEST(Aggregate, Examples) {
  const auto spec = ModelSpec::logistic(1, 2);
  auto pv = [&](double v) { return ParamVector{spec, {v, v, v, v}}; };
  std::vector<ParamVector> eq{pv(0), pv(2)};
  EXPECT_EQ(aggregate(eq, std::vector<double>{5, 5}).values[0], 1.0);
  std::vector<ParamVector> w{pv(0), pv(4)};
  EXPECT_EQ(aggregate(w, std::vector<double>{1, 3}).values[0], 3.0);
  std::vector<ParamVector> same{pv(0.3), pv(0.3), pv(0.3)};
  EXPECT_EQ(aggregate(same, std::vector<double>{1, 1, 1}).values, pv(0.3).values);
}

TEST(Aggregate, MatchesOracleAndRejectsMismatch) {
  Stream rng(2);
  const auto spec = ModelSpec::mlp(3, 4, 2);
  std::vector<ParamVector> ps;
  std::vector<std::vector<double>> raw;
  std::vector<double> w;
  for (int d = 0; d < 5; ++d) {
    ParamVector p = ParamVector::zeros(spec);
    for (auto& v : p.values) v = rng.normal();
    ps.push_back(p);
    raw.push_back(p.values);
    w.push_back(1.0 + static_cast<double>(rng.uniform_index(10)));
  }
  const auto ref = oracle::weighted_average(raw, w);
  const auto got = aggregate(ps, w);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got.values[i], ref[i], 1e-12);
  ps.push_back(ParamVector::zeros(ModelSpec::logistic(3, 2)));
  w.push_back(1);
  EXPECT_THROW(aggregate(ps, w), Error);
}

TEST(Quantize, ErrorBoundForAllBits) {
  Stream rng(3);
  Vec v(200);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  for (int b = 1; b <= 32; ++b) {
    const auto q = quantize_roundtrip(v, b);
    const double bound = (hi - lo) / (std::ldexp(1.0, b) - 1.0) / 2.0 + 1e-12;
    for (std::size_t i = 0; i < v.size(); ++i) ASSERT_LE(std::abs(q[i] - v[i]), bound) << b;
  }
  const auto q8 = quantize_roundtrip(v, 8);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LE(std::abs(q8[i] - v[i]), 1.0 / 255.0);
  const auto q32 = quantize_roundtrip(v, 32);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LT(std::abs(q32[i] - v[i]), 1e-6 * std::abs(v[i]) + 1e-9);
}

TEST(Quantize, ConstantVectorIsExact) {
  const Vec v(10, -0.7);
  for (int b : {1, 4, 16}) EXPECT_EQ(quantize_roundtrip(v, b), v);
}

TEST(Sparsify, TopKRule) {
  Vec residual;
  const auto m = sparsify(Vec{3, -1, 2, 0}, 0.5, residual);
  EXPECT_EQ(m.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(m.values, (Vec{3, 2}));
  EXPECT_EQ(residual, (Vec{0, -1, 0, 0}));
  const auto next = sparsify(Vec{0, -1, 0, 0}, 0.25, residual);
  EXPECT_EQ(next.indices, (std::vector<std::size_t>{1}));
  EXPECT_EQ(next.values, Vec{-2});
}

TEST(Sparsify, FullFractionIsDense) {
  Stream rng(4);
  Vec v(17), residual;
  for (auto& x : v) x = rng.normal();
  const auto m = sparsify(v, 1.0, residual);
  EXPECT_EQ(densify(m), v);
  for (double r : residual) EXPECT_EQ(r, 0.0);
  EXPECT_THROW(sparsify(v, 0.0, residual), Error);
}

TEST(LocalTrain, ZeroLrLeavesParams) {
  const auto fed = fixture::blob_federation({});
  Stream init(1);
  const auto p = init_params(fed.spec, init);
  Stream rng(2);
  EXPECT_EQ(local_train(fed.devices[0].data, p, 1, 0.0, 8, rng).values, p.values);
  Stream rng2(2);
  EXPECT_THROW(local_train(fed.devices[0].data, p, 0, 0.1, 8, rng2), Error);
}

TEST(LocalTrain, FullBatchConvexLossNonIncreasing) {
  const auto fed = fixture::blob_federation({});
  const auto& data = fed.devices[0].data;
  ParamVector p = ParamVector::zeros(fed.spec);
  double prev = loss_only(p, data);
  for (int t = 0; t < 50; ++t) {
    Stream rng(t);
    p = local_train(data, p, 1, 0.05, data.rows * 4, rng);
    const double cur = loss_only(p, data);
    EXPECT_LE(cur, prev + 1e-3) << t;
    prev = std::min(prev, cur);
  }
}

TEST(FedAvg, SingleDeviceEqualsPlainSgd) {
  fixture::BlobSetup s;
  s.devices = 1;
  const auto fed = fixture::blob_federation(s);
  FlConfig cfg;
  cfg.tau = 4;
  cfg.rounds = 3;
  const auto res = run_fedavg(fed, cfg);
  Stream init = make_stream(fed.master_seed, Scope::kInit, kServerStreamIndex);
  ParamVector p = init_params(fed.spec, init);
  for (std::size_t r = 1; r <= 3; ++r) {
    Stream rng = local_stream(fed.master_seed, 0, r);
    p = local_train(fed.devices[0].data, p, cfg.tau, cfg.lr, cfg.batch_size, rng);
  }
  EXPECT_EQ(res.global.values, p.values);
}

TEST(FedAvg, IdenticalDevicesEqualLocalTraining) {
  fixture::BlobSetup s;
  s.devices = 1;
  auto fed = fixture::blob_federation(s);
  fed.devices.push_back(fed.devices[0]);
  fed.devices.push_back(fed.devices[0]);
  FlConfig cfg;
  cfg.rounds = 1;
  FedAvgEngine eng(fed, cfg);
  const auto start = eng.global();
  eng.step(cfg.tau);
  Stream rng = local_stream(fed.master_seed, 0, 1);
  const auto ref = local_train(fed.devices[0].data, start, cfg.tau, cfg.lr, cfg.batch_size, rng);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(eng.global().values[i], ref.values[i], 1e-14);
}

TEST(FedAvg, LedgerHasNUplinkAndNDownlinkPerRound) {
  const auto fed = fixture::blob_federation({});
  FlConfig cfg;
  cfg.rounds = 4;
  const auto res = run_fedavg(fed, cfg);
  const std::size_t P = fed.spec.param_count(), N = fed.num_devices();
  for (std::size_t r = 1; r <= 4; ++r) {
    std::size_t up = 0, down = 0;
    for (const auto& e : res.context.ledger.entries()) {
      if (e.round != r) continue;
      EXPECT_EQ(e.bytes, P * 4);
      (e.direction == Direction::kUplink ? up : down) += 1;
    }
    EXPECT_EQ(up, N);
    EXPECT_EQ(down, N);
  }
  EXPECT_EQ(res.context.metrics.size(), 4u);
}

TEST(FedAvg, MetricsCumulativeColumnsMonotone) {
  const auto fed = fixture::blob_federation({});
  FlConfig cfg;
  cfg.rounds = 5;
  cfg.payload.mode = PayloadMode::kQuantized;
  const auto res = run_fedavg(fed, cfg);
  for (std::size_t i = 1; i < res.context.metrics.size(); ++i) {
    const auto &a = res.context.metrics[i - 1], &b = res.context.metrics[i];
    EXPECT_GE(b.cum_uplink_bits, a.cum_uplink_bits);
    EXPECT_GE(b.cum_downlink_bits, a.cum_downlink_bits);
    EXPECT_GE(b.cum_cost, a.cum_cost);
    EXPECT_GE(b.sim_time, a.sim_time);
  }
  EXPECT_EQ(res.context.ledger.entries().front().bytes,
            fed.spec.param_count() * 4);  // downlink stays dense
  EXPECT_EQ(res.context.ledger.uplink_bytes(),
            5 * fed.num_devices() * payload_bytes(Message::quantized_params(fed.spec.param_count(), 8)));
}

TEST(FedAvg, BudgetStopsRunAndClampsLastInterval) {
  const auto fed = fixture::blob_federation({});
  FlConfig cfg;
  cfg.tau = 5;
  cfg.rounds = 100;
  const auto res = run_fedavg(fed, cfg, CostBudget{1, 10, 105});
  EXPECT_LE(res.context.budget.consumed(), 105.0);
  ASSERT_EQ(res.context.metrics.size(), 4u);
  EXPECT_EQ(res.context.metrics.back().tau, std::optional<std::size_t>{1});
  EXPECT_THROW(run_fedavg(fed, cfg, CostBudget{1, 10, 5}), Error);
}

TEST(FedAvg, SparseWithErrorFeedbackTracksDense) {
  fixture::BlobSetup s;
  s.spread = 2.5;
  s.seed = 5;
  const auto fed = fixture::blob_federation(s);
  FlConfig dense;
  dense.tau = 5;
  dense.rounds = 10;
  const double target = run_fedavg(fed, dense).context.final_accuracy() - 0.02;
  FlConfig sparse = dense;
  sparse.payload = {PayloadMode::kSparse, 8, 0.25};
  sparse.rounds = 30;
  const auto res = run_fedavg(fed, sparse);
  bool reached = false;
  for (const auto& m : res.context.metrics) reached = reached || m.test_acc >= target;
  EXPECT_TRUE(reached);
}

TEST(FedAvg, DeterministicRerun) {
  const auto fed = fixture::blob_federation({});
  FlConfig cfg;
  cfg.payload = {PayloadMode::kSparse, 8, 0.3};
  const auto a = run_fedavg(fed, cfg), b = run_fedavg(fed, cfg);
  EXPECT_EQ(a.context.metrics_csv(), b.context.metrics_csv());
  EXPECT_EQ(a.context.ledger.csv(), b.context.ledger.csv());
}

TEST(Local, NoCommunication) {
  const auto fed = fixture::blob_federation({});
  FlConfig cfg;
  cfg.rounds = 3;
  const auto res = run_local(fed, cfg);
  EXPECT_TRUE(res.context.ledger.entries().empty());
  EXPECT_EQ(res.models.size(), fed.num_devices());
  EXPECT_EQ(res.context.metrics.size(), 3u);
}
