#include <gtest/gtest.h>

#include "fogml/netsim.hpp"

using namespace fogml;

TEST(PayloadBytes, ByteModelExamples) {
  EXPECT_EQ(payload_bytes(Message::dense_params(50890)), 203560u);
  EXPECT_EQ(payload_bytes(Message::logit_table(10)), 400u);
  EXPECT_GE(203560.0 / 400.0, 10.0);
  EXPECT_EQ(payload_bytes(Message::sdi(10)), 2u);
  EXPECT_EQ(payload_bytes(Message::quantized_params(100, 8)), 108u);
  EXPECT_EQ(payload_bytes(Message::sparse_params(100, 0.05)), 5u * 8u);
  EXPECT_EQ(payload_bytes(Message::gradient(10), 8), 80u);
  EXPECT_EQ(payload_bytes(Message::seeds_dense(3, 784)), 3u * 784u * 4u);
  EXPECT_EQ(payload_bytes(Message::block(10, 2)), 40u + 20u + 24u);
}

TEST(PayloadBytes, RejectsBadParameters) {
  EXPECT_THROW(payload_bytes(Message::quantized_params(10, 0)), Error);
  EXPECT_THROW(payload_bytes(Message::sparse_params(10, 0.0)), Error);
  Message m;
  m.kind = static_cast<MessageKind>(99);
  EXPECT_THROW(payload_bytes(m), Error);
}

TEST(PayloadBytes, MonotoneInSize) {
  for (std::size_t p = 1; p < 200; ++p) {
    EXPECT_LT(payload_bytes(Message::dense_params(p)), payload_bytes(Message::dense_params(p + 1)));
    EXPECT_LE(payload_bytes(Message::quantized_params(p, 3)),
              payload_bytes(Message::quantized_params(p + 1, 3)));
    EXPECT_LE(payload_bytes(Message::sparse_params(p, 0.3)),
              payload_bytes(Message::sparse_params(p + 1, 0.3)));
    EXPECT_LE(payload_bytes(Message::sdi(p)), payload_bytes(Message::sdi(p + 1)));
    EXPECT_LT(payload_bytes(Message::logit_table(p)), payload_bytes(Message::logit_table(p + 1)));
  }
}

TEST(Ledger, ChargeDuration) {
  PayloadLedger led;
  const LinkSpec link{8000, 80000};
  Message m = Message::seeds_dense(250, 1);  // 1000 bytes
  EXPECT_DOUBLE_EQ(led.charge(link, m, Direction::kUplink, 1, 0, kServer), 1.0);
  EXPECT_DOUBLE_EQ(led.charge(link, m, Direction::kDownlink, 1, kServer, 0), 0.1);
  EXPECT_EQ(led.uplink_bytes(), 1000u);
  EXPECT_EQ(led.downlink_bytes(), 1000u);
}

TEST(Ledger, TotalsEqualSumOfEntries) {
  PayloadLedger led;
  const LinkSpec link;
  for (std::size_t i = 1; i <= 50; ++i) {
    led.charge(link, Message::dense_params(i), i % 3 ? Direction::kUplink : Direction::kDownlink,
               i, 0, kServer);
    std::size_t up = 0, down = 0;
    for (const auto& e : led.entries()) (e.direction == Direction::kUplink ? up : down) += e.bytes;
    ASSERT_EQ(up, led.uplink_bytes());
    ASSERT_EQ(down, led.downlink_bytes());
  }
  PayloadLedger copy;
  for (const auto& e : led.entries()) copy.append(e);
  EXPECT_EQ(copy.csv(), led.csv());
  EXPECT_EQ(copy.uplink_bytes(), led.uplink_bytes());
}

TEST(Ledger, CsvFormat) {
  PayloadLedger led;
  led.charge({8000, 80000}, Message::sdi(10), Direction::kUplink, 3, 2, kServer);
  const auto csv = led.csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "round,src,dst,direction,bytes,sim_time");
  EXPECT_NE(csv.find("3,2,server,uplink,2,"), std::string::npos);
}

TEST(Ledger, IdenticalRunsIdenticalCsv) {
  auto run = [] {
    PayloadLedger led;
    for (std::size_t r = 1; r <= 5; ++r) {
      led.charge({1e5, 1e6}, Message::quantized_params(777, 5), Direction::kUplink, r, 1, kServer);
    }
    return led.csv();
  };
  EXPECT_EQ(run(), run());
}

TEST(SimClock, PhaseIsSlowestTransmission) {
  SimClock c;
  c.transmit(0.5);
  c.transmit(2.0);
  c.transmit(1.0);
  EXPECT_DOUBLE_EQ(c.now(), 2.0);
  c.barrier();
  c.transmit(0.25);
  c.barrier();
  EXPECT_DOUBLE_EQ(c.now(), 2.25);
}

TEST(Budget, OneToTenExample) {
  BudgetState b(CostBudget{1, 10, 1153});
  EXPECT_DOUBLE_EQ(b.remaining(), 1153.0);
  b.consume(10, 1, 1);
  EXPECT_DOUBLE_EQ(b.consumed(), 20.0);
  EXPECT_DOUBLE_EQ(b.remaining(), 1133.0);
}

TEST(Budget, ExactExhaustionBoundary) {
  BudgetState b(CostBudget{1, 10, 20});
  EXPECT_TRUE(b.affordable(10, 1, 1));
  EXPECT_FALSE(b.affordable(11, 1, 1));
  EXPECT_TRUE(b.consume(10, 1, 1).exhausted);
}

TEST(Budget, GlobalPoolTracksPerDevice) {
  BudgetState b(CostBudget{1, 10, 1000});
  b.consume(5, 1, 3);
  EXPECT_DOUBLE_EQ(b.consumed(), 25.0);
  EXPECT_EQ(b.per_device_comp(), (std::vector<double>{5, 5, 5}));
  EXPECT_THROW(BudgetState(CostBudget{0, 1, 1}), Error);
}

TEST(Topology, ChainNeighborsAreIndexAdjacent) {
  const auto t = Topology::chain(5);
  EXPECT_EQ(t.neighbors(0), (std::vector<NodeId>{1}));
  EXPECT_EQ(t.neighbors(2), (std::vector<NodeId>{1, 3}));
  EXPECT_FALSE(t.adjacent(0, 2));
  EXPECT_FALSE(t.adjacent(0, kServer));
}

TEST(Topology, StarAndMultihop) {
  const auto s = Topology::star(3);
  EXPECT_EQ(s.neighbors(kServer), (std::vector<NodeId>{0, 1, 2}));
  EXPECT_FALSE(s.adjacent(0, 1));
  const auto m = Topology::multihop_star(5, 2);
  EXPECT_EQ(m.branches(), (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}}));
  EXPECT_TRUE(m.adjacent(1, kServer));
  EXPECT_TRUE(m.adjacent(4, kServer));
  EXPECT_FALSE(m.adjacent(0, kServer));
  EXPECT_FALSE(m.adjacent(1, 2));
  EXPECT_THROW(Topology::multihop_star(3, 0), Error);
}
