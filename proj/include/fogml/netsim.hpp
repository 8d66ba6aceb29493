#pragma once

// Simulated communication substrate: topologies, asymmetric links, payload
// byte model, an append-only transmission ledger and the compute/communication
// cost budget.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/model.hpp"
#include "fogml/summarize.hpp"

namespace fogml {

/// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

using NodeId = std::int64_t;
inline constexpr NodeId kServer = -1;
inline constexpr NodeId kBroadcast = -2;

inline std::string node_name(NodeId n) {
  if (n == kServer) return "server";
  if (n == kBroadcast) return "broadcast";
  return std::to_string(n);
}

enum class Direction { kUplink, kDownlink };

inline const char* to_string(Direction d) {
  return d == Direction::kUplink ? "uplink" : "downlink";
}

// ---------------------------------------------------------------------------
// Topology

enum class TopologyKind { kStar, kChain, kMultihopStar };

struct Topology {
  TopologyKind kind = TopologyKind::kStar;
  std::size_t num_devices = 0;
  std::size_t hop_depth = 1;  // chain length per branch, multihop_star only

  static Topology star(std::size_t n) { return {TopologyKind::kStar, n, 1}; }
  static Topology chain(std::size_t n) { return {TopologyKind::kChain, n, 1}; }
  static Topology multihop_star(std::size_t n, std::size_t depth) {
    require(depth >= 1, ErrorKind::kInvalidArgument, "hop depth must be >= 1");
    return {TopologyKind::kMultihopStar, n, depth};
  }

  /// Device chains of multihop_star, each ordered away from the server:
  /// chain[k] transmits to chain[k+1], the last element reaches the server.
  std::vector<std::vector<std::size_t>> branches() const {
    std::vector<std::vector<std::size_t>> out;
    const std::size_t depth = kind == TopologyKind::kMultihopStar ? hop_depth : 1;
    for (std::size_t start = 0; start < num_devices; start += depth) {
      std::vector<std::size_t> b;
      for (std::size_t d = start; d < std::min(num_devices, start + depth); ++d) {
        b.push_back(d);
      }
      out.push_back(std::move(b));
    }
    return out;
  }

  bool adjacent(NodeId a, NodeId b) const {
    if (a == b) return false;
    const auto n = static_cast<NodeId>(num_devices);
    auto valid = [&](NodeId x) { return x == kServer || (x >= 0 && x < n); };
    if (!valid(a) || !valid(b)) return false;
    switch (kind) {
      case TopologyKind::kStar:
        return a == kServer || b == kServer;
      case TopologyKind::kChain:
        return a != kServer && b != kServer && (a - b == 1 || b - a == 1);
      case TopologyKind::kMultihopStar: {
        const auto depth = static_cast<NodeId>(hop_depth);
        if (a == kServer || b == kServer) {
          const NodeId d = a == kServer ? b : a;
          return d % depth == depth - 1 || d == n - 1;
        }
        const NodeId lo = std::min(a, b), hi = std::max(a, b);
        return hi - lo == 1 && lo / depth == hi / depth;
      }
    }
    return false;
  }

  std::vector<NodeId> neighbors(NodeId node) const {
    std::vector<NodeId> out;
    if (adjacent(node, kServer)) out.push_back(kServer);
    for (std::size_t d = 0; d < num_devices; ++d) {
      if (adjacent(node, static_cast<NodeId>(d))) out.push_back(static_cast<NodeId>(d));
    }
    return out;
  }
};

struct LinkSpec {
  double uplink_bits_per_round = 8e6;
  double downlink_bits_per_round = 8e7;

  void validate() const {
    require(uplink_bits_per_round > 0 && downlink_bits_per_round > 0,
            ErrorKind::kInvalidArgument, "LinkSpec: capacities must be > 0");
  }
  double capacity(Direction d) const {
    return d == Direction::kUplink ? uplink_bits_per_round
                                   : downlink_bits_per_round;
  }
};

// ---------------------------------------------------------------------------
// Messages and the byte model

enum class MessageKind : int {
  kDenseParams = 0,
  kQuantizedParams = 1,
  kSparseParams = 2,
  kLogitTable = 3,
  kSdi = 4,
  kSeedsDense = 5,
  kSeedsCsr = 6,
  kBlock = 7,
  kGradient = 8,
};

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kDenseParams: return "params_dense";
    case MessageKind::kQuantizedParams: return "params_quantized";
    case MessageKind::kSparseParams: return "params_sparse";
    case MessageKind::kLogitTable: return "logit_table";
    case MessageKind::kSdi: return "sdi";
    case MessageKind::kSeedsDense: return "seeds_dense";
    case MessageKind::kSeedsCsr: return "seeds_csr";
    case MessageKind::kBlock: return "block";
    case MessageKind::kGradient: return "gradient";
  }
  return "unknown";
}

struct Message {
  MessageKind kind = MessageKind::kDenseParams;
  std::size_t count = 0;      // P, L, number of seed samples, reward entries
  std::size_t dim = 0;        // per-sample feature count (dense seeds)
  int bits = 32;              // quantized params
  double fraction = 1.0;      // sparse params
  std::size_t raw_bytes = 0;  // pre-computed CSR payload

  static Message dense_params(std::size_t p) { return {MessageKind::kDenseParams, p}; }
  static Message gradient(std::size_t p) { return {MessageKind::kGradient, p}; }
  static Message quantized_params(std::size_t p, int bits) {
    Message m{MessageKind::kQuantizedParams, p};
    m.bits = bits;
    return m;
  }
  static Message sparse_params(std::size_t p, double fraction) {
    Message m{MessageKind::kSparseParams, p};
    m.fraction = fraction;
    return m;
  }
  static Message logit_table(std::size_t L) { return {MessageKind::kLogitTable, L}; }
  static Message sdi(std::size_t L) { return {MessageKind::kSdi, L}; }
  static Message seeds_dense(std::size_t n, std::size_t dim) {
    return {MessageKind::kSeedsDense, n, dim};
  }
  static Message seeds_csr(std::span<const CsrSample> seeds) {
    Message m{MessageKind::kSeedsCsr, seeds.size()};
    for (const auto& s : seeds) m.raw_bytes += csr_bytes(s);
    return m;
  }
  /// Block: global parameters plus round/winner/pow_time header and one
  /// (device, reward) entry per rewarded device.
  static Message block(std::size_t p, std::size_t reward_entries) {
    Message m{MessageKind::kBlock, p};
    m.dim = reward_entries;
    return m;
  }
};

inline constexpr std::size_t kBlockHeaderBytes = 20;  // round u32, winner u32, pow f64, P u32
inline constexpr std::size_t kRewardEntryBytes = 12;  // device u32, reward f64

/// Bytes on the wire. `wire_bytes` is the per-real precision (default 4).
inline std::size_t payload_bytes(const Message& m, std::size_t wire_bytes = 4) {
  switch (m.kind) {
    case MessageKind::kDenseParams:
    case MessageKind::kGradient:
      return m.count * wire_bytes;
    case MessageKind::kQuantizedParams:
      require(m.bits >= 1 && m.bits <= 32, ErrorKind::kInvalidArgument,
              "quantized bits must be in 1..32");
      return (m.count * static_cast<std::size_t>(m.bits) + 7) / 8 + 8;
    case MessageKind::kSparseParams: {
      require(m.fraction > 0.0 && m.fraction <= 1.0, ErrorKind::kInvalidArgument,
              "sparse fraction must be in (0, 1]");
      const auto k = static_cast<std::size_t>(
          std::ceil(m.fraction * static_cast<double>(m.count)));
      return k * (wire_bytes + 4);
    }
    case MessageKind::kLogitTable:
      return m.count * m.count * wire_bytes;
    case MessageKind::kSdi:
      return (m.count + 7) / 8;
    case MessageKind::kSeedsDense:
      return m.count * m.dim * wire_bytes;
    case MessageKind::kSeedsCsr:
      return m.raw_bytes;
    case MessageKind::kBlock:
      return m.count * wire_bytes + kBlockHeaderBytes + m.dim * kRewardEntryBytes;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "payload_bytes: unknown message kind " +
                  std::to_string(static_cast<int>(m.kind)));
}

// ---------------------------------------------------------------------------
// Ledger

struct LedgerEntry {
  std::size_t round = 0;
  NodeId src = 0;
  NodeId dst = 0;
  Direction direction = Direction::kUplink;
  MessageKind kind = MessageKind::kDenseParams;
  std::size_t bytes = 0;
  double sim_time = 0.0;  // transmission duration in rounds

  bool operator==(const LedgerEntry&) const = default;
};

class PayloadLedger {
 public:
  explicit PayloadLedger(std::size_t wire_bytes = 4) : wire_bytes_(wire_bytes) {}

  /// Records one transmission and returns its duration: bits / capacity of
  /// the link in the given direction.
  double charge(const LinkSpec& link, const Message& msg, Direction dir,
                std::size_t round, NodeId src, NodeId dst) {
    const std::size_t bytes = payload_bytes(msg, wire_bytes_);
    const double delta = static_cast<double>(bytes * 8) / link.capacity(dir);
    entries_.push_back({round, src, dst, dir, msg.kind, bytes, delta});
    (dir == Direction::kUplink ? uplink_bytes_ : downlink_bytes_) += bytes;
    return delta;
  }

  /// Re-records an entry produced by another ledger.
  void append(const LedgerEntry& e) {
    entries_.push_back(e);
    (e.direction == Direction::kUplink ? uplink_bytes_ : downlink_bytes_) += e.bytes;
  }

  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
  std::size_t uplink_bytes() const noexcept { return uplink_bytes_; }
  std::size_t downlink_bytes() const noexcept { return downlink_bytes_; }
  std::size_t total_bytes(Direction d) const noexcept {
    return d == Direction::kUplink ? uplink_bytes_ : downlink_bytes_;
  }
  std::size_t wire_bytes() const noexcept { return wire_bytes_; }

  /// Sum of bytes over entries matching a predicate.
  template <class Pred>
  std::size_t sum_bytes(Pred&& pred) const {
    std::size_t s = 0;
    for (const auto& e : entries_) {
      if (pred(e)) s += e.bytes;
    }
    return s;
  }

  void write_csv(std::ostream& os) const {
    os << "round,src,dst,direction,bytes,sim_time\n";
    for (const auto& e : entries_) {
      os << e.round << ',' << node_name(e.src) << ',' << node_name(e.dst) << ','
         << to_string(e.direction) << ',' << e.bytes << ','
         << format_double(e.sim_time) << '\n';
    }
  }

  std::string csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }

 private:
  std::size_t wire_bytes_;
  std::vector<LedgerEntry> entries_;
  std::size_t uplink_bytes_ = 0;
  std::size_t downlink_bytes_ = 0;
};

/// Simulated clock: transmissions within a phase run in parallel, so a phase
/// lasts as long as its slowest transmission.
class SimClock {
 public:
  void transmit(double duration) { phase_ = std::max(phase_, duration); }
  void barrier() {
    now_ += phase_;
    phase_ = 0.0;
  }
  double now() const noexcept { return now_ + phase_; }

 private:
  double now_ = 0.0;
  double phase_ = 0.0;
};

// ---------------------------------------------------------------------------
// Cost budget

struct CostBudget {
  double c_comp = 1.0;
  double c_comm = 10.0;
  double total = std::numeric_limits<double>::infinity();

  void validate() const {
    require(c_comp > 0 && c_comm > 0 && total > 0, ErrorKind::kInvalidArgument,
            "CostBudget: all costs must be positive");
  }

  /// Cost of `iterations` local steps on each of `devices` plus `rounds`
  /// communication rounds.
  double cost(std::size_t iterations, std::size_t rounds,
              std::size_t devices) const noexcept {
    return static_cast<double>(iterations) * c_comp * static_cast<double>(devices) +
           static_cast<double>(rounds) * c_comm;
  }
};

struct BudgetStatus {
  bool exhausted = false;
  double remaining = 0.0;
};

/// Global pool; per-device computation totals kept for inspection.
class BudgetState {
 public:
  BudgetState() = default;
  explicit BudgetState(CostBudget b) : budget_(b) { budget_.validate(); }

  BudgetStatus consume(std::size_t iterations, std::size_t rounds,
                       std::size_t devices_active = 1) {
    consumed_ += budget_.cost(iterations, rounds, devices_active);
    if (per_device_.size() < devices_active) per_device_.resize(devices_active, 0.0);
    for (std::size_t d = 0; d < devices_active; ++d) {
      per_device_[d] += static_cast<double>(iterations) * budget_.c_comp;
    }
    return status();
  }

  BudgetStatus status() const noexcept {
    const double rem = budget_.total - consumed_;
    return {rem <= 0.0, rem};
  }

  bool affordable(std::size_t iterations, std::size_t rounds,
                  std::size_t devices) const noexcept {
    return budget_.cost(iterations, rounds, devices) <= budget_.total - consumed_;
  }

  double remaining() const noexcept { return budget_.total - consumed_; }
  double consumed() const noexcept { return consumed_; }
  const CostBudget& budget() const noexcept { return budget_; }
  const std::vector<double>& per_device_comp() const noexcept { return per_device_; }

 private:
  CostBudget budget_{};
  double consumed_ = 0.0;
  std::vector<double> per_device_;
};

}  // namespace fogml
