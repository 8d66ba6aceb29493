#pragma once

// Blockchained FL. Devices upload to a randomly assigned miner, miners screen
// and cross-share the updates, a proof-of-work race (exponential timers) picks
// the winner whose block carries the aggregate of every accepted update and
// the data-proportional rewards.
//
// Ledger node ids: devices 0..N-1, miners N..N+M-1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/federation.hpp"
#include "fogml/fedavg.hpp"
#include "fogml/linalg.hpp"
#include "fogml/netsim.hpp"
#include "fogml/rng.hpp"

namespace fogml {

struct DeviceUpdate {
  std::size_t device = 0;
  ParamVector params;
  std::size_t n_samples = 0;   // actual local data size
  std::size_t declared_n = 0;  // what the device claims
};

struct Verdict {
  bool accepted = true;
  std::string reason;  // "non-finite", "data claim" or "norm bound"
};

/// Structural checks that need no other update.
inline Verdict verify(const DeviceUpdate& u) {
  if (!all_finite(u.params.values)) return {false, "non-finite"};
  if (u.declared_n != u.n_samples) return {false, "data claim"};
  return {};
}

/// verify() plus the norm screen: ||params|| must not exceed `factor` times
/// the median norm of the updates that passed the structural checks.
inline std::vector<Verdict> screen_updates(std::span<const DeviceUpdate> updates,
                                           double factor = 10.0) {
  std::vector<Verdict> out;
  std::vector<double> norms;
  for (const auto& u : updates) {
    out.push_back(verify(u));
    if (out.back().accepted) norms.push_back(norm2(u.params.values));
  }
  if (norms.empty()) return out;
  std::sort(norms.begin(), norms.end());
  const std::size_t n = norms.size();
  const double median =
      n % 2 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (out[i].accepted && norm2(updates[i].params.values) > factor * median) {
      out[i] = {false, "norm bound"};
    }
  }
  return out;
}

struct PowOutcome {
  std::size_t winner = 0;  // miner id
  double time = 0.0;
  std::vector<double> times;  // per entry of the miner list
};

/// argmin of the finishing times; exact ties go to the lowest miner id.
inline PowOutcome pow_winner(std::span<const std::size_t> miners,
                             std::span<const double> times) {
  require(!miners.empty(), ErrorKind::kEmptyInput, "pow_race: no miners");
  require_dims(miners.size(), times.size(), "pow_race times");
  PowOutcome o{miners[0], times[0], {times.begin(), times.end()}};
  for (std::size_t i = 1; i < miners.size(); ++i) {
    if (times[i] < o.time || (times[i] == o.time && miners[i] < o.winner)) {
      o.winner = miners[i];
      o.time = times[i];
    }
  }
  return o;
}

/// Each miner draws Exponential(rate) from its (round, miner) stream.
inline PowOutcome pow_race(std::span<const std::size_t> miners, double rate,
                           std::uint64_t master_seed, std::size_t round) {
  require(rate > 0.0, ErrorKind::kInvalidArgument, "pow_race: rate must be > 0");
  std::vector<double> times;
  for (std::size_t m : miners) {
    Stream s = make_stream(master_seed, Scope::kPow, round, m);
    times.push_back(s.exponential(rate));
  }
  return pow_winner(miners, times);
}

struct Block {
  std::size_t round = 0;
  std::size_t winner = 0;
  double pow_time = 0.0;
  ParamVector global;
  std::vector<std::pair<std::size_t, double>> rewards;  // (device, reward)
  std::size_t accepted = 0;
};

/// r_d = total * n_d / sum of accepted n; empty when nothing was accepted.
inline std::vector<std::pair<std::size_t, double>> data_rewards(
    std::span<const DeviceUpdate> updates, std::span<const Verdict> verdicts,
    double total) {
  double sum = 0.0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (verdicts[i].accepted) sum += static_cast<double>(updates[i].n_samples);
  }
  std::vector<std::pair<std::size_t, double>> out;
  if (sum <= 0.0) return out;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (verdicts[i].accepted) {
      out.emplace_back(updates[i].device,
                       total * static_cast<double>(updates[i].n_samples) / sum);
    }
  }
  return out;
}

struct BlockFlConfig {
  FlConfig fl;
  std::size_t num_miners = 3;
  std::vector<std::size_t> failed_miners;  // excluded from every round
  double pow_rate = 1.0;
  double reward_total = 1.0;
  double norm_factor = 10.0;
  std::vector<std::size_t> nan_devices;        // upload a NaN coordinate
  std::vector<std::size_t> overclaim_devices;  // declare 100x their data
};

struct BlockFlResult {
  RunContext context;
  ParamVector global;
  std::vector<Block> blocks;
  std::vector<std::vector<Verdict>> verdicts;  // per round, per device
};

/// Miners still racing after removing the failed ones.
inline std::vector<std::size_t> active_miners(const BlockFlConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < cfg.num_miners; ++m) {
    if (std::find(cfg.failed_miners.begin(), cfg.failed_miners.end(), m) ==
        cfg.failed_miners.end()) {
      out.push_back(m);
    }
  }
  return out;
}

/// One BlockFL round from `global`; appends the block and charges the ledger.
inline Block blockfl_round(const Federation& fed, const BlockFlConfig& cfg,
                           std::size_t round, const ParamVector& global,
                           RunContext& ctx, std::vector<Verdict>* verdicts_out = nullptr) {
  const auto miners = active_miners(cfg);
  require(!miners.empty(), ErrorKind::kInvalidArgument, "BlockFL: no active miner");
  const std::size_t N = fed.num_devices(), P = global.size();
  auto miner_node = [&](std::size_t m) { return static_cast<NodeId>(N + m); };
  auto contains = [](const std::vector<std::size_t>& v, std::size_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };

  std::vector<DeviceUpdate> updates;
  std::vector<std::size_t> assigned;
  for (const auto& d : fed.devices) {
    Stream rng = local_stream(fed.master_seed, d.id, round);
    DeviceUpdate u{d.id,
                   local_train(d.data, global, cfg.fl.tau, cfg.fl.lr, cfg.fl.batch_size, rng),
                   d.size(), d.size()};
    if (contains(cfg.nan_devices, d.id)) {
      u.params.values[0] = std::numeric_limits<double>::quiet_NaN();
    }
    if (contains(cfg.overclaim_devices, d.id)) u.declared_n = 100 * d.size();
    Stream pick = make_stream(fed.master_seed, Scope::kMinerAssign, round, d.id);
    const std::size_t m = miners[pick.uniform_index(miners.size())];
    assigned.push_back(m);
    ctx.clock.transmit(ctx.ledger.charge(fed.link, Message::dense_params(P),
                                         Direction::kUplink, round,
                                         static_cast<NodeId>(d.id), miner_node(m)));
    updates.push_back(std::move(u));
  }
  ctx.clock.barrier();

  const auto verdicts = screen_updates(updates, cfg.norm_factor);
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (!verdicts[i].accepted) continue;
    for (std::size_t m : miners) {
      if (m == assigned[i]) continue;
      ctx.clock.transmit(ctx.ledger.charge(fed.link, Message::dense_params(P),
                                           Direction::kDownlink, round,
                                           miner_node(assigned[i]), miner_node(m)));
    }
  }
  ctx.clock.barrier();

  const PowOutcome pow = pow_race(miners, cfg.pow_rate, fed.master_seed, round);
  Block block{round, pow.winner, pow.time, global, {}, 0};
  std::vector<ParamVector> accepted;
  std::vector<double> weights;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (!verdicts[i].accepted) continue;
    accepted.push_back(updates[i].params);
    weights.push_back(cfg.fl.uniform_weights ? 1.0
                                             : static_cast<double>(updates[i].n_samples));
  }
  block.accepted = accepted.size();
  if (!accepted.empty()) {
    block.global = aggregate(accepted, weights);
    block.rewards = data_rewards(updates, verdicts, cfg.reward_total);
  }
  ctx.clock.transmit(pow.time);
  ctx.clock.barrier();

  for (const auto& d : fed.devices) {
    ctx.clock.transmit(ctx.ledger.charge(fed.link, Message::block(P, block.rewards.size()),
                                         Direction::kDownlink, round,
                                         miner_node(pow.winner), static_cast<NodeId>(d.id)));
  }
  ctx.clock.barrier();
  ctx.budget.consume(cfg.fl.tau, 1, N);
  if (verdicts_out) *verdicts_out = verdicts;
  return block;
}

inline BlockFlResult run_blockfl(const Federation& fed, const BlockFlConfig& cfg,
                                 CostBudget budget = {}) {
  cfg.fl.validate();
  require(cfg.num_miners >= 1, ErrorKind::kInvalidArgument, "BlockFL: need >= 1 miner");
  BlockFlResult res{RunContext(fed.wire_bytes, budget), {}, {}, {}};
  Stream init = make_stream(fed.master_seed, Scope::kInit, kServerStreamIndex);
  res.global = init_params(fed.spec, init);
  for (std::size_t r = 1; r <= cfg.fl.rounds; ++r) {
    if (!res.context.budget.affordable(cfg.fl.tau, 1, fed.num_devices())) {
      if (r == 1) {
        throw Error(ErrorKind::kBudgetExhausted, "budget exhausted before the first round");
      }
      break;
    }
    std::vector<Verdict> v;
    Block b = blockfl_round(fed, cfg, r, res.global, res.context, &v);
    res.global = b.global;
    res.blocks.push_back(std::move(b));
    res.verdicts.push_back(std::move(v));
    const double loss = weighted_device_loss(
        fed, [&](const Device& d) { return loss_only(res.global, d.data); });
    res.context.record(r, cfg.fl.tau, loss, evaluate(res.global, fed.test));
  }
  return res;
}

}  // namespace fogml
