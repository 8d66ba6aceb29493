#pragma once

// Shared runner substrate: devices with their local data, the federation
// environment, per-round metrics rows and the run-level bookkeeping that every
// protocol engine uses (ledger, simulated clock, cost budget).

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fogml/datasets.hpp"
#include "fogml/model.hpp"
#include "fogml/netsim.hpp"
#include "fogml/rng.hpp"

namespace fogml {

struct Device {
  std::size_t id = 0;
  Batch data;

  std::size_t size() const noexcept { return data.rows; }
};

struct Federation {
  ModelSpec spec;
  std::vector<Device> devices;
  Batch test;
  std::uint64_t master_seed = 0;
  LinkSpec link;
  std::size_t wire_bytes = 4;

  std::size_t num_devices() const noexcept { return devices.size(); }
  std::size_t num_labels() const noexcept { return spec.num_labels; }

  static Federation from_partition(const ModelSpec& spec,
                                   std::span<const LocalDataset> parts,
                                   std::span<const Sample> test,
                                   std::uint64_t master_seed,
                                   LinkSpec link = {}) {
    Federation f{spec, {}, to_batch(test), master_seed, link, 4};
    for (const auto& p : parts) f.devices.push_back({p.device_id, to_batch(p.samples)});
    return f;
  }
};

struct MetricsRow {
  std::size_t round = 0;
  std::optional<std::size_t> tau;
  double cum_uplink_bits = 0.0;
  double cum_downlink_bits = 0.0;
  double cum_cost = 0.0;
  double train_loss = 0.0;
  double test_acc = 0.0;
  double sim_time = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "round,tau,cum_uplink_bits,cum_downlink_bits,cum_cost,train_loss,test_acc,"
    "sim_time";

inline void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.round << ',' << (r.tau ? std::to_string(*r.tau) : std::string{})
       << ',' << format_double(r.cum_uplink_bits) << ','
       << format_double(r.cum_downlink_bits) << ',' << format_double(r.cum_cost)
       << ',' << format_double(r.train_loss) << ',' << format_double(r.test_acc)
       << ',' << format_double(r.sim_time) << '\n';
  }
}

/// Ledger, clock and budget for one run, plus the metrics it produced.
struct RunContext {
  PayloadLedger ledger;
  SimClock clock;
  BudgetState budget;
  std::vector<MetricsRow> metrics;

  explicit RunContext(std::size_t wire_bytes = 4, CostBudget b = {})
      : ledger(wire_bytes), budget(b) {}

  MetricsRow& record(std::size_t round, std::optional<std::size_t> tau,
                     double train_loss, double test_acc) {
    metrics.push_back({round, tau,
                       static_cast<double>(ledger.uplink_bytes()) * 8.0,
                       static_cast<double>(ledger.downlink_bytes()) * 8.0,
                       budget.consumed(), train_loss, test_acc, clock.now()});
    return metrics.back();
  }

  std::string metrics_csv() const {
    std::ostringstream os;
    write_metrics_csv(os, metrics);
    return os.str();
  }

  double final_accuracy() const {
    return metrics.empty() ? 0.0 : metrics.back().test_acc;
  }
};

/// Data-size weighted mean of per-device losses evaluated by `loss_of`.
template <class LossFn>
double weighted_device_loss(const Federation& fed, LossFn&& loss_of) {
  double total = 0.0, n = 0.0;
  for (const auto& d : fed.devices) {
    if (d.size() == 0) continue;
    total += static_cast<double>(d.size()) * loss_of(d);
    n += static_cast<double>(d.size());
  }
  return n > 0.0 ? total / n : 0.0;
}

}  // namespace fogml
