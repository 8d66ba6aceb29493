#pragma once

// Federated distillation (FD) and federated learning after distillation (FLD).
//
// FD devices exchange only per-label average logits: each device accumulates
// the logits it produces during local training separately for every
// ground-truth label, uploads the table, and trains the next interval against
// a leave-one-out global table as a distillation target.
//
// FLD keeps the FD uplink but converts the global logit table into model
// parameters at the server by distilling into a model trained on a few seed
// samples uploaded by the devices; the parameters go back down.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/federation.hpp"
#include "fogml/fedavg.hpp"
#include "fogml/model.hpp"
#include "fogml/netsim.hpp"

namespace fogml {

/// Folds a batch of logits ([rows x L], row-major) into per-label running means.
inline void accumulate_logits(LogitTable& table, std::span<const double> logits,
                              std::span<const std::size_t> labels) {
  const std::size_t L = table.num_labels;
  require_dims(labels.size() * L, logits.size(), "accumulate_logits size");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = labels[i];
    if (y >= L) {
      throw Error(ErrorKind::kInvalidArgument,
                  "accumulate_logits: label out of range", i);
    }
    const std::size_t c = ++table.counts[y];
    auto row = table.row(y);
    for (std::size_t l = 0; l < L; ++l) {
      row[l] += (logits[i * L + l] - row[l]) / static_cast<double>(c);
    }
  }
}

/// Count-weighted per-row average over the tables; a row absent from every
/// table stays absent. `skip` excludes one table (leave-one-out).
inline LogitTable global_average(std::span<const LogitTable> tables,
                                 std::size_t skip = static_cast<std::size_t>(-1)) {
  require(!tables.empty(), ErrorKind::kEmptyInput, "global_average: no tables");
  const std::size_t L = tables.front().num_labels;
  LogitTable out(L);
  for (std::size_t t = 0; t < tables.size(); ++t) {
    if (t == skip) continue;
    require_dims(L, tables[t].num_labels, "global_average table size");
    for (std::size_t y = 0; y < L; ++y) out.counts[y] += tables[t].counts[y];
  }
  for (std::size_t t = 0; t < tables.size(); ++t) {
    if (t == skip) continue;
    for (std::size_t y = 0; y < L; ++y) {
      if (tables[t].counts[y] == 0) continue;
      const double w = static_cast<double>(tables[t].counts[y]) /
                       static_cast<double>(out.counts[y]);
      axpy(w, tables[t].row(y), out.row(y));
    }
  }
  return out;
}

inline LogitTable leave_one_out(std::span<const LogitTable> tables, std::size_t device) {
  return global_average(tables, device);
}

struct FdConfig {
  std::size_t rounds = 10;
  std::size_t interval = 5;  // local steps between logit uploads
  double lr = 0.1;
  std::size_t batch_size = 32;
  double alpha = 0.1;
  double temperature = 2.0;

  void validate() const {
    require(interval >= 1, ErrorKind::kInvalidArgument, "interval must be >= 1");
    require(alpha >= 0.0, ErrorKind::kInvalidArgument, "alpha must be >= 0");
    require(temperature > 0.0, ErrorKind::kInvalidArgument, "temperature must be > 0");
  }
};

struct FdResult {
  RunContext context;
  std::vector<ParamVector> models;
  std::vector<LogitTable> downloaded;  // last leave-one-out target per device
};

/// One FD round: every device trains `interval` steps against its downloaded
/// target (absent target -> no regularizer), uploads its fresh table, and
/// receives the leave-one-out global table.
inline void fd_round(const Federation& fed, const FdConfig& cfg, std::size_t round,
                     std::vector<ParamVector>& models,
                     std::vector<LogitTable>& downloaded, RunContext& ctx) {
  const std::size_t L = fed.num_labels();
  std::vector<LogitTable> uploads;
  for (std::size_t k = 0; k < fed.devices.size(); ++k) {
    const auto& d = fed.devices[k];
    LogitTable local(L);
    const bool has_target = downloaded[k].present_rows() > 0;
    const KdOptions kd{has_target ? &downloaded[k] : nullptr,
                       has_target ? cfg.alpha : 0.0, cfg.temperature};
    Stream rng = local_stream(fed.master_seed, d.id, round);
    models[k] = local_train(d.data, models[k], cfg.interval, cfg.lr, cfg.batch_size,
                            rng, kd, [&](const Batch& mb, const std::vector<double>& z) {
                              accumulate_logits(local, z, mb.labels);
                            });
    ctx.clock.transmit(ctx.ledger.charge(fed.link, Message::logit_table(L),
                                         Direction::kUplink, round,
                                         static_cast<NodeId>(d.id), kServer));
    uploads.push_back(std::move(local));
  }
  ctx.clock.barrier();
  for (std::size_t k = 0; k < fed.devices.size(); ++k) {
    downloaded[k] = leave_one_out(uploads, k);
    ctx.clock.transmit(ctx.ledger.charge(fed.link, Message::logit_table(L),
                                         Direction::kDownlink, round, kServer,
                                         static_cast<NodeId>(fed.devices[k].id)));
  }
  ctx.clock.barrier();
  ctx.budget.consume(cfg.interval, 1, fed.num_devices());
}

inline FdResult run_fd(const Federation& fed, const FdConfig& cfg) {
  cfg.validate();
  FdResult res{RunContext(fed.wire_bytes), {}, {}};
  for (const auto& d : fed.devices) {
    res.models.push_back(device_init(fed, d.id));
    res.downloaded.emplace_back(fed.num_labels());
  }
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    fd_round(fed, cfg, r, res.models, res.downloaded, res.context);
    const double loss = weighted_device_loss(fed, [&](const Device& d) {
      return loss_only(res.models[&d - fed.devices.data()], d.data);
    });
    res.context.record(r, cfg.interval, loss, mean_device_accuracy(fed, res.models));
  }
  return res;
}

// ---------------------------------------------------------------------------
// FLD

/// ceil(fraction * n) distinct local samples.
inline Batch select_seeds(const Batch& data, double fraction, Stream& rng) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::kInvalidArgument,
          "seed fraction must be in (0, 1]");
  const auto m = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(data.rows)));
  std::vector<std::size_t> idx(data.rows);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return gather(data, idx);
}

struct ServerDistillOptions {
  std::size_t epochs = 20;
  double lr = 0.1;
  std::size_t batch_size = 32;
  double alpha = 0.1;
  double temperature = 2.0;
};

/// Trains `start` on the pooled seeds with CE + alpha * KL against the global
/// table rows keyed by each seed's label. Runs epochs * ceil(n / batch) steps.
inline ParamVector fld_server_distill(const LogitTable& global_table,
                                      const Batch& seeds, ParamVector start,
                                      const ServerDistillOptions& opt, Stream& rng) {
  require(!seeds.empty(), ErrorKind::kEmptyInput, "fld_server_distill: no seeds");
  const std::size_t steps =
      opt.epochs * ((seeds.rows + opt.batch_size - 1) / opt.batch_size);
  if (steps == 0) return start;
  const bool kd_on = opt.alpha > 0.0 && global_table.present_rows() > 0;
  const KdOptions kd{kd_on ? &global_table : nullptr, kd_on ? opt.alpha : 0.0,
                     opt.temperature};
  return local_train(seeds, std::move(start), steps, opt.lr, opt.batch_size, rng, kd);
}

struct FldConfig {
  FdConfig fd;
  double seed_fraction = 0.02;
  ServerDistillOptions server;
  bool warm_start = true;
};

struct FldResult {
  RunContext context;
  ParamVector global;
  Batch seed_pool;
};

/// Per round: devices start from the downloaded global model, train one
/// interval while accumulating logits, upload their tables (seeds too in the
/// first round); the server averages the tables, distills into the global
/// model on the seed pool and sends parameters down.
inline FldResult run_fld(const Federation& fed, const FldConfig& cfg) {
  cfg.fd.validate();
  const std::size_t L = fed.num_labels();
  FldResult res{RunContext(fed.wire_bytes), {}, {}};
  Stream init = make_stream(fed.master_seed, Scope::kInit, kServerStreamIndex);
  res.global = init_params(fed.spec, init);

  std::vector<Batch> seeds;
  for (const auto& d : fed.devices) {
    Stream s = make_stream(fed.master_seed, Scope::kSeeds, d.id);
    seeds.push_back(select_seeds(d.data, cfg.seed_fraction, s));
  }
  res.seed_pool = concat(seeds);

  for (std::size_t r = 1; r <= cfg.fd.rounds; ++r) {
    std::vector<LogitTable> uploads;
    for (std::size_t k = 0; k < fed.devices.size(); ++k) {
      const auto& d = fed.devices[k];
      LogitTable local(L);
      Stream rng = local_stream(fed.master_seed, d.id, r);
      local_train(d.data, res.global, cfg.fd.interval, cfg.fd.lr, cfg.fd.batch_size,
                  rng, {}, [&](const Batch& mb, const std::vector<double>& z) {
                    accumulate_logits(local, z, mb.labels);
                  });
      const auto id = static_cast<NodeId>(d.id);
      res.context.clock.transmit(res.context.ledger.charge(
          fed.link, Message::logit_table(L), Direction::kUplink, r, id, kServer));
      if (r == 1) {
        res.context.clock.transmit(res.context.ledger.charge(
            fed.link, Message::seeds_dense(seeds[k].rows, seeds[k].cols),
            Direction::kUplink, r, id, kServer));
      }
      uploads.push_back(std::move(local));
    }
    res.context.clock.barrier();

    const LogitTable global_table = global_average(uploads);
    ParamVector start = res.global;
    if (!cfg.warm_start) {
      Stream fresh = make_stream(fed.master_seed, Scope::kInit, kServerStreamIndex, r);
      start = init_params(fed.spec, fresh);
    }
    Stream srv = make_stream(fed.master_seed, Scope::kServer, r);
    res.global = fld_server_distill(global_table, res.seed_pool, std::move(start),
                                    cfg.server, srv);

    for (const auto& d : fed.devices) {
      res.context.clock.transmit(res.context.ledger.charge(
          fed.link, Message::dense_params(res.global.size()), Direction::kDownlink, r,
          kServer, static_cast<NodeId>(d.id)));
    }
    res.context.clock.barrier();
    res.context.budget.consume(cfg.fd.interval, 1, fed.num_devices());
    const double loss = weighted_device_loss(
        fed, [&](const Device& d) { return loss_only(res.global, d.data); });
    res.context.record(r, cfg.fd.interval, loss, evaluate(res.global, fed.test));
  }
  return res;
}

}  // namespace fogml
