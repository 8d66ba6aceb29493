#pragma once

// Vanilla FL: fixed-interval local SGD on every device, data-size weighted
// parameter averaging at the server, and optional quantized or sparsified
// (error-feedback) uploads.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/federation.hpp"
#include "fogml/linalg.hpp"
#include "fogml/model.hpp"
#include "fogml/netsim.hpp"
#include "fogml/rng.hpp"

namespace fogml {

enum class PayloadMode { kDense, kQuantized, kSparse };

struct PayloadConfig {
  PayloadMode mode = PayloadMode::kDense;
  int bits = 8;
  double fraction = 0.25;

  void validate() const {
    if (mode == PayloadMode::kQuantized) {
      require(bits >= 1 && bits <= 32, ErrorKind::kInvalidArgument,
              "quantized bits must be in 1..32");
    }
    if (mode == PayloadMode::kSparse) {
      require(fraction > 0.0 && fraction <= 1.0, ErrorKind::kInvalidArgument,
              "sparse fraction must be in (0, 1]");
    }
  }
};

struct FlConfig {
  std::size_t tau = 5;
  std::size_t rounds = 10;
  double lr = 0.1;
  std::size_t batch_size = 32;
  PayloadConfig payload;
  bool uniform_weights = false;

  void validate() const {
    require(tau >= 1, ErrorKind::kInvalidArgument, "tau must be >= 1");
    require(lr >= 0.0, ErrorKind::kInvalidArgument, "lr must be >= 0");
    require(batch_size >= 1, ErrorKind::kInvalidArgument, "batch_size must be >= 1");
    payload.validate();
  }
};

inline constexpr std::uint64_t kServerStreamIndex = 0xFFFFFFFFull;

/// Stream for device `device`'s local training in round `round`.
inline Stream local_stream(std::uint64_t master, std::size_t device,
                           std::size_t round) {
  return make_stream(master, Scope::kLocalTrain, device, round);
}

struct NoLogitObserver {
  void operator()(const Batch&, const std::vector<double>&) const noexcept {}
};

/// `tau` SGD steps from `params` on minibatches drawn with replacement. The
/// observer sees every minibatch together with its [rows x L] logits.
template <class Observer = NoLogitObserver>
ParamVector local_train(const Batch& data, ParamVector params, std::size_t tau,
                        double lr, std::size_t batch_size, Stream& rng,
                        const KdOptions& kd = {}, Observer&& observe = {}) {
  require(tau >= 1, ErrorKind::kInvalidArgument, "local_train: tau must be >= 1");
  require(!data.empty(), ErrorKind::kEmptyInput, "local_train: device has no data");
  std::vector<double> logits;
  for (std::size_t step = 0; step < tau; ++step) {
    const auto idx = sample_minibatch(data.rows, batch_size, rng);
    const Batch mb = gather(data, idx);
    auto lg = loss_and_grad(params, mb, kd, &logits);
    observe(mb, logits);
    for (std::size_t i = 0; i < params.size(); ++i) {
      params.values[i] -= lr * lg.grad.values[i];
    }
  }
  return params;
}

/// Weighted average with weights w_d / sum(w).
inline ParamVector aggregate(std::span<const ParamVector> params,
                             std::span<const double> weights) {
  require(!params.empty(), ErrorKind::kEmptyInput, "aggregate: no updates");
  require_dims(params.size(), weights.size(), "aggregate weights");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  require(total > 0.0, ErrorKind::kInvalidArgument,
          "aggregate: weights must sum to a positive value");
  ParamVector out = ParamVector::zeros(params.front().spec);
  for (std::size_t d = 0; d < params.size(); ++d) {
    require_same_spec(params.front(), params[d], "aggregate");
    const double w = weights[d] / total;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += w * params[d].values[i];
  }
  return out;
}

/// Uniform 2^b-level quantization over [min, max] followed by dequantization.
inline Vec quantize_roundtrip(std::span<const double> v, int bits) {
  require(bits >= 1 && bits <= 32, ErrorKind::kInvalidArgument,
          "quantize: bits must be in 1..32");
  if (v.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  Vec out(v.begin(), v.end());
  if (hi == lo) return out;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  const double step = (hi - lo) / levels;
  for (auto& x : out) {
    const double q = std::clamp(std::round((x - lo) / step), 0.0, levels);
    x = lo + q * step;
  }
  return out;
}

inline ParamVector quantize_roundtrip(const ParamVector& p, int bits) {
  return ParamVector{p.spec, quantize_roundtrip(p.values, bits)};
}

struct SparseMessage {
  std::size_t dim = 0;
  std::vector<std::size_t> indices;  // ascending
  std::vector<double> values;
};

/// Sends the top-ceil(s*P) coordinates of values + residual by magnitude
/// (ties to the lower index) and leaves everything unsent in `residual`.
inline SparseMessage sparsify(std::span<const double> values, double s,
                              Vec& residual) {
  require(s > 0.0 && s <= 1.0, ErrorKind::kInvalidArgument,
          "sparsify: fraction must be in (0, 1]");
  const std::size_t P = values.size();
  if (residual.empty()) residual.assign(P, 0.0);
  require_dims(P, residual.size(), "sparsify residual");
  Vec acc(P);
  for (std::size_t i = 0; i < P; ++i) acc[i] = values[i] + residual[i];
  const auto k = std::min<std::size_t>(
      P, static_cast<std::size_t>(std::ceil(s * static_cast<double>(P))));
  std::vector<std::size_t> order(P);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      const double fa = std::abs(acc[a]), fb = std::abs(acc[b]);
                      return fa != fb ? fa > fb : a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  SparseMessage msg{P, order, {}};
  residual = acc;
  for (std::size_t i : order) {
    msg.values.push_back(acc[i]);
    residual[i] = 0.0;
  }
  return msg;
}

inline Vec densify(const SparseMessage& m) {
  Vec out(m.dim, 0.0);
  for (std::size_t k = 0; k < m.indices.size(); ++k) out[m.indices[k]] = m.values[k];
  return out;
}

inline Message upload_message(const PayloadConfig& p, std::size_t P) {
  switch (p.mode) {
    case PayloadMode::kQuantized: return Message::quantized_params(P, p.bits);
    case PayloadMode::kSparse: return Message::sparse_params(P, p.fraction);
    case PayloadMode::kDense: break;
  }
  return Message::dense_params(P);
}

/// Round-by-round Vanilla FL on a star topology. Each round: the server
/// sends the global model to every device, devices train `tau` steps,
/// upload, and the server averages.
class FedAvgEngine {
 public:
  struct RoundReport {
    std::size_t round = 0;
    std::size_t tau = 0;
    ParamVector start_global;
    // Gradients and losses of every device at start_global on its fixed
    // estimate minibatch; filled only when requested.
    std::vector<Vec> est_grads;
    std::vector<double> est_losses;
  };

  FedAvgEngine(const Federation& fed, FlConfig cfg, CostBudget budget = {},
               std::size_t estimate_batch = 64)
      : fed_(&fed), cfg_(cfg), ctx_(fed.wire_bytes, budget) {
    cfg_.validate();
    fed.link.validate();
    require(fed.num_devices() >= 1, ErrorKind::kEmptyInput, "FedAvg: no devices");
    Stream init = make_stream(fed.master_seed, Scope::kInit, kServerStreamIndex);
    global_ = init_params(fed.spec, init);
    residuals_.resize(fed.num_devices());
    for (const auto& d : fed.devices) {
      Stream es = make_stream(fed.master_seed, Scope::kEstimate, d.id);
      estimate_batches_.push_back(
          d.size() ? gather(d.data, sample_minibatch(d.size(), estimate_batch, es))
                   : Batch{});
    }
  }

  std::size_t num_devices() const noexcept { return fed_->num_devices(); }

  bool affordable(std::size_t tau) const {
    return ctx_.budget.affordable(tau, 1, num_devices());
  }

  /// Largest tau' <= tau that fits the remaining budget, or 0.
  std::size_t clamp_to_budget(std::size_t tau) const {
    const auto& b = ctx_.budget.budget();
    if (affordable(tau)) return tau;
    const double spare = ctx_.budget.remaining() - b.c_comm;
    if (spare <= 0.0) return 0;
    const double per_iter = b.c_comp * static_cast<double>(num_devices());
    auto fit = static_cast<std::size_t>(std::floor(spare / per_iter));
    while (fit > 0 && !affordable(fit)) --fit;
    return std::min(fit, tau);
  }

  RoundReport step(std::size_t tau, bool with_estimates = false) {
    const auto& fed = *fed_;
    const std::size_t r = ++round_;
    const std::size_t P = global_.size();
    RoundReport rep{r, tau, global_, {}, {}};

    for (const auto& d : fed.devices) {
      ctx_.clock.transmit(ctx_.ledger.charge(fed.link, Message::dense_params(P),
                                             Direction::kDownlink, r, kServer,
                                             static_cast<NodeId>(d.id)));
    }
    ctx_.clock.barrier();

    std::vector<ParamVector> uploads;
    std::vector<double> weights;
    for (std::size_t k = 0; k < fed.devices.size(); ++k) {
      const auto& d = fed.devices[k];
      if (with_estimates) {
        auto lg = loss_and_grad(global_, estimate_batches_[k]);
        rep.est_grads.push_back(std::move(lg.grad.values));
        rep.est_losses.push_back(lg.loss);
      }
      Stream rng = local_stream(fed.master_seed, d.id, r);
      ParamVector local = local_train(d.data, global_, tau, cfg_.lr,
                                      cfg_.batch_size, rng);
      uploads.push_back(encode_upload(k, local));
      weights.push_back(cfg_.uniform_weights ? 1.0 : static_cast<double>(d.size()));
      ctx_.clock.transmit(ctx_.ledger.charge(fed.link, upload_message(cfg_.payload, P),
                                             Direction::kUplink, r,
                                             static_cast<NodeId>(d.id), kServer));
      if (with_estimates) {
        ctx_.clock.transmit(ctx_.ledger.charge(fed.link, Message::gradient(P),
                                               Direction::kUplink, r,
                                               static_cast<NodeId>(d.id), kServer));
      }
    }
    ctx_.clock.barrier();
    global_ = aggregate(uploads, weights);
    ctx_.budget.consume(tau, 1, fed.num_devices());

    const double train_loss = weighted_device_loss(
        fed, [&](const Device& d) { return loss_only(global_, d.data); });
    ctx_.record(r, tau, train_loss, evaluate(global_, fed.test));
    return rep;
  }

  const ParamVector& global() const noexcept { return global_; }
  RunContext& context() noexcept { return ctx_; }
  const RunContext& context() const noexcept { return ctx_; }
  std::size_t round() const noexcept { return round_; }

 private:
  // What the server reconstructs from device k's upload.
  ParamVector encode_upload(std::size_t k, const ParamVector& local) {
    switch (cfg_.payload.mode) {
      case PayloadMode::kDense:
        return local;
      case PayloadMode::kQuantized: {
        const Vec delta = sub(local.values, global_.values);
        ParamVector out = global_;
        axpy(1.0, quantize_roundtrip(delta, cfg_.payload.bits), out.values);
        return out;
      }
      case PayloadMode::kSparse: {
        const Vec delta = sub(local.values, global_.values);
        const auto msg = sparsify(delta, cfg_.payload.fraction, residuals_[k]);
        ParamVector out = global_;
        axpy(1.0, densify(msg), out.values);
        return out;
      }
    }
    return local;
  }

  const Federation* fed_;
  FlConfig cfg_;
  RunContext ctx_;
  ParamVector global_;
  std::vector<Vec> residuals_;
  std::vector<Batch> estimate_batches_;
  std::size_t round_ = 0;
};

struct FedAvgResult {
  RunContext context;
  ParamVector global;
};

/// Runs cfg.rounds rounds, or until the budget cannot pay for another round.
/// The last affordable round uses a shortened interval if needed.
inline FedAvgResult run_fedavg(const Federation& fed, const FlConfig& cfg,
                               CostBudget budget = {}) {
  FedAvgEngine eng(fed, cfg, budget);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const std::size_t tau = eng.clamp_to_budget(cfg.tau);
    if (tau == 0) {
      if (r == 0) {
        throw Error(ErrorKind::kBudgetExhausted,
                    "budget exhausted before the first round");
      }
      break;
    }
    eng.step(tau);
  }
  return {std::move(eng.context()), eng.global()};
}

struct LocalResult {
  RunContext context;
  std::vector<ParamVector> models;
};

/// Per-device model initialization shared by the server-less and
/// distillation protocols.
inline ParamVector device_init(const Federation& fed, std::size_t device) {
  Stream s = make_stream(fed.master_seed, Scope::kInit, device);
  return init_params(fed.spec, s);
}

inline double mean_device_accuracy(const Federation& fed,
                                   std::span<const ParamVector> models) {
  double acc = 0.0;
  for (const auto& m : models) acc += evaluate(m, fed.test);
  return acc / static_cast<double>(models.size());
}

/// No-communication baseline: every device trains alone, tau steps per round.
inline LocalResult run_local(const Federation& fed, const FlConfig& cfg) {
  cfg.validate();
  LocalResult res{RunContext(fed.wire_bytes), {}};
  for (const auto& d : fed.devices) res.models.push_back(device_init(fed, d.id));
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    for (std::size_t k = 0; k < fed.devices.size(); ++k) {
      const auto& d = fed.devices[k];
      Stream rng = local_stream(fed.master_seed, d.id, r);
      res.models[k] = local_train(d.data, res.models[k], cfg.tau, cfg.lr,
                                  cfg.batch_size, rng);
    }
    res.context.budget.consume(cfg.tau, 0, fed.num_devices());
    const double loss = weighted_device_loss(fed, [&](const Device& d) {
      return loss_only(res.models[&d - fed.devices.data()], d.data);
    });
    res.context.record(r, cfg.tau, loss, mean_device_accuracy(fed, res.models));
  }
  return res;
}

}  // namespace fogml
