#pragma once

// Multi-hop federated data augmentation (MultFAug).
//
// Every device marks the labels it lacks in a binary SDI vector. Along each
// relay chain a device publishes the cumulative public SDI (what it inherited
// OR its private bits, padded with dummy labels when it reveals something new)
// and attaches compressed seed samples for the labels it newly indicated. The
// server fits a statistical generator on the decoded seeds; devices download it
// and top up their lacking labels before running FedAvg.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fogml/datasets.hpp"
#include "fogml/error.hpp"
#include "fogml/federation.hpp"
#include "fogml/fedavg.hpp"
#include "fogml/netsim.hpp"
#include "fogml/rng.hpp"
#include "fogml/summarize.hpp"

namespace fogml {

enum class SdiKind { kPrivate, kPublic, kAggregated };

struct SdiVector {
  std::vector<std::uint8_t> bits;
  SdiKind kind = SdiKind::kPrivate;

  static SdiVector zeros(std::size_t L, SdiKind kind) {
    return {std::vector<std::uint8_t>(L, 0), kind};
  }
  static SdiVector from_bits(std::vector<std::uint8_t> b,
                             SdiKind kind = SdiKind::kPrivate) {
    for (auto& x : b) x = x ? 1 : 0;
    return {std::move(b), kind};
  }

  std::size_t size() const noexcept { return bits.size(); }
  bool test(std::size_t l) const { return bits.at(l) != 0; }
  std::size_t ones() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
  }
};

/// Every 1 of `a` is a 1 of `b`.
inline bool sdi_subset(const SdiVector& a, const SdiVector& b) {
  require_dims(a.size(), b.size(), "sdi_subset");
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a.bits[l] && !b.bits[l]) return false;
  }
  return true;
}

inline SdiVector sdi_or(const SdiVector& a, const SdiVector& b, SdiKind kind) {
  require_dims(a.size(), b.size(), "sdi_or");
  SdiVector out = SdiVector::zeros(a.size(), kind);
  for (std::size_t l = 0; l < a.size(); ++l) out.bits[l] = a.bits[l] | b.bits[l];
  return out;
}

/// Labels whose local count is below `ratio` times the largest local count.
inline SdiVector private_sdi(std::span<const std::size_t> histogram, double ratio = 0.5) {
  SdiVector s = SdiVector::zeros(histogram.size(), SdiKind::kPrivate);
  const std::size_t top =
      histogram.empty() ? 0 : *std::max_element(histogram.begin(), histogram.end());
  for (std::size_t l = 0; l < histogram.size(); ++l) {
    s.bits[l] = static_cast<double>(histogram[l]) < ratio * static_cast<double>(top);
  }
  return s;
}

struct PublicSdi {
  SdiVector sdi;
  std::vector<std::size_t> new_indicators;  // public \ inherited, ascending
  std::vector<std::size_t> dummies;         // ascending
  bool dummy_shortfall = false;             // fewer than d_min labels available
};

/// public = inherited OR private OR dummies. Dummies are only inserted when
/// the device reveals a label not already inherited; then min(d_min,
/// available) of them are drawn uniformly from the labels still at 0.
inline PublicSdi make_public_sdi(const SdiVector& priv, const SdiVector& inherited,
                                 std::size_t d_min, Stream& rng) {
  require_dims(priv.size(), inherited.size(), "make_public_sdi");
  PublicSdi out{sdi_or(inherited, priv, SdiKind::kPublic), {}, {}, false};
  if (!sdi_subset(priv, inherited)) {
    std::vector<std::size_t> free;
    for (std::size_t l = 0; l < out.sdi.size(); ++l) {
      if (!out.sdi.bits[l]) free.push_back(l);
    }
    const std::size_t take = std::min(d_min, free.size());
    out.dummy_shortfall = take < d_min;
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(free.size() - i));
      std::swap(free[i], free[j]);
      out.dummies.push_back(free[i]);
      out.sdi.bits[free[i]] = 1;
    }
    std::sort(out.dummies.begin(), out.dummies.end());
  }
  for (std::size_t l = 0; l < out.sdi.size(); ++l) {
    if (out.sdi.bits[l] && !inherited.bits[l]) out.new_indicators.push_back(l);
  }
  return out;
}

/// 1 - ones(private) / ones(public); 1 when nothing private is held.
inline double sdi_privacy(const SdiVector& priv, const SdiVector& pub) {
  const std::size_t p = priv.ones(), q = pub.ones();
  if (p == 0) return 1.0;
  require(q >= p, ErrorKind::kInvalidArgument,
          "sdi_privacy: public SDI has fewer ones than private");
  return 1.0 - static_cast<double>(p) / static_cast<double>(q);
}

struct PrivacyReport {
  std::vector<double> per_device;  // indexed by device id
  double mean_privacy = 0.0;
  std::size_t hop_count = 1;
  std::size_t dummy_count = 0;
  std::size_t dummy_seed_bytes = 0;
  std::size_t total_uplink_bytes = 0;
};

struct RelayOptions {
  std::size_t d_min = 1;
  std::size_t seeds_per_label = 4;
  double compression = 0.5;
  std::size_t image_rows = 1;  // seed samples are encoded as rows x cols
  std::size_t image_cols = 0;  // 0: one row of input_dim columns
};

struct RelayResult {
  SdiVector aggregated;
  std::vector<CsrSample> seeds;              // as received by the server
  std::vector<std::size_t> seed_origin;      // sending device per seed
  std::vector<PublicSdi> published;          // indexed by device id
  PrivacyReport report;
  double duration = 0.0;                     // slowest chain, hops in sequence
};

/// Processes every chain of the topology in order. Each device sends one
/// message to the next hop (or the server): its public SDI plus up to
/// `seeds_per_label` compressed local samples for each new indicator. Labels
/// that only entered as dummies are served from the device's own samples of
/// that label, so their seeds cost the same bytes as real ones.
inline RelayResult relay_hop(const Topology& topo, std::span<const SdiVector> privates,
                             std::span<const Batch> data, const RelayOptions& opt,
                             std::uint64_t master_seed, PayloadLedger& ledger,
                             const LinkSpec& link, std::size_t round = 0) {
  require_dims(topo.num_devices, privates.size(), "relay_hop private SDIs");
  require_dims(topo.num_devices, data.size(), "relay_hop device data");
  require(topo.num_devices >= 1, ErrorKind::kEmptyInput, "relay_hop: no devices");
  const std::size_t L = privates.front().size();
  RelayResult res;
  res.aggregated = SdiVector::zeros(L, SdiKind::kAggregated);
  res.published.resize(topo.num_devices);
  res.report.per_device.assign(topo.num_devices, 0.0);
  res.report.hop_count = topo.kind == TopologyKind::kMultihopStar ? topo.hop_depth : 1;

  for (const auto& chain : topo.branches()) {
    SdiVector inherited = SdiVector::zeros(L, SdiKind::kPublic);
    double chain_time = 0.0;
    for (std::size_t pos = 0; pos < chain.size(); ++pos) {
      const std::size_t dev = chain[pos];
      const Batch& local = data[dev];
      const std::size_t cols =
          opt.image_cols ? opt.image_cols : local.cols / std::max<std::size_t>(1, opt.image_rows);
      require(opt.image_rows * cols == local.cols, ErrorKind::kInvalidArgument,
              "relay_hop: image shape does not match the feature width");
      Stream sdi_rng = make_stream(master_seed, Scope::kSdi, dev);
      PublicSdi pub = make_public_sdi(privates[dev], inherited, opt.d_min, sdi_rng);

      std::vector<CsrSample> payload;
      std::size_t dummy_bytes = 0;
      for (std::size_t label : pub.new_indicators) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < local.rows; ++i) {
          if (local.labels[i] == label) idx.push_back(i);
        }
        Stream pick = make_stream(master_seed, Scope::kSeeds, dev, label);
        pick.shuffle(idx);
        idx.resize(std::min(idx.size(), opt.seeds_per_label));
        std::sort(idx.begin(), idx.end());
        const bool dummy = std::binary_search(pub.dummies.begin(), pub.dummies.end(), label);
        Stream comp = make_stream(master_seed, Scope::kCompress, dev, label);
        for (std::size_t i : idx) {
          const auto row = local.row(i);
          Sample s{{row.begin(), row.end()}, label};
          payload.push_back(
              compress_sample(s, opt.image_rows, cols, opt.compression, comp));
          if (dummy) dummy_bytes += csr_bytes(payload.back());
          res.seed_origin.push_back(dev);
        }
      }

      const NodeId src = static_cast<NodeId>(dev);
      const NodeId dst = pos + 1 < chain.size() ? static_cast<NodeId>(chain[pos + 1]) : kServer;
      chain_time += ledger.charge(link, Message::sdi(L), Direction::kUplink, round, src, dst);
      if (!payload.empty()) {
        chain_time += ledger.charge(link, Message::seeds_csr(payload), Direction::kUplink,
                                    round, src, dst);
      }
      res.report.per_device[dev] = sdi_privacy(privates[dev], pub.sdi);
      res.report.dummy_count += pub.dummies.size();
      res.report.dummy_seed_bytes += dummy_bytes;
      res.aggregated = sdi_or(res.aggregated, pub.sdi, SdiKind::kAggregated);
      inherited = pub.sdi;
      res.published[dev] = std::move(pub);
      for (auto& c : payload) res.seeds.push_back(std::move(c));
    }
    res.duration = std::max(res.duration, chain_time);
  }
  double sum = 0.0;
  for (double p : res.report.per_device) sum += p;
  res.report.mean_privacy = sum / static_cast<double>(topo.num_devices);
  res.report.total_uplink_bytes = ledger.uplink_bytes();
  return res;
}

// ---------------------------------------------------------------------------
// Augmenter: shared PCA + per-label diagonal Gaussian in PCA space

struct LabelGaussian {
  bool fitted = false;
  std::size_t count = 0;
  Vec mean;      // PCA coordinates
  Vec variance;  // per component, unbiased
};

struct AugmenterModel {
  PcaBasis basis;
  std::vector<LabelGaussian> labels;
  bool clamp_unit = false;

  bool fitted(std::size_t label) const {
    return label < labels.size() && labels[label].fitted;
  }
  /// Number of reals a device downloads.
  std::size_t param_count() const {
    std::size_t n = basis.mean.size() + basis.components.data.size();
    for (const auto& g : labels) n += g.fitted ? 2 * basis.k() : 0;
    return n;
  }
};

struct AugmenterOptions {
  std::size_t components = 8;  // capped at min(n - 1, d)
  bool clamp_unit = false;     // image data lives in [0, 1]
};

/// Fits on the pooled seeds; a label needs at least two seeds (and, when an
/// aggregated SDI is given, its indicator set) to be fitted.
inline AugmenterModel fit_augmenter(std::span<const Sample> pool, std::size_t num_labels,
                                    const AugmenterOptions& opt = {},
                                    const SdiVector* aggregated = nullptr) {
  std::vector<std::size_t> hist(num_labels, 0);
  for (const auto& s : pool) {
    require(s.label < num_labels, ErrorKind::kInvalidArgument,
            "fit_augmenter: seed label out of range");
    ++hist[s.label];
  }
  auto eligible = [&](std::size_t l) {
    return hist[l] >= 2 && (!aggregated || aggregated->test(l));
  };
  bool any = false;
  for (std::size_t l = 0; l < num_labels; ++l) any = any || eligible(l);
  require(any, ErrorKind::kEmptyInput, "fit_augmenter: no label has two or more seeds");

  AugmenterModel m;
  m.clamp_unit = opt.clamp_unit;
  const std::size_t d = pool.front().features.size();
  const std::size_t k = std::max<std::size_t>(
      1, std::min({opt.components, pool.size() - 1, d}));
  m.basis = pca_fit(pool, k);
  m.labels.resize(num_labels);
  std::vector<std::vector<Vec>> coords(num_labels);
  for (const auto& s : pool) {
    if (eligible(s.label)) coords[s.label].push_back(pca_project(m.basis, s.features));
  }
  for (std::size_t l = 0; l < num_labels; ++l) {
    if (!eligible(l)) continue;
    auto& g = m.labels[l];
    const auto& zs = coords[l];
    g.fitted = true;
    g.count = zs.size();
    g.mean.assign(k, 0.0);
    for (const auto& z : zs) axpy(1.0 / static_cast<double>(zs.size()), z, g.mean);
    g.variance.assign(k, 0.0);
    for (const auto& z : zs) {
      for (std::size_t j = 0; j < k; ++j) {
        const double e = z[j] - g.mean[j];
        g.variance[j] += e * e;
      }
    }
    for (auto& v : g.variance) v /= static_cast<double>(zs.size() - 1);
  }
  return m;
}

inline std::vector<Sample> synthesize(const AugmenterModel& m, std::size_t label,
                                      std::size_t count, Stream& rng) {
  if (!m.fitted(label)) {
    throw Error(ErrorKind::kUnfittedLabel,
                "synthesize: label " + std::to_string(label) + " has no fitted model");
  }
  const auto& g = m.labels[label];
  std::vector<Sample> out;
  out.reserve(count);
  Vec z(g.mean.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < z.size(); ++j) {
      z[j] = g.mean[j] + std::sqrt(g.variance[j]) * rng.normal();
    }
    Sample s{pca_reconstruct(m.basis, z), label};
    if (m.clamp_unit) {
      for (auto& x : s.features) x = std::clamp(x, 0.0, 1.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Server-side decode; masked coordinates are compensated by 1 / (1 - c).
inline std::vector<Sample> decode_seeds(std::span<const CsrSample> seeds,
                                        double compression) {
  std::vector<Sample> out;
  out.reserve(seeds.size());
  const double scale = 1.0 / (1.0 - compression);
  for (const auto& c : seeds) {
    Sample s = decode_csr(c);
    for (auto& x : s.features) x *= scale;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Protocol

struct MultFaugConfig {
  FlConfig fl;
  std::size_t hops = 1;
  RelayOptions relay;
  AugmenterOptions augmenter;
  double lack_ratio = 0.5;
  bool augment = true;  // false: plain FedAvg on the same data, no relay
};

struct MultFaugResult {
  RunContext context;
  ParamVector global;
  PrivacyReport privacy;
  SdiVector aggregated;
  std::size_t synthesized = 0;
};

/// Phase 1 relays SDIs and seeds (round 0), phase 2 fits the augmenter and
/// sends it to every device (round 0), phase 3 tops each device's lacking
/// labels up to its largest label count and runs FedAvg.
inline MultFaugResult run_multfaug(const Federation& fed, const MultFaugConfig& cfg,
                                   CostBudget budget = {}) {
  const std::size_t N = fed.num_devices(), L = fed.num_labels();
  require(N >= 1, ErrorKind::kEmptyInput, "run_multfaug: no devices");
  Federation aug_fed = fed;
  PayloadLedger pre(fed.wire_bytes);
  double pre_time = 0.0;
  MultFaugResult res{RunContext(fed.wire_bytes, budget), {}, {},
                     SdiVector::zeros(L, SdiKind::kAggregated), 0};

  if (cfg.augment) {
    std::vector<SdiVector> privates;
    std::vector<Batch> data;
    for (const auto& d : fed.devices) {
      std::vector<std::size_t> hist(L, 0);
      for (std::size_t y : d.data.labels) ++hist[y];
      privates.push_back(private_sdi(hist, cfg.lack_ratio));
      data.push_back(d.data);
    }
    const auto topo = Topology::multihop_star(N, cfg.hops);
    RelayResult relay =
        relay_hop(topo, privates, data, cfg.relay, fed.master_seed, pre, fed.link, 0);
    pre_time += relay.duration;
    res.privacy = relay.report;
    res.aggregated = relay.aggregated;

    const auto pool = decode_seeds(relay.seeds, cfg.relay.compression);
    const AugmenterModel model = fit_augmenter(pool, L, cfg.augmenter, &relay.aggregated);
    double down = 0.0;
    for (const auto& d : fed.devices) {
      down = std::max(down, pre.charge(fed.link, Message::dense_params(model.param_count()),
                                       Direction::kDownlink, 0, kServer,
                                       static_cast<NodeId>(d.id)));
    }
    pre_time += down;

    for (std::size_t k = 0; k < N; ++k) {
      auto& dev = aug_fed.devices[k];
      std::vector<std::size_t> hist(L, 0);
      for (std::size_t y : dev.data.labels) ++hist[y];
      const std::size_t top = *std::max_element(hist.begin(), hist.end());
      for (std::size_t l = 0; l < L; ++l) {
        if (!privates[k].test(l) || !model.fitted(l) || hist[l] >= top) continue;
        Stream rng = make_stream(fed.master_seed, Scope::kSynthesize, dev.id, l);
        for (const auto& s : synthesize(model, l, top - hist[l], rng)) {
          dev.data.push_back(s.features, s.label);
          ++res.synthesized;
        }
      }
    }
  }

  FedAvgEngine eng(aug_fed, cfg.fl, budget);
  for (const auto& e : pre.entries()) eng.context().ledger.append(e);
  eng.context().clock.transmit(pre_time);
  eng.context().clock.barrier();
  for (std::size_t r = 0; r < cfg.fl.rounds; ++r) {
    const std::size_t tau = eng.clamp_to_budget(cfg.fl.tau);
    if (tau == 0) {
      if (r == 0) {
        throw Error(ErrorKind::kBudgetExhausted, "budget exhausted before the first round");
      }
      break;
    }
    eng.step(tau);
  }
  res.privacy.total_uplink_bytes = pre.uplink_bytes();
  res.context = std::move(eng.context());
  res.global = eng.global();
  return res;
}

}  // namespace fogml
