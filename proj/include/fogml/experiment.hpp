#pragma once

// Experiment runner: strict JSON config, dataset + partition construction,
// protocol dispatch and the output files (metrics.csv, ledger.csv,
// summary.json, privacy.json, blocks.jsonl).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fogml/adaptive.hpp"
#include "fogml/blockfl.hpp"
#include "fogml/datasets.hpp"
#include "fogml/distill.hpp"
#include "fogml/error.hpp"
#include "fogml/faug.hpp"
#include "fogml/federation.hpp"
#include "fogml/fedavg.hpp"
#include "fogml/gadmm.hpp"
#include "fogml/model.hpp"
#include "fogml/netsim.hpp"

namespace fogml {

using Json = nlohmann::json;

enum class Protocol { kFedAvg, kAdaptive, kGadmm, kFd, kFld, kMultFaug, kBlockFl, kLocal };

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kFedAvg: return "fedavg";
    case Protocol::kAdaptive: return "adaptive";
    case Protocol::kGadmm: return "gadmm";
    case Protocol::kFd: return "fd";
    case Protocol::kFld: return "fld";
    case Protocol::kMultFaug: return "multfaug";
    case Protocol::kBlockFl: return "blockfl";
    case Protocol::kLocal: return "local";
  }
  return "unknown";
}

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | idx
  std::size_t num_labels = 10;
  std::size_t dim = 20;
  std::size_t train_per_label = 200;
  std::size_t test_per_label = 50;
  double spread = 1.0;
  std::optional<std::uint64_t> seed;  // defaults to master_seed
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t max_train = 0;  // 0: all
  std::size_t max_test = 0;
};

struct PartitionConfig {
  std::string plan = "iid";  // iid | target_deficit | label_shards
  std::size_t devices = 10;
  std::size_t per_label = 20;
  std::size_t target = 4;
  std::size_t non_target = 200;
  std::size_t labels_per_device = 2;
};

struct ModelConfig {
  std::string kind = "lr";  // lr | mlp
  std::size_t hidden = 64;
};

struct GadmmConfig {
  double rho = 1.0;
  std::size_t max_rounds = 200;
  double tol = 1e-6;
  std::size_t inner_steps = 20;
};

struct ExperimentConfig {
  Protocol protocol = Protocol::kFedAvg;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  DatasetConfig dataset;
  PartitionConfig partition;
  ModelConfig model;
  LinkSpec link;
  std::size_t wire_bytes = 4;
  CostBudget budget;
  FlConfig fl;
  AdaptiveConfig adaptive;
  GadmmConfig gadmm;
  FdConfig fd;
  FldConfig fld;
  MultFaugConfig multfaug;
  BlockFlConfig blockfl;
};

// ---------------------------------------------------------------------------
// Strict reading

namespace detail {

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::kSchema, path + ": " + what);
}

/// Reads keys of one JSON object and rejects whatever was not asked for.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) schema_error(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::size_t get(const std::string& key, std::size_t def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      schema_error(at(key), "expected a non-negative integer");
    }
    return v->get<std::size_t>();
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    return static_cast<std::uint64_t>(get(key, static_cast<std::size_t>(def)));
  }
  double get(const std::string& key, double def) {
    const Json* v = take(key);
    if (!v) return def;
    if (v->is_null()) return std::numeric_limits<double>::infinity();
    if (!v->is_number()) schema_error(at(key), "expected a number");
    return v->get<double>();
  }
  int get(const std::string& key, int def) {
    return static_cast<int>(get(key, static_cast<std::size_t>(def)));
  }
  bool get(const std::string& key, bool def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_boolean()) schema_error(at(key), "expected true or false");
    return v->get<bool>();
  }
  std::string get(const std::string& key, const std::string& def,
                  std::initializer_list<const char*> allowed = {}) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_string()) schema_error(at(key), "expected a string");
    auto s = v->get<std::string>();
    if (allowed.size() && std::none_of(allowed.begin(), allowed.end(),
                                       [&](const char* a) { return s == a; })) {
      std::string list;
      for (const char* a : allowed) list += (list.empty() ? "" : "|") + std::string(a);
      schema_error(at(key), "expected one of " + list + ", got \"" + s + "\"");
    }
    return s;
  }
  std::vector<std::size_t> get_list(const std::string& key) {
    const Json* v = take(key);
    if (!v) return {};
    if (!v->is_array()) schema_error(at(key), "expected an array");
    std::vector<std::size_t> out;
    for (const auto& x : *v) {
      if (!x.is_number_unsigned()) schema_error(at(key), "expected non-negative integers");
      out.push_back(x.get<std::size_t>());
    }
    return out;
  }
  std::optional<Reader> object(const std::string& key) {
    const Json* v = take(key);
    if (!v) return std::nullopt;
    return Reader(*v, at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) schema_error(at(it.key()), "unknown key");
    }
  }

 private:
  const Json* take(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Protocol parse_protocol(const std::string& s) {
  static const std::pair<const char*, Protocol> table[] = {
      {"fedavg", Protocol::kFedAvg}, {"adaptive", Protocol::kAdaptive},
      {"gadmm", Protocol::kGadmm},   {"fd", Protocol::kFd},
      {"fld", Protocol::kFld},       {"multfaug", Protocol::kMultFaug},
      {"blockfl", Protocol::kBlockFl}, {"local", Protocol::kLocal}};
  for (const auto& [name, p] : table) {
    if (s == name) return p;
  }
  schema_error("protocol", "unknown protocol \"" + s + "\"");
}

inline void read_fl(Reader& r, FlConfig& fl) {
  fl.tau = r.get("tau", fl.tau);
  fl.rounds = r.get("rounds", fl.rounds);
  fl.lr = r.get("lr", fl.lr);
  fl.batch_size = r.get("batch_size", fl.batch_size);
  fl.uniform_weights = r.get("uniform_weights", fl.uniform_weights);
  if (auto p = r.object("payload")) {
    const auto mode = p->get("mode", std::string("dense"), {"dense", "quantized", "sparse"});
    fl.payload.mode = mode == "dense"       ? PayloadMode::kDense
                      : mode == "quantized" ? PayloadMode::kQuantized
                                            : PayloadMode::kSparse;
    fl.payload.bits = p->get("bits", fl.payload.bits);
    fl.payload.fraction = p->get("fraction", fl.payload.fraction);
    p->finish();
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  using detail::Reader;
  ExperimentConfig c;
  Reader root(j, "");
  if (!root.has("protocol")) detail::schema_error("protocol", "missing required key");
  c.protocol = detail::parse_protocol(root.get("protocol", std::string()));
  c.master_seed = root.get_u64("master_seed", c.master_seed);
  c.output_dir = root.get("output_dir", c.output_dir);

  if (auto r = root.object("dataset")) {
    auto& d = c.dataset;
    d.kind = r->get("kind", d.kind, {"blobs", "idx"});
    d.num_labels = r->get("num_labels", d.num_labels);
    d.dim = r->get("dim", d.dim);
    d.train_per_label = r->get("train_per_label", d.train_per_label);
    d.test_per_label = r->get("test_per_label", d.test_per_label);
    d.spread = r->get("spread", d.spread);
    if (r->has("seed")) d.seed = r->get_u64("seed", 0);
    d.train_images = r->get("train_images", d.train_images);
    d.train_labels = r->get("train_labels", d.train_labels);
    d.test_images = r->get("test_images", d.test_images);
    d.test_labels = r->get("test_labels", d.test_labels);
    d.max_train = r->get("max_train", d.max_train);
    d.max_test = r->get("max_test", d.max_test);
    r->finish();
    if (d.kind == "idx" && (d.train_images.empty() || d.train_labels.empty() ||
                            d.test_images.empty() || d.test_labels.empty())) {
      detail::schema_error("dataset", "idx datasets need train/test image and label paths");
    }
  }
  if (auto r = root.object("partition")) {
    auto& p = c.partition;
    p.plan = r->get("plan", p.plan, {"iid", "target_deficit", "label_shards"});
    p.devices = r->get("devices", p.devices);
    p.per_label = r->get("per_label", p.per_label);
    p.target = r->get("target", p.target);
    p.non_target = r->get("non_target", p.non_target);
    p.labels_per_device = r->get("labels_per_device", p.labels_per_device);
    r->finish();
    if (p.devices == 0) detail::schema_error("partition.devices", "must be >= 1");
  }
  if (auto r = root.object("model")) {
    c.model.kind = r->get("kind", c.model.kind, {"lr", "mlp"});
    c.model.hidden = r->get("hidden", c.model.hidden);
    r->finish();
  }
  if (auto r = root.object("link")) {
    c.link.uplink_bits_per_round = r->get("uplink_bits_per_round", c.link.uplink_bits_per_round);
    c.link.downlink_bits_per_round =
        r->get("downlink_bits_per_round", c.link.downlink_bits_per_round);
    c.wire_bytes = r->get("wire_bytes", c.wire_bytes);
    r->finish();
  }
  const bool has_budget = root.has("budget");
  if (auto r = root.object("budget")) {
    c.budget.c_comp = r->get("c_comp", c.budget.c_comp);
    c.budget.c_comm = r->get("c_comm", c.budget.c_comm);
    c.budget.total = r->get("total", c.budget.total);
    r->finish();
  }
  if (auto r = root.object("fl")) {
    detail::read_fl(*r, c.fl);
    r->finish();
  }
  if (auto r = root.object("adaptive")) {
    auto& a = c.adaptive;
    a.tau_max = r->get("tau_max", a.tau_max);
    a.initial_tau = r->get("initial_tau", a.initial_tau);
    a.max_rounds = r->get("max_rounds", a.max_rounds);
    a.estimate_batch = r->get("estimate_batch", a.estimate_batch);
    a.smoothing = r->get("smoothing", a.smoothing);
    r->finish();
  }
  if (auto r = root.object("gadmm")) {
    auto& g = c.gadmm;
    g.rho = r->get("rho", g.rho);
    g.max_rounds = r->get("max_rounds", g.max_rounds);
    g.tol = r->get("tol", g.tol);
    g.inner_steps = r->get("inner_steps", g.inner_steps);
    r->finish();
  }
  if (auto r = root.object("fd")) {
    c.fd.alpha = r->get("alpha", c.fd.alpha);
    c.fd.temperature = r->get("temperature", c.fd.temperature);
    r->finish();
  }
  if (auto r = root.object("fld")) {
    auto& f = c.fld;
    f.seed_fraction = r->get("seed_fraction", f.seed_fraction);
    f.server.epochs = r->get("server_epochs", f.server.epochs);
    f.server.lr = r->get("server_lr", f.server.lr);
    f.server.batch_size = r->get("server_batch_size", f.server.batch_size);
    f.warm_start = r->get("warm_start", f.warm_start);
    r->finish();
  }
  if (auto r = root.object("multfaug")) {
    auto& m = c.multfaug;
    m.hops = r->get("hops", m.hops);
    m.relay.d_min = r->get("d_min", m.relay.d_min);
    m.relay.seeds_per_label = r->get("seeds_per_label", m.relay.seeds_per_label);
    m.relay.compression = r->get("compression", m.relay.compression);
    m.relay.image_rows = r->get("image_rows", m.relay.image_rows);
    m.relay.image_cols = r->get("image_cols", m.relay.image_cols);
    m.augmenter.components = r->get("components", m.augmenter.components);
    m.augmenter.clamp_unit = r->get("clamp_unit", m.augmenter.clamp_unit);
    m.lack_ratio = r->get("lack_ratio", m.lack_ratio);
    m.augment = r->get("augment", m.augment);
    r->finish();
  }
  if (auto r = root.object("blockfl")) {
    auto& b = c.blockfl;
    b.num_miners = r->get("miners", b.num_miners);
    b.failed_miners = r->get_list("failed_miners");
    b.pow_rate = r->get("pow_rate", b.pow_rate);
    b.reward_total = r->get("reward_total", b.reward_total);
    b.norm_factor = r->get("norm_factor", b.norm_factor);
    b.nan_devices = r->get_list("nan_devices");
    b.overclaim_devices = r->get_list("overclaim_devices");
    r->finish();
  }
  root.finish();
  try {
    c.fl.validate();
    c.fd.validate();
    c.budget.validate();
    c.link.validate();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInvalidArgument) throw;
    throw Error(ErrorKind::kSchema, e.what());
  }

  // FL settings are shared by every protocol that trains locally
  c.adaptive.fl = c.fl;
  if (has_budget) c.adaptive.budget = c.budget;
  c.fd.rounds = c.fl.rounds;
  c.fd.interval = c.fl.tau;
  c.fd.lr = c.fl.lr;
  c.fd.batch_size = c.fl.batch_size;
  c.fld.fd = c.fd;
  c.fld.server.alpha = c.fd.alpha;
  c.fld.server.temperature = c.fd.temperature;
  c.multfaug.fl = c.fl;
  c.blockfl.fl = c.fl;
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kSchema, std::string("invalid JSON: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Environment

struct Environment {
  Federation fed;
  std::vector<LocalDataset> parts;
};

inline std::pair<std::vector<Sample>, std::vector<Sample>> load_dataset(
    const ExperimentConfig& c) {
  const auto& d = c.dataset;
  if (d.kind == "idx") {
    auto train = load_idx(d.train_images, d.train_labels);
    auto test = load_idx(d.test_images, d.test_labels);
    if (d.max_train && train.size() > d.max_train) train.resize(d.max_train);
    if (d.max_test && test.size() > d.max_test) test.resize(d.max_test);
    return {std::move(train), std::move(test)};
  }
  const std::uint64_t seed = d.seed.value_or(c.master_seed);
  auto all = gen_blobs(d.num_labels, d.dim, d.train_per_label + d.test_per_label, d.spread, seed);
  return split_holdout(std::move(all), d.num_labels, d.test_per_label, seed);
}

inline PartitionPlan make_plan(const ExperimentConfig& c, std::size_t num_labels) {
  const auto& p = c.partition;
  if (p.plan == "target_deficit") {
    return PartitionPlan::target_deficit(p.devices, num_labels, p.target, p.non_target,
                                         c.master_seed);
  }
  if (p.plan == "label_shards") {
    return PartitionPlan::label_shards(p.devices, num_labels, p.labels_per_device,
                                       p.per_label, c.master_seed);
  }
  return PartitionPlan::iid(p.devices, num_labels, p.per_label, c.master_seed);
}

inline Environment build_environment(const ExperimentConfig& c) {
  auto [train, test] = load_dataset(c);
  require(!train.empty(), ErrorKind::kEmptyInput, "dataset has no training samples");
  std::size_t L = c.dataset.kind == "blobs" ? c.dataset.num_labels : 0;
  for (const auto& s : train) L = std::max(L, s.label + 1);
  const std::size_t dim = train.front().features.size();
  const ModelSpec spec = c.model.kind == "mlp" ? ModelSpec::mlp(dim, c.model.hidden, L)
                                               : ModelSpec::logistic(dim, L);
  Environment env;
  env.parts = partition(train, make_plan(c, L));
  env.fed = Federation::from_partition(spec, env.parts, test, c.master_seed, c.link);
  env.fed.wire_bytes = c.wire_bytes;
  return env;
}

// ---------------------------------------------------------------------------
// Running

struct RunOutputs {
  std::string metrics_csv;
  std::string ledger_csv;
  Json summary;
  std::optional<Json> privacy;
  std::optional<std::string> blocks_jsonl;
};

inline Json privacy_json(const PrivacyReport& r) {
  return Json{{"per_device", r.per_device},
              {"mean_privacy", r.mean_privacy},
              {"hop_count", r.hop_count},
              {"dummy_count", r.dummy_count},
              {"dummy_seed_bytes", r.dummy_seed_bytes},
              {"total_uplink_bytes", r.total_uplink_bytes}};
}

inline std::string block_json_line(const Block& b) {
  Json rewards = Json::array();
  for (const auto& [d, r] : b.rewards) rewards.push_back({{"device", d}, {"reward", r}});
  return Json{{"round", b.round},
              {"winner", b.winner},
              {"pow_time", b.pow_time},
              {"rewards", rewards}}
      .dump();
}

namespace detail {

inline RunOutputs finish_outputs(const ExperimentConfig& c, const RunContext& ctx) {
  RunOutputs out;
  out.metrics_csv = ctx.metrics_csv();
  out.ledger_csv = ctx.ledger.csv();
  const MetricsRow last = ctx.metrics.empty() ? MetricsRow{} : ctx.metrics.back();
  out.summary = Json{{"protocol", to_string(c.protocol)},
                     {"master_seed", c.master_seed},
                     {"rounds", ctx.metrics.size()},
                     {"final_test_acc", last.test_acc},
                     {"final_train_loss", last.train_loss},
                     {"cum_uplink_bits", static_cast<double>(ctx.ledger.uplink_bytes()) * 8.0},
                     {"cum_downlink_bits", static_cast<double>(ctx.ledger.downlink_bytes()) * 8.0},
                     {"cum_cost", ctx.budget.consumed()},
                     {"sim_time", ctx.clock.now()}};
  return out;
}

inline RunOutputs run_gadmm_protocol(const ExperimentConfig& c, const Federation& fed) {
  require(fed.spec.kind == ModelKind::kLR, ErrorKind::kSchema,
          "model.kind: gadmm runs on the lr model");
  std::vector<LogisticObjective> objectives;
  for (const auto& d : fed.devices) {
    objectives.emplace_back(fed.spec, d.data, c.gadmm.inner_steps);
  }
  RunContext ctx(fed.wire_bytes, c.budget);
  GadmmOptions opt;
  opt.rho = c.gadmm.rho;
  opt.max_rounds = c.gadmm.max_rounds;
  opt.tol = c.gadmm.tol;
  const auto N = fed.num_devices();
  opt.on_round = [&](const ConsensusRecord& rec, const GadmmState& s) {
    ctx.budget.consume(1, 1, N);
    const ParamVector mean{fed.spec, average(s.theta)};
    ctx.record(rec.round, std::nullopt, rec.objective_mean / static_cast<double>(N),
               evaluate(mean, fed.test));
  };
  const auto res = run_gadmm(std::span<const LogisticObjective>(objectives),
                             assign_groups(N), opt, &ctx, fed.link);
  auto out = finish_outputs(c, ctx);
  out.summary["converged"] = res.converged;
  out.summary["final_residual"] = res.history.empty() ? 0.0 : res.history.back().residual;
  return out;
}

}  // namespace detail

inline RunOutputs run_experiment(const ExperimentConfig& c) {
  const Environment env = build_environment(c);
  const Federation& fed = env.fed;
  switch (c.protocol) {
    case Protocol::kFedAvg: {
      const auto r = run_fedavg(fed, c.fl, c.budget);
      return detail::finish_outputs(c, r.context);
    }
    case Protocol::kLocal: {
      const auto r = run_local(fed, c.fl);
      return detail::finish_outputs(c, r.context);
    }
    case Protocol::kAdaptive: {
      const auto r = run_adaptive(fed, c.adaptive);
      auto out = detail::finish_outputs(c, r.context);
      out.summary["taus"] = r.taus;
      return out;
    }
    case Protocol::kGadmm:
      return detail::run_gadmm_protocol(c, fed);
    case Protocol::kFd: {
      const auto r = run_fd(fed, c.fd);
      return detail::finish_outputs(c, r.context);
    }
    case Protocol::kFld: {
      const auto r = run_fld(fed, c.fld);
      auto out = detail::finish_outputs(c, r.context);
      out.summary["seed_pool"] = r.seed_pool.rows;
      return out;
    }
    case Protocol::kMultFaug: {
      const auto r = run_multfaug(fed, c.multfaug, c.budget);
      auto out = detail::finish_outputs(c, r.context);
      out.summary["synthesized"] = r.synthesized;
      if (c.multfaug.augment) {
        out.privacy = privacy_json(r.privacy);
        out.summary["mean_privacy"] = r.privacy.mean_privacy;
        out.summary["dummy_seed_bytes"] = r.privacy.dummy_seed_bytes;
      }
      return out;
    }
    case Protocol::kBlockFl: {
      const auto r = run_blockfl(fed, c.blockfl, c.budget);
      auto out = detail::finish_outputs(c, r.context);
      std::string lines;
      for (const auto& b : r.blocks) lines += block_json_line(b) + "\n";
      out.blocks_jsonl = std::move(lines);
      out.summary["blocks"] = r.blocks.size();
      return out;
    }
  }
  throw Error(ErrorKind::kSchema, "unhandled protocol");
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + p.string());
  out << text;
}

inline void write_outputs(const std::filesystem::path& dir, const RunOutputs& out) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "metrics.csv", out.metrics_csv);
  write_text(dir / "ledger.csv", out.ledger_csv);
  write_text(dir / "summary.json", out.summary.dump(2) + "\n");
  if (out.privacy) write_text(dir / "privacy.json", out.privacy->dump(2) + "\n");
  if (out.blocks_jsonl) write_text(dir / "blocks.jsonl", *out.blocks_jsonl);
}

// ---------------------------------------------------------------------------
// Sweeps

/// Parses "1,2,5" style lists; each item is a JSON literal, bare words are strings.
inline std::vector<Json> parse_sweep_values(const std::string& text) {
  std::vector<Json> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    const Json v = Json::parse(item, nullptr, false);
    out.push_back(v.is_discarded() ? Json(item) : v);
  }
  return out;
}

/// Sets `dotted` (e.g. "fl.tau") in a copy of the config document.
inline Json with_param(Json doc, const std::string& dotted, const Json& value) {
  Json* node = &doc;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty() || std::any_of(parts.begin(), parts.end(),
                                   [](const std::string& p) { return p.empty(); })) {
    throw Error(ErrorKind::kSchema, "sweep: malformed parameter \"" + dotted + "\"");
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    Json& next = (*node)[parts[i]];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) {
      throw Error(ErrorKind::kSchema, "sweep: " + parts[i] + " is not an object");
    }
    node = &next;
  }
  const Json& old = node->contains(parts.back()) ? (*node)[parts.back()] : Json();
  if (old.is_object() || old.is_array()) {
    throw Error(ErrorKind::kSchema, "sweep: " + dotted + " is not a scalar field");
  }
  (*node)[parts.back()] = value;
  return doc;
}

inline std::string sweep_label(const Json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

inline constexpr const char* kSweepHeader =
    "value,rounds,final_test_acc,cum_uplink_bits,cum_downlink_bits,cum_cost,sim_time,"
    "mean_privacy,dummy_seed_bytes";

inline std::string sweep_row(const std::string& value, const Json& s) {
  auto num = [&](const char* k) {
    return s.contains(k) ? format_double(s[k].get<double>()) : std::string();
  };
  std::ostringstream os;
  os << value << ',' << s["rounds"].get<std::size_t>() << ',' << num("final_test_acc") << ','
     << num("cum_uplink_bits") << ',' << num("cum_downlink_bits") << ',' << num("cum_cost")
     << ',' << num("sim_time") << ',' << num("mean_privacy") << ','
     << (s.contains("dummy_seed_bytes") ? std::to_string(s["dummy_seed_bytes"].get<std::size_t>())
                                        : std::string());
  return os.str();
}

/// One full run per value into <output_dir>/<param>=<value>/, plus sweep.csv.
/// Returns the comparison CSV text.
inline std::string run_sweep(const Json& doc, const std::string& param,
                             const std::vector<Json>& values,
                             const std::optional<std::string>& output_dir = std::nullopt,
                             const std::optional<std::uint64_t>& seed = std::nullopt,
                             bool write = true) {
  require(!values.empty(), ErrorKind::kSchema, "sweep: empty value list");
  std::string csv = std::string(kSweepHeader) + "\n";
  std::string root;
  for (const auto& v : values) {
    ExperimentConfig c = parse_config(with_param(doc, param, v));
    if (output_dir) c.output_dir = *output_dir;
    if (seed) c.master_seed = *seed;
    root = c.output_dir;
    const RunOutputs out = run_experiment(c);
    if (write) write_outputs(std::filesystem::path(root) / (param + "=" + sweep_label(v)), out);
    csv += sweep_row(sweep_label(v), out.summary) + "\n";
  }
  if (write) {
    std::filesystem::create_directories(root);
    write_text(std::filesystem::path(root) / "sweep.csv", csv);
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Errors

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kSchema: return 2;
    case ErrorKind::kInfeasiblePartition: return 3;
    case ErrorKind::kBudgetExhausted: return 4;
    default: return 1;
  }
}

inline std::string error_json(const Error& e) {
  Json j{{"error", to_string(e.kind())}, {"message", e.what()}, {"exit_code", exit_code(e.kind())}};
  if (e.index()) j["index"] = *e.index();
  return j.dump();
}

}  // namespace fogml
