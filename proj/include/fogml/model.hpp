#pragma once

// On-device models: multinomial logistic regression (LR) and a one-hidden-layer
// ReLU perceptron (MLP1), with exact gradients of cross-entropy plus an
// optional temperature-scaled KL distillation regularizer.
//
// Parameter layout (flat, row-major):
//   LR:   W[L x D] | b[L]
//   MLP1: W1[H x D] | b1[H] | W2[L x H] | b2[L]

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/linalg.hpp"
#include "fogml/rng.hpp"

namespace fogml {

enum class ModelKind { kLR, kMLP1 };

struct ModelSpec {
  ModelKind kind = ModelKind::kLR;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;
  std::size_t num_labels = 2;

  static ModelSpec logistic(std::size_t input_dim, std::size_t num_labels) {
    ModelSpec s{ModelKind::kLR, input_dim, 0, num_labels};
    s.validate();
    return s;
  }
  static ModelSpec mlp(std::size_t input_dim, std::size_t hidden_dim,
                       std::size_t num_labels) {
    ModelSpec s{ModelKind::kMLP1, input_dim, hidden_dim, num_labels};
    s.validate();
    return s;
  }

  void validate() const {
    require(input_dim >= 1, ErrorKind::kInvalidArgument,
            "ModelSpec: input_dim must be >= 1");
    require(num_labels >= 2, ErrorKind::kInvalidArgument,
            "ModelSpec: num_labels must be >= 2");
    require((hidden_dim >= 1) == (kind == ModelKind::kMLP1),
            ErrorKind::kInvalidArgument,
            "ModelSpec: hidden_dim >= 1 iff kind is MLP1");
  }

  std::size_t param_count() const noexcept {
    if (kind == ModelKind::kLR) return (input_dim + 1) * num_labels;
    return (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_labels;
  }

  bool operator==(const ModelSpec&) const = default;
};

struct ParamVector {
  ModelSpec spec;
  std::vector<double> values;

  static ParamVector zeros(const ModelSpec& spec) {
    return ParamVector{spec, std::vector<double>(spec.param_count(), 0.0)};
  }

  std::size_t size() const noexcept { return values.size(); }

  void validate() const {
    require_dims(spec.param_count(), values.size(), "ParamVector length");
    if (!all_finite(values)) {
      throw Error(ErrorKind::kNonFinite, "ParamVector: non-finite value");
    }
  }

  bool operator==(const ParamVector&) const = default;
};

inline void require_same_spec(const ParamVector& a, const ParamVector& b,
                              const char* what) {
  if (!(a.spec == b.spec) || a.size() != b.size()) {
    throw Error(ErrorKind::kDimensionMismatch,
                std::string(what) + ": parameter shapes differ (" +
                    std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
}

/// Dense labeled sample matrix.
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * cols, cols};
  }

  void push_back(std::span<const double> x, std::size_t label) {
    if (rows == 0 && features.empty()) cols = x.size();
    require_dims(cols, x.size(), "Batch::push_back feature width");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
    ++rows;
  }

  bool empty() const noexcept { return rows == 0; }
};

inline Batch gather(const Batch& src, std::span<const std::size_t> idx) {
  Batch out;
  out.rows = idx.size();
  out.cols = src.cols;
  out.features.reserve(idx.size() * src.cols);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    const auto r = src.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(src.labels[i]);
  }
  return out;
}

inline Batch concat(std::span<const Batch> parts) {
  Batch out;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    if (out.empty()) out.cols = p.cols;
    require_dims(out.cols, p.cols, "concat feature width");
    out.features.insert(out.features.end(), p.features.begin(),
                        p.features.end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.rows += p.rows;
  }
  return out;
}

using LogitVector = std::vector<double>;

/// Per-ground-truth-label average logits (L rows of length L).
struct LogitTable {
  std::size_t num_labels = 0;
  std::vector<double> rows;          // L*L, row-major
  std::vector<std::size_t> counts;   // accumulation count per row; 0 = absent

  explicit LogitTable(std::size_t L = 0)
      : num_labels(L), rows(L * L, 0.0), counts(L, 0) {}

  bool present(std::size_t label) const { return counts.at(label) > 0; }
  std::span<const double> row(std::size_t label) const {
    return {rows.data() + label * num_labels, num_labels};
  }
  std::span<double> row(std::size_t label) {
    return {rows.data() + label * num_labels, num_labels};
  }
  std::size_t present_rows() const {
    return static_cast<std::size_t>(
        std::count_if(counts.begin(), counts.end(),
                      [](std::size_t c) { return c > 0; }));
  }

  bool operator==(const LogitTable&) const = default;
};

/// Numerically stable softmax of z/temperature.
inline void softmax(std::span<const double> z, double temperature,
                    std::span<double> out) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v / temperature);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] / temperature - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
}

inline LogitVector softmax(std::span<const double> z, double temperature = 1.0) {
  LogitVector p(z.size());
  softmax(z, temperature, p);
  return p;
}

inline double log_sum_exp(std::span<const double> z, double temperature = 1.0) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v / temperature);
  double s = 0.0;
  for (double v : z) s += std::exp(v / temperature - m);
  return m + std::log(s);
}

/// He-uniform for MLP1 weights, zeros for LR and all biases.
inline ParamVector init_params(const ModelSpec& spec, Stream& rng) {
  spec.validate();
  ParamVector p = ParamVector::zeros(spec);
  if (spec.kind == ModelKind::kLR) return p;
  const std::size_t D = spec.input_dim, H = spec.hidden_dim, L = spec.num_labels;
  const double lim1 = std::sqrt(6.0 / static_cast<double>(D));
  for (std::size_t i = 0; i < H * D; ++i) p.values[i] = rng.uniform(-lim1, lim1);
  const double lim2 = std::sqrt(6.0 / static_cast<double>(H));
  const std::size_t w2 = H * (D + 1);
  for (std::size_t i = 0; i < L * H; ++i) {
    p.values[w2 + i] = rng.uniform(-lim2, lim2);
  }
  return p;
}

namespace detail {

inline void check_batch(const ParamVector& params, const Batch& batch) {
  require_dims(params.spec.param_count(), params.size(), "parameter count");
  require_dims(params.spec.input_dim, batch.cols, "batch feature width");
  require_dims(batch.rows, batch.labels.size(), "batch label count");
}

// Logits of one sample into z (size L); hidden activations into h (size H).
inline void forward_one(const ParamVector& p, std::span<const double> x,
                        std::span<double> h, std::span<double> z) {
  const auto& s = p.spec;
  const std::size_t D = s.input_dim, L = s.num_labels;
  const double* v = p.values.data();
  if (s.kind == ModelKind::kLR) {
    const double* b = v + L * D;
    for (std::size_t l = 0; l < L; ++l) {
      double acc = b[l];
      const double* w = v + l * D;
      for (std::size_t j = 0; j < D; ++j) acc += w[j] * x[j];
      z[l] = acc;
    }
    return;
  }
  const std::size_t H = s.hidden_dim;
  const double* b1 = v + H * D;
  const double* w2 = v + H * (D + 1);
  const double* b2 = w2 + L * H;
  for (std::size_t k = 0; k < H; ++k) {
    double acc = b1[k];
    const double* w = v + k * D;
    for (std::size_t j = 0; j < D; ++j) acc += w[j] * x[j];
    h[k] = acc > 0.0 ? acc : 0.0;
  }
  for (std::size_t l = 0; l < L; ++l) {
    double acc = b2[l];
    const double* w = w2 + l * H;
    for (std::size_t k = 0; k < H; ++k) acc += w[k] * h[k];
    z[l] = acc;
  }
}

}  // namespace detail

/// One logit vector per batch row.
inline std::vector<LogitVector> forward_logits(const ParamVector& params,
                                               const Batch& batch) {
  detail::check_batch(params, batch);
  const std::size_t L = params.spec.num_labels;
  std::vector<double> h(params.spec.hidden_dim);
  std::vector<LogitVector> out(batch.rows, LogitVector(L));
  for (std::size_t i = 0; i < batch.rows; ++i) {
    detail::forward_one(params, batch.row(i), h, out[i]);
  }
  return out;
}

struct KdOptions {
  const LogitTable* target = nullptr;  // keyed by each sample's label
  double alpha = 0.0;
  double temperature = 1.0;
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean cross-entropy plus alpha * mean KL(softmax(target[y]/T) || softmax(z/T)).
/// Samples whose label row is absent from the target table contribute no KL
/// term. The KL gradient is not rescaled by T^2. When `logits_out` is given it
/// receives the row-major [rows x L] logits computed on the way.
inline LossAndGrad loss_and_grad(const ParamVector& params, const Batch& batch,
                                 const KdOptions& kd = {},
                                 std::vector<double>* logits_out = nullptr) {
  detail::check_batch(params, batch);
  require(batch.rows >= 1, ErrorKind::kEmptyInput, "loss_and_grad: empty batch");
  require(kd.alpha >= 0.0, ErrorKind::kInvalidArgument,
          "loss_and_grad: alpha must be >= 0");
  require(kd.temperature > 0.0, ErrorKind::kInvalidArgument,
          "loss_and_grad: temperature must be > 0");
  const bool use_kd = kd.alpha > 0.0;
  if (use_kd) {
    require(kd.target != nullptr, ErrorKind::kInvalidArgument,
            "loss_and_grad: alpha > 0 requires a distillation target");
    require_dims(params.spec.num_labels, kd.target->num_labels,
                 "distillation target labels");
  }

  const auto& s = params.spec;
  const std::size_t D = s.input_dim, H = s.hidden_dim, L = s.num_labels;
  const double inv_n = 1.0 / static_cast<double>(batch.rows);
  const double T = kd.temperature;

  LossAndGrad out{0.0, ParamVector::zeros(s)};
  double* g = out.grad.values.data();
  const double* v = params.values.data();
  if (logits_out) logits_out->assign(batch.rows * L, 0.0);

  std::vector<double> h(H), z(L), p(L), ps(L), pt(L), dz(L), dh(H);
  for (std::size_t i = 0; i < batch.rows; ++i) {
    const auto x = batch.row(i);
    const std::size_t y = batch.labels[i];
    if (y >= L) {
      throw Error(ErrorKind::kInvalidArgument,
                  "loss_and_grad: label out of range", i);
    }
    detail::forward_one(params, x, h, z);
    if (logits_out) std::copy(z.begin(), z.end(), logits_out->begin() + i * L);

    double li = log_sum_exp(z) - z[y];
    softmax(z, 1.0, p);
    for (std::size_t l = 0; l < L; ++l) dz[l] = p[l];
    dz[y] -= 1.0;

    if (use_kd && kd.target->present(y)) {
      const auto t = kd.target->row(y);
      softmax(t, T, pt);
      softmax(z, T, ps);
      const double lse_t = log_sum_exp(t, T);
      const double lse_s = log_sum_exp(z, T);
      double kl = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        if (pt[l] > 0.0) kl += pt[l] * ((t[l] / T - lse_t) - (z[l] / T - lse_s));
        dz[l] += kd.alpha * (ps[l] - pt[l]) / T;
      }
      li += kd.alpha * kl;
    }
    if (!std::isfinite(li)) {
      throw Error(ErrorKind::kNonFinite,
                  "loss_and_grad: non-finite loss at sample " +
                      std::to_string(i),
                  i);
    }
    out.loss += li * inv_n;
    for (double& d : dz) d *= inv_n;

    if (s.kind == ModelKind::kLR) {
      double* gb = g + L * D;
      for (std::size_t l = 0; l < L; ++l) {
        double* gw = g + l * D;
        for (std::size_t j = 0; j < D; ++j) gw[j] += dz[l] * x[j];
        gb[l] += dz[l];
      }
      continue;
    }
    const double* w2 = v + H * (D + 1);
    double* gb1 = g + H * D;
    double* gw2 = g + H * (D + 1);
    double* gb2 = gw2 + L * H;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t l = 0; l < L; ++l) {
      const double* w = w2 + l * H;
      double* gw = gw2 + l * H;
      for (std::size_t k = 0; k < H; ++k) {
        gw[k] += dz[l] * h[k];
        dh[k] += dz[l] * w[k];
      }
      gb2[l] += dz[l];
    }
    for (std::size_t k = 0; k < H; ++k) {
      if (h[k] <= 0.0) continue;
      double* gw = g + k * D;
      for (std::size_t j = 0; j < D; ++j) gw[j] += dh[k] * x[j];
      gb1[k] += dh[k];
    }
  }
  return out;
}

inline double loss_only(const ParamVector& params, const Batch& batch,
                        const KdOptions& kd = {}) {
  return loss_and_grad(params, batch, kd).loss;
}

inline ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                            double lr) {
  require_same_spec(params, grad, "sgd_step");
  ParamVector out = params;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= lr * grad.values[i];
  return out;
}

/// Predicted label; ties go to the lowest label index.
inline std::size_t argmax(std::span<const double> z) {
  std::size_t best = 0;
  for (std::size_t l = 1; l < z.size(); ++l) {
    if (z[l] > z[best]) best = l;
  }
  return best;
}

inline double evaluate(const ParamVector& params, const Batch& batch) {
  require(batch.rows >= 1, ErrorKind::kEmptyInput, "evaluate: empty batch");
  detail::check_batch(params, batch);
  std::vector<double> h(params.spec.hidden_dim), z(params.spec.num_labels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.rows; ++i) {
    detail::forward_one(params, batch.row(i), h, z);
    if (argmax(z) == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.rows);
}

/// Indices of a minibatch drawn with replacement.
inline std::vector<std::size_t> sample_minibatch(std::size_t n,
                                                 std::size_t batch_size,
                                                 Stream& rng) {
  if (n == 0) return {};
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_index(n));
  return idx;
}

}  // namespace fogml
