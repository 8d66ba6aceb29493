#pragma once

// Data summarization: per-label statistics, PCA by power iteration with
// deflation, lightweight-coreset importance sampling, and random-drop sample
// compression stored as CSR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "fogml/datasets.hpp"
#include "fogml/error.hpp"
#include "fogml/linalg.hpp"
#include "fogml/rng.hpp"

namespace fogml {

struct LabelStats {
  std::size_t count = 0;
  Vec mean, variance, sum, median;
};

struct StatSummary {
  std::vector<LabelStats> labels;

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& l : labels) n += l.count;
    return n;
  }
};

/// Per-label count, mean, population variance, sum and lower median.
inline StatSummary stat_summary(std::span<const Sample> samples,
                                std::size_t num_labels) {
  require(!samples.empty(), ErrorKind::kEmptyInput, "stat_summary: empty dataset");
  const std::size_t d = samples.front().features.size();
  StatSummary out;
  out.labels.resize(num_labels);
  std::vector<Vec> m2(num_labels);
  std::vector<std::vector<std::size_t>> members(num_labels);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    require(s.label < num_labels, ErrorKind::kInvalidArgument,
            "stat_summary: label out of range");
    require_dims(d, s.features.size(), "stat_summary feature width");
    auto& st = out.labels[s.label];
    if (st.count == 0) {
      st.mean.assign(d, 0.0);
      st.sum.assign(d, 0.0);
      m2[s.label].assign(d, 0.0);
    }
    ++st.count;
    members[s.label].push_back(i);
    // Welford update
    for (std::size_t j = 0; j < d; ++j) {
      const double x = s.features[j];
      st.sum[j] += x;
      const double delta = x - st.mean[j];
      st.mean[j] += delta / static_cast<double>(st.count);
      m2[s.label][j] += delta * (x - st.mean[j]);
    }
  }
  std::vector<double> column;
  for (std::size_t l = 0; l < num_labels; ++l) {
    auto& st = out.labels[l];
    if (st.count == 0) continue;
    st.variance.resize(d);
    st.median.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      st.variance[j] =
          std::max(0.0, m2[l][j] / static_cast<double>(st.count));
      column.clear();
      for (std::size_t i : members[l]) column.push_back(samples[i].features[j]);
      const std::size_t mid = (column.size() - 1) / 2;
      std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid),
                       column.end());
      st.median[j] = column[mid];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaBasis {
  Vec mean;
  Matrix components;  // k x d, orthonormal rows
  Vec eigenvalues;    // descending

  std::size_t k() const noexcept { return components.rows; }
  std::size_t dim() const noexcept { return mean.size(); }
};

struct PowerIterationOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

/// Covariance (normalized by n) of row vectors.
inline Matrix covariance(std::span<const Vec> rows, const Vec& mean) {
  const std::size_t d = mean.size();
  Matrix c(d, d);
  Vec centered(d);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = r[j] - mean[j];
    for (std::size_t i = 0; i < d; ++i) {
      if (centered[i] == 0.0) continue;
      for (std::size_t j = i; j < d; ++j) c(i, j) += centered[i] * centered[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      c(i, j) *= inv_n;
      c(j, i) = c(i, j);
    }
  }
  return c;
}

/// Top-k eigenpairs of a symmetric PSD matrix. Each component is found by
/// power iteration on the matrix restricted to the orthogonal complement of
/// the components already found.
inline std::pair<Matrix, Vec> top_eigenpairs(const Matrix& c, std::size_t k,
                                             const PowerIterationOptions& opt = {}) {
  const std::size_t d = c.rows;
  Matrix comps(k, d);
  Vec vals(k, 0.0);
  Stream rng(0x5CA1AB1E);
  double scale = 0.0;
  for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, std::abs(c(i, i)));
  scale = std::max(scale, 1e-300);

  auto deflate = [&](Vec& v, std::size_t found) {
    for (std::size_t p = 0; p < found; ++p) {
      const double proj = dot(comps.row(p), v);
      axpy(-proj, comps.row(p), v);
    }
  };

  for (std::size_t comp = 0; comp < k; ++comp) {
    Vec v(d);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    deflate(v, comp);
    deflate(v, comp);
    double nv = norm2(v);
    for (auto& x : v) x /= nv;

    double lambda = 0.0;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
      Vec w = matvec(c, v);
      deflate(w, comp);
      lambda = dot(v, w);
      // residual of the Rayleigh pair
      double res = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double r = w[j] - lambda * v[j];
        res += r * r;
      }
      if (std::sqrt(res) <= opt.tolerance * scale) break;
      const double nw = norm2(w);
      if (nw <= opt.tolerance * scale) {
        lambda = 0.0;  // v spans part of the null space
        break;
      }
      for (std::size_t j = 0; j < d; ++j) v[j] = w[j] / nw;
      deflate(v, comp);  // re-orthogonalize against rounding drift
      nv = norm2(v);
      for (auto& x : v) x /= nv;
    }
    std::copy(v.begin(), v.end(), comps.row(comp).begin());
    vals[comp] = std::max(0.0, dot(v, matvec(c, v)));
  }

  // order by eigenvalue, descending
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
  Matrix sorted(k, d);
  Vec sorted_vals(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::copy(comps.row(order[i]).begin(), comps.row(order[i]).end(),
              sorted.row(i).begin());
    sorted_vals[i] = vals[order[i]];
  }
  return {std::move(sorted), std::move(sorted_vals)};
}

inline PcaBasis pca_fit(std::span<const Vec> rows, std::size_t k,
                        const PowerIterationOptions& opt = {}) {
  require(!rows.empty(), ErrorKind::kEmptyInput, "pca_fit: empty dataset");
  const std::size_t n = rows.size(), d = rows.front().size();
  if (k < 1 || k > std::min(n - 1, d)) {
    throw Error(ErrorKind::kInvalidArgument,
                "pca_fit: k=" + std::to_string(k) + " infeasible for n=" +
                    std::to_string(n) + ", d=" + std::to_string(d));
  }
  PcaBasis b;
  b.mean.assign(d, 0.0);
  for (const auto& r : rows) {
    require_dims(d, r.size(), "pca_fit feature width");
    axpy(1.0, r, b.mean);
  }
  for (auto& m : b.mean) m /= static_cast<double>(n);
  auto [comps, vals] = top_eigenpairs(covariance(rows, b.mean), k, opt);
  b.components = std::move(comps);
  b.eigenvalues = std::move(vals);
  return b;
}

inline PcaBasis pca_fit(std::span<const Sample> samples, std::size_t k,
                        const PowerIterationOptions& opt = {}) {
  std::vector<Vec> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(s.features);
  return pca_fit(std::span<const Vec>(rows), k, opt);
}

inline Vec pca_project(const PcaBasis& b, std::span<const double> x) {
  require_dims(b.dim(), x.size(), "pca_project");
  const Vec centered = sub(x, b.mean);
  return matvec(b.components, centered);
}

inline Vec pca_reconstruct(const PcaBasis& b, std::span<const double> z) {
  require_dims(b.k(), z.size(), "pca_reconstruct");
  Vec x = matvec_t(b.components, z);
  axpy(1.0, b.mean, x);
  return x;
}

/// Mean squared reconstruction error (sum over coordinates, mean over rows).
inline double pca_reconstruction_mse(const PcaBasis& b, std::span<const Vec> rows) {
  double total = 0.0;
  for (const auto& r : rows) {
    total += distance2(r, pca_reconstruct(b, pca_project(b, r)));
  }
  return total / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------
// Lightweight coreset

struct Coreset {
  std::vector<Sample> samples;
  std::vector<double> weights;
  std::vector<std::size_t> source_index;
};

/// Importance sampling with q(x) = 1/(2n) + dist^2(x, mu) / (2 * sum dist^2),
/// m draws with replacement, weights 1/(m q(x)). When every point sits on the
/// mean, q is uniform.
inline Coreset coreset_lightweight(std::span<const Sample> samples,
                                   std::size_t m, std::uint64_t seed) {
  const std::size_t n = samples.size();
  require(m >= 1 && m <= n, ErrorKind::kInvalidArgument,
          "coreset_lightweight: need 1 <= m <= n");
  const std::size_t d = samples.front().features.size();
  Vec mu(d, 0.0);
  for (const auto& s : samples) axpy(1.0, s.features, mu);
  for (auto& v : mu) v /= static_cast<double>(n);
  Vec dist(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = distance2(samples[i].features, mu);
    total += dist[i];
  }
  Vec q(n);
  const double uniform = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = total > 0.0 ? 0.5 * uniform + 0.5 * dist[i] / total : uniform;
  }
  Vec cdf(n);
  std::partial_sum(q.begin(), q.end(), cdf.begin());

  Stream rng = make_stream(seed, Scope::kSeeds, 0xC0AE5E7);
  Coreset out;
  out.samples.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double u = rng.uniform01() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto i = std::min<std::size_t>(
        static_cast<std::size_t>(it - cdf.begin()), n - 1);
    out.samples.push_back(samples[i]);
    out.weights.push_back(1.0 / (static_cast<double>(m) * q[i]));
    out.source_index.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sample compression + CSR

struct CsrSample {
  std::vector<double> values;
  std::vector<std::uint16_t> col_idx;
  std::vector<std::uint32_t> row_ptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t label = 0;

  std::size_t nnz() const noexcept { return values.size(); }
};

/// Wire size: 4 bytes per value, 2 per column index, 4 per row pointer.
inline std::size_t csr_bytes(std::size_t nnz, std::size_t rows) noexcept {
  return 4 * nnz + 2 * nnz + 4 * (rows + 1);
}
inline std::size_t csr_bytes(const CsrSample& c) noexcept {
  return csr_bytes(c.nnz(), c.rows);
}

inline CsrSample encode_csr(std::span<const double> x, std::size_t rows,
                            std::size_t cols, std::size_t label) {
  require_dims(rows * cols, x.size(), "encode_csr shape");
  require(cols <= 65536, ErrorKind::kInvalidArgument,
          "encode_csr: column index exceeds 16 bits");
  CsrSample c;
  c.rows = rows;
  c.cols = cols;
  c.label = label;
  c.row_ptr.reserve(rows + 1);
  c.row_ptr.push_back(0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t col = 0; col < cols; ++col) {
      const double v = x[r * cols + col];
      if (v != 0.0) {
        c.values.push_back(v);
        c.col_idx.push_back(static_cast<std::uint16_t>(col));
      }
    }
    c.row_ptr.push_back(static_cast<std::uint32_t>(c.values.size()));
  }
  return c;
}

inline Sample decode_csr(const CsrSample& c) {
  Sample s{std::vector<double>(c.rows * c.cols, 0.0), c.label};
  for (std::size_t r = 0; r < c.rows; ++r) {
    for (std::uint32_t k = c.row_ptr[r]; k < c.row_ptr[r + 1]; ++k) {
      s.features[r * c.cols + c.col_idx[k]] = c.values[k];
    }
  }
  return s;
}

/// Zeroes floor(c * d) coordinates chosen uniformly without replacement.
inline Sample mask_sample(const Sample& s, double drop_fraction, Stream& rng) {
  require(drop_fraction >= 0.0 && drop_fraction < 1.0,
          ErrorKind::kInvalidArgument, "drop fraction must be in [0, 1)");
  const std::size_t d = s.features.size();
  const auto drop = static_cast<std::size_t>(
      std::floor(drop_fraction * static_cast<double>(d)));
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Sample out = s;
  // partial Fisher-Yates: the first `drop` slots end up uniformly chosen
  for (std::size_t i = 0; i < drop; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(d - i));
    std::swap(idx[i], idx[j]);
    out.features[idx[i]] = 0.0;
  }
  return out;
}

inline CsrSample compress_sample(const Sample& s, std::size_t rows,
                                 std::size_t cols, double drop_fraction,
                                 Stream& rng) {
  const Sample masked = mask_sample(s, drop_fraction, rng);
  return encode_csr(masked.features, rows, cols, s.label);
}

inline CsrSample compress_sample(const Sample& s, std::size_t rows,
                                 std::size_t cols, double drop_fraction,
                                 std::uint64_t seed) {
  Stream rng = make_stream(seed, Scope::kCompress);
  return compress_sample(s, rows, cols, drop_fraction, rng);
}

/// Similarity proxy: mean Euclidean distance over all unordered pairs.
inline double mean_pairwise_distance(std::span<const Vec> xs) {
  if (xs.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      total += std::sqrt(distance2(xs[i], xs[j]));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace fogml
