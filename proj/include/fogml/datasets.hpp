#pragma once

// Data ingestion (IDX image/label files, synthetic Gaussian blobs) and
// count-matrix non-IID partitioning across devices.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/linalg.hpp"
#include "fogml/model.hpp"
#include "fogml/rng.hpp"

namespace fogml {

struct Sample {
  std::vector<double> features;
  std::size_t label = 0;

  bool operator==(const Sample&) const = default;
};

struct LocalDataset {
  std::size_t device_id = 0;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
};

inline Batch to_batch(std::span<const Sample> samples) {
  Batch b;
  if (samples.empty()) return b;
  b.cols = samples.front().features.size();
  b.features.reserve(samples.size() * b.cols);
  for (const auto& s : samples) b.push_back(s.features, s.label);
  return b;
}

inline std::vector<std::size_t> label_histogram(std::span<const Sample> samples,
                                                std::size_t num_labels) {
  std::vector<std::size_t> h(num_labels, 0);
  for (const auto& s : samples) ++h.at(s.label);
  return h;
}

// ---------------------------------------------------------------------------
// IDX format

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<double>> pixels;  // scaled to [0, 1]
};

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes,
                               std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) {
    throw Error(ErrorKind::kTruncated,
                std::string(what) + ": truncated header");
  }
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) |
         std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  const auto magic = detail::read_be32(bytes, 0, "idx images");
  if (magic != kIdxImagesMagic) {
    throw Error(ErrorKind::kBadMagic, "idx images: bad magic " +
                                          std::to_string(magic) +
                                          " (expected 2051)");
  }
  const std::size_t n = detail::read_be32(bytes, 4, "idx images");
  IdxImages img;
  img.rows = detail::read_be32(bytes, 8, "idx images");
  img.cols = detail::read_be32(bytes, 12, "idx images");
  const std::size_t d = img.rows * img.cols;
  if (bytes.size() < 16 + n * d) {
    throw Error(ErrorKind::kTruncated,
                "idx images: expected " + std::to_string(n * d) +
                    " pixel bytes, found " + std::to_string(bytes.size() - 16));
  }
  img.pixels.resize(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      img.pixels[i][j] = static_cast<double>(bytes[16 + i * d + j]) / 255.0;
    }
  }
  return img;
}

inline std::vector<std::size_t> parse_idx_labels(
    std::span<const std::uint8_t> bytes) {
  const auto magic = detail::read_be32(bytes, 0, "idx labels");
  if (magic != kIdxLabelsMagic) {
    throw Error(ErrorKind::kBadMagic, "idx labels: bad magic " +
                                          std::to_string(magic) +
                                          " (expected 2049)");
  }
  const std::size_t n = detail::read_be32(bytes, 4, "idx labels");
  if (bytes.size() < 8 + n) {
    throw Error(ErrorKind::kTruncated,
                "idx labels: expected " + std::to_string(n) +
                    " label bytes, found " + std::to_string(bytes.size() - 8));
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

inline std::vector<Sample> samples_from_idx(std::span<const std::uint8_t> images,
                                            std::span<const std::uint8_t> labels) {
  auto img = parse_idx_images(images);
  auto lab = parse_idx_labels(labels);
  if (img.pixels.size() != lab.size()) {
    throw Error(ErrorKind::kCountMismatch,
                "idx: " + std::to_string(img.pixels.size()) + " images but " +
                    std::to_string(lab.size()) + " labels");
  }
  std::vector<Sample> out(lab.size());
  for (std::size_t i = 0; i < lab.size(); ++i) {
    out[i] = Sample{std::move(img.pixels[i]), lab[i]};
  }
  return out;
}

inline std::vector<Sample> load_idx(const std::string& images_path,
                                    const std::string& labels_path) {
  const auto images = detail::read_file(images_path);
  const auto labels = detail::read_file(labels_path);
  return samples_from_idx(images, labels);
}

/// Re-encodes samples as IDX bytes (pixels rounded from [0,1] back to 0..255).
inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>
encode_idx(std::span<const Sample> samples, std::size_t rows, std::size_t cols) {
  std::vector<std::uint8_t> images, labels;
  detail::write_be32(images, kIdxImagesMagic);
  detail::write_be32(images, static_cast<std::uint32_t>(samples.size()));
  detail::write_be32(images, static_cast<std::uint32_t>(rows));
  detail::write_be32(images, static_cast<std::uint32_t>(cols));
  detail::write_be32(labels, kIdxLabelsMagic);
  detail::write_be32(labels, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    require_dims(rows * cols, s.features.size(), "encode_idx sample size");
    for (double v : s.features) {
      const double c = std::clamp(v, 0.0, 1.0) * 255.0;
      images.push_back(static_cast<std::uint8_t>(std::lround(c)));
    }
    require(s.label < 256, ErrorKind::kInvalidArgument,
            "encode_idx: label exceeds one byte");
    labels.push_back(static_cast<std::uint8_t>(s.label));
  }
  return {std::move(images), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Synthetic blobs

/// Distinct blob centers, pairwise at least `min_distance` apart. Coordinates
/// are uniform in [-s, s]; s grows until a valid draw is found.
inline std::vector<std::vector<double>> blob_centers(std::size_t num_labels,
                                                     std::size_t input_dim,
                                                     std::uint64_t seed,
                                                     double min_distance = 4.0) {
  Stream rng = make_stream(seed, Scope::kData, 0);
  double scale = 2.0;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0 && attempt % 50 == 0) scale *= 1.25;
    std::vector<std::vector<double>> c(num_labels, std::vector<double>(input_dim));
    for (auto& row : c) {
      for (auto& v : row) v = rng.uniform(-scale, scale);
    }
    bool ok = true;
    for (std::size_t a = 0; a < num_labels && ok; ++a) {
      for (std::size_t b = a + 1; b < num_labels && ok; ++b) {
        ok = distance2(c[a], c[b]) >= min_distance * min_distance;
      }
    }
    if (ok) return c;
  }
}

/// Label-major Gaussian blobs around blob_centers(...) with isotropic std
/// `spread`.
inline std::vector<Sample> gen_blobs(std::size_t num_labels,
                                     std::size_t input_dim,
                                     std::size_t n_per_label, double spread,
                                     std::uint64_t seed) {
  require(num_labels >= 2, ErrorKind::kInvalidArgument,
          "gen_blobs: need at least 2 labels");
  const auto centers = blob_centers(num_labels, input_dim, seed);
  std::vector<Sample> out;
  out.reserve(num_labels * n_per_label);
  for (std::size_t l = 0; l < num_labels; ++l) {
    Stream rng = make_stream(seed, Scope::kData, 1, l);
    for (std::size_t i = 0; i < n_per_label; ++i) {
      Sample s{centers[l], l};
      for (auto& v : s.features) v += spread * rng.normal();
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Moves `per_label` samples of every label into a held-out set.
inline std::pair<std::vector<Sample>, std::vector<Sample>> split_holdout(
    std::vector<Sample> samples, std::size_t num_labels, std::size_t per_label,
    std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> pools(num_labels);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pools.at(samples[i].label).push_back(i);
  }
  std::vector<char> held(samples.size(), 0);
  for (std::size_t l = 0; l < num_labels; ++l) {
    Stream rng = make_stream(seed, Scope::kTest, l);
    rng.shuffle(pools[l]);
    for (std::size_t k = 0; k < std::min(per_label, pools[l].size()); ++k) {
      held[pools[l][k]] = 1;
    }
  }
  std::vector<Sample> train, test;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (held[i] ? test : train).push_back(std::move(samples[i]));
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Partitioning

struct PartitionPlan {
  std::size_t num_devices = 0;
  std::vector<std::vector<std::size_t>> per_label_counts;  // [device][label]
  std::uint64_t shuffle_seed = 0;

  std::size_t num_labels() const {
    return per_label_counts.empty() ? 0 : per_label_counts.front().size();
  }

  static PartitionPlan iid(std::size_t devices, std::size_t labels,
                           std::size_t per_label, std::uint64_t seed) {
    return {devices,
            std::vector<std::vector<std::size_t>>(
                devices, std::vector<std::size_t>(labels, per_label)),
            seed};
  }

  /// Device d lacks label d mod L: `target` samples of it and `non_target`
  /// of every other label.
  static PartitionPlan target_deficit(std::size_t devices, std::size_t labels,
                                      std::size_t target,
                                      std::size_t non_target,
                                      std::uint64_t seed) {
    PartitionPlan p{devices, {}, seed};
    for (std::size_t d = 0; d < devices; ++d) {
      std::vector<std::size_t> row(labels, non_target);
      row[d % labels] = target;
      p.per_label_counts.push_back(std::move(row));
    }
    return p;
  }

  /// Device d holds labels d, d+1, ..., d+k-1 (mod L), `per_label` each.
  static PartitionPlan label_shards(std::size_t devices, std::size_t labels,
                                    std::size_t labels_per_device,
                                    std::size_t per_label, std::uint64_t seed) {
    PartitionPlan p{devices, {}, seed};
    for (std::size_t d = 0; d < devices; ++d) {
      std::vector<std::size_t> row(labels, 0);
      for (std::size_t k = 0; k < labels_per_device; ++k) {
        row[(d + k) % labels] = per_label;
      }
      p.per_label_counts.push_back(std::move(row));
    }
    return p;
  }
};

/// Deals each label's pool (shuffled with the plan seed) to devices in id
/// order; every sample goes to at most one device.
inline std::vector<LocalDataset> partition(std::span<const Sample> samples,
                                           const PartitionPlan& plan) {
  require_dims(plan.num_devices, plan.per_label_counts.size(),
               "partition plan rows");
  const std::size_t L = plan.num_labels();
  for (const auto& row : plan.per_label_counts) {
    require_dims(L, row.size(), "partition plan columns");
  }
  std::vector<std::vector<std::size_t>> pools(L);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].label < L, ErrorKind::kInvalidArgument,
            "partition: sample label outside plan");
    pools[samples[i].label].push_back(i);
  }
  std::string deficient;
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t need = 0;
    for (const auto& row : plan.per_label_counts) need += row[l];
    if (need > pools[l].size()) {
      deficient += (deficient.empty() ? "" : ", ") + std::string("label ") +
                   std::to_string(l) + " needs " + std::to_string(need) +
                   " has " + std::to_string(pools[l].size());
    }
  }
  if (!deficient.empty()) {
    throw Error(ErrorKind::kInfeasiblePartition,
                "partition infeasible: " + deficient);
  }
  for (std::size_t l = 0; l < L; ++l) {
    Stream rng = make_stream(plan.shuffle_seed, Scope::kPartition, l);
    rng.shuffle(pools[l]);
  }
  std::vector<LocalDataset> out(plan.num_devices);
  std::vector<std::size_t> cursor(L, 0);
  for (std::size_t d = 0; d < plan.num_devices; ++d) {
    out[d].device_id = d;
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t k = 0; k < plan.per_label_counts[d][l]; ++k) {
        out[d].samples.push_back(samples[pools[l][cursor[l]++]]);
      }
    }
  }
  return out;
}

/// Shuffled split of one device's data; `train_fraction` of it stays in train.
inline std::pair<LocalDataset, LocalDataset> train_val_split(
    const LocalDataset& ds, double train_fraction, Stream& rng) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(ds.size())));
  LocalDataset train{ds.device_id, {}}, val{ds.device_id, {}};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    (k < n_train ? train : val).samples.push_back(ds.samples[idx[k]]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace fogml
