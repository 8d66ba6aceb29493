#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// into the library's numerics: loops are naive and run in long double, linear
// algebra goes through Eigen.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fogml/model.hpp"

namespace oracle {

using LVec = std::vector<long double>;

/// Naive forward pass of either model kind, long double throughout.
inline LVec forward(const fogml::ModelSpec& spec, std::span<const double> w,
                    std::span<const double> x) {
  const std::size_t D = spec.input_dim, L = spec.num_labels;
  LVec z(L, 0.0L);
  if (spec.kind == fogml::ModelKind::kLR) {
    for (std::size_t l = 0; l < L; ++l) {
      long double s = w[L * D + l];
      for (std::size_t j = 0; j < D; ++j) s += static_cast<long double>(w[l * D + j]) * x[j];
      z[l] = s;
    }
    return z;
  }
  const std::size_t H = spec.hidden_dim;
  const std::size_t b1 = H * D, w2 = b1 + H, b2 = w2 + L * H;
  LVec h(H);
  for (std::size_t k = 0; k < H; ++k) {
    long double s = w[b1 + k];
    for (std::size_t j = 0; j < D; ++j) s += static_cast<long double>(w[k * D + j]) * x[j];
    h[k] = s > 0 ? s : 0.0L;
  }
  for (std::size_t l = 0; l < L; ++l) {
    long double s = w[b2 + l];
    for (std::size_t k = 0; k < H; ++k) s += static_cast<long double>(w[w2 + l * H + k]) * h[k];
    z[l] = s;
  }
  return z;
}

inline LVec softmax(const LVec& z, long double T) {
  long double m = z[0] / T;
  for (auto v : z) m = std::max(m, v / T);
  LVec p(z.size());
  long double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] / T - m);
  for (auto& v : p) v /= s;
  return p;
}

/// Mean CE + alpha * mean KL(softmax(target[y]/T) || softmax(z/T)) over the
/// rows whose target row is present.
inline long double loss(const fogml::ModelSpec& spec, std::span<const double> w,
                        const fogml::Batch& batch, const fogml::LogitTable* target = nullptr,
                        long double alpha = 0, long double T = 1) {
  long double total = 0;
  for (std::size_t i = 0; i < batch.rows; ++i) {
    const LVec z = forward(spec, w, batch.row(i));
    const LVec p = softmax(z, 1);
    total -= std::log(p[batch.labels[i]]);
    if (alpha > 0 && target && target->present(batch.labels[i])) {
      const auto row = target->row(batch.labels[i]);
      const LVec pt = softmax(LVec(row.begin(), row.end()), T);
      const LVec ps = softmax(z, T);
      long double kl = 0;
      for (std::size_t l = 0; l < z.size(); ++l) {
        if (pt[l] > 0) kl += pt[l] * (std::log(pt[l]) - std::log(ps[l]));
      }
      total += alpha * kl;
    }
  }
  return total / static_cast<long double>(batch.rows);
}

/// Central differences of oracle::loss.
inline std::vector<double> fd_gradient(const fogml::ModelSpec& spec, std::vector<double> w,
                                       const fogml::Batch& batch,
                                       const fogml::LogitTable* target = nullptr,
                                       long double alpha = 0, long double T = 1,
                                       double h = 1e-6) {
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + h;
    const long double up = loss(spec, w, batch, target, alpha, T);
    w[i] = orig - h;
    const long double dn = loss(spec, w, batch, target, alpha, T);
    w[i] = orig;
    g[i] = static_cast<double>((up - dn) / (2.0L * h));
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8)
inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / den);
  }
  return worst;
}

inline Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

/// Eigenvalues (descending) of the population covariance of the rows.
inline std::vector<double> covariance_eigenvalues(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd x = to_eigen(rows);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd c = (x.transpose() * x) / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  std::vector<double> vals(es.eigenvalues().data(), es.eigenvalues().data() + c.rows());
  std::sort(vals.rbegin(), vals.rend());
  return vals;
}

/// argmin_theta sum_n 0.5 ||A_n theta - b_n||^2 via the normal equations.
inline Eigen::VectorXd stacked_least_squares(const std::vector<Eigen::MatrixXd>& as,
                                             const std::vector<Eigen::VectorXd>& bs) {
  const auto d = as.front().cols();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
  for (std::size_t n = 0; n < as.size(); ++n) {
    h += as[n].transpose() * as[n];
    c += as[n].transpose() * bs[n];
  }
  return h.ldlt().solve(c);
}

inline double stacked_objective(const std::vector<Eigen::MatrixXd>& as,
                                const std::vector<Eigen::VectorXd>& bs,
                                const Eigen::VectorXd& theta) {
  double f = 0;
  for (std::size_t n = 0; n < as.size(); ++n) f += 0.5 * (as[n] * theta - bs[n]).squaredNorm();
  return f;
}

/// Naive weighted average of parameter vectors, accumulated in device order.
inline std::vector<double> weighted_average(const std::vector<std::vector<double>>& xs,
                                            const std::vector<double>& w) {
  long double total = 0;
  for (double v : w) total += v;
  std::vector<long double> acc(xs.front().size(), 0);
  for (std::size_t d = 0; d < xs.size(); ++d) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w[d] / total * xs[d][i];
  }
  return {acc.begin(), acc.end()};
}

/// Hand-built big-endian IDX files.
inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows,
                                            std::uint32_t cols,
                                            const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 2051);
  put_be32(out, n);
  put_be32(out, rows);
  put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

inline std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 2049);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace oracle
