#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "fogml/datasets.hpp"
#include "fogml/federation.hpp"
#include "fogml/gadmm.hpp"
#include "fogml/model.hpp"
#include "oracles.hpp"

namespace fixture {

struct BlobSetup {
  std::size_t labels = 4;
  std::size_t dim = 6;
  std::size_t per_label = 60;
  std::size_t test_per_label = 20;
  double spread = 1.5;
  std::size_t devices = 4;
  std::size_t device_per_label = 10;
  std::uint64_t seed = 1;
  bool mlp = false;
  std::size_t hidden = 16;
};

inline fogml::Federation blob_federation(const BlobSetup& s) {
  const auto all = fogml::gen_blobs(s.labels, s.dim, s.per_label, s.spread, s.seed);
  auto [train, test] = fogml::split_holdout(all, s.labels, s.test_per_label, s.seed);
  const auto parts = fogml::partition(
      train, fogml::PartitionPlan::iid(s.devices, s.labels, s.device_per_label, s.seed));
  const auto spec = s.mlp ? fogml::ModelSpec::mlp(s.dim, s.hidden, s.labels)
                          : fogml::ModelSpec::logistic(s.dim, s.labels);
  return fogml::Federation::from_partition(spec, parts, test, s.seed);
}


/// Device n holds `rows` rows of a random least-squares problem in `dim`
/// unknowns with a shared ground truth plus per-device noise.
struct LeastSquares {
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::VectorXd> b;
  std::vector<fogml::QuadraticObjective> objectives;
  Eigen::VectorXd optimum;
  double optimal_value = 0.0;
};

inline LeastSquares least_squares(std::size_t devices, std::size_t rows, std::size_t dim,
                                  std::uint64_t seed, double noise = 0.3) {
  fogml::Stream rng(seed);
  Eigen::VectorXd truth(dim);
  for (auto& v : truth) v = rng.normal();
  LeastSquares ls;
  for (std::size_t n = 0; n < devices; ++n) {
    Eigen::MatrixXd a(rows, dim);
    Eigen::VectorXd b(rows);
    fogml::Matrix am(rows, dim);
    fogml::Vec bv(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < dim; ++j) am(i, j) = a(i, j) = rng.normal();
    }
    b = a * truth;
    for (std::size_t i = 0; i < rows; ++i) bv[i] = b(i) += noise * rng.normal();
    ls.a.push_back(a);
    ls.b.push_back(b);
    ls.objectives.push_back(fogml::QuadraticObjective::least_squares(am, bv));
  }
  ls.optimum = oracle::stacked_least_squares(ls.a, ls.b);
  ls.optimal_value = oracle::stacked_objective(ls.a, ls.b, ls.optimum);
  return ls;
}

/// First round whose objective at the device average is within `gap` of the
/// optimum, or 0 when never reached.
inline std::size_t rounds_to_gap(const fogml::ConsensusResult& r, double optimum, double gap) {
  for (const auto& h : r.history) {
    if (h.objective_mean - optimum <= gap) return h.round;
  }
  return 0;
}

}  // namespace fixture
