#pragma once

// Group ADMM on a chain: devices alternate between a head group and a tail
// group, each device only talks to its chain neighbors, and every chain edge
// carries a dual variable. Also provides the decentralized gradient descent
// baseline on the same chain.
//
// Edge e joins chain positions e (left) and e+1 (right) and enforces
// theta_e - theta_{e+1} = 0 through the Lagrangian term
// lambda_e^T (theta_e - theta_{e+1}).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/federation.hpp"
#include "fogml/linalg.hpp"
#include "fogml/model.hpp"
#include "fogml/netsim.hpp"

namespace fogml {

struct ChainAssignment {
  std::vector<std::size_t> order;  // device id at each chain position
  std::vector<std::size_t> heads;  // device ids at positions 0, 2, 4, ...
  std::vector<std::size_t> tails;  // device ids at positions 1, 3, 5, ...

  std::size_t size() const noexcept { return order.size(); }
  static bool is_head_position(std::size_t pos) noexcept { return pos % 2 == 0; }
};

inline ChainAssignment assign_groups(std::span<const std::size_t> device_ids) {
  require(device_ids.size() >= 2, ErrorKind::kInvalidArgument,
          "assign_groups: need at least 2 devices");
  ChainAssignment a;
  a.order.assign(device_ids.begin(), device_ids.end());
  for (std::size_t pos = 0; pos < a.order.size(); ++pos) {
    (ChainAssignment::is_head_position(pos) ? a.heads : a.tails).push_back(a.order[pos]);
  }
  return a;
}

inline ChainAssignment assign_groups(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return assign_groups(ids);
}

/// f(theta) = 1/2 theta^T H theta - c^T theta + k.
struct QuadraticObjective {
  Matrix hessian;
  Vec linear;
  double constant = 0.0;

  /// 1/2 ||A theta - b||^2
  static QuadraticObjective least_squares(const Matrix& a, std::span<const double> b) {
    require_dims(a.rows, b.size(), "least_squares rhs");
    return {gram(a), matvec_t(a, b), 0.5 * dot(b, b)};
  }

  std::size_t dim() const noexcept { return linear.size(); }

  double value(std::span<const double> theta) const {
    const Vec ht = matvec(hessian, theta);
    return 0.5 * dot(theta, ht) - dot(linear, theta) + constant;
  }

  Vec gradient(std::span<const double> theta) const {
    Vec g = matvec(hessian, theta);
    axpy(-1.0, linear, g);
    return g;
  }

  double smoothness() const {
    // Gershgorin bound on the largest eigenvalue
    double m = 0.0;
    for (std::size_t i = 0; i < hessian.rows; ++i) {
      double s = 0.0;
      for (double v : hessian.row(i)) s += std::abs(v);
      m = std::max(m, s);
    }
    return m;
  }

  /// argmin f(theta) + lin^T theta + (mu/2)||theta||^2, solved exactly.
  Vec argmin_augmented(std::span<const double> lin, double mu,
                       std::span<const double> /*warm*/) const {
    Matrix m = hessian;
    for (std::size_t i = 0; i < m.rows; ++i) m(i, i) += mu;
    Vec rhs = linear;
    axpy(-1.0, lin, rhs);
    return cholesky_solve(m, rhs);
  }
};

/// Mean cross-entropy of a logistic-regression model on one device's data;
/// augmented subproblems are solved inexactly by a fixed number of gradient
/// steps with step 1 / (smoothness bound + mu).
struct LogisticObjective {
  ModelSpec spec;
  Batch data;
  std::size_t inner_steps = 20;

  LogisticObjective(ModelSpec s, Batch b, std::size_t steps = 20)
      : spec(s), data(std::move(b)), inner_steps(steps) {
    require(spec.kind == ModelKind::kLR, ErrorKind::kInvalidArgument,
            "LogisticObjective requires an LR model");
    require(!data.empty(), ErrorKind::kEmptyInput, "LogisticObjective: no data");
  }

  std::size_t dim() const noexcept { return spec.param_count(); }

  double value(std::span<const double> theta) const {
    return loss_only(ParamVector{spec, Vec(theta.begin(), theta.end())}, data);
  }
  Vec gradient(std::span<const double> theta) const {
    return loss_and_grad(ParamVector{spec, Vec(theta.begin(), theta.end())}, data)
        .grad.values;
  }

  /// Softmax cross-entropy Hessian is bounded by 1/2 * mean ||[x, 1]||^2.
  double smoothness() const {
    double s = 0.0;
    for (std::size_t i = 0; i < data.rows; ++i) s += dot(data.row(i), data.row(i)) + 1.0;
    return 0.5 * s / static_cast<double>(data.rows);
  }

  Vec argmin_augmented(std::span<const double> lin, double mu,
                       std::span<const double> warm) const {
    const double step = 1.0 / (smoothness() + mu);
    Vec theta(warm.begin(), warm.end());
    for (std::size_t k = 0; k < inner_steps; ++k) {
      Vec g = gradient(theta);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= step * (g[i] + lin[i] + mu * theta[i]);
      }
    }
    return theta;
  }
};

struct GadmmState {
  std::vector<Vec> theta;   // by chain position
  std::vector<Vec> lambda;  // by edge, size N-1
  double rho = 1.0;
};

inline GadmmState make_gadmm_state(std::size_t n, std::size_t dim, double rho) {
  require(rho > 0.0, ErrorKind::kInvalidArgument, "rho must be > 0");
  return {std::vector<Vec>(n, Vec(dim, 0.0)), std::vector<Vec>(n - 1, Vec(dim, 0.0)),
          rho};
}

/// Minimizes the augmented Lagrangian of the device at chain position `pos`
/// given its neighbors' current primal values.
template <class Objective>
Vec primal_update(std::size_t pos, const GadmmState& s, const Objective& f) {
  const std::size_t n = s.theta.size();
  const std::size_t dim = s.theta[pos].size();
  Vec lin(dim, 0.0);
  double mu = 0.0;
  if (pos > 0) {  // right endpoint of edge pos-1
    axpy(-1.0, s.lambda[pos - 1], lin);
    axpy(-s.rho, s.theta[pos - 1], lin);
    mu += s.rho;
  }
  if (pos + 1 < n) {  // left endpoint of edge pos
    axpy(1.0, s.lambda[pos], lin);
    axpy(-s.rho, s.theta[pos + 1], lin);
    mu += s.rho;
  }
  return f.argmin_augmented(lin, mu, s.theta[pos]);
}

/// lambda_e += rho (theta_left - theta_right) for every edge.
inline void dual_update(GadmmState& s) {
  for (std::size_t e = 0; e + 1 < s.theta.size(); ++e) {
    for (std::size_t i = 0; i < s.lambda[e].size(); ++i) {
      s.lambda[e][i] += s.rho * (s.theta[e][i] - s.theta[e + 1][i]);
    }
  }
}

inline double max_edge_residual(const std::vector<Vec>& theta) {
  double r = 0.0;
  for (std::size_t e = 0; e + 1 < theta.size(); ++e) {
    r = std::max(r, norm_inf(sub(theta[e], theta[e + 1])));
  }
  return r;
}

inline Vec average(const std::vector<Vec>& xs) {
  Vec m(xs.front().size(), 0.0);
  for (const auto& x : xs) axpy(1.0 / static_cast<double>(xs.size()), x, m);
  return m;
}

struct ConsensusRecord {
  std::size_t round = 0;
  double residual = 0.0;        // max edge residual (inf norm)
  double objective_sum = 0.0;   // sum_n f_n(theta_n)
  double objective_mean = 0.0;  // sum_n f_n(mean theta)
};

struct Delivery {
  std::size_t round = 0;
  std::size_t src = 0;
  std::size_t dst = 0;
};

struct ConsensusResult {
  GadmmState state;
  std::vector<ConsensusRecord> history;
  std::vector<Delivery> deliveries;
  bool converged = false;
  std::size_t rounds = 0;
};

struct GadmmOptions {
  double rho = 1.0;
  std::size_t max_rounds = 1000;
  double tol = 1e-6;
  std::size_t round_offset = 0;  // ledger round numbering
  std::function<void(const ConsensusRecord&, const GadmmState&)> on_round;
};

namespace detail {

template <class Objective>
ConsensusRecord consensus_record(std::size_t round, const std::vector<Vec>& theta,
                                 std::span<const Objective> objectives,
                                 const ChainAssignment& chain) {
  ConsensusRecord rec{round, max_edge_residual(theta), 0.0, 0.0};
  const Vec mean = average(theta);
  for (std::size_t pos = 0; pos < theta.size(); ++pos) {
    const auto& f = objectives[chain.order[pos]];
    rec.objective_sum += f.value(theta[pos]);
    rec.objective_mean += f.value(mean);
  }
  return rec;
}

inline void broadcast(RunContext* ctx, const LinkSpec& link, std::size_t dim,
                      std::size_t round, const ChainAssignment& chain,
                      std::size_t pos, std::vector<Delivery>& deliveries) {
  const std::size_t src = chain.order[pos];
  if (ctx) {
    ctx->clock.transmit(ctx->ledger.charge(link, Message::dense_params(dim),
                                           Direction::kUplink, round,
                                           static_cast<NodeId>(src), kBroadcast));
  }
  if (pos > 0) deliveries.push_back({round, src, chain.order[pos - 1]});
  if (pos + 1 < chain.size()) deliveries.push_back({round, src, chain.order[pos + 1]});
}

}  // namespace detail

/// `objectives` is indexed by device id. Each round: heads update in parallel
/// from the tails' previous values and broadcast, tails update from the new
/// head values and broadcast, then every edge updates its dual. Stops once the
/// max edge residual is within tol.
template <class Objective>
ConsensusResult run_gadmm(std::span<const Objective> objectives,
                          const ChainAssignment& chain, const GadmmOptions& opt,
                          RunContext* ctx = nullptr, const LinkSpec& link = {}) {
  const std::size_t n = chain.size();
  require(n >= 2, ErrorKind::kInvalidArgument, "run_gadmm: need at least 2 devices");
  const std::size_t dim = objectives[chain.order[0]].dim();
  ConsensusResult res{make_gadmm_state(n, dim, opt.rho), {}, {}, false, 0};
  auto& s = res.state;

  for (std::size_t k = 1; k <= opt.max_rounds; ++k) {
    const std::size_t round = opt.round_offset + k;
    for (int group = 0; group < 2; ++group) {
      std::vector<std::pair<std::size_t, Vec>> updates;
      for (std::size_t pos = static_cast<std::size_t>(group); pos < n; pos += 2) {
        updates.emplace_back(pos, primal_update(pos, s, objectives[chain.order[pos]]));
      }
      for (auto& [pos, v] : updates) s.theta[pos] = std::move(v);
      for (std::size_t pos = static_cast<std::size_t>(group); pos < n; pos += 2) {
        detail::broadcast(ctx, link, dim, round, chain, pos, res.deliveries);
      }
      if (ctx) ctx->clock.barrier();
    }
    dual_update(s);
    res.history.push_back(detail::consensus_record(k, s.theta, objectives, chain));
    res.rounds = k;
    if (opt.on_round) opt.on_round(res.history.back(), s);
    if (res.history.back().residual <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

struct DgdOptions {
  double step = 0.1;
  std::size_t max_rounds = 1000;
  double tol = 1e-6;
};

/// Decentralized gradient descent on the chain: every device mixes its
/// neighbors' parameters with Metropolis weights, then takes one local
/// gradient step.
template <class Objective>
ConsensusResult run_dgd(std::span<const Objective> objectives,
                        const ChainAssignment& chain, const DgdOptions& opt,
                        RunContext* ctx = nullptr, const LinkSpec& link = {}) {
  const std::size_t n = chain.size();
  require(n >= 2, ErrorKind::kInvalidArgument, "run_dgd: need at least 2 devices");
  const std::size_t dim = objectives[chain.order[0]].dim();
  ConsensusResult res{make_gadmm_state(n, dim, 1.0), {}, {}, false, 0};
  auto& theta = res.state.theta;
  auto degree = [&](std::size_t pos) -> double {
    return (pos > 0 ? 1.0 : 0.0) + (pos + 1 < n ? 1.0 : 0.0);
  };

  for (std::size_t k = 1; k <= opt.max_rounds; ++k) {
    for (std::size_t pos = 0; pos < n; ++pos) {
      detail::broadcast(ctx, link, dim, k, chain, pos, res.deliveries);
    }
    if (ctx) ctx->clock.barrier();
    std::vector<Vec> next(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
      Vec mixed = theta[pos];
      for (std::size_t nb : {pos - 1, pos + 1}) {
        if (nb >= n) continue;  // also catches pos - 1 wrapping at 0
        const double w = 1.0 / (1.0 + std::max(degree(pos), degree(nb)));
        axpy(w, theta[nb], mixed);
        axpy(-w, theta[pos], mixed);
      }
      const Vec g = objectives[chain.order[pos]].gradient(mixed);
      axpy(-opt.step, g, mixed);
      next[pos] = std::move(mixed);
    }
    theta = std::move(next);
    res.history.push_back(detail::consensus_record(k, theta, objectives, chain));
    res.rounds = k;
    if (res.history.back().residual <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace fogml
