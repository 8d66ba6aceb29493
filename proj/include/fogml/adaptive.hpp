#pragma once

// Adaptive FL controller. The server estimates gradient divergence, loss
// smoothness and Lipschitz constant from the gradients devices upload each
// round, then re-selects the communication interval tau under the joint
// computation/communication budget.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fogml/error.hpp"
#include "fogml/fedavg.hpp"
#include "fogml/linalg.hpp"
#include "fogml/netsim.hpp"

namespace fogml {

struct AdaptiveEstimates {
  double delta_hat = 0.0;  // gradient divergence
  double beta_hat = 0.0;   // smoothness
  double rho_hat = 0.0;    // Lipschitz constant of the loss
  double c_comp = 1.0;
  double c_comm = 10.0;
};

/// delta = sum_d w_d ||g_d - gbar||, gbar = sum_d w_d g_d, w_d = n_d / sum n.
inline double estimate_divergence(std::span<const Vec> grads,
                                  std::span<const double> weights) {
  require(grads.size() >= 2, ErrorKind::kInvalidArgument,
          "estimate_divergence: need at least 2 devices");
  require_dims(grads.size(), weights.size(), "estimate_divergence weights");
  double total = 0.0;
  for (double w : weights) total += w;
  require(total > 0.0, ErrorKind::kInvalidArgument,
          "estimate_divergence: weights must sum to a positive value");
  Vec mean(grads.front().size(), 0.0);
  for (std::size_t d = 0; d < grads.size(); ++d) {
    axpy(weights[d] / total, grads[d], mean);
  }
  double delta = 0.0;
  for (std::size_t d = 0; d < grads.size(); ++d) {
    if (weights[d] == 0.0) continue;
    delta += weights[d] / total * std::sqrt(distance2(grads[d], mean));
  }
  return delta;
}

/// ||g_cur - g_prev|| / ||w_cur - w_prev||; nullopt on zero displacement.
inline std::optional<double> secant_smoothness(std::span<const double> w_prev,
                                               std::span<const double> w_cur,
                                               std::span<const double> g_prev,
                                               std::span<const double> g_cur) {
  const double dw = std::sqrt(distance2(w_cur, w_prev));
  if (dw == 0.0) return std::nullopt;
  return std::sqrt(distance2(g_cur, g_prev)) / dw;
}

/// |F_cur - F_prev| / ||w_cur - w_prev||; nullopt on zero displacement.
inline std::optional<double> secant_lipschitz(std::span<const double> w_prev,
                                              std::span<const double> w_cur,
                                              double f_prev, double f_cur) {
  const double dw = std::sqrt(distance2(w_cur, w_prev));
  if (dw == 0.0) return std::nullopt;
  return std::abs(f_cur - f_prev) / dw;
}

/// Exponentially smoothed estimate; a missing observation keeps the value.
class SmoothedEstimate {
 public:
  explicit SmoothedEstimate(double factor = 0.5) : factor_(factor) {}

  double update(std::optional<double> obs) {
    if (!obs) return value_;
    value_ = seen_ ? factor_ * value_ + (1.0 - factor_) * *obs : *obs;
    seen_ = true;
    return value_;
  }
  double value() const noexcept { return value_; }
  bool seen() const noexcept { return seen_; }

 private:
  double factor_;
  double value_ = 0.0;
  bool seen_ = false;
};

/// h(tau) = (delta/beta)((eta*beta + 1)^tau - 1) - eta*delta*tau; zero for
/// beta < 1e-8 and for tau <= 1.
inline double divergence_gap(double delta, double beta, double eta,
                             std::size_t tau) {
  if (beta < 1e-8 || tau <= 1) return 0.0;
  const auto t = static_cast<double>(tau);
  return (delta / beta) * (std::pow(eta * beta + 1.0, t) - 1.0) - eta * delta * t;
}

struct IntervalDecision {
  std::size_t tau_star = 0;           // 0 when exhausted
  std::vector<double> scores;         // scores[tau - 1]
  bool exhausted = false;
};

/// Scores every tau in 1..tau_max and keeps the smallest minimizer.
///   T(tau)     = remaining / (tau * N * c_comp + c_comm)
///   score(tau) = 1 / (T * tau) + rho * h(tau) / tau,  +inf when T < 1
inline IntervalDecision choose_interval(const AdaptiveEstimates& est,
                                        double remaining_budget,
                                        std::size_t num_devices, double lr,
                                        std::size_t tau_max) {
  require(tau_max >= 1, ErrorKind::kInvalidArgument, "tau_max must be >= 1");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  IntervalDecision dec;
  dec.scores.assign(tau_max, kInf);
  double best = kInf;
  for (std::size_t tau = 1; tau <= tau_max; ++tau) {
    const double per_round = static_cast<double>(tau) *
                                 static_cast<double>(num_devices) * est.c_comp +
                             est.c_comm;
    const double rounds = remaining_budget / per_round;
    if (!(rounds >= 1.0)) continue;
    const double t = static_cast<double>(tau);
    const double gap = divergence_gap(est.delta_hat, est.beta_hat, lr, tau);
    double score = 1.0 / (rounds * t) + est.rho_hat * gap / t;
    if (std::isnan(score)) score = kInf;
    dec.scores[tau - 1] = score;
    if (score < best) {
      best = score;
      dec.tau_star = tau;
    }
  }
  dec.exhausted = dec.tau_star == 0;
  return dec;
}

struct AdaptiveConfig {
  FlConfig fl;                 // tau and rounds are ignored
  CostBudget budget{1.0, 10.0, 1153.0};
  std::size_t tau_max = 100;
  std::size_t initial_tau = 1;  // used until the smoothness secant exists
  std::size_t max_rounds = 100000;
  std::size_t estimate_batch = 64;
  double smoothing = 0.5;
};

struct AdaptiveResult {
  RunContext context;
  ParamVector global;
  std::vector<std::size_t> taus;
  std::vector<AdaptiveEstimates> estimates;  // state used for each decision
};

inline AdaptiveResult run_adaptive(const Federation& fed, const AdaptiveConfig& cfg) {
  FlConfig fl = cfg.fl;
  fl.tau = 1;
  FedAvgEngine eng(fed, fl, cfg.budget, cfg.estimate_batch);
  const std::size_t N = fed.num_devices();

  std::vector<double> weights;
  for (const auto& d : fed.devices) {
    weights.push_back(cfg.fl.uniform_weights ? 1.0 : static_cast<double>(d.size()));
  }

  AdaptiveEstimates est{0.0, 0.0, 0.0, cfg.budget.c_comp, cfg.budget.c_comm};
  SmoothedEstimate beta(cfg.smoothing), rho(cfg.smoothing);
  std::optional<Vec> prev_w, prev_g;
  double prev_f = 0.0;
  AdaptiveResult res{RunContext{}, {}, {}, {}};

  for (std::size_t r = 0; r < cfg.max_rounds; ++r) {
    std::size_t tau = cfg.initial_tau;
    if (beta.seen()) {
      const auto dec = choose_interval(est, eng.context().budget.remaining(), N,
                                       cfg.fl.lr, cfg.tau_max);
      if (dec.exhausted) break;
      tau = dec.tau_star;
    }
    tau = eng.clamp_to_budget(tau);
    if (tau == 0) {
      if (r == 0) {
        throw Error(ErrorKind::kBudgetExhausted,
                    "budget exhausted before the first round");
      }
      break;
    }
    res.taus.push_back(tau);
    res.estimates.push_back(est);
    const auto rep = eng.step(tau, /*with_estimates=*/true);

    // server-side estimation from this round's uploads
    Vec gbar(rep.start_global.size(), 0.0);
    double fbar = 0.0, wsum = 0.0;
    for (double w : weights) wsum += w;
    for (std::size_t d = 0; d < N; ++d) {
      axpy(weights[d] / wsum, rep.est_grads[d], gbar);
      fbar += weights[d] / wsum * rep.est_losses[d];
    }
    if (N >= 2) est.delta_hat = estimate_divergence(rep.est_grads, weights);
    if (prev_w) {
      est.beta_hat = beta.update(
          secant_smoothness(*prev_w, rep.start_global.values, *prev_g, gbar));
      est.rho_hat = rho.update(
          secant_lipschitz(*prev_w, rep.start_global.values, prev_f, fbar));
    }
    prev_w = rep.start_global.values;
    prev_g = gbar;
    prev_f = fbar;
    if (eng.context().budget.status().exhausted) break;
  }
  res.context = std::move(eng.context());
  res.global = eng.global();
  return res;
}

}  // namespace fogml
