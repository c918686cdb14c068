#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rpush/faultnet.hpp"
#include "rpush/graph.hpp"
#include "rpush/objectives.hpp"
#include "rpush/raps.hpp"

namespace rpush {

/// alpha(0) = 0, alpha(k) = n / (mu (k + k0)); beta sums alpha over a sleep window.
struct StepSizeLedger {
  double mu = 1.0;
  std::size_t n = 1;
  Slot k0 = 0;

  double alpha(Slot k) const {
    return k <= 0 ? 0.0 : static_cast<double>(n) / (mu * static_cast<double>(k + k0));
  }
  /// sum_{t = kappa + 1}^{k} alpha(t).
  double beta(Slot kappa, Slot k) const {
    double s = 0.0;
    for (Slot t = kappa + 1; t <= k; ++t) s += alpha(t);
    return s;
  }
};

/// Instrumentation of one optimizer run.
struct WakeStats {
  Slot max_sleep_window = 0;       // max over wakes of k - kappa_i
  double max_scaled_beta = 0.0;    // max over wakes k >= 1 of k beta_i(k)
};

struct RasgpOptions {
  Slot horizon = 0;
  Slot k0 = 0;
  double noise_width = 0.0;
  /// Initial iterate of every node; empty means all ones.
  std::vector<double> initial;
  bool record_trace = false;
  bool record_schedule = false;
  bool keep_node_iterates = false;
  /// Zero every step size (the run then reduces to plain push-sum).
  bool zero_steps = false;
  const ArcMask* mask = nullptr;
  /// Called with (k, nodes) for the state at the beginning of every slot.
  std::function<void(Slot, std::span<const PushSumNodeState>)> observe;
};

struct RasgpResult {
  std::size_t n = 0, dim = 0;
  Slot horizon = 0;
  std::vector<double> zhat;  // (horizon + 1) x dim, node average of z_i(k)
  std::vector<double> z;     // (horizon + 1) x n x dim when keep_node_iterates
  WakeStats stats;
  std::optional<StateTrace> trace;
  std::optional<ScheduleRealization> schedule;

  std::span<const double> zhat_at(Slot k) const { return {zhat.data() + k * dim, dim}; }
  double z_at(Slot k, NodeId i, std::size_t c) const { return z[(k * n + i) * dim + c]; }
};

/// Robust asynchronous stochastic gradient-push. At each wake node i moves
/// x_i by -beta_i(k) (grad f_i(z_i) + eps_i) and then pushes as in plain
/// push-sum. Noise for node i comes from stream (kNoise, i).
RasgpResult run_rasgp(const Topology& t, const FaultBounds& b, const Objective& f, const RunSeed& seed,
                      const RasgpOptions& options);

}  // namespace rpush
