#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "rpush/faultnet.hpp"
#include "rpush/graph.hpp"

namespace rpush {

/// Master seed plus run index; every stream of a run is derived from these.
struct RunSeed {
  std::uint64_t master = 0;
  std::uint64_t run = 0;

  std::uint64_t key(StreamRole role, std::uint64_t node = 0) const {
    return derive_stream_key(master, run, role, node);
  }
};

/// One agent of robust asynchronous push-sum. Per in-neighbor arrays are
/// indexed like Topology::in_arcs(i).
struct PushSumNodeState {
  std::size_t dim = 0;
  std::vector<double> x;      // mass
  double y = 1.0;             // weight
  std::vector<double> z;      // estimate x / y
  std::vector<double> phi_x;  // cumulative x-mass pushed to each out-neighbor
  double phi_y = 0.0;
  Slot kappa = 0;             // timestamp of own last wake
  std::vector<double> rho_x;  // in_degree x dim, cumulative x-mass received per in-neighbor
  std::vector<double> rho_y;
  std::vector<Slot> kappa_in;  // latest accepted timestamp per in-neighbor

  PushSumNodeState() = default;
  PushSumNodeState(std::span<const double> x0, std::size_t in_degree, Slot initial_timestamp);

  std::size_t in_degree() const noexcept { return rho_y.size(); }
  std::span<const double> rho_x_of(std::size_t j) const { return {rho_x.data() + j * dim, dim}; }
};

/// What a waking node hands to every out-neighbor.
struct Broadcast {
  std::span<const double> phi_x;
  double phi_y;
  Slot timestamp;
};

/// Timestamp, split into out_degree + 1 shares, add one share to the running
/// sums. The returned spans alias `s`.
Broadcast wake_and_push(PushSumNodeState& s, std::size_t out_degree, Slot k);

struct InboxMessage {
  std::size_t in_index;  // position of the sender in the receiver's in-arcs
  std::span<const double> phi_x;
  double phi_y;
  Slot timestamp;
};

/// Keep the freshest message per in-neighbor, absorb the running-sum
/// increments, refresh z. `skip_rho_update` leaves one in-neighbor's rho
/// untouched after its mass was absorbed (mutation testing only). Throws
/// ProtocolViolation if y drops to a non-positive or non-finite value.
void process_inbox(PushSumNodeState& s, std::span<const InboxMessage> inbox,
                   std::optional<std::size_t> skip_rho_update = std::nullopt);

/// Deliberate protocol corruption used to show the oracle catches it.
struct RhoSkipMutation {
  Slot slot;
  NodeId node;
  std::size_t in_index;
};

/// Per-slot snapshots of every quantity the oracle compares against. Index
/// s in [0, slots) is the state at the beginning of slot s; delta row s is
/// the perturbation applied during slot s.
struct StateTrace {
  std::size_t n = 0, m = 0, dim = 0;
  Slot slots = 0;
  std::vector<double> x, y, z, phi_x, phi_y;
  std::vector<Slot> kappa;
  std::vector<double> rho_x, rho_y;  // per arc (i, j): receiver j's copy for sender i
  std::vector<double> delta;         // (slots - 1) x n x dim

  double x_at(Slot k, NodeId i, std::size_t c) const { return x[(k * n + i) * dim + c]; }
  double y_at(Slot k, NodeId i) const { return y[k * n + i]; }
  double z_at(Slot k, NodeId i, std::size_t c) const { return z[(k * n + i) * dim + c]; }
  double phi_x_at(Slot k, NodeId i, std::size_t c) const { return phi_x[(k * n + i) * dim + c]; }
  double phi_y_at(Slot k, NodeId i) const { return phi_y[k * n + i]; }
  Slot kappa_at(Slot k, NodeId i) const { return kappa[k * n + i]; }
  double rho_x_at(Slot k, ArcId e, std::size_t c) const { return rho_x[(k * m + e) * dim + c]; }
  double rho_y_at(Slot k, ArcId e) const { return rho_y[k * m + e]; }
  double delta_at(Slot k, NodeId i, std::size_t c) const { return delta[(k * n + i) * dim + c]; }

  /// CSV: slot,kind,id,coord,value_x,value_y,phi_x,phi_y with kind node or
  /// arc (arc rows carry rho_x, rho_y and leave phi empty); 17 significant
  /// digits.
  void write_csv(std::ostream& os) const;
};

struct NetworkOptions {
  Slot initial_timestamp = 0;
  bool record_trace = false;
  bool record_schedule = false;
  const ArcMask* mask = nullptr;
  std::optional<RhoSkipMutation> mutation;
};

/// Slot-driven simulator of robust asynchronous push-sum over a faulty
/// network. Within a slot: wake draws for all nodes; every awake node in
/// ascending order applies its perturbation, pushes and broadcasts; then
/// every awake node processes its inbox.
class PushSumNetwork {
 public:
  PushSumNetwork(const Topology& topology, const FaultBounds& bounds, std::span<const double> x0, std::size_t dim,
                 const RunSeed& seed, NetworkOptions options = {});

  /// Executes the current slot. `perturb(i, k, state, delta)` runs for each
  /// awake node before its push; it fills delta and returns true, or returns
  /// false for no perturbation.
  template <class Perturb>
  void step(Perturb&& perturb);
  void step() {
    step([](NodeId, Slot, const PushSumNodeState&, std::span<double>) { return false; });
  }

  Slot slot() const noexcept { return slot_; }
  const Topology& topology() const noexcept { return *topology_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const PushSumNodeState> nodes() const noexcept { return nodes_; }
  std::span<const std::uint8_t> awake() const noexcept { return awake_; }

  /// Sum of all x-mass ever injected (initial plus perturbations), per coordinate.
  std::span<const double> injected_mass() const noexcept { return injected_; }

  const StateTrace& trace() const { return trace_; }
  StateTrace take_trace() { return std::move(trace_); }

  /// Recorded schedule with wake flags extended by L_d slots past the current
  /// slot so every in-flight message has a resolvable processing slot.
  ScheduleRealization finish_schedule();

 private:
  void snapshot();

  const Topology* topology_;
  FaultBounds bounds_;
  std::size_t dim_;
  NetworkOptions options_;
  ScheduleSampler sampler_;
  InFlightStore store_;
  std::vector<PushSumNodeState> nodes_;
  std::vector<std::uint8_t> awake_;
  std::vector<double> injected_;
  std::vector<std::size_t> arc_in_index_;  // arc -> position in receiver's in-arcs
  Slot slot_ = 0;

  std::vector<double> delta_buf_;
  std::vector<double> payload_buf_;
  std::vector<double> inbox_payload_;
  std::vector<InboxMessage> inbox_;
  std::vector<std::pair<std::size_t, Slot>> inbox_meta_;

  StateTrace trace_;
  ScheduleRealization schedule_;
};

struct RapsOptions {
  Slot initial_timestamp = 0;
  bool record_trace = false;
  bool record_schedule = false;
  const ArcMask* mask = nullptr;
  std::optional<RhoSkipMutation> mutation;
};

struct RapsResult {
  std::size_t n = 0, dim = 0;
  Slot horizon = 0;
  std::vector<double> z;               // (horizon + 1) x n x dim
  std::vector<double> augmented_mean;  // (horizon + 1) x dim, 1^T chi(k) / n
  std::optional<StateTrace> trace;
  std::optional<ScheduleRealization> schedule;

  double z_at(Slot k, NodeId i, std::size_t c = 0) const { return z[(k * n + i) * dim + c]; }
  double mean_at(Slot k, std::size_t c = 0) const { return augmented_mean[k * dim + c]; }
  /// max_i |z_i(k) - target| over coordinates.
  double max_deviation(Slot k, std::span<const double> target) const;
};

/// Push-sum averaging of x0 (n x dim, row-major) for `horizon` slots.
RapsResult run_raps(const Topology& t, const FaultBounds& b, std::span<const double> x0, std::size_t dim,
                    Slot horizon, const RunSeed& seed, const RapsOptions& options = {});

/// perturbation(i, k) is added to x_i at every slot k where i wakes.
using PerturbationFn = std::function<std::vector<double>(NodeId, Slot)>;

RapsResult run_perturbed(const Topology& t, const FaultBounds& b, std::span<const double> x0, std::size_t dim,
                         Slot horizon, const RunSeed& seed, const PerturbationFn& perturbation,
                         const RapsOptions& options = {});

// ---------------------------------------------------------------------------

template <class Perturb>
void PushSumNetwork::step(Perturb&& perturb) {
  const Topology& t = *topology_;
  const std::size_t n = t.size();
  const Slot k = slot_;
  for (NodeId i = 0; i < n; ++i) awake_[i] = sampler_.sample_wake(i, k) ? 1 : 0;
  if (options_.record_schedule) schedule_.wake.insert(schedule_.wake.end(), awake_.begin(), awake_.end());
  if (options_.record_trace) trace_.delta.resize(trace_.delta.size() + n * dim_, 0.0);

  for (NodeId i = 0; i < n; ++i) {
    if (!awake_[i]) continue;
    PushSumNodeState& s = nodes_[i];
    std::fill(delta_buf_.begin(), delta_buf_.end(), 0.0);
    if (perturb(i, k, static_cast<const PushSumNodeState&>(s), std::span<double>(delta_buf_))) {
      for (std::size_t c = 0; c < dim_; ++c) {
        s.x[c] += delta_buf_[c];
        injected_[c] += delta_buf_[c];
      }
      if (options_.record_trace) {
        std::copy(delta_buf_.begin(), delta_buf_.end(),
                  trace_.delta.end() - static_cast<std::ptrdiff_t>((n - i) * dim_));
      }
    }
    const Broadcast b = wake_and_push(s, t.out_degree(i), k);
    std::copy(b.phi_x.begin(), b.phi_x.end(), payload_buf_.begin());
    payload_buf_[dim_] = b.phi_y;
    for (ArcId e : t.out_arcs(i)) {
      if (!sampler_.arc_active(e, k)) continue;
      const auto arrival = sampler_.sample_send(e, k);
      if (options_.record_schedule) schedule_.sends.push_back({k, e, !arrival.has_value(), arrival.value_or(-1)});
      if (arrival) store_.push(e, k, *arrival, b.timestamp, payload_buf_);
    }
  }

  for (NodeId j = 0; j < n; ++j) {
    if (!awake_[j]) continue;
    inbox_payload_.clear();
    inbox_meta_.clear();
    const auto in = t.in_arcs(j);
    for (std::size_t q = 0; q < in.size(); ++q) {
      store_.drain(in[q], k, [&](Slot, Slot, Slot stamp, std::span<const double> payload) {
        inbox_meta_.emplace_back(q, stamp);
        inbox_payload_.insert(inbox_payload_.end(), payload.begin(), payload.end());
      });
    }
    inbox_.clear();
    for (std::size_t r = 0; r < inbox_meta_.size(); ++r) {
      const double* p = inbox_payload_.data() + r * (dim_ + 1);
      inbox_.push_back({inbox_meta_[r].first, {p, dim_}, p[dim_], inbox_meta_[r].second});
    }
    std::optional<std::size_t> skip;
    if (options_.mutation && options_.mutation->slot == k && options_.mutation->node == j) {
      skip = options_.mutation->in_index;
    }
    process_inbox(nodes_[j], inbox_, skip);
  }
  ++slot_;
  if (options_.record_schedule) schedule_.send_horizon = slot_;
  if (options_.record_trace) snapshot();
}

}  // namespace rpush
