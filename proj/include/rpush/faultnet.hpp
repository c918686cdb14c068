#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "rpush/graph.hpp"
#include "rpush/rng.hpp"

namespace rpush {

using Slot = std::int64_t;

/// Harsh-network bounds: every node wakes at least once per `max_sleep`
/// slots, every link fails at most `max_consecutive_losses` sends in a row,
/// and a delivered message spends 1..`max_delay` slots in transit.
struct FaultBounds {
  int max_sleep = 1;               // L_u
  int max_consecutive_losses = 0;  // L_f
  int max_delay = 1;               // L_del
  double wake_probability = 1.0;   // P_w
  double loss_probability = 0.0;   // P_f

  /// Throws ConfigError on violated ranges.
  void validate() const;
};

struct DerivedBounds {
  int max_effective_delay;  // L_d = L_del + L_u - 1
  int max_delivery_gap;     // L_s = L_u (L_f + 1) + L_d
};

DerivedBounds derived_bounds(const FaultBounds& b);

/// Time-varying arc availability. Arc e is up at slot k when
/// k mod window == group(e), or when an independent counter-based draw keyed
/// on (e, k) falls below extra_probability. Every arc is therefore up at
/// least once in any `window` consecutive slots, so the union over each
/// window is the full (strongly connected) base graph.
class ArcMask {
 public:
  ArcMask(std::size_t arc_count, int window, double extra_probability, std::uint64_t key);

  bool active(ArcId e, Slot k) const noexcept;
  int window() const noexcept { return window_; }

  /// True when the union of active arcs over every window [k, k + B) with
  /// k + B <= horizon is strongly connected.
  bool windows_strongly_connected(const Topology& t, Slot horizon) const;

 private:
  std::vector<int> group_;
  int window_;
  double extra_probability_;
  std::uint64_t key_;
};

/// Arrival slot of a send at `send` with raw delay `delay`, raised to keep
/// per-arc arrivals strictly increasing.
constexpr Slot fifo_arrival(Slot send, Slot delay, Slot last_arrival) noexcept {
  return send + delay > last_arrival ? send + delay : last_arrival + 1;
}

/// One send attempt. `arrival` is meaningful only when !lost.
struct SendRecord {
  Slot slot;
  ArcId arc;
  bool lost;
  Slot arrival;
};

/// The realized randomness of one run: wake indicators and per-send link
/// outcomes. Wake flags may extend past the send horizon so that processing
/// slots of late messages are resolvable.
struct ScheduleRealization {
  std::size_t nodes = 0;
  Slot send_horizon = 0;  // sends recorded for slots [0, send_horizon)
  std::vector<std::uint8_t> wake;  // row-major [slot][node]
  std::vector<SendRecord> sends;   // ordered by (slot, arc)

  Slot wake_horizon() const noexcept {
    return nodes == 0 ? 0 : static_cast<Slot>(wake.size() / nodes);
  }
  bool woke(NodeId i, Slot k) const { return wake[static_cast<std::size_t>(k) * nodes + i] != 0; }

  /// CSV: slot,kind,node_or_arc,value with kind in {wake, send}; wake rows
  /// are emitted only for awake nodes (value 1); send value is "lost" or the
  /// arrival slot.
  void write_csv(std::ostream& os) const;
  static ScheduleRealization read_csv(std::istream& is, std::size_t nodes);
};

/// Samples wake-ups and link outcomes under FaultBounds. Draw order is part
/// of the reproducibility contract:
///   wake stream: per slot, nodes ascending; one uniform per node unless the
///     node is forced awake or wake_probability == 1.
///   link stream: per slot, awake sources ascending, their out-arcs
///     ascending; one uniform for loss unless forced or loss_probability == 0,
///     then one integer for the delay unless max_delay == 1. Masked arcs draw
///     nothing.
class ScheduleSampler {
 public:
  ScheduleSampler(const Topology& topology, const FaultBounds& bounds, std::uint64_t wake_key,
                   std::uint64_t link_key, const ArcMask* mask = nullptr);

  /// Must be called for every node at every slot, in slot order.
  bool sample_wake(NodeId i, Slot k);

  /// Outcome for a send by an awake source at slot k: arrival slot, or
  /// nullopt when lost. Applies the FIFO clamp.
  std::optional<Slot> sample_send(ArcId e, Slot k);

  bool arc_active(ArcId e, Slot k) const { return mask_ == nullptr || mask_->active(e, k); }

  int slots_asleep(NodeId i) const { return slots_asleep_[i]; }
  int consecutive_failures(ArcId e) const { return consecutive_failures_[e]; }

 private:
  const Topology* topology_;
  FaultBounds bounds_;
  CounterRng wake_rng_;
  CounterRng link_rng_;
  const ArcMask* mask_;
  std::vector<int> slots_asleep_;
  std::vector<int> consecutive_failures_;
  std::vector<Slot> last_arrival_;
};

/// Per-arc FIFO of in-flight broadcasts. Payloads are fixed-width records of
/// `payload_width` doubles plus a timestamp; storage is preallocated.
class InFlightStore {
 public:
  InFlightStore(std::size_t arc_count, std::size_t payload_width, std::size_t capacity_per_arc);

  void push(ArcId e, Slot send_slot, Slot arrival_slot, Slot timestamp, std::span<const double> payload);

  bool empty(ArcId e) const { return count_[e] == 0; }
  std::size_t pending(ArcId e) const { return count_[e]; }
  std::size_t total_pending() const;

  /// Pops every message on arc e with arrival <= k in FIFO order, calling
  /// fn(send_slot, arrival_slot, timestamp, payload).
  template <class Fn>
  void drain(ArcId e, Slot k, Fn&& fn) {
    while (count_[e] > 0) {
      const std::size_t idx = e * capacity_ + head_[e];
      if (arrival_[idx] > k) break;
      fn(send_[idx], arrival_[idx], stamp_[idx],
         std::span<const double>(payload_.data() + idx * width_, width_));
      head_[e] = (head_[e] + 1) % capacity_;
      --count_[e];
    }
  }

 private:
  std::size_t width_;
  std::size_t capacity_;
  std::vector<std::size_t> head_;
  std::vector<std::size_t> count_;
  std::vector<Slot> send_;
  std::vector<Slot> arrival_;
  std::vector<Slot> stamp_;
  std::vector<double> payload_;
};

struct InFlightMessage {
  Arc arc;
  ArcId arc_id;
  Slot send_slot;
  Slot arrival_slot;
  Slot timestamp;
  std::vector<double> payload;
};

/// Materialized view of InFlightStore::drain: for each node awake at k, the
/// messages on its in-arcs with arrival <= k. Messages at sleeping nodes stay
/// queued.
std::vector<std::vector<InFlightMessage>> deliver(InFlightStore& store, const Topology& t, Slot k,
                                                  std::span<const std::uint8_t> awake);

/// Generates a full realization for `horizon` send slots plus
/// `extra_wake_slots` further wake-only slots.
ScheduleRealization sample_schedule(const Topology& t, const FaultBounds& b, std::uint64_t wake_key,
                                    std::uint64_t link_key, Slot horizon, Slot extra_wake_slots,
                                    const ArcMask* mask = nullptr);

}  // namespace rpush
