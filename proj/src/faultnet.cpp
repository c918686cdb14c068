#include "rpush/faultnet.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "rpush/errors.hpp"

namespace rpush {

void FaultBounds::validate() const {
  if (max_sleep < 1) throw ConfigError("max_sleep (L_u) must be >= 1");
  if (max_consecutive_losses < 0) throw ConfigError("max_consecutive_losses (L_f) must be >= 0");
  if (max_delay < 1) throw ConfigError("max_delay (L_del) must be >= 1");
  if (!(wake_probability > 0.0 && wake_probability <= 1.0)) throw ConfigError("wake_probability must lie in (0, 1]");
  if (!(loss_probability >= 0.0 && loss_probability < 1.0)) throw ConfigError("loss_probability must lie in [0, 1)");
}

DerivedBounds derived_bounds(const FaultBounds& b) {
  const int ld = b.max_delay + b.max_sleep - 1;
  return {ld, b.max_sleep * (b.max_consecutive_losses + 1) + ld};
}

ArcMask::ArcMask(std::size_t arc_count, int window, double extra_probability, std::uint64_t key)
    : group_(arc_count), window_(window), extra_probability_(extra_probability), key_(key) {
  if (window < 1) throw ConfigError("arc mask window must be >= 1");
  if (!(extra_probability >= 0.0 && extra_probability <= 1.0)) throw ConfigError("arc mask extra probability must lie in [0, 1]");
  CounterRng rng(mix64(key ^ 0xA5A5A5A5A5A5A5A5ULL));
  for (auto& g : group_) g = static_cast<int>(rng.uniform_int(0, window - 1));
}

bool ArcMask::active(ArcId e, Slot k) const noexcept {
  if (k % window_ == group_[e]) return true;
  if (extra_probability_ <= 0.0) return false;
  const std::uint64_t counter = static_cast<std::uint64_t>(k) * group_.size() + e + 1;
  const double u = static_cast<double>(mix64(key_ + counter * kGamma) >> 11) * 0x1.0p-53;
  return u < extra_probability_;
}

bool ArcMask::windows_strongly_connected(const Topology& t, Slot horizon) const {
  std::vector<Arc> window_arcs;
  for (Slot k = 0; k + window_ <= horizon; ++k) {
    window_arcs.clear();
    for (ArcId e = 0; e < t.arc_count(); ++e) {
      for (Slot s = k; s < k + window_; ++s) {
        if (active(e, s)) {
          window_arcs.push_back(t.arc(e));
          break;
        }
      }
    }
    if (!is_strongly_connected(t.size(), window_arcs)) return false;
  }
  return true;
}

ScheduleSampler::ScheduleSampler(const Topology& topology, const FaultBounds& bounds, std::uint64_t wake_key,
                                 std::uint64_t link_key, const ArcMask* mask)
    : topology_(&topology),
      bounds_(bounds),
      wake_rng_(wake_key),
      link_rng_(link_key),
      mask_(mask),
      slots_asleep_(topology.size(), 0),
      consecutive_failures_(topology.arc_count(), 0),
      last_arrival_(topology.arc_count(), -1) {
  bounds_.validate();
  if (mask_ != nullptr && (bounds_.loss_probability != 0.0 || bounds_.max_consecutive_losses != 0)) {
    throw ConfigError("time-varying arc masks require loss_probability = 0 and max_consecutive_losses = 0");
  }
}

bool ScheduleSampler::sample_wake(NodeId i, Slot /*k*/) {
  bool awake;
  if (slots_asleep_[i] >= bounds_.max_sleep - 1 || bounds_.wake_probability >= 1.0) {
    awake = true;
  } else {
    awake = wake_rng_.uniform() < bounds_.wake_probability;
  }
  slots_asleep_[i] = awake ? 0 : slots_asleep_[i] + 1;
  return awake;
}

std::optional<Slot> ScheduleSampler::sample_send(ArcId e, Slot k) {
  bool lost = false;
  if (consecutive_failures_[e] < bounds_.max_consecutive_losses && bounds_.loss_probability > 0.0) {
    lost = link_rng_.uniform() < bounds_.loss_probability;
  }
  if (lost) {
    ++consecutive_failures_[e];
    return std::nullopt;
  }
  consecutive_failures_[e] = 0;
  const Slot delay = bounds_.max_delay == 1 ? 1 : link_rng_.uniform_int(1, bounds_.max_delay);
  const Slot arrival = fifo_arrival(k, delay, last_arrival_[e]);
  last_arrival_[e] = arrival;
  return arrival;
}

InFlightStore::InFlightStore(std::size_t arc_count, std::size_t payload_width, std::size_t capacity_per_arc)
    : width_(payload_width),
      capacity_(capacity_per_arc),
      head_(arc_count, 0),
      count_(arc_count, 0),
      send_(arc_count * capacity_per_arc),
      arrival_(arc_count * capacity_per_arc),
      stamp_(arc_count * capacity_per_arc),
      payload_(arc_count * capacity_per_arc * payload_width) {}

void InFlightStore::push(ArcId e, Slot send_slot, Slot arrival_slot, Slot timestamp,
                         std::span<const double> payload) {
  if (count_[e] == capacity_) throw std::logic_error("in-flight store overflow on arc " + std::to_string(e));
  const std::size_t idx = e * capacity_ + (head_[e] + count_[e]) % capacity_;
  send_[idx] = send_slot;
  arrival_[idx] = arrival_slot;
  stamp_[idx] = timestamp;
  std::copy(payload.begin(), payload.end(), payload_.begin() + static_cast<std::ptrdiff_t>(idx * width_));
  ++count_[e];
}

std::size_t InFlightStore::total_pending() const {
  std::size_t total = 0;
  for (auto c : count_) total += c;
  return total;
}

std::vector<std::vector<InFlightMessage>> deliver(InFlightStore& store, const Topology& t, Slot k,
                                                  std::span<const std::uint8_t> awake) {
  std::vector<std::vector<InFlightMessage>> inbox(t.size());
  for (NodeId j = 0; j < t.size(); ++j) {
    if (!awake[j]) continue;
    for (ArcId e : t.in_arcs(j)) {
      store.drain(e, k, [&](Slot send, Slot arrival, Slot stamp, std::span<const double> payload) {
        inbox[j].push_back({t.arc(e), e, send, arrival, stamp, {payload.begin(), payload.end()}});
      });
    }
  }
  return inbox;
}

ScheduleRealization sample_schedule(const Topology& t, const FaultBounds& b, std::uint64_t wake_key,
                                    std::uint64_t link_key, Slot horizon, Slot extra_wake_slots,
                                    const ArcMask* mask) {
  ScheduleSampler sampler(t, b, wake_key, link_key, mask);
  ScheduleRealization r;
  r.nodes = t.size();
  r.send_horizon = horizon;
  r.wake.reserve(static_cast<std::size_t>(horizon + extra_wake_slots) * t.size());
  for (Slot k = 0; k < horizon + extra_wake_slots; ++k) {
    const std::size_t row = r.wake.size();
    for (NodeId i = 0; i < t.size(); ++i) r.wake.push_back(sampler.sample_wake(i, k) ? 1 : 0);
    if (k >= horizon) continue;
    for (NodeId i = 0; i < t.size(); ++i) {
      if (!r.wake[row + i]) continue;
      for (ArcId e : t.out_arcs(i)) {
        if (!sampler.arc_active(e, k)) continue;
        const auto arrival = sampler.sample_send(e, k);
        r.sends.push_back({k, e, !arrival.has_value(), arrival.value_or(-1)});
      }
    }
  }
  return r;
}

void ScheduleRealization::write_csv(std::ostream& os) const {
  os << "slot,kind,node_or_arc,value\n";
  std::size_t s = 0;
  for (Slot k = 0; k < wake_horizon(); ++k) {
    for (NodeId i = 0; i < nodes; ++i) {
      if (woke(i, k)) os << k << ",wake," << i << ",1\n";
    }
    for (; s < sends.size() && sends[s].slot == k; ++s) {
      os << k << ",send," << sends[s].arc << ',';
      if (sends[s].lost) {
        os << "lost\n";
      } else {
        os << sends[s].arrival << '\n';
      }
    }
  }
}

ScheduleRealization ScheduleRealization::read_csv(std::istream& is, std::size_t nodes) {
  ScheduleRealization r;
  r.nodes = nodes;
  std::string line;
  if (!std::getline(is, line) || line != "slot,kind,node_or_arc,value") {
    throw ConfigError("schedule csv: bad header");
  }
  Slot max_slot = -1;
  std::vector<std::pair<Slot, NodeId>> wakes;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string slot, kind, id, value;
    std::getline(ls, slot, ',');
    std::getline(ls, kind, ',');
    std::getline(ls, id, ',');
    std::getline(ls, value);
    const Slot k = std::stoll(slot);
    max_slot = std::max(max_slot, k);
    if (kind == "wake") {
      wakes.emplace_back(k, static_cast<NodeId>(std::stoull(id)));
    } else if (kind == "send") {
      const bool lost = value == "lost";
      r.sends.push_back({k, static_cast<ArcId>(std::stoull(id)), lost, lost ? Slot{-1} : std::stoll(value)});
      r.send_horizon = std::max(r.send_horizon, k + 1);
    } else {
      throw ConfigError("schedule csv: unknown kind '" + kind + "'");
    }
  }
  r.wake.assign(static_cast<std::size_t>(max_slot + 1) * nodes, 0);
  for (auto [k, i] : wakes) {
    if (i >= nodes) throw ConfigError("schedule csv: node id out of range");
    r.wake[static_cast<std::size_t>(k) * nodes + i] = 1;
  }
  return r;
}

}  // namespace rpush
