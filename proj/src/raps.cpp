#include "rpush/raps.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "rpush/errors.hpp"

namespace rpush {

PushSumNodeState::PushSumNodeState(std::span<const double> x0, std::size_t in_degree, Slot initial_timestamp)
    : dim(x0.size()),
      x(x0.begin(), x0.end()),
      z(x0.begin(), x0.end()),
      phi_x(x0.size(), 0.0),
      kappa(initial_timestamp),
      rho_x(in_degree * x0.size(), 0.0),
      rho_y(in_degree, 0.0),
      kappa_in(in_degree, initial_timestamp) {}

Broadcast wake_and_push(PushSumNodeState& s, std::size_t out_degree, Slot k) {
  s.kappa = k;
  const double share = 1.0 / static_cast<double>(out_degree + 1);
  for (std::size_t c = 0; c < s.dim; ++c) {
    const double part = s.x[c] * share;
    s.phi_x[c] += part;
    s.x[c] = part;
  }
  const double part_y = s.y * share;
  s.phi_y += part_y;
  s.y = part_y;
  return {s.phi_x, s.phi_y, s.kappa};
}

void process_inbox(PushSumNodeState& s, std::span<const InboxMessage> inbox,
                   std::optional<std::size_t> skip_rho_update) {
  // Freshest accepted message per in-neighbor; index into inbox or npos.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  thread_local std::vector<std::size_t> accepted;
  accepted.assign(s.in_degree(), npos);
  for (std::size_t r = 0; r < inbox.size(); ++r) {
    const InboxMessage& msg = inbox[r];
    if (msg.timestamp > s.kappa_in[msg.in_index]) {
      accepted[msg.in_index] = r;
      s.kappa_in[msg.in_index] = msg.timestamp;
    }
  }
  for (std::size_t j = 0; j < s.in_degree(); ++j) {
    if (accepted[j] == npos) continue;
    const InboxMessage& msg = inbox[accepted[j]];
    double* rho = s.rho_x.data() + j * s.dim;
    for (std::size_t c = 0; c < s.dim; ++c) s.x[c] += msg.phi_x[c] - rho[c];
    s.y += msg.phi_y - s.rho_y[j];
    if (skip_rho_update && *skip_rho_update == j) continue;
    for (std::size_t c = 0; c < s.dim; ++c) rho[c] = msg.phi_x[c];
    s.rho_y[j] = msg.phi_y;
  }
  if (!(s.y > 0.0) || !std::isfinite(s.y)) {
    std::ostringstream os;
    os << "push-sum weight became non-positive (y = " << s.y << ")";
    throw ProtocolViolation(os.str());
  }
  for (std::size_t c = 0; c < s.dim; ++c) s.z[c] = s.x[c] / s.y;
}

PushSumNetwork::PushSumNetwork(const Topology& topology, const FaultBounds& bounds, std::span<const double> x0,
                               std::size_t dim, const RunSeed& seed, NetworkOptions options)
    : topology_(&topology),
      bounds_(bounds),
      dim_(dim),
      options_(options),
      sampler_(topology, bounds, seed.key(StreamRole::kWake), seed.key(StreamRole::kLink), options.mask),
      store_(topology.arc_count(), dim + 1, static_cast<std::size_t>(derived_bounds(bounds).max_effective_delay) + 2),
      awake_(topology.size(), 0),
      injected_(dim, 0.0),
      arc_in_index_(topology.arc_count(), 0),
      delta_buf_(dim, 0.0),
      payload_buf_(dim + 1, 0.0) {
  const std::size_t n = topology.size();
  if (dim == 0) throw ConfigError("dimension must be >= 1");
  if (x0.size() != n * dim) throw ConfigError("initial values must have n * dim entries");
  nodes_.reserve(n);
  for (NodeId i = 0; i < n; ++i) {
    nodes_.emplace_back(x0.subspan(i * dim, dim), topology.in_degree(i), options.initial_timestamp);
    for (std::size_t c = 0; c < dim; ++c) {
      if (!std::isfinite(x0[i * dim + c])) throw ConfigError("initial values must be finite");
      injected_[c] += x0[i * dim + c];
    }
    const auto in = topology.in_arcs(i);
    for (std::size_t q = 0; q < in.size(); ++q) arc_in_index_[in[q]] = q;
  }
  if (options_.record_schedule) schedule_.nodes = n;
  if (options_.record_trace) {
    trace_.n = n;
    trace_.m = topology.arc_count();
    trace_.dim = dim;
    snapshot();
  }
}

void PushSumNetwork::snapshot() {
  const Topology& t = *topology_;
  for (const PushSumNodeState& s : nodes_) {
    trace_.x.insert(trace_.x.end(), s.x.begin(), s.x.end());
    trace_.z.insert(trace_.z.end(), s.z.begin(), s.z.end());
    trace_.phi_x.insert(trace_.phi_x.end(), s.phi_x.begin(), s.phi_x.end());
    trace_.y.push_back(s.y);
    trace_.phi_y.push_back(s.phi_y);
    trace_.kappa.push_back(s.kappa);
  }
  for (ArcId e = 0; e < t.arc_count(); ++e) {
    const PushSumNodeState& r = nodes_[t.arc(e).to];
    const std::size_t q = arc_in_index_[e];
    const auto rho = r.rho_x_of(q);
    trace_.rho_x.insert(trace_.rho_x.end(), rho.begin(), rho.end());
    trace_.rho_y.push_back(r.rho_y[q]);
  }
  ++trace_.slots;
}

ScheduleRealization PushSumNetwork::finish_schedule() {
  if (!options_.record_schedule) throw std::logic_error("schedule recording was not enabled");
  ScheduleRealization out = schedule_;
  // Continue the wake stream on a copy of the sampler; link draws are untouched.
  ScheduleSampler ahead = sampler_;
  const Slot extra = derived_bounds(bounds_).max_effective_delay;
  for (Slot k = slot_; k < slot_ + extra; ++k) {
    for (NodeId i = 0; i < topology_->size(); ++i) out.wake.push_back(ahead.sample_wake(i, k) ? 1 : 0);
  }
  return out;
}

void StateTrace::write_csv(std::ostream& os) const {
  os << "slot,kind,id,coord,value_x,value_y,phi_x,phi_y\n";
  os << std::setprecision(17);
  for (Slot k = 0; k < slots; ++k) {
    for (NodeId i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < dim; ++c) {
        os << k << ",node," << i << ',' << c << ',' << x_at(k, i, c) << ',' << y_at(k, i) << ','
           << phi_x_at(k, i, c) << ',' << phi_y_at(k, i) << '\n';
      }
    }
    for (ArcId e = 0; e < m; ++e) {
      for (std::size_t c = 0; c < dim; ++c) {
        os << k << ",arc," << e << ',' << c << ',' << rho_x_at(k, e, c) << ',' << rho_y_at(k, e) << ",,\n";
      }
    }
  }
}

double RapsResult::max_deviation(Slot k, std::span<const double> target) const {
  double worst = 0.0;
  for (NodeId i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dim; ++c) worst = std::max(worst, std::abs(z_at(k, i, c) - target[c]));
  }
  return worst;
}

namespace {

RapsResult drive(const Topology& t, const FaultBounds& b, std::span<const double> x0, std::size_t dim, Slot horizon,
                 const RunSeed& seed, const PerturbationFn* perturbation, const RapsOptions& options) {
  NetworkOptions net_opts;
  net_opts.initial_timestamp = options.initial_timestamp;
  net_opts.record_trace = options.record_trace;
  net_opts.record_schedule = options.record_schedule;
  net_opts.mask = options.mask;
  net_opts.mutation = options.mutation;
  PushSumNetwork net(t, b, x0, dim, seed, net_opts);

  RapsResult out;
  out.n = t.size();
  out.dim = dim;
  out.horizon = horizon;
  out.z.reserve(static_cast<std::size_t>(horizon + 1) * t.size() * dim);
  out.augmented_mean.reserve(static_cast<std::size_t>(horizon + 1) * dim);
  const double inv_n = 1.0 / static_cast<double>(t.size());
  auto record = [&] {
    for (const auto& s : net.nodes()) out.z.insert(out.z.end(), s.z.begin(), s.z.end());
    for (double v : net.injected_mass()) out.augmented_mean.push_back(v * inv_n);
  };
  record();
  for (Slot k = 0; k < horizon; ++k) {
    if (perturbation != nullptr) {
      net.step([&](NodeId i, Slot slot, const PushSumNodeState&, std::span<double> delta) {
        const std::vector<double> d = (*perturbation)(i, slot);
        if (d.size() != delta.size()) throw ConfigError("perturbation has wrong dimension");
        std::copy(d.begin(), d.end(), delta.begin());
        return true;
      });
    } else {
      net.step();
    }
    record();
  }
  if (options.record_trace) out.trace = net.take_trace();
  if (options.record_schedule) out.schedule = net.finish_schedule();
  return out;
}

}  // namespace

RapsResult run_raps(const Topology& t, const FaultBounds& b, std::span<const double> x0, std::size_t dim,
                    Slot horizon, const RunSeed& seed, const RapsOptions& options) {
  return drive(t, b, x0, dim, horizon, seed, nullptr, options);
}

RapsResult run_perturbed(const Topology& t, const FaultBounds& b, std::span<const double> x0, std::size_t dim,
                         Slot horizon, const RunSeed& seed, const PerturbationFn& perturbation,
                         const RapsOptions& options) {
  return drive(t, b, x0, dim, horizon, seed, &perturbation, options);
}

}  // namespace rpush
