#include "rpush/rasgp.hpp"

#include <cmath>
#include <sstream>

#include "rpush/errors.hpp"

namespace rpush {

RasgpResult run_rasgp(const Topology& t, const FaultBounds& b, const Objective& f, const RunSeed& seed,
                      const RasgpOptions& options) {
  const std::size_t n = t.size();
  const std::size_t d = f.dim();
  if (f.nodes() != n) throw ConfigError("objective and topology disagree on node count");
  if (options.horizon < 0) throw ConfigError("horizon must be nonnegative");
  std::vector<double> start = options.initial.empty() ? std::vector<double>(d, 1.0) : options.initial;
  if (start.size() != d) throw ConfigError("initial iterate has wrong dimension");
  std::vector<double> x0(n * d);
  for (NodeId i = 0; i < n; ++i) std::copy(start.begin(), start.end(), x0.begin() + static_cast<std::ptrdiff_t>(i * d));

  const StepSizeLedger ledger{f.total_mu(), n, options.k0};
  const NoiseModel noise{options.noise_width};
  std::vector<CounterRng> noise_rng;
  noise_rng.reserve(n);
  for (NodeId i = 0; i < n; ++i) noise_rng.emplace_back(seed.key(StreamRole::kNoise, i));

  NetworkOptions net_opts;
  net_opts.initial_timestamp = -1;
  net_opts.record_trace = options.record_trace;
  net_opts.record_schedule = options.record_schedule;
  net_opts.mask = options.mask;
  PushSumNetwork net(t, b, x0, d, seed, net_opts);

  RasgpResult r;
  r.n = n;
  r.dim = d;
  r.horizon = options.horizon;
  r.zhat.reserve(static_cast<std::size_t>(options.horizon + 1) * d);
  if (options.keep_node_iterates) r.z.reserve(static_cast<std::size_t>(options.horizon + 1) * n * d);

  const double inv_n = 1.0 / static_cast<double>(n);
  auto record = [&](Slot k) {
    const auto nodes = net.nodes();
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (const auto& s_i : nodes) s += s_i.z[c];
      r.zhat.push_back(s * inv_n);
    }
    if (options.keep_node_iterates) {
      for (const auto& s_i : nodes) r.z.insert(r.z.end(), s_i.z.begin(), s_i.z.end());
    }
    if (options.observe) options.observe(k, nodes);
  };

  std::vector<double> g(d);
  auto perturb = [&](NodeId i, Slot k, const PushSumNodeState& s, std::span<double> delta) {
    const Slot window = k - s.kappa;
    r.stats.max_sleep_window = std::max(r.stats.max_sleep_window, window);
    noisy_gradient(f, i, s.z, noise, noise_rng[i], g);
    for (double v : g) {
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite gradient at node " << i << ", slot " << k;
        throw NumericError(os.str());
      }
    }
    if (options.zero_steps) return false;
    const double beta = ledger.beta(s.kappa, k);
    if (k >= 1) r.stats.max_scaled_beta = std::max(r.stats.max_scaled_beta, static_cast<double>(k) * beta);
    if (beta == 0.0) return false;
    for (std::size_t c = 0; c < d; ++c) delta[c] = -beta * g[c];
    return true;
  };

  record(0);
  for (Slot k = 0; k < options.horizon; ++k) {
    net.step(perturb);
    record(k + 1);
  }
  if (options.record_schedule) r.schedule = net.finish_schedule();
  if (options.record_trace) r.trace = net.take_trace();
  return r;
}

}  // namespace rpush
