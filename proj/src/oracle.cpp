#include "rpush/oracle.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "rpush/errors.hpp"

namespace rpush {

DeliveryIndicators reconstruct_indicators(const Topology& t, const ScheduleRealization& s, int max_effective_delay,
                                          Slot initial_timestamp) {
  DeliveryIndicators ind;
  ind.arcs = t.arc_count();
  ind.max_delay = max_effective_delay;
  ind.horizon = s.send_horizon;
  ind.delay.assign(static_cast<std::size_t>(ind.horizon) * ind.arcs, 0);

  struct Absorbed {
    Slot send;
    Slot processed;
  };
  std::vector<std::vector<Absorbed>> per_arc(ind.arcs);
  const Slot wake_end = s.wake_horizon();
  for (const SendRecord& r : s.sends) {
    if (r.lost || r.slot >= ind.horizon) continue;
    if (r.slot <= initial_timestamp) continue;  // timestamp never accepted
    const NodeId j = t.arc(r.arc).to;
    Slot p = r.arrival;
    while (p < wake_end && !s.woke(j, p)) ++p;
    if (p >= wake_end) {
      std::ostringstream os;
      os << "processing slot of message on arc " << r.arc << " sent at " << r.slot << " lies beyond the wake record";
      throw InconsistentSchedule(os.str());
    }
    per_arc[r.arc].push_back({r.slot, p});
  }
  for (ArcId e = 0; e < ind.arcs; ++e) {
    // A send is absorbed only if no later send on the arc is processed at the
    // same slot or earlier.
    Slot earliest_later = std::numeric_limits<Slot>::max();
    auto& list = per_arc[e];
    for (auto it = list.rbegin(); it != list.rend(); ++it) {
      if (it->processed < earliest_later) {
        const Slot l = it->processed - it->send;
        if (l < 1 || l > max_effective_delay) {
          std::ostringstream os;
          os << "effective delay " << l << " on arc " << e << " at slot " << it->send << " outside [1, "
             << max_effective_delay << "]";
          throw InconsistentSchedule(os.str());
        }
        ind.delay[static_cast<std::size_t>(it->send) * ind.arcs + e] = static_cast<std::uint8_t>(l);
      }
      earliest_later = std::min(earliest_later, it->processed);
    }
  }
  return ind;
}

bool delivery_exclusions_hold(const DeliveryIndicators& ind, Slot* first_bad) {
  std::vector<Slot> last_processed(ind.arcs, -1);
  for (Slot k = 0; k < ind.horizon; ++k) {
    for (ArcId e = 0; e < ind.arcs; ++e) {
      const int l = ind.at(k, e);
      if (l == 0) continue;
      if (l > ind.max_delay || k + l <= last_processed[e]) {
        if (first_bad != nullptr) *first_bad = k;
        return false;
      }
      last_processed[e] = k + l;
    }
  }
  return true;
}

double MassMatrix::column_sum(std::size_t c) const {
  double s = 0.0;
  for (std::size_t p = col_start[c]; p < col_start[c + 1]; ++p) s += value[p];
  return s;
}

double MassMatrix::min_positive_entry() const {
  double lo = std::numeric_limits<double>::infinity();
  for (double v : value) {
    if (v > 0.0) lo = std::min(lo, v);
  }
  return lo;
}

double MassMatrix::entry(std::size_t r, std::size_t c) const {
  double v = 0.0;
  for (std::size_t p = col_start[c]; p < col_start[c + 1]; ++p) {
    if (row[p] == r) v += value[p];
  }
  return v;
}

void MassMatrix::apply(std::span<const double> in, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < size; ++c) {
    const double v = in[c];
    if (v == 0.0) continue;
    for (std::size_t p = col_start[c]; p < col_start[c + 1]; ++p) out[row[p]] += value[p] * v;
  }
}

void MassMatrix::left_apply(std::span<const double> row_vec, std::span<double> out) const {
  for (std::size_t c = 0; c < size; ++c) {
    double s = 0.0;
    for (std::size_t p = col_start[c]; p < col_start[c + 1]; ++p) s += row_vec[row[p]] * value[p];
    out[c] = s;
  }
}

MassMatrix build_mass_matrix(const Topology& t, const AugmentedLayout& layout, const ScheduleSlice& slice) {
  const std::size_t n = layout.n, m = layout.m;
  const int ld = layout.max_delay;
  std::vector<int> tau_of(m, 0);
  for (ArcId e = 0; e < m; ++e) {
    int count = 0;
    for (int l = 1; l <= ld; ++l) {
      if (slice.tau[e * ld + (l - 1)]) {
        ++count;
        tau_of[e] = l;
      }
    }
    if (count > 1) throw InconsistentSchedule("arc " + std::to_string(e) + " carries more than one delay indicator");
    if (count == 1 && !slice.awake[t.arc(e).from]) {
      throw InconsistentSchedule("arc " + std::to_string(e) + " delivers from a sleeping source");
    }
  }

  MassMatrix M;
  M.size = layout.size();
  M.col_start.reserve(M.size + 1);
  M.col_start.push_back(0);
  auto put = [&](std::size_t r, double v) {
    M.row.push_back(r);
    M.value.push_back(v);
  };
  for (NodeId i = 0; i < n; ++i) {
    const double share = 1.0 / static_cast<double>(t.out_degree(i) + 1);
    if (slice.awake[i]) {
      put(layout.real(i), share);
      for (ArcId e : t.out_arcs(i)) {
        put(tau_of[e] > 0 ? layout.transit(e, tau_of[e]) : layout.excess(e), share);
      }
    } else {
      put(layout.real(i), 1.0);
    }
    M.col_start.push_back(M.row.size());
  }
  for (int l = 1; l <= ld; ++l) {
    for (ArcId e = 0; e < m; ++e) {
      put(l == 1 ? layout.real(t.arc(e).to) : layout.transit(e, l - 1), 1.0);
      M.col_start.push_back(M.row.size());
    }
  }
  for (ArcId e = 0; e < m; ++e) {
    put(tau_of[e] > 0 ? layout.transit(e, tau_of[e]) : layout.excess(e), 1.0);
    M.col_start.push_back(M.row.size());
  }
  return M;
}

AugmentedSystem::AugmentedSystem(const AugmentedLayout& l, std::span<const double> x0, std::size_t d)
    : layout(l), dim(d), chi(d * l.size(), 0.0), psi(l.size(), 0.0) {
  for (NodeId i = 0; i < l.n; ++i) {
    psi[i] = 1.0;
    for (std::size_t c = 0; c < d; ++c) chi[c * l.size() + i] = x0[i * d + c];
  }
}

double AugmentedSystem::chi_sum(std::size_t c) const {
  double s = 0.0;
  for (std::size_t h = 0; h < layout.size(); ++h) s += chi[c * layout.size() + h];
  return s;
}

double AugmentedSystem::psi_sum() const {
  double s = 0.0;
  for (double v : psi) s += v;
  return s;
}

std::vector<std::size_t> AugmentedSystem::support() const {
  std::vector<std::size_t> out;
  for (std::size_t h = 0; h < psi.size(); ++h) {
    if (psi[h] > 0.0) out.push_back(h);
  }
  return out;
}

void step_augmented(AugmentedSystem& sys, const MassMatrix& M, std::span<const double> delta) {
  const std::size_t N = sys.layout.size();
  thread_local std::vector<double> in, out;
  in.resize(N);
  out.resize(N);
  for (std::size_t c = 0; c < sys.dim; ++c) {
    std::copy_n(sys.chi.begin() + static_cast<std::ptrdiff_t>(c * N), N, in.begin());
    if (!delta.empty()) {
      for (NodeId i = 0; i < sys.layout.n; ++i) in[i] += delta[i * sys.dim + c];
    }
    M.apply(in, out);
    std::copy(out.begin(), out.end(), sys.chi.begin() + static_cast<std::ptrdiff_t>(c * N));
  }
  M.apply(sys.psi, out);
  std::copy(out.begin(), out.end(), sys.psi.begin());
}

double ContractionBound::envelope(Slot k, double scale) const {
  if (vacuous) return std::numeric_limits<double>::infinity();
  return static_cast<double>(static_cast<long double>(scale) *
                             expl(log_delta + static_cast<long double>(k) * log_lambda));
}

ContractionBound contraction_bound(std::size_t n, int delivery_gap) {
  ContractionBound b;
  const long double ln_n = logl(static_cast<long double>(n));
  b.log_alpha = -static_cast<long double>(n) * delivery_gap * ln_n;
  const long double log_mass = ln_n + 6.0L * b.log_alpha;  // log(n alpha^6)
  b.alpha = expl(b.log_alpha);
  if (log_mass < logl(static_cast<long double>(DBL_MIN))) {
    b.vacuous = true;
    b.lambda = 1.0L;
    b.delta = 1.0L;
    return b;
  }
  const long double mass = expl(log_mass);
  const long double log_gap = log1pl(-mass);  // log(1 - n alpha^6)
  b.log_delta = -log_gap;
  b.log_lambda = log_gap / (2.0L * static_cast<long double>(n) * delivery_gap);
  b.delta = expl(b.log_delta);
  b.lambda = expl(b.log_lambda);
  return b;
}

bool VerificationReport::ok() const {
  return std::all_of(entries.begin(), entries.end(), [](const VerificationEntry& e) { return e.ok(); });
}

const VerificationEntry& VerificationReport::at(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("no verification entry named " + name);
}

void VerificationReport::write(std::ostream& os) const {
  for (const auto& e : entries) {
    os << e.name << ' ' << std::setprecision(6) << std::scientific << e.max_residual << ' ';
    if (e.ok()) {
      os << "ok";
    } else {
      os << e.first_failure;
    }
    os << std::defaultfloat << '\n';
  }
}

void VerificationReport::require_ok() const {
  for (const auto& e : entries) {
    if (!e.ok()) {
      std::ostringstream os;
      os << "verification failed: " << e.name << " at slot " << e.first_failure << " (residual " << e.max_residual
         << ", tolerance " << e.tolerance << ")";
      throw VerificationFailure(os.str());
    }
  }
}

namespace {

struct Tracker {
  VerificationEntry* entry;
  void observe(double residual, Slot k) const {
    if (!(residual <= entry->max_residual)) entry->max_residual = residual;
    if (!(residual <= entry->tolerance) && entry->first_failure < 0) entry->first_failure = k;
  }
  void fail(Slot k) const {
    if (entry->first_failure < 0) entry->first_failure = k;
  }
};

void fill_slice(const ScheduleRealization& s, const DeliveryIndicators& ind, Slot k,
                std::vector<std::uint8_t>& tau) {
  const int ld = ind.max_delay;
  std::fill(tau.begin(), tau.end(), 0);
  for (ArcId e = 0; e < ind.arcs; ++e) {
    const int l = ind.at(k, e);
    if (l > 0) tau[e * ld + (l - 1)] = 1;
  }
  (void)s;
}

std::span<const std::uint8_t> wake_row(const ScheduleRealization& s, Slot k) {
  return {s.wake.data() + static_cast<std::size_t>(k) * s.nodes, s.nodes};
}

// Replays the schedule through the augmented system. on_state(k, sys) sees
// chi(k), psi(k); on_matrix(k, M, sys) sees M(k) before the step.
template <class OnState, class OnMatrix>
void replay(const Topology& t, const FaultBounds& b, const StateTrace& trace, const ScheduleRealization& schedule,
            Slot initial_timestamp, OnState&& on_state, OnMatrix&& on_matrix) {
  const int ld = derived_bounds(b).max_effective_delay;
  const AugmentedLayout layout{t.size(), t.arc_count(), ld};
  const Slot K = trace.slots - 1;
  if (schedule.send_horizon < K || schedule.wake_horizon() < K) {
    throw InconsistentSchedule("schedule shorter than the trace");
  }
  const DeliveryIndicators ind = reconstruct_indicators(t, schedule, ld, initial_timestamp);
  std::vector<double> x0(trace.x.begin(), trace.x.begin() + static_cast<std::ptrdiff_t>(t.size() * trace.dim));
  AugmentedSystem sys(layout, x0, trace.dim);
  std::vector<std::uint8_t> tau(layout.m * static_cast<std::size_t>(ld));
  for (Slot k = 0; k <= K; ++k) {
    on_state(k, sys, ind);
    if (k == K) break;
    fill_slice(schedule, ind, k, tau);
    const MassMatrix M = build_mass_matrix(t, layout, {wake_row(schedule, k), tau});
    on_matrix(k, M, sys);
    const std::span<const double> delta(trace.delta.data() + static_cast<std::size_t>(k) * t.size() * trace.dim,
                                        t.size() * trace.dim);
    step_augmented(sys, M, delta);
  }
}

}  // namespace

VerificationReport cross_validate(const Topology& t, const FaultBounds& b, const StateTrace& trace,
                                  const ScheduleRealization& schedule, const CrossValidateOptions& options) {
  const std::size_t n = t.size(), m = t.arc_count(), dim = trace.dim;
  const DerivedBounds db = derived_bounds(b);
  const int ld = db.max_effective_delay;
  const AugmentedLayout layout{n, m, ld};
  const std::size_t N = layout.size();

  double mass_scale = 1.0;
  for (std::size_t q = 0; q < n * dim; ++q) mass_scale += std::abs(trace.x[q]);
  for (double d : trace.delta) mass_scale += std::abs(d);
  const double tol_x = 1e-9 * mass_scale;
  const double tol_y = 1e-9 * (1.0 + static_cast<double>(n));

  const ContractionBound cb = contraction_bound(n, db.max_delivery_gap);
  const bool use_real_floor = options.fixed_graph && !cb.vacuous;
  const double psi_floor =
      use_real_floor ? static_cast<double>(static_cast<long double>(n) * cb.alpha) : 0.0;

  VerificationReport report;
  auto add = [&](const char* name, double tol) {
    report.entries.push_back({name, 0.0, tol, -1});
  };
  add("state_x", tol_x);
  add("state_y", tol_y);
  add("rho_increment_x", tol_x);
  add("rho_increment_y", tol_y);
  add("mass_ledger_x", tol_x);
  add("mass_ledger_y", tol_y);
  add("sum_chi", tol_x);
  add("sum_psi", 1e-9);
  add("column_sums", 1e-15);
  add("entry_floor", 0.0);
  add("real_diagonal", 0.0);
  add("delivery_exclusions", 0.0);
  add("transit_exclusion", tol_x);
  add("support_zero", tol_x);
  add("psi_bounds", 0.0);
  auto tr = [&](std::size_t idx) { return Tracker{&report.entries[idx]}; };
  const Tracker state_x = tr(0), state_y = tr(1), rho_x = tr(2), rho_y = tr(3), ledger_x = tr(4),
                ledger_y = tr(5), sum_chi = tr(6), sum_psi = tr(7), col_sums = tr(8), entry_floor = tr(9),
                real_diag = tr(10), exclusions = tr(11), transit_excl = tr(12), support_zero = tr(13),
                psi_bounds = tr(14);

  const double entry_lb = 1.0 / static_cast<double>(t.max_out_degree() + 1);
  std::vector<double> injected(dim, 0.0);
  for (std::size_t c = 0; c < dim; ++c) {
    for (NodeId i = 0; i < n; ++i) injected[c] += trace.x[i * dim + c];
  }
  std::vector<double> prev_first_x(m * dim), prev_first_y(m);
  bool have_prev = false;
  bool exclusions_checked = false;

  replay(
      t, b, trace, schedule, options.initial_timestamp,
      [&](Slot k, const AugmentedSystem& sys, const DeliveryIndicators& ind) {
        if (!exclusions_checked) {
          Slot bad = -1;
          if (!delivery_exclusions_hold(ind, &bad)) {
            exclusions.observe(1.0, bad);
          }
          exclusions_checked = true;
        }
        for (NodeId i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < dim; ++c) state_x.observe(std::abs(sys.chi_at(c, i) - trace.x_at(k, i, c)), k);
          state_y.observe(std::abs(sys.psi[i] - trace.y_at(k, i)), k);
        }
        for (ArcId e = 0; e < m; ++e) {
          const NodeId src = t.arc(e).from;
          if (have_prev) {
            for (std::size_t c = 0; c < dim; ++c) {
              const double inc = trace.rho_x_at(k, e, c) - trace.rho_x_at(k - 1, e, c);
              rho_x.observe(std::abs(inc - prev_first_x[e * dim + c]), k - 1);
            }
            rho_y.observe(std::abs(trace.rho_y_at(k, e) - trace.rho_y_at(k - 1, e) - prev_first_y[e]), k - 1);
          }
          for (std::size_t c = 0; c < dim; ++c) {
            double held = sys.chi_at(c, layout.excess(e)) + trace.rho_x_at(k, e, c);
            for (int l = 1; l <= ld; ++l) held += sys.chi_at(c, layout.transit(e, l));
            ledger_x.observe(std::abs(held - trace.phi_x_at(k, src, c)), k);
          }
          double held_y = sys.psi[layout.excess(e)] + trace.rho_y_at(k, e);
          for (int l = 1; l <= ld; ++l) held_y += sys.psi[layout.transit(e, l)];
          ledger_y.observe(std::abs(held_y - trace.phi_y_at(k, src)), k);
          for (std::size_t c = 0; c < dim; ++c) prev_first_x[e * dim + c] = sys.chi_at(c, layout.transit(e, 1));
          prev_first_y[e] = sys.psi[layout.transit(e, 1)];
        }
        have_prev = true;
        for (std::size_t c = 0; c < dim; ++c) sum_chi.observe(std::abs(sys.chi_sum(c) - injected[c]), k);
        sum_psi.observe(std::abs(sys.psi_sum() - static_cast<double>(n)), k);
        for (std::size_t h = 0; h < N; ++h) {
          const double p = sys.psi[h];
          if (p == 0.0) {
            for (std::size_t c = 0; c < dim; ++c) support_zero.observe(std::abs(sys.chi_at(c, h)), k);
          }
          const double upper = static_cast<double>(n) * (1.0 + 1e-12);
          double violation = std::max(0.0, p - upper);
          if (h < n) {
            if (!(p > 0.0)) violation = std::max(violation, 1.0);
            violation = std::max(violation, psi_floor - p);
          } else {
            violation = std::max(violation, -p);
          }
          psi_bounds.observe(violation, k);
        }
        // Perturbations injected during slot k enter the running total for k + 1.
        if (k + 1 < trace.slots) {
          for (std::size_t c = 0; c < dim; ++c) {
            for (NodeId i = 0; i < n; ++i) injected[c] += trace.delta_at(k, i, c);
          }
        }
        if (k < ind.horizon) {
          for (ArcId e = 0; e < m; ++e) {
            const int l = ind.at(k, e);
            if (l == 0) continue;
            for (int lp = l + 1; lp <= ld; ++lp) {
              transit_excl.observe(std::abs(sys.psi[layout.transit(e, lp)]), k);
              for (std::size_t c = 0; c < dim; ++c) transit_excl.observe(std::abs(sys.chi_at(c, layout.transit(e, lp))), k);
            }
          }
        }
      },
      [&](Slot k, const MassMatrix& M, const AugmentedSystem&) {
        for (std::size_t c = 0; c < M.size; ++c) col_sums.observe(std::abs(M.column_sum(c) - 1.0), k);
        entry_floor.observe(std::max(0.0, entry_lb - M.min_positive_entry()), k);
        for (NodeId i = 0; i < n; ++i) {
          const double d = M.entry(i, i);
          real_diag.observe(d > 0.0 ? 0.0 : 1.0 - d, k);
        }
      });

  if (options.fixed_graph && n <= options.positive_rows_max_n) {
    report.entries.push_back({"positive_rows", 0.0, 0.0, -1});
    const Slot bad = first_nonpositive_window(t, b, schedule, options.initial_timestamp);
    if (bad >= 0) {
      report.entries.back().max_residual = 1.0;
      report.entries.back().first_failure = bad;
    }
  }
  return report;
}

std::vector<double> augmented_mean(const Topology& t, const FaultBounds& b, const StateTrace& trace,
                                   const ScheduleRealization& schedule, Slot initial_timestamp) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(trace.slots) * trace.dim);
  const double inv_n = 1.0 / static_cast<double>(t.size());
  replay(
      t, b, trace, schedule, initial_timestamp,
      [&](Slot, const AugmentedSystem& sys, const DeliveryIndicators&) {
        for (std::size_t c = 0; c < trace.dim; ++c) out.push_back(sys.chi_sum(c) * inv_n);
      },
      [](Slot, const MassMatrix&, const AugmentedSystem&) {});
  return out;
}

WbarSeries wbar_diagnostic(const Topology& t, const FaultBounds& b, const StateTrace& trace,
                           const ScheduleRealization& schedule, const GradientFn& gradient,
                           const std::function<double(Slot)>& alpha, Slot initial_timestamp) {
  const std::size_t n = t.size(), dim = trace.dim;
  WbarSeries w;
  w.n = n;
  w.dim = dim;
  w.slots = trace.slots;
  const std::vector<double> mean = augmented_mean(t, b, trace, schedule, initial_timestamp);
  // Prefix sums of alpha for the sleep-window sums.
  std::vector<double> prefix(static_cast<std::size_t>(trace.slots) + 1, 0.0);
  for (Slot k = 0; k < trace.slots; ++k) prefix[k + 1] = prefix[k] + alpha(k);
  std::vector<double> z(dim), g(dim), wbar(dim);
  w.wbar.reserve(static_cast<std::size_t>(trace.slots) * dim);
  w.tracking.reserve(static_cast<std::size_t>(trace.slots) * n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Slot k = 0; k < trace.slots; ++k) {
    for (std::size_t c = 0; c < dim; ++c) wbar[c] = mean[k * dim + c];
    for (NodeId i = 0; i < n; ++i) {
      const Slot kap = trace.kappa_at(k, i);
      // sum_{t = kappa + 1}^{k - 1} alpha(t)
      const Slot lo = std::max<Slot>(kap + 1, 0);
      const double steps = k - 1 >= lo ? prefix[k] - prefix[lo] : 0.0;
      if (steps == 0.0) continue;
      for (std::size_t c = 0; c < dim; ++c) z[c] = trace.z_at(k, i, c);
      gradient(i, z, g);
      for (std::size_t c = 0; c < dim; ++c) wbar[c] -= steps * g[c] * inv_n;
    }
    w.wbar.insert(w.wbar.end(), wbar.begin(), wbar.end());
    for (NodeId i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = trace.z_at(k, i, c) - wbar[c];
        s += d * d;
      }
      w.tracking.push_back(std::sqrt(s));
    }
  }
  return w;
}

Slot first_nonpositive_window(const Topology& t, const FaultBounds& b, const ScheduleRealization& schedule,
                              Slot initial_timestamp) {
  const DerivedBounds db = derived_bounds(b);
  const int ld = db.max_effective_delay;
  const AugmentedLayout layout{t.size(), t.arc_count(), ld};
  const DeliveryIndicators ind = reconstruct_indicators(t, schedule, ld, initial_timestamp);
  const Slot K = schedule.send_horizon;
  const Slot W = static_cast<Slot>(t.size()) * db.max_delivery_gap;
  std::vector<MassMatrix> mats;
  mats.reserve(static_cast<std::size_t>(K));
  std::vector<std::uint8_t> tau(layout.m * static_cast<std::size_t>(ld));
  for (Slot k = 0; k < K; ++k) {
    fill_slice(schedule, ind, k, tau);
    mats.push_back(build_mass_matrix(t, layout, {wake_row(schedule, k), tau}));
  }
  const std::size_t N = layout.size();
  std::vector<double> r(N), next(N);
  for (Slot start = std::max<Slot>(0, initial_timestamp + 1); start + W <= K; ++start) {
    for (NodeId i = 0; i < t.size(); ++i) {
      std::fill(r.begin(), r.end(), 0.0);
      r[i] = 1.0;
      for (Slot k = start + W - 1; k >= start; --k) {
        mats[k].left_apply(r, next);
        r.swap(next);
      }
      if (std::any_of(r.begin(), r.end(), [](double v) { return !(v > 0.0); })) return start;
    }
  }
  return -1;
}

}  // namespace rpush
