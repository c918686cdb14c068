#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rpush/faultnet.hpp"
#include "rpush/graph.hpp"
#include "rpush/raps.hpp"

namespace rpush {

/// Effective delay of the send on each arc at each slot: 0 when nothing from
/// that send is ever absorbed (source asleep, arc masked, message lost, or
/// message superseded by a fresher one processed in the same slot).
struct DeliveryIndicators {
  std::size_t arcs = 0;
  int max_delay = 0;  // L_d
  Slot horizon = 0;
  std::vector<std::uint8_t> delay;  // horizon x arcs

  int at(Slot k, ArcId e) const { return delay[static_cast<std::size_t>(k) * arcs + e]; }
};

/// Rebuild delivery indicators purely from a schedule: processing slot is the
/// receiver's first wake at or after arrival; messages whose timestamp does
/// not exceed `initial_timestamp`, or that share a processing slot with a
/// later send on the same arc, are reclassified as lost. Throws
/// InconsistentSchedule when a processing slot is unresolvable or an
/// effective delay exceeds L_d.
DeliveryIndicators reconstruct_indicators(const Topology& t, const ScheduleRealization& s, int max_effective_delay,
                                          Slot initial_timestamp);

/// Max residual of the in-order-arrival exclusions: 0 when, per arc, the
/// processing slots (send + delay) of consecutive absorbed sends strictly
/// increase and every delay lies in [1, L_d]; otherwise the first offending
/// slot is written to `first_bad`.
bool delivery_exclusions_hold(const DeliveryIndicators& ind, Slot* first_bad = nullptr);

/// Index map of the augmented graph: real nodes, then transit nodes for
/// l = 1..L_d (one block of m per delay value), then one excess node per arc.
struct AugmentedLayout {
  std::size_t n = 0, m = 0;
  int max_delay = 0;

  std::size_t size() const noexcept { return n + (static_cast<std::size_t>(max_delay) + 1) * m; }
  std::size_t real(NodeId i) const noexcept { return i; }
  std::size_t transit(ArcId e, int l) const noexcept { return n + static_cast<std::size_t>(l - 1) * m + e; }
  std::size_t excess(ArcId e) const noexcept { return n + static_cast<std::size_t>(max_delay) * m + e; }
};

/// One slot of the schedule as seen by the matrix builder: wake flags (n)
/// and effective-delay indicators tau (m x L_d, row per arc).
struct ScheduleSlice {
  std::span<const std::uint8_t> awake;
  std::span<const std::uint8_t> tau;
};

/// Sparse column-compressed mass matrix.
struct MassMatrix {
  std::size_t size = 0;
  std::vector<std::size_t> col_start;
  std::vector<std::size_t> row;
  std::vector<double> value;

  double column_sum(std::size_t c) const;
  double min_positive_entry() const;
  double entry(std::size_t r, std::size_t c) const;
  /// out = M * in.
  void apply(std::span<const double> in, std::span<double> out) const;
  /// out = row_vec^T * M.
  void left_apply(std::span<const double> row_vec, std::span<double> out) const;
};

/// Column-stochastic matrix of one slot. Throws InconsistentSchedule when an
/// arc carries more than one positive indicator or a sleeping source sends.
MassMatrix build_mass_matrix(const Topology& t, const AugmentedLayout& layout, const ScheduleSlice& slice);

/// chi (per coordinate) and psi over real plus virtual nodes.
struct AugmentedSystem {
  AugmentedLayout layout;
  std::size_t dim = 0;
  std::vector<double> chi;  // dim x size, coordinate-major
  std::vector<double> psi;

  AugmentedSystem(const AugmentedLayout& layout, std::span<const double> x0, std::size_t dim);

  double chi_at(std::size_t c, std::size_t h) const { return chi[c * layout.size() + h]; }
  double chi_sum(std::size_t c) const;
  double psi_sum() const;
  /// Support set {h : psi_h > 0}.
  std::vector<std::size_t> support() const;
};

/// chi <- M (chi + delta), psi <- M psi. delta holds n x dim real-node
/// perturbations (empty for none).
void step_augmented(AugmentedSystem& sys, const MassMatrix& M, std::span<const double> delta = {});

/// Geometric-convergence constants of robust push-sum, evaluated in extended
/// precision and kept in log form so tiny contractions stay meaningful.
struct ContractionBound {
  long double alpha = 0, lambda = 0, delta = 0;
  long double log_alpha = 0, log_lambda = 0, log_delta = 0;
  bool vacuous = false;  // n alpha^6 below the smallest normal double

  /// delta * lambda^k * scale, or +inf when vacuous.
  double envelope(Slot k, double scale) const;
};

ContractionBound contraction_bound(std::size_t n, int delivery_gap);

struct VerificationEntry {
  std::string name;
  double max_residual = 0.0;
  double tolerance = 0.0;
  Slot first_failure = -1;

  bool ok() const noexcept { return first_failure < 0; }
};

struct VerificationReport {
  std::vector<VerificationEntry> entries;

  bool ok() const;
  const VerificationEntry& at(const std::string& name) const;
  /// One line per identity: name, max residual, first failing slot or "ok".
  void write(std::ostream& os) const;
  /// Throws VerificationFailure naming the first failing identity and slot.
  void require_ok() const;
};

struct CrossValidateOptions {
  Slot initial_timestamp = 0;
  /// Positivity of the first n rows of window products; runs when n <= this.
  std::size_t positive_rows_max_n = 5;
  /// Disable checks that need the delivery-gap bound (time-varying graphs).
  bool fixed_graph = true;
};

/// Replays the schedule through the augmented linear system and compares it
/// slot by slot with the event simulator's trace.
VerificationReport cross_validate(const Topology& t, const FaultBounds& b, const StateTrace& trace,
                                  const ScheduleRealization& schedule, const CrossValidateOptions& options = {});

/// Per-slot 1^T chi(k) / n from the augmented replay (trace.slots x dim).
std::vector<double> augmented_mean(const Topology& t, const FaultBounds& b, const StateTrace& trace,
                                   const ScheduleRealization& schedule, Slot initial_timestamp);

using GradientFn = std::function<void(NodeId, std::span<const double>, std::span<double>)>;

struct WbarSeries {
  std::size_t n = 0, dim = 0;
  Slot slots = 0;
  std::vector<double> wbar;      // slots x dim
  std::vector<double> tracking;  // slots x n, ||z_i(k) - wbar(k)||
};

/// Average of the "always-stepping" iterate: real nodes contribute
/// x_i(k) - (sum_{t = kappa_i(k) + 1}^{k - 1} alpha(t)) grad_i(z_i(k)),
/// virtual nodes their chi value; divided by n.
WbarSeries wbar_diagnostic(const Topology& t, const FaultBounds& b, const StateTrace& trace,
                           const ScheduleRealization& schedule, const GradientFn& gradient,
                           const std::function<double(Slot)>& alpha, Slot initial_timestamp);

/// Checks that for every window of n * L_s slots starting after the initial
/// timestamp (sends stamped at or before it are always discarded)
/// the first n rows of the product of mass matrices are strictly positive.
/// Returns the first failing window start or -1.
Slot first_nonpositive_window(const Topology& t, const FaultBounds& b, const ScheduleRealization& schedule,
                              Slot initial_timestamp);

}  // namespace rpush
