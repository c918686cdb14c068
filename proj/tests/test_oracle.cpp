#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rpush/errors.hpp"
#include "rpush/objectives.hpp"
#include "rpush/oracle.hpp"
#include "rpush/raps.hpp"
#include "rpush/rasgp.hpp"

using namespace rpush;

namespace {

struct Recorded {
  RapsResult result;
  const StateTrace& trace() const { return *result.trace; }
  const ScheduleRealization& schedule() const { return *result.schedule; }
};

Recorded record_raps(const Topology& t, const FaultBounds& b, std::span<const double> x0, Slot K, RunSeed seed,
                     std::optional<RhoSkipMutation> mutation = std::nullopt) {
  RapsOptions o;
  o.record_trace = true;
  o.record_schedule = true;
  o.mutation = mutation;
  return {run_raps(t, b, x0, 1, K, seed, o)};
}

}  // namespace

TEST_CASE("all asleep: real and excess nodes hold, transit mass moves one hop") {
  const Topology t = build_cycle(3, true);
  const AugmentedLayout L{3, t.arc_count(), 2};
  const std::vector<std::uint8_t> awake{0, 0, 0};
  const std::vector<std::uint8_t> tau(L.m * 2, 0);
  const MassMatrix M = build_mass_matrix(t, L, {awake, tau});
  std::vector<std::size_t> dest(L.size());
  for (std::size_t i = 0; i < L.n; ++i) dest[i] = i;
  for (ArcId e = 0; e < L.m; ++e) {
    dest[L.transit(e, 1)] = t.arc(e).to;
    dest[L.transit(e, 2)] = L.transit(e, 1);
    dest[L.excess(e)] = L.excess(e);
  }
  for (std::size_t c = 0; c < L.size(); ++c) {
    for (std::size_t r = 0; r < L.size(); ++r) CHECK(M.entry(r, c) == (r == dest[c] ? 1.0 : 0.0));
  }
}

TEST_CASE("two-node lossless step is column stochastic with entries at least 1/2") {
  const Topology t = build_cycle(2, true);
  const AugmentedLayout L{2, 2, 1};
  const std::vector<std::uint8_t> awake{1, 1};
  const std::vector<std::uint8_t> tau{1, 1};
  const MassMatrix M = build_mass_matrix(t, L, {awake, tau});
  for (std::size_t c = 0; c < L.size(); ++c) CHECK(M.column_sum(c) == 1.0);
  CHECK(M.min_positive_entry() >= 0.5);
  CHECK(M.entry(0, 0) == 0.5);
  CHECK(M.entry(L.transit(t.find_arc(0, 1), 1), 0) == 0.5);
  CHECK(M.entry(1, L.transit(t.find_arc(0, 1), 1)) == 1.0);
}

TEST_CASE("two delay indicators on one arc are inconsistent") {
  const Topology t = build_cycle(2, true);
  const AugmentedLayout L{2, 2, 3};
  const std::vector<std::uint8_t> awake{1, 1};
  std::vector<std::uint8_t> tau(6, 0);
  tau[0] = tau[1] = 1;
  CHECK_THROWS_AS(build_mass_matrix(t, L, {awake, tau}), InconsistentSchedule);
  const std::vector<std::uint8_t> asleep{0, 1};
  std::vector<std::uint8_t> one(6, 0);
  one[0] = 1;  // arc (0,1) delivers while 0 sleeps
  CHECK_THROWS_AS(build_mass_matrix(t, L, {asleep, one}), InconsistentSchedule);
}

TEST_CASE("identity step leaves the system fixed; a lossless step preserves the sum") {
  const Topology t = build_cycle(2, true);
  const AugmentedLayout L{2, 2, 1};
  const double x0[] = {0.3, 7.1};
  AugmentedSystem sys(L, x0, 1);
  const std::vector<std::uint8_t> sleep{0, 0}, none{0, 0};
  const MassMatrix I = build_mass_matrix(t, L, {sleep, none});
  const auto before = sys.chi;
  step_augmented(sys, I);
  CHECK(sys.chi == before);
  const std::vector<std::uint8_t> wake{1, 1}, tau{1, 1};
  step_augmented(sys, build_mass_matrix(t, L, {wake, tau}));
  CHECK(std::abs(sys.chi_sum(0) - 7.4) <= 1e-15);
  CHECK(sys.psi_sum() == 2.0);
}

TEST_CASE("faulty 5-node replay keeps sum psi = n for 200 steps") {
  CounterRng g(31);
  const Topology t = build_random_strongly_connected(5, 0.5, g);
  const FaultBounds b{3, 3, 3, 0.5, 0.3};
  const std::vector<double> x0{1, 2, 3, 4, 5};
  const Recorded r = record_raps(t, b, x0, 200, {31, 0});
  const VerificationReport rep = cross_validate(t, b, r.trace(), r.schedule());
  CHECK(rep.at("sum_psi").max_residual <= 1e-9);
  CHECK(rep.at("column_sums").ok());
  CHECK(rep.at("real_diagonal").ok());
}

TEST_CASE("lossless synchronous 3-ring agrees to 1e-12") {
  const Topology t = build_cycle(3, false);
  const FaultBounds b{1, 0, 1, 1.0, 0.0};
  const std::vector<double> x0{3, -1, 8};
  const Recorded r = record_raps(t, b, x0, 100, {1, 0});
  const VerificationReport rep = cross_validate(t, b, r.trace(), r.schedule());
  CHECK(rep.ok());
  for (const char* name : {"state_x", "state_y", "rho_increment_x", "mass_ledger_x"}) {
    CHECK(rep.at(name).max_residual <= 1e-12);
  }
}

TEST_CASE("faulty asynchronous random graphs verify over a seed sweep") {
  const FaultBounds b{3, 3, 3, 0.5, 0.3};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng g(seed);
    const Topology t = build_random_strongly_connected(5, 0.5, g);
    std::vector<double> x0(5);
    for (auto& v : x0) v = g.uniform(-5, 5);
    const Recorded r = record_raps(t, b, x0, 500, {seed, 7});
    const VerificationReport rep = cross_validate(t, b, r.trace(), r.schedule());
    if (!rep.ok()) {
      std::ostringstream os;
      rep.write(os);
      FAIL_CHECK(os.str());
    }
  }
}

TEST_CASE("report lists one line per identity") {
  const Topology t = build_cycle(3, false);
  const FaultBounds b{1, 0, 1, 1.0, 0.0};
  const std::vector<double> x0{1, 2, 3};
  const Recorded r = record_raps(t, b, x0, 20, {1, 0});
  const VerificationReport rep = cross_validate(t, b, r.trace(), r.schedule());
  std::ostringstream os;
  rep.write(os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    CHECK(line.substr(line.size() - 2) == "ok");
  }
  CHECK(lines == rep.entries.size());
  CHECK_NOTHROW(rep.require_ok());
}

TEST_CASE("a skipped rho update is caught at the exact slot") {
  const Topology t = build_cycle(3, false);
  const FaultBounds b{1, 0, 1, 1.0, 0.0};
  const std::vector<double> x0{3, -1, 8};
  const Slot s = 17;
  const Recorded r = record_raps(t, b, x0, 60, {1, 0}, RhoSkipMutation{s, 1, 0});
  const VerificationReport rep = cross_validate(t, b, r.trace(), r.schedule());
  CHECK_FALSE(rep.ok());
  CHECK(rep.at("rho_increment_x").first_failure == s);
  CHECK_THROWS_AS(rep.require_ok(), VerificationFailure);
}

TEST_CASE("stale and superseded messages are reclassified as lost") {
  const Topology t = build_cycle(2, false);
  ScheduleRealization s;
  s.nodes = 2;
  s.send_horizon = 8;
  s.wake.assign(2 * 12, 1);
  const ArcId e = t.find_arc(0, 1);
  // send 2 arrives after send 3: the older one is stale
  s.sends = {{2, e, false, 5}, {3, e, false, 4}};
  auto ind = reconstruct_indicators(t, s, 4, 0);
  CHECK(ind.at(2, e) == 0);
  CHECK(ind.at(3, e) == 1);
  // receiver asleep until 7: both processed together, only the later counts
  for (Slot k = 0; k < 7; ++k) s.wake[k * 2 + 1] = 0;
  s.sends = {{4, e, false, 5}, {5, e, false, 6}};
  ind = reconstruct_indicators(t, s, 4, 0);
  CHECK(ind.at(4, e) == 0);
  CHECK(ind.at(5, e) == 2);
  CHECK(delivery_exclusions_hold(ind));
  // slot-0 sends never beat the initial timestamp 0
  s.sends = {{0, e, false, 1}};
  for (Slot k = 0; k < 12; ++k) s.wake[k * 2 + 1] = 1;
  CHECK(reconstruct_indicators(t, s, 4, 0).at(0, e) == 0);
  CHECK(reconstruct_indicators(t, s, 4, -1).at(0, e) == 1);
}

TEST_CASE("effective delay beyond L_d is an inconsistent schedule") {
  const Topology t = build_cycle(2, false);
  ScheduleRealization s;
  s.nodes = 2;
  s.send_horizon = 4;
  s.wake.assign(2 * 20, 1);
  s.sends = {{1, t.find_arc(0, 1), false, 9}};
  CHECK_THROWS_AS(reconstruct_indicators(t, s, 3, 0), InconsistentSchedule);
}

TEST_CASE("contraction constants for n = 2, L_s = 2") {
  const ContractionBound c = contraction_bound(2, 2);
  CHECK_FALSE(c.vacuous);
  CHECK(static_cast<double>(c.alpha) == 1.0 / 16.0);
  const double mass = 2.0 * std::pow(16.0, -6.0);
  CHECK(mass == doctest::Approx(1.1921e-7).epsilon(1e-4));
  CHECK(static_cast<double>(c.delta - 1.0L) == doctest::Approx(1.19e-7).epsilon(2e-3));
  CHECK(static_cast<double>(1.0L - c.lambda) == doctest::Approx(1.49e-8).epsilon(2e-3));
  CHECK(c.lambda < 1.0L);
  CHECK(c.delta > 1.0L);
  CHECK(c.alpha > 0.0L);
}

TEST_CASE("contraction bound is vacuous for n = 50, L_s = 17") {
  CHECK(contraction_bound(50, 17).vacuous);
  CHECK(std::isinf(contraction_bound(50, 17).envelope(10, 1.0)));
  CHECK_FALSE(contraction_bound(3, 4).vacuous);
}

TEST_CASE("geometric envelope holds on small instances") {
  for (std::size_t n : {2u, 3u}) {
    const Topology t = build_cycle(n, true);
    const FaultBounds b{1, 1, 2, 1.0, 0.3};  // L_s = 4
    const auto cb = contraction_bound(n, derived_bounds(b).max_delivery_gap);
    REQUIRE_FALSE(cb.vacuous);
    std::vector<double> x0(n);
    double mean = 0.0, l1 = 0.0;
    for (NodeId i = 0; i < n; ++i) {
      x0[i] = static_cast<double>(i * i) - 1.5;
      mean += x0[i];
      l1 += std::abs(x0[i]);
    }
    mean /= static_cast<double>(n);
    const RapsResult r = run_raps(t, b, x0, 1, 2000, {n, 0});
    const double target[] = {mean};
    for (Slot k = 0; k <= 2000; ++k) CHECK(r.max_deviation(k, target) <= cb.envelope(k, l1));
  }
}

TEST_CASE("zero gradients make wbar the augmented mean") {
  CounterRng g(14);
  const Topology t = build_random_strongly_connected(4, 0.5, g);
  const FaultBounds b{3, 2, 2, 0.5, 0.3};
  const std::vector<double> x0{1, 5, -2, 0};
  const Recorded r = record_raps(t, b, x0, 300, {14, 0});
  const auto mean = augmented_mean(t, b, r.trace(), r.schedule(), 0);
  const WbarSeries w = wbar_diagnostic(
      t, b, r.trace(), r.schedule(),
      [](NodeId, std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); },
      [](Slot k) { return k > 0 ? 1.0 / static_cast<double>(k) : 0.0; }, 0);
  REQUIRE(w.wbar.size() == mean.size());
  for (std::size_t q = 0; q < mean.size(); ++q) CHECK(w.wbar[q] == mean[q]);
  for (Slot k = 0; k <= 300; ++k) CHECK(mean[k] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("synchronous optimizer: wbar tracking decays like 1/k") {
  const Topology t = build_cycle(5, true);
  const FaultBounds b{1, 0, 1, 1.0, 0.0};
  const QuadraticObjective f({1.0, 1.5, 2.0, 0.5, 1.0}, {0, 1, 2, 3, 4}, 1);
  RasgpOptions o;
  o.horizon = 10000;
  o.record_trace = true;
  o.record_schedule = true;
  const RasgpResult r = run_rasgp(t, b, f, {3, 0}, o);
  const StepSizeLedger ledger{f.total_mu(), 5, 0};
  const WbarSeries w = wbar_diagnostic(
      t, b, *r.trace, *r.schedule,
      [&](NodeId i, std::span<const double> z, std::span<double> g) { f.local_gradient(i, z, g); },
      [&](Slot k) { return ledger.alpha(k); }, -1);
  // all nodes wake every slot, so wbar is the augmented mean itself
  const auto mean = augmented_mean(t, b, *r.trace, *r.schedule, -1);
  CHECK(w.wbar[500] == mean[500]);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (Slot k = 1000; k <= 10000; k += 10) {
    double worst = 0.0;
    for (NodeId i = 0; i < 5; ++i) worst = std::max(worst, w.tracking[k * 5 + i]);
    const double x = std::log(static_cast<double>(k)), y = std::log(worst);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  CHECK(slope <= -0.8);
}

TEST_CASE("window products have positive real rows") {
  CounterRng g(3);
  const Topology t = build_random_strongly_connected(4, 0.5, g);
  const FaultBounds b{2, 2, 2, 0.6, 0.3};
  const auto s = sample_schedule(t, b, 5, 6, 120, derived_bounds(b).max_effective_delay);
  CHECK(first_nonpositive_window(t, b, s, 0) == -1);
}
