#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rpush/errors.hpp"
#include "rpush/oracle.hpp"
#include "rpush/raps.hpp"

using namespace rpush;

TEST_CASE("push splits mass into out_degree + 1 shares") {
  const double x0[] = {4.0};
  PushSumNodeState s(x0, 1, 0);
  const Broadcast b = wake_and_push(s, 1, 7);
  CHECK(s.x[0] == 2.0);
  CHECK(s.y == 0.5);
  CHECK(s.phi_x[0] == 2.0);
  CHECK(s.phi_y == 0.5);
  CHECK(b.timestamp == 7);
  CHECK(s.kappa == 7);
  CHECK(b.phi_x[0] == 2.0);
}

TEST_CASE("two pushes without receipts accumulate three quarters of the mass") {
  const double x0[] = {8.0};
  PushSumNodeState s(x0, 1, 0);
  wake_and_push(s, 1, 1);
  wake_and_push(s, 1, 2);
  CHECK(s.phi_x[0] == doctest::Approx(0.75 * 8.0).epsilon(1e-15));
}

TEST_CASE("empty inbox only refreshes z") {
  const double x0[] = {3.0, -1.0};
  PushSumNodeState s(x0, 2, 0);
  s.y = 2.0;
  process_inbox(s, {});
  CHECK(s.x == std::vector<double>{3.0, -1.0});
  CHECK(s.z == std::vector<double>{1.5, -0.5});
  CHECK(s.kappa_in == std::vector<Slot>{0, 0});
}

TEST_CASE("stale message is discarded") {
  const double x0[] = {1.0};
  PushSumNodeState s(x0, 1, 0);
  s.kappa_in[0] = 4;
  const double phi[] = {10.0};
  const InboxMessage msg{0, phi, 5.0, 4};
  process_inbox(s, std::span(&msg, 1));
  CHECK(s.x[0] == 1.0);
  CHECK(s.y == 1.0);
  CHECK(s.rho_x[0] == 0.0);
}

TEST_CASE("freshest of two messages captures both sends") {
  const double x0[] = {1.0};
  PushSumNodeState s(x0, 1, 0);
  const double phi3[] = {0.5}, phi5[] = {0.75};
  const InboxMessage msgs[] = {{0, phi3, 0.5, 3}, {0, phi5, 0.75, 5}};
  process_inbox(s, msgs);
  CHECK(s.x[0] == 1.75);
  CHECK(s.y == 1.75);
  CHECK(s.rho_x[0] == 0.75);
  CHECK(s.kappa_in[0] == 5);
  // order inside the inbox does not matter
  PushSumNodeState r(x0, 1, 0);
  const InboxMessage rev[] = {msgs[1], msgs[0]};
  process_inbox(r, rev);
  CHECK(r.x == s.x);
  CHECK(r.kappa_in == s.kappa_in);
}

TEST_CASE("non-positive weight is a protocol violation") {
  const double x0[] = {1.0};
  PushSumNodeState s(x0, 1, 0);
  const double phi[] = {0.0};
  const InboxMessage msg{0, phi, -2.0, 1};
  CHECK_THROWS_AS(process_inbox(s, std::span(&msg, 1)), ProtocolViolation);
}

TEST_CASE("two-node complete graph averages 0 and 10") {
  const Topology t = build_cycle(2, true);
  const FaultBounds b{1, 0, 1, 1.0, 0.0};
  const double x0[] = {0.0, 10.0};
  RapsOptions o;
  o.record_trace = true;
  o.record_schedule = true;
  const RapsResult r = run_raps(t, b, x0, 1, 200, {3, 0}, o);
  const double target[] = {5.0};
  CHECK(r.max_deviation(200, target) < 1e-9);
  // the linear replay of the same schedule lands on the same values
  const VerificationReport rep = cross_validate(t, b, *r.trace, *r.schedule);
  CHECK(rep.at("state_x").max_residual <= 1e-12);
  CHECK(rep.at("state_y").max_residual <= 1e-12);
}

TEST_CASE("consensus is a fixed point") {
  CounterRng g(12);
  const Topology t = build_random_strongly_connected(6, 0.4, g);
  const std::vector<double> x0(6, 2.5);
  const RapsResult r = run_raps(t, {3, 3, 3, 0.5, 0.3}, x0, 1, 300, {1, 0});
  for (Slot k = 0; k <= 300; ++k) {
    for (NodeId i = 0; i < 6; ++i) CHECK(r.z_at(k, i) == doctest::Approx(2.5).epsilon(1e-13));
  }
}

TEST_CASE("faulty 10-cycle decays geometrically at least as fast as the bound") {
  const Topology t = build_cycle(10, false);
  const FaultBounds b{3, 3, 3, 0.5, 0.3};
  std::vector<double> x0(10);
  for (NodeId i = 0; i < 10; ++i) x0[i] = static_cast<double>(i);
  const Slot K = 3000;
  const RapsResult r = run_raps(t, b, x0, 1, K, {5, 0});
  const double target[] = {4.5};
  // least-squares slope of log error over the decay phase
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  double envelope = 0.0;
  for (Slot k = K - 1; k >= 100; --k) {
    envelope = std::max(envelope, r.max_deviation(k, target));
    if (envelope < 1e-12) continue;
    const double y = std::log(envelope);
    sx += k;
    sy += y;
    sxx += static_cast<double>(k) * k;
    sxy += k * y;
    ++cnt;
  }
  REQUIRE(cnt > 100);
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  CHECK(slope < 0.0);
  const ContractionBound cb = contraction_bound(10, derived_bounds(b).max_delivery_gap);
  CHECK(std::exp(slope) <= static_cast<double>(cb.lambda));
}

TEST_CASE("zero perturbation reproduces the unperturbed run") {
  CounterRng g(2);
  const Topology t = build_random_strongly_connected(5, 0.5, g);
  const FaultBounds b{3, 3, 3, 0.5, 0.3};
  const std::vector<double> x0{1, 2, 3, 4, 5};
  const RapsResult a = run_raps(t, b, x0, 1, 400, {8, 1});
  const RapsResult p =
      run_perturbed(t, b, x0, 1, 400, {8, 1}, [](NodeId, Slot) { return std::vector<double>{0.0}; });
  CHECK(a.z == p.z);
}

TEST_CASE("constant injection raises the augmented mean by c/n per slot") {
  const Topology t = build_cycle(4, false);
  const FaultBounds b{1, 0, 1, 1.0, 0.0};
  const std::vector<double> x0{0, 0, 0, 0};
  const double c = 2.0;
  const RapsResult r = run_perturbed(t, b, x0, 1, 500, {1, 0}, [&](NodeId i, Slot) {
    return std::vector<double>{i == 0 ? c : 0.0};
  });
  double worst = 0.0;
  for (Slot k = 0; k < 500; ++k) {
    CHECK(r.mean_at(k + 1) - r.mean_at(k) == doctest::Approx(c / 4.0).epsilon(1e-12));
    for (NodeId i = 0; i < 4; ++i) worst = std::max(worst, std::abs(r.z_at(k, i) - r.mean_at(k)));
  }
  // bounded offset: the late offset is no larger than the early worst case
  double late = 0.0;
  for (NodeId i = 0; i < 4; ++i) late = std::max(late, std::abs(r.z_at(500, i) - r.mean_at(500)));
  CHECK(late <= worst);
  CHECK(late < 10.0 * c);
}

TEST_CASE("decaying perturbation is tracked") {
  const Topology t = build_cycle(5, true);
  const FaultBounds b{2, 1, 2, 0.7, 0.2};
  const std::vector<double> x0{1, -1, 2, 0, 3};
  const RapsResult r = run_perturbed(t, b, x0, 1, 4000, {6, 0}, [](NodeId i, Slot k) {
    return std::vector<double>{i == 2 && k > 0 ? 1.0 / static_cast<double>(k) : 0.0};
  });
  double early = 0.0, late = 0.0;
  for (NodeId i = 0; i < 5; ++i) {
    early = std::max(early, std::abs(r.z_at(50, i) - r.mean_at(50)));
    late = std::max(late, std::abs(r.z_at(4000, i) - r.mean_at(4000)));
  }
  CHECK(late < 1e-2);
  CHECK(late < early);
}

TEST_CASE("runs are deterministic") {
  CounterRng g(2);
  const Topology t = build_random_strongly_connected(6, 0.5, g);
  const FaultBounds b{3, 3, 3, 0.5, 0.3};
  const std::vector<double> x0{1, 2, 3, 4, 5, 6};
  CHECK(run_raps(t, b, x0, 1, 300, {4, 2}).z == run_raps(t, b, x0, 1, 300, {4, 2}).z);
  CHECK(run_raps(t, b, x0, 1, 300, {4, 2}).z != run_raps(t, b, x0, 1, 300, {4, 3}).z);
}

TEST_CASE("coordinates evolve independently") {
  CounterRng g(6);
  const Topology t = build_random_strongly_connected(5, 0.5, g);
  const FaultBounds b{3, 3, 3, 0.5, 0.3};
  const std::vector<double> xa{1, 2, 3, 4, 5}, xb{-3, 0, 7, 1, 1};
  std::vector<double> x2;
  for (int i = 0; i < 5; ++i) {
    x2.push_back(xa[i]);
    x2.push_back(xb[i]);
  }
  const RapsResult a = run_raps(t, b, xa, 1, 300, {2, 2});
  const RapsResult bb = run_raps(t, b, xb, 1, 300, {2, 2});
  const RapsResult both = run_raps(t, b, x2, 2, 300, {2, 2});
  for (Slot k = 0; k <= 300; ++k) {
    for (NodeId i = 0; i < 5; ++i) {
      CHECK(both.z_at(k, i, 0) == a.z_at(k, i));
      CHECK(both.z_at(k, i, 1) == bb.z_at(k, i));
    }
  }
}

TEST_CASE("trace invariants: positive weights and monotone running sums") {
  CounterRng g(8);
  const Topology t = build_random_strongly_connected(5, 0.5, g);
  const std::vector<double> x0{1, 2, 3, 4, 5};
  RapsOptions o;
  o.record_trace = true;
  const RapsResult r = run_raps(t, {3, 3, 3, 0.5, 0.3}, x0, 1, 500, {9, 0}, o);
  const StateTrace& tr = *r.trace;
  for (Slot k = 0; k < tr.slots; ++k) {
    for (NodeId i = 0; i < 5; ++i) {
      CHECK(tr.y_at(k, i) > 0.0);
      CHECK(tr.z_at(k, i, 0) == doctest::Approx(tr.x_at(k, i, 0) / tr.y_at(k, i)).epsilon(1e-12));
      if (k > 0) CHECK(tr.phi_y_at(k, i) >= tr.phi_y_at(k - 1, i));
    }
    for (ArcId e = 0; e < t.arc_count(); ++e) {
      if (k > 0) CHECK(tr.rho_y_at(k, e) >= tr.rho_y_at(k - 1, e));
    }
  }
  std::ostringstream os;
  tr.write_csv(os);
  CHECK(os.str().rfind("slot,kind,id,coord,value_x,value_y,phi_x,phi_y\n", 0) == 0);
}
