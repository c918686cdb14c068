#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rpush/errors.hpp"
#include "rpush/objectives.hpp"

using namespace rpush;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Central differences with step 1e-6.
std::vector<double> fd_gradient(const Objective& f, NodeId i, std::vector<double> z) {
  std::vector<double> g(z.size());
  const double h = 1e-6;
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double keep = z[c];
    z[c] = keep + h;
    const double up = f.local_value(i, z);
    z[c] = keep - h;
    const double down = f.local_value(i, z);
    z[c] = keep;
    g[c] = (up - down) / (2 * h);
  }
  return g;
}

SvmObjective small_svm(std::uint64_t seed, std::size_t n) {
  CounterRng rng(seed);
  return SvmObjective(generate_svm_dataset(n, rng));
}

}  // namespace

TEST_CASE("smoothed hinge branches") {
  CHECK(smoothed_hinge(2.0) == 0.0);
  CHECK(smoothed_hinge_derivative(2.0) == 0.0);
  CHECK(smoothed_hinge(0.5) == 0.125);
  CHECK(smoothed_hinge_derivative(0.5) == -0.5);
  CHECK(smoothed_hinge(-1.0) == 1.5);
  CHECK(smoothed_hinge_derivative(-3.0) == -1.0);
}

TEST_CASE("smoothed hinge is C1 at 0 and at 1") {
  const double eps = 1e-12;
  CHECK(smoothed_hinge(0.0) == 0.5);
  CHECK(smoothed_hinge(eps) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(smoothed_hinge(-eps) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(smoothed_hinge_derivative(eps) == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(smoothed_hinge_derivative(0.0) == -1.0);
  CHECK(smoothed_hinge(1.0 - eps) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(smoothed_hinge_derivative(1.0 - eps) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("quadratic gradient vanishes at its center and optimum is the weighted mean") {
  const QuadraticObjective q({1.0, 3.0}, {0.0, 4.0}, 1);
  std::vector<double> g(1);
  const double c1[] = {4.0};
  q.local_gradient(1, c1, g);
  CHECK(g[0] == 0.0);
  CHECK(q.optimum()[0] == 3.0);
  const QuadraticObjective same({2.0, 5.0, 1.0}, {1, -2, 1, -2, 1, -2}, 2);
  CHECK(same.optimum() == std::vector<double>{1.0, -2.0});
  const ReferenceOptimum r = solve_reference_optimum(q);
  CHECK(r.z[0] == 3.0);
  CHECK(r.gradient_norm == 0.0);
}

TEST_CASE("quadratic constructor validation") {
  CHECK_THROWS_AS(QuadraticObjective({1.0, 0.0}, {0, 0}, 1), ConfigError);
  CHECK_THROWS_AS(QuadraticObjective({1.0}, {0, 0}, 1), ConfigError);
}

TEST_CASE("SVM gradient with inactive hinge is the regularizer") {
  SvmDataset d;
  d.nodes = 2;
  d.per_node = 1;
  d.points = {{{1.0, 1.0}, 1.0}, {{-1.0, -1.0}, -1.0}};
  const SvmObjective f(d);
  const std::vector<double> z{2.0, 2.0, 1.0};  // margins 5 >= 1
  std::vector<double> g(3);
  f.local_gradient(0, z, g);
  CHECK(g == std::vector<double>{1.0, 1.0, 0.5});
  CHECK(f.c_n() == 250.0);
  CHECK(f.mu(0) == 0.5);
}

TEST_CASE("analytic gradients match finite differences at 100 random points") {
  const SvmObjective svm = small_svm(3, 4);
  CounterRng rng(100);
  const QuadraticObjective quad = QuadraticObjective::generate(4, 3, 0.5, 3.0, 4.0, rng);
  for (const Objective* f : {static_cast<const Objective*>(&svm), static_cast<const Objective*>(&quad)}) {
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> z(f->dim());
      for (auto& v : z) v = rng.uniform(-2.0, 2.0);
      const NodeId i = static_cast<NodeId>(rng.uniform_int(0, 3));
      std::vector<double> g(f->dim());
      f->local_gradient(i, z, g);
      const auto fd = fd_gradient(*f, i, z);
      for (std::size_t c = 0; c < z.size(); ++c) CHECK(rel_err(g[c], fd[c]) <= 1e-5);
      ++checked;
    }
    CHECK(checked == 100);
  }
}

TEST_CASE("strong convexity and Lipschitz witnesses") {
  const SvmObjective svm = small_svm(5, 3);
  CounterRng rng(7);
  const QuadraticObjective quad = QuadraticObjective::generate(3, 2, 0.5, 2.0, 3.0, rng);
  for (const Objective* f : {static_cast<const Objective*>(&svm), static_cast<const Objective*>(&quad)}) {
    const std::size_t d = f->dim();
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> a(d), b(d), ga(d), gb(d);
      for (auto& v : a) v = rng.uniform(-3.0, 3.0);
      for (auto& v : b) v = rng.uniform(-3.0, 3.0);
      f->gradient(a, ga);
      f->gradient(b, gb);
      double inner = 0.0, dist2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        inner += (ga[c] - gb[c]) * (a[c] - b[c]);
        dist2 += (a[c] - b[c]) * (a[c] - b[c]);
      }
      CHECK(inner >= f->total_mu() * dist2 * (1 - 1e-12));
      for (NodeId i = 0; i < f->nodes(); ++i) {
        f->local_gradient(i, a, ga);
        f->local_gradient(i, b, gb);
        double diff2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) diff2 += (ga[c] - gb[c]) * (ga[c] - gb[c]);
        CHECK(std::sqrt(diff2) <= f->lipschitz(i) * std::sqrt(dist2) * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("noise moments and support") {
  const NoiseModel noise{4.0};
  CounterRng rng(123);
  const std::size_t draws = 1000000;
  double sum = 0.0, sum2 = 0.0, worst = 0.0;
  double e[1];
  for (std::size_t q = 0; q < draws; ++q) {
    noise.sample(rng, e);
    sum += e[0];
    sum2 += e[0] * e[0];
    worst = std::max(worst, std::abs(e[0]));
  }
  const double mean = sum / draws;
  const double var = sum2 / draws - mean * mean;
  CHECK(std::abs(var - 16.0 / 12.0) <= 0.01 * 16.0 / 12.0);
  CHECK(std::abs(mean) <= 4.0 * std::sqrt(16.0 / 12.0 / draws));
  CHECK(worst < 2.0);
  CHECK(noise.variance(3) == doctest::Approx(3 * 16.0 / 12.0));
  CHECK(noise.norm_bound(4) == 4.0);
}

TEST_CASE("zero-width noise returns the exact gradient") {
  const QuadraticObjective q({2.0}, {1.0, 1.0}, 2);
  CounterRng rng(1);
  std::vector<double> g(2);
  const double z[] = {3.0, 0.0};
  noisy_gradient(q, 0, z, NoiseModel{0.0}, rng, g);
  CHECK(g == std::vector<double>{4.0, -2.0});
  CHECK(rng.counter() == 0);
}

TEST_CASE("SVM dataset shape and determinism") {
  CounterRng a(7), b(7);
  const SvmDataset one = generate_svm_dataset(1, a);
  CHECK(one.points.size() == 50);
  int neg = 0;
  for (const auto& p : one.points) neg += p.label < 0;
  CHECK(neg == 25);
  const SvmDataset big = generate_svm_dataset(50, b);
  CHECK(big.points.size() == 2500);
  CHECK(SvmObjective(big).c_n() == doctest::Approx(0.2));
  CounterRng c(7), d(7);
  CHECK(generate_svm_dataset(3, c).points.size() == generate_svm_dataset(3, d).points.size());
  CounterRng e(7);
  const SvmDataset again = generate_svm_dataset(1, e);
  for (std::size_t q = 0; q < 50; ++q) CHECK(again.points[q].features == one.points[q].features);
}

TEST_CASE("dataset CSV round trip") {
  CounterRng rng(2);
  const SvmDataset d = generate_svm_dataset(3, rng);
  std::stringstream ss;
  d.write_csv(ss);
  const SvmDataset r = SvmDataset::read_csv(ss);
  CHECK(r.nodes == 3);
  CHECK(r.per_node == 50);
  for (std::size_t q = 0; q < d.points.size(); ++q) {
    CHECK(r.points[q].features == d.points[q].features);
    CHECK(r.points[q].label == d.points[q].label);
  }
}

TEST_CASE("SVM reference optimum is certified by an independent gradient") {
  CounterRng rng(7);
  const SvmObjective f(generate_svm_dataset(10, rng));
  const ReferenceOptimum r = solve_reference_optimum(f);
  // recompute grad F from scratch, point by point
  const auto& data = f.data();
  std::vector<double> g{r.z[0], r.z[1], r.z[2]};  // n regularizers of weight 1/n
  for (const auto& p : data.points) {
    const double xi = p.label * (p.features[0] * r.z[0] + p.features[1] * r.z[1] + r.z[2]);
    const double h = xi <= 0 ? -1.0 : (xi < 1 ? xi - 1.0 : 0.0);
    g[0] += f.c_n() * h * p.label * p.features[0];
    g[1] += f.c_n() * h * p.label * p.features[1];
    g[2] += f.c_n() * h * p.label;
  }
  const double norm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
  CHECK(norm <= 1e-10);
  CHECK(r.gradient_norm <= 1e-10);
  std::stringstream ss;
  r.write(ss);
  const ReferenceOptimum back = ReferenceOptimum::read(ss);
  CHECK(back.z == r.z);
  CHECK(back.gradient_norm == r.gradient_norm);
}

TEST_CASE("centralized baseline without noise converges to the optimum") {
  const QuadraticObjective q({1.0, 2.0, 3.0}, {0.0, 1.0, 5.0}, 1);
  CentralizedOptions o;
  o.horizon = 2000;
  CounterRng rng(1);
  const auto traj = centralized_trajectory(q, o, rng);
  CHECK(traj.size() == 2001);
  CHECK(traj[0] == 1.0);
  CHECK(std::abs(traj.back() - q.optimum()[0]) < 1e-6);
  // with period 3 the iterate only moves on multiples of 3
  o.period = 3;
  CounterRng rng2(1);
  const auto p3 = centralized_trajectory(q, o, rng2);
  CHECK(p3[1] == p3[0]);
  CHECK(p3[2] == p3[0]);
  CHECK(p3[3] != p3[0]);
  CHECK(p3[4] == p3[3]);
}

TEST_CASE("centralized noise variance is n d b^2 / 12") {
  const std::size_t n = 10, d = 2;
  const double b = 4.0;
  const NoiseModel central{std::sqrt(static_cast<double>(n)) * b};
  CounterRng rng(55);
  double sum2 = 0.0;
  const std::size_t draws = 200000;
  std::vector<double> e(d);
  for (std::size_t q = 0; q < draws; ++q) {
    central.sample(rng, e);
    sum2 += e[0] * e[0] + e[1] * e[1];
  }
  CHECK(sum2 / draws == doctest::Approx(n * d * b * b / 12.0).epsilon(0.02));
}
