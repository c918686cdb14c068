#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rpush/faultnet.hpp"
#include "rpush/graph.hpp"
#include "rpush/rng.hpp"

namespace rpush {

/// Sum of local objectives f_1..f_n over R^dim.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t nodes() const = 0;
  virtual std::size_t dim() const = 0;
  virtual double local_value(NodeId i, std::span<const double> z) const = 0;
  virtual void local_gradient(NodeId i, std::span<const double> z, std::span<double> g) const = 0;
  /// Strong convexity and gradient Lipschitz constants of f_i.
  virtual double mu(NodeId i) const = 0;
  virtual double lipschitz(NodeId i) const = 0;

  double total_mu() const;
  double total_lipschitz() const;
  double value(std::span<const double> z) const;
  /// Gradient of F = sum_i f_i.
  void gradient(std::span<const double> z, std::span<double> g) const;
};

/// f_i(z) = (mu_i / 2) ||z - c_i||^2.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(std::vector<double> mu, std::vector<double> centers, std::size_t dim);

  /// mu_i uniform on [mu_min, mu_max], centers uniform on [-spread, spread]^dim.
  static QuadraticObjective generate(std::size_t n, std::size_t dim, double mu_min, double mu_max, double spread,
                                     CounterRng& rng);

  std::size_t nodes() const override { return mu_.size(); }
  std::size_t dim() const override { return dim_; }
  double local_value(NodeId i, std::span<const double> z) const override;
  void local_gradient(NodeId i, std::span<const double> z, std::span<double> g) const override;
  double mu(NodeId i) const override { return mu_[i]; }
  double lipschitz(NodeId i) const override { return mu_[i]; }

  std::span<const double> center(NodeId i) const { return {centers_.data() + i * dim_, dim_}; }
  /// sum_i mu_i c_i / sum_i mu_i.
  std::vector<double> optimum() const;

 private:
  std::vector<double> mu_;
  std::vector<double> centers_;
  std::size_t dim_;
};

/// h(xi) = 0.5 - xi (xi <= 0), 0.5 (1 - xi)^2 (0 < xi < 1), 0 (xi >= 1).
double smoothed_hinge(double xi) noexcept;
double smoothed_hinge_derivative(double xi) noexcept;

struct SvmPoint {
  std::array<double, 2> features;
  double label;  // -1 or +1
};

/// Node-major labeled points, `per_node` consecutive points per node.
struct SvmDataset {
  std::size_t nodes = 0;
  std::size_t per_node = 0;
  std::vector<SvmPoint> points;

  std::span<const SvmPoint> block(NodeId i) const { return {points.data() + i * per_node, per_node}; }

  /// CSV "node,feature1,feature2,label".
  void write_csv(std::ostream& os) const;
  static SvmDataset read_csv(std::istream& is);
};

inline constexpr std::size_t kSvmPointsPerCluster = 25;

/// Per node 25 points around (1,1) labeled -1 then 25 around (3,3) labeled
/// +1, unit covariance.
SvmDataset generate_svm_dataset(std::size_t n, CounterRng& rng);

/// f_i(w, g) = (||w||^2 + g^2) / (2n) + C_N sum_{j in D_i} h(b_j (A_j^T w + g)),
/// C_N = c / N. The decision variable is (w1, w2, g).
class SvmObjective final : public Objective {
 public:
  explicit SvmObjective(SvmDataset data, double c = 500.0);

  std::size_t nodes() const override { return data_.nodes; }
  std::size_t dim() const override { return 3; }
  double local_value(NodeId i, std::span<const double> z) const override;
  void local_gradient(NodeId i, std::span<const double> z, std::span<double> g) const override;
  double mu(NodeId) const override { return 1.0 / static_cast<double>(data_.nodes); }
  double lipschitz(NodeId i) const override { return lipschitz_[i]; }

  double c_n() const noexcept { return c_n_; }
  const SvmDataset& data() const noexcept { return data_; }

 private:
  SvmDataset data_;
  double c_n_;
  std::vector<double> lipschitz_;
};

/// Independent per-coordinate noise, uniform on [-width/2, width/2).
struct NoiseModel {
  double width = 0.0;

  void sample(CounterRng& rng, std::span<double> out) const;
  /// E||eps||^2 = dim width^2 / 12.
  double variance(std::size_t dim) const { return static_cast<double>(dim) * width * width / 12.0; }
  /// ||eps||_2 <= width sqrt(dim) / 2.
  double norm_bound(std::size_t dim) const;
};

/// Local gradient plus one noise draw.
void noisy_gradient(const Objective& f, NodeId i, std::span<const double> z, const NoiseModel& noise,
                    CounterRng& rng, std::span<double> g);

struct ReferenceOptimum {
  std::vector<double> z;
  double gradient_norm = 0.0;  // recomputed ||grad F(z)||
  std::size_t iterations = 0;

  /// One line of the vector, then "gradient_norm <value>".
  void write(std::ostream& os) const;
  static ReferenceOptimum read(std::istream& is);
};

inline constexpr double kReferenceTolerance = 1e-10;
inline constexpr std::size_t kReferenceMaxIterations = 1000000;

/// Closed form for quadratics; otherwise accelerated gradient descent with
/// adaptive restart until ||grad F|| <= kReferenceTolerance. Throws
/// SolverError when the iteration cap is hit.
ReferenceOptimum solve_reference_optimum(const Objective& f);

struct CentralizedOptions {
  Slot horizon = 0;
  int period = 1;  // updates at k >= 1 with k % period == 0
  Slot k0 = 0;
  /// Per-coordinate width of the uniform noise on the summed gradient.
  double noise_width = 0.0;
  /// Starting point; empty means all ones.
  std::vector<double> initial;
};

/// x(k) for k = 0..horizon; observe(k, x) runs for every slot.
/// Step size period / (mu (k + k0)) with mu = f.total_mu().
void centralized_baseline(const Objective& f, const CentralizedOptions& options, CounterRng& rng,
                          const std::function<void(Slot, std::span<const double>)>& observe);

/// Convenience form returning the (horizon + 1) x dim trajectory.
std::vector<double> centralized_trajectory(const Objective& f, const CentralizedOptions& options, CounterRng& rng);

}  // namespace rpush
