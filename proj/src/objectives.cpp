#include "rpush/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rpush/errors.hpp"

namespace rpush {

double Objective::total_mu() const {
  double s = 0.0;
  for (NodeId i = 0; i < nodes(); ++i) s += mu(i);
  return s;
}

double Objective::total_lipschitz() const {
  double s = 0.0;
  for (NodeId i = 0; i < nodes(); ++i) s += lipschitz(i);
  return s;
}

double Objective::value(std::span<const double> z) const {
  double s = 0.0;
  for (NodeId i = 0; i < nodes(); ++i) s += local_value(i, z);
  return s;
}

void Objective::gradient(std::span<const double> z, std::span<double> g) const {
  std::vector<double> gi(dim());
  std::fill(g.begin(), g.end(), 0.0);
  for (NodeId i = 0; i < nodes(); ++i) {
    local_gradient(i, z, gi);
    for (std::size_t c = 0; c < dim(); ++c) g[c] += gi[c];
  }
}

QuadraticObjective::QuadraticObjective(std::vector<double> mu, std::vector<double> centers, std::size_t dim)
    : mu_(std::move(mu)), centers_(std::move(centers)), dim_(dim) {
  if (mu_.empty() || dim_ == 0) throw ConfigError("quadratic objective needs at least one node and dimension");
  if (centers_.size() != mu_.size() * dim_) throw ConfigError("quadratic centers must be n x dim");
  for (double m : mu_) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("quadratic mu_i must be positive and finite");
  }
}

QuadraticObjective QuadraticObjective::generate(std::size_t n, std::size_t dim, double mu_min, double mu_max,
                                                double spread, CounterRng& rng) {
  if (!(mu_min > 0.0) || mu_max < mu_min) throw ConfigError("need 0 < mu_min <= mu_max");
  std::vector<double> mu(n), centers(n * dim);
  for (auto& m : mu) m = mu_min == mu_max ? mu_min : rng.uniform(mu_min, mu_max);
  for (auto& c : centers) c = rng.uniform(-spread, spread);
  return QuadraticObjective(std::move(mu), std::move(centers), dim);
}

double QuadraticObjective::local_value(NodeId i, std::span<const double> z) const {
  double s = 0.0;
  for (std::size_t c = 0; c < dim_; ++c) {
    const double d = z[c] - centers_[i * dim_ + c];
    s += d * d;
  }
  return 0.5 * mu_[i] * s;
}

void QuadraticObjective::local_gradient(NodeId i, std::span<const double> z, std::span<double> g) const {
  for (std::size_t c = 0; c < dim_; ++c) g[c] = mu_[i] * (z[c] - centers_[i * dim_ + c]);
}

std::vector<double> QuadraticObjective::optimum() const {
  std::vector<double> z(dim_, 0.0);
  double total = 0.0;
  for (NodeId i = 0; i < mu_.size(); ++i) {
    total += mu_[i];
    for (std::size_t c = 0; c < dim_; ++c) z[c] += mu_[i] * centers_[i * dim_ + c];
  }
  for (auto& v : z) v /= total;
  return z;
}

double smoothed_hinge(double xi) noexcept {
  if (xi <= 0.0) return 0.5 - xi;
  if (xi < 1.0) return 0.5 * (1.0 - xi) * (1.0 - xi);
  return 0.0;
}

double smoothed_hinge_derivative(double xi) noexcept {
  if (xi <= 0.0) return -1.0;
  if (xi < 1.0) return xi - 1.0;
  return 0.0;
}

void SvmDataset::write_csv(std::ostream& os) const {
  os << "node,feature1,feature2,label\n" << std::setprecision(17);
  for (NodeId i = 0; i < nodes; ++i) {
    for (const SvmPoint& p : block(i)) {
      os << i << ',' << p.features[0] << ',' << p.features[1] << ',' << (p.label > 0 ? 1 : -1) << '\n';
    }
  }
}

SvmDataset SvmDataset::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "node,feature1,feature2,label") {
    throw ConfigError("dataset file must start with header node,feature1,feature2,label");
  }
  std::vector<std::vector<SvmPoint>> blocks;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c, d;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c, ',') ||
        !std::getline(ls, d)) {
      throw ConfigError("malformed dataset row: " + line);
    }
    const std::size_t node = std::stoul(a);
    if (node >= blocks.size()) blocks.resize(node + 1);
    blocks[node].push_back({{std::stod(b), std::stod(c)}, std::stod(d) > 0 ? 1.0 : -1.0});
  }
  SvmDataset out;
  out.nodes = blocks.size();
  out.per_node = blocks.empty() ? 0 : blocks.front().size();
  for (const auto& blk : blocks) {
    if (blk.size() != out.per_node) throw ConfigError("dataset blocks differ in size");
    out.points.insert(out.points.end(), blk.begin(), blk.end());
  }
  return out;
}

SvmDataset generate_svm_dataset(std::size_t n, CounterRng& rng) {
  if (n < 1) throw ConfigError("dataset needs at least one node");
  SvmDataset d;
  d.nodes = n;
  d.per_node = 2 * kSvmPointsPerCluster;
  d.points.reserve(n * d.per_node);
  for (NodeId i = 0; i < n; ++i) {
    for (const auto& [mean, label] : {std::pair{1.0, -1.0}, std::pair{3.0, 1.0}}) {
      for (std::size_t q = 0; q < kSvmPointsPerCluster; ++q) {
        const double f1 = mean + rng.normal();
        const double f2 = mean + rng.normal();
        d.points.push_back({{f1, f2}, label});
      }
    }
  }
  return d;
}

SvmObjective::SvmObjective(SvmDataset data, double c) : data_(std::move(data)) {
  if (data_.nodes == 0 || data_.per_node == 0) throw ConfigError("SVM objective needs data");
  c_n_ = c / static_cast<double>(data_.points.size());
  lipschitz_.resize(data_.nodes);
  for (NodeId i = 0; i < data_.nodes; ++i) {
    double s = 0.0;
    for (const SvmPoint& p : data_.block(i)) s += p.features[0] * p.features[0] + p.features[1] * p.features[1] + 1.0;
    lipschitz_[i] = 1.0 / static_cast<double>(data_.nodes) + c_n_ * s;
  }
}

double SvmObjective::local_value(NodeId i, std::span<const double> z) const {
  const double inv_n = 1.0 / static_cast<double>(data_.nodes);
  double loss = 0.0;
  for (const SvmPoint& p : data_.block(i)) {
    loss += smoothed_hinge(p.label * (p.features[0] * z[0] + p.features[1] * z[1] + z[2]));
  }
  return 0.5 * inv_n * (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]) + c_n_ * loss;
}

void SvmObjective::local_gradient(NodeId i, std::span<const double> z, std::span<double> g) const {
  const double inv_n = 1.0 / static_cast<double>(data_.nodes);
  double g0 = 0.0, g1 = 0.0, g2 = 0.0;
  for (const SvmPoint& p : data_.block(i)) {
    const double h = smoothed_hinge_derivative(p.label * (p.features[0] * z[0] + p.features[1] * z[1] + z[2]));
    if (h == 0.0) continue;
    const double w = h * p.label;
    g0 += w * p.features[0];
    g1 += w * p.features[1];
    g2 += w;
  }
  g[0] = z[0] * inv_n + c_n_ * g0;
  g[1] = z[1] * inv_n + c_n_ * g1;
  g[2] = z[2] * inv_n + c_n_ * g2;
}

void NoiseModel::sample(CounterRng& rng, std::span<double> out) const {
  const double half = 0.5 * width;
  for (auto& v : out) v = width == 0.0 ? 0.0 : rng.uniform(-half, half);
}

double NoiseModel::norm_bound(std::size_t dim) const { return 0.5 * width * std::sqrt(static_cast<double>(dim)); }

void noisy_gradient(const Objective& f, NodeId i, std::span<const double> z, const NoiseModel& noise,
                    CounterRng& rng, std::span<double> g) {
  f.local_gradient(i, z, g);
  if (noise.width == 0.0) return;
  const double half = 0.5 * noise.width;
  for (auto& v : g) v += rng.uniform(-half, half);
}

void ReferenceOptimum::write(std::ostream& os) const {
  os << std::setprecision(17);
  for (std::size_t c = 0; c < z.size(); ++c) os << (c ? " " : "") << z[c];
  os << "\ngradient_norm " << gradient_norm << '\n';
}

ReferenceOptimum ReferenceOptimum::read(std::istream& is) {
  ReferenceOptimum r;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty optimum file");
  std::istringstream ls(line);
  double v;
  while (ls >> v) r.z.push_back(v);
  std::string tag;
  if (!(is >> tag >> r.gradient_norm) || tag != "gradient_norm") {
    throw ConfigError("optimum file lacks the gradient_norm certificate line");
  }
  return r;
}

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

ReferenceOptimum solve_reference_optimum(const Objective& f) {
  const std::size_t d = f.dim();
  ReferenceOptimum r;
  std::vector<double> g(d);
  if (const auto* q = dynamic_cast<const QuadraticObjective*>(&f)) {
    r.z = q->optimum();
    f.gradient(r.z, g);
    r.gradient_norm = norm2(g);
    return r;
  }
  // Nesterov momentum with gradient-based restart, step 1 / L where L bounds
  // the Lipschitz constant of grad F.
  const double step = 1.0 / f.total_lipschitz();
  std::vector<double> x(d, 0.0), x_prev(d, 0.0), y(d, 0.0), gy(d);
  double t = 1.0;
  for (std::size_t it = 0; it < kReferenceMaxIterations; ++it) {
    f.gradient(x, g);
    if (norm2(g) <= kReferenceTolerance) {
      r.z = x;
      r.iterations = it;
      f.gradient(r.z, g);
      r.gradient_norm = norm2(g);
      return r;
    }
    f.gradient(y, gy);
    x_prev = x;
    for (std::size_t c = 0; c < d; ++c) x[c] = y[c] - step * gy[c];
    double restart = 0.0;
    for (std::size_t c = 0; c < d; ++c) restart += gy[c] * (x[c] - x_prev[c]);
    if (restart > 0.0) {
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double mom = (t - 1.0) / t_next;
    for (std::size_t c = 0; c < d; ++c) y[c] = x[c] + mom * (x[c] - x_prev[c]);
    t = t_next;
  }
  std::ostringstream os;
  os << "reference solver did not reach gradient norm " << kReferenceTolerance << " within "
     << kReferenceMaxIterations << " iterations";
  throw SolverError(os.str());
}

void centralized_baseline(const Objective& f, const CentralizedOptions& options, CounterRng& rng,
                          const std::function<void(Slot, std::span<const double>)>& observe) {
  const std::size_t d = f.dim();
  if (options.period < 1) throw ConfigError("centralized period must be >= 1");
  std::vector<double> x = options.initial.empty() ? std::vector<double>(d, 1.0) : options.initial;
  if (x.size() != d) throw ConfigError("centralized initial point has wrong dimension");
  const double mu = f.total_mu();
  const NoiseModel noise{options.noise_width};
  std::vector<double> g(d), eps(d);
  observe(0, x);
  for (Slot k = 1; k <= options.horizon; ++k) {
    if (k % options.period == 0) {
      const double a = static_cast<double>(options.period) / (mu * static_cast<double>(k + options.k0));
      f.gradient(x, g);
      noise.sample(rng, eps);
      for (std::size_t c = 0; c < d; ++c) {
        x[c] -= a * (g[c] + eps[c]);
        if (!std::isfinite(x[c])) {
          throw NumericError("centralized iterate became non-finite at slot " + std::to_string(k));
        }
      }
    }
    observe(k, x);
  }
}

std::vector<double> centralized_trajectory(const Objective& f, const CentralizedOptions& options,
                                           CounterRng& rng) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(options.horizon + 1) * f.dim());
  centralized_baseline(f, options, rng,
                       [&](Slot, std::span<const double> x) { out.insert(out.end(), x.begin(), x.end()); });
  return out;
}

}  // namespace rpush
