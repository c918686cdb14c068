#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpush/faultnet.hpp"
#include "rpush/graph.hpp"
#include "rpush/objectives.hpp"
#include "rpush/oracle.hpp"
#include "rpush/rasgp.hpp"

namespace rpush {

struct TopologySpec {
  std::string kind = "cycle";  // cycle | random
  std::size_t n = 2;
  bool bidirectional = true;
  double p = 0.5;
};

struct ObjectiveSpec {
  std::string kind = "quadratic";  // quadratic | svm
  double c = 500.0;
  // quadratic: explicit mu and centers (n x dim) or generated ones
  std::vector<double> mu;
  std::vector<double> centers;
  std::size_t dim = 2;
  double mu_min = 1.0, mu_max = 1.0;
  double center_spread = 1.0;
};

struct TimeVaryingSpec {
  int window = 0;  // 0 disables the arc mask
  double extra_prob = 0.0;
};

struct RatioSpec {
  std::vector<std::size_t> nodes;
  std::vector<Slot> checkpoints;
};

/// Closed JSON schema; unknown keys are configuration errors.
struct ExperimentConfig {
  TopologySpec topology;
  FaultBounds faults{1, 0, 1, 1.0, 0.0};
  ObjectiveSpec objective;
  double noise_width = 0.0;
  Slot horizon = 100;
  std::size_t runs = 1;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  Slot k0 = 0;
  std::vector<double> initial;
  std::string output_dir = "out";
  TimeVaryingSpec time_varying;
  Slot window = 100;
  bool write_raw = true;
  RatioSpec ratio;

  static ExperimentConfig parse(const std::string& json_text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_json() const;
  void validate() const;
};

/// Everything shared by the runs of one experiment: graph, objective, optimum.
struct ExperimentInstance {
  std::unique_ptr<Topology> topology;
  std::unique_ptr<Objective> objective;
  std::optional<SvmDataset> dataset;
  ReferenceOptimum optimum;
  std::unique_ptr<ArcMask> mask;

  /// Per-coordinate noise width of the centralized baseline (sqrt(n) b).
  double central_noise_width = 0.0;
};

/// Topology, dataset and optimum come from the master seed only (run 0
/// streams), so every run of the experiment sees the same instance.
ExperimentInstance build_instance(const ExperimentConfig& config);

/// Squared-error series of one paired run, slots 0..horizon.
struct RunSeries {
  std::vector<double> e_dist;
  std::vector<double> e_c;

  /// CSV "k,E_dist,E_c" with 17 significant digits.
  void write_csv(std::ostream& os) const;
  static RunSeries read_csv(std::istream& is);
};

struct RunOptions {
  bool verify = false;
};

/// One paired run: RASGP and the centralized baseline with independent
/// streams derived from (seed, run). Throws VerificationFailure when
/// verification is requested and a residual exceeds tolerance.
RunSeries run_paired(const ExperimentConfig& config, const ExperimentInstance& inst, std::uint64_t run,
                     const RunOptions& options = {}, VerificationReport* report = nullptr);

/// Window means of batch means, reduced across batches.
struct WindowedSeries {
  std::vector<Slot> k;          // last slot of each window
  std::vector<double> median;   // element-wise median across batches
  std::vector<double> stddev;   // sample standard deviation across batches
};

/// Mean of equally long series, summed in index order.
std::vector<double> batch_mean(std::span<const std::vector<double>> runs);

/// Non-overlapping means over windows of `window` slots starting at
/// `first_slot`; a trailing partial window is averaged over its own length.
std::vector<double> window_means(std::span<const double> series, Slot window, Slot first_slot);

/// Element-wise median and standard deviation of per-batch window means.
WindowedSeries reduce_batches(std::span<const std::vector<double>> batch_windows, Slot window, Slot first_slot,
                              Slot last_slot);

/// Full pipeline: batches of `batch_size` consecutive runs (the last batch
/// may be shorter) -> batch mean -> window means -> median across batches.
WindowedSeries aggregate_series(std::span<const std::vector<double>> runs, std::size_t batch_size,
                                Slot window = 100, Slot first_slot = 1);

/// k * series[k].
std::vector<double> scale_by_slot(std::span<const double> series);

struct ExperimentResult {
  WindowedSeries e_dist, e_c, k_e_dist, k_e_c;
  std::vector<double> z_star;
};

struct ExperimentOptions {
  bool verify = false;
  std::size_t threads = 0;  // 0 means hardware concurrency
  /// Only these run indices (replay); empty means all.
  std::vector<std::uint64_t> only_runs;
  /// Progress output, may be null.
  std::ostream* log = nullptr;
};

/// Runs the experiment, writes errors.csv, k_errors.csv, errors.svg,
/// manifest.json, dataset/optimum files and (when write_raw) raw/run_NNNN.csv
/// into config.output_dir. On failure writes failure.json with the run index.
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options = {});

/// Re-aggregates persisted raw run files the same way run_experiment does.
ExperimentResult aggregate_raw_directory(const ExperimentConfig& config, const std::filesystem::path& raw_dir);

struct RatioRow {
  std::size_t n;
  Slot k;
  double ratio;
  double ratio_std;
};

/// E_c / E_dist at each checkpoint for each network size on a bidirectional
/// cycle. Window means over (k - window, k] per batch, ratio per batch, then
/// median and standard deviation across batches. Writes ratio.csv.
std::vector<RatioRow> ratio_study(const ExperimentConfig& config, const ExperimentOptions& options = {});

void write_errors_csv(std::ostream& os, const ExperimentResult& r);
void write_k_errors_csv(std::ostream& os, const ExperimentResult& r);
void write_ratio_csv(std::ostream& os, std::span<const RatioRow> rows);
/// Log-log line plot of the two error curves.
void write_svg_plot(std::ostream& os, const ExperimentResult& r);

/// Runs fn(i) for i in [0, count) on a pool of worker threads. The first
/// exception thrown by any task is rethrown after the pool drains.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Oracle campaign: `runs` random instances drawn from the config's fault
/// bounds (n from the topology spec), each cross-validated.
struct CampaignResult {
  std::size_t runs = 0;
  std::size_t failures = 0;
  VerificationReport worst;  // per identity: max residual over all runs
};

CampaignResult verify_campaign(const ExperimentConfig& config, std::size_t runs, Slot horizon);

}  // namespace rpush
