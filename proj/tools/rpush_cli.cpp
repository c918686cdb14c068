// Command-line driver for robust push-sum experiments.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rpush/errors.hpp"
#include "rpush/harness.hpp"
#include "rpush/oracle.hpp"
#include "rpush/raps.hpp"

namespace {

using namespace rpush;

constexpr int kExitVerification = 1;
constexpr int kExitConfig = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> runs;
  std::optional<Slot> horizon;
  std::optional<std::uint64_t> run;
  bool verify = false;
  std::size_t threads = 0;
};

ExperimentConfig load_config(const Flags& f) {
  ExperimentConfig c = ExperimentConfig::load(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.output_dir = *f.out;
  if (f.runs) c.runs = *f.runs;
  if (f.horizon) c.horizon = *f.horizon;
  c.validate();
  return c;
}

int cmd_raps(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  const ExperimentInstance inst = build_instance(c);
  const Topology& t = *inst.topology;
  const std::size_t n = t.size();
  CounterRng xrng(derive_stream_key(c.seed, 0, StreamRole::kInitial));
  std::vector<double> x0(n);
  double mean = 0.0;
  for (auto& v : x0) {
    v = xrng.uniform(-10.0, 10.0);
    mean += v;
  }
  mean /= static_cast<double>(n);
  RapsOptions ro;
  ro.record_trace = f.verify;
  ro.record_schedule = f.verify;
  ro.mask = inst.mask.get();
  const RapsResult r = run_raps(t, c.faults, x0, 1, c.horizon, RunSeed{c.seed, 0}, ro);
  const double target[] = {mean};
  std::cout << "average " << mean << "\nmax deviation at k=" << c.horizon << ": "
            << r.max_deviation(c.horizon, target) << '\n';
  if (f.out) {
    std::filesystem::create_directories(*f.out);
    std::ofstream os(std::filesystem::path(*f.out) / "raps.csv");
    os << "k,node,z\n";
    for (Slot k = 0; k <= c.horizon; ++k) {
      for (NodeId i = 0; i < n; ++i) os << k << ',' << i << ',' << r.z_at(k, i) << '\n';
    }
  }
  if (f.verify) {
    CrossValidateOptions cv;
    cv.fixed_graph = inst.mask == nullptr;
    const VerificationReport rep = cross_validate(t, c.faults, *r.trace, *r.schedule, cv);
    rep.write(std::cout);
    if (!rep.ok()) return kExitVerification;
  }
  return 0;
}

int cmd_rasgp(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  ExperimentOptions opts;
  opts.verify = f.verify;
  opts.threads = f.threads;
  opts.log = &std::cerr;
  const ExperimentResult r = run_experiment(c, opts);
  std::cout << "wrote " << (std::filesystem::path(c.output_dir) / "errors.csv").string() << " and k_errors.csv\n";
  if (!r.k_e_dist.median.empty()) {
    std::cout << "final window: k*E_dist " << r.k_e_dist.median.back() << ", k*E_c " << r.k_e_c.median.back()
              << '\n';
  }
  return 0;
}

int cmd_verify(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  const std::size_t runs = f.runs.value_or(c.runs);
  const CampaignResult r = verify_campaign(c, runs, c.horizon);
  r.worst.write(std::cout);
  std::cout << r.runs - r.failures << '/' << r.runs << " runs verified\n";
  return r.failures == 0 ? 0 : kExitVerification;
}

int cmd_ratio(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  ExperimentOptions opts;
  opts.verify = f.verify;
  opts.threads = f.threads;
  opts.log = &std::cerr;
  const auto rows = ratio_study(c, opts);
  write_ratio_csv(std::cout, rows);
  return 0;
}

int cmd_replay(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  ExperimentOptions opts;
  opts.verify = f.verify;
  opts.threads = f.threads;
  if (f.run) opts.only_runs = {*f.run};
  run_experiment(c, opts);
  std::cout << "replayed into " << c.output_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust asynchronous push-sum and stochastic gradient-push experiments"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", flags.seed, "master seed override");
    sub->add_option("--out", flags.out, "output directory override");
    sub->add_option("--runs", flags.runs, "Monte Carlo runs override");
    sub->add_option("--horizon", flags.horizon, "number of slots override");
    sub->add_flag("--verify", flags.verify, "cross-validate every run against the linear oracle");
    sub->add_option("--threads", flags.threads, "worker threads (0 = all cores)");
  };
  CLI::App* raps = app.add_subcommand("raps", "push-sum averaging demo");
  CLI::App* rasgp = app.add_subcommand("rasgp", "optimization experiment");
  CLI::App* verify = app.add_subcommand("verify", "oracle cross-validation campaign");
  CLI::App* ratio = app.add_subcommand("ratio", "E_c / E_dist over network size");
  CLI::App* replay = app.add_subcommand("replay", "re-run a recorded (seed, config)");
  for (CLI::App* s : {raps, rasgp, verify, ratio, replay}) add_common(s);
  replay->add_option("--run", flags.run, "replay a single run index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*raps) return cmd_raps(flags);
    if (*rasgp) return cmd_rasgp(flags);
    if (*verify) return cmd_verify(flags);
    if (*ratio) return cmd_ratio(flags);
    if (*replay) return cmd_replay(flags);
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failure: " << e.what() << '\n';
    return kExitVerification;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TopologyError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return kExitConfig;
}
