#include "rpush/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rpush/errors.hpp"

namespace rpush {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"topology", "faults", "objective", "noise_width", "horizon", "runs", "batch_size", "seed", "k0",
              "initial", "output_dir", "time_varying", "window", "write_raw", "ratio"},
             "config");
  ExperimentConfig c;
  if (j.contains("topology")) {
    const json& t = j["topology"];
    check_keys(t, {"kind", "n", "bidirectional", "p"}, "topology");
    read_opt(t, "kind", c.topology.kind, "topology");
    read_opt(t, "n", c.topology.n, "topology");
    read_opt(t, "bidirectional", c.topology.bidirectional, "topology");
    read_opt(t, "p", c.topology.p, "topology");
  }
  if (j.contains("faults")) {
    const json& f = j["faults"];
    check_keys(f, {"max_sleep", "max_consecutive_losses", "max_delay", "wake_probability", "loss_probability"},
               "faults");
    read_opt(f, "max_sleep", c.faults.max_sleep, "faults");
    read_opt(f, "max_consecutive_losses", c.faults.max_consecutive_losses, "faults");
    read_opt(f, "max_delay", c.faults.max_delay, "faults");
    read_opt(f, "wake_probability", c.faults.wake_probability, "faults");
    read_opt(f, "loss_probability", c.faults.loss_probability, "faults");
  }
  if (j.contains("objective")) {
    const json& o = j["objective"];
    check_keys(o, {"kind", "c", "mu", "centers", "dim", "mu_min", "mu_max", "center_spread"}, "objective");
    read_opt(o, "kind", c.objective.kind, "objective");
    read_opt(o, "c", c.objective.c, "objective");
    read_opt(o, "mu", c.objective.mu, "objective");
    read_opt(o, "dim", c.objective.dim, "objective");
    read_opt(o, "mu_min", c.objective.mu_min, "objective");
    read_opt(o, "mu_max", c.objective.mu_max, "objective");
    read_opt(o, "center_spread", c.objective.center_spread, "objective");
    if (o.contains("centers")) {
      std::vector<std::vector<double>> rows;
      read_opt(o, "centers", rows, "objective");
      c.objective.centers.clear();
      if (!rows.empty()) c.objective.dim = rows.front().size();
      for (const auto& r : rows) {
        if (r.size() != c.objective.dim) throw ConfigError("objective.centers rows differ in length");
        c.objective.centers.insert(c.objective.centers.end(), r.begin(), r.end());
      }
    }
  }
  read_opt(j, "noise_width", c.noise_width, "config");
  read_opt(j, "horizon", c.horizon, "config");
  read_opt(j, "runs", c.runs, "config");
  read_opt(j, "batch_size", c.batch_size, "config");
  read_opt(j, "seed", c.seed, "config");
  read_opt(j, "k0", c.k0, "config");
  read_opt(j, "initial", c.initial, "config");
  read_opt(j, "output_dir", c.output_dir, "config");
  read_opt(j, "window", c.window, "config");
  read_opt(j, "write_raw", c.write_raw, "config");
  if (j.contains("time_varying")) {
    const json& t = j["time_varying"];
    check_keys(t, {"window", "extra_prob"}, "time_varying");
    read_opt(t, "window", c.time_varying.window, "time_varying");
    read_opt(t, "extra_prob", c.time_varying.extra_prob, "time_varying");
  }
  if (j.contains("ratio")) {
    const json& r = j["ratio"];
    check_keys(r, {"nodes", "checkpoints"}, "ratio");
    read_opt(r, "nodes", c.ratio.nodes, "ratio");
    read_opt(r, "checkpoints", c.ratio.checkpoints, "ratio");
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["topology"] = {{"kind", topology.kind}, {"n", topology.n}};
  if (topology.kind == "cycle") {
    j["topology"]["bidirectional"] = topology.bidirectional;
  } else {
    j["topology"]["p"] = topology.p;
  }
  j["faults"] = {{"max_sleep", faults.max_sleep},
                 {"max_consecutive_losses", faults.max_consecutive_losses},
                 {"max_delay", faults.max_delay},
                 {"wake_probability", faults.wake_probability},
                 {"loss_probability", faults.loss_probability}};
  json o = {{"kind", objective.kind}};
  if (objective.kind == "svm") {
    o["c"] = objective.c;
  } else {
    o["dim"] = objective.dim;
    if (!objective.mu.empty()) {
      o["mu"] = objective.mu;
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < objective.mu.size(); ++i) {
        rows.emplace_back(objective.centers.begin() + static_cast<std::ptrdiff_t>(i * objective.dim),
                          objective.centers.begin() + static_cast<std::ptrdiff_t>((i + 1) * objective.dim));
      }
      o["centers"] = rows;
    } else {
      o["mu_min"] = objective.mu_min;
      o["mu_max"] = objective.mu_max;
      o["center_spread"] = objective.center_spread;
    }
  }
  j["objective"] = o;
  j["noise_width"] = noise_width;
  j["horizon"] = horizon;
  j["runs"] = runs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["k0"] = k0;
  if (!initial.empty()) j["initial"] = initial;
  j["output_dir"] = output_dir;
  if (time_varying.window > 0) {
    j["time_varying"] = {{"window", time_varying.window}, {"extra_prob", time_varying.extra_prob}};
  }
  j["window"] = window;
  j["write_raw"] = write_raw;
  if (!ratio.nodes.empty() || !ratio.checkpoints.empty()) {
    j["ratio"] = {{"nodes", ratio.nodes}, {"checkpoints", ratio.checkpoints}};
  }
  return j.dump(2);
}

void ExperimentConfig::validate() const {
  if (topology.kind != "cycle" && topology.kind != "random") {
    throw ConfigError("topology.kind must be cycle or random, got " + topology.kind);
  }
  if (topology.n < 1) throw ConfigError("topology.n must be >= 1");
  if (topology.kind == "random" && (!(topology.p >= 0.0) || topology.p > 1.0)) {
    throw ConfigError("topology.p must lie in [0, 1]");
  }
  faults.validate();
  if (objective.kind != "quadratic" && objective.kind != "svm") {
    throw ConfigError("objective.kind must be quadratic or svm, got " + objective.kind);
  }
  if (objective.kind == "quadratic") {
    if (objective.dim < 1) throw ConfigError("objective.dim must be >= 1");
    if (!objective.mu.empty() && objective.centers.size() != objective.mu.size() * objective.dim) {
      throw ConfigError("objective.centers must have one row of length dim per mu entry");
    }
    if (objective.mu.empty() && (!(objective.mu_min > 0.0) || objective.mu_max < objective.mu_min)) {
      throw ConfigError("objective needs 0 < mu_min <= mu_max");
    }
  } else if (!(objective.c > 0.0)) {
    throw ConfigError("objective.c must be positive");
  }
  if (!(noise_width >= 0.0) || !std::isfinite(noise_width)) throw ConfigError("noise_width must be >= 0");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (k0 < 0) throw ConfigError("k0 must be >= 0");
  if (window < 1) throw ConfigError("window must be >= 1");
  if (time_varying.window < 0) throw ConfigError("time_varying.window must be >= 0");
  if (time_varying.window > 0 && (faults.loss_probability != 0.0 || faults.max_consecutive_losses != 0)) {
    throw ConfigError("time-varying graphs require a lossless link model");
  }
  for (Slot k : ratio.checkpoints) {
    if (k < 1) throw ConfigError("ratio checkpoints must be >= 1");
  }
}

ExperimentInstance build_instance(const ExperimentConfig& config) {
  ExperimentInstance inst;
  const RunSeed base{config.seed, 0};
  const std::size_t n = config.topology.n;
  if (config.topology.kind == "cycle") {
    inst.topology = std::make_unique<Topology>(n == 1 ? Topology(1, {}) : build_cycle(n, config.topology.bidirectional));
  } else {
    CounterRng rng(base.key(StreamRole::kTopology));
    inst.topology = std::make_unique<Topology>(build_random_strongly_connected(n, config.topology.p, rng));
  }
  CounterRng data_rng(base.key(StreamRole::kDataset));
  if (config.objective.kind == "svm") {
    inst.dataset = generate_svm_dataset(n, data_rng);
    inst.objective = std::make_unique<SvmObjective>(*inst.dataset, config.objective.c);
  } else if (!config.objective.mu.empty()) {
    if (config.objective.mu.size() != n) throw ConfigError("objective.mu must have one entry per node");
    inst.objective =
        std::make_unique<QuadraticObjective>(config.objective.mu, config.objective.centers, config.objective.dim);
  } else {
    inst.objective = std::make_unique<QuadraticObjective>(
        QuadraticObjective::generate(n, config.objective.dim, config.objective.mu_min, config.objective.mu_max,
                                     config.objective.center_spread, data_rng));
  }
  if (!config.initial.empty() && config.initial.size() != inst.objective->dim()) {
    throw ConfigError("initial must have the objective's dimension");
  }
  inst.optimum = solve_reference_optimum(*inst.objective);
  if (config.time_varying.window > 0) {
    inst.mask = std::make_unique<ArcMask>(inst.topology->arc_count(), config.time_varying.window,
                                          config.time_varying.extra_prob, base.key(StreamRole::kMask));
  }
  inst.central_noise_width = std::sqrt(static_cast<double>(n)) * config.noise_width;
  return inst;
}

void RunSeries::write_csv(std::ostream& os) const {
  os << "k,E_dist,E_c\n" << std::setprecision(17);
  for (std::size_t k = 0; k < e_dist.size(); ++k) os << k << ',' << e_dist[k] << ',' << e_c[k] << '\n';
}

RunSeries RunSeries::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "k,E_dist,E_c") throw ConfigError("raw run file lacks header k,E_dist,E_c");
  RunSeries r;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string k, a, b;
    std::getline(ls, k, ',');
    std::getline(ls, a, ',');
    std::getline(ls, b);
    r.e_dist.push_back(std::stod(a));
    r.e_c.push_back(std::stod(b));
  }
  return r;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double d = a[c] - b[c];
    s += d * d;
  }
  return s;
}

}  // namespace

RunSeries run_paired(const ExperimentConfig& config, const ExperimentInstance& inst, std::uint64_t run,
                     const RunOptions& options, VerificationReport* report) {
  const RunSeed seed{config.seed, run};
  const Objective& f = *inst.objective;
  const std::span<const double> z_star = inst.optimum.z;

  RasgpOptions ro;
  ro.horizon = config.horizon;
  ro.k0 = config.k0;
  ro.noise_width = config.noise_width;
  ro.initial = config.initial;
  ro.record_trace = options.verify;
  ro.record_schedule = options.verify;
  ro.mask = inst.mask.get();
  const RasgpResult res = run_rasgp(*inst.topology, config.faults, f, seed, ro);

  RunSeries out;
  out.e_dist.resize(static_cast<std::size_t>(config.horizon) + 1);
  for (Slot k = 0; k <= config.horizon; ++k) out.e_dist[k] = squared_distance(res.zhat_at(k), z_star);

  if (options.verify) {
    CrossValidateOptions cv;
    cv.initial_timestamp = -1;
    cv.fixed_graph = inst.mask == nullptr;
    VerificationReport rep = cross_validate(*inst.topology, config.faults, *res.trace, *res.schedule, cv);
    if (report != nullptr) *report = rep;
    rep.require_ok();
  }

  CentralizedOptions co;
  co.horizon = config.horizon;
  co.period = config.faults.max_sleep;
  co.k0 = config.k0;
  co.noise_width = inst.central_noise_width;
  co.initial = config.initial;
  CounterRng central_rng(seed.key(StreamRole::kCentralNoise));
  out.e_c.reserve(out.e_dist.size());
  centralized_baseline(f, co, central_rng,
                       [&](Slot, std::span<const double> x) { out.e_c.push_back(squared_distance(x, z_star)); });
  return out;
}

std::vector<double> batch_mean(std::span<const std::vector<double>> runs) {
  if (runs.empty()) return {};
  std::vector<double> m(runs.front().size(), 0.0);
  for (const auto& r : runs) {
    if (r.size() != m.size()) throw ConfigError("runs in a batch differ in length");
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += r[k];
  }
  const double inv = 1.0 / static_cast<double>(runs.size());
  for (auto& v : m) v *= inv;
  return m;
}

std::vector<double> window_means(std::span<const double> series, Slot window, Slot first_slot) {
  std::vector<double> out;
  const Slot end = static_cast<Slot>(series.size());
  for (Slot s = first_slot; s < end; s += window) {
    const Slot e = std::min(end, s + window);
    double sum = 0.0;
    for (Slot k = s; k < e; ++k) sum += series[k];
    out.push_back(sum / static_cast<double>(e - s));
  }
  return out;
}

WindowedSeries reduce_batches(std::span<const std::vector<double>> batch_windows, Slot window, Slot first_slot,
                              Slot last_slot) {
  WindowedSeries w;
  if (batch_windows.empty()) return w;
  const std::size_t count = batch_windows.front().size();
  const std::size_t b = batch_windows.size();
  std::vector<double> col(b);
  for (std::size_t q = 0; q < count; ++q) {
    for (std::size_t r = 0; r < b; ++r) col[r] = batch_windows[r][q];
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(b);
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    std::sort(col.begin(), col.end());
    const double med = b % 2 == 1 ? col[b / 2] : 0.5 * (col[b / 2 - 1] + col[b / 2]);
    w.k.push_back(std::min(last_slot, first_slot + static_cast<Slot>(q + 1) * window - 1));
    w.median.push_back(med);
    w.stddev.push_back(b > 1 ? std::sqrt(var / static_cast<double>(b - 1)) : 0.0);
  }
  return w;
}

WindowedSeries aggregate_series(std::span<const std::vector<double>> runs, std::size_t batch_size, Slot window,
                                Slot first_slot) {
  if (runs.empty()) throw ConfigError("aggregation needs at least one run");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<std::vector<double>> windows;
  for (std::size_t s = 0; s < runs.size(); s += batch_size) {
    const std::size_t e = std::min(runs.size(), s + batch_size);
    windows.push_back(window_means(batch_mean(runs.subspan(s, e - s)), window, first_slot));
  }
  return reduce_batches(windows, window, first_slot, static_cast<Slot>(runs.front().size()) - 1);
}

std::vector<double> scale_by_slot(std::span<const double> series) {
  std::vector<double> out(series.size());
  for (std::size_t k = 0; k < series.size(); ++k) out[k] = static_cast<double>(k) * series[k];
  return out;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next.store(count);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

namespace {

struct SeriesSet {
  std::vector<std::vector<double>> e_dist, e_c, k_e_dist, k_e_c;

  void add_batch(std::span<const RunSeries> batch, Slot window) {
    std::vector<std::vector<double>> d, c;
    for (const auto& r : batch) {
      d.push_back(r.e_dist);
      c.push_back(r.e_c);
    }
    const auto md = batch_mean(d);
    const auto mc = batch_mean(c);
    e_dist.push_back(window_means(md, window, 1));
    e_c.push_back(window_means(mc, window, 1));
    k_e_dist.push_back(window_means(scale_by_slot(md), window, 1));
    k_e_c.push_back(window_means(scale_by_slot(mc), window, 1));
  }

  ExperimentResult finish(Slot window, Slot horizon) const {
    ExperimentResult r;
    r.e_dist = reduce_batches(e_dist, window, 1, horizon);
    r.e_c = reduce_batches(e_c, window, 1, horizon);
    r.k_e_dist = reduce_batches(k_e_dist, window, 1, horizon);
    r.k_e_c = reduce_batches(k_e_c, window, 1, horizon);
    return r;
  }
};

std::string raw_name(std::uint64_t run) {
  std::ostringstream os;
  os << "run_" << std::setw(4) << std::setfill('0') << run << ".csv";
  return os.str();
}

void write_file(const std::filesystem::path& p, const std::function<void(std::ostream&)>& fn) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + p.string());
  fn(os);
}

void write_instance_files(const std::filesystem::path& dir, const ExperimentConfig& config,
                          const ExperimentInstance& inst) {
  write_file(dir / "manifest.json", [&](std::ostream& os) { os << config.to_json() << '\n'; });
  write_file(dir / "topology.txt", [&](std::ostream& os) { write_arc_list(os, *inst.topology); });
  write_file(dir / "optimum.txt", [&](std::ostream& os) { inst.optimum.write(os); });
  if (inst.dataset) write_file(dir / "dataset.csv", [&](std::ostream& os) { inst.dataset->write_csv(os); });
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options) {
  config.validate();
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  const ExperimentInstance inst = build_instance(config);
  write_instance_files(dir, config, inst);
  const std::filesystem::path raw_dir = dir / "raw";
  if (config.write_raw || !options.only_runs.empty()) std::filesystem::create_directories(raw_dir);

  std::vector<std::uint64_t> order = options.only_runs;
  const bool full = order.empty();
  if (full) {
    order.resize(config.runs);
    std::iota(order.begin(), order.end(), 0);
  }

  std::mutex fail_mu;
  std::optional<std::pair<std::uint64_t, std::string>> failure;
  auto run_one = [&](std::uint64_t run, RunSeries& out) {
    try {
      out = run_paired(config, inst, run, {options.verify});
    } catch (const std::exception& e) {
      std::lock_guard lock(fail_mu);
      if (!failure) failure.emplace(run, e.what());
      throw;
    }
  };

  SeriesSet set;
  const std::size_t stride = full ? config.batch_size : order.size();
  try {
    for (std::size_t s = 0; s < order.size(); s += stride) {
      const std::size_t e = std::min(order.size(), s + stride);
      std::vector<RunSeries> batch(e - s);
      parallel_for(batch.size(), options.threads, [&](std::size_t q) { run_one(order[s + q], batch[q]); });
      if (config.write_raw || !full) {
        for (std::size_t q = 0; q < batch.size(); ++q) {
          write_file(raw_dir / raw_name(order[s + q]), [&](std::ostream& os) { batch[q].write_csv(os); });
        }
      }
      if (full) set.add_batch(batch, config.window);
      if (options.log != nullptr) *options.log << "completed runs " << s << ".." << e - 1 << '\n';
    }
  } catch (...) {
    if (failure) {
      json f = {{"seed", config.seed}, {"run", failure->first}, {"message", failure->second}};
      write_file(dir / "failure.json", [&](std::ostream& os) { os << f.dump(2) << '\n'; });
    }
    throw;
  }

  ExperimentResult r;
  if (full) {
    r = set.finish(config.window, config.horizon);
    r.z_star = inst.optimum.z;
    write_file(dir / "errors.csv", [&](std::ostream& os) { write_errors_csv(os, r); });
    write_file(dir / "k_errors.csv", [&](std::ostream& os) { write_k_errors_csv(os, r); });
    write_file(dir / "errors.svg", [&](std::ostream& os) { write_svg_plot(os, r); });
  }
  return r;
}

ExperimentResult aggregate_raw_directory(const ExperimentConfig& config, const std::filesystem::path& raw_dir) {
  SeriesSet set;
  for (std::uint64_t s = 0; s < config.runs; s += config.batch_size) {
    const std::uint64_t e = std::min<std::uint64_t>(config.runs, s + config.batch_size);
    std::vector<RunSeries> batch;
    for (std::uint64_t r = s; r < e; ++r) {
      std::ifstream in(raw_dir / raw_name(r));
      if (!in) throw ConfigError("missing raw run file " + (raw_dir / raw_name(r)).string());
      batch.push_back(RunSeries::read_csv(in));
    }
    set.add_batch(batch, config.window);
  }
  return set.finish(config.window, config.horizon);
}

std::vector<RatioRow> ratio_study(const ExperimentConfig& config, const ExperimentOptions& options) {
  if (config.ratio.nodes.empty() || config.ratio.checkpoints.empty()) {
    throw ConfigError("ratio study needs ratio.nodes and ratio.checkpoints");
  }
  const Slot horizon = *std::max_element(config.ratio.checkpoints.begin(), config.ratio.checkpoints.end());
  const std::size_t cps = config.ratio.checkpoints.size();
  std::vector<RatioRow> rows;
  for (std::size_t n : config.ratio.nodes) {
    ExperimentConfig c = config;
    c.topology.kind = "cycle";
    c.topology.bidirectional = true;
    c.topology.n = n;
    c.horizon = horizon;
    c.validate();
    const ExperimentInstance inst = build_instance(c);
    // per run and checkpoint: window means of E_c and E_dist over (k - W, k]
    std::vector<double> ec(c.runs * cps), ed(c.runs * cps);
    parallel_for(c.runs, options.threads, [&](std::size_t r) {
      const RunSeries s = run_paired(c, inst, r, {options.verify});
      for (std::size_t q = 0; q < cps; ++q) {
        const Slot k = c.ratio.checkpoints[q];
        const Slot lo = std::max<Slot>(0, k - c.window);
        double a = 0.0, b = 0.0;
        for (Slot t = lo + 1; t <= k; ++t) {
          a += s.e_c[t];
          b += s.e_dist[t];
        }
        ec[r * cps + q] = a / static_cast<double>(k - lo);
        ed[r * cps + q] = b / static_cast<double>(k - lo);
      }
    });
    for (std::size_t q = 0; q < cps; ++q) {
      std::vector<std::vector<double>> batches;
      for (std::size_t s = 0; s < c.runs; s += c.batch_size) {
        const std::size_t e = std::min(c.runs, s + c.batch_size);
        double a = 0.0, b = 0.0;
        for (std::size_t r = s; r < e; ++r) {
          a += ec[r * cps + q];
          b += ed[r * cps + q];
        }
        batches.push_back({a / b});
      }
      const WindowedSeries w = reduce_batches(batches, 1, c.ratio.checkpoints[q], c.ratio.checkpoints[q]);
      rows.push_back({n, c.ratio.checkpoints[q], w.median[0], w.stddev[0]});
    }
    if (options.log != nullptr) *options.log << "ratio study: n = " << n << " done\n";
  }
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "ratio.csv", [&](std::ostream& os) { write_ratio_csv(os, rows); });
  write_file(dir / "manifest.json", [&](std::ostream& os) { os << config.to_json() << '\n'; });
  return rows;
}

void write_errors_csv(std::ostream& os, const ExperimentResult& r) {
  os << "k,E_dist,E_c,E_dist_std,E_c_std\n" << std::setprecision(17);
  for (std::size_t q = 0; q < r.e_dist.k.size(); ++q) {
    os << r.e_dist.k[q] << ',' << r.e_dist.median[q] << ',' << r.e_c.median[q] << ',' << r.e_dist.stddev[q] << ','
       << r.e_c.stddev[q] << '\n';
  }
}

void write_k_errors_csv(std::ostream& os, const ExperimentResult& r) {
  os << "k,k_E_dist,k_E_c\n" << std::setprecision(17);
  for (std::size_t q = 0; q < r.k_e_dist.k.size(); ++q) {
    os << r.k_e_dist.k[q] << ',' << r.k_e_dist.median[q] << ',' << r.k_e_c.median[q] << '\n';
  }
}

void write_ratio_csv(std::ostream& os, std::span<const RatioRow> rows) {
  os << "n,k,ratio,ratio_std\n" << std::setprecision(17);
  for (const auto& r : rows) os << r.n << ',' << r.k << ',' << r.ratio << ',' << r.ratio_std << '\n';
}

void write_svg_plot(std::ostream& os, const ExperimentResult& r) {
  constexpr double W = 640, H = 400, pad = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* s : {&r.e_dist, &r.e_c}) {
    for (double v : s->median) {
      if (v > 0.0) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
    }
  }
  const double kmax = r.e_dist.k.empty() ? 1.0 : std::log10(static_cast<double>(r.e_dist.k.back()));
  const double kmin = r.e_dist.k.empty() ? 0.0 : std::log10(static_cast<double>(std::max<Slot>(1, r.e_dist.k.front())));
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1 : 0;
    hi = lo + 2;
  }
  auto px = [&](Slot k) {
    const double span = kmax > kmin ? kmax - kmin : 1.0;
    return pad + (W - 2 * pad) * (std::log10(static_cast<double>(std::max<Slot>(1, k))) - kmin) / span;
  };
  auto py = [&](double v) { return H - pad - (H - 2 * pad) * (std::log10(v) - lo) / (hi - lo); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\"" << H - 2 * pad
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  const char* colors[] = {"#1f77b4", "#d62728"};
  const char* names[] = {"E_dist", "E_c"};
  int idx = 0;
  for (const auto* s : {&r.e_dist, &r.e_c}) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[idx] << "\" points=\"";
    for (std::size_t q = 0; q < s->k.size(); ++q) {
      if (s->median[q] > 0.0) os << px(s->k[q]) << ',' << py(s->median[q]) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - pad - 60 << "\" y=\"" << pad + 15 + 15 * idx << "\" fill=\"" << colors[idx]
       << "\" font-size=\"12\">" << names[idx] << "</text>\n";
    ++idx;
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\" font-size=\"12\">k (log)</text>\n";
  os << "</svg>\n";
}

CampaignResult verify_campaign(const ExperimentConfig& config, std::size_t runs, Slot horizon) {
  CampaignResult out;
  out.runs = runs;
  const std::size_t n_max = std::max<std::size_t>(2, config.topology.n);
  std::vector<VerificationReport> reports(runs);
  parallel_for(runs, 0, [&](std::size_t r) {
    const RunSeed seed{config.seed, r};
    CounterRng trng(seed.key(StreamRole::kTopology));
    const std::size_t n = static_cast<std::size_t>(trng.uniform_int(2, static_cast<std::int64_t>(n_max)));
    const Topology t = config.topology.kind == "cycle"
                           ? build_cycle(n, config.topology.bidirectional)
                           : build_random_strongly_connected(n, config.topology.p, trng);
    std::unique_ptr<ArcMask> mask;
    if (config.time_varying.window > 0) {
      mask = std::make_unique<ArcMask>(t.arc_count(), config.time_varying.window, config.time_varying.extra_prob,
                                       seed.key(StreamRole::kMask));
    }
    CrossValidateOptions cv;
    cv.fixed_graph = mask == nullptr;
    StateTrace trace;
    ScheduleRealization schedule;
    if (r % 2 == 0) {
      CounterRng xrng(seed.key(StreamRole::kInitial));
      const std::size_t dim = 2;
      std::vector<double> x0(n * dim);
      for (auto& v : x0) v = xrng.uniform(-10.0, 10.0);
      RapsOptions ro;
      ro.record_trace = true;
      ro.record_schedule = true;
      ro.mask = mask.get();
      RapsResult res = run_raps(t, config.faults, x0, dim, horizon, seed, ro);
      trace = std::move(*res.trace);
      schedule = std::move(*res.schedule);
    } else {
      CounterRng qrng(seed.key(StreamRole::kDataset));
      const QuadraticObjective f = QuadraticObjective::generate(n, 2, 1.0, 2.0, 5.0, qrng);
      RasgpOptions ro;
      ro.horizon = horizon;
      ro.noise_width = 4.0;
      ro.record_trace = true;
      ro.record_schedule = true;
      ro.mask = mask.get();
      RasgpResult res = run_rasgp(t, config.faults, f, seed, ro);
      trace = std::move(*res.trace);
      schedule = std::move(*res.schedule);
      cv.initial_timestamp = -1;
    }
    reports[r] = cross_validate(t, config.faults, trace, schedule, cv);
  });
  for (const auto& rep : reports) {
    if (!rep.ok()) ++out.failures;
    for (const auto& e : rep.entries) {
      auto it = std::find_if(out.worst.entries.begin(), out.worst.entries.end(),
                             [&](const VerificationEntry& w) { return w.name == e.name; });
      if (it == out.worst.entries.end()) {
        out.worst.entries.push_back(e);
      } else {
        it->max_residual = std::max(it->max_residual, e.max_residual);
        if (it->first_failure < 0) it->first_failure = e.first_failure;
      }
    }
  }
  return out;
}

}  // namespace rpush
