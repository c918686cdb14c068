#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rpush/errors.hpp"
#include "rpush/harness.hpp"

namespace py = pybind11;
using namespace rpush;

namespace {

Topology make_topology(const std::string& kind, std::size_t n, bool bidirectional, double p, std::uint64_t seed) {
  if (kind == "cycle") return build_cycle(n, bidirectional);
  if (kind == "random") {
    CounterRng rng(RunSeed{seed, 0}.key(StreamRole::kTopology));
    return build_random_strongly_connected(n, p, rng);
  }
  throw ConfigError("unknown topology kind '" + kind + "'");
}

py::dict report_dict(const VerificationReport& r) {
  py::dict d;
  for (const auto& e : r.entries) {
    d[py::str(e.name)] = py::make_tuple(e.max_residual, e.tolerance, e.first_failure);
  }
  return d;
}

py::dict series_dict(const WindowedSeries& s) {
  py::dict d;
  d["k"] = s.k;
  d["median"] = s.median;
  d["stddev"] = s.stddev;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust asynchronous push-sum and stochastic gradient-push";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TopologyError>(m, "TopologyError", PyExc_ValueError);
  py::register_exception<VerificationFailure>(m, "VerificationFailure");
  py::register_exception<ProtocolViolation>(m, "ProtocolViolation");
  py::register_exception<NumericError>(m, "NumericError");

  py::class_<FaultBounds>(m, "FaultBounds")
      .def(py::init([](int max_sleep, int max_losses, int max_delay, double wake_p, double loss_p) {
             FaultBounds b{max_sleep, max_losses, max_delay, wake_p, loss_p};
             b.validate();
             return b;
           }),
           py::arg("max_sleep") = 1, py::arg("max_consecutive_losses") = 0, py::arg("max_delay") = 1,
           py::arg("wake_probability") = 1.0, py::arg("loss_probability") = 0.0)
      .def_readonly("max_sleep", &FaultBounds::max_sleep)
      .def_readonly("max_consecutive_losses", &FaultBounds::max_consecutive_losses)
      .def_readonly("max_delay", &FaultBounds::max_delay)
      .def_readonly("wake_probability", &FaultBounds::wake_probability)
      .def_readonly("loss_probability", &FaultBounds::loss_probability)
      .def_property_readonly("max_effective_delay", [](const FaultBounds& b) { return derived_bounds(b).max_effective_delay; })
      .def_property_readonly("max_delivery_gap", [](const FaultBounds& b) { return derived_bounds(b).max_delivery_gap; });

  py::class_<Topology>(m, "Topology")
      .def(py::init([](std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& arcs) {
             std::vector<Arc> a;
             for (auto [i, j] : arcs) a.push_back({i, j});
             return Topology(n, std::move(a));
           }),
           py::arg("n"), py::arg("arcs"))
      .def_static("cycle", &build_cycle, py::arg("n"), py::arg("bidirectional") = true)
      .def_static("random",
                  [](std::size_t n, double p, std::uint64_t seed) { return make_topology("random", n, true, p, seed); },
                  py::arg("n"), py::arg("p"), py::arg("seed") = 0)
      .def_property_readonly("n", &Topology::size)
      .def_property_readonly("arcs", [](const Topology& t) {
        std::vector<std::pair<NodeId, NodeId>> out;
        for (const Arc& a : t.arcs()) out.emplace_back(a.from, a.to);
        return out;
      })
      .def("out_degree", &Topology::out_degree)
      .def("in_degree", &Topology::in_degree);

  m.def("push_sum",
        [](const Topology& t, const FaultBounds& b, const std::vector<double>& x0, std::size_t dim, Slot horizon,
           std::uint64_t seed, std::uint64_t run) {
          if (dim == 0 || x0.size() != t.size() * dim) throw ConfigError("x0 must hold n * dim values");
          const RapsResult r = run_raps(t, b, x0, dim, horizon, RunSeed{seed, run});
          py::dict d;
          d["z"] = r.z;
          d["augmented_mean"] = r.augmented_mean;
          d["n"] = r.n;
          d["dim"] = r.dim;
          return d;
        },
        py::arg("topology"), py::arg("faults"), py::arg("x0"), py::arg("dim") = 1, py::arg("horizon") = 100,
        py::arg("seed") = 0, py::arg("run") = 0,
        "Push-sum averaging; z is flattened (horizon + 1) x n x dim.");

  m.def("verify_push_sum",
        [](const Topology& t, const FaultBounds& b, const std::vector<double>& x0, std::size_t dim, Slot horizon,
           std::uint64_t seed) {
          if (dim == 0 || x0.size() != t.size() * dim) throw ConfigError("x0 must hold n * dim values");
          RapsOptions o;
          o.record_trace = true;
          o.record_schedule = true;
          const RapsResult r = run_raps(t, b, x0, dim, horizon, RunSeed{seed, 0}, o);
          return report_dict(cross_validate(t, b, *r.trace, *r.schedule));
        },
        py::arg("topology"), py::arg("faults"), py::arg("x0"), py::arg("dim") = 1, py::arg("horizon") = 100,
        py::arg("seed") = 0,
        "Cross-validates a push-sum run against the augmented linear system; "
        "maps identity name to (max residual, tolerance, first failing slot).");

  m.def("contraction_bound",
        [](std::size_t n, int delivery_gap) {
          const ContractionBound c = contraction_bound(n, delivery_gap);
          py::dict d;
          d["alpha"] = static_cast<double>(c.alpha);
          d["lambda"] = static_cast<double>(c.lambda);
          d["delta"] = static_cast<double>(c.delta);
          d["log_lambda"] = static_cast<double>(c.log_lambda);
          d["vacuous"] = c.vacuous;
          return d;
        },
        py::arg("n"), py::arg("delivery_gap"));

  m.def("smoothed_hinge", &smoothed_hinge, py::arg("xi"));

  m.def("quadratic_optimum",
        [](const std::vector<double>& mu, const std::vector<double>& centers, std::size_t dim) {
          QuadraticObjective f(mu, centers, dim);
          return f.optimum();
        },
        py::arg("mu"), py::arg("centers"), py::arg("dim"));

  m.def("rasgp",
        [](const std::string& config_json, std::uint64_t run) {
          const ExperimentConfig c = ExperimentConfig::parse(config_json);
          const ExperimentInstance inst = build_instance(c);
          const RunSeries s = run_paired(c, inst, run);
          py::dict d;
          d["e_dist"] = s.e_dist;
          d["e_c"] = s.e_c;
          d["z_star"] = inst.optimum.z;
          return d;
        },
        py::arg("config_json"), py::arg("run") = 0,
        "One paired run of gradient-push and the centralized baseline; returns squared-error series.");

  m.def("aggregate_series",
        [](const std::vector<std::vector<double>>& runs, std::size_t batch_size, Slot window, Slot first_slot) {
          return series_dict(aggregate_series(runs, batch_size, window, first_slot));
        },
        py::arg("runs"), py::arg("batch_size"), py::arg("window") = 100, py::arg("first_slot") = 1);

  m.def("run_experiment",
        [](const std::string& config_json, bool verify) {
          const ExperimentConfig c = ExperimentConfig::parse(config_json);
          ExperimentOptions o;
          o.verify = verify;
          ExperimentResult r;
          {
            py::gil_scoped_release release;
            r = run_experiment(c, o);
          }
          py::dict d;
          d["e_dist"] = series_dict(r.e_dist);
          d["e_c"] = series_dict(r.e_c);
          d["k_e_dist"] = series_dict(r.k_e_dist);
          d["k_e_c"] = series_dict(r.k_e_c);
          d["z_star"] = r.z_star;
          return d;
        },
        py::arg("config_json"), py::arg("verify") = false,
        "Runs a Monte Carlo experiment and writes its CSV outputs to the config's output_dir.");
}
