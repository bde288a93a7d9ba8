#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "torusflow/baseline.hpp"
#include "torusflow/coupling.hpp"
#include "torusflow/experiments.hpp"
#include "torusflow/obstacle.hpp"
#include "torusflow/reflected_spde.hpp"
#include "torusflow/torus.hpp"

namespace py = pybind11;
using namespace torusflow;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

PeriodicField field_from(const Array& a) {
    if (a.ndim() != 1) throw py::value_error("expected a 1-d array of grid values");
    return PeriodicField(GridSpec(static_cast<std::size_t>(a.shape(0))),
                         std::vector<double>(a.data(), a.data() + a.shape(0)));
}

Array to_array(const std::vector<double>& v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

Array to_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    Array out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

SeedSpec seed_of(std::uint64_t master, std::uint64_t stream) { return SeedSpec{master, stream, 0}; }

SolverConfig solver_from(double dt, const std::string& mode, double epsilon, double noise, double diffusion,
                         const std::string& m_drift, std::size_t snapshot_stride) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.mode = parse_step_mode(mode);
    cfg.epsilon = epsilon;
    cfg.noise_amplitude = noise;
    cfg.diffusion = diffusion;
    cfg.m_drift_variant = parse_m_drift_variant(m_drift);
    cfg.snapshot_stride = snapshot_stride;
    return cfg;
}

py::dict trajectory_dict(const Trajectory& t) {
    std::vector<double> times, g;
    for (const auto& s : t.states) {
        times.push_back(s.t);
        g.insert(g.end(), s.g.values.begin(), s.g.values.end());
    }
    py::dict d;
    d["times"] = to_array(times);
    d["g"] = to_matrix(g, t.states.size(), t.grid.n_cells());
    d["M"] = to_array(t.M_path);
    d["g_l2"] = to_array(t.g_l2_path);
    d["eta_total"] = t.eta_total;
    d["eta"] = to_matrix(t.ledger.increments, t.ledger.n_steps, t.grid.n_cells());
    return d;
}

}  // namespace

PYBIND11_MODULE(_torusflow, m) {
    m.doc() = "Reflected SPDE solver for noisy transport on the circle";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::class_<KernelSpec>(m, "Kernel")
        .def_static("constant", &KernelSpec::constant, py::arg("c"))
        .def_static("trigonometric",
                    [](double a0, std::vector<double> c, std::vector<double> s) {
                        return KernelSpec::trigonometric(a0, std::move(c), std::move(s));
                    },
                    py::arg("a0") = 0.0, py::arg("cos") = std::vector<double>{}, py::arg("sin") = std::vector<double>{})
        .def_static("from_csv", &KernelSpec::read_csv_file, py::arg("path"))
        .def_static("sampled", [](const Array& h, const Array& hp) { return KernelSpec::sampled(field_from(h), field_from(hp)); },
                    py::arg("h"), py::arg("h_prime"))
        .def("__call__", &KernelSpec::value)
        .def("derivative", &KernelSpec::derivative)
        .def_property_readonly("bound", &KernelSpec::bound);

    m.def("torus_distance", &torus_distance, py::arg("u"), py::arg("v"));

    m.def("reconstruct_A",
          [](const Array& g, double M) {
              const auto A = reconstruct_A(field_from(g), M);
              return py::make_tuple(to_array(A.base()), A.winding());
          },
          py::arg("g"), py::arg("M"), "Node values of A([g, M]) and its winding.");

    m.def("circular_wasserstein",
          [](const std::vector<std::pair<double, double>>& a, const std::vector<std::pair<double, double>>& b) {
              std::vector<Atom> x, y;
              for (auto [l, w] : a) x.push_back({l, w});
              for (auto [l, w] : b) y.push_back({l, w});
              const auto d = circular_wasserstein(TorusMeasure::normalised_atoms(x), TorusMeasure::normalised_atoms(y));
              return py::make_tuple(d.minimised, d.fixed_cut);
          },
          py::arg("mu"), py::arg("nu"), "W2 on the circle between atomic measures given as (location, weight).");

    m.def("d12", [](const Array& g1, double M1, const Array& g2, double M2) {
              return d12_metric(MeasureH1::from_state(field_from(g1), M1), MeasureH1::from_state(field_from(g2), M2));
          },
          py::arg("g1"), py::arg("M1"), py::arg("g2"), py::arg("M2"));

    m.def("solve_obstacle",
          [](const Array& v, double dt) {
              if (v.ndim() != 2) throw py::value_error("obstacle must be (n_steps + 1) x n_cells");
              const auto rows = static_cast<std::size_t>(v.shape(0)), cols = static_cast<std::size_t>(v.shape(1));
              const ObstaclePath path(GridSpec(cols), dt, rows - 1, std::vector<double>(v.data(), v.data() + rows * cols));
              const auto sol = solve_obstacle(path);
              return py::make_tuple(to_matrix(sol.z, rows, cols), to_matrix(sol.eta.increments, rows - 1, cols),
                                    complementarity_defect(sol, path));
          },
          py::arg("v"), py::arg("dt"), "Returns (z, eta increments, complementarity defect).");

    m.def("simulate",
          [](const Array& phi, double x, double T, const KernelSpec& kernel, double dt, const std::string& mode,
             double epsilon, double noise, double diffusion, const std::string& m_drift, std::size_t snapshot_stride,
             std::uint64_t seed, std::uint64_t replica) {
              const auto cfg = solver_from(dt, mode, epsilon, noise, diffusion, m_drift, snapshot_stride);
              Trajectory t = [&] {
                  py::gil_scoped_release release;
                  return simulate(field_from(phi), x, T, kernel, cfg, seed_of(seed, replica));
              }();
              return trajectory_dict(t);
          },
          py::arg("phi"), py::arg("x"), py::arg("T"), py::arg("kernel"), py::arg("dt") = 1e-3,
          py::arg("mode") = "projected", py::arg("epsilon") = 1e-4, py::arg("noise") = 1.0, py::arg("diffusion") = 1.0,
          py::arg("m_drift") = "unweighted", py::arg("snapshot_stride") = 1, py::arg("seed") = 0, py::arg("replica") = 0);

    m.def("coupled_pair",
          [](const Array& phi, double x, const Array& psi, double y, const KernelSpec& kernel, double T, double dt,
             const std::string& mode, const std::string& coupling, std::uint64_t seed, std::uint64_t replica) {
              CouplingConfig cc;
              cc.T = T;
              cc.mode = parse_coupling_mode(coupling);
              const auto cfg = solver_from(dt, mode, 1e-4, 1.0, 1.0, "unweighted", 0);
              CouplingResult r = [&] {
                  py::gil_scoped_release release;
                  return run_coupled_pair(field_from(phi), x, field_from(psi), y, kernel, cc, cfg, seed_of(seed, replica));
              }();
              std::vector<double> t, gd, md;
              for (const auto& s : r.distance_path) {
                  t.push_back(s.t);
                  gd.push_back(s.g_distance);
                  md.push_back(s.M_distance);
              }
              py::dict d;
              d["coupled"] = r.coupled;
              d["merge_time"] = r.merge_time ? py::cast(*r.merge_time) : py::none();
              d["t"] = to_array(t);
              d["g_distance"] = to_array(gd);
              d["M_distance"] = to_array(md);
              d["log_density"] = r.ledger.log_density;
              d["quadratic_variation"] = r.ledger.quadratic_variation;
              d["bridge_integral"] = r.bridge_integral;
              d["bound_excess_g"] = r.bound_excess_g;
              d["bound_excess_M"] = r.bound_excess_M;
              return d;
          },
          py::arg("phi"), py::arg("x"), py::arg("psi"), py::arg("y"), py::arg("kernel"), py::arg("T") = 0.1,
          py::arg("dt") = 1e-3, py::arg("mode") = "penalised", py::arg("coupling") = "frozen", py::arg("seed") = 0,
          py::arg("replica") = 0);

    m.def("evolve_quantile",
          [](const Array& F0, double winding, const KernelSpec& kernel, double T, double dt) {
              const EquivariantMap F(GridSpec(static_cast<std::size_t>(F0.shape(0))),
                                     std::vector<double>(F0.data(), F0.data() + F0.shape(0)), winding);
              return to_array(evolve_quantile(F, kernel, T, dt).base());
          },
          py::arg("F0"), py::arg("winding") = 1.0, py::arg("kernel"), py::arg("T"), py::arg("dt"));

    m.def("run_config",
          [](const std::string& config_path, std::optional<std::string> out, std::optional<std::uint64_t> seed,
             std::optional<std::size_t> replicas) {
              auto cfg = ExperimentConfig::from_file(config_path);
              if (out) cfg.output = *out;
              if (seed) cfg.seed = *seed;
              if (replicas) cfg.replicas = *replicas;
              nlohmann::json summary;
              {
                  py::gil_scoped_release release;
                  summary = run_experiment(cfg);
              }
              return py::module_::import("json").attr("loads")(summary.dump());
          },
          py::arg("config_path"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
          py::arg("replicas") = py::none(), "Runs an experiment config and returns its summary.");

    m.attr("SUMMARY_SCHEMA_VERSION") = kSummarySchemaVersion;
}
