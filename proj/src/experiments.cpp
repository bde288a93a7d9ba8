#include "torusflow/experiments.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "torusflow/baseline.hpp"
#include "torusflow/obstacle.hpp"
#include "torusflow/parallel.hpp"
#include "torusflow/stats.hpp"

namespace torusflow {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentKind parse_experiment_kind(const std::string& name) {
    static const std::pair<const char*, ExperimentKind> table[] = {
        {"simulate", ExperimentKind::simulate}, {"picard", ExperimentKind::picard},
        {"obstacle", ExperimentKind::obstacle}, {"coupling", ExperimentKind::coupling},
        {"feller", ExperimentKind::feller},     {"markov", ExperimentKind::markov},
        {"baseline", ExperimentKind::baseline}};
    for (const auto& [key, kind] : table) {
        if (name == key) return kind;
    }
    throw ValidationError("experiment.kind", "unknown experiment kind '" + name + "'");
}

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::picard: return "picard";
        case ExperimentKind::obstacle: return "obstacle";
        case ExperimentKind::coupling: return "coupling";
        case ExperimentKind::feller: return "feller";
        case ExperimentKind::markov: return "markov";
        case ExperimentKind::baseline: return "baseline";
    }
    return "unknown";
}

// ------------------------------------------------------------------ parsing

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& rule) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(rule, std::string("field '") + key + "' has the wrong type");
    }
}

double positive(double v, const std::string& rule, const std::string& what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(rule, what + " must be positive");
    return v;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!ok.count(it.key())) {
            throw ValidationError("config.unknown_key", "unknown key '" + it.key() + "' in " + where);
        }
    }
}

SolverConfig parse_solver(const json& j, double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    if (j.is_null()) return cfg;
    if (!j.is_object()) throw ValidationError("config.solver", "'solver' must be an object");
    reject_unknown(j, {"mode", "epsilon", "heat", "spectrum", "m_drift_variant", "noise_amplitude",
                       "diffusion", "noise_refinement", "snapshot_stride", "tau_threshold"},
                   "solver");
    cfg.mode = parse_step_mode(get_or<std::string>(j, "mode", "projected", "solver.mode"));
    cfg.epsilon = get_or<double>(j, "epsilon", cfg.epsilon, "solver.epsilon>0");
    cfg.heat = parse_heat_scheme(get_or<std::string>(j, "heat", "exponential", "solver.heat"));
    const auto spectrum = get_or<std::string>(j, "spectrum", "discrete", "solver.spectrum");
    if (spectrum == "discrete") {
        cfg.spectrum = Spectrum::discrete;
    } else if (spectrum == "continuum") {
        cfg.spectrum = Spectrum::continuum;
    } else {
        throw ValidationError("solver.spectrum", "spectrum must be discrete or continuum");
    }
    cfg.m_drift_variant =
        parse_m_drift_variant(get_or<std::string>(j, "m_drift_variant", "unweighted", "m_drift_variant"));
    cfg.noise_amplitude = get_or<double>(j, "noise_amplitude", 1.0, "solver.noise>=0");
    cfg.diffusion = get_or<double>(j, "diffusion", 1.0, "solver.noise>=0");
    cfg.noise_refinement = get_or<std::size_t>(j, "noise_refinement", 1, "noise.refinement>=1");
    cfg.snapshot_stride = get_or<std::size_t>(j, "snapshot_stride", 0, "solver.snapshot_stride");
    cfg.tau_threshold = get_or<double>(j, "tau_threshold", cfg.tau_threshold, "solver.tau_threshold");
    return cfg;
}

const json& extra_block(const ExperimentConfig& cfg, const char* key) {
    static const json empty = json::object();
    return cfg.extra.contains(key) ? cfg.extra.at(key) : empty;
}

std::vector<double> default_scales() {
    std::vector<double> s;
    for (int k = 1; k <= 6; ++k) s.push_back(std::ldexp(1.0, -k));
    return s;
}

}  // namespace

PeriodicField ProfileSpec::build(const GridSpec& grid, const fs::path& base_dir) const {
    const json& j = spec;
    if (j.is_number()) return PeriodicField(grid, j.get<double>());
    if (!j.is_object()) throw ValidationError("initial.profile", "profile must be a number or an object");
    const auto type = get_or<std::string>(j, "type", "constant", "initial.profile");
    if (type == "constant") return PeriodicField(grid, get_or<double>(j, "value", 1.0, "initial.profile"));
    if (type == "cosine") {
        const double mean = get_or<double>(j, "mean", 1.0, "initial.profile");
        const double amp = get_or<double>(j, "amplitude", 0.0, "initial.profile");
        const int mode = get_or<int>(j, "mode", 1, "initial.profile");
        const double w = 2.0 * std::numbers::pi * mode;
        return PeriodicField::from_function(grid, [=](double u) { return mean + amp * std::cos(w * u); });
    }
    if (type == "bump") {
        // floor + height·max(0, 1 - (d/width)²)² with d the circle distance to center.
        const double c = get_or<double>(j, "center", 0.5, "initial.profile");
        const double width = positive(get_or<double>(j, "width", 0.25, "initial.profile"),
                                      "initial.profile", "bump width");
        const double height = get_or<double>(j, "height", 1.0, "initial.profile");
        const double floor = get_or<double>(j, "floor", 0.0, "initial.profile");
        return PeriodicField::from_function(grid, [=](double u) {
            const double r = torus_distance(u, c) / width;
            const double q = std::max(0.0, 1.0 - r * r);
            return floor + height * q * q;
        });
    }
    if (type == "file") {
        const fs::path path = base_dir / get_or<std::string>(j, "path", "", "initial.file");
        std::ifstream in(path);
        if (!in) throw ValidationError("initial.file", "cannot open profile file '" + path.string() + "'");
        PeriodicField f = read_field_csv(in);
        if (!(f.grid == grid)) {
            throw ValidationError("initial.file", "profile file grid differs from the configured grid");
        }
        return f;
    }
    throw ValidationError("initial.profile", "unknown profile type '" + type + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw ValidationError("config.object", "config must be a JSON object");
    reject_unknown(doc, {"experiment", "grid", "dt", "T", "kernel", "solver", "initial", "perturbation",
                         "replicas", "seed", "threads", "output", "picard", "obstacle", "coupling",
                         "feller", "markov", "baseline", "m_drift_variant"},
                   "config");
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    if (!doc.contains("experiment")) throw ValidationError("experiment.kind", "missing 'experiment'");
    cfg.kind = parse_experiment_kind(get_or<std::string>(doc, "experiment", "", "experiment.kind"));
    const json grid = doc.value("grid", json::object());
    cfg.n_cells = grid.is_number() ? grid.get<std::size_t>()
                                   : get_or<std::size_t>(grid, "n_cells", 64, "grid.n_cells>=2");
    cfg.dt = get_or<double>(doc, "dt", 1e-4, "solver.dt>0");
    cfg.T = get_or<double>(doc, "T", 0.01, "time.T>0");
    cfg.kernel = doc.value("kernel", json{{"type", "zero"}});
    cfg.solver = parse_solver(doc.value("solver", json()), cfg.dt);
    if (doc.contains("m_drift_variant")) {
        cfg.solver.m_drift_variant =
            parse_m_drift_variant(get_or<std::string>(doc, "m_drift_variant", "", "m_drift_variant"));
    }
    const json initial = doc.value("initial", json::object());
    cfg.phi.spec = initial.value("phi", json(1.0));
    cfg.x = get_or<double>(initial, "x", 0.0, "initial.x");
    const json pert = doc.value("perturbation", json::object());
    cfg.psi.spec = pert.value("phi", cfg.phi.spec);
    cfg.y = get_or<double>(pert, "x", cfg.x, "initial.x");
    cfg.replicas = get_or<std::size_t>(doc, "replicas", 1, "replicas>=1");
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0, "seed");
    cfg.threads = get_or<std::size_t>(doc, "threads", 0, "threads");
    const auto out = get_or<std::string>(doc, "output", "", "output");
    cfg.output = out.empty() ? base_dir / "results" : base_dir / out;
    for (const char* key : {"picard", "obstacle", "coupling", "feller", "markov", "baseline"}) {
        if (doc.contains(key)) cfg.extra[key] = doc.at(key);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config.file", "cannot read config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config.json", std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(doc, path.parent_path());
}

KernelSpec ExperimentConfig::build_kernel() const {
    const json& k = kernel;
    if (!k.is_object()) throw ValidationError("kernel.spec", "'kernel' must be an object");
    const auto type = get_or<std::string>(k, "type", "zero", "kernel.spec");
    if (type == "zero") return KernelSpec::constant(0.0);
    if (type == "constant") return KernelSpec::constant(get_or<double>(k, "c", 0.0, "kernel.spec"));
    if (type == "trigonometric") {
        return KernelSpec::trigonometric(get_or<double>(k, "a0", 0.0, "kernel.spec"),
                                         get_or<std::vector<double>>(k, "cos", {}, "kernel.spec"),
                                         get_or<std::vector<double>>(k, "sin", {}, "kernel.spec"));
    }
    if (type == "file") {
        const auto rel = get_or<std::string>(k, "path", "", "kernel.file");
        if (rel.empty()) throw ValidationError("kernel.file", "kernel file path missing");
        return KernelSpec::read_csv_file((base_dir / rel).string());
    }
    throw ValidationError("kernel.spec", "unknown kernel type '" + type + "'");
}

// --------------------------------------------------------------- validation

namespace {

std::size_t step_count(double T, double dt, const char* rule) {
    const double steps = std::round(T / dt);
    if (steps < 1.0 || std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T)) {
        throw ValidationError(rule, "horizon must be a positive multiple of dt");
    }
    return static_cast<std::size_t>(steps);
}

void require_nonnegative(const PeriodicField& f, const char* what) {
    for (double v : f.values) {
        if (!(v >= 0.0)) throw ValidationError("initial.phi>=0", std::string(what) + " must be >= 0");
    }
}

CouplingConfig coupling_config(const ExperimentConfig& cfg) {
    const json& j = extra_block(cfg, "coupling");
    CouplingConfig c;
    c.T = cfg.T;
    c.replicas = cfg.replicas;
    c.threads = cfg.threads;
    c.delta_cap = get_or<double>(j, "delta_cap", 0.0, "coupling.delta_cap");
    c.merge_threshold = get_or<double>(j, "merge_threshold", c.merge_threshold, "coupling.merge_threshold>0");
    c.mode = parse_coupling_mode(get_or<std::string>(j, "mode", "frozen", "coupling.mode"));
    return c;
}

struct ObstacleSetup {
    double offset, amplitude, drift;
    int mode;
    ObstacleHeat heat;
};

ObstacleSetup obstacle_setup(const ExperimentConfig& cfg) {
    const json& j = extra_block(cfg, "obstacle");
    ObstacleSetup o{get_or<double>(j, "offset", 0.5, "obstacle.v"),
                    get_or<double>(j, "amplitude", 0.5, "obstacle.v"),
                    get_or<double>(j, "drift", -2.0, "obstacle.v"), get_or<int>(j, "mode", 1, "obstacle.v"),
                    ObstacleHeat::backward_euler};
    const auto heat = get_or<std::string>(j, "heat", "backward_euler", "obstacle.heat");
    if (heat == "exponential") {
        o.heat = ObstacleHeat::exponential;
    } else if (heat != "backward_euler") {
        throw ValidationError("obstacle.heat", "obstacle heat must be backward_euler or exponential");
    }
    if (o.offset < std::abs(o.amplitude)) {
        throw ValidationError("obstacle.initial>=0", "need offset >= |amplitude| so that v(0, .) >= 0");
    }
    return o;
}

}  // namespace

std::vector<std::string> validate(const ExperimentConfig& cfg) {
    if (cfg.n_cells < 2) throw ValidationError("grid.n_cells>=2", "grid needs at least 2 cells");
    positive(cfg.dt, "solver.dt>0", "dt");
    positive(cfg.T, "time.T>0", "T");
    if (cfg.replicas < 1) throw ValidationError("replicas>=1", "replicas must be >= 1");
    const GridSpec grid = cfg.grid();
    cfg.build_kernel();
    auto warnings = validate_solver_config(cfg.solver, grid);
    if (cfg.kind != ExperimentKind::markov) step_count(cfg.T, cfg.dt, "time.T=n*dt");
    const PeriodicField phi = cfg.phi.build(grid, cfg.base_dir);
    require_nonnegative(phi, "initial phi");
    switch (cfg.kind) {
        case ExperimentKind::coupling:
        case ExperimentKind::feller: {
            const CouplingConfig cc = coupling_config(cfg);
            if (cc.delta_cap >= cfg.T) throw ValidationError("coupling.delta_cap", "delta_cap must be < T");
            if (!(cfg.solver.noise_amplitude > 0.0)) {
                throw ValidationError("coupling.noise>0", "coupling needs noise_amplitude > 0");
            }
            const PeriodicField psi = cfg.psi.build(grid, cfg.base_dir);
            require_nonnegative(psi, "perturbation phi");
            if (cfg.kind == ExperimentKind::feller) {
                if (cfg.replicas < 2) throw ValidationError("feller.replicas>=2", "feller needs >= 2 replicas");
                const json& j = extra_block(cfg, "feller");
                functional_by_name(get_or<std::string>(j, "functional", "tanh_M", "functional"));
                parse_feller_estimator(get_or<std::string>(j, "estimator", "common_noise", "feller.estimator"));
                for (double s : get_or<std::vector<double>>(j, "scales", default_scales(), "feller.scales")) {
                    if (!(s > 0.0) || s > 1.0) throw ValidationError("feller.scales", "scales must lie in (0, 1]");
                }
            }
            break;
        }
        case ExperimentKind::markov: {
            if (cfg.replicas < 50) throw ValidationError("markov.replicas>=50", "KS panel needs >= 50 replicas");
            const json& j = extra_block(cfg, "markov");
            const double s = get_or<double>(j, "s", 0.1, "markov.times");
            const double t = get_or<double>(j, "t", cfg.T, "markov.times");
            if (!(s >= 0.0)) throw ValidationError("markov.times", "s must be >= 0");
            if (s > 0.0) step_count(s, cfg.dt, "markov.times");
            step_count(t, cfg.dt, "markov.times");
            if (j.contains("t_fresh")) step_count(j.at("t_fresh").get<double>(), cfg.dt, "markov.times");
            break;
        }
        case ExperimentKind::obstacle:
            obstacle_setup(cfg);
            break;
        case ExperimentKind::picard:
            if (cfg.solver.heat != HeatScheme::exponential) {
                throw ValidationError("picard.heat", "Picard solver needs the exponential heat step");
            }
            if (cfg.solver.diffusion != 1.0) {
                throw ValidationError("picard.diffusion=1", "Picard solver uses the unit heat semigroup");
            }
            if (get_or<std::size_t>(extra_block(cfg, "picard"), "iterations", 10, "picard.n_iter>=1") < 1) {
                throw ValidationError("picard.n_iter>=1", "need at least one iteration");
            }
            break;
        case ExperimentKind::baseline:
            if (std::abs(phi.mean() - 1.0) > 1e-9) {
                throw ValidationError("baseline.mass=1", "baseline needs a probability quantile, mean(phi) = 1");
            }
            break;
        case ExperimentKind::simulate:
            break;
    }
    return warnings;
}

// ------------------------------------------------------------------ outputs

namespace {

struct Outputs {
    fs::path dir;
    std::string header;

    std::ofstream open(const std::string& name) const {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
        f << header << '\n';
        return f;
    }

    void table(const std::string& name, const std::vector<std::string>& cols,
               const std::vector<std::vector<double>>& rows) const {
        auto f = open(name);
        f << std::setprecision(17);
        for (std::size_t c = 0; c < cols.size(); ++c) f << (c ? "," : "") << cols[c];
        f << '\n';
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) f << (c ? "," : "") << row[c];
            f << '\n';
        }
    }
};

SeedSpec replica_seed(const ExperimentConfig& cfg, std::size_t r) { return SeedSpec{cfg.seed, r, 0}; }

json run_simulate(const ExperimentConfig& cfg, const Outputs& out) {
    const GridSpec grid = cfg.grid();
    const KernelSpec kernel = cfg.build_kernel();
    const PeriodicField phi = cfg.phi.build(grid, cfg.base_dir);
    const std::size_t R = cfg.replicas;
    std::vector<std::vector<double>> rows(R);
    std::optional<Trajectory> first;
    parallel_for(R, [&](std::size_t r) {
        SolverConfig sc = cfg.solver;
        if (r > 0) {
            sc.snapshot_stride = 0;
            sc.record_ledger = false;
        }
        Trajectory traj = simulate(phi, cfg.x, cfg.T, kernel, sc, replica_seed(cfg, r));
        const auto& fin = traj.final_state();
        rows[r] = {static_cast<double>(r), fin.M, fin.g.l2_norm(), fin.g.min(), traj.eta_total,
                   traj.sup_g_l2_squared(), traj.tau_time ? *traj.tau_time : std::nan("")};
        if (r == 0) first = std::move(traj);
    }, cfg.threads);

    {
        auto f = out.open("trajectory.csv");
        write_trajectory_csv(f, *first);
    }
    if (cfg.solver.snapshot_stride > 0) {
        auto f = out.open("snapshots.csv");
        write_snapshots_csv(f, *first);
    }
    {
        std::vector<std::vector<double>> z;
        for (const auto& st : first->states) z.push_back(st.g.values);
        if (cfg.solver.snapshot_stride == 1) {
            auto f = out.open("ledger.csv");
            write_ledger_csv(f, first->ledger, cfg.dt, z);
        }
    }
    out.table("replicas.csv", {"replica", "M_T", "g_l2_T", "g_min_T", "eta_total", "sup_g_l2_sq", "tau_time"},
              rows);
    std::size_t reflected = 0;
    for (const auto& row : rows) reflected += row[4] > 0.0 ? 1 : 0;
    return {{"reflection_active_fraction", static_cast<double>(reflected) / static_cast<double>(R)},
            {"n_steps", first->M_path.size() - 1}};
}

json run_picard(const ExperimentConfig& cfg, const Outputs& out) {
    const GridSpec grid = cfg.grid();
    const KernelSpec kernel = cfg.build_kernel();
    const PeriodicField phi = cfg.phi.build(grid, cfg.base_dir);
    const auto iters = get_or<std::size_t>(extra_block(cfg, "picard"), "iterations", 10, "picard.n_iter>=1");
    const SeedSpec seed = replica_seed(cfg, 0);
    const PicardResult res = picard_solve(phi, cfg.x, cfg.T, kernel, cfg.solver, seed, iters);
    SolverConfig sc = cfg.solver;
    sc.mode = StepMode::projected;
    const Trajectory sim = simulate(phi, cfg.x, cfg.T, kernel, sc, seed);
    const double gap = sup_distance(res.trajectory.final_state().g, sim.final_state().g);

    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < res.distances.size(); ++k) {
        rows.push_back({static_cast<double>(k + 2), res.distances[k]});
    }
    out.table("picard.csv", {"iteration", "sup_distance"}, rows);
    {
        auto f = out.open("trajectory.csv");
        write_trajectory_csv(f, res.trajectory);
    }
    const auto& fin = res.trajectory.final_state();
    out.table("replicas.csv", {"replica", "M_T", "g_l2_T", "eta_total"},
              {{0.0, fin.M, fin.g.l2_norm(), res.trajectory.eta_total}});
    json r{{"iterations", iters},
           {"distances", res.distances},
           {"diverged", res.diverged},
           {"sup_gap_to_simulate", gap}};
    r["converged_after"] = res.converged_after ? json(*res.converged_after) : json(nullptr);
    return r;
}

json run_obstacle(const ExperimentConfig& cfg, const Outputs& out) {
    const GridSpec grid = cfg.grid();
    const ObstacleSetup o = obstacle_setup(cfg);
    const std::size_t N = step_count(cfg.T, cfg.dt, "time.T=n*dt");
    const double w = 2.0 * std::numbers::pi * o.mode;
    const ObstaclePath v = ObstaclePath::from_function(grid, cfg.dt, N, [&](double t, double x) {
        return o.offset + o.amplitude * std::cos(w * x) + o.drift * t;
    });
    const SpectralPlan plan(grid, cfg.solver.spectrum);
    const ObstacleSolution sol = solve_obstacle(v, plan, o.heat);
    double residual = 0.0;
    for (const auto& test : trig_test_functions(grid, 3)) {
        residual = std::max(residual, weak_form_residual(sol, test, plan));
    }
    const double comp = complementarity_defect(sol, v);
    {
        auto f = out.open("obstacle.csv");
        write_obstacle_csv(f, sol);
    }
    double min_gap = 0.0;
    for (std::size_t j = 0; j < sol.z.size(); ++j) min_gap = std::min(min_gap, sol.z[j] + v.values[j]);
    out.table("replicas.csv", {"replica", "eta_total", "complementarity", "sup_z", "sup_v"},
              {{0.0, sol.eta.total_mass(), comp, sol.sup_norm(), v.sup_norm()}});
    return {{"complementarity_defect", comp},
            {"weak_residual", residual},
            {"min_z_plus_v", min_gap},
            {"sup_z", sol.sup_norm()},
            {"sup_v", v.sup_norm()},
            {"eta_total", sol.eta.total_mass()}};
}

json run_coupling(const ExperimentConfig& cfg, const Outputs& out) {
    const GridSpec grid = cfg.grid();
    const KernelSpec kernel = cfg.build_kernel();
    const PeriodicField phi = cfg.phi.build(grid, cfg.base_dir);
    const PeriodicField psi = cfg.psi.build(grid, cfg.base_dir);
    const CouplingConfig cc = coupling_config(cfg);
    const std::size_t R = cfg.replicas;
    std::vector<CouplingResult> runs(R);
    parallel_for(R, [&](std::size_t r) {
        runs[r] = run_coupled_pair(phi, cfg.x, psi, cfg.y, kernel, cc, cfg.solver, replica_seed(cfg, r));
    }, cfg.threads);
    {
        auto f = out.open("coupling.csv");
        write_coupling_csv(f, runs);
    }
    std::vector<std::vector<double>> rows;
    std::vector<double> z, qv, dev;
    std::size_t merged = 0, clamped = 0;
    double worst_g = 0.0, worst_M = 0.0, worst_bridge = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        const auto& run = runs[r];
        rows.push_back({static_cast<double>(r), run.merge_time ? *run.merge_time : std::nan(""),
                        run.ledger.log_density, run.ledger.density(), run.ledger.quadratic_variation,
                        run.bridge_integral, run.bound_excess_g, run.bound_excess_M});
        z.push_back(run.ledger.density());
        qv.push_back(run.ledger.quadratic_variation);
        dev.push_back(std::abs(1.0 - run.ledger.density()));
        merged += run.coupled ? 1 : 0;
        clamped += run.ledger.clamped ? 1 : 0;
        worst_g = std::max(worst_g, run.bound_excess_g);
        worst_M = std::max(worst_M, run.bound_excess_M);
        if (run.initial_distance_sq > 0.0) {
            worst_bridge = std::max(worst_bridge, run.bridge_integral * cfg.T / run.initial_distance_sq);
        }
    }
    out.table("replicas.csv", {"replica", "merge_time", "log_density", "density", "quadratic_variation",
                               "bridge_integral", "bound_excess_g", "bound_excess_M"},
              rows);
    const auto zm = mean_estimate(z);
    const double eqv = mean_estimate(qv).mean;
    return {{"merged_fraction", static_cast<double>(merged) / static_cast<double>(R)},
            {"clamped_paths", clamped},
            {"mean_density", zm.mean},
            {"density_stderr", R > 1 ? json(zm.stderr_) : json(nullptr)},
            {"pinsker_tv_bound", 0.5 * std::sqrt(eqv)},
            {"functional_bound", std::sqrt(eqv)},
            {"direct_tv", 0.5 * mean_estimate(dev).mean},
            {"max_bound_excess_g", worst_g},
            {"max_bound_excess_M", worst_M},
            {"max_bridge_ratio", worst_bridge},
            {"input_l2_distance", l2_distance(phi, psi)},
            {"input_M_distance", std::abs(cfg.x - cfg.y)}};
}

json run_feller(const ExperimentConfig& cfg, const Outputs& out) {
    const GridSpec grid = cfg.grid();
    const KernelSpec kernel = cfg.build_kernel();
    const PeriodicField phi = cfg.phi.build(grid, cfg.base_dir);
    const PeriodicField target = cfg.psi.build(grid, cfg.base_dir);
    const json& j = extra_block(cfg, "feller");
    const Functional F = functional_by_name(get_or<std::string>(j, "functional", "tanh_M", "functional"));
    const FellerEstimator est =
        parse_feller_estimator(get_or<std::string>(j, "estimator", "common_noise", "feller.estimator"));
    const auto scales = get_or<std::vector<double>>(j, "scales", default_scales(), "feller.scales");
    CouplingConfig cc = coupling_config(cfg);

    // ψ_ε = φ + ε (ψ - φ), y_ε = x + ε (y - x).
    std::vector<std::vector<double>> rows;
    std::vector<FellerEstimate> ests;
    std::vector<double> d12s, gaps;
    for (std::size_t k = 0; k < scales.size(); ++k) {
        const double e = scales[k];
        PeriodicField psi(grid);
        for (std::size_t i = 0; i < grid.n_cells(); ++i) psi[i] = phi[i] + e * (target[i] - phi[i]);
        const double y = cfg.x + e * (cfg.y - cfg.x);
        const SeedSpec seed{cfg.seed, 0, 0};
        ests.push_back(strong_feller_probe(F, phi, cfg.x, psi, y, kernel, cc, cfg.solver, seed, est));
        const auto& fe = ests.back();
        rows.push_back({e, fe.input_distance, fe.input_d12, fe.estimate, fe.signed_estimate, fe.mc_stderr});
        d12s.push_back(fe.input_d12);
        gaps.push_back(fe.estimate);
    }
    out.table("feller.csv", {"scale", "input_distance", "d12", "estimate", "signed_estimate", "stderr"}, rows);
    if (est != FellerEstimator::independent) {
        std::vector<std::string> cols{"replica"};
        for (std::size_t k = 0; k < scales.size(); ++k) cols.push_back("scale_" + std::to_string(k));
        std::vector<std::vector<double>> rep(cfg.replicas);
        for (std::size_t r = 0; r < cfg.replicas; ++r) {
            rep[r].push_back(static_cast<double>(r));
            for (const auto& fe : ests) rep[r].push_back(fe.samples[r]);
        }
        out.table("replicas.csv", cols, rep);
    }
    json result{{"functional", F.id}, {"scales", scales}, {"d12", d12s}, {"estimates", gaps}};
    if (scales.size() >= 2) {
        const LinearFit fit = linear_fit(d12s, gaps);
        result["fit"] = {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared}};
    }
    return result;
}

json run_markov(const ExperimentConfig& cfg, const Outputs& out) {
    const GridSpec grid = cfg.grid();
    const KernelSpec kernel = cfg.build_kernel();
    const PeriodicField phi = cfg.phi.build(grid, cfg.base_dir);
    const json& j = extra_block(cfg, "markov");
    const double s = get_or<double>(j, "s", 0.1, "markov.times");
    const double t = get_or<double>(j, "t", cfg.T, "markov.times");
    std::optional<double> t_fresh;
    if (j.contains("t_fresh")) t_fresh = j.at("t_fresh").get<double>();
    const auto res = markov_shift_test(phi, cfg.x, s, t, kernel, cfg.solver, SeedSpec{cfg.seed, 0, 0},
                                       cfg.replicas, t_fresh, cfg.threads);
    auto f = out.open("markov.csv");
    f << "functional,statistic,p_value\n" << std::setprecision(17);
    for (std::size_t k = 0; k < res.panel.size(); ++k) {
        f << res.panel[k] << ',' << res.statistics[k] << ',' << res.p_values[k] << '\n';
    }
    return {{"panel", res.panel}, {"p_values", res.p_values}, {"statistics", res.statistics},
            {"min_p", res.min_p}, {"s", s}, {"t", t}, {"t_fresh", t_fresh.value_or(t)}};
}

json run_baseline(const ExperimentConfig& cfg, const Outputs& out) {
    const GridSpec grid = cfg.grid();
    const KernelSpec kernel = cfg.build_kernel();
    const PeriodicField phi = cfg.phi.build(grid, cfg.base_dir);
    const EquivariantMap F0 = reconstruct_A(phi, cfg.x);
    const EquivariantMap FT = evolve_quantile(F0, kernel, cfg.T, cfg.dt);
    SolverConfig sc = cfg.solver;
    sc.noise_amplitude = 0.0;
    sc.diffusion = 0.0;
    sc.snapshot_stride = 0;
    sc.record_ledger = false;
    const Trajectory traj = simulate(phi, cfg.x, cfg.T, kernel, sc, SeedSpec{cfg.seed, 0, 0});
    const EquivariantMap AT = reconstruct_A(traj.final_state().g, traj.final_state().M);
    double gap = 0.0;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < grid.n_cells(); ++i) {
        gap = std::max(gap, std::abs(AT.base()[i] - FT.base()[i]));
        rows.push_back({grid.node(i), F0.base()[i], FT.base()[i], AT.base()[i]});
    }
    out.table("baseline.csv", {"u", "F0", "F_T", "A_T_zero_noise"}, rows);
    out.table("replicas.csv", {"replica", "sup_gap", "eta_total"}, {{0.0, gap, traj.eta_total}});
    return {{"sup_gap_zero_noise", gap}, {"eta_total_zero_noise", traj.eta_total}};
}

// Minimal CSV reader for replicas.csv: skips '#' lines, first line is the header.
void read_table(const fs::path& path, std::vector<std::string>& cols, std::vector<std::vector<double>>& rows) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        if (!header) {
            while (std::getline(ss, cell, ',')) cols.push_back(cell);
            header = true;
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                row.push_back(std::nan(""));
            }
        }
        rows.push_back(std::move(row));
    }
}

}  // namespace

json run_experiment(const ExperimentConfig& cfg, bool quiet) {
    const auto warnings = validate(cfg);
    if (!quiet) {
        for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    }
    fs::create_directories(cfg.output);
    const Outputs out{cfg.output, "# seed=" + std::to_string(cfg.seed) + " experiment=" + to_string(cfg.kind)};
    // Remove a previous summary first so a failed run never leaves a stale one.
    fs::remove(cfg.output / "summary.json");
    json results;
    std::size_t expected = cfg.replicas;
    switch (cfg.kind) {
        case ExperimentKind::simulate: results = run_simulate(cfg, out); break;
        case ExperimentKind::picard: results = run_picard(cfg, out); expected = 1; break;
        case ExperimentKind::obstacle: results = run_obstacle(cfg, out); expected = 1; break;
        case ExperimentKind::coupling: results = run_coupling(cfg, out); break;
        case ExperimentKind::feller: results = run_feller(cfg, out); break;
        case ExperimentKind::markov: results = run_markov(cfg, out); expected = 0; break;
        case ExperimentKind::baseline: results = run_baseline(cfg, out); expected = 1; break;
    }
    const json record{{"schema_version", kSummarySchemaVersion},
                      {"experiment", to_string(cfg.kind)},
                      {"seed", cfg.seed},
                      {"replicas_expected", expected},
                      {"n_cells", cfg.n_cells},
                      {"dt", cfg.dt},
                      {"T", cfg.T},
                      {"warnings", warnings},
                      {"results", results}};
    {
        std::ofstream f(cfg.output / "results.json", std::ios::binary);
        f << record.dump(2) << '\n';
    }
    json summary = emit_summary(cfg.output);
    std::ofstream f(cfg.output / "summary.json", std::ios::binary);
    f << summary.dump(2) << '\n';
    return summary;
}

json emit_summary(const fs::path& dir) {
    std::ifstream in(dir / "results.json");
    if (!in) throw std::runtime_error("missing results.json in '" + dir.string() + "'");
    const json record = json::parse(in);
    json summary{{"schema_version", kSummarySchemaVersion},
                 {"experiment", record.at("experiment")},
                 {"seed", record.at("seed")},
                 {"results", record.at("results")},
                 {"warnings", record.value("warnings", json::array())}};
    const std::size_t expected = record.value("replicas_expected", std::size_t{0});
    const fs::path table = dir / "replicas.csv";
    json columns = json::object();
    std::size_t found = 0;
    if (fs::exists(table)) {
        std::vector<std::string> cols;
        std::vector<std::vector<double>> rows;
        read_table(table, cols, rows);
        found = rows.size();
        for (std::size_t c = 1; c < cols.size(); ++c) {
            std::vector<double> vals;
            for (const auto& row : rows) {
                if (c < row.size() && std::isfinite(row[c])) vals.push_back(row[c]);
            }
            const auto m = mean_estimate(vals);
            json entry{{"count", vals.size()}};
            entry["mean"] = vals.empty() ? json(nullptr) : json(m.mean);
            entry["stderr"] = vals.size() < 2 ? json(nullptr) : json(m.stderr_);
            columns[cols[c]] = entry;
        }
    }
    summary["replicas_expected"] = expected;
    summary["replicas_found"] = found;
    summary["partial"] = expected > 0 && found != expected;
    summary["columns"] = columns;
    return summary;
}

// ---------------------------------------------------------------------- cli

namespace {

void report_error(const std::string& kind, const std::string& rule, const std::string& message) {
    const json err{{"error", kind}, {"rule", rule}, {"message", message}};
    std::cerr << err.dump() << '\n';
}

}  // namespace

int run_cli(const fs::path& config_path, const RunOptions& options) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_file(config_path);
        if (options.replicas) cfg.replicas = *options.replicas;
        if (options.seed) cfg.seed = *options.seed;
        if (options.output) cfg.output = *options.output;
        validate(cfg);
    } catch (const ValidationError& e) {
        report_error("validation", e.rule(), e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error("validation", "config", e.what());
        return 2;
    }
    try {
        const json summary = run_experiment(cfg, options.quiet);
        if (!options.quiet) {
            std::cout << to_string(cfg.kind) << ": wrote " << cfg.output.string() << '\n';
        }
        return summary.value("partial", false) ? 1 : 0;
    } catch (const ValidationError& e) {
        report_error("validation", e.rule(), e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error("runtime", "runtime", e.what());
        return 1;
    }
}

}  // namespace torusflow
