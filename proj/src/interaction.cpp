#include "torusflow/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace torusflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void trig_value(const TrigModes& m, double u, double& v, double& d) noexcept {
    const std::size_t K = std::max(m.cos_coeffs.size(), m.sin_coeffs.size());
    v = m.a0;
    d = 0.0;
    if (K == 0) return;
    const double c1 = std::cos(kTwoPi * u);
    const double s1 = std::sin(kTwoPi * u);
    double c = c1, s = s1;
    for (std::size_t k = 1; k <= K; ++k) {
        const double a = k <= m.cos_coeffs.size() ? m.cos_coeffs[k - 1] : 0.0;
        const double b = k <= m.sin_coeffs.size() ? m.sin_coeffs[k - 1] : 0.0;
        v += a * c + b * s;
        d += kTwoPi * static_cast<double>(k) * (b * c - a * s);
        const double cn = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = cn;
    }
}

}  // namespace

// ------------------------------------------------------------------ kernels

KernelSpec KernelSpec::constant(double c) { return trigonometric(c, {}, {}, 16); }

KernelSpec KernelSpec::trigonometric(double a0, std::vector<double> cos_coeffs,
                                     std::vector<double> sin_coeffs, std::size_t samples) {
    TrigModes modes{a0, std::move(cos_coeffs), std::move(sin_coeffs)};
    double bound = std::abs(a0);
    const std::size_t K = std::max(modes.cos_coeffs.size(), modes.sin_coeffs.size());
    for (std::size_t k = 1; k <= K; ++k) {
        const double a = k <= modes.cos_coeffs.size() ? modes.cos_coeffs[k - 1] : 0.0;
        const double b = k <= modes.sin_coeffs.size() ? modes.sin_coeffs[k - 1] : 0.0;
        bound += (std::abs(a) + std::abs(b)) * std::max(1.0, kTwoPi * static_cast<double>(k));
    }
    GridSpec grid(samples);
    PeriodicField h(grid), hp(grid);
    for (std::size_t j = 0; j < samples; ++j) trig_value(modes, grid.node(j), h[j], hp[j]);
    return KernelSpec(std::move(h), std::move(hp), bound, std::move(modes));
}

KernelSpec KernelSpec::sampled(PeriodicField h, PeriodicField h_prime) {
    require_same_grid(h.grid, h_prime.grid, "KernelSpec::sampled");
    KernelSpec k(std::move(h), std::move(h_prime), 0.0, std::nullopt);
    const std::size_t fine = 8 * k.h_.size();
    double sup = 0.0;
    for (std::size_t j = 0; j < fine; ++j) {
        double v = 0.0, d = 0.0;
        k.value_and_derivative(static_cast<double>(j) / static_cast<double>(fine), v, d);
        sup = std::max({sup, std::abs(v), std::abs(d)});
    }
    k.bound_ = 1.01 * sup;
    return k;
}

KernelSpec KernelSpec::read_csv(std::istream& is) {
    std::string line;
    bool header = false;
    std::vector<double> us, hs, hps;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line != "u,h,h_prime") {
                throw ValidationError("kernel.file", "kernel CSV header must be 'u,h,h_prime'");
            }
            header = true;
            continue;
        }
        std::istringstream row(line);
        double u = 0.0, h = 0.0, hp = 0.0;
        char c1 = 0, c2 = 0;
        if (!(row >> u >> c1 >> h >> c2 >> hp) || c1 != ',' || c2 != ',' || !std::isfinite(h) ||
            !std::isfinite(hp)) {
            throw ValidationError("kernel.file", "malformed kernel row '" + line + "'");
        }
        us.push_back(u);
        hs.push_back(h);
        hps.push_back(hp);
    }
    if (!header || hs.size() < 4) {
        throw ValidationError("kernel.file", "kernel CSV needs a header and at least 4 rows");
    }
    const double m = static_cast<double>(hs.size());
    for (std::size_t j = 0; j < us.size(); ++j) {
        if (std::abs(us[j] - static_cast<double>(j) / m) > 1e-9) {
            throw ValidationError("kernel.file", "kernel grid must be uniform with u_j = j/m");
        }
    }
    GridSpec grid(hs.size());
    return sampled(PeriodicField(grid, std::move(hs)), PeriodicField(grid, std::move(hps)));
}

KernelSpec KernelSpec::read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("kernel.file", "cannot open kernel file '" + path + "'");
    return read_csv(in);
}

bool KernelSpec::is_zero() const noexcept {
    if (bound_ != 0.0) return false;
    return true;
}

void KernelSpec::value_and_derivative(double u, double& v, double& d) const noexcept {
    if (modes_) {
        trig_value(*modes_, u, v, d);
        return;
    }
    const std::size_t m = h_.size();
    const double s = u * static_cast<double>(m);
    const double fl = std::floor(s);
    const double tau = s - fl;
    auto j = static_cast<std::ptrdiff_t>(fl) % static_cast<std::ptrdiff_t>(m);
    if (j < 0) j += static_cast<std::ptrdiff_t>(m);
    const auto j0 = static_cast<std::size_t>(j);
    const std::size_t j1 = j0 + 1 == m ? 0 : j0 + 1;
    const double dx = 1.0 / static_cast<double>(m);
    const double p0 = h_[j0], p1 = h_[j1];
    const double m0 = h_prime_[j0] * dx, m1 = h_prime_[j1] * dx;
    const double t2 = tau * tau, t3 = t2 * tau;
    v = (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + tau) * m0 + (-2 * t3 + 3 * t2) * p1 +
        (t3 - t2) * m1;
    d = ((6 * t2 - 6 * tau) * p0 + (3 * t2 - 4 * tau + 1) * m0 + (-6 * t2 + 6 * tau) * p1 +
         (3 * t2 - 2 * tau) * m1) /
        dx;
}

double KernelSpec::value(double u) const noexcept {
    double v = 0.0, d = 0.0;
    value_and_derivative(u, v, d);
    return v;
}

double KernelSpec::derivative(double u) const noexcept {
    double v = 0.0, d = 0.0;
    value_and_derivative(u, v, d);
    return d;
}

void write_kernel_csv(std::ostream& os, const KernelSpec& kernel) {
    os << "u,h,h_prime\n" << std::setprecision(17);
    const auto& grid = kernel.h().grid;
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        os << grid.node(j) << ',' << kernel.h()[j] << ',' << kernel.h_prime()[j] << '\n';
    }
}

// ------------------------------------------------------------------- drifts

namespace {

// 4-point Gauss-Legendre on [0,1].
constexpr double kGLx[4] = {0.069431844202973712, 0.33000947820757187, 0.66999052179242813,
                            0.93056815579702629};
constexpr double kGLw[4] = {0.17392742256872693, 0.32607257743127307, 0.32607257743127307,
                            0.17392742256872693};

template <class Fn>
double integrate_measure(const TorusMeasure& mu, Fn&& f) {
    double s = 0.0;
    if (mu.is_atomic()) {
        for (const auto& a : mu.atoms()) s += a.weight * f(a.location);
        return s;
    }
    const auto& hist = mu.histogram();
    const double dx = hist.grid.spacing();
    for (std::size_t j = 0; j < hist.mass.size(); ++j) {
        if (hist.mass[j] == 0.0) continue;
        double cell = 0.0;
        for (int q = 0; q < 4; ++q) cell += kGLw[q] * f(hist.grid.node(j) + kGLx[q] * dx);
        s += hist.mass[j] * cell;
    }
    return s;
}

}  // namespace

double DriftEvaluator::b(double u, const TorusMeasure& mu) const {
    return integrate_measure(mu, [&](double v) { return kernel_.value(u - v); });
}

double DriftEvaluator::b_prime(double u, const TorusMeasure& mu) const {
    return integrate_measure(mu, [&](double v) { return kernel_.derivative(u - v); });
}

void DriftEvaluator::along(const EquivariantMap& A, std::vector<double>& bval,
                           std::vector<double>& bder) const {
    const std::size_t n = A.grid().n_cells();
    const double inv_n = 1.0 / static_cast<double>(n);
    // Trapezoid weights on nodes 0..n (node n closes the period).
    auto weight = [&](std::size_t a) { return (a == 0 || a == n) ? 0.5 * inv_n : inv_n; };
    thread_local std::vector<double> vals;
    vals.resize(n + 1);
    bval.assign(n + 1, 0.0);
    bder.assign(n + 1, 0.0);
    for (std::size_t a = 0; a < n; ++a) vals[a] = A.base()[a];
    vals[n] = A.base()[0] + A.winding();

    if (const auto& modes = kernel_.modes()) {
        const std::size_t K = std::max(modes->cos_coeffs.size(), modes->sin_coeffs.size());
        for (auto& v : bval) v = modes->a0;
        if (K == 0) return;
        thread_local std::vector<double> c1, s1, c, s;
        c1.resize(n + 1);
        s1.resize(n + 1);
        for (std::size_t a = 0; a <= n; ++a) {
            c1[a] = std::cos(kTwoPi * vals[a]);
            s1[a] = std::sin(kTwoPi * vals[a]);
        }
        c = c1;
        s = s1;
        for (std::size_t k = 1; k <= K; ++k) {
            const double ak = k <= modes->cos_coeffs.size() ? modes->cos_coeffs[k - 1] : 0.0;
            const double bk = k <= modes->sin_coeffs.size() ? modes->sin_coeffs[k - 1] : 0.0;
            double C = 0.0, S = 0.0;
            for (std::size_t a = 0; a <= n; ++a) {
                C += weight(a) * c[a];
                S += weight(a) * s[a];
            }
            const double kk = kTwoPi * static_cast<double>(k);
            for (std::size_t i = 0; i <= n; ++i) {
                const double cc = c[i] * C + s[i] * S;  // ∫ cos(2πk(A_i - A(a))) da
                const double sc = s[i] * C - c[i] * S;  // ∫ sin(2πk(A_i - A(a))) da
                bval[i] += ak * cc + bk * sc;
                bder[i] += kk * (bk * cc - ak * sc);
            }
            if (k < K) {
                for (std::size_t a = 0; a <= n; ++a) {
                    const double cn = c[a] * c1[a] - s[a] * s1[a];
                    s[a] = s[a] * c1[a] + c[a] * s1[a];
                    c[a] = cn;
                }
            }
        }
        return;
    }
    for (std::size_t i = 0; i <= n; ++i) {
        double sv = 0.0, sd = 0.0;
        for (std::size_t a = 0; a <= n; ++a) {
            double v = 0.0, d = 0.0;
            kernel_.value_and_derivative(vals[i] - vals[a], v, d);
            sv += weight(a) * v;
            sd += weight(a) * d;
        }
        bval[i] = sv;
        bder[i] = sd;
    }
}

void DriftEvaluator::evaluate(const EquivariantMap& A, std::span<const double> g,
                              std::span<double> beta, double& m_unweighted,
                              double& m_weighted) const {
    const std::size_t n = A.grid().n_cells();
    const double inv_n = 1.0 / static_cast<double>(n);
    auto weight = [&](std::size_t a) { return (a == 0 || a == n) ? 0.5 * inv_n : inv_n; };
    thread_local std::vector<double> bval, bder;
    along(A, bval, bder);
    for (std::size_t i = 0; i < n; ++i) beta[i] = bder[i];

    const auto& modes = kernel_.modes();
    if (modes && modes->cos_coeffs.empty() && modes->sin_coeffs.empty()) {
        // Constant kernel: keep m exact.
        double wg = 0.0;
        for (std::size_t a = 0; a <= n; ++a) wg += weight(a) * g[a % n];
        m_unweighted = modes->a0;
        m_weighted = modes->a0 * wg;
        return;
    }
    double mu = 0.0, mw = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        mu += weight(i) * bval[i];
        mw += weight(i) * bval[i] * g[i % n];
    }
    m_unweighted = mu;
    m_weighted = mw;
}

StateDrift DriftEvaluator::evaluate(const CoupledState& state) const {
    StateDrift out;
    out.beta.resize(state.g.size());
    const EquivariantMap A = reconstruct_A(state.g, state.M);
    evaluate(A, state.g.values, out.beta, out.m_unweighted, out.m_weighted);
    return out;
}

double eval_b(const DriftEvaluator& ev, double u, const TorusMeasure& mu) { return ev.b(u, mu); }

double eval_b_prime(const DriftEvaluator& ev, double u, const TorusMeasure& mu) {
    return ev.b_prime(u, mu);
}

PeriodicField beta_field(const DriftEvaluator& ev, const CoupledState& state) {
    return PeriodicField(state.g.grid, ev.evaluate(state).beta);
}

double m_drift(const DriftEvaluator& ev, const CoupledState& state, MDriftVariant variant) {
    return ev.evaluate(state).m(variant);
}

MDriftVariant parse_m_drift_variant(const std::string& name) {
    if (name == "unweighted") return MDriftVariant::unweighted;
    if (name == "weighted") return MDriftVariant::weighted;
    throw ValidationError("m_drift_variant", "unknown m-drift variant '" + name +
                                                 "' (expected unweighted or weighted)");
}

// ------------------------------------------------------------------- probes

namespace {

std::vector<Atom> random_atoms(GaussianStream& rng) {
    const auto count = 1 + static_cast<std::size_t>(rng.uniform() * 6.0);
    std::vector<Atom> atoms(std::min<std::size_t>(count, 6));
    for (auto& a : atoms) {
        a.location = rng.uniform();
        a.weight = 0.05 + rng.uniform();
    }
    return atoms;
}

}  // namespace

AssumptionReport probe_assumptions(const KernelSpec& kernel, std::size_t samples,
                                   const SeedSpec& seed) {
    if (samples < 2) throw ValidationError("probe.samples>=2", "need at least 2 samples");
    const DriftEvaluator ev(kernel);
    GaussianStream rng(seed);
    AssumptionReport rep;
    constexpr std::size_t kScan = 256;
    for (std::size_t i = 0; i < samples; ++i) {
        auto atoms = random_atoms(rng);
        const double u = rng.uniform();
        const bool near = rng.uniform() < 0.5;
        std::vector<Atom> other;
        double v = 0.0;
        if (near) {
            other = atoms;
            for (auto& a : other) a.location += 1e-3 * rng.normal();
            v = u + 1e-3 * rng.normal();
        } else {
            other = random_atoms(rng);
            v = rng.uniform();
        }
        const TorusMeasure mu = TorusMeasure::normalised_atoms(atoms);
        const TorusMeasure nu = TorusMeasure::normalised_atoms(other);
        const double dist = torus_distance(u, v) +
                            std::sqrt(quantile_distance_sq(mu.quantile(0.0), nu.quantile(0.0), 0.0));
        if (dist > 0.0) {
            rep.lipschitz_estimate_b =
                std::max(rep.lipschitz_estimate_b, std::abs(ev.b(u, mu) - ev.b(v, nu)) / dist);
            rep.lipschitz_estimate_b_prime =
                std::max(rep.lipschitz_estimate_b_prime,
                         std::abs(ev.b_prime(u, mu) - ev.b_prime(v, nu)) / dist);
        }
        for (std::size_t j = 0; j < kScan; ++j) {
            const double w = static_cast<double>(j) / static_cast<double>(kScan);
            rep.sup_b = std::max(rep.sup_b, std::abs(ev.b(w, mu)));
            rep.sup_b_prime = std::max(rep.sup_b_prime, std::abs(ev.b_prime(w, mu)));
        }
        rep.sample_count = i + 1;
    }
    return rep;
}

}  // namespace torusflow
