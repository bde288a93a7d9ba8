#include "torusflow/heat.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

namespace torusflow {

namespace {

// FFTW's planner is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<std::complex<double>>& scratch_modes(std::size_t size) {
    thread_local std::vector<std::complex<double>> buf;
    if (buf.size() < size) buf.resize(size);
    return buf;
}

}  // namespace

struct SpectralPlan::Impl {
    GridSpec grid;
    Spectrum spectrum;
    std::vector<double> lambda;
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;

    Impl(GridSpec g, Spectrum s) : grid(g), spectrum(s) {
        const std::size_t n = g.n_cells();
        const std::size_t m = n / 2 + 1;
        lambda.resize(m);
        const double pi = std::numbers::pi;
        const double nn = static_cast<double>(n);
        for (std::size_t k = 0; k < m; ++k) {
            const double kk = static_cast<double>(k);
            if (s == Spectrum::continuum) {
                lambda[k] = (2.0 * pi * kk) * (2.0 * pi * kk);
            } else {
                const double sn = std::sin(pi * kk / nn);
                lambda[k] = 4.0 * nn * nn * sn * sn;
            }
        }
        lambda[0] = 0.0;

        std::lock_guard<std::mutex> lock(planner_mutex());
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(m);
        const int ni = static_cast<int>(n);
        r2c = fftw_plan_dft_r2c_1d(ni, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
        c2r = fftw_plan_dft_c2r_1d(ni, out, in, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
    }

    ~Impl() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(r2c);
        fftw_destroy_plan(c2r);
    }

    Impl(const Impl&) = delete;
    Impl& operator=(const Impl&) = delete;
};

SpectralPlan::SpectralPlan(GridSpec grid, Spectrum spectrum)
    : impl_(std::make_shared<const Impl>(grid, spectrum)) {}

const GridSpec& SpectralPlan::grid() const noexcept { return impl_->grid; }
Spectrum SpectralPlan::spectrum() const noexcept { return impl_->spectrum; }
std::size_t SpectralPlan::n_modes() const noexcept { return impl_->lambda.size(); }
double SpectralPlan::eigenvalue(std::size_t k) const noexcept { return impl_->lambda[k]; }
std::span<const double> SpectralPlan::eigenvalues() const noexcept { return impl_->lambda; }

void SpectralPlan::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    // r2c out-of-place preserves its input.
    fftw_execute_dft_r2c(impl_->r2c, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
}

void SpectralPlan::backward(std::span<const std::complex<double>> in, std::span<double> out) const {
    const std::size_t m = n_modes();
    auto& buf = scratch_modes(m);
    std::copy(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(m), buf.begin());
    fftw_execute_dft_c2r(impl_->c2r, reinterpret_cast<fftw_complex*>(buf.data()), out.data());
    const double inv = 1.0 / static_cast<double>(grid().n_cells());
    for (double& v : out) v *= inv;
}

void SpectralPlan::apply_multiplier(std::span<const double> in, std::span<double> out,
                                    std::span<const double> multiplier) const {
    const std::size_t m = n_modes();
    const double inv = 1.0 / static_cast<double>(grid().n_cells());
    auto& buf = scratch_modes(m);
    fftw_execute_dft_r2c(impl_->r2c, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(buf.data()));
    for (std::size_t k = 0; k < m; ++k) buf[k] *= multiplier[k] * inv;
    fftw_execute_dft_c2r(impl_->c2r, reinterpret_cast<fftw_complex*>(buf.data()), out.data());
}

std::vector<double> SpectralPlan::semigroup_multiplier(double t) const {
    std::vector<double> m(n_modes());
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = std::exp(-impl_->lambda[k] * t);
    return m;
}

std::vector<double> SpectralPlan::resolvent_multiplier(double dt) const {
    std::vector<double> m(n_modes());
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = 1.0 / (1.0 + impl_->lambda[k] * dt);
    return m;
}

void SpectralPlan::semigroup(std::span<const double> in, std::span<double> out, double t) const {
    if (t < 0.0) throw ValidationError("heat.t>=0", "semigroup time must be nonnegative");
    if (t == 0.0) {
        if (in.data() != out.data()) std::copy(in.begin(), in.end(), out.begin());
        return;
    }
    const auto m = semigroup_multiplier(t);
    apply_multiplier(in, out, m);
}

void SpectralPlan::laplacian(std::span<const double> in, std::span<double> out) const {
    std::vector<double> m(n_modes());
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = -impl_->lambda[k];
    apply_multiplier(in, out, m);
}

PeriodicField semigroup_apply(const SpectralPlan& plan, const PeriodicField& f, double t) {
    require_same_grid(plan.grid(), f.grid, "semigroup_apply");
    PeriodicField out(f.grid);
    plan.semigroup(f.values, out.values, t);
    return out;
}

PeriodicField laplacian_apply(const SpectralPlan& plan, const PeriodicField& f) {
    require_same_grid(plan.grid(), f.grid, "laplacian_apply");
    PeriodicField out(f.grid);
    plan.laplacian(f.values, out.values);
    return out;
}

double greens_function(double t, double x, double y, int truncation) {
    if (!(t > 0.0)) throw ValidationError("heat.t>0", "Green's function needs t > 0");
    if (truncation < 1) throw ValidationError("heat.truncation>=1", "truncation must be >= 1");
    const double two_pi = 2.0 * std::numbers::pi;
    const double d = x - y;
    double sum = 0.0;
    for (int k = 1; k <= truncation; ++k) {
        const double kk = static_cast<double>(k);
        const double w = std::exp(-two_pi * two_pi * kk * kk * t);
        if (w < 1e-16) break;
        sum += w * std::cos(two_pi * kk * d);
    }
    return 1.0 + 2.0 * sum;
}

GreensTable greens_table(const GridSpec& grid, double t, int truncation) {
    const std::size_t n = grid.n_cells();
    GreensTable table{grid, t, std::vector<double>(n * n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = greens_function(t, grid.node(i), grid.node(j), truncation);
            table.values[i * n + j] = v;
            table.values[j * n + i] = v;
        }
    }
    return table;
}

std::vector<PeriodicField> stochastic_convolution(const SpectralPlan& plan,
                                                  const NoiseIncrement& noise, double amplitude) {
    require_same_grid(plan.grid(), noise.grid, "stochastic_convolution");
    const std::size_t n = noise.grid.n_cells();
    if (noise.dW.size() != n * noise.n_steps) {
        throw ValidationError("heat.shape", "noise matrix shape does not match its grid");
    }
    const std::size_t m = plan.n_modes();
    const double dt = noise.dt;
    std::vector<double> decay(m), gain(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double ld = plan.eigenvalue(k) * dt;
        decay[k] = std::exp(-ld);
        gain[k] = ld > 0.0 ? std::sqrt(-std::expm1(-2.0 * ld) / (2.0 * ld)) : 1.0;
    }
    const double to_field = amplitude / noise.grid.spacing();

    std::vector<PeriodicField> path;
    path.reserve(noise.n_steps + 1);
    path.emplace_back(noise.grid);
    std::vector<std::complex<double>> state(m), xi_hat(m);
    std::vector<double> xi(n);
    for (std::size_t s = 0; s < noise.n_steps; ++s) {
        const auto dW = noise.dW_step(s);
        for (std::size_t i = 0; i < n; ++i) xi[i] = dW[i] * to_field;
        plan.forward(xi, xi_hat);
        for (std::size_t k = 0; k < m; ++k) state[k] = decay[k] * state[k] + gain[k] * xi_hat[k];
        PeriodicField next(noise.grid);
        plan.backward(state, next.values);
        path.push_back(std::move(next));
    }
    return path;
}

}  // namespace torusflow
