#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "torusflow/grid.hpp"
#include "torusflow/noise.hpp"

namespace torusflow {

/// Eigenvalue convention for -Δ: the discrete symbol 4/dx² sin²(πk/n) of the
/// three-point Laplacian (default) or the continuum (2πk)².
enum class Spectrum { discrete, continuum };

/// Real FFT on one grid plus the Laplacian eigenvalues of its modes.
/// Immutable after construction; all methods are thread-safe.
class SpectralPlan {
public:
    explicit SpectralPlan(GridSpec grid, Spectrum spectrum = Spectrum::discrete);

    const GridSpec& grid() const noexcept;
    Spectrum spectrum() const noexcept;
    /// Number of real-FFT modes, n/2 + 1.
    std::size_t n_modes() const noexcept;
    /// λ_k for real-FFT index k in [0, n/2].
    double eigenvalue(std::size_t k) const noexcept;
    std::span<const double> eigenvalues() const noexcept;

    /// Unnormalised forward transform (n real values -> n/2+1 modes).
    void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
    /// Inverse transform including the 1/n normalisation. `in` is left untouched.
    void backward(std::span<const std::complex<double>> in, std::span<double> out) const;

    /// out = F^{-1}[ m_k · F[in] ]; `in` and `out` may alias.
    void apply_multiplier(std::span<const double> in, std::span<double> out,
                          std::span<const double> multiplier) const;

    std::vector<double> semigroup_multiplier(double t) const;  // e^{-λ t}
    std::vector<double> resolvent_multiplier(double dt) const;  // 1 / (1 + λ dt)

    void semigroup(std::span<const double> in, std::span<double> out, double t) const;
    void laplacian(std::span<const double> in, std::span<double> out) const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

PeriodicField semigroup_apply(const SpectralPlan& plan, const PeriodicField& f, double t);
PeriodicField laplacian_apply(const SpectralPlan& plan, const PeriodicField& f);

/// Periodic heat kernel 1 + 2 Σ_k e^{-(2πk)² t} cos(2πk(x - y)), summed until
/// the factor e^{-(2πk)² t} drops below 1e-16 or `truncation` modes are used.
double greens_function(double t, double x, double y, int truncation = 100000);

struct GreensTable {
    GridSpec grid;
    double t;
    std::vector<double> values;  // row-major G_t(x_i, y_j)

    double operator()(std::size_t i, std::size_t j) const noexcept {
        return values[i * grid.n_cells() + j];
    }
};

GreensTable greens_table(const GridSpec& grid, double t, int truncation = 100000);

/// Periodic OU process dX = ΔX dt + dW with X(0) = 0, advanced mode-exactly:
/// X_k ← e^{-λ dt} X_k + sqrt((1 - e^{-2λ dt}) / (2λ dt)) ξ_k with ξ = dW/dx.
/// Returns n_steps + 1 fields.
std::vector<PeriodicField> stochastic_convolution(const SpectralPlan& plan,
                                                  const NoiseIncrement& noise,
                                                  double amplitude = 1.0);

}  // namespace torusflow
