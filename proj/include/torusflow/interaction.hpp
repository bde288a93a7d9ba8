#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "torusflow/grid.hpp"
#include "torusflow/noise.hpp"
#include "torusflow/state.hpp"
#include "torusflow/torus.hpp"

namespace torusflow {

/// h(u) = a0 + Σ_{k>=1} cos_k cos(2πku) + sin_k sin(2πku).
struct TrigModes {
    double a0 = 0.0;
    std::vector<double> cos_coeffs;
    std::vector<double> sin_coeffs;
};

/// Interaction kernel h with derivative samples and a sup bound on |h|, |h'|.
///
/// Sampled kernels are evaluated off-grid by periodic cubic Hermite
/// interpolation of (h, h'); the derivative is the derivative of that same
/// interpolant, so b' is exactly the u-derivative of b. Trigonometric kernels
/// are evaluated in closed form.
class KernelSpec {
public:
    static KernelSpec constant(double c);
    static KernelSpec trigonometric(double a0, std::vector<double> cos_coeffs,
                                    std::vector<double> sin_coeffs, std::size_t samples = 256);
    static KernelSpec sampled(PeriodicField h, PeriodicField h_prime);
    /// CSV `u,h,h_prime` on a uniform grid u_j = j/m.
    static KernelSpec read_csv(std::istream& is);
    static KernelSpec read_csv_file(const std::string& path);

    const PeriodicField& h() const noexcept { return h_; }
    const PeriodicField& h_prime() const noexcept { return h_prime_; }
    double bound() const noexcept { return bound_; }
    const std::optional<TrigModes>& modes() const noexcept { return modes_; }
    bool is_zero() const noexcept;

    double value(double u) const noexcept;
    double derivative(double u) const noexcept;
    /// Both at once (one interpolation lookup).
    void value_and_derivative(double u, double& v, double& d) const noexcept;

private:
    KernelSpec(PeriodicField h, PeriodicField hp, double bound, std::optional<TrigModes> modes)
        : h_(std::move(h)), h_prime_(std::move(hp)), bound_(bound), modes_(std::move(modes)) {}

    PeriodicField h_;
    PeriodicField h_prime_;
    double bound_;
    std::optional<TrigModes> modes_;
};

void write_kernel_csv(std::ostream& os, const KernelSpec& kernel);

enum class MDriftVariant {
    unweighted,  // ∫ b(A(z), μ) dz
    weighted,    // ∫ b(A(x), μ) g(x) dx
};

/// Drift values along a reconstruction A = A([g, M]) with μ = λ∘A^{-1}.
struct StateDrift {
    std::vector<double> beta;  // b'(A(z_i), μ) at the n grid nodes
    double m_unweighted = 0.0;
    double m_weighted = 0.0;

    double m(MDriftVariant v) const noexcept {
        return v == MDriftVariant::weighted ? m_weighted : m_unweighted;
    }
};

/// Evaluates b(u, μ) = ∫ h(u - v) μ(dv) and b' = ∂_u b.
///
/// Along a state, μ is never binned: ∫ h(u - A(a)) da is computed with the
/// trapezoid rule on the nodes a_0..a_n, where A(a_n) = A(a_0) + winding.
class DriftEvaluator {
public:
    explicit DriftEvaluator(KernelSpec kernel) : kernel_(std::move(kernel)) {}

    const KernelSpec& kernel() const noexcept { return kernel_; }

    double b(double u, const TorusMeasure& mu) const;
    double b_prime(double u, const TorusMeasure& mu) const;

    /// b(A(a_i), μ) and b'(A(a_i), μ) at the nodes a_0..a_n (n + 1 values each).
    void along(const EquivariantMap& A, std::vector<double>& b, std::vector<double>& b_prime) const;

    /// Writes β into `beta` (size n) and returns both M-drift variants.
    void evaluate(const EquivariantMap& A, std::span<const double> g, std::span<double> beta,
                  double& m_unweighted, double& m_weighted) const;
    StateDrift evaluate(const CoupledState& state) const;

private:
    KernelSpec kernel_;
};

double eval_b(const DriftEvaluator& ev, double u, const TorusMeasure& mu);
double eval_b_prime(const DriftEvaluator& ev, double u, const TorusMeasure& mu);
PeriodicField beta_field(const DriftEvaluator& ev, const CoupledState& state);
double m_drift(const DriftEvaluator& ev, const CoupledState& state, MDriftVariant variant);
/// Accepts "unweighted" / "weighted".
MDriftVariant parse_m_drift_variant(const std::string& name);

struct AssumptionReport {
    double lipschitz_estimate_b = 0.0;
    double lipschitz_estimate_b_prime = 0.0;
    double sup_b = 0.0;
    double sup_b_prime = 0.0;
    std::size_t sample_count = 0;
};

/// Largest observed difference quotients |b(u,μ) - b(v,ν)| / (d(u,v) + d(μ,ν))
/// over random atomic pairs, with d(μ,ν) the fixed-cut quantile L2 distance,
/// plus sup norms of b and b' over the sampled measures. Half of the pairs are
/// small perturbations so the quotients approach the local constants.
AssumptionReport probe_assumptions(const KernelSpec& kernel, std::size_t samples,
                                   const SeedSpec& seed);

}  // namespace torusflow
