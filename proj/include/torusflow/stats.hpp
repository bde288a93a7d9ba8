#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace torusflow {

/// Compensated (Neumaier) running sum.
class NeumaierSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct MeanEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;  // sample sd / sqrt(n); 0 when n < 2
    std::size_t count = 0;
};

MeanEstimate mean_estimate(std::span<const double> xs);

/// Asymptotic Kolmogorov distribution tail Q(λ) = 2 Σ (-1)^{j-1} e^{-2 j² λ²}.
double kolmogorov_tail(double lambda) noexcept;

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample test with the Stephens small-sample correction
/// λ = (√n_e + 0.12 + 0.11/√n_e) D, n_e = n m / (n + m).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Ordinary least squares y = intercept + slope x. Needs at least 2 points.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace torusflow
