#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace torusflow {

/// Raised when inputs violate a documented precondition. `rule()` names it.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string rule, const std::string& message)
        : std::invalid_argument(message), rule_(std::move(rule)) {}
    const std::string& rule() const noexcept { return rule_; }

private:
    std::string rule_;
};

/// Uniform grid on the circle, nodes u_i = i/n.
///
/// All integrals are evaluated as (sum of samples)/n, so the product
/// spacing * n_cells never enters a quadrature and the total weight is 1.
class GridSpec {
public:
    explicit GridSpec(std::size_t n_cells);

    std::size_t n_cells() const noexcept { return n_; }
    double spacing() const noexcept { return 1.0 / static_cast<double>(n_); }
    double node(std::size_t i) const noexcept {
        return static_cast<double>(i) / static_cast<double>(n_);
    }

    bool operator==(const GridSpec&) const = default;

private:
    std::size_t n_;
};

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* where);

/// Samples of a 1-periodic function on a grid.
struct PeriodicField {
    GridSpec grid;
    std::vector<double> values;

    explicit PeriodicField(GridSpec g) : grid(g), values(g.n_cells(), 0.0) {}
    PeriodicField(GridSpec g, std::vector<double> v);
    PeriodicField(GridSpec g, double constant) : grid(g), values(g.n_cells(), constant) {}

    static PeriodicField from_function(GridSpec g, const std::function<double(double)>& f);

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const noexcept { return values[i]; }
    double& operator[](std::size_t i) noexcept { return values[i]; }
    /// Periodic indexing: at(i + n) == at(i) for any integer i.
    double at(std::ptrdiff_t i) const noexcept;

    std::span<const double> span() const noexcept { return values; }
    std::span<double> span() noexcept { return values; }

    double mean() const noexcept;
    double l1_norm() const noexcept;
    double l2_norm() const noexcept;
    double sup_norm() const noexcept;
    double min() const noexcept;
};

// Periodic trapezoid rule on raw samples.
double grid_mean(std::span<const double> v) noexcept;
double grid_inner(std::span<const double> a, std::span<const double> b) noexcept;
double grid_l2_norm(std::span<const double> v) noexcept;
double grid_l2_distance(std::span<const double> a, std::span<const double> b) noexcept;
double grid_sup_norm(std::span<const double> v) noexcept;

double inner(const PeriodicField& a, const PeriodicField& b);
double l2_distance(const PeriodicField& a, const PeriodicField& b);
double sup_distance(const PeriodicField& a, const PeriodicField& b);

/// Equivariant map F(u + 1) = F(u) + winding, stored as node values on [0,1).
/// Between nodes the map is linear; F(1) = F(0) + winding closes the period.
class EquivariantMap {
public:
    EquivariantMap(GridSpec g, std::vector<double> base, double winding);

    const GridSpec& grid() const noexcept { return grid_; }
    const std::vector<double>& base() const noexcept { return base_; }
    double winding() const noexcept { return winding_; }

    /// Value at node index i for any integer i.
    double node_value(std::ptrdiff_t i) const noexcept;
    /// Value at an arbitrary real u (piecewise-linear between nodes).
    double operator()(double u) const noexcept;

    /// Trapezoid integral over one period, including the closing node F(1).
    double mean() const noexcept;
    bool is_monotone(double tol = 0.0) const noexcept;

private:
    GridSpec grid_;
    std::vector<double> base_;
    double winding_;
};

}  // namespace torusflow
