#include "torusflow/grid.hpp"

#include <algorithm>
#include <cmath>

namespace torusflow {

GridSpec::GridSpec(std::size_t n_cells) : n_(n_cells) {
    if (n_cells < 2) {
        throw ValidationError("grid.n_cells>=2", "grid needs at least 2 cells, got " +
                                                     std::to_string(n_cells));
    }
}

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* where) {
    if (a != b) {
        throw ValidationError("grid.mismatch", std::string(where) + ": grid mismatch (" +
                                                   std::to_string(a.n_cells()) + " vs " +
                                                   std::to_string(b.n_cells()) + " cells)");
    }
}

PeriodicField::PeriodicField(GridSpec g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.n_cells()) {
        throw ValidationError("field.size", "field has " + std::to_string(values.size()) +
                                                " samples for a " +
                                                std::to_string(grid.n_cells()) + "-cell grid");
    }
}

PeriodicField PeriodicField::from_function(GridSpec g, const std::function<double(double)>& f) {
    PeriodicField out(g);
    for (std::size_t i = 0; i < g.n_cells(); ++i) out.values[i] = f(g.node(i));
    return out;
}

double PeriodicField::at(std::ptrdiff_t i) const noexcept {
    const auto n = static_cast<std::ptrdiff_t>(values.size());
    std::ptrdiff_t k = i % n;
    if (k < 0) k += n;
    return values[static_cast<std::size_t>(k)];
}

double PeriodicField::mean() const noexcept { return grid_mean(values); }

double PeriodicField::l1_norm() const noexcept {
    double s = 0.0;
    for (double v : values) s += std::abs(v);
    return s / static_cast<double>(values.size());
}

double PeriodicField::l2_norm() const noexcept { return grid_l2_norm(values); }
double PeriodicField::sup_norm() const noexcept { return grid_sup_norm(values); }

double PeriodicField::min() const noexcept {
    return *std::min_element(values.begin(), values.end());
}

double grid_mean(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double grid_inner(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / static_cast<double>(a.size());
}

double grid_l2_norm(std::span<const double> v) noexcept { return std::sqrt(grid_inner(v, v)); }

double grid_l2_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

double grid_sup_norm(std::span<const double> v) noexcept {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double inner(const PeriodicField& a, const PeriodicField& b) {
    require_same_grid(a.grid, b.grid, "inner");
    return grid_inner(a.values, b.values);
}

double l2_distance(const PeriodicField& a, const PeriodicField& b) {
    require_same_grid(a.grid, b.grid, "l2_distance");
    return grid_l2_distance(a.values, b.values);
}

double sup_distance(const PeriodicField& a, const PeriodicField& b) {
    require_same_grid(a.grid, b.grid, "sup_distance");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

EquivariantMap::EquivariantMap(GridSpec g, std::vector<double> base, double winding)
    : grid_(g), base_(std::move(base)), winding_(winding) {
    if (base_.size() != grid_.n_cells()) {
        throw ValidationError("map.size", "equivariant map has " + std::to_string(base_.size()) +
                                              " samples for a " +
                                              std::to_string(grid_.n_cells()) + "-cell grid");
    }
}

double EquivariantMap::node_value(std::ptrdiff_t i) const noexcept {
    const auto n = static_cast<std::ptrdiff_t>(base_.size());
    std::ptrdiff_t q = i / n;
    std::ptrdiff_t r = i % n;
    if (r < 0) {
        r += n;
        --q;
    }
    return base_[static_cast<std::size_t>(r)] + static_cast<double>(q) * winding_;
}

double EquivariantMap::operator()(double u) const noexcept {
    const double n = static_cast<double>(base_.size());
    const double s = u * n;
    const double fl = std::floor(s);
    const auto i = static_cast<std::ptrdiff_t>(fl);
    const double w = s - fl;
    const double a = node_value(i);
    if (w == 0.0) return a;
    return a + w * (node_value(i + 1) - a);
}

double EquivariantMap::mean() const noexcept {
    double s = 0.5 * (base_.front() + (base_.front() + winding_));
    for (std::size_t i = 1; i < base_.size(); ++i) s += base_[i];
    return s / static_cast<double>(base_.size());
}

bool EquivariantMap::is_monotone(double tol) const noexcept {
    for (std::size_t i = 0; i + 1 < base_.size(); ++i) {
        if (base_[i + 1] < base_[i] - tol) return false;
    }
    return base_.front() + winding_ >= base_.back() - tol;
}

}  // namespace torusflow
