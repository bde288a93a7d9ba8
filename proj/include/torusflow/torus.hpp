#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "torusflow/grid.hpp"

namespace torusflow {

struct Atom {
    double location;  // reduced to [0,1) on construction
    double weight;
};

/// Right-continuous nondecreasing map on [0,1), extended by Q(u+1) = Q(u) + 1.
/// Stored as linear pieces; atoms give constant pieces, histograms linear ones.
class PiecewiseQuantile {
public:
    struct Piece {
        double u0, u1;  // [u0, u1) in [0,1]
        double q0;      // value at u0
        double slope;   // dQ/du inside the piece
    };

    explicit PiecewiseQuantile(std::vector<Piece> pieces);

    const std::vector<Piece>& pieces() const noexcept { return pieces_; }
    double operator()(double u) const noexcept;
    /// Breakpoints u0 of all pieces, sorted, starting at 0.
    std::vector<double> breakpoints() const;
    /// Sample on a grid as a winding-1 equivariant map.
    EquivariantMap sample(const GridSpec& grid) const;
    double integral() const noexcept;

private:
    std::vector<Piece> pieces_;
};

/// Probability measure on the circle: weighted atoms or a histogram.
class TorusMeasure {
public:
    struct Histogram {
        GridSpec grid;
        std::vector<double> mass;  // mass of bin [i/n, (i+1)/n)
    };

    /// Weights must be nonnegative with total 1 within 1e-12.
    static TorusMeasure from_atoms(std::vector<Atom> atoms);
    /// Nonnegative weights, rescaled to total mass 1.
    static TorusMeasure normalised_atoms(std::vector<Atom> atoms);
    static TorusMeasure dirac(double location);
    static TorusMeasure from_histogram(GridSpec grid, std::vector<double> mass);
    static TorusMeasure uniform(GridSpec grid);

    bool is_atomic() const noexcept { return std::holds_alternative<std::vector<Atom>>(rep_); }
    const std::vector<Atom>& atoms() const;
    const Histogram& histogram() const;

    /// Left-to-right sum of weights.
    double total_mass() const noexcept;

    /// Quantile whose fundamental domain is [cut, cut + 1).
    PiecewiseQuantile quantile(double cut = 0.0) const;

private:
    explicit TorusMeasure(std::variant<std::vector<Atom>, Histogram> rep) : rep_(std::move(rep)) {}
    std::variant<std::vector<Atom>, Histogram> rep_;
};

/// Quantile mean and derivative, the coordinates of the d_{1,2} metric.
struct MeasureH1 {
    double mean;
    PeriodicField derivative;

    MeasureH1(double mean, PeriodicField derivative);
    /// Coordinates of the measure reconstructed from a solver state (g, M).
    static MeasureH1 from_state(const PeriodicField& g, double M);
};

double torus_distance(double u, double v) noexcept;

/// (inf over integer s of the grid L2 norm of F - G + s).
double equivariant_l2_distance(const EquivariantMap& F, const EquivariantMap& G);

/// A([g,M])(u) = int_0^1 int_v^u g(r) dr dv + M, trapezoid rule on the grid.
EquivariantMap reconstruct_A(const PeriodicField& g, double M);

/// Histogram (bin count = grid size) of {F(u_i) mod 1} with weights 1/n.
TorusMeasure pushforward_measure(const EquivariantMap& F);

struct CircularDistance {
    double fixed_cut;  // both quantiles cut at 0, integer shifts only
    double minimised;  // additionally minimised over rotations of the cut
};

/// Quantile-side L2 distance between two measures, integrated exactly on the
/// piecewise quantile representation. `minimised` is the circular W2 distance.
CircularDistance circular_wasserstein(const TorusMeasure& mu, const TorusMeasure& nu);

/// Exact quantile-side squared distance for a fixed rotation alpha of nu's quantile.
double quantile_distance_sq(const PiecewiseQuantile& Q, const PiecewiseQuantile& R, double alpha);

double d12_metric(const MeasureH1& a, const MeasureH1& b);

/// Grid samples of the quantile of `mu` with fundamental domain [cut, cut + 1).
EquivariantMap quantile_from_atoms(const TorusMeasure& mu, double cut, const GridSpec& grid);

// CSV with header `u,value`, 17 significant digits.
void write_field_csv(std::ostream& os, const GridSpec& grid, const std::vector<double>& values);
void write_field_csv(std::ostream& os, const PeriodicField& f);
void write_map_csv(std::ostream& os, const EquivariantMap& F);
/// Reads `u,value` rows; lines starting with '#' are skipped.
PeriodicField read_field_csv(std::istream& is);

}  // namespace torusflow
