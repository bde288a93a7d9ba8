#include "torusflow/torus.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace torusflow {

namespace {

double frac(double x) noexcept {
    double r = x - std::floor(x);
    return r >= 1.0 ? 0.0 : r;
}

}  // namespace

// ---------------------------------------------------------------- quantiles

PiecewiseQuantile::PiecewiseQuantile(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw ValidationError("quantile.nonempty", "quantile has no pieces");
    pieces_.front().u0 = 0.0;
    pieces_.back().u1 = 1.0;
}

double PiecewiseQuantile::operator()(double u) const noexcept {
    const double k = std::floor(u);
    double r = u - k;
    if (r >= 1.0) r = 0.0;  // rounding of tiny negative u
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), r,
                               [](double x, const Piece& p) { return x < p.u0; });
    const Piece& p = *(it == pieces_.begin() ? it : std::prev(it));
    return p.q0 + p.slope * (r - p.u0) + k;
}

std::vector<double> PiecewiseQuantile::breakpoints() const {
    std::vector<double> b;
    b.reserve(pieces_.size());
    for (const auto& p : pieces_) b.push_back(p.u0);
    return b;
}

EquivariantMap PiecewiseQuantile::sample(const GridSpec& grid) const {
    std::vector<double> base(grid.n_cells());
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = (*this)(grid.node(i));
    return EquivariantMap(grid, std::move(base), 1.0);
}

double PiecewiseQuantile::integral() const noexcept {
    double s = 0.0;
    for (const auto& p : pieces_) {
        const double len = p.u1 - p.u0;
        s += len * (p.q0 + 0.5 * p.slope * len);
    }
    return s;
}

// ----------------------------------------------------------------- measures

TorusMeasure TorusMeasure::from_atoms(std::vector<Atom> atoms) {
    if (atoms.empty()) throw ValidationError("measure.nonempty", "empty atom list");
    double total = 0.0;
    for (auto& a : atoms) {
        if (!(a.weight >= 0.0)) {
            throw ValidationError("measure.weights>=0", "negative or NaN atom weight");
        }
        a.location = frac(a.location);
        total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ValidationError("measure.mass==1", "atom weights sum to " + std::to_string(total));
    }
    return TorusMeasure(std::move(atoms));
}

TorusMeasure TorusMeasure::normalised_atoms(std::vector<Atom> atoms) {
    if (atoms.empty()) throw ValidationError("measure.nonempty", "empty atom list");
    double total = 0.0;
    for (const auto& a : atoms) {
        if (!(a.weight >= 0.0)) {
            throw ValidationError("measure.weights>=0", "negative or NaN atom weight");
        }
        total += a.weight;
    }
    if (!(total > 0.0)) throw ValidationError("measure.mass>0", "atom weights sum to zero");
    for (auto& a : atoms) {
        a.weight /= total;
        a.location = frac(a.location);
    }
    return TorusMeasure(std::move(atoms));
}

TorusMeasure TorusMeasure::dirac(double location) {
    return TorusMeasure(std::vector<Atom>{{frac(location), 1.0}});
}

TorusMeasure TorusMeasure::from_histogram(GridSpec grid, std::vector<double> mass) {
    if (mass.size() != grid.n_cells()) {
        throw ValidationError("measure.histogram_size", "histogram size does not match grid");
    }
    double total = 0.0;
    for (double m : mass) {
        if (!(m >= 0.0)) throw ValidationError("measure.weights>=0", "negative bin mass");
        total += m;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ValidationError("measure.mass==1", "histogram mass is " + std::to_string(total));
    }
    return TorusMeasure(Histogram{grid, std::move(mass)});
}

TorusMeasure TorusMeasure::uniform(GridSpec grid) {
    std::vector<double> mass(grid.n_cells(), 1.0 / static_cast<double>(grid.n_cells()));
    return TorusMeasure(Histogram{grid, std::move(mass)});
}

const std::vector<Atom>& TorusMeasure::atoms() const { return std::get<std::vector<Atom>>(rep_); }

const TorusMeasure::Histogram& TorusMeasure::histogram() const { return std::get<Histogram>(rep_); }

double TorusMeasure::total_mass() const noexcept {
    double s = 0.0;
    if (is_atomic()) {
        for (const auto& a : std::get<std::vector<Atom>>(rep_)) s += a.weight;
    } else {
        for (double m : std::get<Histogram>(rep_).mass) s += m;
    }
    return s;
}

PiecewiseQuantile TorusMeasure::quantile(double cut) const {
    const double shift = std::floor(cut);
    const double c = cut - shift;
    // Segments of mass lifted into [c, c+1): (left end, length, mass).
    struct Segment {
        double left, length, mass;
    };
    std::vector<Segment> segs;
    if (is_atomic()) {
        for (const auto& a : atoms()) {
            if (a.weight <= 0.0) continue;
            const double y = a.location >= c ? a.location : a.location + 1.0;
            segs.push_back({y, 0.0, a.weight});
        }
    } else {
        const auto& h = histogram();
        const double dx = h.grid.spacing();
        for (std::size_t i = 0; i < h.mass.size(); ++i) {
            const double m = h.mass[i];
            if (m <= 0.0) continue;
            const double a = h.grid.node(i);
            const double b = a + dx;
            if (c > a && c < b) {
                segs.push_back({c, b - c, m * (b - c) / dx});
                segs.push_back({a + 1.0, c - a, m * (c - a) / dx});
            } else {
                segs.push_back({a >= c ? a : a + 1.0, dx, m});
            }
        }
    }
    if (segs.empty()) throw ValidationError("measure.nonempty", "measure has no mass");
    std::stable_sort(segs.begin(), segs.end(),
                     [](const Segment& x, const Segment& y) { return x.left < y.left; });

    std::vector<PiecewiseQuantile::Piece> pieces;
    pieces.reserve(segs.size());
    double cum = 0.0;
    for (const auto& s : segs) {
        const double next = cum + s.mass;
        pieces.push_back({cum, next, s.left + shift, s.length / s.mass});
        cum = next;
    }
    return PiecewiseQuantile(std::move(pieces));
}

MeasureH1::MeasureH1(double m, PeriodicField d) : mean(m), derivative(std::move(d)) {
    if (derivative.min() < -1e-12) {
        throw ValidationError("measure_h1.derivative>=0", "quantile derivative must be >= 0");
    }
}

MeasureH1 MeasureH1::from_state(const PeriodicField& g, double M) {
    return MeasureH1(reconstruct_A(g, M).mean(), g);
}

// --------------------------------------------------------------- distances

double torus_distance(double u, double v) noexcept {
    const double r = frac(u - v);
    return std::min(r, 1.0 - r);
}

double equivariant_l2_distance(const EquivariantMap& F, const EquivariantMap& G) {
    require_same_grid(F.grid(), G.grid(), "equivariant_l2_distance");
    if (std::abs(F.winding() - G.winding()) > 1e-12) {
        throw ValidationError("map.winding", "equivariant_l2_distance needs equal windings");
    }
    const auto& f = F.base();
    const auto& g = G.base();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < f.size(); ++i) {
        lo = std::min(lo, g[i] - f[i]);
        hi = std::max(hi, g[i] - f[i]);
    }
    const double n = static_cast<double>(f.size());
    double best = std::numeric_limits<double>::infinity();
    for (double s = std::floor(lo) - 1.0; s <= std::ceil(hi) + 1.0; s += 1.0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double d = f[i] - g[i] + s;
            acc += d * d;
        }
        best = std::min(best, acc / n);
    }
    return std::sqrt(best);
}

EquivariantMap reconstruct_A(const PeriodicField& g, double M) {
    const std::size_t n = g.size();
    const double h = g.grid.spacing();
    std::vector<double> G(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        G[i] = acc;
        acc += 0.5 * h * (g[i] + g[(i + 1) % n]);
    }
    const double winding = acc;
    double mean = 0.5 * (G[0] + (G[0] + winding));
    for (std::size_t i = 1; i < n; ++i) mean += G[i];
    mean /= static_cast<double>(n);
    for (auto& v : G) v = v - mean + M;
    return EquivariantMap(g.grid, std::move(G), winding);
}

TorusMeasure pushforward_measure(const EquivariantMap& F) {
    const std::size_t n = F.grid().n_cells();
    std::vector<std::size_t> count(n, 0);
    for (double v : F.base()) {
        auto j = static_cast<std::size_t>(frac(v) * static_cast<double>(n));
        count[std::min(j, n - 1)] += 1;
    }
    std::vector<double> mass(n, 0.0);
    std::size_t last = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (count[j] > 0) last = j;
    }
    // Set the last occupied bin so that the left-to-right sum is exactly 1.
    double before = 0.0;
    for (std::size_t j = 0; j < last; ++j) {
        mass[j] = static_cast<double>(count[j]) / static_cast<double>(n);
        before += mass[j];
    }
    mass[last] = 1.0 - before;
    return TorusMeasure::from_histogram(F.grid(), std::move(mass));
}

namespace {

struct Located {
    const PiecewiseQuantile::Piece* piece;
    double lift;  // integer added to the piece value
};

Located locate(const PiecewiseQuantile& Q, double x) noexcept {
    const double k = std::floor(x);
    double r = x - k;
    if (r >= 1.0) r = 0.0;
    const auto& ps = Q.pieces();
    auto it = std::upper_bound(ps.begin(), ps.end(), r,
                               [](double v, const PiecewiseQuantile::Piece& p) { return v < p.u0; });
    if (it != ps.begin()) --it;
    return {&*it, k};
}

struct Moments {
    double m1, m2;  // integral of D and D^2 with D(u) = Q(u) - R(u + alpha)
};

Moments moments(const PiecewiseQuantile& Q, const PiecewiseQuantile& R, double alpha) {
    std::vector<double> cuts{0.0, 1.0};
    for (const auto& p : Q.pieces()) cuts.push_back(p.u0);
    for (const auto& p : R.pieces()) cuts.push_back(frac(p.u0 - alpha));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    Moments m{0.0, 0.0};
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i];
        const double b = cuts[i + 1];
        const double len = b - a;
        if (len <= 0.0) continue;
        const double mid = 0.5 * (a + b);
        const Located lq = locate(Q, mid);
        const Located lr = locate(R, mid + alpha);
        const double qa = lq.piece->q0 + lq.piece->slope * (a - lq.piece->u0) + lq.lift;
        const double ra =
            lr.piece->q0 + lr.piece->slope * (a + alpha - lr.lift - lr.piece->u0) + lr.lift;
        const double d0 = qa - ra;
        const double d1 = lq.piece->slope - lr.piece->slope;
        m.m1 += len * (d0 + 0.5 * d1 * len);
        m.m2 += len * (d0 * d0 + d0 * d1 * len + d1 * d1 * len * len / 3.0);
    }
    return m;
}

double best_over_shifts(const Moments& m) noexcept {
    const double s0 = std::floor(-m.m1);
    double best = std::numeric_limits<double>::infinity();
    for (double s = s0 - 1.0; s <= s0 + 2.0; s += 1.0) {
        best = std::min(best, m.m2 + 2.0 * s * m.m1 + s * s);
    }
    return std::max(best, 0.0);
}

bool all_flat(const PiecewiseQuantile& Q) noexcept {
    for (const auto& p : Q.pieces()) {
        if (p.slope != 0.0) return false;
    }
    return true;
}

}  // namespace

double quantile_distance_sq(const PiecewiseQuantile& Q, const PiecewiseQuantile& R, double alpha) {
    return best_over_shifts(moments(Q, R, alpha));
}

CircularDistance circular_wasserstein(const TorusMeasure& mu, const TorusMeasure& nu) {
    const PiecewiseQuantile Q = mu.quantile(0.0);
    const PiecewiseQuantile R = nu.quantile(0.0);
    const double fixed = quantile_distance_sq(Q, R, 0.0);

    // For a fixed integer shift s the objective is quadratic in alpha between
    // consecutive breakpoint differences (linear when both quantiles are step
    // functions), so candidates plus per-interval minimisation are exact.
    std::vector<double> cand;
    const auto bq = Q.breakpoints();
    const auto br = R.breakpoints();
    constexpr std::size_t kMaxCandidates = 40000;
    if (bq.size() * br.size() <= kMaxCandidates) {
        cand.reserve(bq.size() * br.size() + 1);
        for (double a : br)
            for (double b : bq) cand.push_back(frac(a - b));
    } else {
        for (std::size_t i = 0; i < 4096; ++i) cand.push_back(static_cast<double>(i) / 4096.0);
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    double best = fixed;
    std::vector<Moments> at(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) {
        at[i] = moments(Q, R, cand[i]);
        best = std::min(best, best_over_shifts(at[i]));
    }
    if (!(all_flat(Q) && all_flat(R))) {
        for (std::size_t i = 0; i < cand.size(); ++i) {
            const double a = cand[i];
            const double b = i + 1 < cand.size() ? cand[i + 1] : 1.0;
            if (b - a <= 1e-15) continue;
            const double c = 0.5 * (a + b);
            const Moments mb = i + 1 < cand.size() ? at[i + 1] : moments(Q, R, b);
            const Moments mc = moments(Q, R, c);
            // m2 is quadratic on [a,b]; m1 is linear in alpha.
            const double L = b - a;
            const double A2 = 4.0 * (mb.m2 - 2.0 * mc.m2 + at[i].m2) / (L * L);
            const double B2 = (mb.m2 - at[i].m2) / L;  // slope of chord
            const double M1a = at[i].m1;
            const double dM1 = (mb.m1 - at[i].m1) / L;
            const double lo = std::min(-M1a, -mb.m1);
            const double hi = std::max(-M1a, -mb.m1);
            for (double s = std::floor(lo) - 1.0; s <= std::ceil(hi) + 1.0; s += 1.0) {
                // f(t) = m2(a+t) + 2 s m1(a+t) + s^2, t in [0, L]
                // m2(a+t) = m2a + (B2 - A2 L / 2) t + A2 t^2 / 2
                const double lin = (B2 - 0.5 * A2 * L) + 2.0 * s * dM1;
                if (A2 > 0.0) {
                    const double t = std::clamp(-lin / A2, 0.0, L);
                    const double val =
                        at[i].m2 + (B2 - 0.5 * A2 * L) * t + 0.5 * A2 * t * t +
                        2.0 * s * (M1a + dM1 * t) + s * s;
                    best = std::min(best, std::max(val, 0.0));
                }
            }
        }
    }
    return {std::sqrt(fixed), std::sqrt(best)};
}

double d12_metric(const MeasureH1& a, const MeasureH1& b) {
    require_same_grid(a.derivative.grid, b.derivative.grid, "d12_metric");
    return std::abs(a.mean - b.mean) +
           grid_l2_distance(a.derivative.values, b.derivative.values);
}

EquivariantMap quantile_from_atoms(const TorusMeasure& mu, double cut, const GridSpec& grid) {
    return mu.quantile(cut).sample(grid);
}

// ---------------------------------------------------------------------- CSV

void write_field_csv(std::ostream& os, const GridSpec& grid, const std::vector<double>& values) {
    os << "u,value\n" << std::setprecision(17);
    for (std::size_t i = 0; i < values.size(); ++i) os << grid.node(i) << ',' << values[i] << '\n';
}

void write_field_csv(std::ostream& os, const PeriodicField& f) {
    write_field_csv(os, f.grid, f.values);
}

void write_map_csv(std::ostream& os, const EquivariantMap& F) {
    write_field_csv(os, F.grid(), F.base());
}

PeriodicField read_field_csv(std::istream& is) {
    std::string line;
    bool header = false;
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line != "u,value" && line != "u,value\r") {
                throw ValidationError("csv.header", "expected header 'u,value', got '" + line + "'");
            }
            header = true;
            continue;
        }
        std::istringstream row(line);
        double u = 0.0, v = 0.0;
        char comma = 0;
        if (!(row >> u >> comma >> v) || comma != ',') {
            throw ValidationError("csv.row", "malformed row '" + line + "'");
        }
        values.push_back(v);
    }
    if (!header) throw ValidationError("csv.header", "missing header 'u,value'");
    GridSpec grid(values.size());
    return PeriodicField(grid, std::move(values));
}

}  // namespace torusflow
