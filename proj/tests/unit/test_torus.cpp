#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "torusflow/torus.hpp"

using namespace torusflow;

namespace {

PeriodicField random_field(const GridSpec& grid, std::mt19937_64& rng, double lo = 0.0, double hi = 2.0) {
    std::uniform_real_distribution<double> U(lo, hi);
    PeriodicField f(grid);
    for (auto& v : f.values) v = U(rng);
    return f;
}

EquivariantMap random_monotone(const GridSpec& grid, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> inc(grid.n_cells());
    double total = 0.0;
    for (auto& v : inc) total += v = U(rng);
    std::vector<double> base(grid.n_cells());
    double acc = U(rng) - 0.5;
    for (std::size_t i = 0; i < base.size(); ++i) {
        base[i] = acc;
        acc += inc[i] / total;
    }
    return EquivariantMap(grid, base, 1.0);
}

}  // namespace

TEST_CASE("grid basics") {
    GridSpec g(64);
    CHECK(g.spacing() * g.n_cells() == 1.0);
    CHECK(g.node(16) == 0.25);
    CHECK_THROWS_AS(GridSpec(1), ValidationError);
    PeriodicField f = PeriodicField::from_function(g, [](double u) { return u; });
    CHECK(f.at(65) == f.at(1));
    CHECK(f.at(-1) == f.at(63));
}

TEST_CASE("torus_distance") {
    CHECK(torus_distance(0.1, 0.9) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(torus_distance(0.37, 0.37) == 0.0);
    CHECK(torus_distance(0.3, 7.3) == doctest::Approx(0.0).epsilon(1e-12));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-5, 5);
    for (int k = 0; k < 1000; ++k) {
        const double a = U(rng), b = U(rng), c = U(rng);
        const double ab = torus_distance(a, b);
        CHECK(ab >= 0.0);
        CHECK(ab <= 0.5);
        CHECK(ab == doctest::Approx(torus_distance(b, a)).epsilon(1e-12));
        CHECK(ab <= torus_distance(a, c) + torus_distance(c, b) + 1e-12);
    }
}

TEST_CASE("equivariant_l2_distance") {
    GridSpec g(64);
    std::mt19937_64 rng(2);
    const auto F = random_monotone(g, rng);
    CHECK(equivariant_l2_distance(F, F) == 0.0);

    const auto d0 = quantile_from_atoms(TorusMeasure::dirac(0.0), 0.0, g);
    const auto dh = quantile_from_atoms(TorusMeasure::dirac(0.5), 0.0, g);
    CHECK(equivariant_l2_distance(d0, dh) == doctest::Approx(0.5).epsilon(1e-12));

    // Exhaustive shift scan oracle.
    for (int k = 0; k < 50; ++k) {
        const auto A = random_monotone(g, rng);
        const auto B = random_monotone(g, rng);
        double best = 1e300;
        for (int s = -3; s <= 3; ++s) {
            double acc = 0.0;
            for (std::size_t i = 0; i < 64; ++i) {
                const double d = A.base()[i] - B.base()[i] + s;
                acc += d * d;
            }
            best = std::min(best, std::sqrt(acc / 64.0));
        }
        CHECK(equivariant_l2_distance(A, B) == doctest::Approx(best).epsilon(1e-12));
    }
    CHECK_THROWS_AS(equivariant_l2_distance(F, random_monotone(GridSpec(32), rng)), ValidationError);
}

TEST_CASE("reconstruct_A") {
    GridSpec g(64);
    const auto A = reconstruct_A(PeriodicField(g, 1.0), 0.25);
    for (std::size_t i = 0; i < 64; ++i) CHECK(A.base()[i] == doctest::Approx(g.node(i) - 0.5 + 0.25).epsilon(1e-13));
    CHECK(A.winding() == doctest::Approx(1.0));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-2, 2);
    for (int k = 0; k < 200; ++k) {
        const auto f = random_field(g, rng, -0.5, 3.0);
        const double M = U(rng);
        const auto B = reconstruct_A(f, M);
        CHECK(std::abs(B.mean() - M) <= 1e-12);
        CHECK(B.winding() == doctest::Approx(f.mean()).epsilon(1e-12));
    }
    // Lipschitz in (g, M).
    for (int k = 0; k < 200; ++k) {
        const auto f1 = random_field(g, rng), f2 = random_field(g, rng);
        const double x = U(rng), y = U(rng);
        const auto A1 = reconstruct_A(f1, x), A2 = reconstruct_A(f2, y);
        double sup = 0.0;
        for (std::size_t i = 0; i < 64; ++i) sup = std::max(sup, std::abs(A1.base()[i] - A2.base()[i]));
        CHECK(sup <= l2_distance(f1, f2) + std::abs(x - y) + 1e-12);
    }
}

TEST_CASE("pushforward_measure") {
    GridSpec g(32);
    const auto id = EquivariantMap(g, [&] {
        std::vector<double> b(32);
        for (std::size_t i = 0; i < 32; ++i) b[i] = g.node(i);
        return b;
    }(), 1.0);
    auto mu = pushforward_measure(id);
    CHECK(mu.total_mass() == 1.0);
    for (double m : mu.histogram().mass) CHECK(m == doctest::Approx(1.0 / 32));

    const auto c = EquivariantMap(g, std::vector<double>(32, 1.3), 0.0);
    auto nu = pushforward_measure(c);
    CHECK(nu.total_mass() == 1.0);
    // All mass lands in the bin containing 0.3.
    const std::size_t bin = static_cast<std::size_t>(0.3 * 32);
    CHECK(nu.histogram().mass[bin] == doctest::Approx(1.0));

    const auto rot = reconstruct_A(PeriodicField(g, 1.0), 0.37);
    auto rho = pushforward_measure(rot);
    for (double m : rho.histogram().mass) CHECK(m == doctest::Approx(1.0 / 32));
}

TEST_CASE("circular_wasserstein") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(0, 1);
    const auto mu = TorusMeasure::from_atoms({{0.1, 0.5}, {0.6, 0.5}});
    CHECK(circular_wasserstein(mu, mu).minimised == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(circular_wasserstein(TorusMeasure::dirac(0.0), TorusMeasure::dirac(0.5)).minimised ==
          doctest::Approx(0.5).epsilon(1e-12));

    // Brute-force discrete OT with integer weights.
    std::uniform_int_distribution<int> K(1, 4);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> xa(6), xb(6);
        std::vector<int> ka(6), kb(6);
        int sa = 0, sb = 0;
        for (int i = 0; i < 6; ++i) {
            xa[i] = U(rng);
            xb[i] = U(rng);
            sa += ka[i] = K(rng);
        }
        // Same total on both sides.
        for (int i = 0; i < 5; ++i) sb += kb[i] = K(rng);
        if (sa - sb < 1) continue;
        kb[5] = sa - sb;
        std::vector<Atom> a, b;
        for (int i = 0; i < 6; ++i) {
            a.push_back({xa[i], static_cast<double>(ka[i]) / sa});
            b.push_back({xb[i], static_cast<double>(kb[i]) / sa});
        }
        const double exact = oracle::circle_w2_integer_weights(xa, ka, xb, kb);
        const auto d = circular_wasserstein(TorusMeasure::normalised_atoms(a), TorusMeasure::normalised_atoms(b));
        CHECK(d.minimised == doctest::Approx(exact).epsilon(1e-9));
        CHECK(d.fixed_cut >= d.minimised - 1e-12);
    }
}

TEST_CASE("d12_metric") {
    GridSpec g(32);
    std::mt19937_64 rng(5);
    const auto f = random_field(g, rng), h = random_field(g, rng);
    CHECK(d12_metric(MeasureH1(0.3, f), MeasureH1(0.3, f)) == 0.0);
    CHECK(d12_metric(MeasureH1(0.3, f), MeasureH1(-0.2, f)) == doctest::Approx(0.5));
    double acc = 0.0;
    for (std::size_t i = 0; i < 32; ++i) acc += (f[i] - h[i]) * (f[i] - h[i]);
    CHECK(d12_metric(MeasureH1(0.1, f), MeasureH1(0.4, h)) ==
          doctest::Approx(0.3 + std::sqrt(acc / 32)).epsilon(1e-12));
    // State coordinates: d12 = |ΔM| + ||Δg||.
    CHECK(d12_metric(MeasureH1::from_state(f, 0.1), MeasureH1::from_state(h, 0.4)) ==
          doctest::Approx(0.3 + std::sqrt(acc / 32)).epsilon(1e-12));
}

TEST_CASE("quantile_from_atoms") {
    GridSpec g(64);
    const auto F = quantile_from_atoms(TorusMeasure::dirac(0.3), 0.0, g);
    for (double v : F.base()) CHECK(v == doctest::Approx(0.3));
    CHECK(F.winding() == 1.0);

    const auto U = quantile_from_atoms(TorusMeasure::uniform(g), 0.0, g);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(U.base()[i] - g.node(i)) <= g.spacing());

    const auto S = quantile_from_atoms(TorusMeasure::from_atoms({{0.2, 0.5}, {0.7, 0.5}}), 0.0, g);
    for (std::size_t i = 0; i < 64; ++i) CHECK(S.base()[i] == doctest::Approx(g.node(i) < 0.5 ? 0.2 : 0.7));
    CHECK(S.is_monotone());
    CHECK_THROWS(TorusMeasure::from_atoms({}));
}

TEST_CASE("field csv roundtrip") {
    GridSpec g(16);
    std::mt19937_64 rng(6);
    const auto f = random_field(g, rng);
    std::stringstream ss;
    write_field_csv(ss, f);
    const auto h = read_field_csv(ss);
    CHECK(h.grid == g);
    for (std::size_t i = 0; i < 16; ++i) CHECK(h[i] == f[i]);
}
