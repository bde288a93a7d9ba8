#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "torusflow/heat.hpp"

using namespace torusflow;
constexpr double kPi = std::numbers::pi;

TEST_CASE("semigroup_apply") {
    GridSpec g(64);
    SpectralPlan cont(g, Spectrum::continuum), disc(g);
    const auto c = PeriodicField::from_function(g, [](double u) { return std::cos(2 * kPi * u); });
    CHECK(sup_distance(semigroup_apply(cont, c, 0.0), c) == 0.0);
    const double t = 0.01;
    const auto out = semigroup_apply(cont, c, t);
    for (std::size_t i = 0; i < 64; ++i) {
        CHECK(std::abs(out[i] - std::exp(-4 * kPi * kPi * t) * c[i]) < 1e-10);
    }
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1, 3);
    PeriodicField f(g);
    for (auto& v : f.values) v = U(rng);
    CHECK(std::abs(semigroup_apply(disc, f, 0.3).mean() - f.mean()) < 1e-13);
    // Semigroup property, contractivity.
    const auto a = semigroup_apply(disc, semigroup_apply(disc, f, 0.01), 0.02);
    CHECK(sup_distance(a, semigroup_apply(disc, f, 0.03)) < 1e-12);
    CHECK(semigroup_apply(disc, f, 0.01).l2_norm() <= f.l2_norm());
    CHECK_THROWS_AS(semigroup_apply(disc, f, -1.0), ValidationError);
    // Discrete symbol matches the three-point Laplacian.
    const auto L = laplacian_apply(disc, f);
    for (std::size_t i = 0; i < 64; ++i) {
        const double fd = (f.at(i - 1) - 2 * f[i] + f.at(i + 1)) * 64.0 * 64.0;
        CHECK(std::abs(L[i] - fd) < 1e-8 * 4096);
    }
}

TEST_CASE("greens_function") {
    for (double t : {1e-3, 1e-1}) {
        const double x = 0.3;
        double mass = 0.0;
        const int m = 4000;
        for (int j = 0; j < m; ++j) mass += greens_function(t, x, (j + 0.5) / m);
        CHECK(std::abs(mass / m - 1.0) < 1e-10);
        CHECK(greens_function(t, 0.2, 0.7) == greens_function(t, 0.7, 0.2));
        CHECK(greens_function(t, 0.0, 0.5) >= -1e-14);
    }
    const double t = 1e-4;
    CHECK(std::abs(greens_function(t, 0.4, 0.4) * std::sqrt(4 * kPi * t) - 1.0) < 0.01);
    CHECK_THROWS_AS(greens_function(0.0, 0.1, 0.2), ValidationError);

    const auto tab = greens_table(GridSpec(32), 0.01);
    for (std::size_t i = 0; i < 32; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 32; ++j) row += tab(i, j) / 32.0;
        CHECK(std::abs(row - 1.0) < 1e-10);
        CHECK(tab(i, (i + 5) % 32) == tab((i + 5) % 32, i));
    }
}

TEST_CASE("stochastic_convolution") {
    GridSpec g(16);
    SpectralPlan plan(g, Spectrum::continuum);
    NoiseIncrement zero{g, 0.01, 10, std::vector<double>(160, 0.0), std::vector<double>(10, 0.0)};
    for (const auto& f : stochastic_convolution(plan, zero)) CHECK(f.sup_norm() == 0.0);

    // Long-run variance of mode 1 is 1/(2 λ_1) per orthonormal mode; mode 0 variance is t.
    const double dt = 1e-3;
    const std::size_t steps = 10000;
    const int reps = 200;
    double var1 = 0.0, var0 = 0.0;
    int count = 0;
    for (int r = 0; r < reps; ++r) {
        const auto noise = sample_white_noise(g, dt, steps, {17, static_cast<std::uint64_t>(r), 0});
        const auto path = stochastic_convolution(plan, noise);
        for (std::size_t s = 200; s <= steps; s += 20) {
            double c = 0.0;
            for (std::size_t i = 0; i < 16; ++i) c += path[s][i] * std::sqrt(2.0) * std::cos(2 * kPi * g.node(i));
            c /= 16.0;
            var1 += c * c;
            ++count;
        }
        const double m0 = path[steps].mean();
        var0 += m0 * m0;
    }
    var1 /= count;
    var0 /= reps;
    const double lambda1 = 4 * kPi * kPi;
    CHECK(std::abs(var1 * 2 * lambda1 - 1.0) < 0.03);
    CHECK(std::abs(var0 / (dt * steps) - 1.0) < 0.25);
}
