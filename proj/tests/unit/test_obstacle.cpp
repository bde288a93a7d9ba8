#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "torusflow/obstacle.hpp"

using namespace torusflow;
constexpr double kPi = std::numbers::pi;

namespace {

ObstaclePath crossing(GridSpec g, double dt, std::size_t steps) {
    return ObstaclePath::from_function(g, dt, steps, [](double t, double) { return 1.0 - 4.0 * t; });
}

double sup_row_distance(const ObstacleSolution& a, const ObstacleSolution& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.z.size(); ++i) m = std::max(m, std::abs(a.z[i] - b.z[i]));
    return m;
}

}  // namespace

TEST_CASE("inactive obstacle") {
    GridSpec g(32);
    const auto v = ObstaclePath::from_function(g, 1e-3, 100, [](double, double) { return 0.7; });
    const auto sol = solve_obstacle(v);
    CHECK(sol.sup_norm() == 0.0);
    CHECK(sol.eta.total_mass() == 0.0);
    CHECK(complementarity_defect(sol, v) == 0.0);
    const auto test = PeriodicField::from_function(g, [](double x) { return std::cos(2 * kPi * x); });
    CHECK(weak_form_residual(sol, test) == 0.0);
}

TEST_CASE("initial violation is rejected") {
    GridSpec g(8);
    const auto v = ObstaclePath::from_function(g, 1e-3, 10, [](double, double x) { return x - 0.5; });
    CHECK_THROWS_AS(solve_obstacle(v), ValidationError);
}

TEST_CASE("crossing obstacle against the penalisation oracle") {
    GridSpec g(32);
    const double dt = 1e-3;
    const std::size_t N = 500;  // T = 1/2
    const auto v = crossing(g, dt, N);
    const auto sol = solve_obstacle(v);
    for (std::size_t i = 0; i < sol.z.size(); ++i) CHECK(sol.z[i] + v.values[i] >= -1e-10);
    // No mass before t = 1/4, positive mass after.
    double early = 0.0, late = 0.0;
    for (std::size_t s = 0; s < N; ++s) {
        for (double e : sol.eta.step(s)) ((s + 1) * dt <= 0.25 - 1e-12 ? early : late) += e;
    }
    CHECK(early == 0.0);
    CHECK(late > 0.0);
    CHECK(sol.eta.min() >= 0.0);
    CHECK(complementarity_defect(sol, v) <= 1e-8);

    const auto pen = oracle::penalised_obstacle(v.values, 32, N, dt, 1e-6);
    double gap = 0.0;
    for (std::size_t i = 0; i < pen.size(); ++i) gap = std::max(gap, std::abs(pen[i] - sol.z[i]));
    CHECK(gap < 1e-4);
}

TEST_CASE("contraction and sup bound") {
    GridSpec g(32);
    const double dt = 1e-3;
    const auto v = ObstaclePath::from_function(g, dt, 300, [](double t, double x) {
        return 0.5 + 0.5 * std::cos(2 * kPi * x) - 3.0 * t;
    });
    const auto w = ObstaclePath::from_function(g, dt, 300, [](double t, double x) {
        return 0.5 + 0.5 * std::cos(2 * kPi * x) - 3.0 * t + 0.1 * std::sin(2 * kPi * x) * std::min(1.0, 10 * t);
    });
    const auto a = solve_obstacle(v), b = solve_obstacle(w);
    double sup_vw = 0.0;
    for (std::size_t i = 0; i < v.values.size(); ++i) sup_vw = std::max(sup_vw, std::abs(v.values[i] - w.values[i]));
    CHECK(sup_vw == doctest::Approx(0.1).epsilon(0.01));
    CHECK(sup_row_distance(a, b) <= sup_vw + 1e-12);
    CHECK(a.sup_norm() <= v.sup_norm() + 1e-12);

    // Lowering the obstacle never decreases the reflection mass.
    const auto lower = ObstaclePath::from_function(g, dt, 300, [](double t, double x) {
        return 0.5 + 0.5 * std::cos(2 * kPi * x) - 3.5 * t;
    });
    CHECK(solve_obstacle(lower).eta.total_mass() >= a.eta.total_mass());
}

TEST_CASE("weak form residual") {
    // φ ≡ 1: the Laplacian term drops out.
    GridSpec g(64);
    const double dt = 1e-3;
    const auto v = crossing(g, dt, 500);
    const auto sol = solve_obstacle(v);
    const PeriodicField one(g, 1.0);
    double zT = 0.0;
    for (double z : sol.row(500)) zT += z / 64.0;
    CHECK(weak_form_residual(sol, one) == doctest::Approx(std::abs(zT - sol.eta.total_mass())).epsilon(1e-12));

    // First order in dt for a binding, spatially varying obstacle.
    auto residual = [&](std::size_t refine) {
        const double h = 2e-3 / static_cast<double>(refine);
        const std::size_t N = 100 * refine;
        const auto w = ObstaclePath::from_function(g, h, N, [](double t, double x) {
            return 0.5 + 0.5 * std::cos(2 * kPi * x) - 4.0 * t;
        });
        const auto s = solve_obstacle(w);
        const auto test = PeriodicField::from_function(g, [](double x) { return std::cos(2 * kPi * x); });
        return weak_form_residual(s, test);
    };
    const double r1 = residual(1), r2 = residual(2), r4 = residual(4);
    CHECK(r2 < r1);
    CHECK(r4 < r2);
    CHECK(std::log2(r1 / r4) / 2.0 > 0.8);
}

TEST_CASE("obstacle csv") {
    GridSpec g(4);
    const auto v = crossing(g, 0.1, 5);
    const auto sol = solve_obstacle(v);
    std::stringstream ss;
    write_obstacle_csv(ss, sol);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "t,x,z,eta_increment");
    int rows = 0;
    for (std::string line; std::getline(ss, line);) ++rows;
    CHECK(rows == 24);
}
