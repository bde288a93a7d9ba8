#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "torusflow/interaction.hpp"

using namespace torusflow;
constexpr double kPi = std::numbers::pi;

namespace {

TorusMeasure random_atoms(std::mt19937_64& rng, int count) {
    std::uniform_real_distribution<double> U(0, 1);
    std::vector<Atom> a;
    for (int i = 0; i < count; ++i) a.push_back({U(rng), U(rng) + 0.1});
    return TorusMeasure::normalised_atoms(a);
}

CoupledState random_state(const GridSpec& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.2, 1.8), V(-1, 1);
    PeriodicField f(g);
    for (auto& v : f.values) v = U(rng);
    return {f, V(rng), 0.0};
}

}  // namespace

TEST_CASE("constant kernel") {
    DriftEvaluator ev(KernelSpec::constant(0.7));
    std::mt19937_64 rng(1);
    const auto mu = random_atoms(rng, 4);
    CHECK(eval_b(ev, 0.3, mu) == doctest::Approx(0.7));
    CHECK(eval_b_prime(ev, 0.3, mu) == 0.0);
    GridSpec g(32);
    const auto s = random_state(g, rng);
    for (double b : beta_field(ev, s).values) CHECK(b == 0.0);
    CHECK(m_drift(ev, s, MDriftVariant::unweighted) == 0.7);
    CHECK(m_drift(ev, s, MDriftVariant::weighted) == doctest::Approx(0.7 * s.g.mean()).epsilon(1e-12));
}

TEST_CASE("sine kernel") {
    DriftEvaluator ev(KernelSpec::trigonometric(0.0, {}, {1.0}));
    CHECK(eval_b(ev, 0.3, TorusMeasure::dirac(0.1)) == doctest::Approx(std::sin(2 * kPi * 0.2)).epsilon(1e-12));
    CHECK(eval_b_prime(ev, 0.3, TorusMeasure::dirac(0.0)) ==
          doctest::Approx(2 * kPi * std::cos(2 * kPi * 0.3)).epsilon(1e-12));
    CHECK(std::abs(eval_b(ev, 0.3, TorusMeasure::uniform(GridSpec(64)))) < 1e-12);

    std::mt19937_64 rng(2);
    for (int k = 0; k < 20; ++k) {
        const auto mu = random_atoms(rng, 5);
        const double u = 0.37, h = 1e-5;
        const double fd = (eval_b(ev, u + h, mu) - eval_b(ev, u - h, mu)) / (2 * h);
        CHECK(std::abs(fd - eval_b_prime(ev, u, mu)) < 1e-8);
    }
}

TEST_CASE("sampled kernel matches the closed form and its own derivative") {
    const auto trig = KernelSpec::trigonometric(0.1, {0.3}, {0.2, -0.1});
    const auto smp = KernelSpec::sampled(trig.h(), trig.h_prime());
    for (double u : {0.0, 0.13, 0.5, 0.77}) {
        CHECK(std::abs(smp.value(u) - trig.value(u)) < 1e-6);
        CHECK(std::abs(smp.derivative(u) - trig.derivative(u)) < 1e-3);
        const double h = 1e-6;
        CHECK(std::abs((smp.value(u + h) - smp.value(u - h)) / (2 * h) - smp.derivative(u)) < 1e-6);
    }
    CHECK(smp.bound() >= trig.h().sup_norm());
    std::stringstream ss;
    write_kernel_csv(ss, smp);
    const auto back = KernelSpec::read_csv(ss);
    CHECK(back.value(0.3) == doctest::Approx(smp.value(0.3)).epsilon(1e-12));
    std::stringstream bad("u,h,h_prime\n0,1,0\n0.5,1,0\n");
    CHECK_THROWS_AS(KernelSpec::read_csv(bad), ValidationError);
}

TEST_CASE("beta along a uniform state, two-stage quadrature oracle") {
    DriftEvaluator ev(KernelSpec::trigonometric(0.0, {}, {1.0}));
    GridSpec g(64);
    const CoupledState s{PeriodicField(g, 1.0), 0.3, 0.0};
    const auto beta = beta_field(ev, s);
    const auto A = reconstruct_A(s.g, s.M);
    for (std::size_t i = 0; i < 64; i += 7) {
        const double Az = A.base()[i];
        const double ref = oracle::simpson(
            [&](double a) { return 2 * kPi * std::cos(2 * kPi * (Az - (a - 0.5 + 0.3))); }, 0.0, 1.0);
        CHECK(std::abs(beta[i] - ref) < 1e-10);
    }
    CHECK(beta.sup_norm() <= ev.kernel().bound());
}

TEST_CASE("m_drift variants and refinement") {
    DriftEvaluator ev(KernelSpec::trigonometric(0.2, {0.5}, {0.3}));
    GridSpec g(32);
    const CoupledState ones{PeriodicField(g, 1.0), 0.1, 0.0};
    CHECK(m_drift(ev, ones, MDriftVariant::unweighted) ==
          doctest::Approx(m_drift(ev, ones, MDriftVariant::weighted)).epsilon(1e-12));
    CHECK_THROWS_AS(parse_m_drift_variant("both"), ValidationError);

    auto profile = [](double u) { return 1.0 + 0.5 * std::cos(2 * kPi * u) + 0.2 * std::sin(4 * kPi * u); };
    const CoupledState coarse{PeriodicField::from_function(GridSpec(64), profile), 0.2, 0.0};
    const CoupledState fine{PeriodicField::from_function(GridSpec(640), profile), 0.2, 0.0};
    for (auto v : {MDriftVariant::unweighted, MDriftVariant::weighted}) {
        const double a = m_drift(ev, coarse, v), b = m_drift(ev, fine, v);
        CHECK(std::abs(a - b) <= 1e-4 * std::max(1.0, std::abs(b)));
        CHECK(std::abs(a) <= ev.kernel().bound() * (v == MDriftVariant::weighted ? coarse.g.l1_norm() : 1.0));
    }
}

TEST_CASE("atoms versus histogram representation") {
    DriftEvaluator ev(KernelSpec::trigonometric(0.0, {0.4}, {0.7}));
    GridSpec g(64);
    std::vector<double> mass(64);
    std::vector<Atom> atoms;
    // Fine atomic discretisation of the same histogram.
    for (std::size_t i = 0; i < 64; ++i) mass[i] = (1.0 + 0.5 * std::cos(2 * kPi * (i + 0.5) / 64)) / 64;
    for (std::size_t i = 0; i < 64; ++i) {
        for (int q = 0; q < 50; ++q) atoms.push_back({(i + (q + 0.5) / 50) / 64, mass[i] / 50});
    }
    const auto hist = TorusMeasure::from_histogram(g, mass);
    const auto at = TorusMeasure::normalised_atoms(atoms);
    CHECK(std::abs(eval_b(ev, 0.31, hist) - eval_b(ev, 0.31, at)) < 1e-5);
}

TEST_CASE("probe_assumptions") {
    const auto zero = probe_assumptions(KernelSpec::constant(0.0), 50, {1, 0, 0});
    CHECK(zero.lipschitz_estimate_b == 0.0);
    CHECK(zero.sup_b == 0.0);

    const auto sine = KernelSpec::trigonometric(0.0, {}, {1.0});
    const auto small = probe_assumptions(sine, 100, {2, 0, 0});
    const auto big = probe_assumptions(sine, 400, {2, 0, 0});
    CHECK(big.sup_b <= 1.0 + 1e-12);
    CHECK(big.sup_b > 0.9);
    CHECK(big.lipschitz_estimate_b <= 2 * kPi + 1e-6);
    CHECK(big.lipschitz_estimate_b >= small.lipschitz_estimate_b);
    CHECK(big.sup_b_prime >= small.sup_b_prime);
}

TEST_CASE("beta Lipschitz in the state") {
    const auto kernel = KernelSpec::trigonometric(0.0, {0.5}, {0.3});
    DriftEvaluator ev(kernel);
    const auto rep = probe_assumptions(kernel, 400, {3, 0, 0});
    const double C = 2.0 * rep.lipschitz_estimate_b_prime;
    GridSpec g(32);
    std::mt19937_64 rng(9);
    int violations = 0;
    for (int k = 0; k < 500; ++k) {
        const auto s1 = random_state(g, rng), s2 = random_state(g, rng);
        const auto b1 = beta_field(ev, s1), b2 = beta_field(ev, s2);
        const double rhs = C * (l2_distance(s1.g, s2.g) + std::abs(s1.M - s2.M));
        for (std::size_t i = 0; i < 32; ++i) violations += std::abs(b1[i] - b2[i]) > rhs + 1e-12;
    }
    CHECK(violations == 0);
}
