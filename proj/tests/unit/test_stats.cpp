#include <doctest.h>

#include <cmath>
#include <random>

#include "torusflow/parallel.hpp"
#include "torusflow/stats.hpp"

using namespace torusflow;

TEST_CASE("neumaier sum") {
    NeumaierSum s;
    s.add(1e16);
    s.add(1.0);
    s.add(-1e16);
    CHECK(s.value() == 1.0);
}

TEST_CASE("mean estimate") {
    const std::vector<double> c(100, 0.25);
    const auto m = mean_estimate(c);
    CHECK(m.mean == 0.25);
    CHECK(m.stderr_ == 0.0);
    const std::vector<double> one{3.0};
    CHECK(mean_estimate(one).stderr_ == 0.0);
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(mean_estimate(v).stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
}

TEST_CASE("kolmogorov tail and ks test") {
    CHECK(kolmogorov_tail(0.0) == 1.0);
    CHECK(kolmogorov_tail(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N(0, 1), S(0.5, 1);
    std::vector<double> a(500), b(500), c(500);
    for (auto& x : a) x = N(rng);
    for (auto& x : b) x = N(rng);
    for (auto& x : c) x = S(rng);
    CHECK(ks_two_sample(a, b).p_value > 0.01);
    CHECK(ks_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("linear fit") {
    const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
    const auto f = linear_fit(x, y);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r_squared == doctest::Approx(1.0));
}

TEST_CASE("parallel_for writes by index and rethrows") {
    std::vector<int> out(1000, 0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; }, 4);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }, 3),
                    std::runtime_error);
}
