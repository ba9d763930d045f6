#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "edq/math.hpp"
#include "edq/random.hpp"

using namespace edq;

TEST_CASE("streams are reproducible by key", "[random]") {
    RandomStream a(42, 3, 7), b(42, 3, 7);
    for (int i = 0; i < 100; ++i) REQUIRE(a.bits() == b.bits());
}

TEST_CASE("distinct stream ids decorrelate", "[random]") {
    RandomStream a(42, 0, 0), b(42, 1, 0), c(42, 0, 1);
    int equal_ab = 0, equal_ac = 0;
    for (int i = 0; i < 64; ++i) {
        equal_ab += a.bits() == b.bits();
        equal_ac += a.bits() == c.bits();
    }
    CHECK(equal_ab == 0);
    CHECK(equal_ac == 0);
}

TEST_CASE("split streams differ from parent and siblings", "[random]") {
    RandomStream parent(7);
    RandomStream c1 = parent.split(1), c2 = parent.split(2);
    CHECK(c1.key() != c2.key());
    CHECK(c1.key() != parent.key());
    CHECK(c1.bits() != c2.bits());
}

TEST_CASE("uniform draws pass KS", "[random]") {
    RandomStream s(2024, 1);
    std::vector<double> v(100000);
    for (auto& x : v) x = s.uniform();
    auto [d, p] = ks_test(v, [](double x) { return x; });
    INFO("D=" << d);
    CHECK(p > 0.001);
}

TEST_CASE("exponential transform has the right law", "[random]") {
    RandomStream s(2024, 2);
    const double rate = 2.0;
    std::vector<double> v(100000);
    double sum = 0.0;
    for (auto& x : v) {
        x = s.exponential(rate);
        sum += x;
    }
    double mean = sum / v.size();
    // se of the mean is 1/(rate*sqrt(N))
    CHECK(std::abs(mean - 0.5) < 5.0 * 0.5 / std::sqrt(100000.0));
    auto [d, p] = ks_test(v, [&](double x) { return 1.0 - std::exp(-rate * x); });
    INFO("D=" << d);
    CHECK(p > 0.001);
}

TEST_CASE("normal transform has the right law", "[random]") {
    RandomStream s(2024, 3);
    std::vector<double> v(100000);
    double sum = 0.0, ss = 0.0;
    for (auto& x : v) {
        x = s.normal();
        sum += x;
        ss += x * x;
    }
    double mean = sum / v.size();
    double var = ss / v.size() - mean * mean;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(100000.0));
    CHECK(std::abs(var - 1.0) < 0.05);
    auto [d, p] = ks_test(v, [](double x) { return normal_cdf(x); });
    INFO("D=" << d);
    CHECK(p > 0.001);
}

TEST_CASE("erlang sums match moments", "[random]") {
    RandomStream s(2024, 4);
    const int shape = 3;
    const double rate = 1.5;
    double sum = 0.0, ss = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = s.erlang(shape, rate);
        sum += x;
        ss += x * x;
    }
    double mean = sum / n, var = ss / n - mean * mean;
    CHECK(mean == Catch::Approx(shape / rate).margin(0.01));
    CHECK(var == Catch::Approx(shape / (rate * rate)).margin(0.03));
}
