#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include "edq/mam.hpp"
#include "edq/simulate.hpp"
#include "support/erlang_a.hpp"

using namespace edq;

namespace {

PhService fig3_service() {
    return PhService{{{0.5916, 1.0 / 0.1691}, {0.4084, 1.0 / 2.203}}};
}

PhService small_mix() {
    return PhService{{{0.6, 2.0}, {0.4, 1.0 / 1.75}}};
}

double exact_abandonment(const CtmcSolution& sol, double lambda, double theta) {
    double excess = 0.0;
    for (int i = sol.n + 1; i <= sol.K; ++i) excess += double(i - sol.n) * sol.marginal[std::size_t(i)];
    return theta * excess / lambda;
}

// time-weighted occupancy pmf rebuilt from a customer-level log; the n initial
// jobs occupy one server each until that server's first completion
std::vector<double> occupancy_pmf(const EventLog& log, double from, double to, int states) {
    std::vector<std::pair<double, int>> ev;
    for (const auto& s : log.completions)
        if (!s.empty()) ev.emplace_back(s.front(), -1);
    for (const auto& c : log.customers) {
        ev.emplace_back(c.arrival, +1);
        double leave = std::numeric_limits<double>::quiet_NaN();
        if (!std::isnan(c.service_end))
            leave = c.service_end;
        else if (!std::isnan(c.abandon_time))
            leave = c.abandon_time;
        if (!std::isnan(leave)) ev.emplace_back(leave, -1);
    }
    std::sort(ev.begin(), ev.end());
    std::vector<double> mass(std::size_t(states), 0.0);
    int level = log.n;
    double t = 0.0;
    auto settle = [&](double until) {
        const double lo = std::max(t, from), hi = std::min(until, to);
        if (hi > lo && level < states) mass[std::size_t(level)] += hi - lo;
        t = until;
    };
    for (const auto& [when, delta] : ev) {
        settle(when);
        level += delta;
    }
    settle(to);
    for (double& v : mass) v /= (to - from);
    return mass;
}

}  // namespace

TEST_CASE("single-branch service collapses to the birth-death closed form", "[mam]") {
    auto tiny = solve(1.5, 2, PhService::exponential(1.0), 0.7, 40);
    auto tiny_ref = testing::erlang_a(1.5, 2, 1.0, 0.7, 40);
    REQUIRE(tiny.phases == 1);
    REQUIRE(tiny.pi.size() == 41);
    for (int i = 0; i <= tiny.K; ++i)
        CHECK(tiny.marginal[std::size_t(i)] == Catch::Approx(tiny_ref.pmf[std::size_t(i)]).margin(1e-10));

    // the overloaded instance the rest of the suite leans on
    auto big = solve_auto(120.0, 100, PhService::exponential(1.0), 1.0);
    auto big_ref = testing::erlang_a(120.0, 100, 1.0, 1.0, big.K);
    double worst = 0.0;
    for (int i = 0; i <= big.K; ++i)
        worst = std::max(worst, std::abs(big.marginal[std::size_t(i)] - big_ref.pmf[std::size_t(i)]));
    CHECK(worst < 1e-10);
    CHECK(exact_abandonment(big, 120.0, 1.0) == Catch::Approx(big_ref.abandonment).margin(1e-10));
}

TEST_CASE("stationary solutions satisfy the accepted-solve contract", "[mam]") {
    auto sol = solve_auto(120.0, 100, fig3_service(), 1.0);
    CHECK(sol.residual < 1e-10);
    CHECK(sol.tail_mass < 1e-8);

    double total = 0.0, lo = 0.0;
    for (double v : sol.pi) {
        total += v;
        lo = std::min(lo, v);
    }
    CHECK(lo >= 0.0);
    CHECK(total == Catch::Approx(1.0).margin(1e-12));

    double marg = 0.0;
    for (double v : sol.marginal) marg += v;
    CHECK(marg == Catch::Approx(1.0).margin(1e-12));

    SECTION("cut balance between adjacent counts") {
        double worst = 0.0;
        for (int i = 0; i + 1 <= sol.K; ++i)
            worst = std::max(worst,
                             std::abs(120.0 * sol.marginal[std::size_t(i)] - sol.down_flow[std::size_t(i) + 1]));
        CHECK(worst < 1e-9);
    }

    SECTION("busy servers split across branches by workload share") {
        const double beta2 = fig3_service().busy_fraction(1);
        CHECK(sol.busy_by_phase[1] / sol.busy_mean == Catch::Approx(beta2).margin(1e-6));
        for (int lvl = 115; lvl <= 125; ++lvl)
            CHECK(sol.phase_mean_by_level[std::size_t(lvl)][1] / 100.0 ==
                  Catch::Approx(beta2).margin(0.01));
    }
}

TEST_CASE("two-branch overloaded instance versus the density approximation", "[mam]") {
    auto service = fig3_service();
    auto run = [&](double gamma) {
        auto sol = solve_auto(120.0, 100, service, 1.0 / gamma);
        QueueSpec spec{120.0, 1.0, 100, to_distribution(service), Exponential{1.0 / gamma}};
        auto summary = summarize(spec);
        double gap = 0.0;
        for (int i = 0; i <= sol.K; ++i)
            gap = std::max(gap, std::abs(sol.marginal[std::size_t(i)] - queue_pmf(summary, spec, i)));
        return std::make_pair(tv_distance(sol, summary, spec), gap);
    };
    auto slow_patience = std::async(std::launch::async, run, 5.0);
    auto [tv1, gap1] = run(1.0);
    auto [tv5, gap5] = slow_patience.get();

    CHECK(tv5 < tv1);
    CHECK(tv1 == Catch::Approx(0.036137).margin(5e-4));
    CHECK(tv5 == Catch::Approx(0.007995).margin(5e-4));
    CHECK(gap5 < 5e-4);
    CHECK(gap1 < 5e-3);
}

TEST_CASE("small mixed-service chain agrees with a long simulation", "[mam]") {
    const double lambda = 1.2, theta = 0.8;
    auto sol = solve(lambda, 2, small_mix(), theta, 60);

    SimConfig cfg;
    cfg.spec.arrival_rate = lambda;
    cfg.spec.interarrival_scv = 1.0;
    cfg.spec.n = 2;
    cfg.spec.service = to_distribution(small_mix());
    cfg.spec.patience = Exponential{theta};
    cfg.warmup = 200.0;
    cfg.horizon = 10200.0;
    cfg.batches = 10;
    cfg.keep_log = true;

    const int states = 9;
    auto pmf = std::vector<std::vector<double>>(std::size_t(states));
    std::vector<double> abd;
    for (uint64_t seed : {11u, 12u, 13u, 14u, 15u, 16u, 17u, 18u}) {
        cfg.seed = seed;
        auto run = simulate(cfg);
        auto est = occupancy_pmf(run.log, cfg.warmup, cfg.horizon, states);
        for (int i = 0; i < states; ++i) pmf[std::size_t(i)].push_back(est[std::size_t(i)]);
        abd.push_back(run.result.abandonment.estimate);
    }
    for (int i = 0; i < states; ++i) {
        auto ci = t_interval(pmf[std::size_t(i)], 0.995);
        INFO("state " << i << ": sim " << ci.mean << " +- " << ci.half_width << " exact "
                      << sol.marginal[std::size_t(i)]);
        CHECK(std::abs(ci.mean - sol.marginal[std::size_t(i)]) <= ci.half_width + 1e-4);
    }
    auto abd_ci = t_interval(abd, 0.995);
    CHECK(std::abs(abd_ci.mean - exact_abandonment(sol, lambda, theta)) <= abd_ci.half_width + 1e-4);
}

TEST_CASE("power iteration fallback agrees with the direct solve", "[mam]") {
    auto direct = solve(1.2, 2, small_mix(), 0.8, 40);
    auto power = solve(1.2, 2, small_mix(), 0.8, 40, 0);
    REQUIRE(direct.pi.size() == power.pi.size());
    double worst = 0.0;
    for (std::size_t s = 0; s < direct.pi.size(); ++s)
        worst = std::max(worst, std::abs(direct.pi[s] - power.pi[s]));
    CHECK(worst < 1e-9);
    CHECK(power.residual < 1e-10);
}

TEST_CASE("exact-chain configuration errors are rejected", "[mam]") {
    auto good = PhService::exponential(1.0);
    CHECK_THROWS_AS(solve(0.0, 2, good, 1.0, 40), InvalidConfig);
    CHECK_THROWS_AS(solve(1.0, 0, good, 1.0, 40), InvalidConfig);
    CHECK_THROWS_AS(solve(1.0, 2, good, 0.0, 40), InvalidConfig);
    CHECK_THROWS_AS(solve(1.0, 2, good, 1.0, 3), InvalidConfig);
    CHECK_THROWS_AS(solve(1.0, 2, PhService{}, 1.0, 40), InvalidConfig);
    CHECK_THROWS_AS(solve(1.0, 2, PhService{{{0.7, 1.0}, {0.2, 2.0}}}, 1.0, 40), InvalidConfig);
    CHECK_THROWS_AS(solve(1.0, 2, PhService{{{0.5, 1.0}, {0.5, -2.0}}}, 1.0, 40), InvalidConfig);

    // keeping too little of an overloaded chain must be called out, not hidden
    CHECK_THROWS_AS(solve(120.0, 100, fig3_service(), 1.0, 140), TruncationTooSmall);
}

TEST_CASE("total variation helpers behave at the edges", "[mam]") {
    std::vector<double> p{0.2, 0.5, 0.3};
    CHECK(tv_distance(p, p) == 0.0);
    CHECK(tv_distance(p, {0.2, 0.5}) == Catch::Approx(0.15));
    CHECK(tv_distance({1.0}, {0.0, 1.0}) == Catch::Approx(1.0));

    // a collapsed density parked off the integer grid shares no mass with any pmf
    auto sol = solve(1.5, 2, PhService::exponential(1.0), 0.7, 40);
    QueueSpec spec{1.5, 1.0, 2, Exponential{1.0}, Exponential{0.7}};
    DiffusionSummary degenerate;
    degenerate.q = 0.37;
    degenerate.sigma_x_sq = 1e-12;
    CHECK(tv_distance(sol, degenerate, spec) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("count pmf export is plottable", "[mam]") {
    auto service = fig3_service();
    auto sol = solve_auto(120.0, 100, service, 1.0);
    QueueSpec spec{120.0, 1.0, 100, to_distribution(service), Exponential{1.0}};
    auto summary = summarize(spec);

    std::ostringstream os;
    write_pmf_csv(sol, summary, spec, os);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line.find("i,probability,gaussian_probability") == 0);
    int rows = 0;
    double mass = 0.0, gmass = 0.0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        REQUIRE(std::stoi(line.substr(0, c1)) == rows);
        mass += std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        gmass += std::stod(line.substr(c2 + 1));
        ++rows;
    }
    CHECK(rows == sol.K + 1);
    CHECK(mass == Catch::Approx(1.0).margin(1e-9));
    CHECK(gmass == Catch::Approx(1.0).margin(1e-3));
}
