#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <queue>
#include <sstream>
#include <vector>

#include "edq/simulate.hpp"
#include "support/erlang_a.hpp"

using namespace edq;

namespace {

QueueSpec overloaded_100(Distribution service, double gamma) {
    QueueSpec s;
    s.arrival_rate = 120.0;
    s.interarrival_scv = 1.0;
    s.n = 100;
    s.service = std::move(service);
    s.patience = Exponential{1.0 / gamma};
    return s;
}

bool same_measure(const SimMeasure& a, const SimMeasure& b) {
    return a.estimate == b.estimate && a.half_width == b.half_width;
}

bool same_result(const SimResult& a, const SimResult& b) {
    if (!same_measure(a.abandonment, b.abandonment)) return false;
    if (!same_measure(a.wait_mean, b.wait_mean)) return false;
    if (!same_measure(a.wait_variance, b.wait_variance)) return false;
    if (!same_measure(a.queue_mean, b.queue_mean)) return false;
    if (!same_measure(a.queue_variance, b.queue_variance)) return false;
    if (!same_measure(a.system_mean, b.system_mean)) return false;
    if (!same_measure(a.system_variance, b.system_variance)) return false;
    if (a.wait_tails.size() != b.wait_tails.size()) return false;
    for (std::size_t i = 0; i < a.wait_tails.size(); ++i)
        if (!same_measure(a.wait_tails[i].prob, b.wait_tails[i].prob)) return false;
    for (std::size_t i = 0; i < a.system_tails.size(); ++i)
        if (!same_measure(a.system_tails[i].prob, b.system_tails[i].prob)) return false;
    return a.served == b.served && a.abandoned == b.abandoned && a.arrivals == b.arrivals &&
           a.inexact_virtual_waits == b.inexact_virtual_waits;
}

// Re-simulates a logged history with service durations pinned to (server, slot),
// optionally forcing one customer to be infinitely patient. This is a separate
// code path from the engine, so agreement is meaningful.
class Replay {
public:
    explicit Replay(const EventLog& lg) : log_(lg), n_(lg.n) {
        durations_.assign(std::size_t(n_), {});
        for (int j = 0; j < n_; ++j)
            if (!log_.completions[std::size_t(j)].empty())
                durations_[std::size_t(j)].push_back(log_.completions[std::size_t(j)].front());
        auto eps = std::vector<std::vector<std::pair<double, double>>>(std::size_t(n_));
        for (const auto& c : log_.customers)
            if (c.server >= 0 && !std::isnan(c.service_end))
                eps[std::size_t(c.server)].push_back(
                    {c.service_start, c.service_end - c.service_start});
        for (int j = 0; j < n_; ++j) {
            auto& v = eps[std::size_t(j)];
            std::sort(v.begin(), v.end());
            for (auto& e : v) durations_[std::size_t(j)].push_back(e.second);
        }
    }

    // service-start epoch per customer (NaN if never started before the log ran out)
    std::vector<double> starts(std::size_t patient_target) const {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::vector<double> started(log_.customers.size(), nan);
        struct REv {
            double t;
            int kind;  // 0 completion, 1 deadline, 2 arrival
            std::uint64_t seq;
            int server;
            std::size_t id;
        };
        auto after = [](const REv& x, const REv& y) {
            if (x.t != y.t) return x.t > y.t;
            if (x.kind != y.kind) return x.kind > y.kind;
            return x.seq > y.seq;
        };
        std::priority_queue<REv, std::vector<REv>, decltype(after)> heap(after);
        std::uint64_t seq = 0;
        std::vector<std::size_t> slot(std::size_t(n_), 1);
        std::priority_queue<int, std::vector<int>, std::greater<>> idle;
        int busy = 0;
        for (int j = 0; j < n_; ++j) {
            ++busy;  // every server starts on its initial job
            if (!durations_[std::size_t(j)].empty())
                heap.push({durations_[std::size_t(j)][0], 0, seq++, j, SIZE_MAX});
            // servers with no logged completion stay busy past the horizon
        }
        for (std::size_t i = 0; i < log_.customers.size(); ++i) {
            heap.push({log_.customers[i].arrival, 2, seq++, -1, i});
            if (i != patient_target)
                heap.push({log_.customers[i].arrival + log_.customers[i].patience, 1, seq++, -1, i});
        }
        std::deque<std::size_t> q;
        std::vector<char> dead(log_.customers.size(), 0);

        auto assign = [&](int server, std::size_t id, double now) -> bool {
            if (slot[std::size_t(server)] >= durations_[std::size_t(server)].size())
                return false;  // duration beyond the logged horizon
            started[id] = now;
            double dur = durations_[std::size_t(server)][slot[std::size_t(server)]++];
            heap.push({now + dur, 0, seq++, server, id});
            return true;
        };

        while (!heap.empty()) {
            REv ev = heap.top();
            heap.pop();
            if (ev.kind == 2) {
                std::size_t id = ev.id;
                if (busy < n_) {
                    int server = idle.top();
                    idle.pop();
                    ++busy;
                    if (!assign(server, id, ev.t)) return started;
                } else {
                    q.push_back(id);
                }
            } else if (ev.kind == 1) {
                if (std::isnan(started[ev.id])) dead[ev.id] = 1;
            } else {
                while (!q.empty() && dead[q.front()]) q.pop_front();
                if (!q.empty()) {
                    std::size_t id = q.front();
                    q.pop_front();
                    if (!assign(ev.server, id, ev.t)) return started;
                } else {
                    idle.push(ev.server);
                    --busy;
                }
            }
        }
        return started;
    }

private:
    const EventLog& log_;
    int n_;
    std::vector<std::vector<double>> durations_;
};

}  // namespace

TEST_CASE("matched renewal families", "[simulate]") {
    auto exp_law = interarrival_law(2.0, 1.0);
    REQUIRE(std::holds_alternative<Exponential>(exp_law.v()));
    CHECK(mean(exp_law) == Catch::Approx(0.5).epsilon(1e-12));

    auto erl = interarrival_law(3.0, 0.25);
    REQUIRE(std::holds_alternative<Erlang>(erl.v()));
    CHECK(mean(erl) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(scv(erl) == Catch::Approx(0.25).epsilon(1e-12));

    auto hyper = interarrival_law(1.5, 4.0);
    REQUIRE(std::holds_alternative<Hyperexponential>(hyper.v()));
    CHECK(mean(hyper) == Catch::Approx(1.0 / 1.5).epsilon(1e-12));
    CHECK(scv(hyper) == Catch::Approx(4.0).epsilon(1e-12));

    CHECK_THROWS_AS(interarrival_law(0.0, 1.0), InvalidConfig);
    CHECK_THROWS_AS(interarrival_law(1.0, 0.37), InvalidConfig);
}

TEST_CASE("configuration validation", "[simulate]") {
    SimConfig cfg;
    cfg.spec = overloaded_100(Distribution{Exponential{1.0}}, 1.0);
    cfg.warmup = 10.0;
    cfg.horizon = 100.0;

    SECTION("warmup must be positive") {
        cfg.warmup = 0.0;
        CHECK_THROWS_AS(simulate(cfg), InvalidConfig);
    }
    SECTION("horizon must exceed warmup") {
        cfg.horizon = 10.0;
        CHECK_THROWS_AS(simulate(cfg), InvalidConfig);
    }
    SECTION("at least ten batches") {
        cfg.batches = 9;
        CHECK_THROWS_AS(simulate(cfg), InvalidConfig);
    }
    SECTION("log capture needs one replication") {
        cfg.keep_log = true;
        cfg.replications = 2;
        CHECK_THROWS_AS(simulate(cfg), InvalidConfig);
    }
    SECTION("scaled tails need overload") {
        cfg.spec.arrival_rate = 90.0;
        cfg.tail_thresholds_w = {0.5};
        CHECK_THROWS_AS(simulate(cfg), InvalidConfig);
    }
}

TEST_CASE("bit-identical reruns", "[simulate]") {
    SimConfig cfg;
    cfg.spec.arrival_rate = 24.0;
    cfg.spec.n = 20;
    cfg.spec.service = Exponential{1.0};
    cfg.spec.patience = Exponential{1.0};
    cfg.warmup = 20.0;
    cfg.horizon = 220.0;
    cfg.batches = 10;
    cfg.seed = 99;
    cfg.tail_thresholds_w = {0.5, 1.0};
    cfg.tail_thresholds_x = {0.0, 1.0};

    auto a = simulate(cfg).result;
    auto b = simulate(cfg).result;
    CHECK(same_result(a, b));
}

TEST_CASE("thread count does not change pooled results", "[simulate]") {
    SimConfig cfg;
    cfg.spec.arrival_rate = 24.0;
    cfg.spec.n = 20;
    cfg.spec.service = Erlang{2, 2.0};
    cfg.spec.patience = Exponential{0.5};
    cfg.warmup = 20.0;
    cfg.horizon = 120.0;
    cfg.batches = 10;
    cfg.seed = 123;
    cfg.replications = 4;

    cfg.threads = 1;
    auto serial = simulate(cfg).result;
    cfg.threads = 4;
    auto parallel = simulate(cfg).result;
    CHECK(same_result(serial, parallel));
}

TEST_CASE("markovian instance matches the birth-death solution", "[simulate]") {
    auto exact = edq::testing::erlang_a(120.0, 100, 1.0, 1.0, 500);
    REQUIRE(exact.tail_mass < 1e-12);

    SimConfig cfg;
    cfg.spec = overloaded_100(Distribution{Exponential{1.0}}, 1.0);
    cfg.warmup = 300.0;
    cfg.horizon = 9300.0;
    cfg.batches = 30;
    cfg.seed = 7;

    // half-integer thresholds so strict comparisons pick out exact state masses
    const std::vector<int> pts = {108, 114, 120, 126, 133};
    const double q_fluid = 20.0, spread = 10.0;  // fluid queue and sqrt(n*gamma)
    for (int i : pts) {
        cfg.tail_thresholds_x.push_back((i - 0.5 - 100.0 - q_fluid) / spread);
        cfg.tail_thresholds_x.push_back((i + 0.5 - 100.0 - q_fluid) / spread);
    }
    cfg.tail_thresholds_x.push_back(0.05);  // 120.5
    cfg.tail_thresholds_x.push_back(1.05);  // 130.5

    auto res = simulate(cfg).result;

    auto within = [](double got, double want, double hw) {
        INFO("got " << got << " want " << want << " hw " << hw);
        CHECK(std::abs(got - want) <= 1.3 * hw);
    };
    within(res.abandonment.estimate, exact.abandonment, res.abandonment.half_width);
    within(res.queue_mean.estimate, exact.queue_mean, res.queue_mean.half_width);
    within(res.queue_variance.estimate, exact.queue_var, res.queue_variance.half_width);
    within(res.system_mean.estimate, exact.system_mean, res.system_mean.half_width);

    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto& lo = res.system_tails[2 * k];
        const auto& hi = res.system_tails[2 * k + 1];
        double sim_pmf = lo.prob.estimate - hi.prob.estimate;
        double hw = lo.prob.half_width + hi.prob.half_width;
        within(sim_pmf, exact.pmf[std::size_t(pts[k])], hw);
    }
    const auto& t0 = res.system_tails[10];
    within(t0.prob.estimate, exact.system_tail(t0.threshold), t0.prob.half_width);
    const auto& t1 = res.system_tails[11];
    within(t1.prob.estimate, exact.system_tail(t1.threshold), t1.prob.half_width);

    // diagnostics behave sanely on an overloaded instance
    CHECK(res.idle_fraction < 0.2);
    CHECK(res.batch_lag1 < 0.6);
}

TEST_CASE("deterministic-service cell reproduces published measurements", "[simulate]") {
    SimConfig cfg;
    cfg.spec = overloaded_100(Distribution{Deterministic{1.0}}, 1.0);
    cfg.warmup = 500.0;
    cfg.horizon = 30500.0;
    cfg.batches = 30;
    cfg.seed = 2024;
    cfg.tail_thresholds_w = {0.5, 1.0, 2.0};
    cfg.tail_thresholds_x = {0.5, 1.0, 2.0};

    auto res = simulate(cfg).result;

    struct Ref {
        double value, ci;
    };
    auto overlap = [](const SimMeasure& got, Ref ref) {
        INFO("got " << got.estimate << "+-" << got.half_width << " ref " << ref.value << "+-"
                    << ref.ci);
        CHECK(std::abs(got.estimate - ref.value) <= 3.0 * ref.ci + got.half_width);
    };
    overlap(res.abandonment, {0.1668, 0.000020});
    overlap(res.wait_mean, {0.1851, 0.000028});
    overlap(res.wait_variance, {0.005322, 0.0000030});
    overlap(res.queue_mean, {20.02, 0.0034});
    overlap(res.queue_variance, {73.11, 0.038});

    const Ref wt[3] = {{0.2584, 0.00014}, {0.09269, 0.000078}, {0.003869, 0.000018}};
    const Ref xt[3] = {{0.2559, 0.00014}, {0.1131, 0.000089}, {0.01140, 0.000031}};
    for (int i = 0; i < 3; ++i) {
        overlap(res.wait_tails[std::size_t(i)].prob, wt[i]);
        overlap(res.system_tails[std::size_t(i)].prob, xt[i]);
    }
}

TEST_CASE("occupancy and sojourn agree through the arrival rate", "[simulate]") {
    SimConfig cfg;
    cfg.spec = overloaded_100(Distribution{LogNormal{1.0, 2.0}}, 1.0);
    cfg.warmup = 300.0;
    cfg.horizon = 3300.0;
    cfg.batches = 30;
    cfg.seed = 11;

    auto res = simulate(cfg).result;
    double lhs = res.system_mean.estimate;
    double rhs = cfg.spec.arrival_rate * res.mean_sojourn;
    INFO("time average " << lhs << " vs rate*sojourn " << rhs);
    CHECK(std::abs(lhs - rhs) / lhs < 0.005);
}

TEST_CASE("per-customer service draws give consistent estimates", "[simulate]") {
    SimConfig cfg;
    cfg.spec.arrival_rate = 24.0;
    cfg.spec.n = 20;
    cfg.spec.service = Exponential{1.0};
    cfg.spec.patience = Exponential{1.0};
    cfg.warmup = 100.0;
    cfg.horizon = 2100.0;
    cfg.batches = 20;
    cfg.seed = 5;

    auto by_server = simulate(cfg).result;
    cfg.per_customer_service = true;
    auto by_customer = simulate(cfg).result;
    double hw = by_server.abandonment.half_width + by_customer.abandonment.half_width;
    CHECK(std::abs(by_server.abandonment.estimate - by_customer.abandonment.estimate) <=
          1.5 * hw);
}

TEST_CASE("offered waits match the patient-customer counterfactual", "[simulate]") {
    SimConfig cfg;
    cfg.spec.arrival_rate = 2.4;
    cfg.spec.n = 2;
    cfg.spec.service = Exponential{1.0};
    cfg.spec.patience = Exponential{2.0};
    cfg.warmup = 1.0;
    cfg.horizon = 61.0;
    cfg.batches = 10;
    cfg.seed = 31;
    cfg.keep_log = true;

    auto run = simulate(cfg);
    const EventLog& log = run.log;
    REQUIRE(log.customers.size() > 50);

    auto vw = virtual_waits(log, cfg.spec.n);
    REQUIRE(vw.size() == log.customers.size());

    Replay replay(log);

    // the unmodified replay must retrace the engine's service starts
    auto base = replay.starts(SIZE_MAX);
    int retraced = 0;
    for (std::size_t k = 0; k < log.customers.size(); ++k) {
        if (std::isnan(base[k])) continue;
        REQUIRE_FALSE(std::isnan(log.customers[k].service_start));
        CHECK(base[k] == Catch::Approx(log.customers[k].service_start).margin(1e-9));
        ++retraced;
    }
    REQUIRE(retraced > 40);

    int served_checked = 0, abandoned_checked = 0;
    for (std::size_t k = 0; k < log.customers.size(); ++k) {
        const auto& c = log.customers[k];
        if (std::isnan(vw[k].wait)) continue;
        if (!std::isnan(c.service_start)) {
            // a served customer's offered wait is the wait it actually saw
            CHECK(vw[k].wait == Catch::Approx(c.service_start - c.arrival).margin(1e-9));
            ++served_checked;
        } else if (c.outcome == Outcome::abandoned) {
            auto cf = replay.starts(k);
            if (std::isnan(cf[k])) continue;
            CHECK(vw[k].wait == Catch::Approx(cf[k] - c.arrival).margin(1e-9));
            ++abandoned_checked;
        }
    }
    REQUIRE(served_checked > 30);
    REQUIRE(abandoned_checked > 5);
}

TEST_CASE("tail estimation over explicit samples", "[simulate]") {
    std::vector<double> samples = {0.1, 0.2, 0.3, 0.4, 0.5};
    TailScaling sc{0.25, 0.1};
    auto pts = estimate_tails(samples, sc, {-std::numeric_limits<double>::infinity(), 0.0, 1.0});
    CHECK(pts[0].prob == 1.0);
    CHECK(pts[1].prob == Catch::Approx(0.6));   // > 0.25
    CHECK(pts[2].prob == Catch::Approx(0.4));   // > 0.35
    CHECK(pts[1].half_width > 0.0);
}

TEST_CASE("event log export shape", "[simulate]") {
    SimConfig cfg;
    cfg.spec.arrival_rate = 2.4;
    cfg.spec.n = 2;
    cfg.spec.service = Exponential{1.0};
    cfg.spec.patience = Exponential{2.0};
    cfg.warmup = 1.0;
    cfg.horizon = 21.0;
    cfg.batches = 10;
    cfg.seed = 13;
    cfg.keep_log = true;

    auto run = simulate(cfg);
    std::ostringstream os;
    write_event_log(run.log, os);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line ==
          "customer_id,arrival,patience,outcome,service_start,service_end,abandon_time\r");
    std::size_t rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == run.log.customers.size());
}

TEST_CASE("erlang-a coverage across seeds", "[simulate]") {
    auto exact = edq::testing::erlang_a(24.0, 20, 1.0, 1.0, 200);
    REQUIRE(exact.tail_mass < 1e-12);

    int covered = 0;
    const int runs = 20;
    for (int s = 0; s < runs; ++s) {
        SimConfig cfg;
        cfg.spec.arrival_rate = 24.0;
        cfg.spec.n = 20;
        cfg.spec.service = Exponential{1.0};
        cfg.spec.patience = Exponential{1.0};
        cfg.warmup = 100.0;
        cfg.horizon = 1600.0;
        cfg.batches = 15;
        cfg.seed = 1000 + std::uint64_t(s);
        auto res = simulate(cfg).result;
        if (std::abs(res.abandonment.estimate - exact.abandonment) <=
            res.abandonment.half_width)
            ++covered;
    }
    INFO("covered " << covered << "/" << runs);
    CHECK(covered >= 18);
}
