#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "edq/csv.hpp"
#include "edq/diffusion.hpp"
#include "edq/errors.hpp"
#include "edq/simulate.hpp"

namespace edq {

struct ServiceLevelObjective {
    double target = 0.0;  // required fraction served within the delay
    double delay = 0.0;
};

struct EffectiveAbandonmentObjective {
    double target = 0.0;  // abandonment among delayed customers must stay below this
    double delay = 0.0;
};

using StaffingObjective = std::variant<ServiceLevelObjective, EffectiveAbandonmentObjective>;

enum class Evaluator { diffusion, zm, simulation };

struct StaffingProblem {
    double arrival_rate = 0.0;
    double interarrival_scv = 1.0;
    Distribution service;
    Distribution patience;
    StaffingObjective objective;
    Evaluator evaluator = Evaluator::diffusion;
    SimConfig sim;  // template for the simulation evaluator; the queue and the
                    // delay list are overwritten per candidate
};

struct CurvePoint {
    int n = 0;
    double value = 0.0;
    double half_width = 0.0;  // zero for the analytic evaluators
};

struct StaffingResult {
    int n_min = 0;
    int n_lo = 0;  // band of counts whose confidence interval straddles the target
    int n_hi = 0;
    bool ambiguous = false;
    std::vector<CurvePoint> curve;
    double rho = 0.0;   // at n_min
    double svpr = 0.0;  // at n_min
    std::vector<std::string> warnings;
};

namespace detail {

struct ObjectiveView {
    double target = 0.0;
    double delay = 0.0;
    bool higher_is_better = true;
};

inline ObjectiveView objective_view(const StaffingObjective& objective) {
    if (const auto* sl = std::get_if<ServiceLevelObjective>(&objective))
        return {sl->target, sl->delay, true};
    const auto& ea = std::get<EffectiveAbandonmentObjective>(objective);
    return {ea.target, ea.delay, false};
}

}  // namespace detail

inline CurvePoint evaluate_at(const StaffingProblem& problem, int n) {
    if (n < 1) throw InvalidConfig("evaluate_at: at least one server required");
    const auto ov = detail::objective_view(problem.objective);
    QueueSpec spec{problem.arrival_rate, problem.interarrival_scv, n, problem.service,
                   problem.patience};
    switch (problem.evaluator) {
        case Evaluator::diffusion:
        case Evaluator::zm: {
            const QueueSpec used = problem.evaluator == Evaluator::zm ? zm_spec(spec) : spec;
            const double v = ov.higher_is_better ? service_level(used, ov.delay)
                                                 : effective_abandonment(used, ov.delay);
            return {n, v, 0.0};
        }
        case Evaluator::simulation: {
            SimConfig cfg = problem.sim;
            cfg.spec = spec;
            cfg.tail_thresholds_w.clear();
            cfg.tail_thresholds_x.clear();
            cfg.service_level_delays.clear();
            cfg.effective_abd_delays.clear();
            if (ov.higher_is_better)
                cfg.service_level_delays = {ov.delay};
            else
                cfg.effective_abd_delays = {ov.delay};
            auto res = simulate(cfg).result;
            const SimMeasure& m = ov.higher_is_better ? res.service_levels.front().value
                                                      : res.effective_abandonment.front().value;
            return {n, m.estimate, m.half_width};
        }
    }
    throw EvaluatorError("evaluate_at: unknown evaluator");
}

inline StaffingResult min_servers(const StaffingProblem& problem, int threads = 1) {
    const auto ov = detail::objective_view(problem.objective);
    if (!(ov.target > 0.0 && ov.target < 1.0))
        throw InvalidConfig("staffing: target must lie strictly inside (0,1)");
    if (!(ov.delay >= 0.0)) throw InvalidConfig("staffing: delay must be nonnegative");
    if (!(problem.arrival_rate > 0.0))
        throw InvalidConfig("staffing: arrival rate must be positive");

    const double offered = problem.arrival_rate * mean(problem.service);
    const int cap = int(std::floor(offered)) - 1;  // last count still overloaded
    if (cap < 1)
        throw InfeasibleWithinEDRegime("staffing: no server count keeps the system overloaded");

    std::map<int, CurvePoint> curve;
    auto eval = [&](int n) -> const CurvePoint& {
        auto it = curve.find(n);
        if (it == curve.end()) {
            try {
                it = curve.emplace(n, evaluate_at(problem, n)).first;
            } catch (const Error& e) {
                throw EvaluatorError("staffing: evaluation failed at n=" + std::to_string(n) +
                                     ": " + e.what());
            }
        }
        return it->second;
    };
    auto definite_meet = [&](const CurvePoint& c) {
        return ov.higher_is_better ? c.value - c.half_width >= ov.target
                                   : c.value + c.half_width < ov.target;
    };
    auto could_meet = [&](const CurvePoint& c) {
        return ov.higher_is_better ? c.value + c.half_width >= ov.target
                                   : c.value - c.half_width < ov.target;
    };

    // start from the fluid sizing and expand the bracket geometrically
    const double implied_abandonment = ov.higher_is_better ? 1.0 - ov.target : ov.target;
    const int n0 = std::clamp(int(std::ceil(offered * (1.0 - implied_abandonment))), 1, cap);

    int lo_fail = 0, hi_meet = 0;
    if (definite_meet(eval(n0))) {
        hi_meet = n0;
        for (int step = 1;; step *= 2) {
            const int n = std::max(1, n0 - step);
            if (!definite_meet(eval(n))) {
                lo_fail = n;
                break;
            }
            hi_meet = n;
            if (n == 1) break;
        }
    } else {
        lo_fail = n0;
        for (int step = 1;; step *= 2) {
            const int n = std::min(cap, n0 + step);
            if (definite_meet(eval(n))) {
                hi_meet = n;
                break;
            }
            lo_fail = n;
            if (n == cap)
                throw InfeasibleWithinEDRegime(
                    "staffing: target not met by any overloaded server count");
        }
    }

    // fill the bracket; candidate evaluations are independent
    std::vector<int> pending;
    for (int n = std::max(1, lo_fail + 1); n < hi_meet; ++n)
        if (!curve.count(n)) pending.push_back(n);
    const int workers =
        std::max(1, std::min<int>({threads, int(pending.size()),
                                   int(std::thread::hardware_concurrency())}));
    if (workers <= 1) {
        for (int n : pending) eval(n);
    } else {
        std::vector<CurvePoint> out(pending.size());
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto drain = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < pending.size();) {
                try {
                    out[i] = evaluate_at(problem, pending[i]);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 1; w < workers; ++w) pool.emplace_back(drain);
        drain();
        for (auto& th : pool) th.join();
        if (failure) {
            try {
                std::rethrow_exception(failure);
            } catch (const Error& e) {
                throw EvaluatorError(std::string("staffing: evaluation failed: ") + e.what());
            }
        }
        for (std::size_t i = 0; i < pending.size(); ++i) curve.emplace(pending[i], out[i]);
    }

    StaffingResult result;

    // the search ordinarily assumes improvement with n; verify it on the
    // scanned window and fall back to the last definite failure as the floor
    int last_fail = 0, first_meet = 0;
    for (const auto& [n, c] : curve) {
        if (!could_meet(c)) last_fail = std::max(last_fail, n);
        if (definite_meet(c) && first_meet == 0) first_meet = n;
    }
    if (first_meet != 0 && last_fail > first_meet)
        result.warnings.push_back(
            "metric is not monotone across the scanned window; the floor is the largest "
            "failing count");

    // when every scanned interval straddles the target the ascent still starts
    // at the bracket floor rather than rescanning from one server
    const int floor_n = std::max(last_fail + 1, lo_fail > 0 ? lo_fail : 1);
    int n_hi = 0;
    for (int n = floor_n;; ++n) {
        if (n > cap)
            throw InfeasibleWithinEDRegime("staffing: target not met by any overloaded server count");
        if (definite_meet(eval(n))) {
            n_hi = n;
            break;
        }
    }
    int n_lo = n_hi;
    for (const auto& [n, c] : curve)
        if (n < n_lo && n > last_fail && could_meet(c)) n_lo = n;

    result.n_min = n_hi;
    result.n_lo = n_lo;
    result.n_hi = n_hi;
    result.ambiguous = n_lo != n_hi;
    result.curve.reserve(curve.size());
    for (const auto& [n, c] : curve) result.curve.push_back(c);

    QueueSpec at_min{problem.arrival_rate, problem.interarrival_scv, n_hi, problem.service,
                     problem.patience};
    auto summary = summarize(problem.evaluator == Evaluator::zm ? zm_spec(at_min) : at_min);
    result.rho = summary.rho;
    result.svpr = summary.svpr;
    for (const auto& w : summary.warnings) result.warnings.push_back(w);
    return result;
}

inline void write_curve_csv(const StaffingResult& result, std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"n", "metric", "ci_lo", "ci_hi"});
    for (const auto& c : result.curve)
        csv.row({std::to_string(c.n), format_double(c.value), format_double(c.value - c.half_width),
                 format_double(c.value + c.half_width)});
}

}  // namespace edq
