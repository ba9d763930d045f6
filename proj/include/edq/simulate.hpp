#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <thread>
#include <utility>
#include <vector>

#include "edq/csv.hpp"
#include "edq/diffusion.hpp"
#include "edq/distribution.hpp"
#include "edq/errors.hpp"
#include "edq/math.hpp"
#include "edq/random.hpp"

namespace edq {

// canonical renewal law for a given (rate, scv): exponential at scv 1,
// Erlang for 1/scv integer, balanced-means two-branch hyperexponential above 1
inline Distribution interarrival_law(double rate, double scv) {
    if (!(rate > 0.0)) throw InvalidConfig("interarrival_law: rate must be positive");
    if (std::abs(scv - 1.0) < 1e-12) return Exponential{rate};
    if (scv < 1.0) {
        if (!(scv > 0.0)) throw InvalidConfig("interarrival_law: scv must be positive");
        double k_real = 1.0 / scv;
        int k = int(std::lround(k_real));
        if (std::abs(k_real - k) > 1e-9)
            throw InvalidConfig("interarrival_law: scv below 1 must equal 1/k for integer k");
        return Erlang{k, k * rate};
    }
    double p = 0.5 * (1.0 + std::sqrt((scv - 1.0) / (scv + 1.0)));
    return Hyperexponential{{{p, 2.0 * p * rate}, {1.0 - p, 2.0 * (1.0 - p) * rate}}};
}

struct SimConfig {
    QueueSpec spec;
    double warmup = 0.0;
    double horizon = 0.0;  // absolute end time; statistics cover (warmup, horizon]
    int batches = 32;
    std::uint64_t seed = 1;
    int replications = 1;
    std::vector<double> tail_thresholds_w;  // scaled deviations a
    std::vector<double> tail_thresholds_x;
    std::vector<double> service_level_delays;
    std::vector<double> effective_abd_delays;
    bool per_customer_service = false;  // draw service at arrival instead of per server slot
    bool keep_log = false;              // retain the event log (single replication only)
    int threads = 1;
};

struct SimMeasure {
    double estimate = 0.0;
    double half_width = 0.0;  // 95% over pooled batch means
};

struct TailEstimate {
    double a = 0.0;
    double threshold = 0.0;
    SimMeasure prob;
};

struct DelayEstimate {
    double d = 0.0;
    SimMeasure value;
};

struct SimResult {
    SimMeasure abandonment;
    SimMeasure wait_mean;  // offered wait of every customer, abandoning or not
    SimMeasure wait_variance;
    SimMeasure queue_mean;  // waiting-buffer head count, time weighted
    SimMeasure queue_variance;
    SimMeasure system_mean;  // in service + waiting, time weighted
    SimMeasure system_variance;
    std::vector<TailEstimate> wait_tails;
    std::vector<TailEstimate> system_tails;
    std::vector<DelayEstimate> service_levels;
    std::vector<DelayEstimate> effective_abandonment;

    long long served = 0;  // whole run, warmup included
    long long abandoned = 0;
    long long arrivals = 0;
    double idle_fraction = 0.0;           // fraction of measured time with any idle server
    long long inexact_virtual_waits = 0;  // offered waits resolved only at an idle onset
    long long unresolved_virtual_waits = 0;
    double batch_lag1 = 0.0;    // lag-1 autocorrelation of queue-mean batch series
    double mean_sojourn = 0.0;  // measured window; abandoning customers contribute their wait
};

enum class Outcome : std::uint8_t { served, abandoned };

struct CustomerRecord {
    double arrival = 0.0;
    double patience = 0.0;
    Outcome outcome = Outcome::served;
    double service_start = std::numeric_limits<double>::quiet_NaN();
    double service_end = std::numeric_limits<double>::quiet_NaN();
    double abandon_time = std::numeric_limits<double>::quiet_NaN();
    int server = -1;
};

struct EventLog {
    int n = 0;
    std::vector<CustomerRecord> customers;         // arrival order
    std::vector<std::vector<double>> completions;  // per server, ascending
    std::vector<std::vector<std::pair<double, double>>> idle_intervals;  // per server
};

namespace detail {

struct Ev {
    double t;
    std::uint8_t kind;  // 0 completion, 1 abandonment, 2 arrival
    std::uint64_t seq;
    std::uint64_t a;  // server for completions, customer id otherwise
    std::uint64_t b;  // customer id for completions
};

struct EvAfter {
    bool operator()(const Ev& x, const Ev& y) const {
        if (x.t != y.t) return x.t > y.t;
        if (x.kind != y.kind) return x.kind > y.kind;
        return x.seq > y.seq;
    }
};

constexpr std::uint64_t kInitialOccupant = ~std::uint64_t(0);

struct BatchAccum {
    double t_len = 0.0;
    double t_buf = 0.0, t_buf2 = 0.0;
    double t_sys = 0.0, t_sys2 = 0.0;
    double t_idle = 0.0;
    long long served = 0, abandoned = 0, arrivals = 0, starts = 0;
    long long offered = 0;  // resolved offered-wait samples
    double offered_sum = 0.0, offered_sq = 0.0;
    double sojourn_sum = 0.0;
    std::vector<long long> wtail, xtail, sl_hit, ea_num, ea_den;

    void reset() {
        t_len = t_buf = t_buf2 = t_sys = t_sys2 = t_idle = 0.0;
        served = abandoned = arrivals = starts = offered = 0;
        offered_sum = offered_sq = sojourn_sum = 0.0;
        for (auto v : {&wtail, &xtail, &sl_hit, &ea_num, &ea_den})
            std::fill(v->begin(), v->end(), 0LL);
    }
};

struct BatchSeries {
    std::vector<double> abd, wait_mean, wait_var, queue_mean, queue_var, sys_mean, sys_var;
    std::vector<std::vector<double>> wtail, xtail, sl, ea;
};

struct RepTotals {
    long long served = 0, abandoned = 0, arrivals = 0;
    double idle_time = 0.0, measured_time = 0.0;
    long long inexact = 0, unresolved = 0;
    double sojourn_sum = 0.0;  // measured window
    long long outcomes = 0;    // measured window
};

struct RepOutput {
    BatchSeries series;
    RepTotals totals;
    EventLog log;
};

class Replication {
public:
    Replication(const SimConfig& cfg, const std::vector<double>& thr_w,
                const std::vector<double>& thr_x, int rep_index, bool keep_log)
        : cfg_(cfg),
          thr_w_(thr_w),
          thr_x_(thr_x),
          keep_log_(keep_log),
          arrival_stream_(cfg.seed, 0, std::uint64_t(rep_index)),
          patience_stream_(cfg.seed, 1, std::uint64_t(rep_index)),
          init_stream_(cfg.seed, 2, std::uint64_t(rep_index)),
          customer_service_stream_(cfg.seed, 3, std::uint64_t(rep_index)) {
        n_ = cfg.spec.n;
        server_streams_.reserve(std::size_t(n_));
        for (int j = 0; j < n_; ++j)
            server_streams_.emplace_back(cfg.seed, 4 + std::uint64_t(j), std::uint64_t(rep_index));
        interarrival_ = interarrival_law(cfg.spec.arrival_rate, cfg.spec.interarrival_scv);
        first_interarrival_ = equilibrium(interarrival_);
        initial_service_ = equilibrium(cfg.spec.service);
        batch_len_ = (cfg.horizon - cfg.warmup) / cfg.batches;
        next_boundary_ = boundary_at(1);
        svc_info_.assign(std::size_t(n_), {0.0, 0.0});
        idle_since_.assign(std::size_t(n_), -1.0);
        acc_.wtail.assign(thr_w_.size(), 0);
        acc_.xtail.assign(thr_x_.size(), 0);
        acc_.sl_hit.assign(cfg.service_level_delays.size(), 0);
        acc_.ea_num.assign(cfg.effective_abd_delays.size(), 0);
        acc_.ea_den.assign(cfg.effective_abd_delays.size(), 0);
        series_.wtail.resize(thr_w_.size());
        series_.xtail.resize(thr_x_.size());
        series_.sl.resize(cfg.service_level_delays.size());
        series_.ea.resize(cfg.effective_abd_delays.size());
        if (keep_log_) {
            log_.n = n_;
            log_.completions.assign(std::size_t(n_), {});
            log_.idle_intervals.assign(std::size_t(n_), {});
        }
    }

    RepOutput run() {
        start_initial_state();
        while (!heap_.empty()) {
            Ev ev = heap_.top();
            if (ev.t > cfg_.horizon) break;
            heap_.pop();
            advance_time(ev.t);
            switch (ev.kind) {
                case 0: on_completion(ev); break;
                case 1: on_deadline(ev); break;
                default: on_arrival(ev); break;
            }
            if (busy_ < n_ && alive_ > 0)
                throw Error("simulate: work-conservation violation");
        }
        advance_time(cfg_.horizon);
        close_batch(true);

        long long present = alive_ + in_service_customers_;
        if (total_arrivals_ != total_served_ + total_abandoned_ + present)
            throw Error("simulate: flow-conservation violation");

        RepOutput out;
        out.series = std::move(series_);
        out.totals.served = total_served_;
        out.totals.abandoned = total_abandoned_;
        out.totals.arrivals = total_arrivals_;
        out.totals.idle_time = total_idle_;
        out.totals.measured_time = measured_;
        out.totals.inexact = inexact_;
        out.totals.unresolved = (long long)pending_.size();
        out.totals.sojourn_sum = measured_sojourn_;
        out.totals.outcomes = measured_outcomes_;
        if (keep_log_) out.log = std::move(log_);
        return out;
    }

private:
    struct QEntry {
        double arrival;
        double deadline;
        std::uint64_t id;
        double service;  // used only in per-customer mode
        bool dead;
    };

    double boundary_at(int i) const {
        return i >= cfg_.batches ? cfg_.horizon : cfg_.warmup + i * batch_len_;
    }

    void push_event(double t, std::uint8_t kind, std::uint64_t a, std::uint64_t b) {
        heap_.push(Ev{t, kind, seq_++, a, b});
    }

    void start_initial_state() {
        for (int j = 0; j < n_; ++j) {
            double rem = sample(initial_service_, init_stream_);
            push_event(rem, 0, std::uint64_t(j), kInitialOccupant);
        }
        busy_ = n_;
        double first = sample(first_interarrival_, arrival_stream_);
        push_event(first, 2, next_id_, 0);
    }

    void advance_time(double t) {
        while (true) {
            double cut = std::min(t, next_boundary_);
            if (cut > clock_) {
                double lo = std::max(clock_, cfg_.warmup);
                if (cut > lo) {
                    double dt = cut - lo;
                    acc_.t_len += dt;
                    acc_.t_buf += dt * double(alive_);
                    acc_.t_buf2 += dt * double(alive_) * double(alive_);
                    double sys = double(alive_ + busy_);
                    acc_.t_sys += dt * sys;
                    acc_.t_sys2 += dt * sys * sys;
                    if (busy_ < n_) acc_.t_idle += dt;
                }
                clock_ = cut;
            }
            if (t < next_boundary_ || next_boundary_ >= cfg_.horizon) break;
            close_batch(false);
        }
        clock_ = t;
    }

    void close_batch(bool final_flush) {
        if (acc_.t_len > 0.0) {
            auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
            auto& s = series_;
            double qm = acc_.t_buf / acc_.t_len;
            double sm = acc_.t_sys / acc_.t_len;
            s.queue_mean.push_back(qm);
            s.queue_var.push_back(std::max(0.0, acc_.t_buf2 / acc_.t_len - qm * qm));
            s.sys_mean.push_back(sm);
            s.sys_var.push_back(std::max(0.0, acc_.t_sys2 / acc_.t_len - sm * sm));
            long long outcomes = acc_.served + acc_.abandoned;
            s.abd.push_back(ratio(double(acc_.abandoned), double(outcomes)));
            double wm = ratio(acc_.offered_sum, double(acc_.offered));
            s.wait_mean.push_back(wm);
            s.wait_var.push_back(
                std::max(0.0, ratio(acc_.offered_sq, double(acc_.offered)) - wm * wm));
            for (std::size_t i = 0; i < thr_w_.size(); ++i)
                s.wtail[i].push_back(ratio(double(acc_.wtail[i]), double(acc_.offered)));
            for (std::size_t i = 0; i < thr_x_.size(); ++i)
                s.xtail[i].push_back(ratio(double(acc_.xtail[i]), double(acc_.arrivals)));
            for (std::size_t i = 0; i < acc_.sl_hit.size(); ++i)
                s.sl[i].push_back(
                    ratio(double(acc_.sl_hit[i]), double(acc_.starts + acc_.abandoned)));
            for (std::size_t i = 0; i < acc_.ea_num.size(); ++i)
                s.ea[i].push_back(acc_.ea_den[i] > 0
                                      ? double(acc_.ea_num[i]) / double(acc_.ea_den[i])
                                      : std::numeric_limits<double>::quiet_NaN());
            measured_sojourn_ += acc_.sojourn_sum;
            measured_outcomes_ += outcomes;
            total_idle_ += acc_.t_idle;
            measured_ += acc_.t_len;
            acc_.reset();
        }
        if (!final_flush) {
            ++boundary_idx_;
            next_boundary_ = boundary_at(boundary_idx_);
        }
    }

    bool measuring() const { return clock_ > cfg_.warmup; }

    // every customer's offered wait lands here once its value is known
    void tally_offered(double v) {
        if (!measuring()) return;
        ++acc_.offered;
        acc_.offered_sum += v;
        acc_.offered_sq += v * v;
        for (std::size_t i = 0; i < thr_w_.size(); ++i)
            if (v > thr_w_[i]) ++acc_.wtail[i];
    }

    void tally_start(std::uint64_t id, double wait, int server) {
        if ((std::int64_t)id <= last_started_id_) throw Error("simulate: FCFS violation");
        last_started_id_ = (std::int64_t)id;
        tally_offered(wait);  // a customer entering service saw its own offered wait
        if (measuring()) {
            ++acc_.starts;
            for (std::size_t i = 0; i < cfg_.service_level_delays.size(); ++i)
                if (wait <= cfg_.service_level_delays[i]) ++acc_.sl_hit[i];
            for (std::size_t i = 0; i < cfg_.effective_abd_delays.size(); ++i)
                if (wait > cfg_.effective_abd_delays[i]) ++acc_.ea_den[i];
        }
        // offered waits of earlier abandoned customers resolve exactly here
        for (auto it = pending_.begin(); it != pending_.end() && it->first < id;) {
            tally_offered(clock_ - it->second);
            it = pending_.erase(it);
        }
        if (keep_log_) {
            auto& c = log_.customers[std::size_t(id)];
            c.service_start = clock_;
            c.server = server;
        }
    }

    void start_service(int server, std::uint64_t id, double arrival, double service_time) {
        double dur = cfg_.per_customer_service
                         ? service_time
                         : sample(cfg_.spec.service, server_streams_[std::size_t(server)]);
        tally_start(id, clock_ - arrival, server);
        push_event(clock_ + dur, 0, std::uint64_t(server), id);
        if (keep_log_ && idle_since_[std::size_t(server)] >= 0.0) {
            log_.idle_intervals[std::size_t(server)].push_back(
                {idle_since_[std::size_t(server)], clock_});
            idle_since_[std::size_t(server)] = -1.0;
        }
        svc_info_[std::size_t(server)] = {arrival, clock_ - arrival};
    }

    void on_arrival(Ev ev) {
        std::uint64_t id = ev.a;
        double t = clock_;
        if (measuring()) {
            ++acc_.arrivals;
            double x_before = double(busy_ + alive_);
            for (std::size_t i = 0; i < thr_x_.size(); ++i)
                if (x_before > thr_x_[i]) ++acc_.xtail[i];
        }
        ++total_arrivals_;
        double zeta = sample(cfg_.spec.patience, patience_stream_);
        double svc = cfg_.per_customer_service
                         ? sample(cfg_.spec.service, customer_service_stream_)
                         : 0.0;
        if (keep_log_) {
            CustomerRecord rec;
            rec.arrival = t;
            rec.patience = zeta;
            log_.customers.push_back(rec);
        }
        if (busy_ < n_) {
            int server = idle_.top();
            idle_.pop();
            ++busy_;
            ++in_service_customers_;
            start_service(server, id, t, svc);
        } else {
            queue_.push_back(QEntry{t, t + zeta, id, svc, false});
            ++alive_;
            push_event(t + zeta, 1, id, 0);
        }
        ++next_id_;
        double gap = sample(interarrival_, arrival_stream_);
        push_event(t + gap, 2, next_id_, 0);
    }

    void on_completion(Ev ev) {
        int server = int(ev.a);
        std::uint64_t id = ev.b;
        double t = clock_;
        if (keep_log_) log_.completions[std::size_t(server)].push_back(t);
        if (id != kInitialOccupant) {
            double arrival = svc_info_[std::size_t(server)].first;
            --in_service_customers_;
            ++total_served_;
            if (measuring()) {
                ++acc_.served;
                acc_.sojourn_sum += t - arrival;
            }
            if (keep_log_) {
                auto& c = log_.customers[std::size_t(id)];
                c.outcome = Outcome::served;
                c.service_end = t;
            }
        }
        // hand the server to the oldest live waiter, else let it idle
        while (!queue_.empty() && queue_.front().dead) queue_.pop_front();
        if (!queue_.empty()) {
            QEntry e = queue_.front();
            queue_.pop_front();
            --alive_;
            ++in_service_customers_;
            start_service(server, e.id, e.arrival, e.service);
        } else {
            --busy_;
            idle_.push(server);
            if (keep_log_) idle_since_[std::size_t(server)] = t;
            // idle onset: the freed slot would have gone to any pending abandoner, so
            // their offered waits resolve here too, flagged inexact
            inexact_ += (long long)pending_.size();
            for (auto& [pid, arr] : pending_) tally_offered(t - arr);
            pending_.clear();
        }
    }

    void on_deadline(Ev ev) {
        std::uint64_t id = ev.a;
        std::size_t idx = find_queue_index(id);
        if (idx == queue_.size() || queue_[idx].id != id || queue_[idx].dead) return;
        QEntry& e = queue_[idx];
        e.dead = true;
        --alive_;
        ++total_abandoned_;
        double zeta = clock_ - e.arrival;
        if (measuring()) {
            ++acc_.abandoned;
            acc_.sojourn_sum += zeta;
            for (std::size_t i = 0; i < cfg_.effective_abd_delays.size(); ++i)
                if (zeta > cfg_.effective_abd_delays[i]) {
                    ++acc_.ea_num[i];
                    ++acc_.ea_den[i];
                }
        }
        pending_.emplace(id, e.arrival);
        if (keep_log_) {
            auto& c = log_.customers[std::size_t(id)];
            c.outcome = Outcome::abandoned;
            c.abandon_time = clock_;
        }
    }

    std::size_t find_queue_index(std::uint64_t id) const {
        std::size_t lo = 0, hi = queue_.size();
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (queue_[mid].id < id)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    }

    const SimConfig& cfg_;
    std::vector<double> thr_w_, thr_x_;
    bool keep_log_;
    RandomStream arrival_stream_, patience_stream_, init_stream_, customer_service_stream_;
    std::vector<RandomStream> server_streams_;
    Distribution interarrival_{Exponential{1.0}}, first_interarrival_{Exponential{1.0}},
        initial_service_{Exponential{1.0}};

    int n_ = 0;
    double clock_ = 0.0;
    double batch_len_ = 0.0;
    double next_boundary_ = 0.0;
    int boundary_idx_ = 1;
    std::uint64_t seq_ = 0;
    std::uint64_t next_id_ = 0;
    std::int64_t last_started_id_ = -1;
    int busy_ = 0;
    long long alive_ = 0;
    long long in_service_customers_ = 0;

    std::priority_queue<Ev, std::vector<Ev>, EvAfter> heap_;
    std::deque<QEntry> queue_;
    std::priority_queue<int, std::vector<int>, std::greater<>> idle_;
    std::vector<std::pair<double, double>> svc_info_;  // per server: (arrival, wait)
    std::vector<double> idle_since_;
    std::map<std::uint64_t, double> pending_;  // abandoned ids awaiting offered-wait resolution

    BatchAccum acc_;
    BatchSeries series_;
    EventLog log_;

    long long total_served_ = 0, total_abandoned_ = 0, total_arrivals_ = 0;
    long long measured_outcomes_ = 0;
    double total_idle_ = 0.0, measured_ = 0.0, measured_sojourn_ = 0.0;
    long long inexact_ = 0;
};

}  // namespace detail

struct SimRun {
    SimResult result;
    EventLog log;  // populated when keep_log was set
};

inline void validate(const SimConfig& cfg) {
    if (!(cfg.warmup > 0.0)) throw InvalidConfig("simulate: warmup must be positive");
    if (!(cfg.horizon > cfg.warmup)) throw InvalidConfig("simulate: horizon must exceed warmup");
    if (cfg.batches < 10) throw InvalidConfig("simulate: need at least 10 batches");
    if (cfg.replications < 1) throw InvalidConfig("simulate: need at least one replication");
    if (cfg.keep_log && cfg.replications != 1)
        throw InvalidConfig("simulate: event log capture requires a single replication");
    if (cfg.spec.n < 1) throw InvalidConfig("simulate: need at least one server");
    validate(cfg.spec.service);
    validate(cfg.spec.patience);
    (void)interarrival_law(cfg.spec.arrival_rate, cfg.spec.interarrival_scv);
    if (!cfg.tail_thresholds_w.empty() || !cfg.tail_thresholds_x.empty()) {
        double mu = 1.0 / mean(cfg.spec.service);
        if (!(cfg.spec.arrival_rate / (cfg.spec.n * mu) > 1.0))
            throw InvalidConfig("simulate: scaled tail thresholds need an overloaded instance");
    }
}

inline SimRun simulate(const SimConfig& cfg) {
    validate(cfg);

    // absolute thresholds from the limiting quantities
    std::vector<double> thr_w, thr_x;
    if (!cfg.tail_thresholds_w.empty() || !cfg.tail_thresholds_x.empty()) {
        DiffusionSummary s = summarize(cfg.spec);
        double n = cfg.spec.n;
        for (double a : cfg.tail_thresholds_w) thr_w.push_back(s.w + a * std::sqrt(s.gamma / n));
        for (double a : cfg.tail_thresholds_x)
            thr_x.push_back(n + s.q + a * std::sqrt(n * s.gamma));
    }

    std::vector<detail::RepOutput> outs(std::size_t(cfg.replications));
    int threads = std::max(1, std::min(cfg.threads, cfg.replications));
    if (threads == 1) {
        for (int r = 0; r < cfg.replications; ++r) {
            detail::Replication rep(cfg, thr_w, thr_x, r, cfg.keep_log);
            outs[std::size_t(r)] = rep.run();
        }
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (int r; (r = next.fetch_add(1)) < cfg.replications;) {
                    detail::Replication rep(cfg, thr_w, thr_x, r, cfg.keep_log);
                    outs[std::size_t(r)] = rep.run();
                }
            });
        for (auto& th : pool) th.join();
    }

    // deterministic pooled assembly in replication order
    SimRun run;
    SimResult& res = run.result;
    auto pool_measure = [&](auto pick) {
        std::vector<double> all;
        for (auto& o : outs) {
            const std::vector<double>& v = pick(o.series);
            for (double x : v)
                if (!std::isnan(x)) all.push_back(x);
        }
        if (all.size() < 2) {
            double est = all.empty() ? std::numeric_limits<double>::quiet_NaN() : all[0];
            return SimMeasure{est, std::numeric_limits<double>::infinity()};
        }
        auto ci = t_interval(all);
        return SimMeasure{ci.mean, ci.half_width};
    };
    using BS = detail::BatchSeries;
    res.abandonment = pool_measure([](const BS& s) -> const std::vector<double>& { return s.abd; });
    res.wait_mean =
        pool_measure([](const BS& s) -> const std::vector<double>& { return s.wait_mean; });
    res.wait_variance =
        pool_measure([](const BS& s) -> const std::vector<double>& { return s.wait_var; });
    res.queue_mean =
        pool_measure([](const BS& s) -> const std::vector<double>& { return s.queue_mean; });
    res.queue_variance =
        pool_measure([](const BS& s) -> const std::vector<double>& { return s.queue_var; });
    res.system_mean =
        pool_measure([](const BS& s) -> const std::vector<double>& { return s.sys_mean; });
    res.system_variance =
        pool_measure([](const BS& s) -> const std::vector<double>& { return s.sys_var; });
    for (std::size_t i = 0; i < cfg.tail_thresholds_w.size(); ++i) {
        auto m =
            pool_measure([i](const BS& s) -> const std::vector<double>& { return s.wtail[i]; });
        res.wait_tails.push_back({cfg.tail_thresholds_w[i], thr_w[i], m});
    }
    for (std::size_t i = 0; i < cfg.tail_thresholds_x.size(); ++i) {
        auto m =
            pool_measure([i](const BS& s) -> const std::vector<double>& { return s.xtail[i]; });
        res.system_tails.push_back({cfg.tail_thresholds_x[i], thr_x[i], m});
    }
    for (std::size_t i = 0; i < cfg.service_level_delays.size(); ++i) {
        auto m = pool_measure([i](const BS& s) -> const std::vector<double>& { return s.sl[i]; });
        res.service_levels.push_back({cfg.service_level_delays[i], m});
    }
    for (std::size_t i = 0; i < cfg.effective_abd_delays.size(); ++i) {
        auto m = pool_measure([i](const BS& s) -> const std::vector<double>& { return s.ea[i]; });
        res.effective_abandonment.push_back({cfg.effective_abd_delays[i], m});
    }

    double idle_time = 0.0, measured = 0.0, sojourn = 0.0;
    long long outcomes = 0;
    for (auto& o : outs) {
        res.served += o.totals.served;
        res.abandoned += o.totals.abandoned;
        res.arrivals += o.totals.arrivals;
        res.inexact_virtual_waits += o.totals.inexact;
        res.unresolved_virtual_waits += o.totals.unresolved;
        idle_time += o.totals.idle_time;
        measured += o.totals.measured_time;
        sojourn += o.totals.sojourn_sum;
        outcomes += o.totals.outcomes;
    }
    res.idle_fraction = measured > 0.0 ? idle_time / measured : 0.0;
    res.mean_sojourn = outcomes > 0 ? sojourn / double(outcomes) : 0.0;

    // lag-1 autocorrelation of the queue-mean batch series, averaged over replications
    double lag_sum = 0.0;
    int lag_count = 0;
    for (auto& o : outs) {
        const auto& v = o.series.queue_mean;
        if (v.size() < 3) continue;
        double m = 0.0;
        for (double x : v) m += x;
        m /= double(v.size());
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            den += (v[i] - m) * (v[i] - m);
            if (i + 1 < v.size()) num += (v[i] - m) * (v[i + 1] - m);
        }
        if (den > 0.0) {
            lag_sum += num / den;
            ++lag_count;
        }
    }
    res.batch_lag1 = lag_count > 0 ? lag_sum / lag_count : 0.0;

    if (cfg.keep_log) run.log = std::move(outs[0].log);
    return run;
}

struct OfferedWait {
    double epoch = 0.0;  // arrival instant
    double wait = 0.0;
    bool exact = true;
};

// offered waits reconstructed from a retained log: the wait each customer would
// have faced if infinitely patient, counting realized service completions
inline std::vector<OfferedWait> virtual_waits(const EventLog& log, int n) {
    std::vector<double> all_completions;
    for (auto& v : log.completions)
        for (double t : v) all_completions.push_back(t);
    std::sort(all_completions.begin(), all_completions.end());

    std::vector<OfferedWait> out;
    out.reserve(log.customers.size());
    for (std::size_t k = 0; k < log.customers.size(); ++k) {
        const auto& c = log.customers[k];
        double a = c.arrival;
        // servers still on their initial job at a-, plus earlier customers that are
        // present and eventually served; abandoners ahead never hold a server
        long long occupied = 0;
        for (auto& v : log.completions)
            if (v.empty() || v.front() > a) ++occupied;
        for (std::size_t j = 0; j < k; ++j) {
            const auto& o = log.customers[j];
            if (o.outcome == Outcome::served && !(o.service_end <= a)) ++occupied;
        }
        OfferedWait ow;
        ow.epoch = a;
        if (occupied < n) {
            out.push_back(ow);  // wait 0, exact
            continue;
        }
        long long need = occupied - n + 1;
        auto it = std::upper_bound(all_completions.begin(), all_completions.end(), a);
        if (std::distance(it, all_completions.end()) < need) {
            ow.wait = std::numeric_limits<double>::quiet_NaN();  // beyond the logged horizon
            ow.exact = false;
            out.push_back(ow);
            continue;
        }
        double s = *(it + (need - 1));
        ow.wait = s - a;
        ow.exact = true;
        for (int j = 0; j < log.n; ++j)
            for (auto& iv : log.idle_intervals[std::size_t(j)])
                if (iv.first <= s && iv.second > a) ow.exact = false;
        out.push_back(ow);
    }
    return out;
}

inline void write_event_log(const EventLog& log, std::ostream& os) {
    CsvWriter w(os);
    w.row({"customer_id", "arrival", "patience", "outcome", "service_start", "service_end",
           "abandon_time"});
    auto opt = [](double x) { return std::isnan(x) ? std::string() : format_double(x); };
    for (std::size_t id = 0; id < log.customers.size(); ++id) {
        const auto& c = log.customers[id];
        // customers neither finished nor abandoned by the horizon stay pending
        std::string outcome = !std::isnan(c.service_end)    ? "served"
                              : !std::isnan(c.abandon_time) ? "abandoned"
                                                            : "pending";
        w.row({std::to_string(id), format_double(c.arrival), format_double(c.patience), outcome,
               opt(c.service_start), opt(c.service_end), opt(c.abandon_time)});
    }
}

struct TailScaling {
    double center = 0.0;
    double scale = 1.0;  // deviation unit
};

struct TailPoint {
    double a = 0.0;
    double threshold = 0.0;
    double prob = 0.0;
    double half_width = 0.0;  // binomial normal approximation
};

inline std::vector<TailPoint> estimate_tails(const std::vector<double>& samples,
                                             const TailScaling& scaling,
                                             const std::vector<double>& deviations) {
    std::vector<TailPoint> out;
    out.reserve(deviations.size());
    for (double a : deviations) {
        TailPoint p;
        p.a = a;
        p.threshold = scaling.center + a * scaling.scale;
        long long hits = 0;
        for (double s : samples)
            if (s > p.threshold) ++hits;
        double N = double(samples.size());
        p.prob = N > 0 ? double(hits) / N : 0.0;
        p.half_width =
            N > 0 ? normal_quantile(0.975) * std::sqrt(p.prob * (1.0 - p.prob) / N) : 0.0;
        out.push_back(p);
    }
    return out;
}

}  // namespace edq
