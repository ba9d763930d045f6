#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "edq/csv.hpp"
#include "edq/distribution.hpp"
#include "edq/errors.hpp"
#include "edq/math.hpp"
#include "edq/random.hpp"

namespace edq {

struct SuperpositionConfig {
    Distribution interrenewal;  // common law F of every process, mean 1/mu
    int n = 1;                  // processes superposed
    double gamma_n = 1.0;       // time-scale factor
    std::vector<double> grid;   // scaled observation times
    int replications = 1;
    std::uint64_t seed = 1;
};

// matrix of centered, scaled superposition counts: one row per replication,
// one column per grid time
struct ScaledEnsemble {
    SuperpositionConfig config;
    double mu = 0.0;
    double cs2 = 0.0;
    std::vector<std::vector<double>> b_tilde;
};

inline void validate(const SuperpositionConfig& cfg) {
    if (cfg.n < 1) throw InvalidConfig("superposition: need at least one process");
    if (!(cfg.gamma_n > 0.0) || !std::isfinite(cfg.gamma_n))
        throw InvalidConfig("superposition: time-scale factor must be positive");
    if (cfg.replications < 1) throw InvalidConfig("superposition: need at least one replication");
    if (cfg.grid.empty()) throw InvalidConfig("superposition: empty time grid");
    if (cfg.grid.front() < 0.0) throw InvalidConfig("superposition: grid times must be nonnegative");
    for (std::size_t g = 1; g < cfg.grid.size(); ++g)
        if (!(cfg.grid[g] > cfg.grid[g - 1]))
            throw InvalidConfig("superposition: grid must be strictly increasing");
    if (std::holds_alternative<EquilibriumOf>(cfg.interrenewal.v()))
        throw InvalidConfig("superposition: interrenewal law must be a plain distribution");
    auto mom = moments(cfg.interrenewal);
    if (!(mom.mean > 0.0) || !std::isfinite(mom.mean))
        throw InvalidConfig("superposition: interrenewal mean must be positive and finite");
    if (!mom.third_moment || !std::isfinite(*mom.third_moment))
        throw InfiniteThirdMoment("superposition: interrenewal third moment must be finite");
}

inline ScaledEnsemble generate(const SuperpositionConfig& cfg, int threads = 1) {
    validate(cfg);
    ScaledEnsemble ens;
    ens.config = cfg;
    auto mom = moments(cfg.interrenewal);
    ens.mu = 1.0 / mom.mean;
    ens.cs2 = mom.scv;
    const std::size_t reps(cfg.replications);
    const std::size_t G = cfg.grid.size();
    ens.b_tilde.assign(reps, std::vector<double>(G, 0.0));

    const Distribution first = equilibrium(cfg.interrenewal);
    const double scale = std::sqrt(double(cfg.n) * cfg.gamma_n);
    const double rate = double(cfg.n) * ens.mu * cfg.gamma_n;

    auto run_rep = [&](std::size_t r) {
        std::vector<double> counts(G, 0.0);
        for (int j = 0; j < cfg.n; ++j) {
            // one stream per (replication, process): reproducible under any
            // thread schedule
            RandomStream rng(cfg.seed, r + 1, std::uint64_t(j));
            double epoch = sample(first, rng);
            double seen = 0.0;
            std::size_t gi = 0;
            while (gi < G) {
                if (epoch <= cfg.gamma_n * cfg.grid[gi]) {
                    seen += 1.0;
                    epoch += sample(cfg.interrenewal, rng);
                } else {
                    counts[gi] += seen;
                    ++gi;
                }
            }
        }
        auto& row = ens.b_tilde[r];
        for (std::size_t g = 0; g < G; ++g) row[g] = (counts[g] - rate * cfg.grid[g]) / scale;
    };

    int workers = std::max(1, std::min<int>(threads, int(std::thread::hardware_concurrency())));
    workers = std::min<int>(workers, int(reps));
    if (workers <= 1) {
        for (std::size_t r = 0; r < reps; ++r) run_rep(r);
    } else {
        std::atomic<std::size_t> next{0};
        auto drain = [&] {
            for (std::size_t r; (r = next.fetch_add(1)) < reps;) run_rep(r);
        };
        std::vector<std::thread> pool;
        for (int w = 1; w < workers; ++w) pool.emplace_back(drain);
        drain();
        for (auto& th : pool) th.join();
    }
    return ens;
}

struct ProfilePoint {
    double t = 0.0;
    double variance = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

struct VarianceProfile {
    std::vector<ProfilePoint> points;
    double slope = 0.0;      // fitted against t, intercept absorbs transients
    double intercept = 0.0;
};

inline VarianceProfile variance_profile(const ScaledEnsemble& ens) {
    const std::size_t reps = ens.b_tilde.size();
    if (reps < 100) throw InvalidConfig("variance_profile: at least 100 replications required");
    VarianceProfile out;
    const auto& grid = ens.config.grid;
    std::vector<double> ts, vars;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double m = 0.0;
        for (const auto& row : ens.b_tilde) m += row[g];
        m /= double(reps);
        double v = 0.0;
        for (const auto& row : ens.b_tilde) v += (row[g] - m) * (row[g] - m);
        v /= double(reps - 1);
        auto [lo, hi] = variance_ci(v, reps, 0.95);
        out.points.push_back({grid[g], v, lo, hi});
        ts.push_back(grid[g]);
        vars.push_back(v);
    }
    if (ts.size() >= 2) {
        auto fit = fit_line(ts, vars);
        out.slope = fit.slope;
        out.intercept = fit.intercept;
    } else {
        out.slope = out.intercept = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

struct IncrementCorrelation {
    std::size_t left = 0;   // increment indexes into consecutive grid windows
    std::size_t right = 0;
    double t = 0.0;         // start of the right window
    double correlation = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

struct IncrementReport {
    std::vector<IncrementCorrelation> pairs;
    bool any_dependent = false;
    bool degenerate = false;  // too few replications for a correlation interval
};

inline IncrementReport increment_independence(const ScaledEnsemble& ens) {
    const auto& grid = ens.config.grid;
    if (grid.size() < 3)
        throw InvalidConfig("increment_independence: need at least three grid points");
    IncrementReport report;
    const std::size_t reps = ens.b_tilde.size();
    if (reps < 4) {
        report.degenerate = true;
        return report;
    }
    const std::size_t D = grid.size() - 1;
    auto inc = std::vector<std::vector<double>>(D, std::vector<double>(reps, 0.0));
    for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t d = 0; d < D; ++d)
            inc[d][r] = ens.b_tilde[r][d + 1] - ens.b_tilde[r][d];
    std::vector<double> mean(D, 0.0);
    for (std::size_t d = 0; d < D; ++d) {
        for (double v : inc[d]) mean[d] += v;
        mean[d] /= double(reps);
    }
    for (std::size_t i = 0; i < D; ++i) {
        for (std::size_t j = i + 1; j < D; ++j) {
            double sxy = 0.0, sxx = 0.0, syy = 0.0;
            for (std::size_t r = 0; r < reps; ++r) {
                const double a = inc[i][r] - mean[i];
                const double b = inc[j][r] - mean[j];
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
            const double denom = std::sqrt(sxx * syy);
            const double corr = denom > 0.0 ? sxy / denom : 0.0;
            auto [lo, hi] = correlation_ci(corr, reps, 0.99);
            report.pairs.push_back({i, j, grid[j], corr, lo, hi});
            if (lo > 0.0 || hi < 0.0) report.any_dependent = true;
        }
    }
    return report;
}

struct GaussianityReport {
    double t = 0.0;
    double ks_statistic = 0.0;
    double p_value = 1.0;
    bool skipped = false;  // t = 0 or zero limiting variance
};

inline GaussianityReport gaussianity(const ScaledEnsemble& ens, double t) {
    const std::size_t reps = ens.b_tilde.size();
    if (reps < 500) throw InvalidConfig("gaussianity: at least 500 replications required");
    const auto& grid = ens.config.grid;
    std::size_t g = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(grid[i] - t) <= 1e-12 * std::max(1.0, std::abs(t))) g = i;
    if (g == grid.size()) throw InvalidConfig("gaussianity: t is not a grid point");

    GaussianityReport report;
    report.t = t;
    const double limit_var = ens.mu * ens.cs2 * t;
    if (!(limit_var > 0.0)) {
        report.skipped = true;
        return report;
    }
    std::vector<double> z(reps);
    const double sd = std::sqrt(limit_var);
    for (std::size_t r = 0; r < reps; ++r) z[r] = ens.b_tilde[r][g] / sd;
    std::sort(z.begin(), z.end());
    double d = 0.0;
    for (std::size_t i = 0; i < reps; ++i) {
        const double f = normal_cdf(z[i]);
        d = std::max(d, std::max(f - double(i) / double(reps), double(i + 1) / double(reps) - f));
    }
    report.ks_statistic = d;
    const double root = std::sqrt(double(reps));
    report.p_value = kolmogorov_q((root + 0.12 + 0.11 / root) * d);
    return report;
}

struct FsllnRung {
    int n = 0;
    double gamma_n = 0.0;
    double mean_sup_deviation = 0.0;
};

struct FsllnReport {
    std::vector<FsllnRung> rungs;
    bool decreasing = false;
};

// fluid check: the time-averaged path must flatten onto mu*t as the ladder
// grows the system; rungs reuse the base config's grid and replication count
inline FsllnReport fslln_check(const SuperpositionConfig& cfg,
                               std::vector<std::pair<int, double>> ladder = {}, int threads = 1) {
    if (ladder.empty())
        ladder = {{cfg.n, cfg.gamma_n},
                  {10 * cfg.n, 10.0 * cfg.gamma_n},
                  {100 * cfg.n, 100.0 * cfg.gamma_n}};
    FsllnReport report;
    report.decreasing = true;
    for (const auto& [n, gamma] : ladder) {
        SuperpositionConfig rung_cfg = cfg;
        rung_cfg.n = n;
        rung_cfg.gamma_n = gamma;
        auto ens = generate(rung_cfg, threads);
        const double scale = std::sqrt(double(n) * gamma);
        double acc = 0.0;
        for (const auto& row : ens.b_tilde) {
            double sup = 0.0;
            for (double v : row) sup = std::max(sup, std::abs(v));
            acc += sup / scale;
        }
        FsllnRung rung{n, gamma, acc / double(ens.b_tilde.size())};
        if (!report.rungs.empty() && rung.mean_sup_deviation >= report.rungs.back().mean_sup_deviation)
            report.decreasing = false;
        report.rungs.push_back(rung);
    }
    return report;
}

inline void write_ensemble_csv(const ScaledEnsemble& ens, std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"replication", "t", "b_tilde"});
    for (std::size_t r = 0; r < ens.b_tilde.size(); ++r)
        for (std::size_t g = 0; g < ens.config.grid.size(); ++g)
            csv.row({std::to_string(r), format_double(ens.config.grid[g]),
                     format_double(ens.b_tilde[r][g])});
}

inline void write_variance_csv(const VarianceProfile& profile, std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"t", "variance", "ci_lo", "ci_hi"});
    for (const auto& p : profile.points)
        csv.row({format_double(p.t), format_double(p.variance), format_double(p.ci_lo),
                 format_double(p.ci_hi)});
}

inline void write_increment_csv(const IncrementReport& report, std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"t", "correlation", "ci_lo", "ci_hi"});
    for (const auto& p : report.pairs)
        csv.row({format_double(p.t), format_double(p.correlation), format_double(p.ci_lo),
                 format_double(p.ci_hi)});
}

inline void write_fslln_csv(const FsllnReport& report, std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"n", "gamma_n", "mean_sup_deviation"});
    for (const auto& r : report.rungs)
        csv.row({std::to_string(r.n), format_double(r.gamma_n),
                 format_double(r.mean_sup_deviation)});
}

}  // namespace edq
