#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "edq/csv.hpp"
#include "edq/diffusion.hpp"
#include "edq/errors.hpp"

namespace edq {

struct PhBranch {
    double prob = 0.0;
    double rate = 0.0;
};

// mixture-of-exponentials service law for the exact chain; each customer picks
// one branch on entering service
struct PhService {
    std::vector<PhBranch> branches;

    static PhService exponential(double rate) { return PhService{{PhBranch{1.0, rate}}}; }

    double mean() const {
        double m = 0.0;
        for (const auto& b : branches) m += b.prob / b.rate;
        return m;
    }

    double second_moment() const {
        double m2 = 0.0;
        for (const auto& b : branches) m2 += 2.0 * b.prob / (b.rate * b.rate);
        return m2;
    }

    double scv() const {
        double m = mean();
        return second_moment() / (m * m) - 1.0;
    }

    // long-run fraction of busy servers working a branch-j job
    double busy_fraction(std::size_t j) const {
        return branches[j].prob / branches[j].rate / mean();
    }

    void validate() const {
        if (branches.empty()) throw InvalidConfig("PhService: at least one branch required");
        double total = 0.0;
        for (const auto& b : branches) {
            if (!(b.prob > 0.0)) throw InvalidConfig("PhService: branch probabilities must be positive");
            if (!(b.rate > 0.0) || !std::isfinite(b.rate))
                throw InvalidConfig("PhService: branch rates must be positive and finite");
            total += b.prob;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw InvalidConfig("PhService: branch probabilities must sum to 1");
    }
};

inline Distribution to_distribution(const PhService& ph) {
    if (ph.branches.size() == 1) return Exponential{ph.branches[0].rate};
    Hyperexponential h;
    for (const auto& b : ph.branches) h.branches.push_back({b.prob, b.rate});
    return h;
}

struct CtmcSolution {
    int K = 0;       // highest retained customer count
    int n = 0;
    int phases = 0;
    std::vector<double> pi;        // stationary vector over (count, phase occupancy) states
    double residual = 0.0;         // max |(pi Q)_j| against the unmodified generator
    double tail_mass = 0.0;        // conservative estimate of the mass cut off above K
    std::vector<double> marginal;  // pmf of the total customer count, 0..K

    // diagnostics used by the balance checks: expected busy servers per branch,
    // expected downward transition rate out of each count level
    std::vector<double> busy_by_phase;
    double busy_mean = 0.0;
    std::vector<double> down_flow;
    std::vector<std::vector<double>> phase_mean_by_level;
};

namespace detail {

// states at customer count i are the compositions (k_1,...,k_m) of min(i, n)
// busy servers over the m service branches
struct PhaseSpace {
    int n = 0;
    int m = 0;
    int K = 0;
    std::vector<std::vector<std::vector<int>>> comps;   // indexed by busy count
    std::vector<std::map<std::vector<int>, int>> ranks;
    std::vector<std::size_t> offset;                    // states below each level
    std::size_t total = 0;

    PhaseSpace(int n_, int m_, int K_) : n(n_), m(m_), K(K_) {
        comps.resize(std::size_t(n) + 1);
        ranks.resize(std::size_t(n) + 1);
        std::vector<int> cur(std::size_t(m), 0);
        for (int b = 0; b <= n; ++b) {
            enumerate(b, 0, cur, comps[std::size_t(b)]);
            auto& rk = ranks[std::size_t(b)];
            const auto& list = comps[std::size_t(b)];
            for (int r = 0; r < int(list.size()); ++r) rk.emplace(list[std::size_t(r)], r);
        }
        offset.assign(std::size_t(K) + 2, 0);
        for (int i = 0; i <= K; ++i)
            offset[std::size_t(i) + 1] = offset[std::size_t(i)] + comps[std::size_t(busy(i))].size();
        total = offset[std::size_t(K) + 1];
        if (total > 20'000'000)
            throw InvalidConfig("PhService: phase space too large to solve exactly");
    }

    int busy(int i) const { return std::min(i, n); }

    static void enumerate(int remaining, int pos, std::vector<int>& cur,
                          std::vector<std::vector<int>>& out) {
        if (pos + 1 == int(cur.size())) {
            cur[std::size_t(pos)] = remaining;
            out.push_back(cur);
            if (out.size() > 3'000'000)
                throw InvalidConfig("PhService: phase space too large to solve exactly");
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            cur[std::size_t(pos)] = v;
            enumerate(remaining - v, pos + 1, cur, out);
        }
    }

    std::size_t index(int level, const std::vector<int>& comp) const {
        return offset[std::size_t(level)] + std::size_t(ranks[std::size_t(busy(level))].at(comp));
    }
};

inline std::vector<Eigen::Triplet<double>> build_generator(const PhaseSpace& sp, double lambda,
                                                           const PhService& service, double theta,
                                                           std::vector<double>& outrate) {
    const int m = sp.m;
    const int n = sp.n;
    std::vector<Eigen::Triplet<double>> q;
    q.reserve(sp.total * std::size_t(m + 3));
    outrate.assign(sp.total, 0.0);
    auto add = [&](std::size_t s, std::size_t t, double rate) {
        q.emplace_back(int(s), int(t), rate);
        outrate[s] += rate;
    };
    std::vector<int> scratch;
    for (int i = 0; i <= sp.K; ++i) {
        const int b = sp.busy(i);
        const auto& list = sp.comps[std::size_t(b)];
        for (int r = 0; r < int(list.size()); ++r) {
            const auto& k = list[std::size_t(r)];
            const std::size_t s = sp.offset[std::size_t(i)] + std::size_t(r);
            scratch = k;
            if (i < sp.K) {
                if (i < n) {
                    for (int j = 0; j < m; ++j) {
                        scratch[std::size_t(j)] += 1;
                        add(s, sp.index(i + 1, scratch), lambda * service.branches[std::size_t(j)].prob);
                        scratch[std::size_t(j)] -= 1;
                    }
                } else {
                    add(s, sp.index(i + 1, k), lambda);
                }
            }
            for (int j = 0; j < m; ++j) {
                if (k[std::size_t(j)] == 0) continue;
                const double rate = k[std::size_t(j)] * service.branches[std::size_t(j)].rate;
                if (i <= n) {
                    scratch[std::size_t(j)] -= 1;
                    add(s, sp.index(i - 1, scratch), rate);
                    scratch[std::size_t(j)] += 1;
                } else {
                    // a freed server immediately takes the queue head, which
                    // picks its own branch
                    for (int l = 0; l < m; ++l) {
                        scratch[std::size_t(j)] -= 1;
                        scratch[std::size_t(l)] += 1;
                        add(s, sp.index(i - 1, scratch), rate * service.branches[std::size_t(l)].prob);
                        scratch[std::size_t(l)] -= 1;
                        scratch[std::size_t(j)] += 1;
                    }
                }
            }
            if (i > n) add(s, sp.index(i - 1, k), double(i - n) * theta);
        }
    }
    for (std::size_t s = 0; s < sp.total; ++s)
        q.emplace_back(int(s), int(s), -outrate[s]);
    return q;
}

inline std::vector<double> stationary_direct(const std::vector<Eigen::Triplet<double>>& q,
                                             std::size_t total, std::size_t rep) {
    std::vector<Eigen::Triplet<double>> at;
    at.reserve(q.size() + total);
    for (const auto& t : q) {
        if (std::size_t(t.col()) == rep) continue;  // this equation becomes the normalization
        at.emplace_back(t.col(), t.row(), t.value());
    }
    for (std::size_t s = 0; s < total; ++s) at.emplace_back(int(rep), int(s), 1.0);
    Eigen::SparseMatrix<double> a(static_cast<long>(total), static_cast<long>(total));
    a.setFromTriplets(at.begin(), at.end());
    a.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(a);
    lu.factorize(a);
    if (lu.info() != Eigen::Success)
        throw SingularSolve("stationary solve: factorization failed");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(long(total));
    rhs[long(rep)] = 1.0;
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
        throw SingularSolve("stationary solve: back substitution failed");
    return std::vector<double>(x.data(), x.data() + total);
}

inline std::vector<double> stationary_power(const std::vector<Eigen::Triplet<double>>& q,
                                            const std::vector<double>& outrate, std::size_t total) {
    double max_out = 0.0;
    for (double r : outrate) max_out = std::max(max_out, r);
    const double uni = 1.02 * max_out + 1e-9;
    std::vector<double> x(total, 1.0 / double(total)), flow(total, 0.0);
    std::vector<double> prev2, prev1;
    double delta = 1.0;
    for (long iter = 0; iter < 500'000; ++iter) {
        flow.assign(total, 0.0);
        for (const auto& t : q) flow[std::size_t(t.col())] += x[std::size_t(t.row())] * t.value();
        double res = 0.0;
        for (double f : flow) res = std::max(res, std::abs(f));
        if (res < 5e-11 && delta < 1e-12) break;
        delta = 0.0;
        double sum = 0.0;
        for (std::size_t s = 0; s < total; ++s) {
            const double nx = x[s] + flow[s] / uni;
            delta = std::max(delta, std::abs(nx - x[s]));
            x[s] = std::max(nx, 0.0);
            sum += x[s];
        }
        for (double& v : x) v /= sum;
        // Aitken extrapolation on the geometric tail of the iteration
        if (iter % 8 == 7) {
            if (!prev1.empty()) {
                double esum = 0.0;
                for (std::size_t s = 0; s < total; ++s) {
                    const double d1 = x[s] - prev1[s];
                    const double d2 = x[s] - 2.0 * prev1[s] + prev2[s];
                    double e = x[s];
                    if (std::abs(d2) > 1e-300) e = x[s] - d1 * d1 / d2;
                    e = std::max(e, 0.0);
                    prev2[s] = e;
                    esum += e;
                }
                if (esum > 0.0) {
                    for (double& v : prev2) v /= esum;
                    x.swap(prev2);
                }
                prev1.clear();
                prev2.clear();
            } else if (prev2.empty()) {
                prev2 = x;
            } else {
                prev1 = x;
            }
        }
    }
    flow.assign(total, 0.0);
    for (const auto& t : q) flow[std::size_t(t.col())] += x[std::size_t(t.row())] * t.value();
    double res = 0.0;
    for (double f : flow) res = std::max(res, std::abs(f));
    if (res >= 1e-10)
        throw SingularSolve("stationary solve: power iteration failed to reach residual tolerance");
    return x;
}

}  // namespace detail

inline CtmcSolution solve(double lambda, int n, const PhService& service, double theta, int K,
                          std::size_t max_direct_states = 100'000) {
    service.validate();
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidConfig("solve: arrival rate must be positive");
    if (n < 1) throw InvalidConfig("solve: at least one server required");
    if (!(theta > 0.0) || !std::isfinite(theta)) throw InvalidConfig("solve: patience rate must be positive");
    if (K < n + 2) throw InvalidConfig("solve: truncation level must exceed n + 1");

    const int m = int(service.branches.size());
    detail::PhaseSpace sp(n, m, K);
    std::vector<double> outrate;
    auto q = detail::build_generator(sp, lambda, service, theta, outrate);

    // replace the balance equation of a bulk state: count near the fluid level,
    // branch occupancy near its mode
    const double mu = 1.0 / service.mean();
    int bulk = n;
    if (lambda > n * mu) bulk = n + int(std::min<double>(K - n - 1, std::ceil((lambda - n * mu) / theta)));
    std::vector<int> mode(std::size_t(m), 0);
    {
        int b = sp.busy(bulk), assigned = 0;
        std::vector<std::pair<double, int>> frac;
        for (int j = 0; j < m; ++j) {
            const double exact = b * service.busy_fraction(std::size_t(j));
            mode[std::size_t(j)] = int(exact);
            assigned += mode[std::size_t(j)];
            frac.emplace_back(exact - mode[std::size_t(j)], j);
        }
        std::sort(frac.rbegin(), frac.rend());
        for (int r = 0; assigned < b; ++r, ++assigned) mode[std::size_t(frac[std::size_t(r)].second)] += 1;
    }
    const std::size_t rep = sp.index(bulk, mode);

    std::vector<double> pi = sp.total > max_direct_states
                                 ? detail::stationary_power(q, outrate, sp.total)
                                 : detail::stationary_direct(q, sp.total, rep);

    double lo = 0.0, sum = 0.0;
    for (double& v : pi) {
        lo = std::min(lo, v);
        v = std::max(v, 0.0);
        sum += v;
    }
    if (lo < -1e-8 || !(sum > 0.0))
        throw SingularSolve("stationary solve: negative probability mass");
    for (double& v : pi) v /= sum;

    CtmcSolution sol;
    sol.K = K;
    sol.n = n;
    sol.phases = m;
    sol.pi = std::move(pi);

    std::vector<double> flow(sp.total, 0.0);
    for (const auto& t : q) flow[std::size_t(t.col())] += sol.pi[std::size_t(t.row())] * t.value();
    for (double f : flow) sol.residual = std::max(sol.residual, std::abs(f));
    if (sol.residual >= 1e-10)
        throw SingularSolve("stationary solve: balance residual above tolerance");

    sol.marginal.assign(std::size_t(K) + 1, 0.0);
    sol.down_flow.assign(std::size_t(K) + 1, 0.0);
    sol.busy_by_phase.assign(std::size_t(m), 0.0);
    sol.phase_mean_by_level.assign(std::size_t(K) + 1, std::vector<double>(std::size_t(m), 0.0));
    for (int i = 0; i <= K; ++i) {
        const int b = sp.busy(i);
        const auto& list = sp.comps[std::size_t(b)];
        double level = 0.0;
        std::vector<double> kmean(std::size_t(m), 0.0);
        for (int r = 0; r < int(list.size()); ++r) {
            const double p = sol.pi[sp.offset[std::size_t(i)] + std::size_t(r)];
            level += p;
            const auto& k = list[std::size_t(r)];
            double down = i > n ? double(i - n) * theta : 0.0;
            for (int j = 0; j < m; ++j) {
                kmean[std::size_t(j)] += p * k[std::size_t(j)];
                down += k[std::size_t(j)] * service.branches[std::size_t(j)].rate;
            }
            sol.down_flow[std::size_t(i)] += p * down;
        }
        sol.marginal[std::size_t(i)] = level;
        for (int j = 0; j < m; ++j) {
            sol.busy_by_phase[std::size_t(j)] += kmean[std::size_t(j)];
            sol.phase_mean_by_level[std::size_t(i)][std::size_t(j)] =
                level > 0.0 ? kmean[std::size_t(j)] / level : 0.0;
        }
    }
    for (double v : sol.busy_by_phase) sol.busy_mean += v;

    // geometric continuation fed by abandonment alone: every neglected service
    // completion only drains the tail faster, so this overestimates the cut mass
    double tail = 0.0, prod = 1.0;
    for (int l = 1; l <= 4000; ++l) {
        prod *= lambda / (double(K + l - n) * theta);
        tail += prod;
        if (prod < 1e-16 * std::max(tail, 1.0)) break;
    }
    sol.tail_mass = sol.marginal[std::size_t(K)] * tail;
    if (!(sol.tail_mass < 1e-8))
        throw TruncationTooSmall("solve: estimated mass above the truncation level is " +
                                 std::to_string(sol.tail_mass));
    return sol;
}

inline CtmcSolution solve_auto(double lambda, int n, const PhService& service, double theta,
                               std::size_t max_direct_states = 100'000) {
    service.validate();
    const double mu = 1.0 / service.mean();
    long k0 = n + 50;
    if (lambda > n * mu) {
        QueueSpec spec{lambda, 1.0, n, to_distribution(service), Exponential{theta}};
        auto s = summarize(spec);
        k0 = n + long(std::ceil(s.q + 12.0 * std::sqrt(s.sigma_x_sq)));
    }
    for (int attempt = 0; attempt < 8; ++attempt) {
        try {
            return solve(lambda, n, service, theta, int(k0), max_direct_states);
        } catch (const TruncationTooSmall&) {
            k0 *= 2;
        }
    }
    throw TruncationTooSmall("solve_auto: tail mass still above tolerance after repeated doubling");
}

// half the absolute difference of two pmfs; the shorter one is zero-padded
inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    double tv = 0.0;
    const std::size_t len = std::max(p.size(), q.size());
    for (std::size_t i = 0; i < len; ++i) {
        const double a = i < p.size() ? p[i] : 0.0;
        const double b = i < q.size() ? q[i] : 0.0;
        tv += std::abs(a - b);
    }
    return 0.5 * tv;
}

// distance between the exact count pmf and the continuous-density approximation
// evaluated on the same grid; approximation mass falling outside the truncated
// range is counted against the fit
inline double tv_distance(const CtmcSolution& sol, const DiffusionSummary& summary,
                          const QueueSpec& spec) {
    double tv = 0.0, gsum = 0.0;
    for (int i = 0; i <= sol.K; ++i) {
        const double g = queue_pmf(summary, spec, i);
        tv += std::abs(sol.marginal[std::size_t(i)] - g);
        gsum += g;
    }
    return 0.5 * tv + 0.5 * std::abs(1.0 - gsum);
}

inline void write_pmf_csv(const CtmcSolution& sol, const DiffusionSummary& summary,
                          const QueueSpec& spec, std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"i", "probability", "gaussian_probability"});
    for (int i = 0; i <= sol.K; ++i)
        csv.row({std::to_string(i), format_double(sol.marginal[std::size_t(i)]),
                 format_double(queue_pmf(summary, spec, i))});
}

}  // namespace edq
