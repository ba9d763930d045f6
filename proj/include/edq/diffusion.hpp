#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "edq/distribution.hpp"
#include "edq/errors.hpp"
#include "edq/math.hpp"

namespace edq {

struct QueueSpec {
    double arrival_rate = 0.0;      // lambda
    double interarrival_scv = 1.0;  // c_a^2
    int n = 0;                      // server count
    Distribution service;           // mean 1/mu, scv c_s^2
    Distribution patience;          // mean gamma, absolutely continuous
};

struct DiffusionSummary {
    double alpha = 0.0;           // abandonment fraction
    double w = 0.0;               // mean virtual waiting time
    double sigma_w_sq = 0.0;      // virtual-wait variance
    double q = 0.0;               // mean queue length above n
    double sigma_x_sq = 0.0;      // number-in-system variance
    double ou_drift_rate = 0.0;
    double ou_m_variance = 0.0;   // infinitesimal variance of the scaled netput
    double sigma_hat_w_sq = 0.0;  // scaled virtual-wait variance
    double sigma_hat_x_sq = 0.0;  // scaled count variance
    double sigma_hat_g_sq = 0.0;  // scaled count variance net of the wait component
    double svpr = 0.0;            // service-variability-to-patience ratio
    double normalized_w = 0.0;    // w over mean patience

    // carried context
    double lambda = 0.0;
    double ca2 = 1.0;
    double cs2 = 0.0;
    double mu = 0.0;
    double gamma = 0.0;
    double rho = 0.0;
    double f_theta_w = 0.0;
    int n = 0;
    std::vector<std::string> warnings;
};

namespace detail {

struct PatienceIntegrals {
    double q_integral;   // int_0^w survival(u) du
    double theta_mixed;  // int_0^w cdf(u) survival(u) du
    double sq_survival;  // int_0^w survival(u)^2 du
};

inline PatienceIntegrals patience_integrals(const Distribution& patience, double w, double rho,
                                            double gamma) {
    if (auto* e = std::get_if<Exponential>(&patience.v())) {
        (void)e;
        PatienceIntegrals r;
        r.q_integral = gamma * (1.0 - 1.0 / rho);
        r.sq_survival = gamma * (1.0 - 1.0 / (rho * rho)) / 2.0;
        r.theta_mixed = r.q_integral - r.sq_survival;
        return r;
    }
    PatienceIntegrals r;
    r.q_integral = integrate([&](double u) { return survival(patience, u); }, 0.0, w);
    r.sq_survival = integrate(
        [&](double u) {
            double s = survival(patience, u);
            return s * s;
        },
        0.0, w);
    r.theta_mixed = integrate(
        [&](double u) {
            double s = survival(patience, u);
            return (1.0 - s) * s;
        },
        0.0, w);
    return r;
}

}  // namespace detail

inline DiffusionSummary summarize(const QueueSpec& spec) {
    validate(spec.service);
    validate(spec.patience);
    if (spec.n < 1) throw InvalidConfig("summarize: need at least one server");
    if (!(spec.arrival_rate > 0.0)) throw InvalidConfig("summarize: arrival rate must be positive");
    if (!(spec.interarrival_scv >= 0.0)) throw InvalidConfig("summarize: interarrival scv must be nonnegative");
    if (!has_density(spec.patience))
        throw NotAbsolutelyContinuous("summarize: patience law must admit a density");

    DiffusionSummary s;
    auto ms = moments(spec.service);
    auto mp = moments(spec.patience);
    s.lambda = spec.arrival_rate;
    s.ca2 = spec.interarrival_scv;
    s.mu = 1.0 / ms.mean;
    s.cs2 = ms.scv;
    s.gamma = mp.mean;
    s.n = spec.n;
    s.rho = s.lambda / (spec.n * s.mu);
    if (!(s.rho > 1.0)) throw NotOverloaded("summarize: traffic intensity must exceed 1");

    s.alpha = (s.rho - 1.0) / s.rho;
    s.w = quantile(spec.patience, s.alpha);
    s.f_theta_w = pdf(spec.patience, s.w);
    if (!(s.f_theta_w > 0.0) || !std::isfinite(s.f_theta_w))
        throw PatienceDensityZeroAtW("summarize: patience density vanishes at the fluid wait");

    double vv = s.ca2 + s.rho * s.cs2 + s.rho - 1.0;
    s.ou_m_variance = vv / (s.rho * s.mu);
    s.ou_drift_rate = s.rho * s.gamma * s.f_theta_w;
    s.sigma_hat_w_sq = vv / (2.0 * s.rho * s.rho * s.mu * s.gamma * s.f_theta_w);
    s.sigma_w_sq = s.sigma_hat_w_sq * s.gamma / spec.n;

    auto ints = detail::patience_integrals(spec.patience, s.w, s.rho, s.gamma);
    s.q = s.lambda * ints.q_integral;
    s.sigma_hat_g_sq = s.rho * s.mu * (ints.theta_mixed + s.ca2 * ints.sq_survival) / s.gamma;
    s.sigma_hat_x_sq = s.mu * s.mu * s.sigma_hat_w_sq + s.sigma_hat_g_sq;
    s.sigma_x_sq = s.sigma_hat_x_sq * spec.n * s.gamma;

    s.svpr = std::sqrt(s.cs2) / (s.gamma * s.mu);
    s.normalized_w = s.w / s.gamma;
    if (s.svpr > 0.5)
        s.warnings.push_back("svpr " + std::to_string(s.svpr) +
                             " exceeds 0.5; the approximation may lose accuracy");
    return s;
}

// P[scaled virtual-wait deviation > a]; reflection keeps tail(a)+tail(-a) == 1 bit-exact
inline double virtual_wait_tail(const DiffusionSummary& s, double a) {
    if (a < 0.0) return 1.0 - virtual_wait_tail(s, -a);
    return 0.5 * std::erfc(a / std::sqrt(2.0 * s.sigma_hat_w_sq));
}

inline double queue_tail(const DiffusionSummary& s, double a) {
    if (a < 0.0) return 1.0 - queue_tail(s, -a);
    return 0.5 * std::erfc(a / std::sqrt(2.0 * s.sigma_hat_x_sq));
}

inline double queue_pmf(const DiffusionSummary& s, const QueueSpec& spec, long i) {
    if (i < 0) throw InvalidConfig("queue_pmf: count must be nonnegative");
    double sigma = std::sqrt(s.sigma_x_sq);
    double z = (double(i) - spec.n - s.q) / sigma;
    return normal_pdf(z) / sigma;
}

namespace detail {

inline double phi_w(const DiffusionSummary& s, double u) {
    return normal_cdf((u - s.w) / std::sqrt(s.sigma_w_sq));
}

inline double phi_w_tail(const DiffusionSummary& s, double u) {
    return normal_cdf(-(u - s.w) / std::sqrt(s.sigma_w_sq));
}

}  // namespace detail

// fraction of customers entering service within delay d
inline double service_level(const QueueSpec& spec, double d, double* truncation_mass = nullptr) {
    if (!(d >= 0.0)) throw InvalidConfig("service_level: delay must be nonnegative");
    DiffusionSummary s = summarize(spec);
    double upper = quantile(spec.patience, 1.0 - 1e-9);
    double cut = std::min(d, upper);
    double head = 0.0;
    if (cut > 0.0)
        head = integrate_broken(
            [&](double u) { return detail::phi_w(s, u) * pdf(spec.patience, u); },
            {0.0, std::min(s.w, cut), cut}, 1e-8);
    // beyond d the integrand is constant in the wait argument: closed tail term
    double tail = survival(spec.patience, d) * detail::phi_w(s, d);
    if (truncation_mass) *truncation_mass = d > upper ? survival(spec.patience, upper) : 0.0;
    return std::clamp(head + tail, 0.0, 1.0);
}

// among customers whose waits exceed d: the fraction that abandon
inline double effective_abandonment(const QueueSpec& spec, double d, double* truncation_mass = nullptr) {
    if (!(d >= 0.0)) throw InvalidConfig("effective_abandonment: delay must be nonnegative");
    DiffusionSummary s = summarize(spec);
    double surv_d = survival(spec.patience, d);
    double wait_tail_d = detail::phi_w_tail(s, d);
    double denom = surv_d * wait_tail_d;
    if (!(denom > 1e-300))
        throw DegenerateConditioning("effective_abandonment: conditioning event has vanishing probability");
    double upper = std::max(quantile(spec.patience, 1.0 - 1e-9), d);
    double num = 0.0;
    if (upper > d)
        num = integrate_broken(
            [&](double u) { return detail::phi_w_tail(s, u) * pdf(spec.patience, u); },
            {d, std::clamp(s.w, d, upper), upper}, 1e-8);
    if (truncation_mass) *truncation_mass = survival(spec.patience, upper);
    return std::clamp(num / denom, 0.0, 1.0);
}

// comparator variant: unit interarrival and service scv, service mean unchanged
inline QueueSpec zm_spec(const QueueSpec& spec) {
    QueueSpec z = spec;
    z.interarrival_scv = 1.0;
    z.service = Exponential{1.0 / mean(spec.service)};
    return z;
}

inline DiffusionSummary zm_summarize(const QueueSpec& spec) { return summarize(zm_spec(spec)); }

struct NormalizedPatience {
    Distribution H;       // patience rescaled to unit mean
    double w_bar;         // normalized fluid wait
    double f_H_at_w_bar;  // density of H at w_bar
};

inline NormalizedPatience normalize_patience(const QueueSpec& spec) {
    double gamma = mean(spec.patience);
    Distribution H = scale(spec.patience, 1.0 / gamma);
    DiffusionSummary s = summarize(spec);
    return {H, s.w / gamma, pdf(H, s.w / gamma)};
}

}  // namespace edq
