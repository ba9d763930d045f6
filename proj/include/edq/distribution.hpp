#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "edq/errors.hpp"
#include "edq/math.hpp"
#include "edq/random.hpp"

namespace edq {

struct Exponential {
    double rate;
};

struct Deterministic {
    double value;
};

struct Erlang {
    int shape;
    double rate;
};

// parameterized by (mean, scv); location/scale derived:
// scale^2 = ln(1+scv), location = ln(mean) - scale^2/2
struct LogNormal {
    double mean;
    double scv;
};

struct HyperBranch {
    double weight;
    double rate;
};

struct Hyperexponential {
    std::vector<HyperBranch> branches;
};

struct Distribution;

// stationary-excess transform of a base law, kept symbolic so that its cdf
// mu * integral of (1-F) stays analytic
struct EquilibriumOf {
    std::shared_ptr<const Distribution> base;
};

using DistributionVariant =
    std::variant<Exponential, Deterministic, Erlang, LogNormal, Hyperexponential, EquilibriumOf>;

struct Distribution : DistributionVariant {
    using DistributionVariant::DistributionVariant;
    const DistributionVariant& v() const { return *this; }
};

inline Distribution hyperexponential_from_means(const std::vector<std::pair<double, double>>& weight_mean) {
    Hyperexponential h;
    for (auto& [p, m] : weight_mean) h.branches.push_back({p, 1.0 / m});
    return h;
}

struct MomentSummary {
    double mean = 0.0;
    double variance = 0.0;
    double scv = 0.0;
    std::optional<double> third_moment;
};

namespace detail {

inline double hyper_mean(const Hyperexponential& h) {
    double m = 0.0;
    for (auto& b : h.branches) m += b.weight / b.rate;
    return m;
}

}  // namespace detail

inline void validate(const Distribution& d) {
    std::visit(
        [](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                if (!(f.rate > 0.0)) throw Error("Exponential: rate must be positive");
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                if (!(f.value > 0.0)) throw Error("Deterministic: value must be positive");
            } else if constexpr (std::is_same_v<T, Erlang>) {
                if (f.shape < 1) throw Error("Erlang: shape must be a positive integer");
                if (!(f.rate > 0.0)) throw Error("Erlang: rate must be positive");
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                if (!(f.mean > 0.0)) throw Error("LogNormal: mean must be positive");
                if (!(f.scv >= 0.0)) throw Error("LogNormal: scv must be nonnegative");
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                if (f.branches.empty()) throw Error("Hyperexponential: needs at least one branch");
                double sum = 0.0;
                for (auto& b : f.branches) {
                    if (!(b.weight > 0.0)) throw Error("Hyperexponential: weights must be positive");
                    if (!(b.rate > 0.0)) throw Error("Hyperexponential: rates must be positive");
                    sum += b.weight;
                }
                if (std::abs(sum - 1.0) > 1e-12) throw Error("Hyperexponential: weights must sum to 1");
            } else if constexpr (std::is_same_v<T, EquilibriumOf>) {
                if (!f.base) throw Error("EquilibriumOf: missing base");
                validate(*f.base);
                if (std::holds_alternative<EquilibriumOf>(f.base->v()))
                    throw Error("EquilibriumOf: nested equilibrium transforms are not supported");
            }
        },
        d.v());
}

inline double cdf(const Distribution& d, double x);

namespace detail {

inline double equilibrium_cdf(const Distribution& base, double x) {
    if (x <= 0.0) return 0.0;
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return -std::expm1(-f.rate * x);
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                return std::min(x / f.value, 1.0);
            } else if constexpr (std::is_same_v<T, Erlang>) {
                // uniform mixture of Erlang(j, rate), j = 1..shape
                double s = 0.0;
                for (int j = 1; j <= f.shape; ++j) s += gamma_p(double(j), f.rate * x);
                return s / double(f.shape);
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                double s2 = std::log(1.0 + f.scv);
                double s = std::sqrt(s2);
                double m = std::log(f.mean) - 0.5 * s2;
                double z = (std::log(x) - m) / s;
                return (x / f.mean) * (1.0 - normal_cdf(z)) + normal_cdf(z - s);
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                double mean = hyper_mean(f), s = 0.0;
                for (auto& b : f.branches) s -= (b.weight / b.rate / mean) * std::expm1(-b.rate * x);
                return s;
            } else {
                throw Error("EquilibriumOf: nested equilibrium transforms are not supported");
            }
        },
        base.v());
}

}  // namespace detail

inline double cdf(const Distribution& d, double x) {
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return x <= 0.0 ? 0.0 : -std::expm1(-f.rate * x);
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                return x >= f.value ? 1.0 : 0.0;
            } else if constexpr (std::is_same_v<T, Erlang>) {
                return x <= 0.0 ? 0.0 : gamma_p(double(f.shape), f.rate * x);
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                if (x <= 0.0) return 0.0;
                double s2 = std::log(1.0 + f.scv);
                if (s2 == 0.0) return x >= f.mean ? 1.0 : 0.0;
                double s = std::sqrt(s2);
                double m = std::log(f.mean) - 0.5 * s2;
                return normal_cdf((std::log(x) - m) / s);
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                if (x <= 0.0) return 0.0;
                double s = 0.0;
                for (auto& b : f.branches) s -= b.weight * std::expm1(-b.rate * x);
                return s;
            } else {
                return detail::equilibrium_cdf(*f.base, x);
            }
        },
        d.v());
}

inline bool has_density(const Distribution& d) {
    if (std::holds_alternative<Deterministic>(d.v())) return false;
    return true;
}

inline double pdf(const Distribution& d, double x) {
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return x < 0.0 ? 0.0 : f.rate * std::exp(-f.rate * x);
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                throw NotAbsolutelyContinuous("pdf: deterministic law has no density");
            } else if constexpr (std::is_same_v<T, Erlang>) {
                if (x < 0.0) return 0.0;
                if (x == 0.0) return f.shape == 1 ? f.rate : 0.0;
                return std::exp(f.shape * std::log(f.rate) + (f.shape - 1) * std::log(x) -
                                f.rate * x - std::lgamma(double(f.shape)));
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                if (x <= 0.0) return 0.0;
                double s2 = std::log(1.0 + f.scv);
                if (s2 == 0.0) throw NotAbsolutelyContinuous("pdf: zero-variance lognormal");
                double s = std::sqrt(s2);
                double m = std::log(f.mean) - 0.5 * s2;
                double z = (std::log(x) - m) / s;
                return normal_pdf(z) / (x * s);
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                if (x < 0.0) return 0.0;
                double s = 0.0;
                for (auto& b : f.branches) s += b.weight * b.rate * std::exp(-b.rate * x);
                return s;
            } else {
                // density of the stationary excess is mu * (1 - F(x))
                if (x < 0.0) return 0.0;
                double mean = 0.0;
                std::visit(
                    [&](const auto& g) {
                        using U = std::decay_t<decltype(g)>;
                        if constexpr (std::is_same_v<U, Exponential>)
                            mean = 1.0 / g.rate;
                        else if constexpr (std::is_same_v<U, Deterministic>)
                            mean = g.value;
                        else if constexpr (std::is_same_v<U, Erlang>)
                            mean = g.shape / g.rate;
                        else if constexpr (std::is_same_v<U, LogNormal>)
                            mean = g.mean;
                        else if constexpr (std::is_same_v<U, Hyperexponential>)
                            mean = detail::hyper_mean(g);
                        else
                            throw Error("EquilibriumOf: nested equilibrium transforms are not supported");
                    },
                    f.base->v());
                return (1.0 - cdf(*f.base, x)) / mean;
            }
        },
        d.v());
}

// survival function computed in tail-stable per-family forms (no 1-cdf cancellation)
inline double survival(const Distribution& d, double x) {
    if (x <= 0.0) return 1.0;
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return std::exp(-f.rate * x);
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                return x >= f.value ? 0.0 : 1.0;
            } else if constexpr (std::is_same_v<T, Erlang>) {
                // Poisson partial sum
                double term = std::exp(-f.rate * x), s = term;
                for (int j = 1; j < f.shape; ++j) {
                    term *= f.rate * x / j;
                    s += term;
                }
                return s;
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                double s2 = std::log(1.0 + f.scv);
                if (s2 == 0.0) return x >= f.mean ? 0.0 : 1.0;
                double s = std::sqrt(s2);
                double m = std::log(f.mean) - 0.5 * s2;
                return normal_cdf(-(std::log(x) - m) / s);
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                double s = 0.0;
                for (auto& b : f.branches) s += b.weight * std::exp(-b.rate * x);
                return s;
            } else {
                return std::visit(
                    [&](const auto& g) -> double {
                        using U = std::decay_t<decltype(g)>;
                        if constexpr (std::is_same_v<U, Deterministic>) {
                            return std::max(0.0, 1.0 - x / g.value);
                        } else if constexpr (std::is_same_v<U, Erlang>) {
                            double s = 0.0;
                            for (int j = 1; j <= g.shape; ++j)
                                s += survival(Distribution{Erlang{j, g.rate}}, x);
                            return s / double(g.shape);
                        } else if constexpr (std::is_same_v<U, LogNormal>) {
                            double s2 = std::log(1.0 + g.scv);
                            double s = std::sqrt(s2);
                            double m = std::log(g.mean) - 0.5 * s2;
                            double z = (std::log(x) - m) / s;
                            return normal_cdf(s - z) - (x / g.mean) * normal_cdf(-z);
                        } else if constexpr (std::is_same_v<U, Exponential>) {
                            return std::exp(-g.rate * x);
                        } else if constexpr (std::is_same_v<U, Hyperexponential>) {
                            double mean = detail::hyper_mean(g), s = 0.0;
                            for (auto& b : g.branches)
                                s += (b.weight / b.rate / mean) * std::exp(-b.rate * x);
                            return s;
                        } else {
                            throw Error("EquilibriumOf: nested equilibrium transforms are not supported");
                        }
                    },
                    f.base->v());
            }
        },
        d.v());
}

inline double hazard(const Distribution& d, double x) {
    double s = survival(d, x);
    if (s <= 0.0) throw SupportExceeded("hazard: cdf reached 1");
    return pdf(d, x) / s;
}

inline double quantile(const Distribution& d, double p) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidProbability("quantile: p must lie in [0,1)");
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return -std::log1p(-p) / f.rate;
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                return f.value;
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                if (p == 0.0) return 0.0;
                double s2 = std::log(1.0 + f.scv);
                double s = std::sqrt(s2);
                double m = std::log(f.mean) - 0.5 * s2;
                return std::exp(m + s * normal_quantile(p));
            } else if constexpr (std::is_same_v<T, EquilibriumOf>) {
                if (p == 0.0) return 0.0;
                if (auto* det = std::get_if<Deterministic>(&f.base->v())) return p * det->value;
                // fall through to bisection on the analytic cdf
                double lo = 0.0, hi = 1.0;
                while (cdf(d, hi) < p) {
                    hi *= 2.0;
                    if (hi > 1e300) throw Error("quantile: failed to bracket");
                }
                for (int i = 0; i < 200 && (hi - lo) > 1e-12 * std::max(1.0, hi); ++i) {
                    double mid = 0.5 * (lo + hi);
                    (cdf(d, mid) >= p ? hi : lo) = mid;
                }
                return hi;
            } else {
                if (p == 0.0) return 0.0;
                double lo = 0.0, hi = 1.0;
                while (cdf(d, hi) < p) {
                    hi *= 2.0;
                    if (hi > 1e300) throw Error("quantile: failed to bracket");
                }
                for (int i = 0; i < 200 && (hi - lo) > 1e-12 * std::max(1.0, hi); ++i) {
                    double mid = 0.5 * (lo + hi);
                    (cdf(d, mid) >= p ? hi : lo) = mid;
                }
                return hi;
            }
        },
        d.v());
}

namespace detail {

// raw moment E[X^k], k = 1..4, closed per family
inline double raw_moment(const Distribution& d, int k) {
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                double m = 1.0;
                for (int j = 1; j <= k; ++j) m *= j / f.rate;
                return m;
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                return std::pow(f.value, k);
            } else if constexpr (std::is_same_v<T, Erlang>) {
                double m = 1.0;
                for (int j = 0; j < k; ++j) m *= (f.shape + j) / f.rate;
                return m;
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return std::pow(f.mean, k) * std::pow(1.0 + f.scv, 0.5 * k * (k - 1));
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                double s = 0.0;
                for (auto& b : f.branches) {
                    double m = 1.0;
                    for (int j = 1; j <= k; ++j) m *= j / b.rate;
                    s += b.weight * m;
                }
                return s;
            } else {
                // E[Y^k] = E[X^{k+1}] / ((k+1) E[X]) for the stationary excess
                return raw_moment(*f.base, k + 1) / ((k + 1) * raw_moment(*f.base, 1));
            }
        },
        d.v());
}

}  // namespace detail

inline MomentSummary moments(const Distribution& d) {
    MomentSummary s;
    s.mean = detail::raw_moment(d, 1);
    double m2 = detail::raw_moment(d, 2);
    s.variance = std::max(0.0, m2 - s.mean * s.mean);
    s.scv = s.variance / (s.mean * s.mean);
    s.third_moment = detail::raw_moment(d, 3);
    return s;
}

inline double mean(const Distribution& d) { return detail::raw_moment(d, 1); }
inline double scv(const Distribution& d) { return moments(d).scv; }

inline double sample(const Distribution& d, RandomStream& stream) {
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return stream.exponential(f.rate);
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                return f.value;
            } else if constexpr (std::is_same_v<T, Erlang>) {
                return stream.erlang(f.shape, f.rate);
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                double s2 = std::log(1.0 + f.scv);
                return stream.lognormal(std::log(f.mean) - 0.5 * s2, std::sqrt(s2));
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                double u = stream.uniform(), acc = 0.0;
                for (auto& b : f.branches) {
                    acc += b.weight;
                    if (u <= acc) return stream.exponential(b.rate);
                }
                return stream.exponential(f.branches.back().rate);
            } else {
                return quantile(d, stream.uniform());
            }
        },
        d.v());
}

inline Distribution equilibrium(const Distribution& d) {
    return std::visit(
        [&](const auto& f) -> Distribution {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return f;  // the exponential is the transform's fixed point
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                // same rates, weights tilted by branch mean
                double mean = detail::hyper_mean(f);
                Hyperexponential h;
                for (auto& b : f.branches) h.branches.push_back({b.weight / b.rate / mean, b.rate});
                return h;
            } else if constexpr (std::is_same_v<T, EquilibriumOf>) {
                throw Error("equilibrium: nested equilibrium transforms are not supported");
            } else {
                return EquilibriumOf{std::make_shared<const Distribution>(d)};
            }
        },
        d.v());
}

// law of c*X for c > 0
inline Distribution scale(const Distribution& d, double c) {
    if (!(c > 0.0)) throw Error("scale: factor must be positive");
    return std::visit(
        [&](const auto& f) -> Distribution {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return Exponential{f.rate / c};
            } else if constexpr (std::is_same_v<T, Deterministic>) {
                return Deterministic{f.value * c};
            } else if constexpr (std::is_same_v<T, Erlang>) {
                return Erlang{f.shape, f.rate / c};
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return LogNormal{f.mean * c, f.scv};
            } else if constexpr (std::is_same_v<T, Hyperexponential>) {
                Hyperexponential h;
                for (auto& b : f.branches) h.branches.push_back({b.weight, b.rate / c});
                return h;
            } else {
                return EquilibriumOf{std::make_shared<const Distribution>(scale(*f.base, c))};
            }
        },
        d.v());
}

}  // namespace edq
