#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "edq/errors.hpp"

namespace edq {

inline constexpr double kPi = 3.14159265358979323846;

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Acklam's rational approximation refined by one Halley step of the CDF.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidProbability("normal_quantile: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

namespace detail {

template <class F>
double simpson_adapt(F& f, double a, double fa, double m, double fm, double b, double fb,
                     double whole, double tol, int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol || (m - a) < 1e-14 * (std::abs(a) + 1.0))
        return left + right + delta / 15.0;
    if (depth <= 0) throw QuadratureFailure("adaptive Simpson: max depth reached");
    return simpson_adapt(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
           simpson_adapt(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

template <class F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-8, int max_depth = 48) {
    if (!(b > a)) return 0.0;
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_adapt(f, a, fa, m, fm, b, fb, whole, abs_tol, max_depth);
}

// Integrates with mandatory panel breaks (integrand kinks land on panel edges).
template <class F>
double integrate_broken(F&& f, std::vector<double> points, double abs_tol = 1e-8) {
    std::sort(points.begin(), points.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i)
        if (points[i + 1] > points[i])
            total += integrate(f, points[i], points[i + 1], abs_tol);
    return total;
}

// Regularized lower incomplete gamma P(a,x): series for x < a+1, else continued fraction.
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw Error("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    double b = x + 1.0 - a, c = 1e308, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

inline double chi_square_cdf(double x, double k) { return x <= 0.0 ? 0.0 : gamma_p(0.5 * k, 0.5 * x); }

inline double chi_square_quantile(double p, double k) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidProbability("chi_square_quantile: p outside (0,1)");
    // Wilson-Hilferty start, then Newton on the CDF
    double z = normal_quantile(p);
    double x = k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3.0);
    if (x <= 0.0) x = 1e-8;
    for (int i = 0; i < 80; ++i) {
        double fx = chi_square_cdf(x, k) - p;
        double pdf = std::exp((0.5 * k - 1.0) * std::log(x) - 0.5 * x -
                              std::lgamma(0.5 * k) - 0.5 * k * std::log(2.0));
        if (pdf <= 0.0) break;
        double step = fx / pdf;
        x -= step;
        if (x <= 0.0) x = 1e-12;
        if (std::abs(step) < 1e-12 * (1.0 + x)) break;
    }
    return x;
}

// Continued fraction for the regularized incomplete beta function (Lentz).
namespace detail {
inline double betacf(double a, double b, double x) {
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < 1e-300) d = 1e-300;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h;
}
}  // namespace detail

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    double front = std::exp(lbeta + a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, double nu) {
    double p = 0.5 * incomplete_beta(0.5 * nu, 0.5, nu / (nu + t * t));
    return t >= 0.0 ? 1.0 - p : p;
}

inline double student_t_quantile(double p, double nu) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidProbability("student_t_quantile: p outside (0,1)");
    double x = normal_quantile(p);
    for (int i = 0; i < 100; ++i) {
        double fx = student_t_cdf(x, nu) - p;
        double pdf = std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) /
                     std::sqrt(nu * kPi) * std::pow(1.0 + x * x / nu, -0.5 * (nu + 1.0));
        double step = fx / pdf;
        x -= step;
        if (std::abs(step) < 1e-13 * (1.0 + std::abs(x))) break;
    }
    return x;
}

// Kolmogorov asymptotic tail Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_q(double x) {
    if (x < 0.15) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = 2.0 * std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 == 1) ? term : -term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

struct MeanCI {
    double mean = 0.0;
    double half_width = 0.0;
    double lo() const { return mean - half_width; }
    double hi() const { return mean + half_width; }
};

// Student-t interval over a vector of (batch) means.
inline MeanCI t_interval(const std::vector<double>& v, double level = 0.95) {
    MeanCI out;
    std::size_t n = v.size();
    if (n == 0) return out;
    double s = 0.0;
    for (double x : v) s += x;
    out.mean = s / double(n);
    if (n < 2) return out;
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    double se = std::sqrt(ss / double(n - 1) / double(n));
    double tq = student_t_quantile(0.5 + 0.5 * level, double(n - 1));
    out.half_width = tq * se;
    return out;
}

// Chi-square interval for a variance estimated from n values.
inline std::pair<double, double> variance_ci(double sample_var, std::size_t n, double level = 0.95) {
    if (n < 2) return {0.0, 1e308};
    double alpha = 1.0 - level, nu = double(n - 1);
    double lo = nu * sample_var / chi_square_quantile(1.0 - 0.5 * alpha, nu);
    double hi = nu * sample_var / chi_square_quantile(0.5 * alpha, nu);
    return {lo, hi};
}

// Fisher-z interval for a sample correlation from n pairs.
inline std::pair<double, double> correlation_ci(double r, std::size_t n, double level = 0.99) {
    if (n < 4) return {-1.0, 1.0};
    r = std::clamp(r, -0.999999, 0.999999);
    double z = 0.5 * std::log((1.0 + r) / (1.0 - r));
    double se = 1.0 / std::sqrt(double(n - 3));
    double zq = normal_quantile(0.5 + 0.5 * level);
    double lo = z - zq * se, hi = z + zq * se;
    return {std::tanh(lo), std::tanh(hi)};
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LineFit out;
    std::size_t n = std::min(x.size(), y.size());
    if (n < 2) return out;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double den = double(n) * sxx - sx * sx;
    if (den == 0.0) return out;
    out.slope = (double(n) * sxy - sx * sy) / den;
    out.intercept = (sy - out.slope * sx) / double(n);
    return out;
}

// One-sample KS test against a continuous CDF; Stephens' small-sample correction.
template <class Cdf>
std::pair<double, double> ks_test(std::vector<double> samples, Cdf&& cdf) {
    std::sort(samples.begin(), samples.end());
    std::size_t n = samples.size();
    if (n == 0) return {0.0, 1.0};
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double F = cdf(samples[i]);
        d = std::max(d, std::abs(F - double(i) / double(n)));
        d = std::max(d, std::abs(double(i + 1) / double(n) - F));
    }
    double rn = std::sqrt(double(n));
    double p = kolmogorov_q((rn + 0.12 + 0.11 / rn) * d);
    return {d, p};
}

inline std::pair<double, double> ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    double ne = double(a.size()) * double(b.size()) / double(a.size() + b.size());
    double rn = std::sqrt(ne);
    double p = kolmogorov_q((rn + 0.12 + 0.11 / rn) * d);
    return {d, p};
}

}  // namespace edq
