#pragma once

// Exact M/M/n+M stationary quantities via the birth-death recursion; the
// reference the simulator and the matrix solver are tested against.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace edq::testing {

struct ErlangA {
    std::vector<double> pmf;  // states 0..K
    double abandonment = 0.0;
    double queue_mean = 0.0, queue_var = 0.0;
    double system_mean = 0.0, system_var = 0.0;
    double tail_mass = 0.0;  // pmf at the truncation boundary, adequacy check

    double system_tail(double thr) const {
        double p = 0.0;
        for (std::size_t i = 0; i < pmf.size(); ++i)
            if (double(i) > thr) p += pmf[i];
        return p;
    }
};

inline ErlangA erlang_a(double lambda, int n, double mu, double theta, int K) {
    if (K <= n) throw std::invalid_argument("erlang_a: truncation below server count");
    std::vector<double> lw(std::size_t(K) + 1, 0.0);
    for (int i = 1; i <= K; ++i) {
        double death = std::min(i, n) * mu + std::max(i - n, 0) * theta;
        lw[std::size_t(i)] = lw[std::size_t(i - 1)] + std::log(lambda) - std::log(death);
    }
    double peak = lw[0];
    for (double v : lw) peak = std::max(peak, v);
    ErlangA out;
    out.pmf.resize(lw.size());
    double total = 0.0;
    for (std::size_t i = 0; i < lw.size(); ++i) {
        out.pmf[i] = std::exp(lw[i] - peak);
        total += out.pmf[i];
    }
    double eq = 0.0, eq2 = 0.0, ex = 0.0, ex2 = 0.0;
    for (std::size_t i = 0; i < out.pmf.size(); ++i) {
        out.pmf[i] /= total;
        double x = double(i);
        double q = std::max(x - n, 0.0);
        eq += q * out.pmf[i];
        eq2 += q * q * out.pmf[i];
        ex += x * out.pmf[i];
        ex2 += x * x * out.pmf[i];
    }
    out.queue_mean = eq;
    out.queue_var = eq2 - eq * eq;
    out.system_mean = ex;
    out.system_var = ex2 - ex * ex;
    out.abandonment = theta * eq / lambda;
    out.tail_mass = out.pmf.back();
    return out;
}

}  // namespace edq::testing
