#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "crae/common.hpp"
#include "crae/linalg.hpp"

namespace crae {

// Pooling weights come from CDF increments of Beta(a, b) over normalized
// time. learn_a is only meaningful with b = 1, where the CDF reduces to x^a
// and the gradient has a closed form.
struct BetaPoolConfig {
    double a = 9.8e7;
    double b = 1.0e8;
    bool learn_a = false;

    void validate() const {
        if (!(a > 0.0) || !(b > 0.0)) throw input_error("beta pool: a and b must be positive");
        if (learn_a && b != 1.0) throw input_error("beta pool: learn_a requires b = 1");
    }
};

namespace detail {

// Continued fraction for the incomplete beta (Lentz's method, the even/odd
// coefficient form). Returns NaN when it fails to converge within max_iter.
inline double beta_cf(double a, double b, double x, int max_iter, double eps) {
    constexpr double fpmin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    return std::nan("");
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace detail

// Regularized incomplete beta function I_x(a, b).
//
// Continued fraction with the symmetry switch at x > (a+1)/(a+b+2); the
// normalizing prefactor is assembled in log space so shapes as large as the
// default pooling setting (a ~ 1e8) do not overflow B(a, b). When the
// fraction has not settled after 300 iterations -- which only happens close
// to the peak of a very concentrated density -- the value falls back to the
// Gaussian limit of the beta distribution; for min(a,b) that large the
// fallback is accurate to well below any tolerance used here.
inline double reg_inc_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw input_error("reg_inc_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw input_error("reg_inc_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;

    constexpr int max_iter = 300;
    constexpr double eps = 1e-14;

    const double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
    const bool lower = x < (a + 1.0) / (a + b + 2.0);
    // Deep in a tail the prefactor underflows any representable contribution;
    // the continued fraction cannot change that.
    if (log_bt < -64.0) return lower ? 0.0 : 1.0;

    const double bt = std::exp(log_bt);
    double cf = lower ? detail::beta_cf(a, b, x, max_iter, eps)
                      : detail::beta_cf(b, a, 1.0 - x, max_iter, eps);
    if (std::isnan(cf)) {
        if (std::min(a, b) >= 1e4) {
            const double mean = a / (a + b);
            const double sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));
            return detail::std_normal_cdf((x - mean) / sd);
        }
        throw numeric_error("reg_inc_beta: continued fraction did not converge");
    }
    const double v = lower ? bt * cf / a : 1.0 - bt * cf / b;
    return std::min(1.0, std::max(0.0, v));
}

// w_t = I_{t/2T}(a,b) - I_{(t-1)/2T}(a,b) for t = 1..2T. Each grid value is
// evaluated once and differenced, so the weights telescope to exactly
// I_1 - I_0 = 1 up to summation rounding. A running max keeps the grid CDF
// monotone before differencing, so weights are never negative.
inline Vector pool_weights(std::size_t seq_len, double a, double b) {
    if (seq_len < 1) throw input_error("pool_weights: sequence length must be >= 1");
    const std::size_t n = 2 * seq_len;
    std::vector<double> cdf(n + 1);
    cdf[0] = 0.0;
    cdf[n] = 1.0;
    for (std::size_t t = 1; t < n; ++t) {
        const double x = static_cast<double>(t) / static_cast<double>(n);
        cdf[t] = std::max(reg_inc_beta(x, a, b), cdf[t - 1]);
    }
    if (cdf[n - 1] > 1.0) cdf[n - 1] = 1.0;
    Vector w(n);
    for (std::size_t t = 0; t < n; ++t) w[t] = cdf[t + 1] - cdf[t];
    return w;
}

// Weighted sum of the 2T pooled state vectors (each of length 2*K_W). The
// caller assembles `states` with the bottleneck step already skipped.
inline Vector beta_pool(const std::vector<Vector>& states, double a, double b) {
    if (states.empty() || states.size() % 2 != 0)
        throw input_error("beta_pool: expected a non-empty even-length state list");
    const Vector w = pool_weights(states.size() / 2, a, b);
    Vector out(states[0].size(), 0.0);
    for (std::size_t t = 0; t < states.size(); ++t) {
        if (states[t].size() != out.size()) throw input_error("beta_pool: ragged state list");
        axpy(w[t], states[t], out);
    }
    return out;
}

// d w_t / da for b = 1, where w_t = (t/2T)^a - ((t-1)/2T)^a.
inline Vector pool_weight_grads_a(std::size_t seq_len, double a) {
    const std::size_t n = 2 * seq_len;
    Vector g(n);
    double prev_term = 0.0;  // x^a * ln x -> 0 as x -> 0 for a > 0
    for (std::size_t t = 1; t <= n; ++t) {
        const double x = static_cast<double>(t) / static_cast<double>(n);
        const double term = (t == n) ? 0.0 : std::pow(x, a) * std::log(x);
        g[t - 1] = term - prev_term;
        prev_term = term;
    }
    return g;
}

// One item's contribution to the gradient of the lambda_v coupling term
// -(lambda_v/2) * ||v - tanh(W_1 * pooled + b_1)||^2 with respect to a.
// `states` is the same pooled state list fed to beta_pool; requires b = 1.
inline double grad_loglik_wrt_a(const std::vector<Vector>& states, const Vector& v,
                                const Matrix& w1, const Vector& b1, double lambda_v,
                                double a, double b) {
    if (b != 1.0) throw input_error("grad_loglik_wrt_a: derived only for b = 1");
    if (states.empty() || states.size() % 2 != 0)
        throw input_error("grad_loglik_wrt_a: expected an even-length state list");
    const std::size_t seq_len = states.size() / 2;

    Vector pooled = beta_pool(states, a, b);
    Vector pre;
    matvec(w1, pooled, pre);
    for (std::size_t k = 0; k < pre.size(); ++k) pre[k] = std::tanh(pre[k] + b1[k]);

    const Vector dw = pool_weight_grads_a(seq_len, a);
    Vector dpool(states[0].size(), 0.0);
    for (std::size_t t = 0; t < states.size(); ++t) axpy(dw[t], states[t], dpool);
    Vector dpre;
    matvec(w1, dpool, dpre);

    double grad = 0.0;
    for (std::size_t k = 0; k < pre.size(); ++k) {
        const double dgamma = (1.0 - pre[k] * pre[k]) * dpre[k];
        grad += lambda_v * (v[k] - pre[k]) * dgamma;
    }
    return grad;
}

}  // namespace crae
