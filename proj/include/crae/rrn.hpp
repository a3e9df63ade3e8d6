#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "crae/common.hpp"
#include "crae/linalg.hpp"
#include "crae/rng.hpp"

namespace crae {

// Constants of the moment-matched nonlinearities: the probit slope match
// xi^2 = pi/8 and the sigmoid-square surrogate sigma(rho1*(x+rho0)).
struct RobustConstants {
    static constexpr double xi_sq = std::numbers::pi / 8.0;
    static inline const double rho_1 = 4.0 - 2.0 * std::numbers::sqrt2;
    static inline const double rho_0 = -std::log(std::numbers::sqrt2 + 1.0);
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// kappa(lambda_s) = (1 + xi^2 / lambda_s)^(-1/2); 1 in the noiseless limit.
inline double kappa(double lambda_s) {
    if (std::isinf(lambda_s)) return 1.0;
    if (!(lambda_s > 0.0)) throw input_error("kappa: lambda_s must be positive");
    return 1.0 / std::sqrt(1.0 + RobustConstants::xi_sq / lambda_s);
}

// E[sigma(x)] for x ~ N(mu, 1/lambda_s), approximated as sigma(kappa * mu).
inline double robust_sigmoid_mean(double mu, double lambda_s) {
    return sigmoid(kappa(lambda_s) * mu);
}

// The working variance approximation: Var[sigma(x)] ~ 1/lambda_s.
inline double robust_sigmoid_var(double mu, double lambda_s) {
    (void)mu;
    if (std::isinf(lambda_s)) return 0.0;
    if (!(lambda_s > 0.0)) throw input_error("robust_sigmoid_var: lambda_s must be positive");
    return 1.0 / lambda_s;
}

// Diagnostic variant: the full moment-matched expression
// sigma(rho1 (mu + rho0) / sqrt(1 + xi^2 rho1^2 / lambda_s)) - E[sigma(x)]^2.
inline double robust_sigmoid_var_full(double mu, double lambda_s) {
    const double inv = std::isinf(lambda_s) ? 0.0 : 1.0 / lambda_s;
    const double e = robust_sigmoid_mean(mu, lambda_s);
    const double r1 = RobustConstants::rho_1;
    const double num = r1 * (mu + RobustConstants::rho_0);
    return sigmoid(num / std::sqrt(1.0 + RobustConstants::xi_sq * r1 * r1 * inv)) - e * e;
}

// Scale used by the tanh counterpart: tanh(x) = 2 sigma(2x) - 1, so the
// noisy mean is 2 sigma(mu (1/4 + xi^2/lambda_s)^(-1/2)) - 1.
inline double robust_tanh_scale(double lambda_s) {
    if (std::isinf(lambda_s)) return 2.0;
    if (!(lambda_s > 0.0)) throw input_error("robust_tanh_scale: lambda_s must be positive");
    return 1.0 / std::sqrt(0.25 + RobustConstants::xi_sq / lambda_s);
}

inline double robust_tanh_mean(double mu, double lambda_s) {
    return 2.0 * sigmoid(robust_tanh_scale(lambda_s) * mu) - 1.0;
}

// ---- the recurrent cell -----------------------------------------------------

struct GateParams {
    Matrix input_w;  // K_W x K_W, applied to the step input embedding
    Matrix recur_w;  // K_W x K_W, applied to the previous output state
    Vector bias;     // K_W
};

// All weights of one recurrent network: embedding plus candidate and the
// three gates. Gradients reuse the same layout (see zeros_like).
struct RrnParams {
    Matrix embedding;  // K_W x S
    GateParams candidate, input_gate, forget_gate, output_gate;
    double lambda_s = std::numeric_limits<double>::infinity();
    bool sigma_candidate = false;  // use sigma instead of tanh for the candidate

    std::size_t state_dim() const { return embedding.rows; }
    std::size_t vocab_size() const { return embedding.cols; }

    template <typename F>
    void for_each_tensor(F&& f) {
        f("embedding", embedding.data);
        for (auto* g : {&candidate, &input_gate, &forget_gate, &output_gate}) {
            f("input_w", g->input_w.data);
            f("recur_w", g->recur_w.data);
            f("bias", g->bias);
        }
    }

    // Entries N(0, 1/K_W); biases zero except the forget gate at one.
    static RrnParams init(std::size_t k_w, std::size_t vocab, double lambda_s,
                          bool sigma_candidate, Rng& rng) {
        const double std = 1.0 / std::sqrt(static_cast<double>(k_w));
        auto gate = [&] {
            return GateParams{Matrix::gaussian(k_w, k_w, std, rng),
                              Matrix::gaussian(k_w, k_w, std, rng), zeros(k_w)};
        };
        RrnParams p;
        p.embedding = Matrix::gaussian(k_w, vocab, std, rng);
        p.candidate = gate();
        p.input_gate = gate();
        p.forget_gate = gate();
        p.output_gate = gate();
        p.forget_gate.bias.assign(k_w, 1.0);
        p.lambda_s = lambda_s;
        p.sigma_candidate = sigma_candidate;
        return p;
    }

    static RrnParams zeros_like(const RrnParams& p) {
        auto gate = [&] {
            return GateParams{Matrix(p.state_dim(), p.state_dim()),
                              Matrix(p.state_dim(), p.state_dim()), zeros(p.state_dim())};
        };
        RrnParams g;
        g.embedding = Matrix(p.state_dim(), p.vocab_size());
        g.candidate = gate();
        g.input_gate = gate();
        g.forget_gate = gate();
        g.output_gate = gate();
        g.lambda_s = p.lambda_s;
        g.sigma_candidate = p.sigma_candidate;
        return g;
    }
};

// Mean state of one step: cached input embedding, the four preactivation
// means, and the resulting cell/output means.
struct RrnState {
    Vector x;           // input embedding mean
    Vector cand_pre;    // candidate preactivation
    Vector in_pre, forget_pre, out_pre;
    Vector s;           // cell state mean
    Vector h;           // output state mean

    static RrnState zero(std::size_t k_w) {
        RrnState st;
        st.x = zeros(k_w);
        st.cand_pre = zeros(k_w);
        st.in_pre = zeros(k_w);
        st.forget_pre = zeros(k_w);
        st.out_pre = zeros(k_w);
        st.s = zeros(k_w);
        st.h = zeros(k_w);
        return st;
    }
};

inline Vector embedding_column(const RrnParams& p, int word_id) {
    if (word_id < 0 || static_cast<std::size_t>(word_id) >= p.vocab_size())
        throw input_error("embedding lookup: word id out of range");
    Vector x(p.state_dim());
    for (std::size_t r = 0; r < p.state_dim(); ++r)
        x[r] = p.embedding(r, static_cast<std::size_t>(word_id));
    return x;
}

// One mean-propagation step. Gate preactivations use the previous output
// state as the recurrent input; cell and output means chain the robust
// nonlinearities elementwise.
inline RrnState rrn_step(const Vector& x, const RrnState& prev, const RrnParams& p) {
    const std::size_t k = p.state_dim();
    if (x.size() != k || prev.h.size() != k || prev.s.size() != k)
        throw input_error("rrn_step: dimension mismatch");

    RrnState st;
    st.x = x;
    auto preact = [&](const GateParams& g, Vector& out) {
        out = g.bias;
        matvec_add(g.input_w, x, out);
        matvec_add(g.recur_w, prev.h, out);
    };
    preact(p.candidate, st.cand_pre);
    preact(p.input_gate, st.in_pre);
    preact(p.forget_gate, st.forget_pre);
    preact(p.output_gate, st.out_pre);

    const double ks = kappa(p.lambda_s);
    const double ct = robust_tanh_scale(p.lambda_s);
    st.s.resize(k);
    st.h.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double f = sigmoid(ks * st.forget_pre[i]);
        const double in = sigmoid(ks * st.in_pre[i]);
        const double cand = p.sigma_candidate ? sigmoid(ks * st.cand_pre[i])
                                              : 2.0 * sigmoid(ct * st.cand_pre[i]) - 1.0;
        st.s[i] = f * prev.s[i] + in * cand;
        const double o = sigmoid(ks * st.out_pre[i]);
        st.h[i] = (2.0 * sigmoid(ct * st.s[i]) - 1.0) * o;
    }
    return st;
}

// Generation-time sampling of the cell: every latent is drawn from its
// Gaussian at precision lambda_s (plain sigma/tanh apply to the drawn
// values). Learning never uses this path; the noiseless limit coincides
// with rrn_step.
inline RrnState rrn_step_sampled(const Vector& x_mean, const RrnState& prev, const RrnParams& p,
                                 Rng& rng) {
    const std::size_t k = p.state_dim();
    if (x_mean.size() != k || prev.h.size() != k || prev.s.size() != k)
        throw input_error("rrn_step_sampled: dimension mismatch");
    const double sd = std::isinf(p.lambda_s) ? 0.0 : 1.0 / std::sqrt(p.lambda_s);
    auto noisy = [&](double v) { return sd == 0.0 ? v : v + sd * rng.normal(); };

    RrnState st;
    st.x.resize(k);
    for (std::size_t i = 0; i < k; ++i) st.x[i] = noisy(x_mean[i]);
    auto preact = [&](const GateParams& g, Vector& out) {
        out = g.bias;
        matvec_add(g.input_w, st.x, out);
        matvec_add(g.recur_w, prev.h, out);
        for (double& v : out) v = noisy(v);
    };
    preact(p.candidate, st.cand_pre);
    preact(p.input_gate, st.in_pre);
    preact(p.forget_gate, st.forget_pre);
    preact(p.output_gate, st.out_pre);
    st.s.resize(k);
    st.h.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double cand = p.sigma_candidate ? sigmoid(st.cand_pre[i]) : std::tanh(st.cand_pre[i]);
        st.s[i] = noisy(sigmoid(st.forget_pre[i]) * prev.s[i] + sigmoid(st.in_pre[i]) * cand);
        st.h[i] = noisy(std::tanh(st.s[i]) * sigmoid(st.out_pre[i]));
    }
    return st;
}

struct RrnBackpropResult {
    std::vector<Vector> dx;  // gradient w.r.t. each step's input embedding
    Vector dh0, ds0;         // gradient w.r.t. the initial state
};

// Exact reverse-mode differentiation of the chained rrn_step means.
// dh_ext/ds_ext carry the external gradient contributions arriving at each
// step's h and s (loss terms, pooling); parameter gradients accumulate into
// `grads`, which must have the same shapes as `p`.
inline RrnBackpropResult rrn_backprop(const RrnParams& p, const RrnState& init,
                                      const std::vector<RrnState>& states,
                                      const std::vector<Vector>& dh_ext,
                                      const std::vector<Vector>& ds_ext, RrnParams& grads) {
    const std::size_t k = p.state_dim();
    const std::size_t steps = states.size();
    if (dh_ext.size() != steps || ds_ext.size() != steps)
        throw input_error("rrn_backprop: upstream gradient count does not match cached steps");

    const double ks = kappa(p.lambda_s);
    const double ct = robust_tanh_scale(p.lambda_s);

    RrnBackpropResult res;
    res.dx.resize(steps);
    Vector dh_chain = zeros(k), ds_chain = zeros(k);
    Vector dcand(k), din(k), dforget(k), dout(k);

    for (std::size_t t = steps; t-- > 0;) {
        const RrnState& st = states[t];
        const Vector& prev_h = (t == 0) ? init.h : states[t - 1].h;
        const Vector& prev_s = (t == 0) ? init.s : states[t - 1].s;

        for (std::size_t i = 0; i < k; ++i) {
            const double dh = dh_ext[t][i] + dh_chain[i];

            const double o = sigmoid(ks * st.out_pre[i]);
            const double ts = 2.0 * sigmoid(ct * st.s[i]) - 1.0;
            dout[i] = dh * ts * (ks * o * (1.0 - o));
            const double ds_tot =
                ds_ext[t][i] + ds_chain[i] + dh * o * (0.5 * ct * (1.0 - ts * ts));

            const double f = sigmoid(ks * st.forget_pre[i]);
            const double in = sigmoid(ks * st.in_pre[i]);
            double cand, dcand_dz;
            if (p.sigma_candidate) {
                cand = sigmoid(ks * st.cand_pre[i]);
                dcand_dz = ks * cand * (1.0 - cand);
            } else {
                cand = 2.0 * sigmoid(ct * st.cand_pre[i]) - 1.0;
                dcand_dz = 0.5 * ct * (1.0 - cand * cand);
            }
            dforget[i] = ds_tot * prev_s[i] * (ks * f * (1.0 - f));
            din[i] = ds_tot * cand * (ks * in * (1.0 - in));
            dcand[i] = ds_tot * in * dcand_dz;
            ds_chain[i] = ds_tot * f;
        }

        Vector& dx = res.dx[t];
        dx = zeros(k);
        dh_chain = zeros(k);
        auto accumulate = [&](const GateParams& g, GateParams& gg, const Vector& dpre) {
            add_outer(gg.input_w, dpre, st.x);
            add_outer(gg.recur_w, dpre, prev_h);
            axpy(1.0, dpre, gg.bias);
            matTvec_add(g.input_w, dpre, dx);
            matTvec_add(g.recur_w, dpre, dh_chain);
        };
        accumulate(p.candidate, grads.candidate, dcand);
        accumulate(p.input_gate, grads.input_gate, din);
        accumulate(p.forget_gate, grads.forget_gate, dforget);
        accumulate(p.output_gate, grads.output_gate, dout);
    }

    res.dh0 = std::move(dh_chain);
    res.ds0 = std::move(ds_chain);
    return res;
}

}  // namespace crae
