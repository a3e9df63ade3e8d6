#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "crae/betapool.hpp"
#include "crae/common.hpp"
#include "crae/corpus.hpp"
#include "crae/linalg.hpp"
#include "crae/rng.hpp"
#include "crae/rrn.hpp"

namespace crae {

// Compression/decompression pair linking the encoder's final (h, s) to the
// decoder's initial state through the K-dimensional representation theta.
// compress_w/compress_b are shared with the pooled item encoding gamma.
struct BottleneckParams {
    Matrix compress_w;  // K x 2K_W
    Vector compress_b;  // K
    Matrix expand_w;    // 2K_W x K
    Vector expand_b;    // 2K_W

    std::size_t repr_dim() const { return compress_w.rows; }

    template <typename F>
    void for_each_tensor(F&& f) {
        f("compress_w", compress_w.data);
        f("compress_b", compress_b);
        f("expand_w", expand_w.data);
        f("expand_b", expand_b);
    }
};

struct OutputParams {
    Matrix word_w;  // S x K_W
    Vector word_b;  // S

    template <typename F>
    void for_each_tensor(F&& f) {
        f("word_w", word_w.data);
        f("word_b", word_b);
    }
};

// Every weight of the autoencoder (the joint objective's weight collection).
struct DraeParams {
    RrnParams encoder, decoder;
    BottleneckParams bottleneck;
    OutputParams output;
    bool feed_previous = false;  // decoder consumes the previous word; default: no inputs

    std::size_t state_dim() const { return encoder.state_dim(); }
    std::size_t repr_dim() const { return bottleneck.repr_dim(); }
    std::size_t vocab_size() const { return encoder.vocab_size(); }

    template <typename F>
    void for_each_tensor(F&& f) {
        encoder.for_each_tensor(f);
        decoder.for_each_tensor(f);
        bottleneck.for_each_tensor(f);
        output.for_each_tensor(f);
    }

    static DraeParams init(std::size_t k, std::size_t k_w, std::size_t vocab, double lambda_s,
                           bool sigma_candidate, bool feed_previous, Rng& rng) {
        const double std = 1.0 / std::sqrt(static_cast<double>(k_w));
        DraeParams p;
        p.encoder = RrnParams::init(k_w, vocab, lambda_s, sigma_candidate, rng);
        p.decoder = RrnParams::init(k_w, vocab, lambda_s, sigma_candidate, rng);
        p.bottleneck.compress_w = Matrix::gaussian(k, 2 * k_w, std, rng);
        p.bottleneck.compress_b = zeros(k);
        p.bottleneck.expand_w = Matrix::gaussian(2 * k_w, k, std, rng);
        p.bottleneck.expand_b = zeros(2 * k_w);
        p.output.word_w = Matrix::gaussian(vocab, k_w, std, rng);
        p.output.word_b = zeros(vocab);
        p.feed_previous = feed_previous;
        return p;
    }

    static DraeParams zeros_like(const DraeParams& p) {
        DraeParams g;
        g.encoder = RrnParams::zeros_like(p.encoder);
        g.decoder = RrnParams::zeros_like(p.decoder);
        g.bottleneck.compress_w = Matrix(p.bottleneck.compress_w.rows, p.bottleneck.compress_w.cols);
        g.bottleneck.compress_b = zeros(p.bottleneck.compress_b.size());
        g.bottleneck.expand_w = Matrix(p.bottleneck.expand_w.rows, p.bottleneck.expand_w.cols);
        g.bottleneck.expand_b = zeros(p.bottleneck.expand_b.size());
        g.output.word_w = Matrix(p.output.word_w.rows, p.output.word_w.cols);
        g.output.word_b = zeros(p.output.word_b.size());
        g.feed_previous = p.feed_previous;
        return g;
    }

    std::size_t n_params() {
        std::size_t n = 0;
        for_each_tensor([&](const char*, const std::vector<double>& t) { n += t.size(); });
        return n;
    }

    Vector flatten() {
        Vector out;
        for_each_tensor([&](const char*, const std::vector<double>& t) {
            out.insert(out.end(), t.begin(), t.end());
        });
        return out;
    }

    void set_from_flat(const Vector& flat) {
        std::size_t pos = 0;
        for_each_tensor([&](const char*, std::vector<double>& t) {
            std::copy(flat.begin() + pos, flat.begin() + pos + t.size(), t.begin());
            pos += t.size();
        });
        if (pos != flat.size()) throw input_error("set_from_flat: size mismatch");
    }
};

// Cached forward pass over one sequence pair.
struct DraeTrace {
    std::vector<RrnState> encoder_states;  // one per input word
    Vector theta;                          // bottleneck representation
    RrnState decoder_init;                 // decompressed (h, s), not pooled
    std::vector<RrnState> decoder_states;  // one per reconstructed word
    std::vector<Vector> logits;            // per-step word scores (length S)
};

// Run the encoder over word ids from the zero state.
inline std::vector<RrnState> encode(const std::vector<int>& ids, const RrnParams& p) {
    if (ids.empty()) throw input_error("encode: empty sequence");
    std::vector<RrnState> states;
    states.reserve(ids.size());
    RrnState prev = RrnState::zero(p.state_dim());
    for (int id : ids) {
        states.push_back(rrn_step(embedding_column(p, id), prev, p));
        prev = states.back();
    }
    return states;
}

// theta = W_1 (h_T; s_T) + b_1 (mean mode).
inline Vector compress(const Vector& h_last, const Vector& s_last, const BottleneckParams& bn) {
    if (h_last.size() * 2 != bn.compress_w.cols || s_last.size() != h_last.size())
        throw input_error("compress: dimension mismatch");
    Vector z = h_last;
    z.insert(z.end(), s_last.begin(), s_last.end());
    Vector theta = bn.compress_b;
    matvec_add(bn.compress_w, z, theta);
    return theta;
}

// (h_init; s_init) = W_2 tanh(theta) + b_2, split into halves.
inline std::pair<Vector, Vector> decompress(const Vector& theta, const BottleneckParams& bn) {
    if (theta.size() != bn.expand_w.cols) throw input_error("decompress: dimension mismatch");
    Vector t(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) t[i] = std::tanh(theta[i]);
    Vector d = bn.expand_b;
    matvec_add(bn.expand_w, t, d);
    const std::size_t k_w = d.size() / 2;
    return {Vector(d.begin(), d.begin() + k_w), Vector(d.begin() + k_w, d.end())};
}

inline Vector word_logits(const Vector& h, const OutputParams& out) {
    Vector l = out.word_b;
    matvec_add(out.word_w, h, l);
    return l;
}

// Unroll the decoder for `steps` steps from `init`. With no feed ids the
// decoder has no input words (zero embeddings); otherwise step k consumes
// the embedding of feed_ids[k-1].
inline std::pair<std::vector<RrnState>, std::vector<Vector>> decode_teacher_forced(
    const RrnState& init, std::size_t steps, const RrnParams& dec, const OutputParams& out,
    const std::vector<int>* feed_ids = nullptr) {
    if (steps < 1) throw input_error("decode_teacher_forced: need at least one step");
    std::vector<RrnState> states;
    std::vector<Vector> logits;
    states.reserve(steps);
    logits.reserve(steps);
    const Vector zero_x = zeros(dec.state_dim());
    RrnState prev = init;
    for (std::size_t k = 0; k < steps; ++k) {
        const Vector x = (feed_ids && k > 0) ? embedding_column(dec, (*feed_ids)[k - 1]) : zero_x;
        states.push_back(rrn_step(x, prev, dec));
        logits.push_back(word_logits(states.back().h, out));
        prev = states.back();
    }
    return {std::move(states), std::move(logits)};
}

inline double log_sum_exp(const Vector& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

// Sum of per-step cross-entropies between softmax(logits) and the clean word.
inline double reconstruction_loss(const std::vector<Vector>& logits,
                                  const std::vector<int>& clean) {
    if (logits.size() != clean.size())
        throw input_error("reconstruction_loss: length mismatch");
    double loss = 0.0;
    for (std::size_t k = 0; k < clean.size(); ++k)
        loss += log_sum_exp(logits[k]) - logits[k][static_cast<std::size_t>(clean[k])];
    return loss;
}

inline double reconstruction_loss(const DraeTrace& trace, const std::vector<int>& clean) {
    return reconstruction_loss(trace.logits, clean);
}

// Full forward pass: encode the corrupted sequence, compress, decompress,
// decode the clean one teacher-forced.
inline DraeTrace drae_forward(const std::vector<int>& corrupted, const std::vector<int>& clean,
                              const DraeParams& p) {
    if (corrupted.size() != clean.size())
        throw input_error("drae_forward: clean/corrupted length mismatch");
    DraeTrace trace;
    trace.encoder_states = encode(corrupted, p.encoder);
    const RrnState& last = trace.encoder_states.back();
    trace.theta = compress(last.h, last.s, p.bottleneck);
    auto [h0, s0] = decompress(trace.theta, p.bottleneck);
    trace.decoder_init = RrnState::zero(p.state_dim());
    trace.decoder_init.h = std::move(h0);
    trace.decoder_init.s = std::move(s0);
    auto [states, logits] =
        decode_teacher_forced(trace.decoder_init, clean.size(), p.decoder, p.output,
                              p.feed_previous ? &clean : nullptr);
    trace.decoder_states = std::move(states);
    trace.logits = std::move(logits);
    return trace;
}

// The 2T pooled vectors (h; s): encoder states then decoder states, skipping
// the bottleneck step between them.
inline std::vector<Vector> pooled_states(const DraeTrace& trace) {
    std::vector<Vector> out;
    out.reserve(trace.encoder_states.size() + trace.decoder_states.size());
    auto push = [&](const RrnState& st) {
        Vector v = st.h;
        v.insert(v.end(), st.s.begin(), st.s.end());
        out.push_back(std::move(v));
    };
    for (const auto& st : trace.encoder_states) push(st);
    for (const auto& st : trace.decoder_states) push(st);
    return out;
}

// gamma = tanh(W_1 * beta_pool(states) + b_1): the item's content encoding.
inline Vector item_gamma(const DraeTrace& trace, const BottleneckParams& bn,
                         const BetaPoolConfig& pool) {
    const Vector pooled = beta_pool(pooled_states(trace), pool.a, pool.b);
    Vector pre = bn.compress_b;
    matvec_add(bn.compress_w, pooled, pre);
    for (double& v : pre) v = std::tanh(v);
    return pre;
}

// Greedy decoding from theta; stops at eos or max_len, then collapses
// consecutive repeated words.
inline std::vector<int> generate(const Vector& theta, const DraeParams& p, int eos_id,
                                 std::size_t max_len) {
    if (max_len < 1) throw input_error("generate: max_len must be >= 1");
    auto [h0, s0] = decompress(theta, p.bottleneck);
    RrnState prev = RrnState::zero(p.state_dim());
    prev.h = std::move(h0);
    prev.s = std::move(s0);
    std::vector<int> words;
    const Vector zero_x = zeros(p.state_dim());
    int last = -1;
    for (std::size_t k = 0; k < max_len; ++k) {
        const Vector x = (p.feed_previous && last >= 0) ? embedding_column(p.decoder, last) : zero_x;
        prev = rrn_step(x, prev, p.decoder);
        const Vector l = word_logits(prev.h, p.output);
        const int id = static_cast<int>(
            std::max_element(l.begin(), l.end()) - l.begin());  // ties: lowest id
        if (id == eos_id) break;
        if (words.empty() || words.back() != id) words.push_back(id);
        last = id;
    }
    return words;
}

// Stochastic decode: latents are sampled at precision lambda_s instead of
// propagating means (words stay greedy-argmax). With lambda_s infinite this
// coincides with `generate`.
inline std::vector<int> generate_sampled(const Vector& theta, const DraeParams& p, int eos_id,
                                         std::size_t max_len, Rng& rng) {
    if (max_len < 1) throw input_error("generate_sampled: max_len must be >= 1");
    const double sd =
        std::isinf(p.decoder.lambda_s) ? 0.0 : 1.0 / std::sqrt(p.decoder.lambda_s);
    Vector noisy_theta = theta;
    for (double& v : noisy_theta)
        if (sd != 0.0) v += sd * rng.normal();
    auto [h0, s0] = decompress(noisy_theta, p.bottleneck);
    RrnState prev = RrnState::zero(p.state_dim());
    prev.h = std::move(h0);
    prev.s = std::move(s0);
    for (double& v : prev.h)
        if (sd != 0.0) v += sd * rng.normal();
    for (double& v : prev.s)
        if (sd != 0.0) v += sd * rng.normal();
    std::vector<int> words;
    const Vector zero_x = zeros(p.state_dim());
    int last = -1;
    for (std::size_t k = 0; k < max_len; ++k) {
        const Vector x = (p.feed_previous && last >= 0) ? embedding_column(p.decoder, last) : zero_x;
        prev = rrn_step_sampled(x, prev, p.decoder, rng);
        const Vector l = word_logits(prev.h, p.output);
        const int id = static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
        if (id == eos_id) break;
        if (words.empty() || words.back() != id) words.push_back(id);
        last = id;
    }
    return words;
}

struct DraeLosses {
    double reconstruction = 0.0;
    double coupling = 0.0;        // (lambda_v/2) ||v - gamma||^2
    double weight_penalty = 0.0;  // (lambda_w/2) ||W+||^2
    double total() const { return reconstruction + coupling + weight_penalty; }
};

// Loss and exact gradients for one sequence pair. When `v_target` is given,
// the coupling term ties gamma to the item factor; gradients flow through
// the pooled states of both recurrences. Gradients accumulate into `grads`.
inline DraeLosses drae_loss_and_grads(const SequencePair& pair, DraeParams& params,
                                      double lambda_w, double lambda_v,
                                      const BetaPoolConfig& pool, const Vector* v_target,
                                      DraeParams& grads, bool include_weight_penalty = true) {
    const std::size_t k_w = params.state_dim();
    const std::size_t seq_len = pair.clean.size();
    DraeTrace trace = drae_forward(pair.corrupted, pair.clean, params);

    DraeLosses losses;
    losses.reconstruction = reconstruction_loss(trace, pair.clean);

    // upstream gradients on every h/s mean of both recurrences
    std::vector<Vector> enc_dh(seq_len, zeros(k_w)), enc_ds(seq_len, zeros(k_w));
    std::vector<Vector> dec_dh(seq_len, zeros(k_w)), dec_ds(seq_len, zeros(k_w));

    // softmax cross-entropy backward into the output layer
    for (std::size_t k = 0; k < seq_len; ++k) {
        const Vector& l = trace.logits[k];
        const double lse = log_sum_exp(l);
        Vector dl(l.size());
        for (std::size_t w = 0; w < l.size(); ++w) dl[w] = std::exp(l[w] - lse);
        dl[static_cast<std::size_t>(pair.clean[k])] -= 1.0;
        add_outer(grads.output.word_w, dl, trace.decoder_states[k].h);
        axpy(1.0, dl, grads.output.word_b);
        matTvec_add(params.output.word_w, dl, dec_dh[k]);
    }

    // coupling term through gamma and the beta-pooled states
    if (v_target != nullptr && lambda_v != 0.0) {
        const std::vector<Vector> states = pooled_states(trace);
        const Vector w = pool_weights(seq_len, pool.a, pool.b);
        Vector pooled(2 * k_w, 0.0);
        for (std::size_t t = 0; t < states.size(); ++t) axpy(w[t], states[t], pooled);
        Vector gamma = params.bottleneck.compress_b;
        matvec_add(params.bottleneck.compress_w, pooled, gamma);
        for (double& v : gamma) v = std::tanh(v);

        Vector dpre(gamma.size());
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            const double diff = (*v_target)[i] - gamma[i];
            losses.coupling += 0.5 * lambda_v * diff * diff;
            dpre[i] = lambda_v * (gamma[i] - (*v_target)[i]) * (1.0 - gamma[i] * gamma[i]);
        }
        add_outer(grads.bottleneck.compress_w, dpre, pooled);
        axpy(1.0, dpre, grads.bottleneck.compress_b);
        Vector dpooled(2 * k_w, 0.0);
        matTvec_add(params.bottleneck.compress_w, dpre, dpooled);
        for (std::size_t t = 0; t < seq_len; ++t) {
            for (std::size_t i = 0; i < k_w; ++i) {
                enc_dh[t][i] += w[t] * dpooled[i];
                enc_ds[t][i] += w[t] * dpooled[k_w + i];
                dec_dh[t][i] += w[seq_len + t] * dpooled[i];
                dec_ds[t][i] += w[seq_len + t] * dpooled[k_w + i];
            }
        }
    }

    // decoder BPTT
    RrnBackpropResult dec_bp = rrn_backprop(params.decoder, trace.decoder_init,
                                            trace.decoder_states, dec_dh, dec_ds, grads.decoder);
    if (params.feed_previous) {
        for (std::size_t k = 1; k < seq_len; ++k) {
            const int id = pair.clean[k - 1];
            for (std::size_t r = 0; r < k_w; ++r)
                grads.decoder.embedding(r, static_cast<std::size_t>(id)) += dec_bp.dx[k][r];
        }
    }

    // bottleneck backward: decoder init -> theta -> encoder final state
    {
        Vector dd = dec_bp.dh0;
        dd.insert(dd.end(), dec_bp.ds0.begin(), dec_bp.ds0.end());
        Vector theta_tanh(trace.theta.size());
        for (std::size_t i = 0; i < trace.theta.size(); ++i)
            theta_tanh[i] = std::tanh(trace.theta[i]);
        add_outer(grads.bottleneck.expand_w, dd, theta_tanh);
        axpy(1.0, dd, grads.bottleneck.expand_b);
        Vector dtheta(trace.theta.size(), 0.0);
        matTvec_add(params.bottleneck.expand_w, dd, dtheta);
        for (std::size_t i = 0; i < dtheta.size(); ++i)
            dtheta[i] *= 1.0 - theta_tanh[i] * theta_tanh[i];

        const RrnState& last = trace.encoder_states.back();
        Vector z = last.h;
        z.insert(z.end(), last.s.begin(), last.s.end());
        add_outer(grads.bottleneck.compress_w, dtheta, z);
        axpy(1.0, dtheta, grads.bottleneck.compress_b);
        Vector dz(2 * k_w, 0.0);
        matTvec_add(params.bottleneck.compress_w, dtheta, dz);
        for (std::size_t i = 0; i < k_w; ++i) {
            enc_dh[seq_len - 1][i] += dz[i];
            enc_ds[seq_len - 1][i] += dz[k_w + i];
        }
    }

    // encoder BPTT and embedding scatter
    RrnBackpropResult enc_bp =
        rrn_backprop(params.encoder, RrnState::zero(k_w), trace.encoder_states, enc_dh, enc_ds,
                     grads.encoder);
    for (std::size_t t = 0; t < seq_len; ++t) {
        const int id = pair.corrupted[t];
        for (std::size_t r = 0; r < k_w; ++r)
            grads.encoder.embedding(r, static_cast<std::size_t>(id)) += enc_bp.dx[t][r];
    }

    if (include_weight_penalty && lambda_w != 0.0) {
        double sq = 0.0;
        params.for_each_tensor([&](const char*, std::vector<double>& t) {
            for (double v : t) sq += v * v;
        });
        losses.weight_penalty = 0.5 * lambda_w * sq;
        std::size_t pos = 0;
        const Vector flat = params.flatten();
        grads.for_each_tensor([&](const char*, std::vector<double>& t) {
            for (double& v : t) v += lambda_w * flat[pos++];
        });
    }
    return losses;
}

// Fraction of teacher-forced argmax hits over the clean sequence (clean
// input, no corruption).
inline double token_accuracy(const std::vector<int>& clean, const DraeParams& p) {
    DraeTrace trace = drae_forward(clean, clean, p);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < clean.size(); ++k) {
        const Vector& l = trace.logits[k];
        const int best = static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
        if (best == clean[k]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(clean.size());
}

}  // namespace crae
