#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "crae/betapool.hpp"
#include "crae/cf.hpp"
#include "crae/checkpoint.hpp"
#include "crae/common.hpp"
#include "crae/corpus.hpp"
#include "crae/drae.hpp"
#include "crae/model.hpp"

namespace crae {

// Gradient-norm clip for the recurrent weights.
inline constexpr double kGradClip = 5.0;

// Stateless seed mixing; epoch-level randomness (corruption, shuffling) is
// derived from (seed, epoch, salt) so a resumed run replays identically.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    uint64_t x = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xd1b54a32d192ed03ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Static-partition parallel map with a deterministic merge order.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(1, n));
    if (workers <= 1) {
        fn(0, 0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, w, lo, hi] { fn(w, lo, hi); });
    }
    for (auto& t : pool) t.join();
}

// Per-item clean sequences (indexed by item id; empty = no content) plus the
// training half of the rating split.
struct TrainData {
    std::vector<std::vector<int>> sequences;
    RatingMatrix ratings;
};

struct EpochLog {
    uint64_t epoch = 0;
    double recon_loss = 0.0;
    double coupling_loss = 0.0;
    double rating_term = 0.0;
    double joint_objective = 0.0;
    long wall_seconds = 0;
};

inline std::string log_header(const TrainConfig& c) {
    return "# crae training log\tmode=" + to_string(c.mode) +
           "\tseed=" + std::to_string(c.seed) +
           "\nepoch\trecon_loss\tcoupling_loss\trating_term\tjoint_objective\twall_seconds";
}

inline std::string format_log_line(const EpochLog& l) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%llu\t%.10g\t%.10g\t%.10g\t%.10g\t%ld",
                  static_cast<unsigned long long>(l.epoch), l.recon_loss, l.coupling_loss,
                  l.rating_term, l.joint_objective, l.wall_seconds);
    return buf;
}

// Deterministic choice of the items trained without content (generation
// protocol); derived from the config so checkpoints need not store it.
inline std::vector<bool> content_holdout_mask(std::size_t n_items, const TrainConfig& c) {
    std::vector<bool> mask(n_items, false);
    if (c.content_holdout <= 0.0) return mask;
    std::vector<std::size_t> ids(n_items);
    for (std::size_t j = 0; j < n_items; ++j) ids[j] = j;
    Rng rng(mix_seed(c.seed, 0x601d0u, 0));
    const std::size_t k = static_cast<std::size_t>(c.content_holdout * static_cast<double>(n_items));
    for (std::size_t i = 0; i < k && i < n_items; ++i) {
        const std::size_t pick = i + rng.uniform_below(n_items - i);
        std::swap(ids[i], ids[pick]);
        mask[ids[i]] = true;
    }
    return mask;
}

namespace detail {

struct ObjectiveParts {
    double rating_term = 0.0;
    double coupling = 0.0;  // (lambda_v/2) sum ||v_j - gamma_j||^2
};

inline ObjectiveParts objective_parts(const Model& m, const std::vector<Vector>& gammas,
                                      const RatingMatrix& train) {
    ObjectiveParts parts;
    const ConfidenceRule rule = m.config.confidence();
    const Matrix gram = crae::detail::scaled_gram(m.factors.items, 1.0);
    Vector tmp;
    double sq_all = 0.0;
    for (const auto& u : m.factors.users) {
        matvec(gram, u, tmp);
        sq_all += dot(tmp, u);
    }
    double term_pos = 0.0, sq_pos = 0.0;
    for (int u = 0; u < train.n_users; ++u)
        for (int j : train.user_items[static_cast<std::size_t>(u)]) {
            const double p = predict(m.factors, u, j);
            term_pos += 0.5 * rule.alpha * (1.0 - p) * (1.0 - p);
            sq_pos += p * p;
        }
    parts.rating_term = -term_pos - 0.5 * rule.beta * (sq_all - sq_pos);
    for (std::size_t j = 0; j < m.factors.items.size(); ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < gammas[j].size(); ++k) {
            const double diff = m.factors.items[j][k] - gammas[j][k];
            d += diff * diff;
        }
        parts.coupling += 0.5 * m.config.lambda_v * d;
    }
    return parts;
}

}  // namespace detail

// One joint epoch: resample corruptions, minibatch SGD on the network
// weights (reconstruction + coupling + weight prior), then the closed-form
// user/item sweeps, then the optional gradient step on the pooling shape a.
inline EpochLog train_one_epoch(Model& m, const TrainData& data) {
    const auto t_start = std::chrono::steady_clock::now();
    const TrainConfig& cfg = m.config;
    const std::size_t n_items = static_cast<std::size_t>(m.n_items());
    const std::vector<bool> holdout = content_holdout_mask(n_items, cfg);

    // items that participate in the DRAE phase this epoch
    std::vector<int> active;
    for (std::size_t j = 0; j < n_items; ++j)
        if (!data.sequences[j].empty() && !holdout[j]) active.push_back(static_cast<int>(j));
    if (active.empty()) throw input_error("train: no item has usable content");

    const uint64_t corruption_epoch = cfg.resample_per_epoch ? m.epoch : 0;
    std::vector<SequencePair> pairs(active.size());
    for (std::size_t idx = 0; idx < active.size(); ++idx) {
        const int j = active[idx];
        Rng rng(mix_seed(cfg.seed, corruption_epoch + 1, static_cast<uint64_t>(j) + 1));
        pairs[idx].item_id = j;
        pairs[idx].clean = data.sequences[static_cast<std::size_t>(j)];
        pairs[idx].corrupted = wildcard_corrupt(pairs[idx].clean, cfg.denoise_rate, m.vocab, rng);
    }

    // ---- network weight phase ----
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, m.epoch + 1, 0x5affUL));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_below(i)]);

    EpochLog log;
    log.epoch = m.epoch;
    const bool couple = cfg.mode != TrainMode::two_step;
    const std::size_t workers =
        cfg.workers == 0 ? std::thread::hardware_concurrency() : cfg.workers;

    for (std::size_t batch_lo = 0; batch_lo < order.size(); batch_lo += cfg.minibatch_size) {
        const std::size_t batch_hi =
            std::min(order.size(), batch_lo + static_cast<std::size_t>(cfg.minibatch_size));
        const std::size_t batch_n = batch_hi - batch_lo;

        const std::size_t lanes = std::min<std::size_t>(workers == 0 ? 1 : workers, batch_n);
        std::vector<DraeParams> lane_grads;
        std::vector<DraeLosses> lane_losses(std::max<std::size_t>(lanes, 1));
        lane_grads.reserve(std::max<std::size_t>(lanes, 1));
        for (std::size_t l = 0; l < std::max<std::size_t>(lanes, 1); ++l)
            lane_grads.push_back(DraeParams::zeros_like(m.params));

        parallel_chunks(batch_n, lanes, [&](std::size_t lane, std::size_t lo, std::size_t hi) {
            for (std::size_t b = lo; b < hi; ++b) {
                const SequencePair& pair = pairs[order[batch_lo + b]];
                const Vector* v_target =
                    couple ? &m.factors.items[static_cast<std::size_t>(pair.item_id)] : nullptr;
                const DraeLosses l =
                    drae_loss_and_grads(pair, m.params, 0.0, cfg.lambda_v, cfg.pool, v_target,
                                        lane_grads[lane], /*include_weight_penalty=*/false);
                lane_losses[lane].reconstruction += l.reconstruction;
                lane_losses[lane].coupling += l.coupling;
            }
        });

        // deterministic merge in lane order
        DraeParams& grads = lane_grads[0];
        for (std::size_t l = 1; l < lane_grads.size(); ++l) {
            std::size_t pos = 0;
            Vector flat;
            lane_grads[l].for_each_tensor([&](const char*, std::vector<double>& t) {
                flat.insert(flat.end(), t.begin(), t.end());
            });
            grads.for_each_tensor([&](const char*, std::vector<double>& t) {
                for (double& v : t) v += flat[pos++];
            });
            log.recon_loss += lane_losses[l].reconstruction;
            log.coupling_loss += lane_losses[l].coupling;
        }
        log.recon_loss += lane_losses[0].reconstruction;
        log.coupling_loss += lane_losses[0].coupling;

        if (!std::isfinite(lane_losses[0].reconstruction))
            throw numeric_error("train: non-finite reconstruction loss at epoch " +
                                std::to_string(m.epoch));

        // batch-mean gradient plus weight prior, clipped, one SGD step
        const double inv_n = 1.0 / static_cast<double>(batch_n);
        double sq = 0.0;
        {
            std::size_t pos = 0;
            Vector flat_params = m.params.flatten();
            grads.for_each_tensor([&](const char*, std::vector<double>& t) {
                for (double& v : t) {
                    v = v * inv_n + cfg.lambda_w * flat_params[pos++];
                    sq += v * v;
                }
            });
        }
        if (!std::isfinite(sq))
            throw numeric_error("train: non-finite gradient at epoch " + std::to_string(m.epoch));
        const double norm = std::sqrt(sq);
        const double scale = (norm > kGradClip) ? kGradClip / norm : 1.0;
        {
            Vector flat_grads;
            grads.for_each_tensor([&](const char*, std::vector<double>& t) {
                flat_grads.insert(flat_grads.end(), t.begin(), t.end());
            });
            std::size_t pos = 0;
            m.params.for_each_tensor([&](const char*, std::vector<double>& t) {
                for (double& v : t) v -= cfg.learning_rate * scale * flat_grads[pos++];
            });
        }
    }

    // ---- item encodings and the closed-form factor sweeps ----
    std::vector<Vector> gammas(n_items, zeros(cfg.repr_dim));
    std::vector<DraeTrace> traces(pairs.size());
    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        traces[idx] = drae_forward(pairs[idx].corrupted, pairs[idx].clean, m.params);
        gammas[static_cast<std::size_t>(pairs[idx].item_id)] =
            item_gamma(traces[idx], m.params.bottleneck, cfg.pool);
    }

    // block maximization must never decrease the joint objective given the
    // fresh gammas; a violation means the solver broke down
    auto cf_objective = [&] {
        const auto parts = detail::objective_parts(m, gammas, data.ratings);
        double user_prior = 0.0;
        for (const auto& u : m.factors.users) user_prior += 0.5 * cfg.lambda_u * sq_norm(u);
        return parts.rating_term - user_prior - parts.coupling;
    };
    const double before_sweep = cf_objective();
    update_users(m.factors, data.ratings, cfg.confidence(), cfg.lambda_u);
    const double after_users = cf_objective();
    update_items(m.factors, data.ratings, cfg.confidence(), cfg.lambda_v, gammas);
    const double after_items = cf_objective();
    const double tol = 1e-9 * (1.0 + std::fabs(before_sweep));
    if (after_users < before_sweep - tol || after_items < after_users - tol)
        throw numeric_error("train: factor sweep decreased the joint objective at epoch " +
                            std::to_string(m.epoch));

    if (cfg.pool.learn_a) {
        double grad_a = 0.0;
        for (std::size_t idx = 0; idx < pairs.size(); ++idx)
            grad_a += grad_loglik_wrt_a(pooled_states(traces[idx]),
                                        m.factors.items[static_cast<std::size_t>(
                                            pairs[idx].item_id)],
                                        m.params.bottleneck.compress_w,
                                        m.params.bottleneck.compress_b, cfg.lambda_v,
                                        m.config.pool.a, m.config.pool.b);
        m.config.pool.a = std::clamp(m.config.pool.a + cfg.learning_rate * grad_a, 1e-3, 1e9);
    }

    const auto parts = detail::objective_parts(m, gammas, data.ratings);
    log.rating_term = parts.rating_term;
    double user_prior = 0.0;
    for (const auto& u : m.factors.users) user_prior += 0.5 * cfg.lambda_u * sq_norm(u);
    log.joint_objective = parts.rating_term - user_prior - parts.coupling;

    ++m.epoch;
    log.wall_seconds = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
    return log;
}

inline void validate_coverage(const Model& m, const TrainData& data) {
    if (static_cast<int>(data.sequences.size()) != m.n_items())
        throw input_error("train: sequence table size does not match item count");
    if (data.ratings.n_users != m.n_users() || data.ratings.n_items != m.n_items())
        throw input_error("train: rating matrix shape does not match model factors");
    for (int u = 0; u < data.ratings.n_users; ++u)
        for (int j : data.ratings.user_items[static_cast<std::size_t>(u)])
            if (data.sequences[static_cast<std::size_t>(j)].empty())
                throw input_error("train: rated item " + std::to_string(j) + " has no content");
}

// Full training run: `epochs` joint epochs appended to the model's counter.
// Streams one tab-separated line per epoch to `log_out` when given.
inline std::vector<EpochLog> train_epochs(Model& m, const TrainData& data, uint64_t epochs,
                                          std::ostream* log_out = nullptr) {
    validate_coverage(m, data);
    std::vector<EpochLog> logs;
    logs.reserve(epochs);
    for (uint64_t e = 0; e < epochs; ++e) {
        logs.push_back(train_one_epoch(m, data));
        if (log_out) *log_out << format_log_line(logs.back()) << '\n' << std::flush;
    }
    return logs;
}

inline Model train(const Vocabulary& vocab, const TrainData& data, const TrainConfig& config,
                   std::ostream* log_out = nullptr) {
    Model m = init_model(vocab, data.ratings.n_users, data.ratings.n_items, config);
    if (log_out) *log_out << log_header(config) << '\n';
    train_epochs(m, data, config.epochs, log_out);
    return m;
}

}  // namespace crae
