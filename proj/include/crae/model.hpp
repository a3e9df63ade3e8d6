#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "crae/betapool.hpp"
#include "crae/cf.hpp"
#include "crae/common.hpp"
#include "crae/corpus.hpp"
#include "crae/drae.hpp"
#include "crae/rng.hpp"

namespace crae {

enum class TrainMode : uint32_t {
    full = 0,          // joint training as configured
    lambda_s_inf = 1,  // noiseless limit: nonlinearities degenerate to sigma/tanh
    two_step = 2,      // DRAE trained without the rating coupling, factors fit afterwards
};

inline std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::full: return "full";
        case TrainMode::lambda_s_inf: return "lambda_s_inf";
        case TrainMode::two_step: return "two_step";
    }
    throw input_error("unknown train mode");
}

inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "full") return TrainMode::full;
    if (s == "lambda_s_inf") return TrainMode::lambda_s_inf;
    if (s == "two_step") return TrainMode::two_step;
    throw input_error("unknown mode '" + s + "' (expected full, lambda_s_inf or two_step)");
}

struct TrainConfig {
    double lambda_u = 0.1;
    double lambda_v = 10.0;
    double lambda_w = 1e-4;
    double lambda_s = 1e2;  // may be +inf
    double alpha = 1.0;     // confidence on positives
    double beta = 0.01;     // confidence elsewhere
    double denoise_rate = 0.4;
    double learning_rate = 0.05;
    uint64_t epochs = 80;
    uint64_t minibatch_size = 16;
    uint64_t seed = 1;
    BetaPoolConfig pool;  // defaults to the bottleneck-peaked setting
    uint64_t repr_dim = 50;    // K
    uint64_t state_dim = 100;  // K_W
    TrainMode mode = TrainMode::full;
    bool resample_per_epoch = true;
    bool sigma_candidate = false;
    bool feed_previous = false;
    uint64_t workers = 0;  // 0 = all hardware threads
    double content_holdout = 0.0;  // fraction of items trained without content

    void validate() const {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0)) throw input_error(std::string("config: ") + name + " must be positive");
        };
        pos(lambda_u, "lambda_u");
        pos(lambda_v, "lambda_v");
        pos(lambda_w, "lambda_w");
        if (!(lambda_s > 0.0)) throw input_error("config: lambda_s must be positive (or inf)");
        ConfidenceRule{alpha, beta}.validate();
        if (!(denoise_rate >= 0.0 && denoise_rate <= 1.0))
            throw input_error("config: denoise_rate outside [0, 1]");
        pos(learning_rate, "learning_rate");
        if (epochs < 1) throw input_error("config: epochs must be >= 1");
        if (minibatch_size < 1) throw input_error("config: minibatch_size must be >= 1");
        if (repr_dim < 1 || state_dim < 1) throw input_error("config: dimensions must be >= 1");
        pool.validate();
        if (!(content_holdout >= 0.0 && content_holdout < 1.0))
            throw input_error("config: content_holdout outside [0, 1)");
    }

    double effective_lambda_s() const {
        return mode == TrainMode::lambda_s_inf ? std::numeric_limits<double>::infinity()
                                               : lambda_s;
    }

    ConfidenceRule confidence() const { return ConfidenceRule{alpha, beta}; }
};

// Everything a checkpoint holds: the full training state.
struct Model {
    Vocabulary vocab;
    DraeParams params;
    LatentFactors factors;
    TrainConfig config;
    uint64_t epoch = 0;
    Rng rng;

    int n_users() const { return static_cast<int>(factors.users.size()); }
    int n_items() const { return static_cast<int>(factors.items.size()); }
};

inline Model init_model(Vocabulary vocab, int n_users, int n_items, const TrainConfig& config) {
    config.validate();
    Model m;
    m.vocab = std::move(vocab);
    m.config = config;
    m.rng = Rng(config.seed);
    m.params = DraeParams::init(config.repr_dim, config.state_dim,
                                static_cast<std::size_t>(m.vocab.size()),
                                config.effective_lambda_s(), config.sigma_candidate,
                                config.feed_previous, m.rng);
    m.factors = LatentFactors::init(static_cast<std::size_t>(n_users),
                                    static_cast<std::size_t>(n_items), config.repr_dim, 0.1,
                                    m.rng);
    return m;
}

}  // namespace crae
