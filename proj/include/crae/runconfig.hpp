#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crae/common.hpp"
#include "crae/eval.hpp"
#include "crae/model.hpp"

namespace crae {

// Plain-text key=value run configuration. Everything that affects results
// lives here (the CLI only adds paths and verbosity); unknown keys are
// rejected so typos cannot silently fall back to defaults.
struct RunConfig {
    TrainConfig train;
    EvalConfig eval;
    SplitSpec split;
    int min_count = 1;
    uint64_t eval_repeats = 1;
    uint64_t max_len = 30;
    uint64_t top_m = 10;
    bool eval_generation = false;

    std::string corpus_file, ratings_file, vocab_file, checkpoint_file;
    std::string log_file, metrics_file, output_file;

    std::set<std::string> provided;

    bool has(const std::string& key) const { return provided.count(key) > 0; }

    void require_path(const std::string& key, const std::string& value) const {
        if (value.empty()) throw input_error("config: missing required key '" + key + "'");
    }

    void require_input_file(const std::string& key, const std::string& value) const {
        require_path(key, value);
        if (!std::filesystem::exists(value))
            throw input_error("config: " + key + " does not exist: " + value);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw input_error("");
        return d;
    } catch (...) {
        throw input_error("config: bad number for " + key + ": '" + v + "'");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw input_error("");
        return n;
    } catch (...) {
        throw input_error("config: bad integer for " + key + ": '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw input_error("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(static_cast<int>(parse_u64(key, cur)));
            cur.clear();
        }
    };
    for (char c : v) {
        if (c == ',')
            flush();
        else if (c != ' ')
            cur.push_back(c);
    }
    flush();
    if (out.empty()) throw input_error("config: empty list for " + key);
    return out;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw input_error(path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (cfg.provided.count(key))
            throw input_error(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        cfg.provided.insert(key);

        using namespace detail;
        if (key == "lambda_u") cfg.train.lambda_u = parse_double(key, value);
        else if (key == "lambda_v") cfg.train.lambda_v = parse_double(key, value);
        else if (key == "lambda_w") cfg.train.lambda_w = parse_double(key, value);
        else if (key == "lambda_s") cfg.train.lambda_s = parse_double(key, value);
        else if (key == "alpha") cfg.train.alpha = parse_double(key, value);
        else if (key == "beta") cfg.train.beta = parse_double(key, value);
        else if (key == "denoise_rate") cfg.train.denoise_rate = parse_double(key, value);
        else if (key == "learning_rate") cfg.train.learning_rate = parse_double(key, value);
        else if (key == "epochs") cfg.train.epochs = parse_u64(key, value);
        else if (key == "minibatch_size") cfg.train.minibatch_size = parse_u64(key, value);
        else if (key == "seed") cfg.train.seed = parse_u64(key, value);
        else if (key == "beta_a") cfg.train.pool.a = parse_double(key, value);
        else if (key == "beta_b") cfg.train.pool.b = parse_double(key, value);
        else if (key == "learn_a") cfg.train.pool.learn_a = parse_bool(key, value);
        else if (key == "K") cfg.train.repr_dim = parse_u64(key, value);
        else if (key == "K_W") cfg.train.state_dim = parse_u64(key, value);
        else if (key == "mode") cfg.train.mode = train_mode_from_string(value);
        else if (key == "resample_per_epoch") cfg.train.resample_per_epoch = parse_bool(key, value);
        else if (key == "sigma_candidate") cfg.train.sigma_candidate = parse_bool(key, value);
        else if (key == "feed_previous") cfg.train.feed_previous = parse_bool(key, value);
        else if (key == "workers") cfg.train.workers = parse_u64(key, value);
        else if (key == "content_holdout") cfg.train.content_holdout = parse_double(key, value);
        else if (key == "P") cfg.split.train_per_user = static_cast<int>(parse_u64(key, value));
        else if (key == "split_seed") cfg.split.seed = parse_u64(key, value);
        else if (key == "recall_cutoffs") cfg.eval.recall_cutoffs = parse_int_list(key, value);
        else if (key == "map_cutoff") cfg.eval.map_cutoff = static_cast<int>(parse_u64(key, value));
        else if (key == "bleu_max_n") cfg.eval.bleu_max_n = static_cast<int>(parse_u64(key, value));
        else if (key == "eval_repeats") cfg.eval_repeats = parse_u64(key, value);
        else if (key == "eval_generation") cfg.eval_generation = parse_bool(key, value);
        else if (key == "min_count") cfg.min_count = static_cast<int>(parse_u64(key, value));
        else if (key == "max_len") cfg.max_len = parse_u64(key, value);
        else if (key == "top_m") cfg.top_m = parse_u64(key, value);
        else if (key == "corpus_file") cfg.corpus_file = value;
        else if (key == "ratings_file") cfg.ratings_file = value;
        else if (key == "vocab_file") cfg.vocab_file = value;
        else if (key == "checkpoint_file") cfg.checkpoint_file = value;
        else if (key == "log_file") cfg.log_file = value;
        else if (key == "metrics_file") cfg.metrics_file = value;
        else if (key == "output_file") cfg.output_file = value;
        else
            throw input_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    cfg.eval.split_p = cfg.split.train_per_user;
    return cfg;
}

}  // namespace crae
