#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "crae/common.hpp"
#include "crae/corpus.hpp"
#include "crae/rng.hpp"

namespace crae {

// Clustered synthetic recommendation data: items in a cluster share a token
// pool (with a distinctive lead token) and users prefer items of one cluster.
struct SynthSpec {
    int clusters = 5;
    int users = 50;
    int items = 60;
    int vocab = 80;
    int min_len = 4;
    int max_len = 10;
    int min_pos = 8;   // positives per user
    int max_pos = 12;
    double in_cluster_token = 0.85;
    double in_cluster_rating = 0.85;
    uint64_t seed = 42;

    void validate() const {
        if (clusters < 1 || users < 1 || items < 1) throw input_error("synth: sizes must be >= 1");
        if (vocab < 2 * clusters) throw input_error("synth: vocabulary too small for clusters");
        if (min_len < 1 || max_len < min_len) throw input_error("synth: bad length range");
        if (min_pos < 1 || max_pos < min_pos) throw input_error("synth: bad positives range");
    }
};

struct SynthData {
    std::vector<std::vector<std::string>> docs;  // per item
    RatingMatrix ratings;
};

inline std::string synth_token(int t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%02d", t);
    return buf;
}

inline SynthData make_synthetic(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SynthData data;
    data.docs.resize(static_cast<std::size_t>(spec.items));
    data.ratings = RatingMatrix(spec.users, spec.items);

    // token pools: each cluster owns an equal slice, the tail is shared
    const int per_cluster = spec.vocab / spec.clusters - 2;  // leave a shared pool
    const int owned = per_cluster * spec.clusters;
    auto cluster_token = [&](int c, int k) { return c * per_cluster + k; };

    for (int j = 0; j < spec.items; ++j) {
        const int c = j % spec.clusters;
        const int len = rng.uniform_int(spec.min_len, spec.max_len);
        auto& doc = data.docs[static_cast<std::size_t>(j)];
        doc.push_back(synth_token(cluster_token(c, 0)));  // cluster marker
        for (int t = 1; t < len; ++t) {
            int tok;
            if (rng.uniform() < spec.in_cluster_token)
                tok = cluster_token(c, rng.uniform_int(0, per_cluster - 1));
            else
                tok = owned + rng.uniform_int(0, spec.vocab - owned - 1);
            doc.push_back(synth_token(tok));
        }
    }

    for (int i = 0; i < spec.users; ++i) {
        const int c = i % spec.clusters;
        std::vector<int> own, other;
        for (int j = 0; j < spec.items; ++j)
            (j % spec.clusters == c ? own : other).push_back(j);
        // deterministic shuffles
        for (std::size_t k = own.size(); k > 1; --k)
            std::swap(own[k - 1], own[rng.uniform_below(k)]);
        for (std::size_t k = other.size(); k > 1; --k)
            std::swap(other[k - 1], other[rng.uniform_below(k)]);
        const int n = rng.uniform_int(spec.min_pos, spec.max_pos);
        std::size_t oi = 0, xi = 0;
        for (int k = 0; k < n; ++k) {
            if ((rng.uniform() < spec.in_cluster_rating && oi < own.size()) || xi >= other.size())
                data.ratings.add(i, own[oi++]);
            else
                data.ratings.add(i, other[xi++]);
        }
    }
    return data;
}

inline void write_synthetic_files(const SynthData& data, const std::string& corpus_path,
                                  const std::string& ratings_path) {
    std::ofstream corpus(corpus_path, std::ios::binary);
    if (!corpus) throw input_error("cannot write corpus file: " + corpus_path);
    for (std::size_t j = 0; j < data.docs.size(); ++j) {
        corpus << j << '\t';
        for (std::size_t t = 0; t < data.docs[j].size(); ++t) {
            if (t > 0) corpus << ' ';
            corpus << data.docs[j][t];
        }
        corpus << '\n';
    }
    std::ofstream ratings(ratings_path, std::ios::binary);
    if (!ratings) throw input_error("cannot write ratings file: " + ratings_path);
    for (int u = 0; u < data.ratings.n_users; ++u)
        for (int j : data.ratings.user_items[static_cast<std::size_t>(u)])
            ratings << u << '\t' << j << '\n';
}

}  // namespace crae
