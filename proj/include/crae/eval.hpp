#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "crae/cf.hpp"
#include "crae/common.hpp"
#include "crae/corpus.hpp"

namespace crae {

struct EvalConfig {
    std::vector<int> recall_cutoffs{50, 100, 150, 200, 250, 300};
    int map_cutoff = 500;
    int bleu_max_n = 4;
    int split_p = 1;  // echoed in reports

    void validate() const {
        for (int m : recall_cutoffs)
            if (m < 1) throw input_error("eval: recall cutoffs must be >= 1");
        if (map_cutoff < 1) throw input_error("eval: map cutoff must be >= 1");
        if (bleu_max_n < 1) throw input_error("eval: bleu_max_n must be >= 1");
    }
};

struct PerUserMetric {
    std::vector<double> per_user;  // NaN for users with no test positives
    double mean = 0.0;             // over users with at least one test positive
};

namespace detail {

inline double mean_ignoring_nan(const std::vector<double>& v) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (!std::isnan(x)) {
            sum += x;
            ++n;
        }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace detail

// recall@M = hits among the top M / total test positives, per user. Rankings
// must already exclude the user's training positives.
inline PerUserMetric recall_at_m(const std::vector<std::vector<int>>& rankings,
                                 const RatingMatrix& test, int m) {
    PerUserMetric out;
    out.per_user.assign(static_cast<std::size_t>(test.n_users),
                        std::numeric_limits<double>::quiet_NaN());
    for (int u = 0; u < test.n_users; ++u) {
        const auto& pos = test.user_items[static_cast<std::size_t>(u)];
        if (pos.empty()) continue;
        const auto& rank = rankings[static_cast<std::size_t>(u)];
        const std::size_t top = std::min<std::size_t>(rank.size(), static_cast<std::size_t>(m));
        std::size_t hits = 0;
        for (std::size_t k = 0; k < top; ++k)
            if (std::binary_search(pos.begin(), pos.end(), rank[k])) ++hits;
        out.per_user[static_cast<std::size_t>(u)] =
            static_cast<double>(hits) / static_cast<double>(pos.size());
    }
    out.mean = detail::mean_ignoring_nan(out.per_user);
    return out;
}

// Average precision per user over the list truncated at `cutoff`; the AP
// denominator is the number of test positives capped at the cutoff. Users
// without test positives are excluded from the mean.
inline PerUserMetric mean_average_precision(const std::vector<std::vector<int>>& rankings,
                                            const RatingMatrix& test, int cutoff = 500) {
    PerUserMetric out;
    out.per_user.assign(static_cast<std::size_t>(test.n_users),
                        std::numeric_limits<double>::quiet_NaN());
    for (int u = 0; u < test.n_users; ++u) {
        const auto& pos = test.user_items[static_cast<std::size_t>(u)];
        if (pos.empty()) continue;
        const auto& rank = rankings[static_cast<std::size_t>(u)];
        const std::size_t top = std::min<std::size_t>(rank.size(), static_cast<std::size_t>(cutoff));
        std::size_t hits = 0;
        double ap = 0.0;
        for (std::size_t k = 0; k < top; ++k)
            if (std::binary_search(pos.begin(), pos.end(), rank[k])) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(k + 1);
            }
        const std::size_t denom = std::min<std::size_t>(pos.size(), static_cast<std::size_t>(cutoff));
        out.per_user[static_cast<std::size_t>(u)] = ap / static_cast<double>(denom);
    }
    out.mean = detail::mean_ignoring_nan(out.per_user);
    return out;
}

// Corpus-level BLEU x 100: modified n-gram precision with clipping up to
// max_n, geometric mean over the orders that have any candidate n-grams,
// no smoothing (a zero precision zeroes the score), brevity penalty against
// the closest reference length (ties resolved toward the shorter one).
inline double bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::vector<std::string>>>& references,
                   int max_n = 4) {
    if (candidates.empty()) throw input_error("bleu: empty candidate set");
    if (references.size() != candidates.size())
        throw input_error("bleu: need a reference list per candidate");

    auto ngram_counts = [](const std::vector<std::string>& toks, int n) {
        std::map<std::string, int> counts;
        if (static_cast<int>(toks.size()) >= n)
            for (std::size_t i = 0; i + n <= toks.size(); ++i) {
                std::string key;
                for (int k = 0; k < n; ++k) {
                    key += toks[i + static_cast<std::size_t>(k)];
                    key.push_back('\x1f');
                }
                ++counts[key];
            }
        return counts;
    };

    std::vector<long long> correct(static_cast<std::size_t>(max_n), 0);
    std::vector<long long> total(static_cast<std::size_t>(max_n), 0);
    long long cand_len = 0, eff_ref_len = 0;

    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& cand = candidates[c];
        const auto& refs = references[c];
        if (refs.empty()) throw input_error("bleu: candidate without references");

        cand_len += static_cast<long long>(cand.size());
        long long best_len = static_cast<long long>(refs[0].size());
        for (const auto& r : refs) {
            const long long len = static_cast<long long>(r.size());
            const auto diff = std::llabs(len - static_cast<long long>(cand.size()));
            const auto best_diff = std::llabs(best_len - static_cast<long long>(cand.size()));
            if (diff < best_diff || (diff == best_diff && len < best_len)) best_len = len;
        }
        eff_ref_len += best_len;

        for (int n = 1; n <= max_n; ++n) {
            const auto cand_counts = ngram_counts(cand, n);
            std::map<std::string, int> max_ref;
            for (const auto& r : refs)
                for (const auto& [g, cnt] : ngram_counts(r, n))
                    max_ref[g] = std::max(max_ref[g], cnt);
            for (const auto& [g, cnt] : cand_counts) {
                auto it = max_ref.find(g);
                correct[static_cast<std::size_t>(n - 1)] +=
                    std::min(cnt, it == max_ref.end() ? 0 : it->second);
            }
            total[static_cast<std::size_t>(n - 1)] +=
                std::max<long long>(0, static_cast<long long>(cand.size()) - n + 1);
        }
    }

    if (cand_len == 0) return 0.0;
    double log_precision = 0.0;
    int orders = 0;
    for (int n = 0; n < max_n; ++n) {
        if (total[static_cast<std::size_t>(n)] == 0) continue;  // no candidate has n-grams
        if (correct[static_cast<std::size_t>(n)] == 0) return 0.0;
        log_precision += std::log(static_cast<double>(correct[static_cast<std::size_t>(n)]) /
                                  static_cast<double>(total[static_cast<std::size_t>(n)]));
        ++orders;
    }
    if (orders == 0) return 0.0;
    const double bp = cand_len >= eff_ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(eff_ref_len) /
                                               static_cast<double>(cand_len));
    return 100.0 * bp * std::exp(log_precision / static_cast<double>(orders));
}

// For an item without content, the baseline emits the sequence of the
// nearest (Euclidean) item in factor space among those with known content.
inline int nearest_content_item(const LatentFactors& f, int query,
                                const std::vector<int>& content_items) {
    if (content_items.empty())
        throw input_error("nearest_content_item: no training items with content");
    const Vector& q = f.items[static_cast<std::size_t>(query)];
    int best = content_items[0];
    double best_d = std::numeric_limits<double>::infinity();
    for (int j : content_items) {
        const Vector& v = f.items[static_cast<std::size_t>(j)];
        double d = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) d += (q[k] - v[k]) * (q[k] - v[k]);
        if (d < best_d) {  // strict: ties keep the lowest id in iteration order
            best_d = d;
            best = j;
        }
    }
    return best;
}

inline std::vector<std::vector<int>> nn_generate_baseline(
    const LatentFactors& f, const std::vector<std::vector<int>>& sequences,
    const std::vector<int>& content_items, const std::vector<int>& queries) {
    std::vector<std::vector<int>> out;
    out.reserve(queries.size());
    for (int q : queries)
        out.push_back(sequences[static_cast<std::size_t>(nearest_content_item(f, q, content_items))]);
    return out;
}

}  // namespace crae
