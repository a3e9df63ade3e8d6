#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crae/common.hpp"
#include "crae/rng.hpp"

namespace crae {

inline constexpr const char* kWildcardToken = "⟨wildcard⟩";
inline constexpr const char* kEosToken = "$";

// Token <-> dense id map. The two reserved tokens always exist: the wildcard
// used for denoising/OOV and the end-of-sequence marker.
struct Vocabulary {
    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;
    int wildcard_id = -1;
    int eos_id = -1;

    int size() const { return static_cast<int>(id_to_token.size()); }

    // Reserved literals in running text are treated as out-of-vocabulary.
    int encode_token(const std::string& tok) const {
        if (tok == kWildcardToken || tok == kEosToken) return wildcard_id;
        auto it = token_to_id.find(tok);
        return it == token_to_id.end() ? wildcard_id : it->second;
    }

    const std::string& token(int id) const { return id_to_token.at(static_cast<std::size_t>(id)); }
};

// One item's clean word-id sequence and its wildcard-corrupted twin.
struct SequencePair {
    int item_id = 0;
    std::vector<int> clean;      // ends with eos_id
    std::vector<int> corrupted;  // same length; positions are clean[t] or wildcard
};

// Sparse binary implicit-feedback matrix, stored per user.
struct RatingMatrix {
    int n_users = 0;
    int n_items = 0;
    std::vector<std::vector<int>> user_items;  // sorted, unique item ids per user

    RatingMatrix() = default;
    RatingMatrix(int users, int items) : n_users(users), n_items(items), user_items(users) {}

    void add(int user, int item) {
        if (user < 0 || user >= n_users || item < 0 || item >= n_items)
            throw input_error("rating out of range: user " + std::to_string(user) + " item " +
                              std::to_string(item));
        auto& v = user_items[static_cast<std::size_t>(user)];
        auto it = std::lower_bound(v.begin(), v.end(), item);
        if (it != v.end() && *it == item)
            throw input_error("duplicate rating: user " + std::to_string(user) + " item " +
                              std::to_string(item));
        v.insert(it, item);
    }

    std::size_t n_positives() const {
        std::size_t n = 0;
        for (const auto& v : user_items) n += v.size();
        return n;
    }

    std::vector<std::vector<int>> items_to_users() const {
        std::vector<std::vector<int>> by_item(static_cast<std::size_t>(n_items));
        for (int u = 0; u < n_users; ++u)
            for (int j : user_items[static_cast<std::size_t>(u)])
                by_item[static_cast<std::size_t>(j)].push_back(u);
        return by_item;
    }
};

struct SplitSpec {
    int train_per_user = 1;  // the evaluation protocol's P
    uint64_t seed = 0;

    void validate() const {
        if (train_per_user < 1) throw input_error("split: P must be >= 1");
    }
};

// Whitespace split, ASCII lowercasing, punctuation stripped. Bytes >= 0x80
// pass through so UTF-8 words survive.
inline std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char ch : line) {
        if (std::isspace(ch)) {
            flush();
        } else if (ch >= 0x80 || std::isalnum(ch)) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        }
        // ASCII punctuation is dropped
    }
    flush();
    return out;
}

// Frequency-descending, then lexicographic id assignment; the reserved tokens
// take the last two ids. Deterministic for reproducible checkpoints.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& documents,
                                   int min_count) {
    if (documents.empty()) throw input_error("build_vocabulary: no documents");
    if (min_count < 1) throw input_error("build_vocabulary: min_count must be >= 1");

    std::map<std::string, long long> freq;
    for (const auto& doc : documents)
        for (const auto& tok : doc) {
            if (tok == kWildcardToken || tok == kEosToken) continue;  // reserved
            ++freq[tok];
        }

    std::vector<std::pair<std::string, long long>> kept;
    for (const auto& [tok, n] : freq)
        if (n >= min_count) kept.emplace_back(tok, n);
    if (kept.empty())
        throw input_error("build_vocabulary: no token reaches min_count " +
                          std::to_string(min_count));

    std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });

    Vocabulary vocab;
    vocab.id_to_token.reserve(kept.size() + 2);
    for (auto& [tok, n] : kept) {
        vocab.token_to_id.emplace(tok, vocab.size());
        vocab.id_to_token.push_back(tok);
    }
    vocab.wildcard_id = vocab.size();
    vocab.id_to_token.push_back(kWildcardToken);
    vocab.eos_id = vocab.size();
    vocab.id_to_token.push_back(kEosToken);
    return vocab;
}

// OOV tokens map to the wildcard id; eos appended exactly once.
inline std::vector<int> encode_document(const std::vector<std::string>& tokens,
                                        const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    for (const auto& tok : tokens) ids.push_back(vocab.encode_token(tok));
    ids.push_back(vocab.eos_id);
    return ids;
}

inline std::vector<std::string> decode_sequence(const std::vector<int>& ids,
                                                const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

// Each non-eos position is independently replaced by the wildcard with the
// given probability. The terminator is exempt: corrupting it would destroy
// the length information the decoder needs.
inline std::vector<int> wildcard_corrupt(const std::vector<int>& clean, double rate,
                                         const Vocabulary& vocab, Rng& rng) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw input_error("wildcard_corrupt: rate outside [0, 1]");
    if (clean.empty() || clean.back() != vocab.eos_id)
        throw input_error("wildcard_corrupt: sequence must end with eos");
    std::vector<int> out = clean;
    for (std::size_t t = 0; t + 1 < out.size(); ++t)
        if (clean[t] != vocab.eos_id && rng.uniform() < rate) out[t] = vocab.wildcard_id;
    return out;
}

inline std::vector<int> wildcard_corrupt(const std::vector<int>& clean, double rate,
                                         const Vocabulary& vocab, uint64_t seed) {
    Rng rng(seed);
    return wildcard_corrupt(clean, rate, vocab, rng);
}

// Per user, min(P, count) positives go to train (uniform without
// replacement), the rest to test. Depends only on the positive set and the
// seed, not on input order.
inline std::pair<RatingMatrix, RatingMatrix> split_ratings(const RatingMatrix& r,
                                                           const SplitSpec& spec) {
    spec.validate();
    RatingMatrix train(r.n_users, r.n_items), test(r.n_users, r.n_items);
    Rng rng(spec.seed);
    for (int u = 0; u < r.n_users; ++u) {
        std::vector<int> items = r.user_items[static_cast<std::size_t>(u)];  // already sorted
        // partial Fisher-Yates: the first P slots become the train picks
        const std::size_t take =
            std::min(items.size(), static_cast<std::size_t>(spec.train_per_user));
        for (std::size_t k = 0; k < take; ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(rng.uniform_below(
                                             static_cast<uint64_t>(items.size() - k)));
            std::swap(items[k], items[pick]);
        }
        for (std::size_t k = 0; k < items.size(); ++k)
            (k < take ? train : test).add(u, items[k]);
    }
    return {std::move(train), std::move(test)};
}

// ---- file formats ----------------------------------------------------------

// Corpus file: one document per line, "item_id<TAB>token token ...".
// Item ids must be unique non-negative integers.
struct CorpusFile {
    int n_items = 0;                              // max id + 1
    std::vector<std::vector<std::string>> docs;   // indexed by item id; may hold empty slots
    std::vector<bool> has_doc;

    const std::vector<std::string>& doc(int item) const {
        if (item < 0 || item >= n_items || !has_doc[static_cast<std::size_t>(item)])
            throw input_error("no document for item " + std::to_string(item));
        return docs[static_cast<std::size_t>(item)];
    }
};

inline int parse_nonneg_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size() || v < 0) throw input_error("");
        return static_cast<int>(v);
    } catch (...) {
        throw input_error("expected a non-negative integer for " + what + ", got '" + s + "'");
    }
}

inline CorpusFile read_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open corpus file: " + path);
    std::vector<std::pair<int, std::vector<std::string>>> rows;
    std::string line;
    std::size_t line_no = 0;
    int max_id = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw input_error(path + ":" + std::to_string(line_no) + ": missing tab separator");
        const int item = parse_nonneg_int(line.substr(0, tab), "item id");
        rows.emplace_back(item, tokenize(line.substr(tab + 1)));
        max_id = std::max(max_id, item);
    }
    if (rows.empty()) throw input_error("corpus file is empty: " + path);
    CorpusFile cf;
    cf.n_items = max_id + 1;
    cf.docs.resize(static_cast<std::size_t>(cf.n_items));
    cf.has_doc.assign(static_cast<std::size_t>(cf.n_items), false);
    for (auto& [item, toks] : rows) {
        if (cf.has_doc[static_cast<std::size_t>(item)])
            throw input_error(path + ": duplicate document for item " + std::to_string(item));
        cf.docs[static_cast<std::size_t>(item)] = std::move(toks);
        cf.has_doc[static_cast<std::size_t>(item)] = true;
    }
    return cf;
}

// Ratings file: one positive per line, "user_id<TAB>item_id".
inline RatingMatrix read_ratings_file(const std::string& path, int n_items_hint = 0) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open ratings file: " + path);
    std::vector<std::pair<int, int>> pairs;
    std::string line;
    std::size_t line_no = 0;
    int max_user = -1, max_item = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw input_error(path + ":" + std::to_string(line_no) + ": missing tab separator");
        const int user = parse_nonneg_int(line.substr(0, tab), "user id");
        const int item = parse_nonneg_int(line.substr(tab + 1), "item id");
        pairs.emplace_back(user, item);
        max_user = std::max(max_user, user);
        max_item = std::max(max_item, item);
    }
    if (pairs.empty()) throw input_error("ratings file is empty: " + path);
    RatingMatrix r(max_user + 1, std::max(max_item + 1, n_items_hint));
    for (auto [u, j] : pairs) r.add(u, j);
    return r;
}

// Vocabulary file: one token per line, line number = id.
inline void write_vocabulary_file(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write vocabulary file: " + path);
    for (const auto& tok : vocab.id_to_token) out << tok << '\n';
    if (!out) throw input_error("failed writing vocabulary file: " + path);
}

inline Vocabulary read_vocabulary_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open vocabulary file: " + path);
    Vocabulary vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (line == kWildcardToken) {
            vocab.wildcard_id = vocab.size();
        } else if (line == kEosToken) {
            vocab.eos_id = vocab.size();
        } else {
            vocab.token_to_id.emplace(line, vocab.size());
        }
        vocab.id_to_token.push_back(line);
    }
    if (vocab.wildcard_id < 0 || vocab.eos_id < 0)
        throw input_error("vocabulary file missing reserved tokens: " + path);
    return vocab;
}

}  // namespace crae
