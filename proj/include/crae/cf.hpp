#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "crae/common.hpp"
#include "crae/corpus.hpp"
#include "crae/linalg.hpp"

namespace crae {

// C_ij = alpha on observed positives, beta elsewhere.
struct ConfidenceRule {
    double alpha = 1.0;
    double beta = 0.01;

    void validate() const {
        if (!(alpha > beta && beta > 0.0))
            throw input_error("confidence rule requires alpha > beta > 0");
    }
};

// User and item factors, one K-vector per column of the paper's U and V.
struct LatentFactors {
    std::vector<Vector> users;  // I x K
    std::vector<Vector> items;  // J x K

    std::size_t dim() const { return users.empty() ? (items.empty() ? 0 : items[0].size())
                                                   : users[0].size(); }

    static LatentFactors init(std::size_t n_users, std::size_t n_items, std::size_t k,
                              double stddev, Rng& rng) {
        LatentFactors f;
        f.users.assign(n_users, Vector(k));
        f.items.assign(n_items, Vector(k));
        for (auto& u : f.users)
            for (double& v : u) v = stddev * rng.normal();
        for (auto& it : f.items)
            for (double& v : it) v = stddev * rng.normal();
        return f;
    }
};

namespace detail {

// beta * sum_j v_j v_j^T, the part of every normal-equation matrix shared
// across users (resp. items). Most C_ij equal beta, so each per-user system
// is this Gram matrix plus rank-|positives| corrections.
inline Matrix scaled_gram(const std::vector<Vector>& vs, double scale) {
    const std::size_t k = vs.empty() ? 0 : vs[0].size();
    Matrix g(k, k);
    for (const auto& v : vs)
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) g(r, c) += scale * v[r] * v[c];
    return g;
}

inline Vector solve_one(const Matrix& base, const std::vector<Vector>& others,
                        const std::vector<int>& positives, const ConfidenceRule& rule,
                        double lambda, const Vector* prior_mean) {
    const std::size_t k = base.rows;
    Matrix a = base;
    for (std::size_t i = 0; i < k; ++i) a(i, i) += lambda;
    Vector rhs(k, 0.0);
    for (int j : positives) {
        const Vector& v = others[static_cast<std::size_t>(j)];
        const double excess = rule.alpha - rule.beta;
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) a(r, c) += excess * v[r] * v[c];
        axpy(rule.alpha, v, rhs);  // R is binary, so C_j R_j sums alpha * v_j over positives
    }
    if (prior_mean) axpy(lambda, *prior_mean, rhs);
    return cholesky_solve(std::move(a), std::move(rhs));
}

}  // namespace detail

// u_i <- (V C_i V^T + lambda_u I)^{-1} V C_i R_i, exactly, per user.
inline void update_users(LatentFactors& f, const RatingMatrix& train, const ConfidenceRule& rule,
                         double lambda_u) {
    rule.validate();
    if (!(lambda_u > 0.0)) throw input_error("update_users: lambda_u must be positive");
    const Matrix base = detail::scaled_gram(f.items, rule.beta);
    for (int u = 0; u < train.n_users; ++u)
        f.users[static_cast<std::size_t>(u)] = detail::solve_one(
            base, f.items, train.user_items[static_cast<std::size_t>(u)], rule, lambda_u, nullptr);
}

// v_j <- (U C_j U^T + lambda_v I)^{-1} (U C_j R_j + lambda_v gamma_j).
inline void update_items(LatentFactors& f, const RatingMatrix& train, const ConfidenceRule& rule,
                         double lambda_v, const std::vector<Vector>& gammas) {
    rule.validate();
    if (!(lambda_v > 0.0)) throw input_error("update_items: lambda_v must be positive");
    if (gammas.size() != f.items.size())
        throw input_error("update_items: need a gamma for every item");
    const Matrix base = detail::scaled_gram(f.users, rule.beta);
    const auto by_item = train.items_to_users();
    for (int j = 0; j < train.n_items; ++j)
        f.items[static_cast<std::size_t>(j)] =
            detail::solve_one(base, f.users, by_item[static_cast<std::size_t>(j)], rule, lambda_v,
                              &gammas[static_cast<std::size_t>(j)]);
}

inline double predict(const LatentFactors& f, int user, int item) {
    return dot(f.users[static_cast<std::size_t>(user)], f.items[static_cast<std::size_t>(item)]);
}

// Items ranked by predicted rating (descending; ties by ascending id), with
// the user's training positives excluded from the candidates.
inline std::vector<int> rank_items(const LatentFactors& f, int user,
                                   const std::vector<int>& exclude_sorted,
                                   std::size_t top_m = 0) {
    std::vector<std::pair<double, int>> scored;
    scored.reserve(f.items.size());
    for (int j = 0; j < static_cast<int>(f.items.size()); ++j) {
        if (std::binary_search(exclude_sorted.begin(), exclude_sorted.end(), j)) continue;
        scored.emplace_back(predict(f, user, j), j);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });
    if (top_m > 0 && scored.size() > top_m) scored.resize(top_m);
    std::vector<int> out;
    out.reserve(scored.size());
    for (const auto& [score, j] : scored) out.push_back(j);
    return out;
}

// Rating term minus the factor priors:
//   -sum_ij C_ij/2 (R_ij - u_i^T v_j)^2 - lambda_u/2 sum ||u_i||^2
//   - lambda_v/2 sum ||v_j - gamma_j||^2.
// The DRAE terms of the joint log-likelihood are reported separately.
inline double joint_objective(const LatentFactors& f, const std::vector<Vector>& gammas,
                              const RatingMatrix& train, const ConfidenceRule& rule,
                              double lambda_u, double lambda_v) {
    rule.validate();
    const Matrix gram = detail::scaled_gram(f.items, 1.0);
    double sq_all = 0.0;  // sum over every (i, j) of (u_i^T v_j)^2
    Vector tmp;
    for (const auto& u : f.users) {
        matvec(gram, u, tmp);
        sq_all += dot(tmp, u);
    }
    double term_pos = 0.0, sq_pos = 0.0;
    for (int u = 0; u < train.n_users; ++u)
        for (int j : train.user_items[static_cast<std::size_t>(u)]) {
            const double p = predict(f, u, j);
            const double diff = 1.0 - p;
            term_pos += 0.5 * rule.alpha * diff * diff;
            sq_pos += p * p;
        }
    double obj = -term_pos - 0.5 * rule.beta * (sq_all - sq_pos);
    for (const auto& u : f.users) obj -= 0.5 * lambda_u * sq_norm(u);
    for (std::size_t j = 0; j < f.items.size(); ++j) {
        const Vector& v = f.items[j];
        const Vector& g = gammas[j];
        double d = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) d += (v[k] - g[k]) * (v[k] - g[k]);
        obj -= 0.5 * lambda_v * d;
    }
    return obj;
}

}  // namespace crae
