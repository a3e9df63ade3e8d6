#include <doctest.h>

#include <cmath>

#include "crae/cf.hpp"
#include "oracles.hpp"

using namespace crae;

namespace {

// random instance: users x items with a sprinkling of positives
struct Instance {
    RatingMatrix train;
    LatentFactors factors;
    std::vector<Vector> gammas;
    ConfidenceRule rule{1.0, 0.01};
    double lambda_u = 0.3;
    double lambda_v = 0.7;
};

Instance random_instance(int users, int items, int k, uint64_t seed) {
    Rng rng(seed);
    Instance inst;
    inst.train = RatingMatrix(users, items);
    for (int u = 0; u < users; ++u)
        for (int j = 0; j < items; ++j)
            if (rng.uniform() < 0.3) inst.train.add(u, j);
    inst.factors = LatentFactors::init(users, items, k, 0.5, rng);
    inst.gammas.assign(items, Vector(k));
    for (auto& g : inst.gammas)
        for (double& v : g) v = std::tanh(rng.normal());
    return inst;
}

// the per-user objective fed to the independent minimizer
std::vector<double> oracle_user(const Instance& inst, int u) {
    const int items = inst.train.n_items;
    std::vector<std::vector<double>> vs;
    std::vector<double> rs, cs;
    for (int j = 0; j < items; ++j) {
        const bool pos = std::binary_search(inst.train.user_items[u].begin(),
                                            inst.train.user_items[u].end(), j);
        vs.push_back(inst.factors.items[j]);
        rs.push_back(pos ? 1.0 : 0.0);
        cs.push_back(pos ? inst.rule.alpha : inst.rule.beta);
    }
    return oracles::minimize_weighted_ridge(vs, rs, cs, inst.lambda_u,
                                            inst.factors.items[0].size());
}

}  // namespace

TEST_CASE("update_users: zero items give zero users; scalar closed form") {
    Instance inst = random_instance(3, 4, 2, 5);
    for (auto& v : inst.factors.items) std::fill(v.begin(), v.end(), 0.0);
    update_users(inst.factors, inst.train, inst.rule, inst.lambda_u);
    for (const auto& u : inst.factors.users)
        for (double x : u) CHECK(x == 0.0);

    // I=J=K=1, R=1, alpha=1, v=1, lambda_u=1: minimizes 1/2 (1-u)^2 + 1/2 u^2 -> u=0.5
    RatingMatrix r(1, 1);
    r.add(0, 0);
    LatentFactors f;
    f.users = {Vector{0.0}};
    f.items = {Vector{1.0}};
    update_users(f, r, ConfidenceRule{1.0, 0.5}, 1.0);
    CHECK(f.users[0][0] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(update_users(f, r, ConfidenceRule{1.0, 0.5}, 0.0), input_error);
    CHECK_THROWS_AS(update_users(f, r, ConfidenceRule{0.5, 1.0}, 1.0), input_error);
}

TEST_CASE("update_users matches the gradient-descent oracle") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Instance inst = random_instance(3, 4, 2, seed);
        std::vector<Vector> want;
        for (int u = 0; u < 3; ++u) want.push_back(oracle_user(inst, u));
        update_users(inst.factors, inst.train, inst.rule, inst.lambda_u);
        for (int u = 0; u < 3; ++u)
            for (std::size_t d = 0; d < 2; ++d)
                CHECK(inst.factors.users[u][d] == doctest::Approx(want[u][d]).epsilon(1e-6));
    }
}

TEST_CASE("update_items: prior mean dominates without users or with huge lambda_v") {
    Instance inst = random_instance(4, 5, 2, 9);
    for (auto& u : inst.factors.users) std::fill(u.begin(), u.end(), 0.0);
    update_items(inst.factors, inst.train, inst.rule, inst.lambda_v, inst.gammas);
    for (int j = 0; j < 5; ++j)
        for (std::size_t d = 0; d < 2; ++d)
            CHECK(inst.factors.items[j][d] == doctest::Approx(inst.gammas[j][d]).epsilon(1e-12));

    Instance big = random_instance(4, 5, 2, 10);
    update_items(big.factors, big.train, big.rule, 1e12, big.gammas);
    for (int j = 0; j < 5; ++j)
        for (std::size_t d = 0; d < 2; ++d)
            CHECK(std::fabs(big.factors.items[j][d] - big.gammas[j][d]) < 1e-6);

    CHECK_THROWS_AS(update_items(big.factors, big.train, big.rule, 1.0, {}), input_error);
}

TEST_CASE("update_items matches the gradient-descent oracle") {
    Instance inst = random_instance(4, 5, 2, 21);
    const auto by_item = inst.train.items_to_users();
    std::vector<Vector> want;
    for (int j = 0; j < 5; ++j) {
        std::vector<std::vector<double>> us;
        std::vector<double> rs, cs;
        for (int u = 0; u < 4; ++u) {
            const bool pos = std::binary_search(by_item[j].begin(), by_item[j].end(), u);
            us.push_back(inst.factors.users[u]);
            rs.push_back(pos ? 1.0 : 0.0);
            cs.push_back(pos ? inst.rule.alpha : inst.rule.beta);
        }
        // fold the gamma prior into the quadratic by shifting: minimize over w of
        // sum c/2 (r - u.w)^2 + lv/2 ||w - g||^2 ; substitute w = g + d and add the
        // residual targets r' = r - u.g so the oracle's plain ridge applies
        std::vector<double> shifted_rs(rs);
        for (int u = 0; u < 4; ++u) {
            double p = 0.0;
            for (std::size_t d = 0; d < 2; ++d) p += us[u][d] * inst.gammas[j][d];
            shifted_rs[u] -= p;
        }
        const auto delta =
            oracles::minimize_weighted_ridge(us, shifted_rs, cs, inst.lambda_v, 2);
        Vector w(2);
        for (std::size_t d = 0; d < 2; ++d) w[d] = inst.gammas[j][d] + delta[d];
        want.push_back(w);
    }
    update_items(inst.factors, inst.train, inst.rule, inst.lambda_v, inst.gammas);
    for (int j = 0; j < 5; ++j)
        for (std::size_t d = 0; d < 2; ++d)
            CHECK(inst.factors.items[j][d] == doctest::Approx(want[j][d]).epsilon(1e-6));
}

TEST_CASE("predict: orthogonality, bilinearity, ranking against brute force") {
    LatentFactors f;
    f.users = {Vector{1.0, 0.0}, Vector{1.0, 1.0}};
    f.items = {Vector{0.0, 1.0}, Vector{1.0, 1.0}};
    CHECK(predict(f, 0, 0) == 0.0);
    CHECK(predict(f, 1, 1) == 2.0);

    // scaling U scales predictions
    for (auto& u : f.users)
        for (double& x : u) x *= 3.0;
    CHECK(predict(f, 1, 1) == doctest::Approx(6.0));

    Rng rng(17);
    LatentFactors g = LatentFactors::init(1, 20, 3, 1.0, rng);
    const auto ranked = rank_items(g, 0, {});
    // brute-force sort oracle with the same tie rule
    std::vector<std::pair<double, int>> scored;
    for (int j = 0; j < 20; ++j) scored.emplace_back(predict(g, 0, j), j);
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    REQUIRE(ranked.size() == 20);
    for (int j = 0; j < 20; ++j) CHECK(ranked[j] == scored[j].second);

    // exclusions drop training positives
    const auto excl = rank_items(g, 0, {3, 7}, 5);
    CHECK(excl.size() == 5);
    for (int j : excl) {
        CHECK(j != 3);
        CHECK(j != 7);
    }
}

TEST_CASE("joint_objective: plug-in value at zero factors") {
    Instance inst = random_instance(3, 4, 2, 33);
    for (auto& u : inst.factors.users) std::fill(u.begin(), u.end(), 0.0);
    for (auto& v : inst.factors.items) std::fill(v.begin(), v.end(), 0.0);
    RatingMatrix empty(3, 4);
    double gnorm = 0.0;
    for (const auto& g : inst.gammas) gnorm += sq_norm(g);
    const double obj =
        joint_objective(inst.factors, inst.gammas, empty, inst.rule, inst.lambda_u, inst.lambda_v);
    CHECK(obj == doctest::Approx(-0.5 * inst.lambda_v * gnorm).epsilon(1e-12));
}

TEST_CASE("coordinate updates weakly increase the joint objective") {
    Rng rng(100);
    for (int trial = 0; trial < 50; ++trial) {
        const int users = 2 + static_cast<int>(rng.uniform_below(9));
        const int items = 2 + static_cast<int>(rng.uniform_below(9));
        const int k = 1 + static_cast<int>(rng.uniform_below(4));
        Instance inst = random_instance(users, items, k, 1000 + trial);

        const double before = joint_objective(inst.factors, inst.gammas, inst.train, inst.rule,
                                              inst.lambda_u, inst.lambda_v);
        update_users(inst.factors, inst.train, inst.rule, inst.lambda_u);
        const double after_u = joint_objective(inst.factors, inst.gammas, inst.train, inst.rule,
                                               inst.lambda_u, inst.lambda_v);
        CHECK(after_u >= before - 1e-9);
        update_items(inst.factors, inst.train, inst.rule, inst.lambda_v, inst.gammas);
        const double after_v = joint_objective(inst.factors, inst.gammas, inst.train, inst.rule,
                                               inst.lambda_u, inst.lambda_v);
        CHECK(after_v >= after_u - 1e-9);
    }
}

TEST_CASE("cholesky_solve: identity, SPD random, failure on indefinite") {
    Matrix eye(3, 3);
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    const Vector b = {1.0, -2.0, 0.5};
    CHECK(cholesky_solve(eye, b) == b);

    Rng rng(8);
    Matrix a(4, 4);
    for (auto& v : a.data) v = rng.normal();
    Matrix spd(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            for (std::size_t k = 0; k < 4; ++k) spd(i, j) += a(k, i) * a(k, j);
            if (i == j) spd(i, j) += 0.5;
        }
    Vector rhs(4);
    for (double& v : rhs) v = rng.normal();
    const Vector x = cholesky_solve(spd, rhs);
    Vector back;
    matvec(spd, x, back);
    for (std::size_t i = 0; i < 4; ++i) CHECK(back[i] == doctest::Approx(rhs[i]).epsilon(1e-9));

    Matrix indef(2, 2);
    indef(0, 0) = 1.0;
    indef(1, 1) = -1.0;
    CHECK_THROWS_AS(cholesky_solve(indef, {1.0, 1.0}), numeric_error);
}
