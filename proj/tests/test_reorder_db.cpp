#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sap/errors.hpp"
#include "sap/reorder_db.hpp"
#include "sap/sparse_matrix.hpp"
#include "test_support.hpp"

using sap::SparseMatrix;
using sap::Triplet;

namespace {

SparseMatrix from_triplets(int n, std::vector<Triplet<double>> t) {
    return sap::sparse_from_triplets(n, t);
}

// Best product of matched magnitudes over all permutations, or 0 when no
// permutation avoids a structural zero.
double brute_force_best_product(const testsup::Dense& d) {
    std::vector<int> sigma(static_cast<std::size_t>(d.n));
    std::iota(sigma.begin(), sigma.end(), 0);
    double best = 0.0;
    do {
        double prod = 1.0;
        for (int i = 0; i < d.n; ++i) prod *= std::abs(d.at(i, sigma[static_cast<std::size_t>(i)]));
        best = std::max(best, prod);
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    return best;
}

void check_duals(const sap::WeightedBipartite& g, const sap::MatchState& m) {
    for (int i = 0; i < g.n; ++i)
        for (int s = g.row_ptr[static_cast<std::size_t>(i)]; s < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            const int j = g.col_idx[static_cast<std::size_t>(s)];
            const double rc = g.cost[static_cast<std::size_t>(s)] - m.u[static_cast<std::size_t>(i)] -
                              m.v[static_cast<std::size_t>(j)];
            CHECK(rc >= -1e-9);
            if (m.row_match[static_cast<std::size_t>(i)] == j) CHECK(std::abs(rc) < 1e-9);
        }
}

void check_bijection(const std::vector<int>& perm) {
    std::vector<int> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < static_cast<int>(sorted.size()); ++i)
        REQUIRE(sorted[static_cast<std::size_t>(i)] == i);
}

}  // namespace

TEST_CASE("matching weights follow the log-ratio rule", "[db]") {
    auto diag = from_triplets(3, {{0, 0, 2.0}, {1, 1, -5.0}, {2, 2, 0.5}});
    auto gd = sap::build_weights(diag);
    for (double c : gd.cost) CHECK(c == 0.0);
    CHECK(gd.row_max == std::vector<double>{2.0, 5.0, 0.5});

    auto a = from_triplets(2, {{0, 0, 1.0}, {0, 1, 3.0}, {1, 0, 4.0}, {1, 1, 2.0}});
    auto g = sap::build_weights(a);
    REQUIRE(g.cost.size() == 4);
    CHECK(g.cost[0] == Catch::Approx(std::log(3.0)).margin(1e-15));
    CHECK(g.cost[1] == 0.0);
    CHECK(g.cost[2] == 0.0);
    CHECK(g.cost[3] == Catch::Approx(std::log(2.0)).margin(1e-15));

    // Uniform scaling cancels in the ratio.
    auto scaled = from_triplets(2, {{0, 0, 8.0}, {0, 1, 24.0}, {1, 0, 32.0}, {1, 1, 16.0}});
    auto gs = sap::build_weights(scaled);
    for (std::size_t s = 0; s < g.cost.size(); ++s)
        CHECK(std::abs(gs.cost[s] - g.cost[s]) < 1e-12);
}

TEST_CASE("empty and zero-valued rows are structurally singular", "[db]") {
    auto row_empty = from_triplets(2, {{0, 0, 1.0}});
    CHECK_THROWS_MATCHES(sap::build_weights(row_empty), sap::StructuralSingularityError,
                         Catch::Matchers::Message("row 1 has no nonzero entries"));
    auto zeros = from_triplets(2, {{0, 0, 1.0}, {1, 0, 0.0}, {1, 1, 0.0}});
    CHECK_THROWS_AS(sap::build_weights(zeros), sap::StructuralSingularityError);
}

TEST_CASE("greedy pass matches the worked two-by-two example", "[db]") {
    auto a = from_triplets(2, {{0, 0, 1.0}, {0, 1, 3.0}, {1, 0, 4.0}, {1, 1, 2.0}});
    auto g = sap::build_weights(a);
    auto m = sap::initial_match(g);
    CHECK(m.u == std::vector<double>{0.0, 0.0});
    CHECK(m.v == std::vector<double>{0.0, 0.0});
    CHECK(m.row_match == std::vector<int>{1, 0});
    check_duals(g, m);

    // Already perfect, so the augmentation stage leaves it alone.
    sap::perfect_match(g, m);
    CHECK(m.row_match == std::vector<int>{1, 0});

    auto r = sap::extract_result(g, m, true);
    CHECK(r.perm == std::vector<int>{1, 0});
    CHECK(r.row_scale[0] == Catch::Approx(1.0 / 3.0).margin(1e-15));
    CHECK(r.row_scale[1] == Catch::Approx(1.0 / 4.0).margin(1e-15));
    CHECK(r.col_scale == std::vector<double>{1.0, 1.0});
}

TEST_CASE("diagonal matrices match immediately and scale to unit diagonal", "[db]") {
    auto a = from_triplets(3, {{0, 0, 2.0}, {1, 1, -5.0}, {2, 2, 0.5}});
    auto g = sap::build_weights(a);
    auto m = sap::initial_match(g);
    CHECK(m.row_match == std::vector<int>{0, 1, 2});
    auto r = sap::extract_result(g, m, true);
    const double diag[] = {2.0, -5.0, 0.5};
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(std::abs(diag[i]) * r.row_scale[static_cast<std::size_t>(i)] *
                           r.col_scale[static_cast<std::size_t>(i)] -
                       1.0) < 1e-12);
}

TEST_CASE("all-equal weights still yield a feasible assignment", "[db]") {
    std::vector<Triplet<double>> t;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) t.push_back({i, j, 1.0});
    auto a = from_triplets(4, t);
    auto g = sap::build_weights(a);
    auto m = sap::initial_match(g);
    check_duals(g, m);
    sap::perfect_match(g, m);
    check_duals(g, m);
    check_bijection(m.row_match);
}

TEST_CASE("augmentation resolves the greedy collision", "[db]") {
    // Row 1 only has column 0, which the greedy pass gave to row 0; the
    // augmenting path reroutes row 0 to column 1.
    auto a = from_triplets(2, {{0, 0, 2.0}, {0, 1, 2.0}, {1, 0, 2.0}});
    auto r = sap::db_reorder(a, false);
    CHECK(r.perm == std::vector<int>{1, 0});
}

TEST_CASE("matching maximizes the diagonal product on small instances", "[db]") {
    std::mt19937 rng(211);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 5);
        auto a = testsup::random_sparse_full_support(n, n, rng);
        auto d = testsup::dense_from_sparse(a);
        const double best = brute_force_best_product(d);
        REQUIRE(best > 0.0);

        auto g = sap::build_weights(a);
        auto m = sap::initial_match(g);
        sap::perfect_match(g, m);
        check_duals(g, m);
        check_bijection(m.row_match);
        double got = 1.0;
        for (int i = 0; i < n; ++i) got *= std::abs(d.at(i, m.row_match[static_cast<std::size_t>(i)]));
        CHECK(std::log(got) == Catch::Approx(std::log(best)).margin(1e-9));
        ++checked;
    }
    CHECK(checked == 60);
}

TEST_CASE("scaling produces unit diagonal and bounded off-diagonals", "[db]") {
    std::mt19937 rng(223);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 30;
        auto a = testsup::random_sparse_full_support(n, 4 * n, rng);
        auto r = sap::db_reorder(a, true);
        check_bijection(r.perm);
        auto d = testsup::dense_from_sparse(a);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (d.at(i, j) == 0.0) continue;
                const double scaled = std::abs(d.at(i, j)) * r.row_scale[static_cast<std::size_t>(i)] *
                                      r.col_scale[static_cast<std::size_t>(j)];
                if (r.perm[static_cast<std::size_t>(i)] == j)
                    CHECK(std::abs(scaled - 1.0) < 1e-10);
                else
                    CHECK(scaled <= 1.0 + 1e-10);
            }
    }
}

TEST_CASE("unmatchable structure is reported with a deficient row set", "[db]") {
    // Three rows share only two columns.
    auto a = from_triplets(3, {{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}, {2, 1, 4.0}});
    CHECK_THROWS_WITH(sap::db_reorder(a, false),
                      Catch::Matchers::ContainsSubstring("no perfect row-to-column matching") &&
                          Catch::Matchers::ContainsSubstring("deficient rows include"));
}

TEST_CASE("reordering is deterministic and scale-invariant", "[db]") {
    std::mt19937 rng(227);
    auto a = testsup::random_sparse_full_support(40, 120, rng);
    auto r1 = sap::db_reorder(a, true);
    auto r2 = sap::db_reorder(a, true);
    CHECK(r1.perm == r2.perm);
    CHECK(r1.row_scale == r2.row_scale);
    CHECK(r1.col_scale == r2.col_scale);

    SparseMatrix b = a;
    for (auto& v : b.values) v *= 8.0;
    auto rb = sap::db_reorder(b, false);
    CHECK(rb.perm == r1.perm);
}
