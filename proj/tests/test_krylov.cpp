#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "sap/banded_matrix.hpp"
#include "sap/krylov.hpp"
#include "test_support.hpp"

using sap::KrylovFailure;
using sap::KrylovMethod;
using sap::KrylovOptions;
using sap::LinearOp;
using testsup::Dense;

namespace {

LinearOp identity_op() {
    return [](std::span<const double> in, std::span<double> out) {
        std::copy(in.begin(), in.end(), out.begin());
    };
}

LinearOp dense_op(const Dense& m) {
    return [&m](std::span<const double> in, std::span<double> out) {
        auto y = testsup::dense_mul(m, in);
        std::copy(y.begin(), y.end(), out.begin());
    };
}

std::vector<double> rand_vec(int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = u(rng);
    return v;
}

bool quarter_grained(double iters) {
    const double q = iters * 4.0;
    return std::abs(q - std::round(q)) < 1e-12;
}

// 5-point grid Laplacian with Dirichlet boundary, row-major grid indexing.
Dense grid_laplacian(int side) {
    Dense d(side * side);
    auto id = [side](int r, int c) { return r * side + c; };
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            d.at(id(r, c), id(r, c)) = 4.0;
            if (r > 0) d.at(id(r, c), id(r - 1, c)) = -1.0;
            if (r + 1 < side) d.at(id(r, c), id(r + 1, c)) = -1.0;
            if (c > 0) d.at(id(r, c), id(r, c - 1)) = -1.0;
            if (c + 1 < side) d.at(id(r, c), id(r, c + 1)) = -1.0;
        }
    return d;
}

}  // namespace

TEST_CASE("identity system converges at the first exit point", "[krylov]") {
    std::mt19937 rng(101);
    auto b = rand_vec(10, rng);
    std::vector<double> x(10);
    KrylovOptions opts;
    auto stats = sap::solve_krylov(identity_op(), identity_op(), b, x, opts);
    CHECK(stats.converged);
    CHECK(stats.iterations == 0.25);
    CHECK(stats.failure == KrylovFailure::none);
    CHECK(testsup::max_abs_diff(x, b) == 0.0);
    REQUIRE(stats.residual_history.size() == 2);
    CHECK(stats.residual_history[0] == 1.0);
    CHECK(stats.residual_history[1] == 0.0);
    CHECK(stats.final_relative_residual == 0.0);
}

TEST_CASE("small triangular system has the closed-form solution", "[krylov]") {
    Dense a(2);
    a.at(0, 0) = 2.0;
    a.at(0, 1) = 1.0;
    a.at(1, 1) = 3.0;
    std::vector<double> b{3.0, 3.0};
    std::vector<double> x(2);
    KrylovOptions opts;
    auto stats = sap::solve_krylov(dense_op(a), identity_op(), b, x, opts);
    CHECK(stats.converged);
    CHECK(std::abs(x[0] - 1.0) < 1e-12);
    CHECK(std::abs(x[1] - 1.0) < 1e-12);
}

TEST_CASE("nonsymmetric banded system matches the dense oracle", "[krylov]") {
    std::mt19937 rng(103);
    auto a = testsup::random_banded(50, 5, 1.3, rng);
    auto d = testsup::dense_from_banded(a);
    auto b = rand_vec(50, rng);
    auto want = testsup::dense_solve(d, b);
    std::vector<double> x(50);
    KrylovOptions opts;
    opts.rel_tol = 1e-10;
    LinearOp op = [&a](std::span<const double> in, std::span<double> out) { a.matvec(in, out); };
    auto stats = sap::solve_krylov(op, identity_op(), b, x, opts);
    REQUIRE(stats.converged);
    CHECK(stats.final_relative_residual <= 1e-10);
    CHECK(testsup::rel_err(x, want) < 1e-9);

    // The reported residual is the true one, reproducible from x.
    std::vector<double> ax(50);
    a.matvec(x, ax);
    double num = 0, den = 0;
    for (int i = 0; i < 50; ++i) {
        const double r = b[static_cast<std::size_t>(i)] - ax[static_cast<std::size_t>(i)];
        num += r * r;
        den += b[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
    }
    CHECK(std::abs(std::sqrt(num / den) - stats.final_relative_residual) < 1e-14);

    CHECK(quarter_grained(stats.iterations));
    for (double h : stats.residual_history) CHECK(std::isfinite(h));
    // With l = 2 every checkpoint advances the count by exactly one quarter.
    CHECK(stats.residual_history.size() == static_cast<std::size_t>(4.0 * stats.iterations) + 1);
}

TEST_CASE("stabilization degrees other than two keep quarter accounting", "[krylov]") {
    std::mt19937 rng(107);
    auto a = testsup::random_banded(30, 3, 1.2, rng);
    auto b = rand_vec(30, rng);
    LinearOp op = [&a](std::span<const double> in, std::span<double> out) { a.matvec(in, out); };
    for (int ell : {1, 3, 4}) {
        std::vector<double> x(30);
        KrylovOptions opts;
        opts.ell = ell;
        auto stats = sap::solve_krylov(op, identity_op(), b, x, opts);
        CHECK(stats.converged);
        CHECK(quarter_grained(stats.iterations));
        CHECK(stats.iterations > 0.0);
    }
    KrylovOptions bad;
    bad.ell = 0;
    std::vector<double> x(30);
    CHECK_THROWS_AS(sap::solve_krylov(op, identity_op(), b, x, bad), std::invalid_argument);
}

TEST_CASE("zero right-hand side is solved without iterating", "[krylov]") {
    std::vector<double> b(8, 0.0);
    std::vector<double> x(8, 7.0);
    KrylovOptions opts;
    auto stats = sap::solve_krylov(identity_op(), identity_op(), b, x, opts);
    CHECK(stats.converged);
    CHECK(stats.iterations == 0.0);
    REQUIRE(stats.residual_history.size() == 1);
    CHECK(stats.residual_history[0] == 0.0);
    for (double v : x) CHECK(v == 0.0);

    auto cg = sap::solve_cg(identity_op(), identity_op(), b, x, opts);
    CHECK(cg.converged);
    CHECK(cg.iterations == 0.0);
}

TEST_CASE("iteration budget is enforced", "[krylov]") {
    const int n = 100;
    Dense a(n);
    for (int i = 0; i < n; ++i) {
        a.at(i, i) = 2.0;
        if (i > 0) a.at(i, i - 1) = -1.0;
        if (i + 1 < n) a.at(i, i + 1) = -1.0;
    }
    std::mt19937 rng(109);
    auto b = rand_vec(n, rng);
    std::vector<double> x(n);
    KrylovOptions opts;
    opts.rel_tol = 1e-14;
    opts.max_iterations = 2;
    auto stats = sap::solve_krylov(dense_op(a), identity_op(), b, x, opts);
    CHECK_FALSE(stats.converged);
    CHECK(stats.failure == KrylovFailure::max_iterations);
    CHECK(stats.iterations == 2.0);

    auto cg = sap::solve_cg(dense_op(a), identity_op(), b, x, opts);
    CHECK_FALSE(cg.converged);
    CHECK(cg.failure == KrylovFailure::max_iterations);
    CHECK(cg.iterations == 2.0);
}

TEST_CASE("non-finite operator output fails immediately", "[krylov]") {
    LinearOp nan_op = [](std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), std::numeric_limits<double>::quiet_NaN());
    };
    std::vector<double> b{1.0, 2.0, 3.0};
    std::vector<double> x(3);
    KrylovOptions opts;
    auto stats = sap::solve_krylov(nan_op, identity_op(), b, x, opts);
    CHECK_FALSE(stats.converged);
    CHECK(stats.failure == KrylovFailure::non_finite);

    auto cg = sap::solve_cg(identity_op(), nan_op, b, x, opts);
    CHECK_FALSE(cg.converged);
    CHECK(cg.failure == KrylovFailure::non_finite);
}

TEST_CASE("persistent zero inner products exhaust the single restart", "[krylov]") {
    // The zero operator never moves the residual: the first sweep breaks
    // down, the restart breaks down again, the solve reports it.
    LinearOp zero_op = [](std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    std::vector<double> b{1.0, -2.0};
    std::vector<double> x(2);
    KrylovOptions opts;
    auto stats = sap::solve_krylov(zero_op, identity_op(), b, x, opts);
    CHECK_FALSE(stats.converged);
    CHECK(stats.failure == KrylovFailure::breakdown);

    auto again = sap::solve_krylov(zero_op, identity_op(), b, x, opts);
    CHECK(again.failure == KrylovFailure::breakdown);
    CHECK(again.residual_history == stats.residual_history);
}

TEST_CASE("conjugate gradient solves the closed-form system", "[krylov]") {
    Dense a(2);
    a.at(0, 0) = 4.0;
    a.at(0, 1) = 1.0;
    a.at(1, 0) = 1.0;
    a.at(1, 1) = 3.0;
    std::vector<double> b{1.0, 2.0};
    std::vector<double> x(2);
    KrylovOptions opts;
    auto stats = sap::solve_cg(dense_op(a), identity_op(), b, x, opts);
    CHECK(stats.converged);
    CHECK(std::abs(x[0] - 1.0 / 11.0) < 1e-12);
    CHECK(std::abs(x[1] - 7.0 / 11.0) < 1e-12);
    CHECK(stats.iterations <= 2.0);
    CHECK(stats.iterations == std::floor(stats.iterations));
}

TEST_CASE("a perfect preconditioner converges CG in one iteration", "[krylov]") {
    const int n = 10;
    Dense a(n);
    for (int i = 0; i < n; ++i) a.at(i, i) = i + 1.0;
    LinearOp minv = [](std::span<const double> in, std::span<double> out) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / (static_cast<double>(i) + 1.0);
    };
    std::mt19937 rng(113);
    auto b = rand_vec(n, rng);
    std::vector<double> x(n);
    KrylovOptions opts;
    auto stats = sap::solve_cg(dense_op(a), minv, b, x, opts);
    CHECK(stats.converged);
    CHECK(stats.iterations == 1.0);
}

TEST_CASE("CG reports indefinite operators instead of iterating", "[krylov]") {
    Dense ind(2);
    ind.at(0, 0) = 1.0;
    ind.at(1, 1) = -1.0;
    std::vector<double> b{0.0, 1.0};
    std::vector<double> x(2);
    KrylovOptions opts;
    auto stats = sap::solve_cg(dense_op(ind), identity_op(), b, x, opts);
    CHECK_FALSE(stats.converged);
    CHECK(stats.failure == KrylovFailure::indefinite_operator);

    Dense neg(2);
    neg.at(0, 0) = -1.0;
    neg.at(1, 1) = -2.0;
    std::vector<double> b2{1.0, 1.0};
    auto s2 = sap::solve_cg(dense_op(neg), identity_op(), b2, x, opts);
    CHECK(s2.failure == KrylovFailure::indefinite_operator);
}

TEST_CASE("Jacobi-preconditioned CG matches the dense oracle on a grid", "[krylov]") {
    auto a = grid_laplacian(16);
    LinearOp jacobi = [](std::span<const double> in, std::span<double> out) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / 4.0;
    };
    std::mt19937 rng(127);
    auto b = rand_vec(256, rng);
    auto want = testsup::dense_solve(a, b);
    std::vector<double> x(256);
    KrylovOptions opts;
    opts.rel_tol = 1e-10;
    opts.max_iterations = 2000;
    auto stats = sap::solve_cg(dense_op(a), jacobi, b, x, opts);
    REQUIRE(stats.converged);
    CHECK(stats.final_relative_residual <= 1e-10);
    CHECK(testsup::rel_err(x, want) < 1e-9);
    for (double h : stats.residual_history) CHECK(std::isfinite(h));
}

TEST_CASE("method dispatch honours the SPD assertion", "[krylov]") {
    auto a = grid_laplacian(8);
    std::mt19937 rng(131);
    auto b = rand_vec(64, rng);
    KrylovOptions opts;
    opts.method = KrylovMethod::automatic;

    std::vector<double> x_auto(64), x_bicg(64), x_cg(64);
    auto auto_plain = sap::run_krylov(dense_op(a), identity_op(), b, x_auto, opts);
    auto bicg = sap::solve_krylov(dense_op(a), identity_op(), b, x_bicg, opts);
    CHECK(auto_plain.iterations == bicg.iterations);
    CHECK(x_auto == x_bicg);

    opts.caller_asserts_spd = true;
    auto auto_spd = sap::run_krylov(dense_op(a), identity_op(), b, x_auto, opts);
    auto cg = sap::solve_cg(dense_op(a), identity_op(), b, x_cg, opts);
    CHECK(auto_spd.iterations == cg.iterations);
    CHECK(x_auto == x_cg);
    // CG counts whole iterations only.
    CHECK(auto_spd.iterations == std::floor(auto_spd.iterations));
}

TEST_CASE("repeated solves are bitwise identical", "[krylov]") {
    std::mt19937 rng(137);
    auto a = testsup::random_banded(40, 4, 1.05, rng);
    auto b = rand_vec(40, rng);
    LinearOp op = [&a](std::span<const double> in, std::span<double> out) { a.matvec(in, out); };
    KrylovOptions opts;
    std::vector<double> x1(40), x2(40);
    auto s1 = sap::solve_krylov(op, identity_op(), b, x1, opts);
    auto s2 = sap::solve_krylov(op, identity_op(), b, x2, opts);
    CHECK(x1 == x2);
    CHECK(s1.residual_history == s2.residual_history);
    CHECK(s1.iterations == s2.iterations);
}
