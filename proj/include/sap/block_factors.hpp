#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "sap/banded_matrix.hpp"
#include "sap/partition.hpp"

namespace sap {

enum class FactorMode { lu_only, lu_and_ul };
enum class SolveVariant { lu, ul };

namespace detail {

/// In-place banded LU without pivoting, boosting pivots below
/// boost_eps * scale to that magnitude with the original sign (sign of an
/// exact zero treated as +). L is unit lower, U keeps the diagonal.
/// Returns the number of boosted pivots.
template <class T>
int band_lu_inplace(int m, int k, T* f, double boost_eps, double scale) {
    const int w = 2 * k + 1;
    auto slot = [&](int i, int j) { return static_cast<std::size_t>(j) * w + (i - j + k); };
    const T bv = static_cast<T>(boost_eps * (scale > 0 ? scale : 1.0));
    int boosts = 0;
    for (int j = 0; j < m; ++j) {
        T p = f[slot(j, j)];
        if (std::abs(p) < static_cast<T>(boost_eps * (scale > 0 ? scale : 1.0))) {
            p = p < T(0) ? -bv : bv;
            f[slot(j, j)] = p;
            ++boosts;
        }
        const int hi = j + k < m - 1 ? j + k : m - 1;
        for (int i = j + 1; i <= hi; ++i) f[slot(i, j)] /= p;
        for (int c = j + 1; c <= hi; ++c) {
            const T ujc = f[slot(j, c)];
            if (ujc == T(0)) continue;
            for (int i = j + 1; i <= hi; ++i) f[slot(i, c)] -= f[slot(i, j)] * ujc;
        }
    }
    return boosts;
}

/// In-place banded UL without pivoting, eliminating from the last row up:
/// A = U L with U unit upper (multipliers above the diagonal) and L lower
/// keeping the diagonal. Same boosting policy as the LU sweep.
template <class T>
int band_ul_inplace(int m, int k, T* f, double boost_eps, double scale) {
    const int w = 2 * k + 1;
    auto slot = [&](int i, int j) { return static_cast<std::size_t>(j) * w + (i - j + k); };
    const T bv = static_cast<T>(boost_eps * (scale > 0 ? scale : 1.0));
    int boosts = 0;
    for (int j = m - 1; j >= 0; --j) {
        T p = f[slot(j, j)];
        if (std::abs(p) < static_cast<T>(boost_eps * (scale > 0 ? scale : 1.0))) {
            p = p < T(0) ? -bv : bv;
            f[slot(j, j)] = p;
            ++boosts;
        }
        const int lo = j - k > 0 ? j - k : 0;
        for (int i = lo; i < j; ++i) f[slot(i, j)] /= p;
        for (int c = lo; c < j; ++c) {
            const T ajc = f[slot(j, c)];
            if (ajc == T(0)) continue;
            for (int i = lo; i < j; ++i) f[slot(i, c)] -= f[slot(i, j)] * ajc;
        }
    }
    return boosts;
}

/// Solves L U x = b in place given band_lu_inplace output.
template <class T>
void band_lu_solve(int m, int k, const T* f, T* x) {
    const int w = 2 * k + 1;
    auto slot = [&](int i, int j) { return static_cast<std::size_t>(j) * w + (i - j + k); };
    for (int i = 0; i < m; ++i) {
        T acc = x[i];
        const int lo = i - k > 0 ? i - k : 0;
        for (int j = lo; j < i; ++j) acc -= f[slot(i, j)] * x[j];
        x[i] = acc;
    }
    for (int i = m - 1; i >= 0; --i) {
        T acc = x[i];
        const int hi = i + k < m - 1 ? i + k : m - 1;
        for (int j = i + 1; j <= hi; ++j) acc -= f[slot(i, j)] * x[j];
        x[i] = acc / f[slot(i, i)];
    }
}

/// Solves U L x = b in place given band_ul_inplace output.
template <class T>
void band_ul_solve(int m, int k, const T* f, T* x) {
    const int w = 2 * k + 1;
    auto slot = [&](int i, int j) { return static_cast<std::size_t>(j) * w + (i - j + k); };
    for (int i = m - 1; i >= 0; --i) {
        T acc = x[i];
        const int hi = i + k < m - 1 ? i + k : m - 1;
        for (int j = i + 1; j <= hi; ++j) acc -= f[slot(i, j)] * x[j];
        x[i] = acc;
    }
    for (int i = 0; i < m; ++i) {
        T acc = x[i];
        const int lo = i - k > 0 ? i - k : 0;
        for (int j = lo; j < i; ++j) acc -= f[slot(i, j)] * x[j];
        x[i] = acc / f[slot(i, i)];
    }
}

}  // namespace detail

/// No-pivot LU (and optionally UL) factors of every diagonal block of a
/// partitioned banded matrix, kept in the same band layout. A block may
/// carry a symmetric local permutation from per-block reordering; its
/// factors then describe P A_i P^T at the reduced bandwidth K_i.
template <class T = double>
struct BlockFactors {
    PartitionLayout layout;
    double boost_eps = 1e-10;
    std::vector<std::vector<T>> lu;
    std::vector<std::vector<T>> ul;           // empty unless FactorMode::lu_and_ul
    std::vector<std::vector<int>> perm;       // local old -> new; empty vector means identity
    std::vector<int> boost_count;             // boosted pivots in the LU sweep per block
    std::vector<int> boost_count_ul;
    std::vector<double> block_norm;           // ||A_i||_inf before factoring

    bool has_ul() const { return !ul.empty(); }
    bool has_perm(int i) const {
        return !perm.empty() && !perm[static_cast<std::size_t>(i)].empty();
    }
};

/// Factors every diagonal block of `a` under `layout`. When `block_perms`
/// is given, block i is factored as P_i A_i P_i^T at bandwidth
/// layout.per_partition_k[i]; entries the permutation pushes outside that
/// band are rejected.
template <class T>
BlockFactors<T> factor_blocks(const BandedMatrix<T>& a, const PartitionLayout& layout,
                              FactorMode mode, double boost_eps = 1e-10,
                              const std::vector<std::vector<int>>* block_perms = nullptr) {
    if (layout.total() != a.rows())
        throw std::invalid_argument("factor_blocks: layout does not cover the matrix");
    BlockFactors<T> f;
    f.layout = layout;
    f.boost_eps = boost_eps;
    const int p = layout.p;
    f.lu.resize(static_cast<std::size_t>(p));
    if (mode == FactorMode::lu_and_ul) f.ul.resize(static_cast<std::size_t>(p));
    if (block_perms) f.perm = *block_perms;
    f.boost_count.assign(static_cast<std::size_t>(p), 0);
    f.boost_count_ul.assign(static_cast<std::size_t>(p), 0);
    f.block_norm.assign(static_cast<std::size_t>(p), 0.0);

    for (int b = 0; b < p; ++b) {
        const int off = layout.offset(b);
        const int m = layout.size(b);
        const int kb = layout.k(b);
        const int w = 2 * kb + 1;
        std::vector<T> band(static_cast<std::size_t>(m) * w, T(0));
        auto slot = [&](int i, int j) { return static_cast<std::size_t>(j) * w + (i - j + kb); };
        const int kg = a.half_bandwidth();
        if (f.has_perm(b)) {
            const auto& pm = f.perm[static_cast<std::size_t>(b)];
            for (int r = 0; r < m; ++r) {
                const int lo = r - kg > 0 ? r - kg : 0;
                const int hi = r + kg < m - 1 ? r + kg : m - 1;
                for (int c = lo; c <= hi; ++c) {
                    const T v = a.get(off + r, off + c);
                    if (v == T(0)) continue;
                    const int pr = pm[static_cast<std::size_t>(r)];
                    const int pc = pm[static_cast<std::size_t>(c)];
                    if (pr - pc > kb || pc - pr > kb)
                        throw std::invalid_argument(
                            "factor_blocks: block permutation exceeds bandwidth " +
                            std::to_string(kb));
                    band[slot(pr, pc)] = v;
                }
            }
        } else {
            for (int r = 0; r < m; ++r) {
                const int lo = r - kb > 0 ? r - kb : 0;
                const int hi = r + kb < m - 1 ? r + kb : m - 1;
                for (int c = lo; c <= hi; ++c) band[slot(r, c)] = a.get(off + r, off + c);
            }
        }
        double norm = 0;
        for (int r = 0; r < m; ++r) {
            double row = 0;
            const int lo = r - kb > 0 ? r - kb : 0;
            const int hi = r + kb < m - 1 ? r + kb : m - 1;
            for (int c = lo; c <= hi; ++c) row += std::abs(static_cast<double>(band[slot(r, c)]));
            if (row > norm) norm = row;
        }
        f.block_norm[static_cast<std::size_t>(b)] = norm;
        if (mode == FactorMode::lu_and_ul) {
            f.ul[static_cast<std::size_t>(b)] = band;
            f.boost_count_ul[static_cast<std::size_t>(b)] = detail::band_ul_inplace(
                m, kb, f.ul[static_cast<std::size_t>(b)].data(), boost_eps, norm);
        }
        f.boost_count[static_cast<std::size_t>(b)] =
            detail::band_lu_inplace(m, kb, band.data(), boost_eps, norm);
        f.lu[static_cast<std::size_t>(b)] = std::move(band);
    }
    return f;
}

/// Solves block `b`'s system in place for one right-hand side, undoing the
/// block permutation if present. The UL variant requires lu_and_ul factors.
template <class T>
void block_solve(const BlockFactors<T>& f, int b, std::span<T> x,
                 SolveVariant variant = SolveVariant::lu) {
    const int m = f.layout.size(b);
    const int kb = f.layout.k(b);
    if (static_cast<int>(x.size()) != m)
        throw std::invalid_argument("block_solve: right-hand side length mismatch");
    if (variant == SolveVariant::ul && !f.has_ul())
        throw std::invalid_argument("block_solve: UL factors not available");
    const std::vector<T>& band = variant == SolveVariant::lu ? f.lu[static_cast<std::size_t>(b)]
                                                             : f.ul[static_cast<std::size_t>(b)];
    if (f.has_perm(b)) {
        const auto& pm = f.perm[static_cast<std::size_t>(b)];
        std::vector<T> tmp(static_cast<std::size_t>(m));
        for (int r = 0; r < m; ++r) tmp[static_cast<std::size_t>(pm[static_cast<std::size_t>(r)])] = x[static_cast<std::size_t>(r)];
        if (variant == SolveVariant::lu)
            detail::band_lu_solve(m, kb, band.data(), tmp.data());
        else
            detail::band_ul_solve(m, kb, band.data(), tmp.data());
        for (int r = 0; r < m; ++r) x[static_cast<std::size_t>(r)] = tmp[static_cast<std::size_t>(pm[static_cast<std::size_t>(r)])];
    } else {
        if (variant == SolveVariant::lu)
            detail::band_lu_solve(m, kb, band.data(), x.data());
        else
            detail::band_ul_solve(m, kb, band.data(), x.data());
    }
}

}  // namespace sap
