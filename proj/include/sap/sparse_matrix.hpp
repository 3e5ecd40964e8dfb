#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "sap/banded_matrix.hpp"

namespace sap {

/// Square sparse matrix in compressed row storage. Column indices are
/// sorted and unique within each row; explicit zeros may be stored.
struct SparseMatrix {
    int n = 0;
    std::vector<int> row_ptr;  // size n + 1
    std::vector<int> col_idx;
    std::vector<double> values;

    int nnz() const { return static_cast<int>(col_idx.size()); }

    void matvec(std::span<const double> x, std::span<double> y) const {
        for (int i = 0; i < n; ++i) {
            double acc = 0;
            for (int s = row_ptr[static_cast<std::size_t>(i)]; s < row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
                acc += values[static_cast<std::size_t>(s)] * x[static_cast<std::size_t>(col_idx[static_cast<std::size_t>(s)])];
            y[static_cast<std::size_t>(i)] = acc;
        }
    }
};

/// Builds CSR from coordinate entries, summing duplicates.
inline SparseMatrix sparse_from_triplets(int n, std::span<const Triplet<double>> entries) {
    if (n < 0) throw std::invalid_argument("sparse_from_triplets: negative dimension");
    for (const auto& e : entries)
        if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= n)
            throw std::invalid_argument("sparse_from_triplets: entry (" + std::to_string(e.row) +
                                        ", " + std::to_string(e.col) + ") outside matrix");
    SparseMatrix a;
    a.n = n;
    a.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& e : entries) ++a.row_ptr[static_cast<std::size_t>(e.row) + 1];
    for (int i = 0; i < n; ++i) a.row_ptr[static_cast<std::size_t>(i) + 1] += a.row_ptr[static_cast<std::size_t>(i)];
    std::vector<int> cols(entries.size());
    std::vector<double> vals(entries.size());
    {
        std::vector<int> cursor(a.row_ptr.begin(), a.row_ptr.end() - 1);
        for (const auto& e : entries) {
            const int s = cursor[static_cast<std::size_t>(e.row)]++;
            cols[static_cast<std::size_t>(s)] = e.col;
            vals[static_cast<std::size_t>(s)] = e.value;
        }
    }
    a.col_idx.reserve(entries.size());
    a.values.reserve(entries.size());
    std::vector<int> out_ptr(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::pair<int, double>> row;
    for (int i = 0; i < n; ++i) {
        row.clear();
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
            row.emplace_back(cols[static_cast<std::size_t>(s)], vals[static_cast<std::size_t>(s)]);
        std::sort(row.begin(), row.end(),
                  [](const auto& l, const auto& r) { return l.first < r.first; });
        for (std::size_t s = 0; s < row.size(); ++s) {
            if (s > 0 && row[s].first == row[s - 1].first) {
                a.values.back() += row[s].second;
            } else {
                a.col_idx.push_back(row[s].first);
                a.values.push_back(row[s].second);
            }
        }
        out_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(a.col_idx.size());
    }
    a.row_ptr = std::move(out_ptr);
    return a;
}

/// Max |i - j| over stored entries; 0 for an empty matrix.
inline int half_bandwidth(const SparseMatrix& a) {
    int k = 0;
    for (int i = 0; i < a.n; ++i)
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
            k = std::max(k, std::abs(i - a.col_idx[static_cast<std::size_t>(s)]));
    return k;
}

/// Moves row i to position perm[i]; columns are untouched.
inline SparseMatrix permute_rows(const SparseMatrix& a, std::span<const int> perm) {
    SparseMatrix out;
    out.n = a.n;
    out.row_ptr.assign(static_cast<std::size_t>(a.n) + 1, 0);
    for (int i = 0; i < a.n; ++i)
        out.row_ptr[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]) + 1] =
            a.row_ptr[static_cast<std::size_t>(i) + 1] - a.row_ptr[static_cast<std::size_t>(i)];
    for (int i = 0; i < a.n; ++i) out.row_ptr[static_cast<std::size_t>(i) + 1] += out.row_ptr[static_cast<std::size_t>(i)];
    out.col_idx.resize(a.col_idx.size());
    out.values.resize(a.values.size());
    for (int i = 0; i < a.n; ++i) {
        int t = out.row_ptr[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s, ++t) {
            out.col_idx[static_cast<std::size_t>(t)] = a.col_idx[static_cast<std::size_t>(s)];
            out.values[static_cast<std::size_t>(t)] = a.values[static_cast<std::size_t>(s)];
        }
    }
    return out;
}

/// Symmetric permutation: entry (i, j) moves to (perm[i], perm[j]).
inline SparseMatrix permute_symmetric(const SparseMatrix& a, std::span<const int> perm) {
    SparseMatrix out;
    out.n = a.n;
    out.row_ptr.assign(static_cast<std::size_t>(a.n) + 1, 0);
    for (int i = 0; i < a.n; ++i)
        out.row_ptr[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]) + 1] =
            a.row_ptr[static_cast<std::size_t>(i) + 1] - a.row_ptr[static_cast<std::size_t>(i)];
    for (int i = 0; i < a.n; ++i) out.row_ptr[static_cast<std::size_t>(i) + 1] += out.row_ptr[static_cast<std::size_t>(i)];
    out.col_idx.resize(a.col_idx.size());
    out.values.resize(a.values.size());
    std::vector<std::pair<int, double>> row;
    for (int i = 0; i < a.n; ++i) {
        row.clear();
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
            row.emplace_back(perm[static_cast<std::size_t>(a.col_idx[static_cast<std::size_t>(s)])],
                             a.values[static_cast<std::size_t>(s)]);
        std::sort(row.begin(), row.end(),
                  [](const auto& l, const auto& r) { return l.first < r.first; });
        int t = out.row_ptr[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        for (const auto& [c, v] : row) {
            out.col_idx[static_cast<std::size_t>(t)] = c;
            out.values[static_cast<std::size_t>(t)] = v;
            ++t;
        }
    }
    return out;
}

/// Returns a copy with row i multiplied by r[i] and column j by c[j].
inline SparseMatrix scale_rows_cols(const SparseMatrix& a, std::span<const double> r,
                                    std::span<const double> c) {
    SparseMatrix out = a;
    for (int i = 0; i < a.n; ++i)
        for (int s = out.row_ptr[static_cast<std::size_t>(i)]; s < out.row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
            out.values[static_cast<std::size_t>(s)] *=
                r[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(out.col_idx[static_cast<std::size_t>(s)])];
    return out;
}

inline SparseMatrix transpose(const SparseMatrix& a) {
    SparseMatrix out;
    out.n = a.n;
    out.row_ptr.assign(static_cast<std::size_t>(a.n) + 1, 0);
    for (int c : a.col_idx) ++out.row_ptr[static_cast<std::size_t>(c) + 1];
    for (int i = 0; i < a.n; ++i) out.row_ptr[static_cast<std::size_t>(i) + 1] += out.row_ptr[static_cast<std::size_t>(i)];
    out.col_idx.resize(a.col_idx.size());
    out.values.resize(a.values.size());
    std::vector<int> cursor(out.row_ptr.begin(), out.row_ptr.end() - 1);
    for (int i = 0; i < a.n; ++i)
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            const int c = a.col_idx[static_cast<std::size_t>(s)];
            const int t = cursor[static_cast<std::size_t>(c)]++;
            out.col_idx[static_cast<std::size_t>(t)] = i;
            out.values[static_cast<std::size_t>(t)] = a.values[static_cast<std::size_t>(s)];
        }
    return out;
}

/// Degree of diagonal dominance: min over rows of |a_ii| divided by the
/// sum of off-diagonal magnitudes. Rows whose off-diagonal sum is zero are
/// excluded; if every row is excluded the result is +infinity.
inline double diagonal_dominance(const SparseMatrix& a) {
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a.n; ++i) {
        double diag = 0, off = 0;
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            if (a.col_idx[static_cast<std::size_t>(s)] == i)
                diag = std::abs(a.values[static_cast<std::size_t>(s)]);
            else
                off += std::abs(a.values[static_cast<std::size_t>(s)]);
        }
        if (off > 0) d = std::min(d, diag / off);
    }
    return d;
}

}  // namespace sap
