#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "sap/errors.hpp"

namespace sap {

/// Coordinate entry used when assembling matrices from scattered input.
template <class T = double>
struct Triplet {
    int row = 0;
    int col = 0;
    T value = T(0);
};

/// Square banded matrix with half-bandwidth k, stored "tall and thin":
/// each column owns a contiguous run of 2k+1 slots, and entry (i, j) with
/// |i - j| <= k lives at slot j*(2k+1) + (i - j + k). Slots whose (i, j)
/// falls outside the matrix are padding and stay zero. For n = 4, k = 0 the
/// identity is stored as [1, 1, 1, 1]; for k = 1 column j holds the run
/// [a(j-1,j), a(j,j), a(j+1,j)].
template <class T = double>
class BandedMatrix {
    static_assert(std::is_floating_point_v<T>);

public:
    BandedMatrix() = default;

    BandedMatrix(int n, int k) : n_(n), k_(k) {
        if (n < 0 || k < 0) throw std::invalid_argument("BandedMatrix: negative dimension");
        store_.assign(static_cast<std::size_t>(n) * width(), T(0));
    }

    int rows() const noexcept { return n_; }
    int half_bandwidth() const noexcept { return k_; }
    int width() const noexcept { return 2 * k_ + 1; }

    bool in_band(int i, int j) const noexcept {
        return i >= 0 && i < n_ && j >= 0 && j < n_ && i - j <= k_ && j - i <= k_;
    }

    /// Storage slot of in-band entry (i, j).
    std::size_t slot(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * width() + static_cast<std::size_t>(i - j + k_);
    }

    /// Entry (i, j); zero outside the band or the matrix.
    T get(int i, int j) const noexcept { return in_band(i, j) ? store_[slot(i, j)] : T(0); }

    /// Writes entry (i, j); out-of-band targets are rejected.
    void set(int i, int j, T v) {
        if (!in_band(i, j))
            throw std::invalid_argument("BandedMatrix::set: entry (" + std::to_string(i) + ", " +
                                        std::to_string(j) + ") outside band");
        store_[slot(i, j)] = v;
    }

    /// In-band entry reference without bounds checking.
    T& at(int i, int j) noexcept { return store_[slot(i, j)]; }
    const T& at(int i, int j) const noexcept { return store_[slot(i, j)]; }

    std::span<const T> storage() const noexcept { return store_; }
    std::span<T> storage() noexcept { return store_; }

    /// y = A x.
    void matvec(std::span<const T> x, std::span<T> y) const {
        for (int i = 0; i < n_; ++i) {
            T acc = T(0);
            const int lo = i - k_ > 0 ? i - k_ : 0;
            const int hi = i + k_ < n_ - 1 ? i + k_ : n_ - 1;
            for (int j = lo; j <= hi; ++j) acc += store_[slot(i, j)] * x[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = acc;
        }
    }

    /// Infinity norm (max absolute row sum) of the diagonal sub-block
    /// rows/cols [begin, end).
    double block_inf_norm(int begin, int end) const {
        double best = 0;
        for (int i = begin; i < end; ++i) {
            double row = 0;
            const int lo = i - k_ > begin - 1 ? i - k_ : begin;
            const int hi = i + k_ < end - 1 ? i + k_ : end - 1;
            for (int j = lo; j <= hi; ++j) row += std::abs(static_cast<double>(store_[slot(i, j)]));
            if (row > best) best = row;
        }
        return best;
    }

    double inf_norm() const { return block_inf_norm(0, n_); }

private:
    int n_ = 0;
    int k_ = 0;
    std::vector<T> store_;
};

/// Builds a banded matrix from coordinate entries. Entries outside the
/// requested band and duplicate (i, j) pairs are rejected.
template <class T>
BandedMatrix<T> band_from_triplets(int n, int k, std::span<const Triplet<T>> entries) {
    BandedMatrix<T> a(n, k);
    std::vector<char> seen(static_cast<std::size_t>(n) * a.width(), 0);
    for (const auto& e : entries) {
        if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= n)
            throw std::invalid_argument("band_from_triplets: entry (" + std::to_string(e.row) +
                                        ", " + std::to_string(e.col) + ") outside matrix");
        if (!a.in_band(e.row, e.col))
            throw std::invalid_argument("band_from_triplets: entry (" + std::to_string(e.row) +
                                        ", " + std::to_string(e.col) + ") outside band");
        const std::size_t s = a.slot(e.row, e.col);
        if (seen[s])
            throw std::invalid_argument("band_from_triplets: duplicate entry (" +
                                        std::to_string(e.row) + ", " + std::to_string(e.col) + ")");
        seen[s] = 1;
        a.storage()[s] = e.value;
    }
    return a;
}

/// Copy-converts between scalar types (e.g. double to float for the
/// reduced-precision preconditioner).
template <class To, class From>
BandedMatrix<To> banded_cast(const BandedMatrix<From>& a) {
    BandedMatrix<To> out(a.rows(), a.half_bandwidth());
    auto src = a.storage();
    auto dst = out.storage();
    for (std::size_t s = 0; s < src.size(); ++s) dst[s] = static_cast<To>(src[s]);
    return out;
}

}  // namespace sap
