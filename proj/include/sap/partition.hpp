#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sap {

/// Row partitioning of an n x n banded matrix into p contiguous diagonal
/// blocks. The first `remainder` partitions are one row larger, so sizes
/// differ by at most one. Every partition must satisfy N_i >= 2 K_i so its
/// top and bottom K_i-row strips do not overlap.
struct PartitionLayout {
    int p = 1;
    std::vector<int> sizes;            // N_i, one per partition
    std::vector<int> offsets;          // prefix sums; offsets[p] == n
    int remainder = 0;                 // count of partitions of size floor(n/p)+1
    std::vector<int> per_partition_k;  // K_i; uniform until a per-block reordering shrinks it

    int total() const { return offsets.empty() ? 0 : offsets.back(); }
    int size(int i) const { return sizes[static_cast<std::size_t>(i)]; }
    int offset(int i) const { return offsets[static_cast<std::size_t>(i)]; }
    int k(int i) const { return per_partition_k[static_cast<std::size_t>(i)]; }
    int max_k() const {
        int best = 0;
        for (int v : per_partition_k)
            if (v > best) best = v;
        return best;
    }
};

/// Largest partition count that keeps every block at least max(1, 2k) rows.
inline int max_feasible_partitions(int n, int k) {
    if (n <= 0) return 0;
    return k == 0 ? n : n / (2 * k);
}

/// Splits n rows into p blocks: the first n mod p blocks get floor(n/p)+1
/// rows, the rest floor(n/p). Rejects layouts whose smallest block would
/// fall below 2k rows, naming the largest feasible p.
inline PartitionLayout make_partition_layout(int n, int p, int k) {
    if (n <= 0) throw std::invalid_argument("make_partition_layout: empty matrix");
    if (p <= 0) throw std::invalid_argument("make_partition_layout: partition count must be positive");
    if (k < 0) throw std::invalid_argument("make_partition_layout: negative bandwidth");
    const int base = n / p;
    const int rem = n % p;
    const int min_size = base;  // partitions beyond the first rem ones
    const int required = k == 0 ? 1 : 2 * k;
    if (min_size < required)
        throw std::invalid_argument("make_partition_layout: " + std::to_string(p) +
                                    " partitions leave blocks under " + std::to_string(required) +
                                    " rows for half-bandwidth " + std::to_string(k) +
                                    "; largest feasible p is " +
                                    std::to_string(max_feasible_partitions(n, k)));
    PartitionLayout layout;
    layout.p = p;
    layout.remainder = rem;
    layout.sizes.resize(static_cast<std::size_t>(p));
    layout.offsets.resize(static_cast<std::size_t>(p) + 1);
    layout.offsets[0] = 0;
    for (int i = 0; i < p; ++i) {
        layout.sizes[static_cast<std::size_t>(i)] = base + (i < rem ? 1 : 0);
        layout.offsets[static_cast<std::size_t>(i) + 1] =
            layout.offsets[static_cast<std::size_t>(i)] + layout.sizes[static_cast<std::size_t>(i)];
    }
    layout.per_partition_k.assign(static_cast<std::size_t>(p), k);
    return layout;
}

}  // namespace sap
