#pragma once

#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sap/errors.hpp"
#include "sap/sparse_matrix.hpp"

namespace sap {

/// Bipartite row-to-column assignment problem whose minimum-cost perfect
/// matching maximizes the product of matched magnitudes: each structural
/// nonzero a_ij becomes an edge of cost log(max_l |a_il|) - log|a_ij|,
/// which is nonnegative and zero exactly on a row's largest entries.
/// Entries stored as zero carry no edge.
struct WeightedBipartite {
    int n = 0;
    std::vector<int> row_ptr;
    std::vector<int> col_idx;
    std::vector<double> cost;
    std::vector<double> row_max;
};

/// Duals stay feasible (cost - u_i - v_j >= -1e-12) throughout; matched
/// edges are tight.
struct MatchState {
    std::vector<int> row_match;  // -1 while unmatched
    std::vector<int> col_match;
    std::vector<double> u;
    std::vector<double> v;
};

/// Row permutation plus the optional two-sided scaling that turns the
/// permuted matrix into one with unit-magnitude diagonal and off-diagonal
/// magnitudes at most one. Row i of the original moves to position perm[i].
struct DbResult {
    std::vector<int> perm;
    std::vector<double> row_scale;
    std::vector<double> col_scale;
    bool scaled = false;
};

inline constexpr double kDualSlack = 1e-12;

inline WeightedBipartite build_weights(const SparseMatrix& a) {
    WeightedBipartite g;
    g.n = a.n;
    g.row_ptr.assign(static_cast<std::size_t>(a.n) + 1, 0);
    g.row_max.assign(static_cast<std::size_t>(a.n), 0.0);
    for (int i = 0; i < a.n; ++i) {
        double mx = 0;
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
            mx = std::max(mx, std::abs(a.values[static_cast<std::size_t>(s)]));
        if (mx == 0.0)
            throw StructuralSingularityError("row " + std::to_string(i) + " has no nonzero entries");
        g.row_max[static_cast<std::size_t>(i)] = mx;
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            if (a.values[static_cast<std::size_t>(s)] == 0.0) continue;
            g.col_idx.push_back(a.col_idx[static_cast<std::size_t>(s)]);
            g.cost.push_back(std::log(mx) - std::log(std::abs(a.values[static_cast<std::size_t>(s)])));
        }
        g.row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(g.col_idx.size());
    }
    return g;
}

/// Dual initialization u_i = min_j c_ij, v_j = min_i (c_ij - u_i), then a
/// greedy pass matching rows in ascending order to their first tight
/// unmatched column.
inline MatchState initial_match(const WeightedBipartite& g) {
    MatchState m;
    const int n = g.n;
    m.row_match.assign(static_cast<std::size_t>(n), -1);
    m.col_match.assign(static_cast<std::size_t>(n), -1);
    m.u.assign(static_cast<std::size_t>(n), 0.0);
    m.v.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) {
        double mn = std::numeric_limits<double>::infinity();
        for (int s = g.row_ptr[static_cast<std::size_t>(i)]; s < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
            mn = std::min(mn, g.cost[static_cast<std::size_t>(s)]);
        m.u[static_cast<std::size_t>(i)] = mn;
    }
    for (int i = 0; i < n; ++i)
        for (int s = g.row_ptr[static_cast<std::size_t>(i)]; s < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            const int j = g.col_idx[static_cast<std::size_t>(s)];
            m.v[static_cast<std::size_t>(j)] = std::min(m.v[static_cast<std::size_t>(j)],
                                                        g.cost[static_cast<std::size_t>(s)] - m.u[static_cast<std::size_t>(i)]);
        }
    for (int j = 0; j < n; ++j)
        if (!std::isfinite(m.v[static_cast<std::size_t>(j)])) m.v[static_cast<std::size_t>(j)] = 0.0;
    for (int i = 0; i < n; ++i)
        for (int s = g.row_ptr[static_cast<std::size_t>(i)]; s < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            const int j = g.col_idx[static_cast<std::size_t>(s)];
            if (m.col_match[static_cast<std::size_t>(j)] != -1) continue;
            if (g.cost[static_cast<std::size_t>(s)] - m.u[static_cast<std::size_t>(i)] -
                    m.v[static_cast<std::size_t>(j)] <=
                kDualSlack) {
                m.row_match[static_cast<std::size_t>(i)] = j;
                m.col_match[static_cast<std::size_t>(j)] = i;
                break;
            }
        }
    return m;
}

/// Completes the matching by shortest augmenting paths over reduced costs,
/// updating duals after each augmentation. Frontier ties are broken by
/// ascending column index, so the result is deterministic. Failure to
/// reach an unmatched column proves structural singularity; the visited
/// rows form a deficient set (more rows than reachable columns).
inline void perfect_match(const WeightedBipartite& g, MatchState& m) {
    const int n = g.n;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<std::size_t>(n));
    std::vector<int> pred(static_cast<std::size_t>(n));
    std::vector<char> done(static_cast<std::size_t>(n));
    using Node = std::pair<double, int>;
    for (int r0 = 0; r0 < n; ++r0) {
        if (m.row_match[static_cast<std::size_t>(r0)] != -1) continue;
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(pred.begin(), pred.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        std::priority_queue<Node, std::vector<Node>, std::greater<Node>> pq;
        auto relax_row = [&](int i, double base) {
            for (int s = g.row_ptr[static_cast<std::size_t>(i)]; s < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
                const int j = g.col_idx[static_cast<std::size_t>(s)];
                if (done[static_cast<std::size_t>(j)]) continue;
                double rc = g.cost[static_cast<std::size_t>(s)] - m.u[static_cast<std::size_t>(i)] -
                            m.v[static_cast<std::size_t>(j)];
                if (rc < 0) rc = 0;  // guards against roundoff in the duals
                const double nd = base + rc;
                if (nd < dist[static_cast<std::size_t>(j)]) {
                    dist[static_cast<std::size_t>(j)] = nd;
                    pred[static_cast<std::size_t>(j)] = i;
                    pq.emplace(nd, j);
                }
            }
        };
        relax_row(r0, 0.0);
        int jstar = -1;
        double delta = 0;
        while (!pq.empty()) {
            const auto [d, j] = pq.top();
            pq.pop();
            if (done[static_cast<std::size_t>(j)] || d > dist[static_cast<std::size_t>(j)]) continue;
            done[static_cast<std::size_t>(j)] = 1;
            if (m.col_match[static_cast<std::size_t>(j)] == -1) {
                jstar = j;
                delta = d;
                break;
            }
            relax_row(m.col_match[static_cast<std::size_t>(j)], d);
        }
        if (jstar == -1) {
            std::string rows = std::to_string(r0);
            int listed = 1;
            for (int j = 0; j < n && listed < 8; ++j)
                if (done[static_cast<std::size_t>(j)] && m.col_match[static_cast<std::size_t>(j)] != -1) {
                    rows += ", " + std::to_string(m.col_match[static_cast<std::size_t>(j)]);
                    ++listed;
                }
            throw StructuralSingularityError(
                "no perfect row-to-column matching exists; deficient rows include {" + rows + "}");
        }
        for (int j = 0; j < n; ++j) {
            if (!done[static_cast<std::size_t>(j)]) continue;
            m.v[static_cast<std::size_t>(j)] += dist[static_cast<std::size_t>(j)] - delta;
            const int i = m.col_match[static_cast<std::size_t>(j)];
            if (i != -1) m.u[static_cast<std::size_t>(i)] += delta - dist[static_cast<std::size_t>(j)];
        }
        m.u[static_cast<std::size_t>(r0)] += delta;
        int j = jstar;
        while (j != -1) {
            const int i = pred[static_cast<std::size_t>(j)];
            const int next = i == r0 ? -1 : m.row_match[static_cast<std::size_t>(i)];
            m.row_match[static_cast<std::size_t>(i)] = j;
            m.col_match[static_cast<std::size_t>(j)] = i;
            j = next;
        }
    }
}

/// Reads the permutation and, when requested, the scalings
/// r_i = exp(u_i) / max_l |a_il| and s_j = exp(v_j). Scaling the permuted
/// matrix by them puts magnitude one on the diagonal and at most one
/// everywhere else.
inline DbResult extract_result(const WeightedBipartite& g, const MatchState& m,
                               bool apply_scaling) {
    DbResult r;
    r.perm.assign(m.row_match.begin(), m.row_match.end());
    r.scaled = apply_scaling;
    if (apply_scaling) {
        r.row_scale.resize(static_cast<std::size_t>(g.n));
        r.col_scale.resize(static_cast<std::size_t>(g.n));
        for (int i = 0; i < g.n; ++i) {
            r.row_scale[static_cast<std::size_t>(i)] =
                std::exp(m.u[static_cast<std::size_t>(i)]) / g.row_max[static_cast<std::size_t>(i)];
            r.col_scale[static_cast<std::size_t>(i)] = std::exp(m.v[static_cast<std::size_t>(i)]);
        }
    } else {
        r.row_scale.assign(static_cast<std::size_t>(g.n), 1.0);
        r.col_scale.assign(static_cast<std::size_t>(g.n), 1.0);
    }
    return r;
}

/// All four stages in sequence.
inline DbResult db_reorder(const SparseMatrix& a, bool apply_scaling) {
    const WeightedBipartite g = build_weights(a);
    MatchState m = initial_match(g);
    perfect_match(g, m);
    return extract_result(g, m, apply_scaling);
}

}  // namespace sap
