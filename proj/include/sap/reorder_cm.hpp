#pragma once

#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

#include "sap/banded_matrix.hpp"
#include "sap/partition.hpp"
#include "sap/sparse_matrix.hpp"

namespace sap {

/// Undirected adjacency of the symmetrized pattern (A union A^T) with the
/// diagonal dropped. Neighbor lists are pre-sorted by (degree, index) so a
/// breadth-first sweep emits neighbors in that order for free.
struct AdjGraph {
    int n = 0;
    std::vector<std::vector<int>> adj;
    std::vector<int> degree;
};

inline AdjGraph build_graph(const SparseMatrix& a) {
    AdjGraph g;
    g.n = a.n;
    g.adj.assign(static_cast<std::size_t>(a.n), {});
    for (int i = 0; i < a.n; ++i)
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            const int j = a.col_idx[static_cast<std::size_t>(s)];
            if (j == i) continue;
            g.adj[static_cast<std::size_t>(i)].push_back(j);
            g.adj[static_cast<std::size_t>(j)].push_back(i);
        }
    g.degree.resize(static_cast<std::size_t>(a.n));
    for (int i = 0; i < a.n; ++i) {
        auto& lst = g.adj[static_cast<std::size_t>(i)];
        std::sort(lst.begin(), lst.end());
        lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
        g.degree[static_cast<std::size_t>(i)] = static_cast<int>(lst.size());
    }
    for (auto& lst : g.adj)
        std::sort(lst.begin(), lst.end(), [&](int l, int r) {
            return g.degree[static_cast<std::size_t>(l)] != g.degree[static_cast<std::size_t>(r)]
                       ? g.degree[static_cast<std::size_t>(l)] < g.degree[static_cast<std::size_t>(r)]
                       : l < r;
        });
    return g;
}

/// Rooted level structure produced by one breadth-first sweep.
struct LevelStructure {
    int root = -1;
    std::vector<int> order;  // nodes in visit order
    int height = 0;          // number of levels
    int max_width = 0;       // widest level
};

/// Bandwidth-minimizing ordering: perm[old] = new position. achieved_k is
/// the half-bandwidth of the permuted pattern; starts_tried counts the
/// breadth-first sweeps taken across all components.
struct CmResult {
    std::vector<int> perm;
    int achieved_k = 0;
    int starts_tried = 0;
};

namespace detail {

inline LevelStructure cm_sweep(const AdjGraph& g, int root, std::vector<char>& visited_scratch) {
    LevelStructure ls;
    ls.root = root;
    std::vector<int> level;
    ls.order.push_back(root);
    level.push_back(0);
    visited_scratch[static_cast<std::size_t>(root)] = 1;
    for (std::size_t idx = 0; idx < ls.order.size(); ++idx) {
        const int u = ls.order[idx];
        for (int v : g.adj[static_cast<std::size_t>(u)])
            if (!visited_scratch[static_cast<std::size_t>(v)]) {
                visited_scratch[static_cast<std::size_t>(v)] = 1;
                ls.order.push_back(v);
                level.push_back(level[idx] + 1);
            }
    }
    for (int n : ls.order) visited_scratch[static_cast<std::size_t>(n)] = 0;
    ls.height = level.empty() ? 0 : level.back() + 1;
    std::vector<int> counts(static_cast<std::size_t>(ls.height), 0);
    for (int l : level) ++counts[static_cast<std::size_t>(l)];
    for (int c : counts) ls.max_width = std::max(ls.max_width, c);
    return ls;
}

inline int component_bandwidth(const AdjGraph& g, const std::vector<int>& order,
                               std::vector<int>& pos_scratch) {
    for (std::size_t i = 0; i < order.size(); ++i) pos_scratch[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    int k = 0;
    for (int u : order)
        for (int v : g.adj[static_cast<std::size_t>(u)])
            k = std::max(k, std::abs(pos_scratch[static_cast<std::size_t>(u)] - pos_scratch[static_cast<std::size_t>(v)]));
    return k;
}

}  // namespace detail

/// Multi-start Cuthill-McKee. Components are ordered by the index of their
/// minimum-degree representative and laid out contiguously. Within a
/// component up to three sweeps run: the first from the minimum-degree
/// node, later ones from an untried minimum-degree node of the incumbent's
/// last level (falling back to a seeded random untried node). The search
/// continues only while each new level structure is strictly taller and
/// strictly narrower than the incumbent; the sweep with the smallest
/// bandwidth wins, earliest first on ties.
inline CmResult cm_reorder(const AdjGraph& g, unsigned seed = 0) {
    CmResult res;
    res.perm.assign(static_cast<std::size_t>(g.n), -1);
    std::mt19937 rng(seed);
    std::vector<char> visit_scratch(static_cast<std::size_t>(g.n), 0);
    std::vector<int> pos_scratch(static_cast<std::size_t>(g.n), 0);

    // Components keyed by their minimum-(degree, index) representative,
    // then processed in ascending representative index.
    std::vector<std::vector<int>> comps;
    {
        std::vector<char> seen(static_cast<std::size_t>(g.n), 0);
        for (int s = 0; s < g.n; ++s) {
            if (seen[static_cast<std::size_t>(s)]) continue;
            std::vector<int> comp{s};
            seen[static_cast<std::size_t>(s)] = 1;
            for (std::size_t idx = 0; idx < comp.size(); ++idx)
                for (int v : g.adj[static_cast<std::size_t>(comp[idx])])
                    if (!seen[static_cast<std::size_t>(v)]) {
                        seen[static_cast<std::size_t>(v)] = 1;
                        comp.push_back(v);
                    }
            comps.push_back(std::move(comp));
        }
        auto rep = [&](const std::vector<int>& comp) {
            int best = comp.front();
            for (int v : comp)
                if (g.degree[static_cast<std::size_t>(v)] < g.degree[static_cast<std::size_t>(best)] ||
                    (g.degree[static_cast<std::size_t>(v)] == g.degree[static_cast<std::size_t>(best)] && v < best))
                    best = v;
            return best;
        };
        std::sort(comps.begin(), comps.end(),
                  [&](const auto& l, const auto& r) { return rep(l) < rep(r); });
    }

    int next_pos = 0;
    for (const auto& comp : comps) {
        int rep = comp.front();
        for (int v : comp)
            if (g.degree[static_cast<std::size_t>(v)] < g.degree[static_cast<std::size_t>(rep)] ||
                (g.degree[static_cast<std::size_t>(v)] == g.degree[static_cast<std::size_t>(rep)] && v < rep))
                rep = v;

        struct Trial {
            LevelStructure ls;
            int k = 0;
        };
        std::vector<Trial> trials;
        std::vector<char> tried(static_cast<std::size_t>(g.n), 0);
        auto run = [&](int start) {
            Trial t;
            t.ls = detail::cm_sweep(g, start, visit_scratch);
            t.k = detail::component_bandwidth(g, t.ls.order, pos_scratch);
            tried[static_cast<std::size_t>(start)] = 1;
            trials.push_back(std::move(t));
            ++res.starts_tried;
        };
        run(rep);
        std::size_t incumbent = 0;
        while (trials.size() < 3) {
            // Untried minimum-(degree, index) node of the incumbent's last level.
            const auto& inc = trials[incumbent].ls;
            std::vector<int> last_level;
            {
                // Recover the last level: nodes whose breadth-first distance
                // equals height - 1. Rebuild distances from the stored order.
                std::vector<int> depth(static_cast<std::size_t>(g.n), -1);
                depth[static_cast<std::size_t>(inc.order.front())] = 0;
                for (int u : inc.order)
                    for (int v : g.adj[static_cast<std::size_t>(u)])
                        if (depth[static_cast<std::size_t>(v)] == -1)
                            depth[static_cast<std::size_t>(v)] = depth[static_cast<std::size_t>(u)] + 1;
                for (int u : inc.order)
                    if (depth[static_cast<std::size_t>(u)] == inc.height - 1) last_level.push_back(u);
            }
            int start = -1;
            for (int v : last_level)
                if (!tried[static_cast<std::size_t>(v)] &&
                    (start == -1 ||
                     g.degree[static_cast<std::size_t>(v)] < g.degree[static_cast<std::size_t>(start)] ||
                     (g.degree[static_cast<std::size_t>(v)] == g.degree[static_cast<std::size_t>(start)] && v < start)))
                    start = v;
            if (start == -1) {
                std::vector<int> untried;
                for (int v : comp)
                    if (!tried[static_cast<std::size_t>(v)]) untried.push_back(v);
                if (untried.empty()) break;
                std::sort(untried.begin(), untried.end());
                start = untried[static_cast<std::size_t>(rng() % untried.size())];
            }
            run(start);
            const auto& cand = trials.back().ls;
            if (cand.height > trials[incumbent].ls.height && cand.max_width < trials[incumbent].ls.max_width)
                incumbent = trials.size() - 1;
            else
                break;
        }
        std::size_t best = 0;
        for (std::size_t t = 1; t < trials.size(); ++t)
            if (trials[t].k < trials[best].k) best = t;
        res.achieved_k = std::max(res.achieved_k, trials[best].k);
        for (int u : trials[best].ls.order) res.perm[static_cast<std::size_t>(u)] = next_pos++;
    }
    return res;
}

/// Per-partition reordering of the diagonal blocks of an assembled banded
/// matrix. Each block gets its own Cuthill-McKee pass; the block
/// permutation is adopted only when it strictly shrinks the block's
/// half-bandwidth, otherwise the identity (and the block's own bandwidth)
/// is kept. Global couplings are untouched, so with differing block
/// bandwidths downstream spike computation must use full-length spikes.
struct ThirdStageResult {
    std::vector<std::vector<int>> block_perms;  // empty vector means identity
    std::vector<int> block_k;
    int starts_tried = 0;
};

template <class T>
ThirdStageResult third_stage(const BandedMatrix<T>& a, const PartitionLayout& layout,
                             unsigned seed = 0) {
    ThirdStageResult out;
    out.block_perms.resize(static_cast<std::size_t>(layout.p));
    out.block_k.resize(static_cast<std::size_t>(layout.p));
    for (int b = 0; b < layout.p; ++b) {
        const int off = layout.offset(b);
        const int m = layout.size(b);
        const int kb = layout.k(b);
        AdjGraph g;
        g.n = m;
        g.adj.assign(static_cast<std::size_t>(m), {});
        int identity_k = 0;
        for (int r = 0; r < m; ++r) {
            const int hi = r + kb < m - 1 ? r + kb : m - 1;
            for (int c = r + 1; c <= hi; ++c)
                if (a.get(off + r, off + c) != T(0) || a.get(off + c, off + r) != T(0)) {
                    g.adj[static_cast<std::size_t>(r)].push_back(c);
                    g.adj[static_cast<std::size_t>(c)].push_back(r);
                    identity_k = std::max(identity_k, c - r);
                }
        }
        g.degree.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) g.degree[static_cast<std::size_t>(i)] = static_cast<int>(g.adj[static_cast<std::size_t>(i)].size());
        for (auto& lst : g.adj)
            std::sort(lst.begin(), lst.end(), [&](int l, int r) {
                return g.degree[static_cast<std::size_t>(l)] != g.degree[static_cast<std::size_t>(r)]
                           ? g.degree[static_cast<std::size_t>(l)] < g.degree[static_cast<std::size_t>(r)]
                           : l < r;
            });
        CmResult cm = cm_reorder(g, seed);
        out.starts_tried += cm.starts_tried;
        if (cm.achieved_k < identity_k) {
            out.block_perms[static_cast<std::size_t>(b)] = std::move(cm.perm);
            out.block_k[static_cast<std::size_t>(b)] = cm.achieved_k;
        } else {
            out.block_k[static_cast<std::size_t>(b)] = identity_k;
        }
    }
    return out;
}

}  // namespace sap
