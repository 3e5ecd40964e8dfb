#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "sap/block_factors.hpp"
#include "sap/errors.hpp"

namespace sap {

enum class PrecondKind { coupled, decoupled, diagonal, none };

namespace detail {

/// In-place dense no-pivot LU (row-major w x w) with the same pivot
/// boosting policy as the banded sweeps. Returns the boost count.
template <class T>
int dense_lu_nopivot_boosted(int w, T* a, double boost_eps) {
    double norm = 0;
    for (int i = 0; i < w; ++i) {
        double row = 0;
        for (int j = 0; j < w; ++j) row += std::abs(static_cast<double>(a[i * w + j]));
        if (row > norm) norm = row;
    }
    const T bv = static_cast<T>(boost_eps * (norm > 0 ? norm : 1.0));
    int boosts = 0;
    for (int j = 0; j < w; ++j) {
        T p = a[j * w + j];
        if (std::abs(p) < bv) {
            p = p < T(0) ? -bv : bv;
            a[j * w + j] = p;
            ++boosts;
        }
        for (int i = j + 1; i < w; ++i) {
            const T l = a[i * w + j] / p;
            a[i * w + j] = l;
            if (l == T(0)) continue;
            for (int c = j + 1; c < w; ++c) a[i * w + c] -= l * a[j * w + c];
        }
    }
    return boosts;
}

template <class T>
void dense_lu_solve(int w, const T* f, T* x) {
    for (int i = 0; i < w; ++i) {
        T acc = x[i];
        for (int j = 0; j < i; ++j) acc -= f[i * w + j] * x[j];
        x[i] = acc;
    }
    for (int i = w - 1; i >= 0; --i) {
        T acc = x[i];
        for (int j = i + 1; j < w; ++j) acc -= f[i * w + j] * x[j];
        x[i] = acc / f[i * w + i];
    }
}

/// y -= A x for a dense row-major w x w block.
template <class T>
void dense_gemv_sub(int w, const T* a, const T* x, T* y) {
    for (int i = 0; i < w; ++i) {
        T acc = T(0);
        for (int j = 0; j < w; ++j) acc += a[i * w + j] * x[j];
        y[i] -= acc;
    }
}

template <class T>
bool all_finite(const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace detail

/// Off-diagonal coupling corners at each partition interface. Interface t
/// joins partitions t and t+1 with width w = max(K_t, K_{t+1}):
/// b_blocks[t] is the w x w corner linking partition t's last w rows to
/// partition t+1's first w columns, c_blocks[t] the transposed-position
/// corner linking partition t+1's first w rows to partition t's last w
/// columns. Both are dense row-major with zeros where the matrix is zero.
template <class T = double>
struct CouplingBlocks {
    std::vector<int> width;
    std::vector<std::vector<T>> b_blocks;
    std::vector<std::vector<T>> c_blocks;

    int interfaces() const { return static_cast<int>(width.size()); }
};

template <class T>
CouplingBlocks<T> extract_coupling(const BandedMatrix<T>& a, const PartitionLayout& layout) {
    if (layout.total() != a.rows())
        throw std::invalid_argument("extract_coupling: layout does not cover the matrix");
    CouplingBlocks<T> cb;
    const int p = layout.p;
    for (int t = 0; t + 1 < p; ++t) {
        const int w = std::max(layout.k(t), layout.k(t + 1));
        const int end_t = layout.offset(t + 1);  // one past partition t
        cb.width.push_back(w);
        std::vector<T> b(static_cast<std::size_t>(w) * w, T(0));
        std::vector<T> c(static_cast<std::size_t>(w) * w, T(0));
        for (int r = 0; r < w; ++r)
            for (int j = 0; j < w; ++j) {
                b[static_cast<std::size_t>(r) * w + j] = a.get(end_t - w + r, end_t + j);
                c[static_cast<std::size_t>(r) * w + j] = a.get(end_t + r, end_t - w + j);
            }
        cb.b_blocks.push_back(std::move(b));
        cb.c_blocks.push_back(std::move(c));
    }
    return cb;
}

/// Spike tips and reduced interface factors for the truncated coupled
/// preconditioner. v_bottom[t] is the bottom w x w of the right spike of
/// partition t (the solution of A_t V = [0; B_t]), w_top[t] the top w x w
/// of the left spike of partition t+1 (A_{t+1} W = [C_{t+1}; 0]). rbar[t]
/// holds the no-pivot LU factors of I - w_top[t] * v_bottom[t]. Full-length
/// spikes are kept column-major when computed.
template <class T = double>
struct SpikeSet {
    std::vector<int> width;
    std::vector<std::vector<T>> v_bottom;
    std::vector<std::vector<T>> w_top;
    std::vector<std::vector<T>> v_full;  // N_t x w, column-major; empty when tips-only
    std::vector<std::vector<T>> w_full;  // N_{t+1} x w, column-major
    std::vector<std::vector<T>> rbar;
    std::vector<int> rbar_boosts;
    CouplingBlocks<T> coupling;
    double rbar_seconds = 0;  // time spent forming and factoring the rbar blocks

    bool has_full() const { return !v_full.empty(); }
    int interfaces() const { return static_cast<int>(width.size()); }
};

namespace detail {

/// Forms and factors rbar[t] = I - w_top[t] v_bottom[t] for every interface.
template <class T>
void finish_reduced_blocks(SpikeSet<T>& s, double boost_eps) {
    const auto started = std::chrono::steady_clock::now();
    const int ni = s.interfaces();
    s.rbar.resize(static_cast<std::size_t>(ni));
    s.rbar_boosts.assign(static_cast<std::size_t>(ni), 0);
    for (int t = 0; t < ni; ++t) {
        const int w = s.width[static_cast<std::size_t>(t)];
        const auto& wt = s.w_top[static_cast<std::size_t>(t)];
        const auto& vb = s.v_bottom[static_cast<std::size_t>(t)];
        std::vector<T> r(static_cast<std::size_t>(w) * w, T(0));
        for (int i = 0; i < w; ++i) {
            for (int j = 0; j < w; ++j) {
                T acc = T(0);
                for (int l = 0; l < w; ++l)
                    acc += wt[static_cast<std::size_t>(i) * w + l] * vb[static_cast<std::size_t>(l) * w + j];
                r[static_cast<std::size_t>(i) * w + j] = (i == j ? T(1) : T(0)) - acc;
            }
        }
        if (!all_finite(r))
            throw PreconditionerError("reduced interface block " + std::to_string(t) +
                                      " is not finite");
        s.rbar_boosts[static_cast<std::size_t>(t)] = dense_lu_nopivot_boosted(w, r.data(), boost_eps);
        s.rbar[static_cast<std::size_t>(t)] = std::move(r);
    }
    s.rbar_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
}

}  // namespace detail

/// Computes spike tips from the triangular corners of the block factors:
/// only the trailing w x w of partition t's LU and the leading w x w of
/// partition t+1's UL are touched, never the block interiors. Requires UL
/// factors and identity block permutations.
template <class T>
SpikeSet<T> compute_spike_tips(const BlockFactors<T>& f, const CouplingBlocks<T>& cb) {
    if (!f.has_ul())
        throw std::invalid_argument("compute_spike_tips: UL factors required");
    for (int b = 0; b < f.layout.p; ++b)
        if (f.has_perm(b))
            throw std::invalid_argument("compute_spike_tips: block permutations require full spikes");
    SpikeSet<T> s;
    s.width = cb.width;
    s.coupling = cb;
    const int ni = cb.interfaces();
    for (int t = 0; t < ni; ++t) {
        const int w = cb.width[static_cast<std::size_t>(t)];
        // Bottom tip of the right spike: solve the trailing corner of L U.
        {
            const int m = f.layout.size(t);
            const int kb = f.layout.k(t);
            const auto& band = f.lu[static_cast<std::size_t>(t)];
            auto lu_at = [&](int i, int j) -> T {
                const int gi = m - w + i, gj = m - w + j;
                if (gi - gj > kb || gj - gi > kb) return T(0);
                return band[static_cast<std::size_t>(gj) * (2 * kb + 1) + (gi - gj + kb)];
            };
            std::vector<T> tip(static_cast<std::size_t>(w) * w);
            std::vector<T> col(static_cast<std::size_t>(w));
            for (int c = 0; c < w; ++c) {
                for (int r = 0; r < w; ++r) col[static_cast<std::size_t>(r)] = cb.b_blocks[static_cast<std::size_t>(t)][static_cast<std::size_t>(r) * w + c];
                for (int i = 0; i < w; ++i) {  // unit lower corner, forward
                    T acc = col[static_cast<std::size_t>(i)];
                    for (int j = 0; j < i; ++j) acc -= lu_at(i, j) * col[static_cast<std::size_t>(j)];
                    col[static_cast<std::size_t>(i)] = acc;
                }
                for (int i = w - 1; i >= 0; --i) {  // upper corner, backward
                    T acc = col[static_cast<std::size_t>(i)];
                    for (int j = i + 1; j < w; ++j) acc -= lu_at(i, j) * col[static_cast<std::size_t>(j)];
                    col[static_cast<std::size_t>(i)] = acc / lu_at(i, i);
                }
                for (int r = 0; r < w; ++r) tip[static_cast<std::size_t>(r) * w + c] = col[static_cast<std::size_t>(r)];
            }
            if (!detail::all_finite(tip))
                throw PreconditionerError("right spike tip at interface " + std::to_string(t) +
                                          " is not finite");
            s.v_bottom.push_back(std::move(tip));
        }
        // Top tip of the left spike: solve the leading corner of U L.
        {
            const int kb = f.layout.k(t + 1);
            const auto& band = f.ul[static_cast<std::size_t>(t + 1)];
            auto ul_at = [&](int i, int j) -> T {
                if (i - j > kb || j - i > kb) return T(0);
                return band[static_cast<std::size_t>(j) * (2 * kb + 1) + (i - j + kb)];
            };
            std::vector<T> tip(static_cast<std::size_t>(w) * w);
            std::vector<T> col(static_cast<std::size_t>(w));
            for (int c = 0; c < w; ++c) {
                for (int r = 0; r < w; ++r) col[static_cast<std::size_t>(r)] = cb.c_blocks[static_cast<std::size_t>(t)][static_cast<std::size_t>(r) * w + c];
                for (int i = w - 1; i >= 0; --i) {  // unit upper corner, backward
                    T acc = col[static_cast<std::size_t>(i)];
                    for (int j = i + 1; j < w; ++j) acc -= ul_at(i, j) * col[static_cast<std::size_t>(j)];
                    col[static_cast<std::size_t>(i)] = acc;
                }
                for (int i = 0; i < w; ++i) {  // lower corner with diagonal, forward
                    T acc = col[static_cast<std::size_t>(i)];
                    for (int j = 0; j < i; ++j) acc -= ul_at(i, j) * col[static_cast<std::size_t>(j)];
                    col[static_cast<std::size_t>(i)] = acc / ul_at(i, i);
                }
                for (int r = 0; r < w; ++r) tip[static_cast<std::size_t>(r) * w + c] = col[static_cast<std::size_t>(r)];
            }
            if (!detail::all_finite(tip))
                throw PreconditionerError("left spike tip at interface " + std::to_string(t) +
                                          " is not finite");
            s.w_top.push_back(std::move(tip));
        }
    }
    detail::finish_reduced_blocks(s, f.boost_eps);
    return s;
}

/// Computes full-length spikes through whole-block solves (LU only, block
/// permutations allowed) and reads the tips off their ends.
template <class T>
SpikeSet<T> compute_full_spikes(const BlockFactors<T>& f, const CouplingBlocks<T>& cb) {
    SpikeSet<T> s;
    s.width = cb.width;
    s.coupling = cb;
    const int ni = cb.interfaces();
    for (int t = 0; t < ni; ++t) {
        const int w = cb.width[static_cast<std::size_t>(t)];
        const int mt = f.layout.size(t);
        const int mn = f.layout.size(t + 1);
        std::vector<T> v(static_cast<std::size_t>(mt) * w, T(0));
        std::vector<T> wv(static_cast<std::size_t>(mn) * w, T(0));
        for (int c = 0; c < w; ++c) {
            std::span<T> col(v.data() + static_cast<std::size_t>(c) * mt, static_cast<std::size_t>(mt));
            for (int r = 0; r < w; ++r) col[static_cast<std::size_t>(mt - w + r)] = cb.b_blocks[static_cast<std::size_t>(t)][static_cast<std::size_t>(r) * w + c];
            block_solve(f, t, col, SolveVariant::lu);
        }
        for (int c = 0; c < w; ++c) {
            std::span<T> col(wv.data() + static_cast<std::size_t>(c) * mn, static_cast<std::size_t>(mn));
            for (int r = 0; r < w; ++r) col[static_cast<std::size_t>(r)] = cb.c_blocks[static_cast<std::size_t>(t)][static_cast<std::size_t>(r) * w + c];
            block_solve(f, t + 1, col, SolveVariant::lu);
        }
        if (!detail::all_finite(v) || !detail::all_finite(wv))
            throw PreconditionerError("spike at interface " + std::to_string(t) + " is not finite");
        std::vector<T> vb(static_cast<std::size_t>(w) * w);
        std::vector<T> wt(static_cast<std::size_t>(w) * w);
        for (int r = 0; r < w; ++r)
            for (int c = 0; c < w; ++c) {
                vb[static_cast<std::size_t>(r) * w + c] = v[static_cast<std::size_t>(c) * mt + (mt - w + r)];
                wt[static_cast<std::size_t>(r) * w + c] = wv[static_cast<std::size_t>(c) * mn + r];
            }
        s.v_full.push_back(std::move(v));
        s.w_full.push_back(std::move(wv));
        s.v_bottom.push_back(std::move(vb));
        s.w_top.push_back(std::move(wt));
    }
    detail::finish_reduced_blocks(s, f.boost_eps);
    return s;
}

/// Applies the preconditioner solve M z = b for the chosen kind. The
/// coupled kind runs the truncated interface exchange: block solves give g,
/// each interface solves rbar[t] xt = g_top[t+1] - w_top[t] g_bot[t] and
/// back-substitutes xb = g_bot[t] - v_bottom[t] xt, then every block is
/// re-solved against b with its coupling terms removed. The diagonal kind
/// divides by `diag` (already boosted); `none` copies b.
template <class T>
std::vector<T> apply_preconditioner(PrecondKind kind, const BlockFactors<T>& f,
                                    const SpikeSet<T>& s, std::span<const T> b,
                                    std::span<const T> diag = {}) {
    std::vector<T> x(b.begin(), b.end());
    if (kind == PrecondKind::none) return x;
    if (kind == PrecondKind::diagonal) {
        if (diag.size() != b.size())
            throw std::invalid_argument("apply_preconditioner: diagonal values required");
        for (std::size_t i = 0; i < x.size(); ++i) x[i] /= diag[i];
        return x;
    }
    const int p = f.layout.p;
    if (static_cast<int>(b.size()) != f.layout.total())
        throw std::invalid_argument("apply_preconditioner: vector length mismatch");
    for (int i = 0; i < p; ++i)
        block_solve(f, i, std::span<T>(x.data() + f.layout.offset(i), static_cast<std::size_t>(f.layout.size(i))));
    if (kind == PrecondKind::decoupled || p == 1) return x;

    // x now holds g. Solve the truncated reduced system interface by interface.
    const int ni = s.interfaces();
    std::vector<std::vector<T>> xt_top(static_cast<std::size_t>(ni)), xt_bot(static_cast<std::size_t>(ni));
    for (int t = 0; t < ni; ++t) {
        const int w = s.width[static_cast<std::size_t>(t)];
        const int end_t = f.layout.offset(t + 1);
        std::vector<T> gb(x.data() + end_t - w, x.data() + end_t);
        std::vector<T> rhs(x.data() + end_t, x.data() + end_t + w);
        detail::dense_gemv_sub(w, s.w_top[static_cast<std::size_t>(t)].data(), gb.data(), rhs.data());
        detail::dense_lu_solve(w, s.rbar[static_cast<std::size_t>(t)].data(), rhs.data());
        xt_top[static_cast<std::size_t>(t)] = rhs;
        detail::dense_gemv_sub(w, s.v_bottom[static_cast<std::size_t>(t)].data(), rhs.data(), gb.data());
        xt_bot[static_cast<std::size_t>(t)] = std::move(gb);
    }

    // Re-solve each block against b with interface contributions removed.
    std::vector<T> b2(b.begin(), b.end());
    for (int t = 0; t < ni; ++t) {
        const int w = s.width[static_cast<std::size_t>(t)];
        const int end_t = f.layout.offset(t + 1);
        detail::dense_gemv_sub(w, s.coupling.b_blocks[static_cast<std::size_t>(t)].data(),
                               xt_top[static_cast<std::size_t>(t)].data(), b2.data() + end_t - w);
        detail::dense_gemv_sub(w, s.coupling.c_blocks[static_cast<std::size_t>(t)].data(),
                               xt_bot[static_cast<std::size_t>(t)].data(), b2.data() + end_t);
    }
    for (int i = 0; i < p; ++i)
        block_solve(f, i, std::span<T>(b2.data() + f.layout.offset(i), static_cast<std::size_t>(f.layout.size(i))));
    return b2;
}

}  // namespace sap
