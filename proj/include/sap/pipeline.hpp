#pragma once

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sap/banded_matrix.hpp"
#include "sap/block_factors.hpp"
#include "sap/errors.hpp"
#include "sap/krylov.hpp"
#include "sap/partition.hpp"
#include "sap/reorder_cm.hpp"
#include "sap/reorder_db.hpp"
#include "sap/sparse_matrix.hpp"
#include "sap/spike.hpp"

namespace sap {

struct PipelineConfig {
    bool use_db = true;
    bool db_scaling = false;
    bool use_cm = true;
    bool third_stage = false;
    int p = 1;
    double drop_tol = 0.0;
    PrecondKind precond = PrecondKind::coupled;
    KrylovOptions krylov;
    double boost_eps = 1e-10;
    unsigned seed = 0;
};

/// Stage timings (seconds), the achieved band, and the solve outcome.
/// Stages that did not run report zero. The host-device transfer slot
/// exists for report compatibility and is always zero here.
struct PipelineReport {
    double t_db = 0, t_cm = 0, t_dtransf = 0, t_drop = 0, t_asmbl = 0;
    double t_bc = 0, t_lu = 0, t_spk = 0, t_lurdcd = 0, t_kry = 0;
    int n = 0;
    int nnz = 0;
    int k = 0;  // half-bandwidth kept after drop-off
    std::vector<int> per_partition_k;
    int partitions = 0;
    double fill_in = 0;    // stored band entries over n * (2k + 1)
    double d_estimate = 0; // diagonal dominance of the assembled banded matrix
    SolveStats stats;
    bool success = false;
    std::string failure_stage;  // "db" | "layout" | "precond" | "krylov"
    std::string failure_message;
    std::string note;
};

struct DropResult {
    SparseMatrix matrix;
    int k_after = 0;
};

/// Keeps the smallest half-bandwidth whose dropped outside-band mass
/// satisfies ||dropped||_F <= tol * ||A||_F, then removes entries beyond
/// it. tol = 0 returns the input unchanged.
inline DropResult drop_off(const SparseMatrix& a, double tol) {
    if (tol < 0.0 || tol > 1.0)
        throw std::invalid_argument("drop_off: tolerance must lie in [0, 1]");
    if (tol == 0.0) return {a, half_bandwidth(a)};
    const int n = a.n;
    std::vector<double> sums(static_cast<std::size_t>(n) + 1, 0.0);
    for (int i = 0; i < n; ++i)
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            const double v = a.values[static_cast<std::size_t>(s)];
            sums[static_cast<std::size_t>(std::abs(i - a.col_idx[static_cast<std::size_t>(s)]))] += v * v;
        }
    // suf[d] = squared mass at distance >= d; suf[0] is the squared
    // Frobenius norm, accumulated in the same chain so tol = 1 always
    // admits k = 0.
    std::vector<double> suf(static_cast<std::size_t>(n) + 1, 0.0);
    for (int d = n - 1; d >= 0; --d)
        suf[static_cast<std::size_t>(d)] = suf[static_cast<std::size_t>(d) + 1] + sums[static_cast<std::size_t>(d)];
    const double thr = tol * tol * suf[0];
    int k = n > 0 ? n - 1 : 0;
    for (int c = 0; c < n; ++c)
        if (suf[static_cast<std::size_t>(c) + 1] <= thr) {
            k = c;
            break;
        }
    DropResult out;
    out.k_after = k;
    out.matrix.n = n;
    out.matrix.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < n; ++i) {
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s)
            if (std::abs(i - a.col_idx[static_cast<std::size_t>(s)]) <= k) {
                out.matrix.col_idx.push_back(a.col_idx[static_cast<std::size_t>(s)]);
                out.matrix.values.push_back(a.values[static_cast<std::size_t>(s)]);
            }
        out.matrix.row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(out.matrix.col_idx.size());
    }
    return out;
}

/// Copies a sparse matrix whose entries all satisfy |i - j| <= k into band
/// storage.
inline BandedMatrix<double> assemble_banded(const SparseMatrix& a, int k) {
    BandedMatrix<double> out(a.n, k);
    for (int i = 0; i < a.n; ++i)
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            const int j = a.col_idx[static_cast<std::size_t>(s)];
            if (std::abs(i - j) > k)
                throw std::invalid_argument("assemble_banded: entry (" + std::to_string(i) + ", " +
                                            std::to_string(j) + ") outside half-bandwidth " +
                                            std::to_string(k));
            out.at(i, j) = a.values[static_cast<std::size_t>(s)];
        }
    return out;
}

namespace detail {

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

template <class T>
struct PrecondState {
    PrecondKind kind = PrecondKind::none;
    BlockFactors<T> factors;
    SpikeSet<T> spikes;
    std::vector<T> diag;
};

/// Builds the chosen preconditioner at scalar type T from the assembled
/// band and returns its application as a double-in/double-out operator.
template <class T>
LinearOp build_precond_op(const BandedMatrix<double>& banded_d, const PartitionLayout& layout,
                          const PipelineConfig& cfg, bool third_active,
                          const std::vector<std::vector<int>>* block_perms, PipelineReport& rep) {
    auto st = std::make_shared<PrecondState<T>>();
    st->kind = cfg.precond;
    if (cfg.precond == PrecondKind::none)
        return [](std::span<const double> in, std::span<double> out) {
            std::copy(in.begin(), in.end(), out.begin());
        };
    BandedMatrix<T> banded = banded_cast<T>(banded_d);
    if (cfg.precond == PrecondKind::diagonal) {
        StageTimer t;
        const double scale = banded.inf_norm();
        const T bv = static_cast<T>(cfg.boost_eps * (scale > 0 ? scale : 1.0));
        st->diag.resize(static_cast<std::size_t>(banded.rows()));
        for (int i = 0; i < banded.rows(); ++i) {
            T d = banded.get(i, i);
            if (std::abs(d) < bv) d = d < T(0) ? -bv : bv;
            st->diag[static_cast<std::size_t>(i)] = d;
        }
        rep.t_lu = t.seconds();
    } else {
        const bool want_ul =
            cfg.precond == PrecondKind::coupled && !third_active && layout.p > 1;
        {
            StageTimer t;
            st->factors = factor_blocks<T>(banded, layout,
                                           want_ul ? FactorMode::lu_and_ul : FactorMode::lu_only,
                                           cfg.boost_eps, block_perms);
            rep.t_lu += t.seconds();
        }
        if (cfg.precond == PrecondKind::coupled && layout.p > 1) {
            CouplingBlocks<T> cb;
            {
                StageTimer t;
                cb = extract_coupling<T>(banded, layout);
                rep.t_bc = t.seconds();
            }
            StageTimer t;
            st->spikes = third_active ? compute_full_spikes<T>(st->factors, cb)
                                      : compute_spike_tips<T>(st->factors, cb);
            const double spk_total = t.seconds();
            rep.t_lurdcd = st->spikes.rbar_seconds;
            rep.t_spk = spk_total - st->spikes.rbar_seconds;
        }
    }
    const int n = banded_d.rows();
    return [st, n](std::span<const double> in, std::span<double> out) {
        if constexpr (std::is_same_v<T, double>) {
            std::vector<double> r = apply_preconditioner(st->kind, st->factors, st->spikes, in,
                                                         std::span<const double>(st->diag));
            std::copy(r.begin(), r.end(), out.begin());
        } else {
            std::vector<T> inf(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) inf[static_cast<std::size_t>(i)] = static_cast<T>(in[static_cast<std::size_t>(i)]);
            std::vector<T> r = apply_preconditioner(st->kind, st->factors, st->spikes,
                                                    std::span<const T>(inf),
                                                    std::span<const T>(st->diag));
            for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(r[static_cast<std::size_t>(i)]);
        }
    };
}

}  // namespace detail

/// End-to-end solve: optional diagonal-boosting row permutation (with
/// optional scaling), optional bandwidth-reducing symmetric permutation,
/// drop-off to the kept band, band assembly, partitioning with optional
/// per-block reordering, preconditioner construction, Krylov iteration on
/// the reordered (never truncated) system, and inverse transforms back to
/// the caller's ordering. Stage failures are recorded in the report rather
/// than thrown, so batch callers keep going.
inline std::vector<double> solve_sparse(const SparseMatrix& a, std::span<const double> b,
                                        const PipelineConfig& cfg, PipelineReport& rep) {
    const int n = a.n;
    if (static_cast<int>(b.size()) != n)
        throw std::invalid_argument("solve_sparse: right-hand side length mismatch");
    if (cfg.p < 1) throw std::invalid_argument("solve_sparse: partition count must be positive");
    rep = PipelineReport{};
    rep.n = n;
    rep.nnz = a.nnz();
    if (n == 0) {
        rep.success = true;
        rep.stats.converged = true;
        return {};
    }

    SparseMatrix work = a;
    std::vector<double> rhs(b.begin(), b.end());
    DbResult db;
    bool db_applied = false;
    if (cfg.use_db) {
        detail::StageTimer t;
        try {
            db = db_reorder(work, cfg.db_scaling);
        } catch (const StructuralSingularityError& e) {
            rep.t_db = t.seconds();
            rep.failure_stage = "db";
            rep.failure_message = e.what();
            return std::vector<double>(static_cast<std::size_t>(n), 0.0);
        }
        if (db.scaled) {
            work = scale_rows_cols(work, db.row_scale, db.col_scale);
            for (int i = 0; i < n; ++i) rhs[static_cast<std::size_t>(i)] *= db.row_scale[static_cast<std::size_t>(i)];
        }
        work = permute_rows(work, db.perm);
        std::vector<double> prhs(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) prhs[static_cast<std::size_t>(db.perm[static_cast<std::size_t>(i)])] = rhs[static_cast<std::size_t>(i)];
        rhs = std::move(prhs);
        db_applied = true;
        rep.t_db = t.seconds();
    }

    CmResult cm;
    bool cm_applied = false;
    if (cfg.use_cm) {
        detail::StageTimer t;
        const AdjGraph g = build_graph(work);
        cm = cm_reorder(g, cfg.seed);
        work = permute_symmetric(work, cm.perm);
        std::vector<double> prhs(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) prhs[static_cast<std::size_t>(cm.perm[static_cast<std::size_t>(i)])] = rhs[static_cast<std::size_t>(i)];
        rhs = std::move(prhs);
        cm_applied = true;
        rep.t_cm = t.seconds();
    }

    SparseMatrix precond_src;
    {
        detail::StageTimer t;
        if (cfg.drop_tol > 0.0) {
            DropResult dr = drop_off(work, cfg.drop_tol);
            precond_src = std::move(dr.matrix);
            rep.k = dr.k_after;
            rep.t_drop = t.seconds();
        } else {
            precond_src = work;
            rep.k = half_bandwidth(work);
        }
    }
    rep.d_estimate = diagonal_dominance(precond_src);

    BandedMatrix<double> banded;
    {
        detail::StageTimer t;
        banded = assemble_banded(precond_src, rep.k);
        rep.t_asmbl = t.seconds();
    }
    rep.fill_in = n > 0 ? static_cast<double>(precond_src.nnz()) /
                              (static_cast<double>(n) * (2.0 * rep.k + 1.0))
                        : 0.0;

    PartitionLayout layout;
    {
        const int p_max = max_feasible_partitions(n, rep.k);
        if (p_max < 1) {
            rep.failure_stage = "layout";
            rep.failure_message = "no feasible partitioning: matrix has fewer than 2k rows";
            return std::vector<double>(static_cast<std::size_t>(n), 0.0);
        }
        int p_used = cfg.p <= p_max ? cfg.p : p_max;
        if (p_used != cfg.p)
            rep.note = "partition count reduced from " + std::to_string(cfg.p) + " to " +
                       std::to_string(p_used) + " to keep every block at least 2k rows";
        layout = make_partition_layout(n, p_used, rep.k);
        rep.partitions = p_used;
    }

    const bool uses_blocks =
        cfg.precond == PrecondKind::coupled || cfg.precond == PrecondKind::decoupled;
    std::vector<std::vector<int>> block_perms;
    bool third_active = false;
    if (cfg.third_stage && uses_blocks) {
        detail::StageTimer t;
        ThirdStageResult ts = third_stage(banded, layout, cfg.seed);
        layout.per_partition_k = ts.block_k;
        block_perms = std::move(ts.block_perms);
        third_active = true;
        rep.t_cm += t.seconds();
    }
    rep.per_partition_k = layout.per_partition_k;

    LinearOp apply_m;
    try {
        apply_m = cfg.krylov.mixed_precision
                      ? detail::build_precond_op<float>(banded, layout, cfg, third_active,
                                                        third_active ? &block_perms : nullptr, rep)
                      : detail::build_precond_op<double>(banded, layout, cfg, third_active,
                                                         third_active ? &block_perms : nullptr, rep);
    } catch (const PreconditionerError& e) {
        rep.failure_stage = "precond";
        rep.failure_message = e.what();
        return std::vector<double>(static_cast<std::size_t>(n), 0.0);
    }

    LinearOp apply_a = [&work](std::span<const double> in, std::span<double> out) {
        work.matvec(in, out);
    };
    std::vector<double> z(static_cast<std::size_t>(n), 0.0);
    {
        detail::StageTimer t;
        rep.stats = run_krylov(apply_a, apply_m, rhs, z, cfg.krylov);
        rep.t_kry = t.seconds();
    }
    if (!rep.stats.converged) {
        rep.failure_stage = "krylov";
        switch (rep.stats.failure) {
            case KrylovFailure::max_iterations: rep.failure_message = "iteration budget exhausted"; break;
            case KrylovFailure::breakdown: rep.failure_message = "breakdown after restart"; break;
            case KrylovFailure::non_finite: rep.failure_message = "non-finite iterate"; break;
            case KrylovFailure::indefinite_operator: rep.failure_message = "operator not positive definite"; break;
            default: rep.failure_message = "did not converge"; break;
        }
    } else {
        rep.success = true;
    }

    // Undo the symmetric permutation, then the column scaling. The row
    // permutation and row scaling acted on equations, not unknowns.
    std::vector<double> x(static_cast<std::size_t>(n));
    if (cm_applied) {
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(cm.perm[static_cast<std::size_t>(i)])];
    } else {
        x = std::move(z);
    }
    if (db_applied && db.scaled)
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] *= db.col_scale[static_cast<std::size_t>(i)];
    return x;
}

}  // namespace sap
