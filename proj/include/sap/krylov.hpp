#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace sap {

/// Applies a linear map: out = Op(in). Both spans have the system length.
using LinearOp = std::function<void(std::span<const double>, std::span<double>)>;

enum class KrylovMethod { bicgstab_l, cg, automatic };

enum class KrylovFailure { none, max_iterations, breakdown, non_finite, indefinite_operator };

struct KrylovOptions {
    KrylovMethod method = KrylovMethod::bicgstab_l;
    int ell = 2;                      // stabilization degree of BiCGStab(l)
    double rel_tol = 1e-10;
    double abs_tol = 0.0;
    int max_iterations = 500;         // whole-iteration budget
    bool mixed_precision = false;     // preconditioner runs in reduced precision upstream
    bool caller_asserts_spd = false;  // lets `automatic` dispatch to CG
};

/// Iteration counts are kept at quarter resolution: BiCGStab(l) tests
/// convergence 2l times per sweep and charges the fraction of the sweep
/// completed, so with l = 2 the recorded counts move in steps of 0.25.
/// CG is charged whole iterations. Every recorded residual is the true
/// relative residual ||b - A x|| / ||b||, not a recurrence value.
struct SolveStats {
    double iterations = 0.0;
    std::vector<double> residual_history;
    bool converged = false;
    double final_relative_residual = 0.0;
    KrylovFailure failure = KrylovFailure::none;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double nrm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool finite(double v) { return std::isfinite(v); }

inline bool finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

/// ||b - A x||_2 computed from scratch.
inline double true_residual(const LinearOp& apply_a, std::span<const double> b,
                            std::span<const double> x, std::vector<double>& scratch) {
    scratch.resize(b.size());
    apply_a(x, scratch);
    double acc = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double d = b[i] - scratch[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

/// Solves a tiny dense system with partial pivoting; returns false when
/// numerically singular.
inline bool tiny_solve(int n, std::vector<double> a, std::vector<double>& rhs) {
    for (int j = 0; j < n; ++j) {
        int piv = j;
        for (int i = j + 1; i < n; ++i)
            if (std::abs(a[static_cast<std::size_t>(i) * n + j]) > std::abs(a[static_cast<std::size_t>(piv) * n + j])) piv = i;
        if (a[static_cast<std::size_t>(piv) * n + j] == 0.0) return false;
        if (piv != j) {
            for (int c = 0; c < n; ++c) std::swap(a[static_cast<std::size_t>(j) * n + c], a[static_cast<std::size_t>(piv) * n + c]);
            std::swap(rhs[static_cast<std::size_t>(j)], rhs[static_cast<std::size_t>(piv)]);
        }
        for (int i = j + 1; i < n; ++i) {
            const double l = a[static_cast<std::size_t>(i) * n + j] / a[static_cast<std::size_t>(j) * n + j];
            if (l == 0.0) continue;
            for (int c = j; c < n; ++c) a[static_cast<std::size_t>(i) * n + c] -= l * a[static_cast<std::size_t>(j) * n + c];
            rhs[static_cast<std::size_t>(i)] -= l * rhs[static_cast<std::size_t>(j)];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        double acc = rhs[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) acc -= a[static_cast<std::size_t>(i) * n + j] * rhs[static_cast<std::size_t>(j)];
        rhs[static_cast<std::size_t>(i)] = acc / a[static_cast<std::size_t>(i) * n + i];
    }
    return true;
}

}  // namespace detail

/// BiCGStab(l) with left preconditioning: iterates on M^{-1} A while
/// declaring convergence on the unpreconditioned residual
/// ||b - A x|| <= rel_tol ||b|| + abs_tol. The initial guess is always
/// zero. Convergence is tested 2l times per sweep: after each of the l
/// BiCG half-steps, at each intermediate minimal-residual degree, and
/// after the full polynomial update. A first breakdown restarts once with
/// a perturbed shadow residual; a second one fails.
inline SolveStats solve_krylov(const LinearOp& apply_a, const LinearOp& apply_m,
                               std::span<const double> b, std::span<double> x,
                               const KrylovOptions& opts) {
    const int n = static_cast<int>(b.size());
    const int ell = opts.ell;
    if (ell < 1) throw std::invalid_argument("solve_krylov: ell must be at least 1");
    SolveStats stats;
    std::fill(x.begin(), x.end(), 0.0);
    const double bnorm = detail::nrm2(b);
    if (bnorm == 0.0) {
        stats.converged = true;
        stats.residual_history.push_back(0.0);
        return stats;
    }
    const double thr = opts.rel_tol * bnorm + opts.abs_tol;
    std::vector<double> scratch;
    double tr = bnorm;  // true residual of x = 0
    stats.residual_history.push_back(tr / bnorm);
    stats.final_relative_residual = tr / bnorm;
    if (tr <= thr) {
        stats.converged = true;
        return stats;
    }

    auto record = [&](int sweep, int step_in_sweep, double res) {
        // step_in_sweep runs 1..2l; counts are rounded up to quarters.
        const long steps = static_cast<long>(sweep) * 2 * ell + step_in_sweep;
        const long quarters = (4 * steps + 2 * ell - 1) / (2 * ell);
        stats.iterations = static_cast<double>(quarters) / 4.0;
        stats.residual_history.push_back(res / bnorm);
        stats.final_relative_residual = res / bnorm;
    };

    std::vector<std::vector<double>> r(static_cast<std::size_t>(ell) + 1),
        u(static_cast<std::size_t>(ell) + 1);
    for (auto& v : r) v.assign(static_cast<std::size_t>(n), 0.0);
    for (auto& v : u) v.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<double> tmp(static_cast<std::size_t>(n));

    auto apply_hat = [&](std::span<const double> in, std::span<double> out) {
        apply_a(in, tmp);
        apply_m(tmp, out);
    };

    std::vector<double> rtilde(static_cast<std::size_t>(n));
    auto reset_iteration_state = [&](bool perturb_shadow) {
        apply_a(x, tmp);
        for (int i = 0; i < n; ++i) tmp[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - tmp[static_cast<std::size_t>(i)];
        apply_m(tmp, r[0]);
        rtilde = r[0];
        if (perturb_shadow) {
            std::mt19937 gen(0x9d2c5680u);
            std::uniform_real_distribution<double> dist(-1.0, 1.0);
            const double scale = 1e-8 * detail::nrm2(r[0]);
            for (int i = 0; i < n; ++i) rtilde[static_cast<std::size_t>(i)] += scale * dist(gen);
        }
        std::fill(u[0].begin(), u[0].end(), 0.0);
    };

    reset_iteration_state(false);
    double rho0 = 1.0, alpha = 0.0, omega = 1.0;
    bool restarted = false;
    bool breakdown = false;

    std::vector<double> gamma(static_cast<std::size_t>(ell) + 1),
        gamma_p(static_cast<std::size_t>(ell) + 1), gamma_pp(static_cast<std::size_t>(ell) + 1),
        sigma(static_cast<std::size_t>(ell) + 1);
    std::vector<double> tau(static_cast<std::size_t>(ell + 1) * static_cast<std::size_t>(ell + 1));

    for (int sweep = 0; sweep < opts.max_iterations; ++sweep) {
        breakdown = false;
        rho0 = -omega * rho0;
        // BiCG part.
        for (int j = 0; j < ell && !breakdown; ++j) {
            const double rho1 = detail::dot(r[static_cast<std::size_t>(j)], rtilde);
            if (!detail::finite(rho1)) {
                stats.failure = KrylovFailure::non_finite;
                return stats;
            }
            if (rho0 == 0.0 || rho1 == 0.0) {
                breakdown = true;
                break;
            }
            const double beta = alpha * rho1 / rho0;
            rho0 = rho1;
            for (int i = 0; i <= j; ++i)
                for (int t = 0; t < n; ++t)
                    u[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] =
                        r[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] -
                        beta * u[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
            apply_hat(u[static_cast<std::size_t>(j)], u[static_cast<std::size_t>(j) + 1]);
            const double g = detail::dot(u[static_cast<std::size_t>(j) + 1], rtilde);
            if (!detail::finite(g)) {
                stats.failure = KrylovFailure::non_finite;
                return stats;
            }
            if (g == 0.0) {
                breakdown = true;
                break;
            }
            alpha = rho0 / g;
            for (int i = 0; i <= j; ++i)
                for (int t = 0; t < n; ++t)
                    r[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] -=
                        alpha * u[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(t)];
            apply_hat(r[static_cast<std::size_t>(j)], r[static_cast<std::size_t>(j) + 1]);
            for (int t = 0; t < n; ++t) x[static_cast<std::size_t>(t)] += alpha * u[0][static_cast<std::size_t>(t)];
            if (!detail::finite(x)) {
                stats.failure = KrylovFailure::non_finite;
                return stats;
            }
            tr = detail::true_residual(apply_a, b, x, scratch);
            if (!detail::finite(tr)) {
                stats.failure = KrylovFailure::non_finite;
                return stats;
            }
            record(sweep, j + 1, tr);
            if (tr <= thr) {
                stats.converged = true;
                return stats;
            }
        }
        if (!breakdown) {
            // Intermediate minimal-residual exits: for each degree d < l the
            // least-squares combination over r[1..d] yields the candidate
            // x + sum c_i r[i-1], since r[i] is the i-th operator power of r[0].
            for (int d = 1; d < ell; ++d) {
                std::vector<double> gram(static_cast<std::size_t>(d) * d);
                std::vector<double> rhs(static_cast<std::size_t>(d));
                for (int a = 1; a <= d; ++a) {
                    for (int c = 1; c <= d; ++c)
                        gram[static_cast<std::size_t>(a - 1) * d + (c - 1)] =
                            detail::dot(r[static_cast<std::size_t>(a)], r[static_cast<std::size_t>(c)]);
                    rhs[static_cast<std::size_t>(a - 1)] = detail::dot(r[static_cast<std::size_t>(a)], r[0]);
                }
                if (!detail::tiny_solve(d, std::move(gram), rhs)) continue;
                bool ok = true;
                for (double c : rhs) ok = ok && std::isfinite(c);
                if (!ok) continue;
                std::vector<double> xc(x.begin(), x.end());
                for (int i = 1; i <= d; ++i)
                    for (int t = 0; t < n; ++t)
                        xc[static_cast<std::size_t>(t)] += rhs[static_cast<std::size_t>(i - 1)] *
                                                           r[static_cast<std::size_t>(i) - 1][static_cast<std::size_t>(t)];
                tr = detail::true_residual(apply_a, b, xc, scratch);
                if (!detail::finite(tr)) continue;
                record(sweep, ell + d, tr);
                if (tr <= thr) {
                    std::copy(xc.begin(), xc.end(), x.begin());
                    stats.converged = true;
                    return stats;
                }
            }
            // Full minimal-residual update via modified Gram-Schmidt.
            for (int j = 1; j <= ell && !breakdown; ++j) {
                for (int i = 1; i < j; ++i) {
                    const double tij =
                        detail::dot(r[static_cast<std::size_t>(j)], r[static_cast<std::size_t>(i)]) /
                        sigma[static_cast<std::size_t>(i)];
                    tau[static_cast<std::size_t>(i) * (ell + 1) + static_cast<std::size_t>(j)] = tij;
                    for (int t = 0; t < n; ++t)
                        r[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)] -=
                            tij * r[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
                }
                sigma[static_cast<std::size_t>(j)] = detail::dot(r[static_cast<std::size_t>(j)], r[static_cast<std::size_t>(j)]);
                if (!detail::finite(sigma[static_cast<std::size_t>(j)])) {
                    stats.failure = KrylovFailure::non_finite;
                    return stats;
                }
                if (sigma[static_cast<std::size_t>(j)] == 0.0) {
                    breakdown = true;
                    break;
                }
                gamma_p[static_cast<std::size_t>(j)] =
                    detail::dot(r[0], r[static_cast<std::size_t>(j)]) / sigma[static_cast<std::size_t>(j)];
            }
        }
        if (!breakdown) {
            gamma[static_cast<std::size_t>(ell)] = gamma_p[static_cast<std::size_t>(ell)];
            omega = gamma[static_cast<std::size_t>(ell)];
            for (int j = ell - 1; j >= 1; --j) {
                double acc = gamma_p[static_cast<std::size_t>(j)];
                for (int i = j + 1; i <= ell; ++i)
                    acc -= tau[static_cast<std::size_t>(j) * (ell + 1) + static_cast<std::size_t>(i)] *
                           gamma[static_cast<std::size_t>(i)];
                gamma[static_cast<std::size_t>(j)] = acc;
            }
            for (int j = 1; j < ell; ++j) {
                double acc = gamma[static_cast<std::size_t>(j) + 1];
                for (int i = j + 1; i < ell; ++i)
                    acc += tau[static_cast<std::size_t>(j) * (ell + 1) + static_cast<std::size_t>(i)] *
                           gamma[static_cast<std::size_t>(i) + 1];
                gamma_pp[static_cast<std::size_t>(j)] = acc;
            }
            for (int t = 0; t < n; ++t) {
                x[static_cast<std::size_t>(t)] += gamma[1] * r[0][static_cast<std::size_t>(t)];
                r[0][static_cast<std::size_t>(t)] -=
                    gamma_p[static_cast<std::size_t>(ell)] * r[static_cast<std::size_t>(ell)][static_cast<std::size_t>(t)];
                u[0][static_cast<std::size_t>(t)] -=
                    gamma[static_cast<std::size_t>(ell)] * u[static_cast<std::size_t>(ell)][static_cast<std::size_t>(t)];
            }
            for (int j = 1; j < ell; ++j)
                for (int t = 0; t < n; ++t) {
                    u[0][static_cast<std::size_t>(t)] -=
                        gamma[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
                    x[static_cast<std::size_t>(t)] +=
                        gamma_pp[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
                    r[0][static_cast<std::size_t>(t)] -=
                        gamma_p[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
                }
            if (!detail::finite(x)) {
                stats.failure = KrylovFailure::non_finite;
                return stats;
            }
            tr = detail::true_residual(apply_a, b, x, scratch);
            if (!detail::finite(tr)) {
                stats.failure = KrylovFailure::non_finite;
                return stats;
            }
            record(sweep, 2 * ell, tr);
            if (tr <= thr) {
                stats.converged = true;
                return stats;
            }
        }
        if (breakdown) {
            if (restarted) {
                stats.failure = KrylovFailure::breakdown;
                return stats;
            }
            restarted = true;
            reset_iteration_state(true);
            rho0 = 1.0;
            alpha = 0.0;
            omega = 1.0;
        }
    }
    stats.iterations = static_cast<double>(opts.max_iterations);
    stats.failure = KrylovFailure::max_iterations;
    return stats;
}

/// Preconditioned conjugate gradient for systems the caller asserts are
/// symmetric positive definite. Nonpositive curvature is reported as an
/// indefinite operator instead of silently iterating.
inline SolveStats solve_cg(const LinearOp& apply_a, const LinearOp& apply_m,
                           std::span<const double> b, std::span<double> x,
                           const KrylovOptions& opts) {
    const int n = static_cast<int>(b.size());
    SolveStats stats;
    std::fill(x.begin(), x.end(), 0.0);
    const double bnorm = detail::nrm2(b);
    if (bnorm == 0.0) {
        stats.converged = true;
        stats.residual_history.push_back(0.0);
        return stats;
    }
    const double thr = opts.rel_tol * bnorm + opts.abs_tol;
    std::vector<double> scratch;
    stats.residual_history.push_back(1.0);
    stats.final_relative_residual = 1.0;
    if (bnorm <= thr) {
        stats.converged = true;
        return stats;
    }
    std::vector<double> r(b.begin(), b.end());
    std::vector<double> z(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n)),
        q(static_cast<std::size_t>(n));
    apply_m(r, z);
    double rz = detail::dot(r, z);
    if (!detail::finite(rz) || rz <= 0.0) {
        stats.failure = rz <= 0.0 ? KrylovFailure::indefinite_operator : KrylovFailure::non_finite;
        return stats;
    }
    p = z;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        apply_a(p, q);
        const double curv = detail::dot(p, q);
        if (!detail::finite(curv)) {
            stats.failure = KrylovFailure::non_finite;
            return stats;
        }
        if (curv <= 0.0) {
            stats.failure = KrylovFailure::indefinite_operator;
            return stats;
        }
        const double alpha = rz / curv;
        for (int t = 0; t < n; ++t) {
            x[static_cast<std::size_t>(t)] += alpha * p[static_cast<std::size_t>(t)];
            r[static_cast<std::size_t>(t)] -= alpha * q[static_cast<std::size_t>(t)];
        }
        const double tr = detail::true_residual(apply_a, b, x, scratch);
        if (!detail::finite(tr)) {
            stats.failure = KrylovFailure::non_finite;
            return stats;
        }
        stats.iterations = static_cast<double>(it);
        stats.residual_history.push_back(tr / bnorm);
        stats.final_relative_residual = tr / bnorm;
        if (tr <= thr) {
            stats.converged = true;
            return stats;
        }
        apply_m(r, z);
        const double rz_next = detail::dot(r, z);
        if (!detail::finite(rz_next)) {
            stats.failure = KrylovFailure::non_finite;
            return stats;
        }
        if (rz_next <= 0.0) {
            stats.failure = KrylovFailure::indefinite_operator;
            return stats;
        }
        const double beta = rz_next / rz;
        rz = rz_next;
        for (int t = 0; t < n; ++t)
            p[static_cast<std::size_t>(t)] = z[static_cast<std::size_t>(t)] + beta * p[static_cast<std::size_t>(t)];
    }
    stats.failure = KrylovFailure::max_iterations;
    return stats;
}

/// Dispatches on the configured method; `automatic` picks CG only when the
/// caller asserts the (preconditioned) system is SPD.
inline SolveStats run_krylov(const LinearOp& apply_a, const LinearOp& apply_m,
                             std::span<const double> b, std::span<double> x,
                             const KrylovOptions& opts) {
    KrylovMethod m = opts.method;
    if (m == KrylovMethod::automatic)
        m = opts.caller_asserts_spd ? KrylovMethod::cg : KrylovMethod::bicgstab_l;
    return m == KrylovMethod::cg ? solve_cg(apply_a, apply_m, b, x, opts)
                                 : solve_krylov(apply_a, apply_m, b, x, opts);
}

}  // namespace sap
