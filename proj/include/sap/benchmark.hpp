#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sap/matrix_market.hpp"
#include "sap/pipeline.hpp"

namespace sap {

/// Reference solution used by every benchmark case: a downward parabola
/// over the index range running 1 -> 400 -> 1. A single unknown takes the
/// peak value.
inline std::vector<double> manufactured_solution(int n) {
    std::vector<double> x(static_cast<std::size_t>(n));
    if (n == 1) {
        x[0] = 400.0;
        return x;
    }
    for (int j = 0; j < n; ++j) {
        const double t = 2.0 * j / (n - 1) - 1.0;
        x[static_cast<std::size_t>(j)] = 1.0 + 399.0 * (1.0 - t * t);
    }
    return x;
}

/// One benchmark run: the right-hand side is manufactured from the known
/// solution, and the case succeeds only when the recovered solution is
/// within 1% relative error of it.
struct BenchmarkCase {
    std::string matrix_path;
    PipelineConfig config;
    PipelineReport report;
    double relative_error = std::numeric_limits<double>::infinity();
    std::string outcome;  // "success" or the failing stage ("io", "db", ...)
};

inline constexpr double kBenchmarkErrorBound = 0.01;

inline BenchmarkCase run_case(const std::string& path, const PipelineConfig& cfg) {
    BenchmarkCase c;
    c.matrix_path = path;
    c.config = cfg;
    SparseMatrix a;
    try {
        a = read_matrix_market(path);
    } catch (const ParseError& e) {
        c.outcome = "io";
        c.report.failure_stage = "io";
        c.report.failure_message = e.what();
        return c;
    }
    const std::vector<double> x_star = manufactured_solution(a.n);
    std::vector<double> b(static_cast<std::size_t>(a.n));
    a.matvec(x_star, b);
    const std::vector<double> x = solve_sparse(a, b, cfg, c.report);
    double num = 0, den = 0;
    for (int i = 0; i < a.n; ++i) {
        const double d = x[static_cast<std::size_t>(i)] - x_star[static_cast<std::size_t>(i)];
        num += d * d;
        den += x_star[static_cast<std::size_t>(i)] * x_star[static_cast<std::size_t>(i)];
    }
    c.relative_error = den > 0 ? std::sqrt(num / den) : 0.0;
    if (!c.report.success)
        c.outcome = c.report.failure_stage.empty() ? "krylov" : c.report.failure_stage;
    else if (!(c.relative_error <= kBenchmarkErrorBound))
        c.outcome = "accuracy";
    else
        c.outcome = "success";
    return c;
}

/// Runs every case with the same configuration. `jobs` > 1 solves cases on
/// a thread pool; results keep input order and are identical to a serial
/// run since cases share nothing.
inline std::vector<BenchmarkCase> run_benchmark(const std::vector<std::string>& paths,
                                                const PipelineConfig& cfg, int jobs = 1) {
    std::vector<BenchmarkCase> out(paths.size());
    if (jobs <= 1 || paths.size() <= 1) {
        for (std::size_t i = 0; i < paths.size(); ++i) out[i] = run_case(paths[i], cfg);
        return out;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < paths.size(); i = next.fetch_add(1))
            out[i] = run_case(paths[i], cfg);
    };
    std::vector<std::thread> pool;
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(jobs), paths.size());
    pool.reserve(count);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return out;
}

namespace detail {

/// Infinity round-trips as the string "inf"; JSON has no literal for it.
inline nlohmann::json json_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    return v;
}

inline const char* precond_name(PrecondKind k) {
    switch (k) {
        case PrecondKind::coupled: return "coupled";
        case PrecondKind::decoupled: return "decoupled";
        case PrecondKind::diagonal: return "diag";
        default: return "none";
    }
}

inline const char* method_name(KrylovMethod m) {
    switch (m) {
        case KrylovMethod::cg: return "cg";
        case KrylovMethod::automatic: return "auto";
        default: return "bicgstab2";
    }
}

}  // namespace detail

inline nlohmann::json case_to_json(const BenchmarkCase& c) {
    const PipelineReport& r = c.report;
    nlohmann::json j;
    j["matrix"] = c.matrix_path;
    j["N"] = r.n;
    j["nnz"] = r.nnz;
    j["K"] = r.k;
    j["d_estimate"] = detail::json_real(r.d_estimate);
    j["iterations"] = r.stats.iterations;
    j["relative_error"] = detail::json_real(c.relative_error);
    j["outcome"] = c.outcome;
    j["converged"] = r.stats.converged;
    j["final_relative_residual"] = detail::json_real(r.stats.final_relative_residual);
    j["partitions"] = r.partitions;
    j["per_partition_k"] = r.per_partition_k;
    j["fill_in"] = r.fill_in;
    j["T_DB"] = r.t_db;
    j["T_CM"] = r.t_cm;
    j["T_Dtransf"] = r.t_dtransf;
    j["T_Drop"] = r.t_drop;
    j["T_Asmbl"] = r.t_asmbl;
    j["T_BC"] = r.t_bc;
    j["T_LU"] = r.t_lu;
    j["T_SPK"] = r.t_spk;
    j["T_LUrdcd"] = r.t_lurdcd;
    j["T_Kry"] = r.t_kry;
    if (!r.note.empty()) j["note"] = r.note;
    if (!r.failure_message.empty()) j["failure_message"] = r.failure_message;
    j["config"] = {{"precond", detail::precond_name(c.config.precond)},
                   {"partitions", c.config.p},
                   {"drop_tol", c.config.drop_tol},
                   {"boost_eps", c.config.boost_eps},
                   {"use_db", c.config.use_db},
                   {"db_scaling", c.config.db_scaling},
                   {"use_cm", c.config.use_cm},
                   {"third_stage", c.config.third_stage},
                   {"seed", c.config.seed},
                   {"krylov", detail::method_name(c.config.krylov.method)},
                   {"ell", c.config.krylov.ell},
                   {"rel_tol", c.config.krylov.rel_tol},
                   {"max_iterations", c.config.krylov.max_iterations},
                   {"mixed_precision", c.config.krylov.mixed_precision}};
    return j;
}

/// One JSON object per line, in case order.
inline void write_report(std::ostream& out, const std::vector<BenchmarkCase>& cases) {
    for (const auto& c : cases) out << case_to_json(c).dump() << "\n";
}

inline void write_report(const std::string& path, const std::vector<BenchmarkCase>& cases) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    write_report(out, cases);
}

inline std::vector<nlohmann::json> read_report(std::istream& in) {
    std::vector<nlohmann::json> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("bad report line: ") + e.what(), lineno);
        }
    }
    return out;
}

inline std::vector<nlohmann::json> read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return read_report(in);
}

struct BenchmarkSummary {
    int cases = 0;
    int successes = 0;
    std::map<std::string, int> failures;       // non-success outcome counts
    std::map<std::string, double> median_timings;
};

inline BenchmarkSummary summarize(const std::vector<BenchmarkCase>& cases) {
    BenchmarkSummary s;
    s.cases = static_cast<int>(cases.size());
    auto median_of = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::sort(v.begin(), v.end());
        const std::size_t h = v.size() / 2;
        return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    };
    const std::vector<std::pair<std::string, double PipelineReport::*>> slots = {
        {"T_DB", &PipelineReport::t_db},     {"T_CM", &PipelineReport::t_cm},
        {"T_Dtransf", &PipelineReport::t_dtransf}, {"T_Drop", &PipelineReport::t_drop},
        {"T_Asmbl", &PipelineReport::t_asmbl}, {"T_BC", &PipelineReport::t_bc},
        {"T_LU", &PipelineReport::t_lu},     {"T_SPK", &PipelineReport::t_spk},
        {"T_LUrdcd", &PipelineReport::t_lurdcd}, {"T_Kry", &PipelineReport::t_kry}};
    for (const auto& [name, member] : slots) {
        std::vector<double> vals;
        vals.reserve(cases.size());
        for (const auto& c : cases) vals.push_back(c.report.*member);
        s.median_timings[name] = median_of(std::move(vals));
    }
    for (const auto& c : cases) {
        if (c.outcome == "success")
            ++s.successes;
        else
            ++s.failures[c.outcome];
    }
    return s;
}

}  // namespace sap
