#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "sap/errors.hpp"
#include "sap/sparse_matrix.hpp"

namespace sap {
namespace detail {

struct MmHeader {
    bool coordinate = true;
    bool integer_field = false;
    enum class Sym { general, symmetric, skew } sym = Sym::general;
};

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Reads the next line that is neither blank nor a comment. Returns false
/// on end of input.
inline bool next_data_line(std::istream& in, std::string& line, long& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t i = 0;
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i == line.size()) continue;
        if (line[i] == '%') continue;
        return true;
    }
    return false;
}

inline MmHeader parse_mm_header(std::istream& in, long& lineno) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file", 1);
    ++lineno;
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (lower(banner) != "%%matrixmarket")
        throw ParseError("missing %%MatrixMarket banner", lineno);
    if (lower(object) != "matrix")
        throw ParseError("unsupported object '" + object + "', expected 'matrix'", lineno);
    MmHeader h;
    const std::string fmt = lower(format);
    if (fmt == "coordinate")
        h.coordinate = true;
    else if (fmt == "array")
        h.coordinate = false;
    else
        throw ParseError("unknown format '" + format + "'", lineno);
    const std::string fld = lower(field);
    if (fld == "real")
        h.integer_field = false;
    else if (fld == "integer")
        h.integer_field = true;
    else if (fld == "pattern")
        throw ParseError("pattern files carry no numeric values", lineno);
    else if (fld == "complex")
        throw ParseError("complex values are not supported", lineno);
    else
        throw ParseError("unknown field '" + field + "'", lineno);
    const std::string sym = lower(symmetry);
    if (sym == "general")
        h.sym = MmHeader::Sym::general;
    else if (sym == "symmetric")
        h.sym = MmHeader::Sym::symmetric;
    else if (sym == "skew-symmetric")
        h.sym = MmHeader::Sym::skew;
    else if (sym == "hermitian")
        throw ParseError("hermitian requires complex values, which are not supported", lineno);
    else
        throw ParseError("unknown symmetry '" + symmetry + "'", lineno);
    return h;
}

inline double parse_value(const std::string& tok, long lineno) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw ParseError("malformed value '" + tok + "'", lineno);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        throw ParseError("malformed value '" + tok + "'", lineno);
    }
}

inline long parse_index(const std::string& tok, long lineno) {
    try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size()) throw ParseError("malformed index '" + tok + "'", lineno);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        throw ParseError("malformed index '" + tok + "'", lineno);
    }
}

/// Parses a full Matrix Market stream into expanded triplets.
inline void read_mm_triplets(std::istream& in, int& rows, int& cols,
                             std::vector<Triplet<double>>& out) {
    long lineno = 0;
    const MmHeader h = parse_mm_header(in, lineno);
    std::string line;
    if (!next_data_line(in, line, lineno)) throw ParseError("missing size line", lineno + 1);
    std::istringstream ss(line);
    std::vector<std::string> toks;
    for (std::string t; ss >> t;) toks.push_back(t);
    const std::size_t want = h.coordinate ? 3 : 2;
    if (toks.size() != want)
        throw ParseError("size line must have " + std::to_string(want) + " fields", lineno);
    const long m = parse_index(toks[0], lineno);
    const long n = parse_index(toks[1], lineno);
    if (m <= 0 || n <= 0) throw ParseError("dimensions must be positive", lineno);
    rows = static_cast<int>(m);
    cols = static_cast<int>(n);
    if (h.sym != MmHeader::Sym::general && m != n)
        throw ParseError("symmetric storage requires a square matrix", lineno);
    out.clear();

    auto push_expanded = [&](int i, int j, double v, long at) {
        if (h.sym == MmHeader::Sym::general) {
            out.push_back({i, j, v});
            return;
        }
        if (i < j)
            throw ParseError("entry above the diagonal in " +
                                 std::string(h.sym == MmHeader::Sym::symmetric ? "a symmetric"
                                                                               : "a skew-symmetric") +
                                 " file",
                             at);
        if (h.sym == MmHeader::Sym::skew && i == j)
            throw ParseError("diagonal entry in a skew-symmetric file", at);
        out.push_back({i, j, v});
        if (i != j) out.push_back({j, i, h.sym == MmHeader::Sym::skew ? -v : v});
    };

    if (h.coordinate) {
        const long nnz = parse_index(toks[2], lineno);
        if (nnz < 0) throw ParseError("negative entry count", lineno);
        for (long e = 0; e < nnz; ++e) {
            if (!next_data_line(in, line, lineno))
                throw ParseError("file ends after " + std::to_string(e) + " of " +
                                     std::to_string(nnz) + " entries",
                                 lineno + 1);
            std::istringstream es(line);
            std::vector<std::string> et;
            for (std::string t; es >> t;) et.push_back(t);
            if (et.size() != 3)
                throw ParseError("coordinate entry must have 3 fields, found " +
                                     std::to_string(et.size()),
                                 lineno);
            const long i = parse_index(et[0], lineno);
            const long j = parse_index(et[1], lineno);
            if (i < 1 || i > m)
                throw ParseError("row index " + std::to_string(i) + " out of range [1, " +
                                     std::to_string(m) + "]",
                                 lineno);
            if (j < 1 || j > n)
                throw ParseError("column index " + std::to_string(j) + " out of range [1, " +
                                     std::to_string(n) + "]",
                                 lineno);
            const double v = parse_value(et[2], lineno);
            push_expanded(static_cast<int>(i) - 1, static_cast<int>(j) - 1, v, lineno);
        }
    } else {
        long expected = 0;
        if (h.sym == MmHeader::Sym::general)
            expected = m * n;
        else if (h.sym == MmHeader::Sym::symmetric)
            expected = n * (n + 1) / 2;
        else
            expected = n * (n - 1) / 2;
        // Dense values run down each column; symmetric storage holds the
        // lower triangle of each column, skew-symmetric the strict one.
        auto first_row = [&](long col) {
            if (h.sym == MmHeader::Sym::general) return 0L;
            return h.sym == MmHeader::Sym::skew ? col + 1 : col;
        };
        long seen = 0;
        long j = 0;
        long i = first_row(0);
        while (seen < expected) {
            if (!next_data_line(in, line, lineno))
                throw ParseError("file ends after " + std::to_string(seen) + " of " +
                                     std::to_string(expected) + " values",
                                 lineno + 1);
            std::istringstream es(line);
            for (std::string t; es >> t;) {
                if (seen == expected)
                    throw ParseError("more values than the header announces", lineno);
                const double v = parse_value(t, lineno);
                push_expanded(static_cast<int>(i), static_cast<int>(j), v, lineno);
                ++seen;
                ++i;
                if (i == m) {
                    ++j;
                    i = first_row(j);
                }
            }
        }
    }
    while (next_data_line(in, line, lineno)) {
        throw ParseError("unexpected trailing data", lineno);
    }
}

}  // namespace detail

/// Reads a square matrix, expanding symmetric and skew-symmetric storage.
/// Duplicate coordinate entries are summed.
inline SparseMatrix read_matrix_market(std::istream& in) {
    int rows = 0, cols = 0;
    std::vector<Triplet<double>> trips;
    detail::read_mm_triplets(in, rows, cols, trips);
    if (rows != cols)
        throw ParseError("matrix is not square (" + std::to_string(rows) + " x " +
                         std::to_string(cols) + ")");
    return sparse_from_triplets(rows, trips);
}

inline SparseMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    try {
        return read_matrix_market(in);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// Reads a single column (m x 1) as a dense vector.
inline std::vector<double> read_matrix_market_vector(std::istream& in) {
    int rows = 0, cols = 0;
    std::vector<Triplet<double>> trips;
    detail::read_mm_triplets(in, rows, cols, trips);
    if (cols != 1)
        throw ParseError("expected a single column, found " + std::to_string(cols));
    std::vector<double> v(static_cast<std::size_t>(rows), 0.0);
    for (const auto& t : trips) v[static_cast<std::size_t>(t.row)] += t.value;
    return v;
}

inline std::vector<double> read_matrix_market_vector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    try {
        return read_matrix_market_vector(in);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// Writes coordinate/real/general form with round-trip precision.
inline void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.n << " " << a.n << " " << a.nnz() << "\n";
    char buf[64];
    for (int i = 0; i < a.n; ++i)
        for (int s = a.row_ptr[static_cast<std::size_t>(i)]; s < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++s) {
            std::snprintf(buf, sizeof buf, "%.17g", a.values[static_cast<std::size_t>(s)]);
            out << (i + 1) << " " << (a.col_idx[static_cast<std::size_t>(s)] + 1) << " " << buf
                << "\n";
        }
}

inline void write_matrix_market(const std::string& path, const SparseMatrix& a) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    write_matrix_market(out, a);
}

inline void write_matrix_market_vector(std::ostream& out, std::span<const double> v) {
    out << "%%MatrixMarket matrix array real general\n";
    out << v.size() << " 1\n";
    char buf[64];
    for (double x : v) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        out << buf << "\n";
    }
}

inline void write_matrix_market_vector(const std::string& path, std::span<const double> v) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    write_matrix_market_vector(out, v);
}

}  // namespace sap
