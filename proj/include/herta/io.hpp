#pragma once

#include "herta/error.hpp"
#include "herta/graph.hpp"
#include "herta/loop.hpp"
#include "herta/sparsifier.hpp"
#include "herta/types.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace herta {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',' || ch == ' ' || ch == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline bool parse_double(const std::string& tok, double& out) {
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc() && ptr == tok.data() + tok.size() && std::isfinite(out);
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    return out;
}

} // namespace detail

/// Numeric CSV (comma or whitespace separated), '#' comments; one row per node.
inline DenseMatrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto fields = detail::split_fields(line);
        std::vector<double> row(fields.size());
        for (std::size_t j = 0; j < fields.size(); ++j)
            if (!detail::parse_double(fields[j], row[j]))
                throw Error(ErrorCode::ParseError, path + " line " + std::to_string(line_no) + ": bad number \"" +
                                                       fields[j] + "\"");
        if (!rows.empty() && row.size() != rows.front().size())
            throw Error(ErrorCode::ParseError, path + " line " + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorCode::ParseError, path + ": no data rows");
    DenseMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

enum class LabelKind { Auto, Class, Numeric };

/// Integer class ids become one-hot rows; Auto picks Class for a single
/// column of nonnegative integers and Numeric otherwise.
inline DenseMatrix read_labels(const std::string& path, LabelKind kind = LabelKind::Auto) {
    const DenseMatrix raw = read_matrix_csv(path);
    const bool integral_column =
        raw.cols() == 1 && (raw.array() >= 0.0).all() && (raw.array() == raw.array().round()).all();
    if (kind == LabelKind::Numeric || (kind == LabelKind::Auto && !integral_column)) return raw;
    if (!integral_column) throw Error(ErrorCode::ParseError, path + ": class labels must be one nonnegative integer per row");
    const auto classes = static_cast<Eigen::Index>(raw.maxCoeff()) + 1;
    DenseMatrix y = DenseMatrix::Zero(raw.rows(), classes);
    for (Eigen::Index i = 0; i < raw.rows(); ++i) y(i, static_cast<Eigen::Index>(raw(i, 0))) = 1.0;
    return y;
}

inline void write_matrix_csv(const std::string& path, const DenseMatrix& m) {
    auto out = detail::open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << '\n';
    }
}

inline void write_class_labels(const std::string& path, const DenseMatrix& one_hot) {
    auto out = detail::open_out(path);
    for (Eigen::Index i = 0; i < one_hot.rows(); ++i) {
        Eigen::Index label = 0;
        one_hot.row(i).maxCoeff(&label);
        out << label << '\n';
    }
}

inline void write_edge_list(const std::string& path, const GraphData& g) {
    auto out = detail::open_out(path);
    out << "# n=" << g.n << '\n';
    for (const auto& [u, v] : g.edges) out << u << ' ' << v << '\n';
}

inline void write_weighted_edges(const std::string& path, const std::vector<WeightedEdge>& edges) {
    auto out = detail::open_out(path);
    for (const auto& e : edges) out << e.u << ' ' << e.v << ' ' << format_double(e.w) << '\n';
}

inline void write_trace_csv(const std::string& path, const LossTrace& trace) {
    auto out = detail::open_out(path);
    out << "iter,wall_ns,loss\n";
    for (const auto& e : trace.entries) out << e.iter << ',' << e.wall_ns << ',' << format_double(e.loss) << '\n';
}

inline LossTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "iter,wall_ns,loss") throw Error(ErrorCode::ParseError, path + ": unexpected header");
    LossTrace t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_fields(line);
        double it = 0, ns = 0, loss = 0;
        if (f.size() != 3 || !detail::parse_double(f[0], it) || !detail::parse_double(f[1], ns) ||
            !detail::parse_double(f[2], loss))
            throw Error(ErrorCode::ParseError, path + ": bad trace row \"" + line + "\"");
        t.push(static_cast<std::int64_t>(it), static_cast<std::int64_t>(ns), loss);
    }
    return t;
}

} // namespace herta
