#pragma once

#include "herta/error.hpp"
#include "herta/sparse.hpp"
#include "herta/types.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace herta {

using Edge = std::pair<std::int32_t, std::int32_t>;

/// Simple undirected graph. Edges are stored once with u < v; self-loops are
/// never stored as edges and are tracked by the flag instead.
struct GraphData {
    std::int32_t n = 0;
    std::vector<Edge> edges;
    bool self_loops_added = false;

    std::size_t m() const noexcept { return edges.size(); }

    /// Degrees including the self-loop when the flag is set.
    std::vector<double> degrees() const {
        std::vector<double> d(static_cast<std::size_t>(n), self_loops_added ? 1.0 : 0.0);
        for (const auto& [u, v] : edges) {
            d[static_cast<std::size_t>(u)] += 1.0;
            d[static_cast<std::size_t>(v)] += 1.0;
        }
        return d;
    }
};

/// Normalizes an arbitrary pair list: drops self-loops, orders each pair,
/// removes duplicates. Edges are sorted lexicographically.
inline GraphData make_graph(std::int32_t n, std::vector<Edge> pairs) {
    GraphData g;
    g.n = n;
    for (auto [u, v] : pairs) {
        detail::require(u >= 0 && v >= 0 && u < n && v < n, ErrorCode::DimensionMismatch,
                        "edge endpoint out of range");
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        g.edges.emplace_back(u, v);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    return g;
}

inline GraphData parse_edge_list(std::istream& in, std::optional<std::int32_t> n_hint = {}) {
    std::vector<Edge> pairs;
    std::int64_t max_id = -1;
    std::size_t valid_lines = 0;
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (line[first] == '#') {
            // "# n=<count>" declares the node count (keeps isolated trailing nodes).
            std::int64_t declared = 0;
            if (std::sscanf(line.c_str() + first, "# n=%" SCNd64, &declared) == 1 && declared > 0)
                max_id = std::max(max_id, declared - 1);
            continue;
        }
        std::istringstream fields(line);
        std::string a, b, extra;
        fields >> a >> b;
        auto parse_id = [&](const std::string& tok) {
            std::int64_t value = -1;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
            if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size() || value < 0 ||
                value > INT32_MAX - 1)
                throw Error(ErrorCode::ParseError,
                            "line " + std::to_string(line_no) + ": expected \"u v\" with nonnegative integers");
            return value;
        };
        const auto u = parse_id(a);
        const auto v = parse_id(b);
        if (fields >> extra && extra[0] != '#')
            throw Error(ErrorCode::ParseError,
                        "line " + std::to_string(line_no) + ": trailing field \"" + extra + "\"");
        ++valid_lines;
        max_id = std::max({max_id, u, v});
        pairs.emplace_back(static_cast<std::int32_t>(u), static_cast<std::int32_t>(v));
    }
    if (valid_lines == 0) throw Error(ErrorCode::EmptyGraph, "edge list has no edges");
    auto n = static_cast<std::int32_t>(max_id + 1);
    if (n_hint && *n_hint > n) n = *n_hint;
    return make_graph(n, std::move(pairs));
}

inline GraphData load_edge_list(const std::string& path, std::optional<std::int32_t> n_hint = {}) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    return parse_edge_list(in, n_hint);
}

inline GraphData add_self_loops(GraphData g) {
    g.self_loops_added = true;
    return g;
}

/// Normalized incidence: row e = (u,v) holds +1/sqrt(d_u) at u and -1/sqrt(d_v) at v.
class IncidenceMatrix {
public:
    struct Row {
        std::int32_t u;
        std::int32_t v;
        double wu;
        double wv; // stored positive; the entry at v is -wv
    };

    IncidenceMatrix() = default;
    IncidenceMatrix(std::int32_t n, std::vector<Row> rows) : n_(n), rows_(std::move(rows)) {}

    std::int32_t cols() const noexcept { return n_; }
    std::size_t rows() const noexcept { return rows_.size(); }
    const Row& row(std::size_t i) const { return rows_[i]; }
    const std::vector<Row>& row_list() const noexcept { return rows_; }

    /// b_i^T x
    double row_dot(std::size_t i, const Eigen::Ref<const Vector>& x) const {
        const auto& r = rows_[i];
        return r.wu * x[r.u] - r.wv * x[r.v];
    }

    /// B x (length m)
    Vector apply(const Vector& x) const {
        Vector y(static_cast<Eigen::Index>(rows_.size()));
        for (std::size_t i = 0; i < rows_.size(); ++i) y[static_cast<Eigen::Index>(i)] = row_dot(i, x);
        return y;
    }

    /// B^T y (length n)
    Vector apply_transpose(const Vector& y) const {
        Vector x = Vector::Zero(n_);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            const double yi = y[static_cast<Eigen::Index>(i)];
            x[r.u] += r.wu * yi;
            x[r.v] -= r.wv * yi;
        }
        return x;
    }

    /// B^T diag(w) B as a sparse matrix. Rows with zero weight are skipped.
    SparseSymmetric weighted_gram(const std::vector<double>& w) const {
        detail::require(w.size() == rows_.size(), ErrorCode::DimensionMismatch, "weight length");
        std::vector<Triplet> t;
        t.reserve(rows_.size() * 4);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            if (w[i] == 0.0) continue;
            const auto& r = rows_[i];
            t.push_back({r.u, r.u, w[i] * r.wu * r.wu});
            t.push_back({r.v, r.v, w[i] * r.wv * r.wv});
            t.push_back({r.u, r.v, -w[i] * r.wu * r.wv});
            t.push_back({r.v, r.u, -w[i] * r.wu * r.wv});
        }
        return SparseSymmetric::from_triplets(n_, std::move(t));
    }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_.size()), n_);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            b(static_cast<Eigen::Index>(i), r.u) = r.wu;
            b(static_cast<Eigen::Index>(i), r.v) = -r.wv;
        }
        return b;
    }

private:
    std::int32_t n_ = 0;
    std::vector<Row> rows_;
};

inline IncidenceMatrix normalized_incidence(const GraphData& g) {
    detail::require(g.self_loops_added, ErrorCode::BadParams, "normalized_incidence needs self-loops");
    const auto d = g.degrees();
    std::vector<IncidenceMatrix::Row> rows;
    rows.reserve(g.edges.size());
    for (const auto& [u, v] : g.edges)
        rows.push_back({u, v, 1.0 / std::sqrt(d[static_cast<std::size_t>(u)]),
                        1.0 / std::sqrt(d[static_cast<std::size_t>(v)])});
    return IncidenceMatrix(g.n, std::move(rows));
}

/// L = I - D^{-1/2} A D^{-1/2} with A including the self-loops.
inline SparseSymmetric normalized_laplacian(const GraphData& g) {
    detail::require(g.self_loops_added, ErrorCode::BadParams, "normalized_laplacian needs self-loops");
    const auto d = g.degrees();
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(g.n) + 2 * g.edges.size());
    for (std::int32_t i = 0; i < g.n; ++i) t.push_back({i, i, 1.0 - 1.0 / d[static_cast<std::size_t>(i)]});
    for (const auto& [u, v] : g.edges) {
        const double a = -1.0 / std::sqrt(d[static_cast<std::size_t>(u)] * d[static_cast<std::size_t>(v)]);
        t.push_back({u, v, a});
        t.push_back({v, u, a});
    }
    return SparseSymmetric::from_triplets(g.n, std::move(t));
}

/// H = I + lambda * L
inline SparseSymmetric regularized_operator(const SparseSymmetric& lap, double lambda) {
    detail::require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::NonPositiveLambda,
                    "lambda must be positive");
    return lap.scaled_plus_identity(1.0, lambda);
}

/// L + lambda^{-1} I, the operator whose inverse defines ridge leverage scores.
inline SparseSymmetric shifted_laplacian(const SparseSymmetric& lap, double lambda) {
    detail::require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::NonPositiveLambda,
                    "lambda must be positive");
    return lap.scaled_plus_identity(1.0 / lambda, 1.0);
}

/// D^{1/2} H D^{1/2} = D + lambda (D - A): the combinatorial form of H, which is
/// diagonally dominant for every graph.
inline SparseSymmetric degree_scaled(const SparseSymmetric& h, const GraphData& g) {
    const auto d = g.degrees();
    std::vector<Triplet> t;
    t.reserve(h.nnz());
    const auto rp = h.row_ptr();
    const auto ci = h.col_idx();
    const auto vals = h.values();
    for (std::int32_t i = 0; i < h.dim(); ++i)
        for (std::int64_t k = rp[i]; k < rp[i + 1]; ++k)
            t.push_back({i, ci[k], vals[k] * std::sqrt(d[static_cast<std::size_t>(i)] *
                                                      d[static_cast<std::size_t>(ci[k])])});
    return SparseSymmetric::from_triplets(h.dim(), std::move(t));
}

} // namespace herta
