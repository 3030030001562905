#pragma once

#include "herta/error.hpp"
#include "herta/graph.hpp"
#include "herta/rng.hpp"
#include "herta/sdd_solver.hpp"
#include "herta/types.hpp"

#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace herta {

// Substreams for synthetic data, kept apart from the training streams.
namespace streams {
inline constexpr std::uint64_t gen_graph = 100;
inline constexpr std::uint64_t gen_features = 101;
inline constexpr std::uint64_t gen_weights = 102;
inline constexpr std::uint64_t gen_noise = 103;
inline constexpr std::uint64_t gen_labels = 104;
inline constexpr std::uint64_t train_split = 105;
} // namespace streams

inline GraphData triangle_graph() { return make_graph(3, {{0, 1}, {1, 2}, {0, 2}}); }

inline GraphData path_graph(std::int32_t n) {
    detail::require(n >= 1, ErrorCode::BadParams, "path needs n >= 1");
    std::vector<Edge> e;
    for (std::int32_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return make_graph(n, std::move(e));
}

inline GraphData erdos_renyi(std::int32_t n, double p, const RngHandle& rng) {
    detail::require(n >= 1 && p >= 0.0 && p <= 1.0, ErrorCode::BadParams, "er needs n >= 1 and p in [0, 1]");
    auto gen = rng.engine();
    std::bernoulli_distribution coin(p);
    std::vector<Edge> e;
    for (std::int32_t u = 0; u < n; ++u)
        for (std::int32_t v = u + 1; v < n; ++v)
            if (coin(gen)) e.emplace_back(u, v);
    return make_graph(n, std::move(e));
}

/// k equal-ish blocks; p inside a block, q across.
inline GraphData stochastic_block(std::int32_t n, std::int32_t k, double p, double q, const RngHandle& rng) {
    detail::require(n >= 1 && k >= 1 && k <= n && p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0,
                    ErrorCode::BadParams, "sbm needs 1 <= k <= n and p, q in [0, 1]");
    auto gen = rng.engine();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Edge> e;
    for (std::int32_t u = 0; u < n; ++u)
        for (std::int32_t v = u + 1; v < n; ++v) {
            const bool same = (static_cast<std::int64_t>(u) * k / n) == (static_cast<std::int64_t>(v) * k / n);
            if (unif(gen) < (same ? p : q)) e.emplace_back(u, v);
        }
    return make_graph(n, std::move(e));
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(gen);
    return m;
}

/// Q factor (thin) of a Gaussian matrix with a sign convention that makes it unique.
inline Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
    const Eigen::MatrixXd g = gaussian_matrix(rows, cols, gen);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < cols; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

/// Features with singular values geometrically spaced from cond down to 1.
struct SyntheticFeatures {
    DenseMatrix X;
    Eigen::MatrixXd V;     // right singular vectors
    Vector singular_values;
};

inline SyntheticFeatures synthetic_features(Eigen::Index n, Eigen::Index d, double cond, const RngHandle& rng) {
    detail::require(n >= 1 && d >= 1 && d <= n && cond >= 1.0, ErrorCode::BadParams,
                    "features need 1 <= d <= n and cond >= 1");
    SyntheticFeatures f;
    f.singular_values.resize(d);
    for (Eigen::Index j = 0; j < d; ++j)
        f.singular_values[j] = d == 1 ? 1.0 : std::pow(cond, static_cast<double>(d - 1 - j) / static_cast<double>(d - 1));
    if (n == d && cond == 1.0) {
        f.X = DenseMatrix::Identity(n, d);
        f.V = Eigen::MatrixXd::Identity(d, d);
        return f;
    }
    auto gen = rng.engine();
    const Eigen::MatrixXd u = random_orthonormal(n, d, gen);
    f.V = random_orthonormal(d, d, gen);
    f.X = u * f.singular_values.asDiagonal() * f.V.transpose();
    return f;
}

enum class LabelModel { Planted, PlantedOneHot, RandomOneHot };

/// Planted weights W0 = V diag(1/sigma) G, so X W0 = U G weights every
/// singular direction equally. Returns W0 (d x c).
inline DenseMatrix planted_weights(const SyntheticFeatures& f, Eigen::Index c, const RngHandle& rng) {
    auto gen = rng.engine();
    const Eigen::MatrixXd g = gaussian_matrix(f.V.cols(), c, gen);
    return f.V * f.singular_values.cwiseInverse().asDiagonal() * g;
}

/// Y = H^{-1} X W0 (+ noise), or its row-wise argmax as one-hot, or random one-hot.
inline DenseMatrix synthetic_labels(LabelModel model, const SparseSymmetric& lap, double lambda,
                                    const SyntheticFeatures& f, Eigen::Index c, double noise, const RngHandle& rng) {
    detail::require(c >= 1, ErrorCode::BadParams, "need at least one class");
    const Eigen::Index n = f.X.rows();
    if (model == LabelModel::RandomOneHot) {
        auto gen = rng.substream(streams::gen_labels).engine();
        std::uniform_int_distribution<Eigen::Index> pick(0, c - 1);
        DenseMatrix y = DenseMatrix::Zero(n, c);
        for (Eigen::Index i = 0; i < n; ++i) y(i, pick(gen)) = 1.0;
        return y;
    }
    const DenseMatrix w0 = planted_weights(f, c, rng.substream(streams::gen_weights));
    const SolverHandle h = regularized_solver(regularized_operator(lap, lambda), lambda, 1e-14);
    DenseMatrix y = sdd_solve_multi(h, DenseMatrix(f.X * w0));
    if (noise > 0.0) {
        auto gen = rng.substream(streams::gen_noise).engine();
        std::normal_distribution<double> normal(0.0, noise);
        for (Eigen::Index i = 0; i < y.rows(); ++i)
            for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) += normal(gen);
    }
    if (model == LabelModel::Planted) return y;
    DenseMatrix one_hot = DenseMatrix::Zero(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index label = 0;
        y.row(i).maxCoeff(&label);
        one_hot(i, label) = 1.0;
    }
    return one_hot;
}

/// 0/1 mask selecting round(frac * n) nodes uniformly at random.
inline Vector train_mask(Eigen::Index n, double frac, const RngHandle& rng) {
    detail::require(frac > 0.0 && frac <= 1.0, ErrorCode::BadParams, "train fraction must lie in (0, 1]");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    auto gen = rng.substream(streams::train_split).engine();
    // Fisher-Yates with an explicit distribution so the order is library independent.
    for (Eigen::Index i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<Eigen::Index> pick(0, i);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(gen))]);
    }
    const auto keep = static_cast<Eigen::Index>(std::llround(frac * static_cast<double>(n)));
    Vector mask = Vector::Zero(n);
    for (Eigen::Index i = 0; i < keep; ++i) mask[order[static_cast<std::size_t>(i)]] = 1.0;
    return mask;
}

} // namespace herta
