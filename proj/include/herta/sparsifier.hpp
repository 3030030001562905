#pragma once

#include "herta/error.hpp"
#include "herta/graph.hpp"
#include "herta/rng.hpp"
#include "herta/sdd_solver.hpp"
#include "herta/sketch.hpp"
#include "herta/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace herta {

struct SparsifyConfig {
    double eps = 0.25;
    double lambda = 1.0;
    double C = 8.0;
    std::int64_t k_jl = 0; // 0 = ceil(C ln m)
    std::uint64_t seed = 0;
    int threads = 1;
    double solver_rate = std::pow(2.0, 0.25) - 1.0;
    SolverMethod solver_method = SolverMethod::ConjugateGradient;

    void validate() const {
        detail::require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::NonPositiveLambda,
                        "lambda must be positive");
        detail::require(eps > 0.0 && eps <= 0.5, ErrorCode::BadParams, "sparsifier eps must lie in (0, 1/2]");
        detail::require(C > 0.0, ErrorCode::BadParams, "sampling constant C must be positive");
        detail::require(solver_rate > 0.0, ErrorCode::BadParams, "solver rate must be positive");
    }

    std::int64_t jl_rows(std::size_t m) const {
        if (k_jl > 0) return k_jl;
        const double logm = std::log(std::max<double>(static_cast<double>(m), 2.0));
        return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(C * logm)));
    }
};

struct LeverageScores {
    std::vector<double> l_tilde;
    double Z = 0.0;
    std::int32_t n = 0;
};

struct EffectiveDim {
    double n_lambda_estimate = 0.0;
};

/// Estimated ridge leverage scores l_i = b_i^T (L + lambda^{-1} I)^{-1} b_i.
/// Writing M = L + lambda^{-1} I and L = B^T B,
///     l_i = ||B M^{-1} b_i||^2 + lambda^{-1} ||M^{-1} b_i||^2,
/// and both norms are estimated through Gaussian sketches of width k. When k
/// reaches the full dimension the sketch is replaced by the identity, which
/// gives the exact score.
inline LeverageScores ridge_leverage_scores(const IncidenceMatrix& b, const SparseSymmetric& lap,
                                            const SparsifyConfig& cfg) {
    cfg.validate();
    const std::int32_t n = b.cols();
    const std::size_t m = b.rows();
    detail::require(lap.dim() == n, ErrorCode::DimensionMismatch, "incidence and Laplacian sizes differ");
    LeverageScores out;
    out.n = n;
    out.l_tilde.assign(m, 0.0);
    if (m == 0) return out;

    const auto k = cfg.jl_rows(m);
    const RngHandle root(cfg.seed);

    // rhs1 = (Pi_1 B)^T, n x k1
    DenseMatrix rhs1;
    if (k >= static_cast<std::int64_t>(m)) {
        rhs1 = DenseMatrix::Zero(n, static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            const auto& r = b.row(i);
            rhs1(r.u, static_cast<Eigen::Index>(i)) = r.wu;
            rhs1(r.v, static_cast<Eigen::Index>(i)) = -r.wv;
        }
    } else {
        const DenseMatrix pi1 = gaussian_sketch(k, static_cast<Eigen::Index>(m), root.substream(streams::sketch_edges));
        rhs1 = DenseMatrix::Zero(n, k);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& r = b.row(i);
            const auto col = pi1.col(static_cast<Eigen::Index>(i)).transpose();
            rhs1.row(r.u) += r.wu * col;
            rhs1.row(r.v) -= r.wv * col;
        }
    }
    // rhs2 = Pi_2^T, n x k2
    DenseMatrix rhs2;
    if (k >= n) {
        rhs2 = DenseMatrix::Identity(n, n);
    } else {
        rhs2 = gaussian_sketch(k, n, root.substream(streams::sketch_nodes)).transpose();
    }

    const SolverHandle solver = shifted_solver(shifted_laplacian(lap, cfg.lambda), cfg.lambda, cfg.solver_rate,
                                               cfg.threads, cfg.solver_method);
    // Rows of these n x k matrices are the columns of B_S and Pi_S.
    const DenseMatrix bs = sdd_solve_multi(solver, rhs1);
    const DenseMatrix ps = sdd_solve_multi(solver, rhs2);

    const double inv_lambda = 1.0 / cfg.lambda;
    parallel_for(m, cfg.threads, [&](std::size_t i) {
        const auto& r = b.row(i);
        const double t1 = (r.wu * bs.row(r.u) - r.wv * bs.row(r.v)).squaredNorm();
        const double t2 = (r.wu * ps.row(r.u) - r.wv * ps.row(r.v)).squaredNorm();
        out.l_tilde[i] = t1 + inv_lambda * t2;
    });
    for (double l : out.l_tilde) out.Z += l;
    return out;
}

/// Sum of the scores, clamped to [0, n]. Exact scores sum to
/// Tr[L (L + lambda^{-1} I)^{-1}].
inline EffectiveDim effective_dim(const LeverageScores& scores) {
    return {std::clamp(scores.Z, 0.0, static_cast<double>(scores.n))};
}

struct WeightedEdge {
    std::int32_t u;
    std::int32_t v;
    double w; // multiplies b_e b_e^T, where b_e is the normalized incidence row of (u, v)
};

struct SparsifyResult {
    SparseSymmetric laplacian;      // L~ = sum_e w_e b_e b_e^T
    std::vector<WeightedEdge> edges; // distinct sampled edges
    LeverageScores scores;
    EffectiveDim dim;
    std::int64_t samples = 0; // s
};

inline std::int64_t sparsifier_sample_count(double n_lambda_estimate, std::int32_t n, const SparsifyConfig& cfg) {
    const double logn = std::log(std::max<double>(n, 2.0));
    const double s = std::ceil(cfg.C * std::max(n_lambda_estimate, 1.0) * logn / (cfg.eps * cfg.eps));
    detail::require(s < 9.0e18, ErrorCode::BadParams, "sample count overflows");
    return static_cast<std::int64_t>(s);
}

/// Samples s incidence rows with probabilities l~_i / Z (with replacement,
/// row scale 1/sqrt(s p_i)) and returns L~ = B~^T B~.
inline SparsifyResult sparsify(const SparseSymmetric& lap, const IncidenceMatrix& b, const SparsifyConfig& cfg) {
    cfg.validate();
    SparsifyResult res;
    res.scores = ridge_leverage_scores(b, lap, cfg);
    res.dim = effective_dim(res.scores);
    const std::size_t m = b.rows();
    if (m == 0) {
        res.laplacian = SparseSymmetric::from_triplets(b.cols(), {});
        return res;
    }
    detail::require(res.scores.Z > 0.0 && std::isfinite(res.scores.Z), ErrorCode::DegenerateScores,
                    "leverage score sum is not positive");
    res.samples = sparsifier_sample_count(res.dim.n_lambda_estimate, b.cols(), cfg);

    std::vector<double> probs(m);
    for (std::size_t i = 0; i < m; ++i) probs[i] = res.scores.l_tilde[i] / res.scores.Z;
    const auto counts = sample_counts(probs, res.samples, RngHandle(cfg.seed).substream(streams::edge_sampling));

    std::vector<double> weights(m, 0.0);
    const double s = static_cast<double>(res.samples);
    for (std::size_t i = 0; i < m; ++i) {
        if (counts[i] == 0) continue;
        weights[i] = static_cast<double>(counts[i]) / (s * probs[i]);
        res.edges.push_back({b.row(i).u, b.row(i).v, weights[i]});
    }
    res.laplacian = b.weighted_gram(weights);
    return res;
}

} // namespace herta
