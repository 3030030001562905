#pragma once

#include "herta/error.hpp"
#include "herta/rng.hpp"
#include "herta/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace herta {

inline Eigen::Index next_pow2(Eigen::Index n) {
    Eigen::Index p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Normalized Walsh-Hadamard transform (1/sqrt(n) H_n) of x zero-padded to a power of two.
inline Vector fwht(const Vector& x) {
    const Eigen::Index n = next_pow2(std::max<Eigen::Index>(x.size(), 1));
    Vector y = Vector::Zero(n);
    y.head(x.size()) = x;
    for (Eigen::Index h = 1; h < n; h <<= 1)
        for (Eigen::Index i = 0; i < n; i += 2 * h)
            for (Eigen::Index j = i; j < i + h; ++j) {
                const double a = y[j], b = y[j + h];
                y[j] = a + b;
                y[j + h] = a - b;
            }
    y /= std::sqrt(static_cast<double>(n));
    return y;
}

/// Same transform applied to every column of Q (rows are the transformed axis).
inline DenseMatrix fwht_rows(const DenseMatrix& q) {
    const Eigen::Index n = next_pow2(std::max<Eigen::Index>(q.rows(), 1));
    DenseMatrix y = DenseMatrix::Zero(n, q.cols());
    y.topRows(q.rows()) = q;
    for (Eigen::Index h = 1; h < n; h <<= 1)
        for (Eigen::Index i = 0; i < n; i += 2 * h)
            for (Eigen::Index j = i; j < i + h; ++j) {
                // Row-major storage keeps each butterfly a pair of contiguous rows.
                auto a = y.row(j);
                auto b = y.row(j + h);
                for (Eigen::Index c = 0; c < y.cols(); ++c) {
                    const double x0 = a[c], x1 = b[c];
                    a[c] = x0 + x1;
                    b[c] = x0 - x1;
                }
            }
    y /= std::sqrt(static_cast<double>(n));
    return y;
}

/// Multinomial draw: counts[i] = number of times index i is picked in s
/// independent draws from probs. Done by sequential conditional binomials,
/// so the cost is O(len(probs)) regardless of s.
inline std::vector<std::int64_t> sample_counts(std::span<const double> probs, std::int64_t s,
                                               const RngHandle& rng) {
    std::vector<std::int64_t> counts(probs.size(), 0);
    std::size_t last = probs.size();
    while (last > 0 && probs[last - 1] <= 0.0) --last;
    if (last == 0 || s <= 0) return counts;
    auto gen = rng.engine();
    std::int64_t remaining = s;
    double mass_left = 1.0;
    for (std::size_t i = 0; i + 1 < last && remaining > 0; ++i) {
        const double p = mass_left > 0.0 ? std::clamp(probs[i] / mass_left, 0.0, 1.0) : 0.0;
        if (p > 0.0) {
            std::binomial_distribution<std::int64_t> draw(remaining, p);
            counts[i] = draw(gen);
            remaining -= counts[i];
        }
        mass_left -= probs[i];
    }
    counts[last - 1] += remaining;
    return counts;
}

inline void check_distribution(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) {
        detail::require(p >= 0.0 && std::isfinite(p), ErrorCode::BadDistribution,
                        "probabilities must be finite and nonnegative");
        total += p;
    }
    detail::require(std::abs(total - 1.0) <= 1e-9, ErrorCode::BadDistribution,
                    "probabilities must sum to 1");
}

/// s i.i.d. rows of M, row k drawn with probability p_k and scaled by 1/sqrt(s p_k).
inline DenseMatrix subsample_rows(const DenseMatrix& m, Eigen::Index s, std::span<const double> probs,
                                  const RngHandle& rng) {
    detail::require(s >= 1, ErrorCode::BadParams, "subsample count must be positive");
    detail::require(static_cast<Eigen::Index>(probs.size()) == m.rows(), ErrorCode::DimensionMismatch,
                    "probability vector length");
    check_distribution(probs);
    std::discrete_distribution<std::int64_t> pick(probs.begin(), probs.end());
    auto gen = rng.engine();
    DenseMatrix out(s, m.cols());
    for (Eigen::Index r = 0; r < s; ++r) {
        const auto k = static_cast<Eigen::Index>(pick(gen));
        out.row(r) = m.row(k) / std::sqrt(static_cast<double>(s) * probs[static_cast<std::size_t>(k)]);
    }
    return out;
}

enum class RowSelection {
    Uniform,    // i.i.d. uniform with replacement
    Exhaustive, // every row once, in order (deterministic test mode)
};

/// Uniform version: rows drawn with replacement, scale sqrt(n/s). Exhaustive
/// mode takes every row once (s must equal n).
inline DenseMatrix subsample_rows_uniform(const DenseMatrix& m, Eigen::Index s, const RngHandle& rng,
                                          RowSelection mode = RowSelection::Uniform) {
    detail::require(s >= 1 && m.rows() >= 1, ErrorCode::BadParams, "subsample count must be positive");
    if (mode == RowSelection::Exhaustive) {
        detail::require(s == m.rows(), ErrorCode::BadParams, "exhaustive selection needs s == rows");
        return m;
    }
    std::uniform_int_distribution<Eigen::Index> pick(0, m.rows() - 1);
    auto gen = rng.engine();
    const double scale = std::sqrt(static_cast<double>(m.rows()) / static_cast<double>(s));
    DenseMatrix out(s, m.cols());
    for (Eigen::Index r = 0; r < s; ++r) out.row(r) = scale * m.row(pick(gen));
    return out;
}

/// S * fwht(R * Q) with R a Rademacher diagonal and S a uniform row sampler
/// scaled by sqrt(n_pad / s).
inline DenseMatrix srht(const DenseMatrix& q, Eigen::Index s, const RngHandle& rng,
                        RowSelection mode = RowSelection::Uniform) {
    detail::require(q.rows() >= 1 && q.cols() >= 1 && s >= 1, ErrorCode::BadParams, "srht shape");
    DenseMatrix signed_q = q;
    auto sign_gen = rng.substream(streams::srht_signs).engine();
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index i = 0; i < signed_q.rows(); ++i)
        if (coin(sign_gen)) signed_q.row(i) *= -1.0;
    return subsample_rows_uniform(fwht_rows(signed_q), s, rng.substream(streams::srht_rows), mode);
}

/// k x n matrix of i.i.d. N(0, 1/k) entries.
inline DenseMatrix gaussian_sketch(Eigen::Index k, Eigen::Index n, const RngHandle& rng) {
    detail::require(k >= 1 && n >= 1, ErrorCode::BadParams, "sketch shape");
    auto gen = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
    DenseMatrix out(k, n);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = normal(gen);
    return out;
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double tol = 1e-10) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// P^{-1/2} for symmetric positive definite P.
inline DenseMatrix spd_inverse_sqrt(const DenseMatrix& p) {
    detail::require(is_symmetric(p), ErrorCode::NotPositiveDefinite, "matrix is not symmetric");
    const Eigen::MatrixXd dense_p = p;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense_p);
    const auto& ev = eig.eigenvalues();
    const double norm = ev.cwiseAbs().maxCoeff();
    detail::require(ev.minCoeff() > 1e-12 * norm && norm > 0.0, ErrorCode::NotPositiveDefinite,
                    "smallest eigenvalue is not positive");
    const Eigen::MatrixXd& v = eig.eigenvectors();
    DenseMatrix out = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    return 0.5 * (out + out.transpose()).eval();
}

/// Eigenvalues x of the pencil A x = t B x (B positive definite), ascending.
inline Vector pencil_eigenvalues(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols() && a.rows() == a.cols(),
                    ErrorCode::DimensionMismatch, "pencil shapes differ");
    detail::require(is_symmetric(a) && is_symmetric(b), ErrorCode::NotPositiveDefinite,
                    "pencil matrices must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> chol(b);
    detail::require(chol.info() == Eigen::Success, ErrorCode::NotPositiveDefinite,
                    "pencil base matrix is not positive definite");
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(a, b, Eigen::EigenvaluesOnly);
    return ges.eigenvalues();
}

struct SketchReport {
    double psi_forward = 0.0;  // ||S^{-1/2} St S^{-1/2}||
    double psi_backward = 0.0; // ||St^{-1/2} S St^{-1/2}||
    double eig_min = 0.0;      // pencil (St, S) extremes
    double eig_max = 0.0;

    double psi() const noexcept { return std::max(psi_forward, psi_backward); }

    /// All pencil eigenvalues of (St, S) inside [1 - eps, 1 + eps].
    bool check_approx(double eps) const noexcept { return eig_min >= 1.0 - eps && eig_max <= 1.0 + eps; }
};

inline SketchReport psi_approx(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& sigma_tilde) {
    detail::require(sigma.rows() == sigma_tilde.rows() && sigma.cols() == sigma_tilde.cols(),
                    ErrorCode::DimensionMismatch, "psi_approx shapes differ");
    Eigen::LLT<Eigen::MatrixXd> chol(sigma_tilde);
    detail::require(chol.info() == Eigen::Success, ErrorCode::NotPositiveDefinite,
                    "approximant is not positive definite");
    const Vector ev = pencil_eigenvalues(sigma_tilde, sigma);
    detail::require(ev.minCoeff() > 0.0, ErrorCode::NotPositiveDefinite, "approximant is singular");
    SketchReport r;
    r.eig_min = ev.minCoeff();
    r.eig_max = ev.maxCoeff();
    r.psi_forward = r.eig_max;
    r.psi_backward = 1.0 / r.eig_min;
    return r;
}

} // namespace herta
