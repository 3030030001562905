#pragma once

#include "herta/error.hpp"
#include "herta/graph.hpp"
#include "herta/sdd_solver.hpp"
#include "herta/sparse.hpp"
#include "herta/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace herta {

/// Linear TWIRLS instance: output Z*(W) = (I + lambda L)^{-1} X W, loss
/// 0.5 ||M (Z*(W) - Y)||_F^2 where M is an optional 0/1 row mask (train nodes).
struct ModelSpec {
    SparseSymmetric lap;
    double lambda = 1.0;
    DenseMatrix X;
    DenseMatrix Y;
    SparseSymmetric H;
    Vector mask; // empty = every node counts
    int threads = 1;
    bool full_rank = true;

    static ModelSpec make(SparseSymmetric lap, double lambda, DenseMatrix x, DenseMatrix y, Vector mask = {},
                          int threads = 1) {
        detail::require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::NonPositiveLambda,
                        "lambda must be positive");
        detail::require(x.rows() == lap.dim() && y.rows() == lap.dim(), ErrorCode::DimensionMismatch,
                        "feature/label rows must equal the node count");
        detail::require(mask.size() == 0 || mask.size() == lap.dim(), ErrorCode::DimensionMismatch,
                        "mask length must equal the node count");
        ModelSpec s;
        s.H = regularized_operator(lap, lambda);
        s.lap = std::move(lap);
        s.lambda = lambda;
        s.X = std::move(x);
        s.Y = std::move(y);
        s.mask = std::move(mask);
        s.threads = threads;
        if (s.X.rows() <= 20000) {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(s.X));
            s.full_rank = qr.rank() == s.X.cols();
        }
        return s;
    }

    Eigen::Index n() const noexcept { return X.rows(); }
    Eigen::Index d() const noexcept { return X.cols(); }
    Eigen::Index c() const noexcept { return Y.cols(); }
    bool masked() const noexcept { return mask.size() != 0; }

    void apply_mask(DenseMatrix& z) const {
        if (masked()) z = mask.asDiagonal() * z;
    }

    SolverHandle solver(double eps, SolverMethod method = SolverMethod::Chebyshev) const {
        return regularized_solver(H, lambda, eps, threads, method);
    }
};

/// One class column of the problem: y_hat = (I + lambda L) y_i.
struct SubProblem {
    Eigen::Index index = 0;
    Vector y_hat;
};

inline SubProblem make_subproblem(const ModelSpec& spec, Eigen::Index i) {
    detail::require(i >= 0 && i < spec.c(), ErrorCode::DimensionMismatch, "class index out of range");
    return {i, spec.H * Vector(spec.Y.col(i))};
}

/// Y_hat = H Y for every class at once.
inline DenseMatrix lifted_targets(const ModelSpec& spec) { return spec.H * spec.Y; }

inline DenseMatrix forward_exact(const ModelSpec& spec, const DenseMatrix& w, double eps) {
    detail::require(w.rows() == spec.d(), ErrorCode::DimensionMismatch, "W rows must equal feature dimension");
    const DenseMatrix xw = spec.X * w;
    return sdd_solve_multi(spec.solver(eps), xw);
}

/// T steps of gradient descent on the energy
///     E(Z) = lambda/2 Tr(Z^T L Z) + 1/2 ||Z - XW||^2,
/// i.e. Z <- (1 - alpha - alpha*lambda) Z + alpha*lambda*A Z + alpha X W with
/// A = I - L, starting from Z = 0. Contracts for alpha in (0, 2/(1 + 2 lambda)).
inline DenseMatrix unfold_forward(const ModelSpec& spec, const DenseMatrix& w, double alpha, std::int64_t steps) {
    detail::require(alpha > 0.0 && alpha < 2.0 / (1.0 + 2.0 * spec.lambda), ErrorCode::BadParams,
                    "alpha must lie in (0, 2/(1+2 lambda))");
    const DenseMatrix xw = spec.X * w;
    DenseMatrix z = DenseMatrix::Zero(spec.n(), w.cols());
    for (std::int64_t t = 0; t < steps; ++t) {
        // A Z = Z - L Z
        const DenseMatrix az = z - spec.lap * z;
        z = (1.0 - alpha - alpha * spec.lambda) * z + (alpha * spec.lambda) * az + alpha * xw;
    }
    return z;
}

inline double mse_loss(const DenseMatrix& z, const DenseMatrix& y) {
    detail::require(z.rows() == y.rows() && z.cols() == y.cols(), ErrorCode::DimensionMismatch,
                    "loss operands differ in shape");
    return 0.5 * (z - y).squaredNorm();
}

/// Per-class MSE of a forward output, honoring the mask.
inline Vector mse_class_losses(const ModelSpec& spec, const DenseMatrix& z) {
    DenseMatrix diff = z - spec.Y;
    spec.apply_mask(diff);
    return 0.5 * diff.colwise().squaredNorm().transpose();
}

/// l_i(w) = 0.5 ||M H^{-1}(X w - y_hat)||^2 with the inner solve at rate eps.
inline double sub_loss(const ModelSpec& spec, const SubProblem& sub, const Vector& w, double eps) {
    const Vector u = spec.X * w - sub.y_hat;
    Vector r = sdd_solve(spec.solver(eps), u);
    if (spec.masked()) r = r.cwiseProduct(spec.mask);
    return 0.5 * r.squaredNorm();
}

// ---------------------------------------------------------------------------
// Dense, oracle-grade evaluations (small n only).

inline void require_dense(Eigen::Index n, Eigen::Index limit = default_dense_limit) {
    detail::require(n <= limit, ErrorCode::TooLargeForDense,
                    "n=" + std::to_string(n) + " exceeds the dense limit " + std::to_string(limit));
}

/// Dense H^{-1} through a Cholesky factorization.
inline Eigen::MatrixXd dense_h_inverse(const ModelSpec& spec, Eigen::Index limit = default_dense_limit) {
    require_dense(spec.n(), limit);
    const Eigen::MatrixXd h = spec.H.to_dense();
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    detail::require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "H is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(spec.n(), spec.n()));
}

/// M H^{-1} X, the design matrix of the least-squares problem.
inline Eigen::MatrixXd dense_design(const ModelSpec& spec, const Eigen::MatrixXd& hinv) {
    Eigen::MatrixXd a = hinv * Eigen::MatrixXd(spec.X);
    if (spec.masked()) a = spec.mask.asDiagonal() * a;
    return a;
}

/// X^T H^{-1} M H^{-1} X (= X^T H^{-2} X without a mask).
inline Eigen::MatrixXd dense_hessian(const ModelSpec& spec, Eigen::Index limit = default_dense_limit) {
    const Eigen::MatrixXd a = dense_design(spec, dense_h_inverse(spec, limit));
    Eigen::MatrixXd hess = a.transpose() * a;
    return 0.5 * (hess + hess.transpose());
}

/// X^T H^{-1} M H^{-1} (X w - y_hat)
inline Vector exact_gradient(const ModelSpec& spec, const SubProblem& sub, const Vector& w,
                             Eigen::Index limit = default_dense_limit) {
    const Eigen::MatrixXd hinv = dense_h_inverse(spec, limit);
    Vector r = hinv * (spec.X * w - sub.y_hat);
    if (spec.masked()) r = r.cwiseProduct(spec.mask);
    return spec.X.transpose() * (hinv * r);
}

inline double dense_sub_loss(const ModelSpec& spec, const SubProblem& sub, const Vector& w,
                             Eigen::Index limit = default_dense_limit) {
    const Eigen::MatrixXd hinv = dense_h_inverse(spec, limit);
    Vector r = hinv * (spec.X * w - sub.y_hat);
    if (spec.masked()) r = r.cwiseProduct(spec.mask);
    return 0.5 * r.squaredNorm();
}

struct OptimalSolution {
    DenseMatrix W;
    Vector class_losses; // per-class l_i*
    double loss = 0.0;
};

/// Dense least-squares optimum of the MSE objective.
inline OptimalSolution optimal_mse(const ModelSpec& spec, Eigen::Index limit = default_dense_limit) {
    const Eigen::MatrixXd a = dense_design(spec, dense_h_inverse(spec, limit));
    Eigen::MatrixXd target = spec.Y;
    if (spec.masked()) target = spec.mask.asDiagonal() * target;
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    OptimalSolution out;
    out.W = cod.solve(target);
    const Eigen::MatrixXd resid = a * Eigen::MatrixXd(out.W) - target;
    out.class_losses = 0.5 * resid.colwise().squaredNorm().transpose();
    out.loss = out.class_losses.sum();
    return out;
}

/// kappa(X) = sigma_max / sigma_min. Dense SVD when small, otherwise power and
/// inverse iteration on X^T X.
inline double condition_number(const DenseMatrix& x) {
    if (x.cols() <= 64 && x.rows() <= 5000) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(x);
        const auto& sv = svd.singularValues();
        if (sv.size() == 0) return 1.0;
        const double smin = sv[sv.size() - 1];
        return smin > 0.0 ? sv[0] / smin : INFINITY;
    }
    const Eigen::MatrixXd g = x.transpose() * x;
    const Eigen::Index d = g.rows();
    Vector v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
    double top = 0.0;
    for (int it = 0; it < 30; ++it) {
        Vector next = g * v;
        top = next.norm();
        if (top == 0.0) return INFINITY;
        v = next / top;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success) return INFINITY;
    v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
    double inv_top = 0.0;
    for (int it = 0; it < 30; ++it) {
        Vector next = llt.solve(v);
        inv_top = next.norm();
        v = next / inv_top;
    }
    return std::sqrt(top * inv_top);
}

// ---------------------------------------------------------------------------
// Cross entropy on softmax(Z*(W)) with one-hot Y.

inline void require_one_hot(const DenseMatrix& y) {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        int ones = 0;
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            const double v = y(r, c);
            if (v == 1.0) ++ones;
            else if (v != 0.0) throw Error(ErrorCode::NotOneHot, "label row " + std::to_string(r) + " is not one-hot");
        }
        if (ones != 1) throw Error(ErrorCode::NotOneHot, "label row " + std::to_string(r) + " is not one-hot");
    }
}

inline DenseMatrix softmax_rows(const DenseMatrix& z) {
    DenseMatrix s(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double top = z.row(r).maxCoeff();
        const auto e = (z.row(r).array() - top).exp();
        s.row(r) = e / e.sum();
    }
    return s;
}

/// Sum over counted nodes of -log softmax(z_u)[label_u].
inline double ce_from_logits(const ModelSpec& spec, const DenseMatrix& z) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        if (spec.masked() && spec.mask[r] == 0.0) continue;
        const double top = z.row(r).maxCoeff();
        const double lse = top + std::log((z.row(r).array() - top).exp().sum());
        Eigen::Index label = 0;
        spec.Y.row(r).maxCoeff(&label);
        total += lse - z(r, label);
    }
    return total;
}

struct CeEvaluation {
    double loss = 0.0;
    DenseMatrix grad; // d x c
    DenseMatrix logits; // n x c
};

/// Loss and gradient X^T H^{-1} M (softmax(H^{-1} X W) - Y), both solves at rate eps.
inline CeEvaluation ce_loss_and_grad(const ModelSpec& spec, const DenseMatrix& w, double eps) {
    require_one_hot(spec.Y);
    CeEvaluation out;
    out.logits = forward_exact(spec, w, eps);
    out.loss = ce_from_logits(spec, out.logits);
    DenseMatrix resid = softmax_rows(out.logits) - spec.Y;
    spec.apply_mask(resid);
    out.grad = spec.X.transpose() * sdd_solve_multi(spec.solver(eps), resid);
    return out;
}

/// Dense CE Hessian block for class i applied to v:
///     X^T H^{-1} diag(omega) H^{-1} X v,  omega_u = s_ui - s_ui^2 (masked).
/// `weights` overrides omega when non-empty.
inline Vector ce_hessian_action(const ModelSpec& spec, const DenseMatrix& w, Eigen::Index i, const Vector& v,
                                const Vector& weights = {}, Eigen::Index limit = default_dense_limit) {
    detail::require(i >= 0 && i < spec.c(), ErrorCode::DimensionMismatch, "class index out of range");
    const Eigen::MatrixXd hinv = dense_h_inverse(spec, limit);
    Vector omega = weights;
    if (omega.size() == 0) {
        const DenseMatrix s = softmax_rows(DenseMatrix(hinv * (spec.X * w)));
        omega = s.col(i).array() - s.col(i).array().square();
        if (spec.masked()) omega = omega.cwiseProduct(spec.mask);
    }
    detail::require(omega.size() == spec.n(), ErrorCode::DimensionMismatch, "weight vector length");
    const Vector t = hinv * (spec.X * v);
    return spec.X.transpose() * (hinv * omega.cwiseProduct(t));
}

} // namespace herta
