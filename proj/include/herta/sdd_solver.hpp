#pragma once

#include "herta/error.hpp"
#include "herta/parallel.hpp"
#include "herta/sparse.hpp"
#include "herta/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace herta {

struct SolveStats {
    std::int64_t iterations = 0;
    double final_rel_residual = 0.0;
};

/// Interval known to contain the spectrum of H.
struct SpectrumBounds {
    double lo = 1.0;
    double hi = 1.0;
    double cond() const noexcept { return hi / lo; }
};

enum class SolverMethod {
    // Fixed-degree Chebyshev polynomial in H. The iteration count depends only
    // on (eps, bounds), so the solver is a linear map of u and the error bound
    // holds for every right-hand side, including linear combinations of
    // previously solved columns.
    Chebyshev,
    // Jacobi-preconditioned CG stopped by ||Hv - u|| / ||u|| <= eps / sqrt(kappa).
    // Fewer iterations, but the map u -> v is not linear.
    ConjugateGradient,
};

/// Immutable description of one system family H v = u and the rate every
/// solve must meet:  ||v - H^{-1}u||_H <= eps * ||H^{-1}u||_H.
class SolverHandle {
public:
    SolverHandle(SparseSymmetric h, double eps, std::optional<SpectrumBounds> bounds = {},
                 SolverMethod method = SolverMethod::Chebyshev, std::int64_t max_iter = 0, int threads = 1)
        : h_(std::make_shared<const SparseSymmetric>(std::move(h))), eps_(eps), method_(method),
          threads_(threads), user_max_iter_(max_iter) {
        detail::require(eps > 0.0 && std::isfinite(eps), ErrorCode::BadParams, "solver eps must be positive");
        const Vector diag = h_->diagonal();
        detail::require(h_->dim() == 0 || diag.minCoeff() > 0.0, ErrorCode::NotPositiveDefinite,
                        "solver matrix needs a positive diagonal");
        inv_diag_ = diag.cwiseInverse();
        bounds_ = bounds ? *bounds : dominance_bounds(*h_);
        detail::require(bounds_.lo > 0.0 && bounds_.hi >= bounds_.lo && std::isfinite(bounds_.hi),
                        ErrorCode::BadParams, "spectrum bounds must satisfy 0 < lo <= hi");
        derive_limits();
    }

    const SparseSymmetric& matrix() const noexcept { return *h_; }
    double eps() const noexcept { return eps_; }
    SpectrumBounds bounds() const noexcept { return bounds_; }
    double cond_hint() const noexcept { return bounds_.cond(); }
    SolverMethod method() const noexcept { return method_; }
    std::int64_t max_iter() const noexcept { return max_iter_; }
    int threads() const noexcept { return threads_; }
    const Vector& inverse_diagonal() const noexcept { return inv_diag_; }

    /// Iterations a Chebyshev solve performs (independent of u).
    std::int64_t chebyshev_degree() const noexcept { return cheb_degree_; }

    SolverHandle with_eps(double eps) const {
        detail::require(eps > 0.0 && std::isfinite(eps), ErrorCode::BadParams, "solver eps must be positive");
        SolverHandle copy = *this;
        copy.eps_ = eps;
        copy.derive_limits();
        return copy;
    }

    SolverHandle with_method(SolverMethod method) const {
        SolverHandle copy = *this;
        copy.method_ = method;
        copy.derive_limits();
        return copy;
    }

    static std::int64_t default_max_iter(double cond, double eps) {
        const double log_term = eps < 1.0 ? std::log(1.0 / eps) : 0.0;
        return static_cast<std::int64_t>(std::ceil(10.0 * std::sqrt(cond) * log_term)) + 100;
    }

    /// Smallest k with 1 / T_k((hi+lo)/(hi-lo)) <= eps.
    static std::int64_t chebyshev_degree_for(SpectrumBounds b, double eps) {
        if (eps >= 1.0) return 0;
        if (b.hi <= b.lo * (1.0 + 1e-15)) return 1;
        const double sigma = (b.hi + b.lo) / (b.hi - b.lo);
        return std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::ceil(std::acosh(1.0 / eps) / std::acosh(sigma) - 1e-12)));
    }

    /// Bounds for a strictly diagonally dominant matrix: smallest dominance
    /// margin below, Gershgorin radius above.
    static SpectrumBounds dominance_bounds(const SparseSymmetric& h) {
        if (h.dim() == 0) return {};
        const auto rp = h.row_ptr();
        const auto ci = h.col_idx();
        const auto vals = h.values();
        double margin = INFINITY;
        for (std::int32_t i = 0; i < h.dim(); ++i) {
            double diag = 0.0, off = 0.0;
            for (std::int64_t k = rp[i]; k < rp[i + 1]; ++k) {
                if (ci[k] == i) diag = vals[k];
                else off += std::abs(vals[k]);
            }
            margin = std::min(margin, diag - off);
        }
        detail::require(margin > 0.0, ErrorCode::BadParams,
                        "no spectrum bounds given and matrix is not strictly diagonally dominant");
        return {margin, std::max(margin, h.gershgorin_upper())};
    }

private:
    void derive_limits() {
        cheb_degree_ = chebyshev_degree_for(bounds_, eps_);
        if (user_max_iter_ > 0) max_iter_ = user_max_iter_;
        else if (method_ == SolverMethod::Chebyshev) max_iter_ = std::max<std::int64_t>(cheb_degree_, 1);
        else max_iter_ = default_max_iter(bounds_.cond(), eps_);
    }

    std::shared_ptr<const SparseSymmetric> h_;
    Vector inv_diag_;
    double eps_;
    SpectrumBounds bounds_;
    SolverMethod method_;
    int threads_ = 1;
    std::int64_t user_max_iter_ = 0;
    std::int64_t max_iter_ = 0;
    std::int64_t cheb_degree_ = 0;
};

/// I + lambda*L with L a normalized Laplacian: spectrum in [1, 1 + 2 lambda].
/// The Gershgorin radius can only tighten the upper end (H = I gives [1, 1]).
inline SolverHandle regularized_solver(SparseSymmetric h, double lambda, double eps, int threads = 1,
                                       SolverMethod method = SolverMethod::Chebyshev) {
    const double hi = std::max(1.0, std::min(1.0 + 2.0 * lambda, h.gershgorin_upper()));
    // CG cap from the worst-case condition 1 + 2 lambda, not the tighter Gershgorin value.
    const std::int64_t cap =
        method == SolverMethod::ConjugateGradient ? SolverHandle::default_max_iter(1.0 + 2.0 * lambda, eps) : 0;
    return SolverHandle(std::move(h), eps, SpectrumBounds{1.0, hi}, method, cap, threads);
}

/// L + lambda^{-1} I: spectrum in [1/lambda, 2 + 1/lambda].
inline SolverHandle shifted_solver(SparseSymmetric m, double lambda, double eps, int threads = 1,
                                   SolverMethod method = SolverMethod::Chebyshev) {
    return SolverHandle(std::move(m), eps, SpectrumBounds{1.0 / lambda, 2.0 + 1.0 / lambda}, method, 0, threads);
}

namespace detail {

inline Vector chebyshev_solve(const SolverHandle& h, const Vector& u, SolveStats& st) {
    const SparseSymmetric& a = h.matrix();
    const auto b = h.bounds();
    const Eigen::Index n = u.size();
    const std::int64_t degree = h.chebyshev_degree();
    if (degree > h.max_iter())
        throw Error(ErrorCode::NoConvergence, "Chebyshev degree " + std::to_string(degree) +
                                                  " exceeds max_iter=" + std::to_string(h.max_iter()));
    const double theta = 0.5 * (b.hi + b.lo);
    const double delta = 0.5 * (b.hi - b.lo);
    Vector x = Vector::Zero(n);
    Vector r = u;
    Vector ad(n);
    Vector d = r / theta;
    if (delta <= theta * 1e-15) {
        x = d;
        a.multiply(x, ad);
        st.iterations = 1;
        st.final_rel_residual = (u - ad).norm() / u.norm();
        return x;
    }
    const double sigma = theta / delta;
    double rho = 1.0 / sigma;
    for (std::int64_t k = 0; k < degree; ++k) {
        x += d;
        a.multiply(d, ad);
        r -= ad;
        const double rho_next = 1.0 / (2.0 * sigma - rho);
        d = (rho_next * rho) * d + (2.0 * rho_next / delta) * r;
        rho = rho_next;
    }
    st.iterations = degree;
    st.final_rel_residual = r.norm() / u.norm();
    return x;
}

inline Vector cg_solve(const SolverHandle& h, const Vector& u, SolveStats& st) {
    const SparseSymmetric& a = h.matrix();
    const Eigen::Index n = u.size();
    const double u_norm = u.norm();
    const double tol = h.eps() / std::sqrt(h.cond_hint()) * u_norm;
    const Vector& dinv = h.inverse_diagonal();
    Vector v = Vector::Zero(n);
    Vector r = u;
    Vector z = dinv.cwiseProduct(r);
    Vector p = z;
    Vector ap(n);
    double rz = r.dot(z);
    while (true) {
        if (st.iterations >= h.max_iter())
            throw Error(ErrorCode::NoConvergence, "CG hit max_iter=" + std::to_string(h.max_iter()) +
                                                      " (relative residual " +
                                                      std::to_string(r.norm() / u_norm) + ")");
        a.multiply(p, ap);
        const double pap = p.dot(ap);
        detail::require(pap > 0.0, ErrorCode::NotPositiveDefinite, "solver matrix is not positive definite");
        const double alpha = rz / pap;
        v += alpha * p;
        r -= alpha * ap;
        ++st.iterations;
        if (r.norm() <= tol) {
            // The recursive residual drifts; confirm with the true one.
            a.multiply(v, ap);
            r = u - ap;
            if (r.norm() <= tol) break;
            z = dinv.cwiseProduct(r);
            p = z;
            rz = r.dot(z);
            continue;
        }
        z = dinv.cwiseProduct(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    st.final_rel_residual = r.norm() / u_norm;
    return v;
}

} // namespace detail

inline Vector sdd_solve(const SolverHandle& h, const Vector& u, SolveStats* stats = nullptr) {
    detail::require(u.size() == h.matrix().dim(), ErrorCode::DimensionMismatch, "rhs length differs from matrix");
    SolveStats local;
    Vector v;
    if (u.size() == 0 || u.squaredNorm() == 0.0 || h.eps() >= 1.0) {
        // Zero meets any rate >= 1 and is exact for u = 0.
        v = Vector::Zero(u.size());
        local.final_rel_residual = u.squaredNorm() == 0.0 ? 0.0 : 1.0;
    } else if (h.method() == SolverMethod::Chebyshev) {
        v = detail::chebyshev_solve(h, u, local);
    } else {
        v = detail::cg_solve(h, u, local);
    }
    if (stats) *stats = local;
    return v;
}

/// Column-wise solve; columns are independent, so the thread count never changes the result.
inline DenseMatrix sdd_solve_multi(const SolverHandle& h, const DenseMatrix& u,
                                   std::vector<SolveStats>* stats = nullptr) {
    detail::require(u.rows() == h.matrix().dim(), ErrorCode::DimensionMismatch, "rhs rows differ from matrix");
    DenseMatrix out(u.rows(), u.cols());
    std::vector<SolveStats> local(static_cast<std::size_t>(u.cols()));
    parallel_for(static_cast<std::size_t>(u.cols()), h.threads(), [&](std::size_t j) {
        const auto col = static_cast<Eigen::Index>(j);
        out.col(col) = sdd_solve(h, u.col(col), &local[j]);
    });
    if (stats) *stats = std::move(local);
    return out;
}

} // namespace herta
