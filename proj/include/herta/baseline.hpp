#pragma once

#include "herta/error.hpp"
#include "herta/loop.hpp"
#include "herta/model.hpp"
#include "herta/sdd_solver.hpp"
#include "herta/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

namespace herta {

/// max(lambda, 1): every bound below assumes sigma_max(I + lambda L) <= 3 lambda,
/// which needs lambda >= 1.
inline double effective_lambda(double lambda) { return std::max(lambda, 1.0); }

/// mu = min{ eps^{1/2} / (50 kappa(X) lambda^2), 1 }
inline double auto_mu(double target_eps, double kappa_x, double lambda) {
    const double le = effective_lambda(lambda);
    return std::min(std::sqrt(target_eps) / (50.0 * kappa_x * le * le), 1.0);
}

/// gamma = min{ 25 eps^{-1/2} kappa(X) lambda^2 mu, 1/2 }; equals 1/2 under auto_mu.
inline double gradient_error_ratio(double target_eps, double kappa_x, double lambda, double mu) {
    const double le = effective_lambda(lambda);
    return std::min(25.0 / std::sqrt(target_eps) * kappa_x * le * le * mu, 0.5);
}

/// Iteration count after which the inner gradient descent is guaranteed to
/// reach H-norm rate eps:  log(3 lambda / eps^2) / log(1 / (1 - 1/(9 lambda^2))) + 1.
inline double inner_gd_iteration_bound(double lambda, double eps) {
    const double le = effective_lambda(lambda);
    return std::log(3.0 * le / (eps * eps)) / std::log(1.0 / (1.0 - 1.0 / (9.0 * le * le))) + 1.0;
}

/// Gradient descent on 0.5 ||H v - u||^2 from v = 0 with step 1/L, L = 9 lambda^2:
///     v <- v - (1/L) H (H v - u).
/// Stops once ||Hv - u|| / ||u|| <= eps / sqrt(1 + 2 lambda).
inline Vector inner_gd_solve(const SparseSymmetric& h, double lambda, const Vector& u, double eps,
                             std::int64_t t_cap, SolveStats* stats = nullptr) {
    detail::require(u.size() == h.dim(), ErrorCode::DimensionMismatch, "rhs length differs from matrix");
    detail::require(eps > 0.0, ErrorCode::BadParams, "eps must be positive");
    const double le = effective_lambda(lambda);
    const double step = 1.0 / (9.0 * le * le);
    const double u_norm = u.norm();
    const double tol = eps / std::sqrt(1.0 + 2.0 * lambda) * u_norm;
    Vector v = Vector::Zero(u.size());
    Vector r = -u; // H v - u
    Vector hr(u.size());
    SolveStats local;
    while (r.norm() > tol) {
        if (local.iterations >= t_cap)
            throw Error(ErrorCode::NoConvergence, "inner gradient descent hit T_cap=" + std::to_string(t_cap));
        h.multiply(r, hr);
        v -= step * hr;
        h.multiply(v, r);
        r -= u;
        ++local.iterations;
    }
    local.final_rel_residual = u_norm > 0.0 ? r.norm() / u_norm : 0.0;
    if (stats) *stats = local;
    return v;
}

inline BlockSolver inner_gd_block_solver(const ModelSpec& spec, double eps, std::int64_t t_cap) {
    return [&spec, eps, t_cap](const DenseMatrix& u) {
        DenseMatrix out(u.rows(), u.cols());
        parallel_for(static_cast<std::size_t>(u.cols()), spec.threads, [&](std::size_t j) {
            const auto col = static_cast<Eigen::Index>(j);
            out.col(col) = inner_gd_solve(spec.H, spec.lambda, u.col(col), eps, t_cap);
        });
        return out;
    };
}

/// X^T S[M S(X w - y_hat)] for any solver callable S (vector -> vector).
template <typename Solver>
Vector approx_gradient(const ModelSpec& spec, const SubProblem& sub, const Vector& w, Solver&& solver) {
    Vector u1 = solver(Vector(spec.X * w - sub.y_hat));
    if (spec.masked()) u1 = u1.cwiseProduct(spec.mask);
    return spec.X.transpose() * solver(u1);
}

enum class InnerSolver { GradientDescent, Sdd };

struct BaselineConfig {
    double target_eps = 1e-6;
    std::optional<double> mu;  // inner solver rate; default auto_mu
    std::optional<double> eta; // outer step; default (1 - gamma)/((1 + gamma)^2 L)
    std::int64_t T_outer = 100;
    std::int64_t T_inner = 0; // 0 = derived from the inner iteration bound
    InnerSolver inner = InnerSolver::GradientDescent;
    LossKind loss = LossKind::Mse;
    std::optional<Vector> target_class_losses;
    double floor_rel = 0.0;
    bool record_time = true;
    std::optional<double> kappa_x; // computed from X when absent
};

/// Plain gradient descent with approximate gradients X^T S[S(Xw - y_hat)].
inline TrainResult train_baseline(const ModelSpec& spec, const BaselineConfig& cfg,
                                  const LossEvaluator& evaluator = {}) {
    detail::require(cfg.target_eps > 0.0 && cfg.target_eps < 1.0, ErrorCode::BadParams,
                    "target eps must lie in (0, 1)");
    const double kappa = cfg.kappa_x ? *cfg.kappa_x : condition_number(spec.X);
    detail::require(std::isfinite(kappa), ErrorCode::BadParams, "X is rank deficient");
    const double mu = cfg.mu ? *cfg.mu : auto_mu(cfg.target_eps, kappa, spec.lambda);
    const double gamma = gradient_error_ratio(cfg.target_eps, kappa, spec.lambda, mu);
    const DenseMatrix ident = DenseMatrix::Identity(spec.d(), spec.d());

    LoopConfig loop;
    loop.loss = cfg.loss;
    loop.max_iter = cfg.T_outer;
    loop.target_class_losses = cfg.target_class_losses;
    loop.target_eps = cfg.target_eps;
    loop.floor_rel = cfg.floor_rel;
    loop.record_time = cfg.record_time;
    double smoothness = 0.0;
    if (cfg.eta) {
        loop.eta = *cfg.eta;
    } else {
        smoothness = hessian_top_eigenvalue(spec, ident);
        if (cfg.loss == LossKind::CrossEntropy) smoothness *= 0.5;
        loop.eta = auto_step(gamma, smoothness);
    }

    BlockSolver solve;
    if (cfg.inner == InnerSolver::Sdd) {
        solve = block_solver(spec.solver(mu));
    } else {
        const auto cap = cfg.T_inner > 0
                             ? cfg.T_inner
                             : static_cast<std::int64_t>(std::ceil(inner_gd_iteration_bound(spec.lambda, mu)));
        solve = inner_gd_block_solver(spec, mu, cap);
    }
    const LossEvaluator eval = evaluator ? evaluator : solver_loss_evaluator(spec, cfg.loss);
    TrainResult res = run_training_loop(spec, ident, solve, eval, loop);
    res.mu = mu;
    res.smoothness = smoothness;
    return res;
}

} // namespace herta
