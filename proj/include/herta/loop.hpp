#pragma once

#include "herta/error.hpp"
#include "herta/model.hpp"
#include "herta/sdd_solver.hpp"
#include "herta/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace herta {

enum class LossKind { Mse, CrossEntropy };
enum class OptimizerKind { GradientDescent, Adam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 0.0; // 0 = auto: lr_scale * max|g| of the first gradient, per class
    double lr_scale = 0.1;
};

struct TraceEntry {
    std::int64_t iter = 0;
    std::int64_t wall_ns = 0;
    double loss = 0.0;
};

struct LossTrace {
    std::vector<TraceEntry> entries;

    void push(std::int64_t iter, std::int64_t wall_ns, double loss) { entries.push_back({iter, wall_ns, loss}); }
    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
    double final_loss() const { return entries.empty() ? NAN : entries.back().loss; }
};

struct TrainResult {
    DenseMatrix W;       // original coordinates
    DenseMatrix W_inner; // iterate the loop actually updates (preconditioned coordinates)
    LossTrace trace;
    std::int64_t iterations = 0;
    bool converged = false;
    double initial_loss = 0.0;
    double eta = 0.0;
    double mu = 0.0;
    double smoothness = 0.0; // L used for the step size
    std::vector<std::int64_t> class_iterations;
    std::int64_t precond_build_ns = 0;
    std::int64_t train_ns = 0;
};

/// Applies an approximate H^{-1} to every column.
using BlockSolver = std::function<DenseMatrix(const DenseMatrix&)>;
/// Per-class losses (MSE) or a single total (CE) at original-coordinate W.
using LossEvaluator = std::function<Vector(const DenseMatrix&)>;

struct LoopConfig {
    LossKind loss = LossKind::Mse;
    OptimizerKind optimizer = OptimizerKind::GradientDescent;
    AdamParams adam;
    double eta = 0.0;
    std::int64_t max_iter = 100;
    // Test mode: stop class i once l_i <= (1 + eps) l_i* + floor_rel * l_i(0).
    std::optional<Vector> target_class_losses;
    double target_eps = 0.0;
    double floor_rel = 0.0;
    bool record_time = true;
};

/// Solver-evaluated loss; tight rate so the trace reflects the true objective.
inline LossEvaluator solver_loss_evaluator(const ModelSpec& spec, LossKind kind, double eps = 1e-12) {
    return [&spec, kind, eps](const DenseMatrix& w) -> Vector {
        const DenseMatrix z = forward_exact(spec, w, eps);
        if (kind == LossKind::Mse) return mse_class_losses(spec, z);
        Vector v(1);
        v[0] = ce_from_logits(spec, z);
        return v;
    };
}

/// Dense-evaluated loss for test mode.
inline LossEvaluator dense_loss_evaluator(const ModelSpec& spec, LossKind kind) {
    auto hinv = std::make_shared<Eigen::MatrixXd>(dense_h_inverse(spec));
    return [&spec, kind, hinv](const DenseMatrix& w) -> Vector {
        const DenseMatrix z = *hinv * (spec.X * w);
        if (kind == LossKind::Mse) return mse_class_losses(spec, z);
        Vector v(1);
        v[0] = ce_from_logits(spec, z);
        return v;
    };
}

inline BlockSolver block_solver(const SolverHandle& h) {
    return [h](const DenseMatrix& u) { return sdd_solve_multi(h, u); };
}

/// Largest eigenvalue of P' X^T H^{-1} M H^{-1} X P' by power iteration from
/// a fixed start vector.
inline double hessian_top_eigenvalue(const ModelSpec& spec, const DenseMatrix& p_prime, int iterations = 20,
                                     double solve_eps = 1e-10) {
    const SolverHandle h = spec.solver(solve_eps);
    const Eigen::Index d = spec.d();
    Vector v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
    double top = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Vector r = sdd_solve(h, Vector(spec.X * (p_prime * v)));
        if (spec.masked()) r = r.cwiseProduct(spec.mask);
        const Vector hv = p_prime * (spec.X.transpose() * sdd_solve(h, r));
        top = hv.norm();
        if (top == 0.0) break;
        v = hv / top;
    }
    return top;
}

/// eta = (1 - gamma) / ((1 + gamma)^2 L)
inline double auto_step(double gamma, double smoothness) {
    detail::require(smoothness > 0.0 && std::isfinite(smoothness), ErrorCode::BadParams,
                    "smoothness estimate must be positive");
    return (1.0 - gamma) / ((1.0 + gamma) * (1.0 + gamma) * smoothness);
}

/// Outer loop shared by the baseline (P' = I) and the preconditioned trainer.
/// The iterate w' lives in preconditioned coordinates; W = P' w'.
inline TrainResult run_training_loop(const ModelSpec& spec, const DenseMatrix& p_prime, const BlockSolver& solve,
                                     const LossEvaluator& evaluate, const LoopConfig& cfg) {
    detail::require(p_prime.rows() == spec.d() && p_prime.cols() == spec.d(), ErrorCode::DimensionMismatch,
                    "preconditioner must be d x d");
    detail::require(cfg.max_iter >= 0, ErrorCode::BadParams, "iteration cap must be nonnegative");
    if (cfg.loss == LossKind::CrossEntropy) require_one_hot(spec.Y);
    const Eigen::Index c = spec.c();
    const Eigen::Index d = spec.d();
    const bool mse = cfg.loss == LossKind::Mse;
    if (cfg.target_class_losses)
        detail::require(mse && cfg.target_class_losses->size() == c, ErrorCode::BadParams,
                        "target losses need the MSE loss and one entry per class");

    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const auto elapsed = [&] {
        return cfg.record_time
                   ? std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - start).count()
                   : std::int64_t{0};
    };

    TrainResult res;
    res.eta = cfg.eta;
    res.W_inner = DenseMatrix::Zero(d, c);
    res.W = DenseMatrix::Zero(d, c);
    res.class_iterations.assign(static_cast<std::size_t>(c), 0);
    const DenseMatrix y_hat = mse ? lifted_targets(spec) : DenseMatrix();
    const DenseMatrix xp = spec.X * p_prime; // n x d
    const DenseMatrix pxt = xp.transpose();  // P' X^T

    const Vector initial = evaluate(res.W);
    res.initial_loss = initial.sum();
    std::vector<char> active(static_cast<std::size_t>(c), 1);
    auto reached = [&](const Vector& losses, Eigen::Index i) {
        const double target = (*cfg.target_class_losses)[i];
        return losses[i] <= (1.0 + cfg.target_eps) * target + cfg.floor_rel * initial[i];
    };
    if (cfg.target_class_losses) {
        for (Eigen::Index i = 0; i < c; ++i) active[static_cast<std::size_t>(i)] = reached(initial, i) ? 0 : 1;
    }

    DenseMatrix adam_m, adam_v;
    Vector adam_lr;
    if (cfg.optimizer == OptimizerKind::Adam) {
        adam_m = DenseMatrix::Zero(d, c);
        adam_v = DenseMatrix::Zero(d, c);
        adam_lr = Vector::Constant(c, cfg.adam.lr);
    }

    const auto all_done = [&] { return std::none_of(active.begin(), active.end(), [](char a) { return a != 0; }); };
    if (cfg.target_class_losses && all_done()) {
        res.converged = true;
        return res;
    }

    for (std::int64_t t = 1; t <= cfg.max_iter; ++t) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index i = 0; i < c; ++i)
            if (active[static_cast<std::size_t>(i)]) cols.push_back(i);
        const auto k = static_cast<Eigen::Index>(cols.size());

        DenseMatrix grad(d, k);
        if (mse) {
            DenseMatrix u(spec.n(), k);
            for (Eigen::Index j = 0; j < k; ++j) u.col(j) = xp * res.W_inner.col(cols[j]) - y_hat.col(cols[j]);
            DenseMatrix u1 = solve(u);
            spec.apply_mask(u1);
            grad = pxt * solve(u1);
        } else {
            const DenseMatrix logits = solve(DenseMatrix(xp * res.W_inner));
            DenseMatrix resid = softmax_rows(logits) - spec.Y;
            spec.apply_mask(resid);
            grad = pxt * solve(resid);
        }

        for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index i = cols[j];
            if (cfg.optimizer == OptimizerKind::GradientDescent) {
                res.W_inner.col(i) -= cfg.eta * grad.col(j);
                continue;
            }
            const auto& a = cfg.adam;
            if (adam_lr[i] <= 0.0) adam_lr[i] = a.lr_scale * grad.col(j).cwiseAbs().maxCoeff();
            adam_m.col(i) = a.beta1 * adam_m.col(i) + (1.0 - a.beta1) * grad.col(j);
            adam_v.col(i) = a.beta2 * adam_v.col(i) + (1.0 - a.beta2) * grad.col(j).cwiseAbs2();
            const double td = static_cast<double>(t);
            const double bc1 = 1.0 - std::pow(a.beta1, td);
            const double bc2 = 1.0 - std::pow(a.beta2, td);
            const Vector mhat = adam_m.col(i) / bc1;
            const Vector vhat = adam_v.col(i) / bc2;
            res.W_inner.col(i).array() -= adam_lr[i] * mhat.array() / (vhat.array().sqrt() + a.eps);
        }
        res.W = p_prime * res.W_inner;
        const Vector losses = evaluate(res.W);
        res.trace.push(t, elapsed(), losses.sum());
        res.iterations = t;
        for (Eigen::Index i : cols) res.class_iterations[static_cast<std::size_t>(i)] = t;

        if (cfg.target_class_losses) {
            for (Eigen::Index i : cols)
                if (reached(losses, i)) active[static_cast<std::size_t>(i)] = 0;
            if (all_done()) {
                res.converged = true;
                break;
            }
        }
    }
    if (!cfg.target_class_losses) res.converged = true;
    res.train_ns = elapsed();
    return res;
}

} // namespace herta
