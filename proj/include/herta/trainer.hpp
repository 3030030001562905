#pragma once

#include "herta/baseline.hpp"
#include "herta/error.hpp"
#include "herta/graph.hpp"
#include "herta/loop.hpp"
#include "herta/model.hpp"
#include "herta/rng.hpp"
#include "herta/sdd_solver.hpp"
#include "herta/sketch.hpp"
#include "herta/sparsifier.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>

namespace herta {

struct HertaConfig {
    double target_eps = 1e-6;
    double K = 4.0;
    double beta = 1.0 / 64.0;
    double C = 8.0; // sparsifier sampling constant
    std::optional<double> mu;
    std::optional<double> eta;
    std::int64_t T = 100;
    OptimizerKind optimizer = OptimizerKind::GradientDescent;
    AdamParams adam;
    LossKind loss = LossKind::Mse;
    std::uint64_t seed = 0;
    std::optional<Eigen::Index> sketch_rows; // overrides s
    std::optional<double> kappa_x;
    std::optional<Vector> target_class_losses;
    double floor_rel = 0.0;
    bool record_time = true;

    void validate() const {
        detail::require(target_eps > 0.0 && target_eps < 1.0, ErrorCode::BadParams, "target eps must lie in (0, 1)");
        detail::require(K > 0.0 && beta > 0.0 && beta < 1.0 && C > 0.0, ErrorCode::BadParams,
                        "K, beta, C must be positive (beta < 1)");
        detail::require(!mu || (*mu > 0.0 && *mu <= 1.0), ErrorCode::BadParams, "mu must lie in (0, 1]");
        detail::require(!eta || *eta > 0.0, ErrorCode::BadParams, "eta must be positive");
    }
};

struct Preconditioner {
    DenseMatrix P;       // Q~^T Q~
    DenseMatrix P_prime; // P^{-1/2}
    Eigen::Index sketch_rows = 0;
    bool exhaustive = false;
    std::int64_t sparsifier_edges = 0;
    std::int64_t build_ns = 0;
};

/// s = ceil(K d ln n / beta^2), capped at the padded length.
inline Eigen::Index preconditioner_sketch_rows(const HertaConfig& cfg, Eigen::Index n, Eigen::Index d) {
    const Eigen::Index n_pad = next_pow2(n);
    if (cfg.sketch_rows) return std::min(*cfg.sketch_rows, n_pad);
    const double s = std::ceil(cfg.K * static_cast<double>(d) * std::log(std::max<double>(n, 2.0)) /
                               (cfg.beta * cfg.beta));
    return s >= static_cast<double>(n_pad) ? n_pad : static_cast<Eigen::Index>(s);
}

/// Sparsify L at rate beta/(3 lambda), solve Q = (I + lambda L~)^{-1} X at
/// rate beta/sqrt(3 lambda), SRHT-sketch Q down to s rows, P = Q~^T Q~.
inline Preconditioner build_preconditioner(const ModelSpec& spec, const GraphData& graph, const HertaConfig& cfg) {
    cfg.validate();
    detail::require(spec.d() <= spec.n(), ErrorCode::BadParams, "feature dimension exceeds node count");
    const auto start = std::chrono::steady_clock::now();
    const RngHandle root(cfg.seed);
    const double le = effective_lambda(spec.lambda);

    SparsifyConfig sp;
    sp.eps = cfg.beta / (3.0 * le);
    sp.lambda = spec.lambda;
    sp.C = cfg.C;
    sp.seed = root.substream(streams::sparsifier).seed();
    sp.threads = spec.threads;
    const IncidenceMatrix b = normalized_incidence(graph);
    detail::require(b.cols() == spec.n(), ErrorCode::DimensionMismatch, "graph and model sizes differ");
    const SparsifyResult sparse = sparsify(spec.lap, b, sp);

    const SparseSymmetric h_tilde = regularized_operator(sparse.laplacian, spec.lambda);
    const SolverHandle solver(h_tilde, cfg.beta / std::sqrt(3.0 * le),
                              SpectrumBounds{1.0, std::max(1.0, h_tilde.gershgorin_upper())},
                              SolverMethod::Chebyshev, 0, spec.threads);
    const DenseMatrix q = sdd_solve_multi(solver, spec.X);

    Preconditioner pc;
    pc.sketch_rows = preconditioner_sketch_rows(cfg, spec.n(), spec.d());
    pc.exhaustive = pc.sketch_rows == next_pow2(spec.n());
    const DenseMatrix q_tilde = srht(q, pc.sketch_rows, root.substream(streams::preconditioner),
                                     pc.exhaustive ? RowSelection::Exhaustive : RowSelection::Uniform);
    DenseMatrix p = q_tilde.transpose() * q_tilde;
    pc.P = 0.5 * (p + p.transpose());
    pc.P_prime = spd_inverse_sqrt(pc.P);
    pc.sparsifier_edges = static_cast<std::int64_t>(sparse.edges.size());
    pc.build_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
    return pc;
}

/// P = X^T H^{-1} M H^{-1} X computed densely (test mode / certify reference).
inline Preconditioner exact_preconditioner(const ModelSpec& spec) {
    Preconditioner pc;
    pc.P = dense_hessian(spec);
    pc.P_prime = spd_inverse_sqrt(pc.P);
    return pc;
}

/// Pencil eigenvalues of (P, X^T H^{-2} X).
inline SketchReport certify_preconditioner(const ModelSpec& spec, const Preconditioner& pc) {
    return psi_approx(dense_hessian(spec), Eigen::MatrixXd(pc.P));
}

/// kappa(P' X^T H^{-2} X P') from dense eigenvalues.
inline double conditioned_hessian_check(const ModelSpec& spec, const DenseMatrix& p_prime) {
    const Eigen::MatrixXd hess = dense_hessian(spec);
    Eigen::MatrixXd m = Eigen::MatrixXd(p_prime) * hess * Eigen::MatrixXd(p_prime);
    m = (0.5 * (m + m.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    detail::require(ev.minCoeff() > 0.0, ErrorCode::NotPositiveDefinite, "conditioned Hessian is singular");
    return ev.maxCoeff() / ev.minCoeff();
}

/// One preconditioned step for class `sub`:
///     u = X P' w - y_hat;  u'' = S(M S(u));  g = P' X^T u'';  w <- w - eta g.
inline std::pair<Vector, double> herta_step(const ModelSpec& spec, const SubProblem& sub, const DenseMatrix& p_prime,
                                            const Vector& w, double eta, double mu) {
    const SolverHandle s = spec.solver(mu);
    Vector u1 = sdd_solve(s, Vector(spec.X * (p_prime * w) - sub.y_hat));
    if (spec.masked()) u1 = u1.cwiseProduct(spec.mask);
    const Vector g = p_prime * (spec.X.transpose() * sdd_solve(s, u1));
    return {w - eta * g, g.norm()};
}

/// Training with a prebuilt preconditioner.
inline TrainResult herta_train_with(const ModelSpec& spec, const Preconditioner& pc, const HertaConfig& cfg,
                                    const LossEvaluator& evaluator = {}) {
    cfg.validate();
    const double kappa = cfg.kappa_x ? *cfg.kappa_x : condition_number(spec.X);
    detail::require(std::isfinite(kappa), ErrorCode::BadParams, "X is rank deficient");
    const double mu = cfg.mu ? *cfg.mu : auto_mu(cfg.target_eps, kappa, spec.lambda);
    const double gamma = gradient_error_ratio(cfg.target_eps, kappa, spec.lambda, mu);

    LoopConfig loop;
    loop.loss = cfg.loss;
    loop.optimizer = cfg.optimizer;
    loop.adam = cfg.adam;
    loop.max_iter = cfg.T;
    loop.target_class_losses = cfg.target_class_losses;
    loop.target_eps = cfg.target_eps;
    loop.floor_rel = cfg.floor_rel;
    loop.record_time = cfg.record_time;
    double smoothness = 0.0;
    if (cfg.eta) {
        loop.eta = *cfg.eta;
    } else {
        smoothness = hessian_top_eigenvalue(spec, pc.P_prime);
        if (cfg.loss == LossKind::CrossEntropy) smoothness *= 0.5;
        loop.eta = auto_step(gamma, smoothness);
    }
    const LossEvaluator eval = evaluator ? evaluator : solver_loss_evaluator(spec, cfg.loss);
    TrainResult res = run_training_loop(spec, pc.P_prime, block_solver(spec.solver(mu)), eval, loop);
    res.mu = mu;
    res.smoothness = smoothness;
    res.precond_build_ns = cfg.record_time ? pc.build_ns : 0;
    return res;
}

inline TrainResult herta_train(const ModelSpec& spec, const GraphData& graph, const HertaConfig& cfg,
                               const LossEvaluator& evaluator = {}) {
    const Preconditioner pc = build_preconditioner(spec, graph, cfg);
    return herta_train_with(spec, pc, cfg, evaluator);
}

inline TrainResult herta_train_adam(const ModelSpec& spec, const GraphData& graph, HertaConfig cfg,
                                    const LossEvaluator& evaluator = {}) {
    cfg.optimizer = OptimizerKind::Adam;
    return herta_train(spec, graph, cfg, evaluator);
}

} // namespace herta
