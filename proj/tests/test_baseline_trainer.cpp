#include "herta/baseline.hpp"
#include "herta/generate.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace herta;

namespace {

GraphData random_graph(int n, double p, std::mt19937_64& gen) {
    const auto e = oracle::random_edges(n, p, gen);
    return add_self_loops(make_graph(n, std::vector<Edge>(e.begin(), e.end())));
}

// Bound written out independently: smallest T with 3 lambda (1 - 1/(9 lambda^2))^T <= eps^2, plus one.
double rate_bound(double lambda, double eps) {
    const double rho = 1.0 - 1.0 / (9.0 * lambda * lambda);
    return std::ceil(std::log(eps * eps / (3.0 * lambda)) / std::log(rho)) + 1.0;
}

struct Instance {
    GraphData graph;
    ModelSpec spec;
    OptimalSolution opt;
};

Instance synthetic(std::uint64_t seed, double cond, double lambda = 1.0, Eigen::Index n = 100, Eigen::Index d = 8,
                   Eigen::Index c = 3) {
    const RngHandle rng(seed);
    Instance in;
    in.graph = add_self_loops(erdos_renyi(n, 0.1, rng.substream(2)));
    const auto lap = normalized_laplacian(in.graph);
    const auto f = synthetic_features(n, d, cond, rng.substream(3));
    const auto y = synthetic_labels(LabelModel::PlantedOneHot, lap, lambda, f, c, 0.0, rng.substream(4));
    in.spec = ModelSpec::make(lap, lambda, f.X, y);
    in.opt = optimal_mse(in.spec);
    return in;
}

} // namespace

TEST(InnerGd, IdentityConverges) {
    const auto g = add_self_loops(make_graph(6, {}));
    const auto h = regularized_operator(normalized_laplacian(g), 1.0);
    const Vector u = Vector::LinSpaced(6, -1.0, 2.0);
    SolveStats st;
    const Vector v = inner_gd_solve(h, 1.0, u, 1e-11, 10000, &st);
    EXPECT_LE((v - u).norm(), 1e-10);
    EXPECT_LE(static_cast<double>(st.iterations), rate_bound(1.0, 1e-11));
}

TEST(InnerGd, TriangleMatchesDense) {
    const auto h = regularized_operator(normalized_laplacian(add_self_loops(triangle_graph())), 1.0);
    const Vector u(Vector::LinSpaced(3, 1.0, 3.0));
    SolveStats st;
    const Vector v = inner_gd_solve(h, 1.0, u, 1e-6, 100000, &st);
    EXPECT_LE(oracle::h_norm_rel_error(h.to_dense(), u, v), 1e-6);
    EXPECT_LE(static_cast<double>(st.iterations), rate_bound(1.0, 1e-6));
    EXPECT_GT(st.iterations, 0);
}

TEST(InnerGd, DoublingLambdaQuadruplesIterations) {
    std::mt19937_64 gen(11);
    const auto g = random_graph(60, 0.1, gen);
    const auto lap = normalized_laplacian(g);
    const Vector u = oracle::random_matrix(60, 1, gen);
    std::vector<double> iters;
    for (double lambda : {2.0, 4.0, 8.0}) {
        SolveStats st;
        inner_gd_solve(regularized_operator(lap, lambda), lambda, u, 1e-6, 10000000, &st);
        iters.push_back(static_cast<double>(st.iterations));
    }
    for (std::size_t i = 1; i < iters.size(); ++i) {
        const double ratio = iters[i] / iters[i - 1];
        EXPECT_GE(ratio, 2.0) << i;
        EXPECT_LE(ratio, 8.0) << i;
    }
}

TEST(InnerGd, NoConvergenceAtCap) {
    const auto h = regularized_operator(normalized_laplacian(add_self_loops(triangle_graph())), 1.0);
    try {
        inner_gd_solve(h, 1.0, Vector::Ones(3), 1e-10, 3);
        FAIL() << "expected NoConvergence";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
    }
    EXPECT_THROW(inner_gd_solve(h, 1.0, Vector::Ones(4), 1e-6, 10), Error);
    EXPECT_THROW(inner_gd_solve(h, 1.0, Vector::Ones(3), 0.0, 10), Error);
}

TEST(InnerGd, ZeroRhsIsFree) {
    const auto h = regularized_operator(normalized_laplacian(add_self_loops(triangle_graph())), 1.0);
    SolveStats st;
    const Vector v = inner_gd_solve(h, 1.0, Vector::Zero(3), 1e-6, 0, &st);
    EXPECT_EQ(v.norm(), 0.0);
    EXPECT_EQ(st.iterations, 0);
}

TEST(InnerGd, IterationBoundAcrossLambdaAndEps) {
    for (double lambda : {1.0, 2.0, 4.0}) {
        for (double eps : {1e-4, 1e-8}) {
            const double bound = rate_bound(lambda, eps);
            EXPECT_NEAR(inner_gd_iteration_bound(lambda, eps), bound, 1.0);
            for (int seed = 0; seed < 20; ++seed) {
                std::mt19937_64 gen(static_cast<std::uint64_t>(1000 * lambda + seed));
                const auto g = random_graph(40, 0.15, gen);
                const auto h = regularized_operator(normalized_laplacian(g), lambda);
                const Vector u = oracle::random_matrix(40, 1, gen);
                SolveStats st;
                const Vector v = inner_gd_solve(h, lambda, u, eps, 10000000, &st);
                EXPECT_LE(static_cast<double>(st.iterations), bound) << lambda << " " << eps << " " << seed;
                EXPECT_LE(oracle::h_norm_rel_error(h.to_dense(), u, v), eps) << lambda << " " << eps << " " << seed;
            }
        }
    }
}

TEST(Baseline, AutoMuAndGamma) {
    EXPECT_DOUBLE_EQ(auto_mu(1e-6, 1.0, 1.0), 1e-3 / 50.0);
    EXPECT_DOUBLE_EQ(auto_mu(1e-6, 10.0, 2.0), 1e-3 / 2000.0);
    EXPECT_DOUBLE_EQ(auto_mu(0.99, 1.0, 0.01), std::sqrt(0.99) / 50.0);
    EXPECT_EQ(auto_mu(1e6, 1.0, 1.0), 1.0);
    EXPECT_NEAR(gradient_error_ratio(1e-6, 7.0, 3.0, auto_mu(1e-6, 7.0, 3.0)), 0.5, 1e-15);
    EXPECT_NEAR(gradient_error_ratio(1e-6, 1.0, 1.0, 1e-7), 25e3 * 1e-7, 1e-15);
    EXPECT_DOUBLE_EQ(auto_step(0.5, 2.0), 0.5 / (2.25 * 2.0));
    EXPECT_THROW(auto_step(0.5, 0.0), Error);
}

TEST(ApproxGradient, ExactSolverEqualsDenseGradient) {
    std::mt19937_64 gen(3);
    const auto g = random_graph(40, 0.15, gen);
    const auto spec = ModelSpec::make(normalized_laplacian(g), 2.0, oracle::random_matrix(40, 5, gen),
                                      oracle::random_matrix(40, 2, gen));
    const Eigen::MatrixXd hinv = dense_h_inverse(spec);
    const auto exact_solver = [&](const Vector& u) -> Vector { return hinv * u; };
    for (Eigen::Index i = 0; i < 2; ++i) {
        const auto sub = make_subproblem(spec, i);
        const Vector w = oracle::random_matrix(5, 1, gen);
        const Vector g1 = approx_gradient(spec, sub, w, exact_solver);
        const Vector g0 = exact_gradient(spec, sub, w);
        EXPECT_LE((g1 - g0).norm(), 1e-12 * std::max(1.0, g0.norm()));
    }
}

TEST(ApproxGradient, TightSolverIsAccurate) {
    std::mt19937_64 gen(4);
    const auto g = random_graph(50, 0.1, gen);
    const auto spec = ModelSpec::make(normalized_laplacian(g), 1.0, oracle::random_matrix(50, 6, gen),
                                      oracle::random_matrix(50, 1, gen));
    const auto s = spec.solver(1e-10);
    const auto sub = make_subproblem(spec, 0);
    const Vector w = oracle::random_matrix(6, 1, gen);
    const Vector g1 = approx_gradient(spec, sub, w, [&](const Vector& u) { return sdd_solve(s, u); });
    const Vector g0 = exact_gradient(spec, sub, w);
    EXPECT_LE((g1 - g0).norm() / g0.norm(), 1e-6);
}

TEST(ApproxGradient, ErrorDecompositionBound) {
    // g - grad = X^T (S(v) - H^{-1} v) + X^T H^{-1} (S(u) - H^{-1} u) with v = S(u);
    // each solve error is at most mu times its input in the Euclidean norm since H >= I.
    std::mt19937_64 gen(5);
    const auto g = random_graph(60, 0.1, gen);
    const double mu = 1e-2;
    const auto spec = ModelSpec::make(normalized_laplacian(g), 2.0, oracle::random_matrix(60, 4, gen),
                                      oracle::random_matrix(60, 1, gen));
    const auto s = spec.solver(mu);
    const auto solve = [&](const Vector& u) { return sdd_solve(s, u); };
    const Eigen::MatrixXd hinv = dense_h_inverse(spec);
    const double sigma_max = Eigen::JacobiSVD<Eigen::MatrixXd>(spec.X).singularValues()[0];
    const auto sub = make_subproblem(spec, 0);
    for (int probe = 0; probe < 20; ++probe) {
        const Vector w = oracle::random_matrix(4, 1, gen);
        const Vector u = spec.X * w - sub.y_hat;
        const Vector su = solve(u);
        const double e1 = sigma_max * (solve(su) - hinv * su).norm();
        const double e2 = sigma_max * (hinv * (su - hinv * u)).norm();
        const double err = (approx_gradient(spec, sub, w, solve) - exact_gradient(spec, sub, w)).norm();
        EXPECT_LE(err, e1 + e2 + 1e-12) << probe;
        EXPECT_LE(e1 + e2, sigma_max * mu * (su.norm() + u.norm()) * (1.0 + 1e-9)) << probe;
    }
}

TEST(ApproxGradient, RatioBoundAwayFromOptimum) {
    const double eps = 1e-6;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto in = synthetic(seed, 10.0, 2.0, 60, 4, 1);
        const double kappa = condition_number(in.spec.X);
        const double mu = auto_mu(eps, kappa, in.spec.lambda);
        const double bound = 25.0 / std::sqrt(eps) * kappa * mu * 4.0;
        const auto s = in.spec.solver(mu);
        const auto sub = make_subproblem(in.spec, 0);
        std::mt19937_64 gen(seed);
        for (int probe = 0; probe < 20; ++probe) {
            const Vector w = Vector(in.opt.W.col(0)) + oracle::random_matrix(4, 1, gen);
            ASSERT_GT(dense_sub_loss(in.spec, sub, w), (1.0 + eps) * in.opt.class_losses[0]);
            const Vector g0 = exact_gradient(in.spec, sub, w);
            const Vector g1 = approx_gradient(in.spec, sub, w, [&](const Vector& u) { return sdd_solve(s, u); });
            EXPECT_LE((g1 - g0).norm(), bound * g0.norm()) << seed << " " << probe;
        }
    }
}

TEST(TrainBaseline, IdentityProblemRecoversLabels) {
    const auto g = add_self_loops(make_graph(5, {}));
    std::mt19937_64 gen(6);
    const DenseMatrix y = oracle::random_matrix(5, 2, gen);
    const auto spec = ModelSpec::make(normalized_laplacian(g), 3.0, DenseMatrix::Identity(5, 5), y);
    BaselineConfig cfg;
    cfg.T_outer = 400;
    const auto res = train_baseline(spec, cfg);
    EXPECT_LE((res.W - y).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(res.trace.final_loss(), 1e-15);
    EXPECT_EQ(res.trace.size(), 400u);
}

TEST(TrainBaseline, WellConditionedReachesTarget) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto in = synthetic(seed, 1.0);
        BaselineConfig cfg;
        cfg.target_eps = 1e-6;
        cfg.T_outer = 200;
        cfg.target_class_losses = in.opt.class_losses;
        const auto res = train_baseline(in.spec, cfg, dense_loss_evaluator(in.spec, LossKind::Mse));
        EXPECT_TRUE(res.converged) << seed;
        EXPECT_LE(res.iterations, 200) << seed;
        EXPECT_LE(res.trace.final_loss(), (1.0 + 1e-6) * in.opt.loss) << seed;
    }
}

TEST(TrainBaseline, IllConditionedNeedsFiftyTimesMore) {
    const auto well = synthetic(1, 1.0);
    const auto ill = synthetic(1, 1000.0);
    BaselineConfig cfg;
    cfg.target_eps = 1e-6;
    cfg.T_outer = 1000;
    cfg.target_class_losses = well.opt.class_losses;
    const auto a = train_baseline(well.spec, cfg, dense_loss_evaluator(well.spec, LossKind::Mse));
    ASSERT_TRUE(a.converged);
    // Run the ill-conditioned case to 50x the well-conditioned count; it must still be short of target.
    cfg.T_outer = 50 * a.iterations;
    cfg.target_class_losses = ill.opt.class_losses;
    const auto b = train_baseline(ill.spec, cfg, dense_loss_evaluator(ill.spec, LossKind::Mse));
    EXPECT_FALSE(b.converged);
    EXPECT_EQ(b.iterations, 50 * a.iterations);
}

TEST(TrainBaseline, MonotoneDescent) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto in = synthetic(seed, 30.0, 2.0, 80, 5, 2);
        BaselineConfig cfg;
        cfg.T_outer = 60;
        const auto res = train_baseline(in.spec, cfg, dense_loss_evaluator(in.spec, LossKind::Mse));
        double prev = res.initial_loss;
        for (const auto& e : res.trace.entries) {
            EXPECT_LE(e.loss, prev + 1e-12 * std::max(1.0, prev)) << seed << " " << e.iter;
            prev = e.loss;
        }
        EXPECT_LT(res.trace.final_loss(), res.initial_loss);
    }
}

TEST(TrainBaseline, TraceItersStrictlyIncrease) {
    const auto in = synthetic(2, 5.0);
    BaselineConfig cfg;
    cfg.T_outer = 25;
    const auto res = train_baseline(in.spec, cfg);
    ASSERT_EQ(res.trace.size(), 25u);
    for (std::size_t i = 0; i < res.trace.size(); ++i)
        EXPECT_EQ(res.trace.entries[i].iter, static_cast<std::int64_t>(i + 1));
}

TEST(TrainBaseline, SddInnerMatchesGdInner) {
    const auto in = synthetic(3, 10.0);
    BaselineConfig cfg;
    cfg.T_outer = 30;
    const auto a = train_baseline(in.spec, cfg);
    cfg.inner = InnerSolver::Sdd;
    const auto b = train_baseline(in.spec, cfg);
    EXPECT_LE((a.W - b.W).norm() / b.W.norm(), 1e-3);
}

TEST(TrainBaseline, CrossEntropyDescends) {
    const auto in = synthetic(4, 10.0);
    BaselineConfig cfg;
    cfg.loss = LossKind::CrossEntropy;
    cfg.T_outer = 40;
    const auto res = train_baseline(in.spec, cfg);
    EXPECT_LT(res.trace.final_loss(), res.initial_loss);
    EXPECT_NEAR(res.initial_loss, 100.0 * std::log(3.0), 1e-9);
}

TEST(TrainBaseline, Validation) {
    const auto in = synthetic(1, 1.0, 1.0, 20, 2, 2);
    BaselineConfig cfg;
    cfg.target_eps = 0.0;
    EXPECT_THROW(train_baseline(in.spec, cfg), Error);
    const auto lap = normalized_laplacian(add_self_loops(triangle_graph()));
    const auto deficient = ModelSpec::make(lap, 1.0, DenseMatrix::Ones(3, 2), DenseMatrix::Ones(3, 1));
    EXPECT_THROW(train_baseline(deficient, BaselineConfig{}), Error);
    cfg.target_eps = 1e-3;
    cfg.target_class_losses = Vector::Zero(3);
    EXPECT_THROW(train_baseline(in.spec, cfg), Error);
}
