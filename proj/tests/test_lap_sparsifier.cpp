#include "herta/generate.hpp"
#include "herta/graph.hpp"
#include "herta/sparsifier.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace herta;

namespace {

struct Instance {
    GraphData g;
    SparseSymmetric lap;
    IncidenceMatrix b;
};

Instance instance(GraphData raw) {
    Instance in;
    in.g = add_self_loops(std::move(raw));
    in.lap = normalized_laplacian(in.g);
    in.b = normalized_incidence(in.g);
    return in;
}

SparsifyConfig config(double lambda, double eps = 0.25, std::uint64_t seed = 0) {
    SparsifyConfig cfg;
    cfg.lambda = lambda;
    cfg.eps = eps;
    cfg.seed = seed;
    return cfg;
}

// Pencil eigenvalues of (Lt + I/lambda, L + I/lambda).
oracle::Vec certificate(const SparseSymmetric& lt, const SparseSymmetric& lap, double lambda) {
    const Eigen::MatrixXd shift = Eigen::MatrixXd::Identity(lap.dim(), lap.dim()) / lambda;
    return oracle::pencil(lt.to_dense() + shift, lap.to_dense() + shift);
}

} // namespace

TEST(LeverageScores, TriangleExact) {
    const auto in = instance(triangle_graph());
    const auto sc = ridge_leverage_scores(in.b, in.lap, config(1.0));
    ASSERT_EQ(sc.l_tilde.size(), 3u);
    for (double l : sc.l_tilde) {
        EXPECT_GE(l, 1.0 / 6.0);
        EXPECT_LE(l, 0.5);
    }
    const auto exact = oracle::leverage_scores(in.b.to_dense(), in.lap.to_dense(), 1.0);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(exact[i], 1.0 / 3.0, 1e-12);
}

TEST(LeverageScores, TwoNodeWithinFactorTwo) {
    const auto in = instance(make_graph(2, {{0, 1}}));
    const double exact = oracle::leverage_scores(in.b.to_dense(), in.lap.to_dense(), 1.0)[0];
    // L = [[.5,-.5],[-.5,.5]]; b is its nonzero eigenvector direction with eigenvalue 1, |b|^2 = 1.
    EXPECT_NEAR(exact, 0.5, 1e-12);
    const double est = ridge_leverage_scores(in.b, in.lap, config(1.0)).l_tilde[0];
    EXPECT_GE(est, exact / 2.0);
    EXPECT_LE(est, exact * 2.0);
}

TEST(LeverageScores, SmallLambdaLimit) {
    std::mt19937_64 gen(1);
    const auto e = oracle::random_edges(30, 0.2, gen);
    const auto in = instance(make_graph(30, std::vector<Edge>(e.begin(), e.end())));
    const double lambda = 1e-8;
    const auto sc = ridge_leverage_scores(in.b, in.lap, config(lambda));
    double expected_z = 0.0;
    for (std::size_t i = 0; i < in.b.rows(); ++i) {
        const auto& r = in.b.row(i);
        const double bn2 = r.wu * r.wu + r.wv * r.wv;
        EXPECT_NEAR(sc.l_tilde[i], lambda * bn2, 1e-3 * lambda * bn2);
        expected_z += lambda * bn2;
    }
    EXPECT_NEAR(sc.Z, expected_z, 1e-3 * expected_z);
}

TEST(LeverageScores, PositiveForEveryEdge) {
    std::mt19937_64 gen(2);
    const auto e = oracle::random_edges(120, 0.05, gen);
    const auto in = instance(make_graph(120, std::vector<Edge>(e.begin(), e.end())));
    const auto sc = ridge_leverage_scores(in.b, in.lap, config(2.0));
    for (double l : sc.l_tilde) EXPECT_GT(l, 0.0);
    EXPECT_GT(sc.Z, 0.0);
}

// Exact scores sum to the effective Laplacian dimension.
TEST(LeverageScores, ExactSumIsEffectiveDimension) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 10 + 9 * trial;
        const double lambda = std::pow(10.0, -1.0 + 0.1 * trial);
        const auto e = oracle::random_edges(n, std::min(0.5, 8.0 / n), gen);
        const auto in = instance(make_graph(n, std::vector<Edge>(e.begin(), e.end())));
        const auto exact = oracle::leverage_scores(in.b.to_dense(), in.lap.to_dense(), lambda);
        EXPECT_NEAR(exact.sum(), oracle::effective_dimension(in.lap.to_dense(), lambda), 1e-9);
        // Library with identity sketches (k >= m, n) and a tight solve reproduces them.
        auto cfg = config(lambda);
        cfg.k_jl = std::max<std::int64_t>(static_cast<std::int64_t>(in.b.rows()), n);
        cfg.solver_rate = 1e-12;
        const auto sc = ridge_leverage_scores(in.b, in.lap, cfg);
        for (std::size_t i = 0; i < in.b.rows(); ++i)
            EXPECT_NEAR(sc.l_tilde[i], exact[static_cast<Eigen::Index>(i)], 1e-9);
    }
}

// Per-edge rate of l~_i within [l_i/2, 3 l_i/2] at the default sketch width.
TEST(LeverageScores, HalfApproximationRate) {
    for (double lambda : {1.0, 4.0}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto in = instance(erdos_renyi(200, 0.1, RngHandle(seed)));
            auto cfg = config(lambda, 0.25, seed);
            const auto sc = ridge_leverage_scores(in.b, in.lap, cfg);
            ASSERT_LT(cfg.jl_rows(in.b.rows()), static_cast<std::int64_t>(in.b.rows()));
            const auto exact = oracle::leverage_scores(in.b.to_dense(), in.lap.to_dense(), lambda);
            std::size_t ok = 0;
            for (std::size_t i = 0; i < in.b.rows(); ++i) {
                const double r = sc.l_tilde[i] / exact[static_cast<Eigen::Index>(i)];
                ok += r >= 0.5 && r <= 1.5;
            }
            EXPECT_GE(static_cast<double>(ok), 0.95 * static_cast<double>(in.b.rows()))
                << "lambda=" << lambda << " seed=" << seed;
            const double nl = oracle::effective_dimension(in.lap.to_dense(), lambda);
            const double est = effective_dim(sc).n_lambda_estimate;
            EXPECT_GE(est, nl / 2.0);
            EXPECT_LE(est, 1.5 * nl);
        }
    }
}

TEST(LeverageScores, Deterministic) {
    const auto in = instance(erdos_renyi(80, 0.1, RngHandle(4)));
    const auto a = ridge_leverage_scores(in.b, in.lap, config(2.0, 0.25, 9));
    const auto b = ridge_leverage_scores(in.b, in.lap, config(2.0, 0.25, 9));
    EXPECT_EQ(a.l_tilde, b.l_tilde);
    auto threaded = config(2.0, 0.25, 9);
    threaded.threads = 3;
    EXPECT_EQ(ridge_leverage_scores(in.b, in.lap, threaded).l_tilde, a.l_tilde);
}

TEST(EffectiveDim, TriangleIsOne) {
    const auto in = instance(triangle_graph());
    EXPECT_NEAR(oracle::effective_dimension(in.lap.to_dense(), 1.0), 1.0, 1e-12);
    EXPECT_NEAR(effective_dim(ridge_leverage_scores(in.b, in.lap, config(1.0))).n_lambda_estimate, 1.0, 1e-6);
}

TEST(EffectiveDim, EmptyGraphIsZero) {
    const auto in = instance(make_graph(4, {}));
    EXPECT_EQ(effective_dim(ridge_leverage_scores(in.b, in.lap, config(1.0))).n_lambda_estimate, 0.0);
}

TEST(EffectiveDim, LargeLambdaApproachesRank) {
    const auto in = instance(path_graph(12));
    auto cfg = config(1e4);
    cfg.solver_rate = 1e-8;
    const double est = effective_dim(ridge_leverage_scores(in.b, in.lap, cfg)).n_lambda_estimate;
    EXPECT_NEAR(est, oracle::effective_dimension(in.lap.to_dense(), 1e4), 1e-6);
    EXPECT_NEAR(est, 11.0, 0.05); // one zero eigenvalue for a connected graph
    EXPECT_LE(est, 12.0);
}

TEST(EffectiveDim, ClampedToN) {
    LeverageScores sc;
    sc.n = 3;
    sc.Z = 7.0;
    EXPECT_EQ(effective_dim(sc).n_lambda_estimate, 3.0);
    sc.Z = -1.0;
    EXPECT_EQ(effective_dim(sc).n_lambda_estimate, 0.0);
}

TEST(SparsifyConfig, Validation) {
    const auto in = instance(triangle_graph());
    for (double eps : {0.0, -0.1, 0.6}) EXPECT_THROW(sparsify(in.lap, in.b, config(1.0, eps)), Error);
    EXPECT_NO_THROW(sparsify(in.lap, in.b, config(1.0, 0.5)));
    try {
        sparsify(in.lap, in.b, config(-1.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveLambda);
    }
    auto bad_c = config(1.0);
    bad_c.C = 0.0;
    EXPECT_THROW(sparsify(in.lap, in.b, bad_c), Error);
    EXPECT_EQ(config(1.0).jl_rows(1000), static_cast<std::int64_t>(std::ceil(8.0 * std::log(1000.0))));
}

TEST(Sparsify, TriangleCertificate) {
    const auto in = instance(triangle_graph());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto res = sparsify(in.lap, in.b, config(1.0, 0.25, seed));
        const auto ev = certificate(res.laplacian, in.lap, 1.0);
        EXPECT_GE(ev.minCoeff(), 0.75);
        EXPECT_LE(ev.maxCoeff(), 1.25);
        EXPECT_LE(static_cast<std::int64_t>(res.edges.size()), res.samples);
    }
}

TEST(Sparsify, EmptyGraph) {
    const auto in = instance(make_graph(5, {}));
    const auto res = sparsify(in.lap, in.b, config(1.0));
    EXPECT_TRUE(res.edges.empty());
    EXPECT_EQ(res.laplacian.dim(), 5);
    EXPECT_EQ(res.laplacian.nnz(), 0u);
    EXPECT_EQ(res.dim.n_lambda_estimate, 0.0);
}

TEST(Sparsify, SampleCountAndStructure) {
    const auto in = instance(erdos_renyi(150, 0.1, RngHandle(11)));
    const auto cfg = config(4.0, 0.25, 11);
    const auto res = sparsify(in.lap, in.b, cfg);
    const double expected =
        std::ceil(8.0 * std::max(res.dim.n_lambda_estimate, 1.0) * std::log(150.0) / (0.25 * 0.25));
    EXPECT_EQ(res.samples, static_cast<std::int64_t>(expected));
    EXPECT_LE(static_cast<std::int64_t>(res.edges.size()), res.samples);
    EXPECT_TRUE(res.laplacian.is_well_formed(1e-12));
    EXPECT_GE(oracle::sym_eigenvalues(res.laplacian.to_dense()).minCoeff(), -1e-10);
    // Weights reproduce the returned matrix.
    std::vector<double> w(in.b.rows(), 0.0);
    std::size_t next = 0;
    for (std::size_t i = 0; i < in.b.rows() && next < res.edges.size(); ++i)
        if (in.b.row(i).u == res.edges[next].u && in.b.row(i).v == res.edges[next].v) w[i] = res.edges[next++].w;
    ASSERT_EQ(next, res.edges.size());
    EXPECT_LT((in.b.weighted_gram(w).to_dense() - res.laplacian.to_dense()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Sparsify, CertificateRateOnErdosRenyi) {
    const double lambda = 4.0;
    int pass = 0;
    const int seeds = 30;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto in = instance(erdos_renyi(200, 0.1, RngHandle(1000 + static_cast<std::uint64_t>(seed))));
        const auto res = sparsify(in.lap, in.b, config(lambda, 0.25, static_cast<std::uint64_t>(seed)));
        const auto ev = certificate(res.laplacian, in.lap, lambda);
        pass += ev.minCoeff() >= 0.75 && ev.maxCoeff() <= 1.25;
    }
    EXPECT_GE(pass, static_cast<int>(std::ceil(0.95 * seeds)));
}

TEST(Sparsify, UnbiasedOnTriangle) {
    const auto in = instance(triangle_graph());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) acc += sparsify(in.lap, in.b, config(1.0, 0.5, static_cast<std::uint64_t>(t))).laplacian.to_dense();
    acc /= draws;
    EXPECT_LT((acc - in.lap.to_dense()).norm() / in.lap.to_dense().norm(), 0.02);
}

TEST(Sparsify, Deterministic) {
    const auto in = instance(erdos_renyi(60, 0.2, RngHandle(5)));
    const auto a = sparsify(in.lap, in.b, config(2.0, 0.3, 17));
    const auto b = sparsify(in.lap, in.b, config(2.0, 0.3, 17));
    ASSERT_EQ(a.edges.size(), b.edges.size());
    for (std::size_t i = 0; i < a.edges.size(); ++i) EXPECT_EQ(a.edges[i].w, b.edges[i].w);
}
