// herta_cli: gen / train / sparsify / certify.
// Exit codes: 0 ok, 1 usage or input error, 2 convergence failure.

#include "herta/herta.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifndef HERTA_GIT_DESCRIBE
#define HERTA_GIT_DESCRIBE "unknown"
#endif

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace herta;

namespace {

constexpr Eigen::Index kCertifyLimit = 500;

struct ConvergenceFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
    out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

fs::path prepare_out(const std::string& dir) {
    const fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (!fs::is_directory(p)) throw Error(ErrorCode::Io, "cannot create output directory " + dir);
    return p;
}

void write_manifest(const fs::path& out, const std::string& command, const std::vector<std::string>& args,
                    const json& config, const json& inputs, const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["argv"] = args;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["git_describe"] = HERTA_GIT_DESCRIBE;
    write_json(out / "manifest.json", m);
}

// ---- gen ----

struct GenOptions {
    std::string model = "er";
    int n = 100;
    double p = 0.1;
    double q = 0.01;
    int k = 2;
    int d = 8;
    double cond = 1.0;
    int classes = 3;
    std::string labels = "planted-onehot";
    double noise = 0.0;
    double lambda = 1.0;
    double train_frac = 1.0;
    std::uint64_t seed = 0;
    std::string out;

    json snapshot() const {
        return {{"model", model}, {"n", n},         {"p", p},          {"q", q},          {"k", k},
                {"d", d},         {"cond", cond},   {"classes", classes}, {"labels", labels}, {"noise", noise},
                {"lambda", lambda}, {"train_frac", train_frac}, {"seed", seed}, {"out", out}};
    }
};

int run_gen(const GenOptions& o, const std::vector<std::string>& args) {
    const RngHandle root(o.seed);
    GraphData g;
    if (o.model == "er") {
        g = erdos_renyi(o.n, o.p, root.substream(streams::gen_graph));
    } else if (o.model == "sbm") {
        g = stochastic_block(o.n, o.k, o.p, o.q, root.substream(streams::gen_graph));
    } else if (o.model == "path") {
        g = path_graph(o.n);
    } else {
        g = triangle_graph();
    }
    const auto lap = normalized_laplacian(add_self_loops(g));
    const auto f = synthetic_features(g.n, o.d, o.cond, root.substream(streams::gen_features));
    LabelModel lm = LabelModel::PlantedOneHot;
    if (o.labels == "planted") lm = LabelModel::Planted;
    if (o.labels == "random") lm = LabelModel::RandomOneHot;
    const DenseMatrix y = synthetic_labels(lm, lap, o.lambda, f, o.classes, o.noise, root);

    const fs::path out = prepare_out(o.out);
    std::vector<std::string> outputs = {"graph.txt", "features.csv", "labels.csv", "gen.json"};
    write_edge_list((out / "graph.txt").string(), g);
    write_matrix_csv((out / "features.csv").string(), f.X);
    if (lm == LabelModel::Planted)
        write_matrix_csv((out / "labels.csv").string(), y);
    else
        write_class_labels((out / "labels.csv").string(), y);
    if (o.train_frac < 1.0) {
        const Vector mask = train_mask(g.n, o.train_frac, root);
        std::ofstream m(out / "train_nodes.txt", std::ios::binary);
        for (Eigen::Index i = 0; i < mask.size(); ++i)
            if (mask[i] > 0.0) m << i << '\n';
        outputs.push_back("train_nodes.txt");
    }
    json info = {{"n", g.n},
                 {"m", g.m()},
                 {"d", o.d},
                 {"classes", y.cols()},
                 {"kappa_x", condition_number(f.X)},
                 {"labels", o.labels}};
    write_json(out / "gen.json", info);
    outputs.push_back("manifest.json");
    write_manifest(out, "gen", args, o.snapshot(), json::object(), outputs);
    return 0;
}

// ---- shared dataset loading ----

struct Dataset {
    GraphData graph; // with self-loops
    DenseMatrix X;
    DenseMatrix Y;
    Vector mask;
};

Vector read_train_nodes(const std::string& path, Eigen::Index n) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    Vector mask = Vector::Zero(n);
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        long long id = -1;
        std::istringstream ss(line);
        if (!(ss >> id) || id < 0 || id >= n)
            throw Error(ErrorCode::ParseError,
                        path + " line " + std::to_string(line_no) + ": node id outside [0, " + std::to_string(n) + ")");
        mask[static_cast<Eigen::Index>(id)] = 1.0;
    }
    return mask;
}

GraphData load_graph_for(const std::string& path, Eigen::Index n) {
    GraphData g = add_self_loops(load_edge_list(path, static_cast<std::int32_t>(n)));
    detail::require(g.n == n, ErrorCode::DimensionMismatch,
                    "graph has " + std::to_string(g.n) + " nodes but features have " + std::to_string(n) + " rows");
    return g;
}

// ---- train ----

struct TrainOptions {
    std::string graph, features, labels, train_nodes, out;
    std::string label_kind = "auto";
    std::string algo = "herta";
    std::string loss = "mse";
    std::string optimizer = "gd";
    std::string inner = "gd";
    double lambda = 1.0;
    double eps = 1e-6;
    std::int64_t iters = 100;
    std::uint64_t seed = 0;
    int threads = 1;
    std::optional<double> eta, mu, adam_lr;
    double K = 4.0;
    double beta = 1.0 / 64.0;
    std::optional<Eigen::Index> sketch_rows;
    bool test_mode = false;
    double floor_rel = 0.0;
    bool timing = false;

    json snapshot() const {
        json j = {{"graph", graph},   {"features", features}, {"labels", labels},     {"train_nodes", train_nodes},
                  {"label_kind", label_kind}, {"algo", algo},  {"loss", loss},         {"optimizer", optimizer},
                  {"inner", inner},   {"lambda", lambda},     {"eps", eps},           {"iters", iters},
                  {"seed", seed},     {"threads", threads},   {"K", K},               {"beta", beta},
                  {"test_mode", test_mode}, {"floor_rel", floor_rel}, {"timing", timing}, {"out", out}};
        j["eta"] = eta ? json(*eta) : json(nullptr);
        j["mu"] = mu ? json(*mu) : json(nullptr);
        j["adam_lr"] = adam_lr ? json(*adam_lr) : json(nullptr);
        j["sketch_rows"] = sketch_rows ? json(*sketch_rows) : json(nullptr);
        return j;
    }
};

int run_train(const TrainOptions& o, const std::vector<std::string>& args) {
    Dataset ds;
    ds.X = read_matrix_csv(o.features);
    const LabelKind lk = o.label_kind == "class" ? LabelKind::Class
                         : o.label_kind == "numeric" ? LabelKind::Numeric
                                                     : LabelKind::Auto;
    ds.Y = read_labels(o.labels, lk);
    detail::require(ds.Y.rows() == ds.X.rows(), ErrorCode::DimensionMismatch, "labels and features disagree on n");
    ds.graph = load_graph_for(o.graph, ds.X.rows());
    if (!o.train_nodes.empty()) ds.mask = read_train_nodes(o.train_nodes, ds.X.rows());

    const bool ce = o.loss == "ce";
    const ModelSpec spec = ModelSpec::make(normalized_laplacian(ds.graph), o.lambda, ds.X, ds.Y, ds.mask, o.threads);
    if (ce) require_one_hot(spec.Y);

    std::optional<OptimalSolution> opt;
    LossEvaluator eval;
    if (o.test_mode) {
        detail::require(!ce, ErrorCode::BadParams, "test mode needs the mse loss (dense optimum)");
        opt = optimal_mse(spec);
        eval = dense_loss_evaluator(spec, LossKind::Mse);
    }

    TrainResult res;
    if (o.algo == "herta") {
        HertaConfig cfg;
        cfg.target_eps = o.eps;
        cfg.K = o.K;
        cfg.beta = o.beta;
        cfg.mu = o.mu;
        cfg.eta = o.eta;
        cfg.T = o.iters;
        cfg.optimizer = o.optimizer == "adam" ? OptimizerKind::Adam : OptimizerKind::GradientDescent;
        if (o.adam_lr) cfg.adam.lr = *o.adam_lr;
        cfg.loss = ce ? LossKind::CrossEntropy : LossKind::Mse;
        cfg.seed = o.seed;
        cfg.sketch_rows = o.sketch_rows;
        if (opt) cfg.target_class_losses = opt->class_losses;
        cfg.floor_rel = o.floor_rel;
        cfg.record_time = o.timing;
        res = herta_train(spec, ds.graph, cfg, eval);
    } else {
        detail::require(o.optimizer == "gd", ErrorCode::BadParams, "the baseline only supports plain gradient descent");
        BaselineConfig cfg;
        cfg.target_eps = o.eps;
        cfg.mu = o.mu;
        cfg.eta = o.eta;
        cfg.T_outer = o.iters;
        cfg.inner = o.inner == "sdd" ? InnerSolver::Sdd : InnerSolver::GradientDescent;
        cfg.loss = ce ? LossKind::CrossEntropy : LossKind::Mse;
        if (opt) cfg.target_class_losses = opt->class_losses;
        cfg.floor_rel = o.floor_rel;
        cfg.record_time = o.timing;
        res = train_baseline(spec, cfg, eval);
    }

    const fs::path out = prepare_out(o.out);
    write_trace_csv((out / "loss.csv").string(), res.trace);
    write_matrix_csv((out / "weights.csv").string(), res.W);
    json summary = {{"algo", o.algo},
                    {"dataset", fs::path(o.graph).parent_path().filename().string()},
                    {"loss", o.loss},
                    {"optimizer", o.optimizer},
                    {"lambda", o.lambda},
                    {"eps", o.eps},
                    {"seed", o.seed},
                    {"n", spec.n()},
                    {"d", spec.d()},
                    {"c", spec.c()},
                    {"iterations", res.iterations},
                    {"converged", res.converged},
                    {"initial_loss", res.initial_loss},
                    {"final_loss", res.trace.empty() ? res.initial_loss : res.trace.final_loss()},
                    {"eta", res.eta},
                    {"mu", res.mu},
                    {"precond_build_ns", res.precond_build_ns},
                    {"train_ns", res.train_ns}};
    summary["optimal_loss"] = opt ? json(opt->loss) : json(nullptr);
    write_json(out / "summary.json", summary);
    json inputs = {{"graph", o.graph}, {"features", o.features}, {"labels", o.labels}};
    if (!o.train_nodes.empty()) inputs["train_nodes"] = o.train_nodes;
    write_manifest(out, "train", args, o.snapshot(), inputs,
                   {"loss.csv", "weights.csv", "summary.json", "manifest.json"});
    if (o.test_mode && !res.converged)
        throw ConvergenceFailure("target loss not reached within " + std::to_string(o.iters) + " iterations");
    return 0;
}

// ---- sparsify ----

struct SparsifyOptions {
    std::string graph, out;
    double lambda = 1.0;
    double eps = 0.25;
    double C = 8.0;
    std::uint64_t seed = 0;
    int threads = 1;
    bool certify = false;

    json snapshot() const {
        return {{"graph", graph}, {"lambda", lambda}, {"eps", eps},         {"C", C},
                {"seed", seed},   {"threads", threads}, {"certify", certify}, {"out", out}};
    }
};

int run_sparsify(const SparsifyOptions& o, const std::vector<std::string>& args) {
    SparsifyConfig cfg;
    cfg.eps = o.eps;
    cfg.lambda = o.lambda;
    cfg.C = o.C;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    cfg.validate();
    const GraphData g = add_self_loops(load_edge_list(o.graph));
    if (o.certify) require_dense(g.n, kCertifyLimit);
    const auto lap = normalized_laplacian(g);
    const auto b = normalized_incidence(g);
    const SparsifyResult res = sparsify(lap, b, cfg);

    const fs::path out = prepare_out(o.out);
    write_weighted_edges((out / "sparsified.txt").string(), res.edges);
    json report = {{"n", g.n},
                   {"m_in", b.rows()},
                   {"m_out", res.edges.size()},
                   {"samples", res.samples},
                   {"n_lambda_estimate", res.dim.n_lambda_estimate}};
    if (o.certify) {
        const auto rep = psi_approx(shifted_laplacian(lap, o.lambda).to_dense(),
                                    shifted_laplacian(res.laplacian, o.lambda).to_dense());
        report["certified"] = rep.check_approx(o.eps);
        report["eig_min"] = rep.eig_min;
        report["eig_max"] = rep.eig_max;
    } else {
        report["certified"] = nullptr;
    }
    write_json(out / "sparsify.json", report);
    write_manifest(out, "sparsify", args, o.snapshot(), {{"graph", o.graph}},
                   {"sparsified.txt", "sparsify.json", "manifest.json"});
    return 0;
}

// ---- certify ----

struct CertifyOptions {
    std::string graph, features, out;
    double lambda = 1.0;
    int trials = 100;
    std::uint64_t seed = 0;
    int threads = 1;
    double K = 4.0;
    double beta = 1.0 / 64.0;
    std::optional<Eigen::Index> sketch_rows;
    bool exact = false;

    json snapshot() const {
        json j = {{"graph", graph}, {"features", features}, {"lambda", lambda}, {"trials", trials},
                  {"seed", seed},   {"threads", threads},   {"K", K},           {"beta", beta},
                  {"exact", exact}, {"out", out}};
        j["sketch_rows"] = sketch_rows ? json(*sketch_rows) : json(nullptr);
        return j;
    }
};

int run_certify(const CertifyOptions& o, const std::vector<std::string>& args) {
    const DenseMatrix x = read_matrix_csv(o.features);
    require_dense(x.rows(), kCertifyLimit);
    const GraphData g = load_graph_for(o.graph, x.rows());
    const ModelSpec spec =
        ModelSpec::make(normalized_laplacian(g), o.lambda, x, DenseMatrix::Zero(x.rows(), 1), {}, o.threads);
    constexpr double kappa_cap = 2.25 + 1e-6;

    json trials = json::array();
    int pass4 = 0, pass5 = 0;
    const int count = o.exact ? 1 : o.trials;
    for (int t = 0; t < count; ++t) {
        Preconditioner pc;
        const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(t);
        if (o.exact) {
            pc = exact_preconditioner(spec);
        } else {
            HertaConfig cfg;
            cfg.seed = seed;
            cfg.K = o.K;
            cfg.beta = o.beta;
            cfg.sketch_rows = o.sketch_rows;
            pc = build_preconditioner(spec, g, cfg);
        }
        const SketchReport rep = certify_preconditioner(spec, pc);
        const double kappa = conditioned_hessian_check(spec, pc.P_prime);
        const bool l4 = rep.check_approx(0.5);
        const bool l5 = kappa <= kappa_cap;
        pass4 += l4 ? 1 : 0;
        pass5 += (l4 && l5) ? 1 : 0;
        trials.push_back({{"seed", seed}, {"eig_min", rep.eig_min}, {"eig_max", rep.eig_max}, {"kappa", kappa},
                          {"lemma4", l4}, {"lemma5", l5}});
    }
    json report = {{"n", spec.n()},
                   {"d", spec.d()},
                   {"lambda", o.lambda},
                   {"mode", o.exact ? "exact" : "sketched"},
                   {"trials", count},
                   {"pass_rate_lemma4", static_cast<double>(pass4) / count},
                   {"pass_rate_lemma5", pass4 ? static_cast<double>(pass5) / pass4 : 0.0},
                   {"lemma5_exceptions", pass4 - pass5},
                   {"per_trial", trials}};
    if (o.exact) report["kappa"] = trials[0]["kappa"];
    const fs::path out = prepare_out(o.out);
    write_json(out / "certify.json", report);
    write_manifest(out, "certify", args, o.snapshot(), {{"graph", o.graph}, {"features", o.features}},
                   {"certify.json", "manifest.json"});
    return 0;
}

// ---- argv handling ----

// `--from-manifest m.json [--out dir]` replays the recorded argv, optionally into another directory.
std::vector<std::string> expand_manifest(const std::vector<std::string>& args) {
    if (args.size() < 2 || args[0] != "--from-manifest") return args;
    const json m = read_json(args[1]);
    if (!m.contains("argv") || !m["argv"].is_array())
        throw Error(ErrorCode::ParseError, args[1] + ": manifest has no argv array");
    std::vector<std::string> replay = m["argv"].get<std::vector<std::string>>();
    std::optional<std::string> out;
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--out" && i + 1 < args.size()) {
            out = args[++i];
        } else {
            throw Error(ErrorCode::BadParams, "only --out may accompany --from-manifest");
        }
    }
    if (out) {
        bool replaced = false;
        for (std::size_t i = 0; i + 1 < replay.size(); ++i)
            if (replay[i] == "--out") {
                replay[i + 1] = *out;
                replaced = true;
            }
        if (!replaced) {
            replay.push_back("--out");
            replay.push_back(*out);
        }
    }
    return replay;
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"HERTA trainer for linear unfolded graph networks"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
    g->add_option("--model", gen.model)->check(CLI::IsMember({"er", "sbm", "path", "triangle"}));
    g->add_option("--n", gen.n)->check(CLI::PositiveNumber);
    g->add_option("--p", gen.p, "edge probability (inside blocks for sbm)")->check(CLI::Range(0.0, 1.0));
    g->add_option("--q", gen.q, "cross-block edge probability")->check(CLI::Range(0.0, 1.0));
    g->add_option("--k", gen.k, "number of blocks")->check(CLI::PositiveNumber);
    g->add_option("--d", gen.d)->check(CLI::PositiveNumber);
    g->add_option("--cond", gen.cond, "condition number of X")->check(CLI::Range(1.0, 1e12));
    g->add_option("--classes", gen.classes)->check(CLI::PositiveNumber);
    g->add_option("--labels", gen.labels)->check(CLI::IsMember({"planted", "planted-onehot", "random"}));
    g->add_option("--noise", gen.noise)->check(CLI::NonNegativeNumber);
    g->add_option("--lambda", gen.lambda)->check(CLI::PositiveNumber);
    g->add_option("--train-frac", gen.train_frac)->check(CLI::Range(0.0, 1.0));
    g->add_option("--seed", gen.seed);
    g->add_option("--out", gen.out)->required();

    TrainOptions tr;
    auto* t = app.add_subcommand("train", "Train with HERTA or the baseline");
    t->add_option("--graph", tr.graph)->required();
    t->add_option("--features", tr.features)->required();
    t->add_option("--labels", tr.labels)->required();
    t->add_option("--label-kind", tr.label_kind)->check(CLI::IsMember({"auto", "class", "numeric"}));
    t->add_option("--train-nodes", tr.train_nodes, "file with one training node id per line");
    t->add_option("--algo", tr.algo)->check(CLI::IsMember({"herta", "baseline"}));
    t->add_option("--loss", tr.loss)->check(CLI::IsMember({"mse", "ce"}));
    t->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"gd", "adam"}));
    t->add_option("--inner", tr.inner, "baseline inner solver")->check(CLI::IsMember({"gd", "sdd"}));
    t->add_option("--lambda", tr.lambda);
    t->add_option("--eps", tr.eps);
    t->add_option("--iters", tr.iters)->check(CLI::NonNegativeNumber);
    t->add_option("--seed", tr.seed);
    t->add_option("--threads", tr.threads)->check(CLI::PositiveNumber);
    t->add_option("--eta", tr.eta);
    t->add_option("--mu", tr.mu);
    t->add_option("--adam-lr", tr.adam_lr);
    t->add_option("--K", tr.K);
    t->add_option("--beta", tr.beta);
    t->add_option("--sketch-rows", tr.sketch_rows)->check(CLI::PositiveNumber);
    t->add_flag("--test-mode", tr.test_mode, "stop at (1+eps) times the dense optimum");
    t->add_option("--floor-rel", tr.floor_rel)->check(CLI::NonNegativeNumber);
    t->add_flag("--timing", tr.timing, "record wall-clock times (output is then not reproducible)");
    t->add_option("--out", tr.out)->required();

    SparsifyOptions sp;
    auto* s = app.add_subcommand("sparsify", "Regularized spectral sparsification");
    s->add_option("--graph", sp.graph)->required();
    s->add_option("--lambda", sp.lambda);
    s->add_option("--eps", sp.eps);
    s->add_option("--C", sp.C);
    s->add_option("--seed", sp.seed);
    s->add_option("--threads", sp.threads)->check(CLI::PositiveNumber);
    s->add_flag("--certify", sp.certify);
    s->add_option("--out", sp.out)->required();

    CertifyOptions ce;
    auto* c = app.add_subcommand("certify", "Check preconditioner quality against the dense Hessian");
    c->add_option("--graph", ce.graph)->required();
    c->add_option("--features", ce.features)->required();
    c->add_option("--lambda", ce.lambda);
    c->add_option("--trials", ce.trials)->check(CLI::PositiveNumber);
    c->add_option("--seed", ce.seed);
    c->add_option("--threads", ce.threads)->check(CLI::PositiveNumber);
    c->add_option("--K", ce.K);
    c->add_option("--beta", ce.beta);
    c->add_option("--sketch-rows", ce.sketch_rows)->check(CLI::PositiveNumber);
    c->add_flag("--exact", ce.exact);
    c->add_option("--out", ce.out)->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    if (g->parsed()) return run_gen(gen, args);
    if (t->parsed()) return run_train(tr, args);
    if (s->parsed()) return run_sparsify(sp, args);
    return run_certify(ce, args);
}

} // namespace

int main(int argc, char** argv) {
    try {
        const std::vector<std::string> raw(argv + 1, argv + argc);
        return dispatch(expand_manifest(raw));
    } catch (const ConvergenceFailure& e) {
        std::cerr << "error: NoConvergence: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::NoConvergence ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
