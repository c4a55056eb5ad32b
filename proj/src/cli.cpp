#include "dag/cli.hpp"

#include "dag/dataio.hpp"
#include "dag/dplp.hpp"
#include "dag/gradcheck.hpp"
#include "dag/graph.hpp"
#include "dag/model.hpp"
#include "dag/trainer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace dag::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* known_commands[] = {"gen", "train", "eval", "propagate", "density", "paths", "gradcheck", "ablate"};

template <typename T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
    app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

void common_flags(CLI::App* app, Command& c) {
    optional_flag(app, "--seed", c.seed, "random seed");
    optional_flag(app, "--threads", c.threads, "worker threads, 0 = all cores");
}

void graph_flags(CLI::App* app, Command& c) {
    app->add_option("--k", c.k, "neighbors per node in the k-NN graph")->capture_default_str();
}

void path_flags(CLI::App* app, Command& c) {
    optional_flag(app, "--sigma", c.sigma, "absolute path distance threshold (default: quantile policy)");
    app->add_option("--sigma-quantile", c.sigma_quantile, "quantile of 1-NN distances used as threshold")
        ->capture_default_str();
    app->add_option("--l-max", c.l_max, "maximum path length")->capture_default_str();
}

Matrix read_features(const fs::path& p) { return load_matrix(p).to_matrix(); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + p.string());
    out << text;
    if (!out) fail(ErrorKind::io, "write failure on " + p.string());
}

LabelSource parse_source(const std::string& s) {
    if (s == "max_density_labelled") return LabelSource::max_density_labelled;
    if (s == "origin") return LabelSource::origin;
    fail(ErrorKind::invalid_argument, "unknown label source '" + s + "'");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

TrainConfig config_for(const Command& c, bool required) {
    TrainConfig cfg;
    if (!c.config.empty())
        cfg = load_config(c.config);
    else if (required)
        fail(ErrorKind::invalid_argument, "--config is required");
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    return cfg;
}

double sigma_for(const Command& c, const Matrix& f) {
    if (c.sigma) {
        require(*c.sigma > 0.0, "--sigma must be positive");
        return *c.sigma;
    }
    return nn_distance_quantile(f, c.sigma_quantile, c.threads.value_or(0));
}

int cmd_gen(const Command& c, std::ostream& out) {
    const std::uint64_t seed = c.seed.value_or(0);
    const std::size_t total = c.per_class + c.test_per_class;
    Dataset data = [&] {
        if (c.kind == "blobs") return gen_blobs(c.classes, total, c.dim, c.separation, c.spread, seed);
        if (c.kind == "rings") return gen_rings(c.classes, total, c.noise, seed);
        fail(ErrorKind::invalid_argument, "unknown dataset kind '" + c.kind + "'");
    }();
    ensure_dir(c.out);
    if (c.test_per_class > 0) {
        auto [train, test] = hold_out(data, c.test_per_class);
        save_matrix(test.features, c.out / "test_features.dagf");
        save_labels(test.labels, c.out / "test_labels.csv");
        data = std::move(train);
    }
    save_matrix(data.features, c.out / "features.dagf");
    save_labels(data.labels, c.out / "labels.csv");
    out << "wrote " << data.features.rows() << " x " << data.features.cols() << " to " << c.out.string() << '\n';
    return exit_ok;
}

std::optional<TestData> read_test(const Command& c) {
    if (c.test_features.empty() != c.test_labels.empty())
        fail(ErrorKind::invalid_argument, "--test-features and --test-labels go together");
    if (c.test_features.empty()) return std::nullopt;
    TestData t{read_features(c.test_features), {}};
    t.labels = load_labels(c.test_labels, t.x.rows());
    return t;
}

int cmd_train(const Command& c, std::ostream& out) {
    const auto cfg = config_for(c, true);
    const Matrix x = read_features(c.features);
    const LabelFile labels = load_labels(c.labels, x.rows());
    Split split;
    if (c.labels_per_class) {
        split = make_split(labels, {*c.labels_per_class, cfg.seed, labels.class_count()});
    } else {
        for (std::size_t i = 0; i < labels.size(); ++i)
            (labels.labels[i] ? split.labelled : split.unlabelled).push_back(i);
    }
    const auto test = read_test(c);
    const auto data = make_train_data(x, labels, split);
    const auto result = train(data, cfg, test ? &*test : nullptr);

    ensure_dir(c.out);
    save_checkpoint(result.net, c.out / "checkpoint.dagp");
    save_matrix(FeatureMatrix::from_matrix(result.bank.features()), c.out / "bank.dagf");
    save_labels(result.labels.to_label_file(), c.out / "pseudo_labels.csv");
    write_text(c.out / "log.jsonl", result.log.to_jsonl());
    out << "trained " << cfg.epochs << " epochs";
    if (!result.log.epochs.empty() && result.log.epochs.back().test_error)
        out << ", test error " << fmt(*result.log.epochs.back().test_error);
    out << '\n';
    return exit_ok;
}

int cmd_eval(const Command& c, std::ostream& out) {
    const auto cfg = config_for(c, true);
    const Network net = load_checkpoint(c.checkpoint);
    const FeatureBank bank(read_features(c.bank));
    const DensityGraph graph = build_knn_graph(bank.features(), cfg.k_global, cfg.threads);
    TestData test{read_features(c.features), {}};
    test.labels = load_labels(c.labels, test.x.rows());
    const auto m = evaluate(net, bank, graph, test, cfg);
    out << "error_rate " << fmt(m.error_rate) << " (" << m.errors << "/" << m.samples << ")\n";
    return exit_ok;
}

int cmd_propagate(const Command& c, std::ostream& out) {
    const Matrix f = read_features(c.features);
    const LabelFile labels = load_labels(c.labels, f.rows());
    std::vector<std::size_t> labelled, unlabelled;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels.labels[i] ? labelled : unlabelled).push_back(i);
    const auto graph = build_knn_graph(f, c.k, c.threads.value_or(0));
    const PropagationOptions opts{sigma_for(c, f), c.l_max, parse_source(c.label_source), c.threads.value_or(0)};
    const auto res = propagate(f, graph.densities, LabelBank::from_split(labels, labelled), labelled, unlabelled, opts);
    save_labels(res.bank.to_label_file(), c.out);
    out << "sigma " << fmt(opts.sigma) << ", pseudo-labelled " << res.bank.count(LabelState::pseudo) << " of "
        << unlabelled.size() << '\n';
    return exit_ok;
}

int cmd_density(const Command& c, std::ostream& out) {
    const Matrix f = read_features(c.features);
    const auto graph = build_knn_graph(f, c.k, c.threads.value_or(0));
    save_densities(graph.densities, c.out);
    out << "wrote " << graph.size() << " densities\n";
    return exit_ok;
}

int cmd_paths(const Command& c, std::ostream& out) {
    const Matrix f = read_features(c.features);
    const auto graph = build_knn_graph(f, c.k, c.threads.value_or(0));
    const double sigma = sigma_for(c, f);
    const auto table = successor_table(f, graph.densities, c.threads.value_or(0));
    const auto hist = path_length_histogram(table, sigma, c.l_max);
    save_histogram(hist, c.out);
    out << "sigma " << fmt(sigma) << ", longest path " << (hist.empty() ? 0 : hist.rbegin()->first) << '\n';
    return exit_ok;
}

int cmd_gradcheck(const Command& c, std::ostream& out) {
    GradcheckOptions o;
    o.instances = c.instances;
    o.seed = c.seed.value_or(0);
    o.threads = c.threads.value_or(0);
    const auto r = gradcheck(o);
    const bool ok = r.max_relative_error < c.tolerance;
    char buf[160];
    std::snprintf(buf, sizeof buf, "instances %zu, partials %zu, max relative error %.3e, max absolute error %.3e: %s\n",
                  r.instances, r.parameters, r.max_relative_error, r.max_absolute_error, ok ? "ok" : "FAILED");
    out << buf;
    return ok ? exit_ok : exit_check;
}

int cmd_ablate(const Command& c, std::ostream& out) {
    const auto cfg = config_for(c, false);
    const Matrix x = read_features(c.features);
    const LabelFile labels = load_labels(c.labels, x.rows());
    const auto test = read_test(c);
    if (!test) fail(ErrorKind::invalid_argument, "ablate needs --test-features and --test-labels");
    require(c.seeds > 0, "--seeds must be positive");
    std::vector<std::uint64_t> seeds(c.seeds);
    std::iota(seeds.begin(), seeds.end(), cfg.seed);
    const auto rows = run_ablation(x, labels, *test, c.labels_per_class.value_or(10), seeds, cfg);
    const auto table = format_ablation(rows);
    if (!c.out.empty()) write_text(c.out, table);
    out << table;
    return exit_ok;
}

}  // namespace

ParseResult parse_args(const std::vector<std::string>& args) {
    Command c;
    CLI::App app{"Density-aware graph semi-supervised learning toolkit", "dag"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    gen->add_option("--kind", c.kind, "blobs or rings")->check(CLI::IsMember({"blobs", "rings"}))->capture_default_str();
    gen->add_option("--classes", c.classes)->capture_default_str();
    gen->add_option("--per-class", c.per_class, "training samples per class")->capture_default_str();
    gen->add_option("--test-per-class", c.test_per_class, "held-out samples per class")->capture_default_str();
    gen->add_option("--dim", c.dim, "feature dimension (blobs)")->capture_default_str();
    gen->add_option("--separation", c.separation, "minimum distance between class means (blobs)")->capture_default_str();
    gen->add_option("--spread", c.spread, "per-coordinate standard deviation (blobs)")->capture_default_str();
    gen->add_option("--noise", c.noise, "radial standard deviation (rings)")->capture_default_str();
    gen->add_option("--out", c.out, "output directory")->required();
    common_flags(gen, c);

    auto* train = app.add_subcommand("train", "train a model and write checkpoint, bank, labels and log");
    train->add_option("--config", c.config, "key = value config file")->required()->check(CLI::ExistingFile);
    train->add_option("--features", c.features)->required();
    train->add_option("--labels", c.labels, "index,label lines; -1 marks unlabelled")->required();
    optional_flag(train, "--labels-per-class", c.labels_per_class,
                  "sample this many labels per class with the seed instead of using the file's -1 entries");
    train->add_option("--test-features", c.test_features);
    train->add_option("--test-labels", c.test_labels);
    train->add_option("--out", c.out, "output directory")->required();
    common_flags(train, c);

    auto* eval = app.add_subcommand("eval", "print the error rate of a checkpoint");
    eval->add_option("--config", c.config, "config used for training")->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", c.checkpoint)->required();
    eval->add_option("--bank", c.bank, "bank.dagf written by train")->required();
    eval->add_option("--features", c.features)->required();
    eval->add_option("--labels", c.labels)->required();
    optional_flag(eval, "--threads", c.threads, "worker threads, 0 = all cores");

    auto* prop = app.add_subcommand("propagate", "propagate labels along density-ascending paths");
    prop->add_option("--features", c.features)->required();
    prop->add_option("--labels", c.labels, "index,label lines; -1 marks unlabelled")->required();
    prop->add_option("--out", c.out, "output label file")->required();
    prop->add_option("--label-source", c.label_source)
        ->check(CLI::IsMember({"max_density_labelled", "origin"}))
        ->capture_default_str();
    graph_flags(prop, c);
    path_flags(prop, c);
    optional_flag(prop, "--threads", c.threads, "worker threads, 0 = all cores");

    auto* density = app.add_subcommand("density", "write index,density lines");
    density->add_option("--features", c.features)->required();
    density->add_option("--out", c.out)->required();
    graph_flags(density, c);
    optional_flag(density, "--threads", c.threads, "worker threads, 0 = all cores");

    auto* paths = app.add_subcommand("paths", "write the path-length histogram as length,count lines");
    paths->add_option("--features", c.features)->required();
    paths->add_option("--out", c.out)->required();
    graph_flags(paths, c);
    path_flags(paths, c);
    optional_flag(paths, "--threads", c.threads, "worker threads, 0 = all cores");

    auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
    gc->add_option("--instances", c.instances)->capture_default_str();
    gc->add_option("--tolerance", c.tolerance, "maximum relative error")->capture_default_str();
    common_flags(gc, c);

    auto* ablate = app.add_subcommand("ablate", "run the Baseline/DNA/DPLP/DAG grid");
    ablate->add_option("--config", c.config, "base config (defaults otherwise)")->check(CLI::ExistingFile);
    ablate->add_option("--features", c.features)->required();
    ablate->add_option("--labels", c.labels)->required();
    ablate->add_option("--test-features", c.test_features)->required();
    ablate->add_option("--test-labels", c.test_labels)->required();
    optional_flag(ablate, "--labels-per-class", c.labels_per_class, "labelled samples per class (default 10)");
    ablate->add_option("--seeds", c.seeds, "number of consecutive seeds starting at --seed")->capture_default_str();
    ablate->add_option("--out", c.out, "comparison table file");
    common_flags(ablate, c);

    std::vector<const char*> argv{"dag"};
    for (const auto& a : args) argv.push_back(a.c_str());
    ParseResult result;
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        std::ostringstream out, err;
        const int code = app.exit(e, out, err);
        result.message = out.str() + err.str();
        result.status = code == 0 ? exit_ok : exit_usage;
        return result;
    }
    for (const char* name : known_commands)
        if (app.got_subcommand(name)) c.name = name;
    result.command = std::move(c);
    return result;
}

int run(const Command& c, std::ostream& out, std::ostream& err) {
    try {
        if (c.name == "gen") return cmd_gen(c, out);
        if (c.name == "train") return cmd_train(c, out);
        if (c.name == "eval") return cmd_eval(c, out);
        if (c.name == "propagate") return cmd_propagate(c, out);
        if (c.name == "density") return cmd_density(c, out);
        if (c.name == "paths") return cmd_paths(c, out);
        if (c.name == "gradcheck") return cmd_gradcheck(c, out);
        if (c.name == "ablate") return cmd_ablate(c, out);
        err << "unknown command '" << c.name << "'\n";
        return exit_usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return exit_data;
    }
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv + 1, argv + argc);
    auto parsed = parse_args(args);
    if (!parsed.command) {
        (parsed.status == exit_ok ? out : err) << parsed.message;
        return parsed.status;
    }
    return run(*parsed.command, out, err);
}

}  // namespace dag::cli
