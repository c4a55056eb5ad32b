#include "doctest.h"
#include "oracles.hpp"

#include "dag/cli.hpp"

#include <fstream>
#include <sstream>

using namespace dag;

namespace {

struct Run {
    int status;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "dag");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int status = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {status, out.str(), err.str()};
}

}  // namespace

TEST_CASE("argument parsing") {
    const auto gen = cli::parse_args({"gen", "--kind", "rings", "--classes", "3", "--per-class", "10", "--out", "d"});
    REQUIRE(gen.command.has_value());
    CHECK(gen.command->name == "gen");
    CHECK(gen.command->kind == "rings");
    CHECK(gen.command->classes == 3);
    CHECK(gen.command->per_class == 10);
    CHECK_FALSE(gen.command->seed.has_value());

    const auto seeded = cli::parse_args({"gradcheck", "--instances", "5", "--seed", "9"});
    REQUIRE(seeded.command.has_value());
    CHECK(seeded.command->instances == 5);
    CHECK(seeded.command->seed == std::optional<std::uint64_t>(9));

    CHECK(run({}).status == cli::exit_usage);
    CHECK(run({"--help"}).status == cli::exit_ok);
    CHECK(run({"train", "--help"}).status == cli::exit_ok);
    CHECK(run({"train", "--features", "f", "--labels", "l", "--out", "o"}).status == cli::exit_usage);
    CHECK(run({"paths", "--features", "f", "--out", "o", "--bogus", "1"}).status == cli::exit_usage);
    CHECK(run({"gen", "--kind", "spiral", "--out", "o"}).status == cli::exit_usage);
    CHECK(run({"paths", "--features", "f", "--out", "o", "--seed", "1"}).status == cli::exit_usage);
    CHECK(run({"frobnicate"}).status == cli::exit_usage);
}

TEST_CASE("data errors") {
    oracle::TempDir dir;
    const auto missing = run({"density", "--features", (dir / "nope.dagf").string(), "--out", (dir / "d.csv").string()});
    CHECK(missing.status == cli::exit_data);
    CHECK_FALSE(missing.err.empty());

    std::ofstream(dir / "junk.dagf") << "not a matrix";
    CHECK(run({"paths", "--features", (dir / "junk.dagf").string(), "--out", (dir / "p.csv").string()}).status ==
          cli::exit_data);
}

TEST_CASE("gen, density, paths and propagate") {
    oracle::TempDir dir;
    const auto d = dir / "data";
    const auto g = run({"gen", "--classes", "2", "--per-class", "30", "--test-per-class", "5", "--dim", "4",
                        "--separation", "12", "--seed", "3", "--out", d.string()});
    REQUIRE(g.status == cli::exit_ok);
    const auto x = load_matrix(d / "features.dagf");
    CHECK(x.rows() == 60);
    CHECK(x.cols() == 4);
    CHECK(load_matrix(d / "test_features.dagf").rows() == 10);
    CHECK(load_labels(d / "labels.csv", 60).class_count() == 2);

    REQUIRE(run({"density", "--features", (d / "features.dagf").string(), "--k", "5", "--out",
                 (dir / "rho.csv").string()})
                .status == cli::exit_ok);
    std::istringstream rho(oracle::slurp(dir / "rho.csv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(rho, line)) ++rows;
    CHECK(rows == 60);

    REQUIRE(run({"paths", "--features", (d / "features.dagf").string(), "--k", "5", "--out",
                 (dir / "hist.csv").string()})
                .status == cli::exit_ok);
    std::istringstream hist(oracle::slurp(dir / "hist.csv"));
    std::size_t total = 0;
    while (std::getline(hist, line)) {
        if (line.find(',') == std::string::npos || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
        total += std::stoul(line.substr(line.find(',') + 1));
    }
    CHECK(total == 60);

    // Fully labelled input passes through unchanged.
    const auto full = (d / "labels.csv").string();
    REQUIRE(run({"propagate", "--features", (d / "features.dagf").string(), "--labels", full, "--k", "5", "--out",
                 (dir / "same.csv").string()})
                .status == cli::exit_ok);
    CHECK(load_labels(dir / "same.csv", 60) == load_labels(full, 60));

    // Two labels per class recover the well-separated classes.
    auto truth = load_labels(full, 60);
    LabelFile sparse = truth;
    for (std::size_t i = 0; i < 60; ++i)
        if (i % 30 > 1) sparse.labels[i].reset();
    save_labels(sparse, dir / "sparse.csv");
    REQUIRE(run({"propagate", "--features", (d / "features.dagf").string(), "--labels",
                 (dir / "sparse.csv").string(), "--k", "5", "--sigma", "5", "--out", (dir / "prop.csv").string()})
                .status == cli::exit_ok);
    CHECK(load_labels(dir / "prop.csv", 60) == truth);
}

TEST_CASE("train and eval") {
    oracle::TempDir dir;
    const auto d = dir / "data";
    REQUIRE(run({"gen", "--classes", "2", "--per-class", "40", "--test-per-class", "10", "--dim", "4",
                 "--separation", "10", "--seed", "5", "--out", d.string()})
                .status == cli::exit_ok);
    std::ofstream(dir / "run.cfg") << "k_global = 8\nk_sub = 4\nembed_dim = 4\nwarmup_epochs = 5\nepochs = 2\n"
                                      "batch_size = 16\nthreads = 1\n";
    const auto out = dir / "out";
    const auto t = run({"train", "--config", (dir / "run.cfg").string(), "--features", (d / "features.dagf").string(),
                        "--labels", (d / "labels.csv").string(), "--labels-per-class", "3", "--seed", "2",
                        "--test-features", (d / "test_features.dagf").string(), "--test-labels",
                        (d / "test_labels.csv").string(), "--out", out.string()});
    INFO(t.err);
    REQUIRE(t.status == cli::exit_ok);
    for (const char* f : {"checkpoint.dagp", "bank.dagf", "pseudo_labels.csv", "log.jsonl"})
        CHECK(std::filesystem::exists(out / f));
    CHECK(oracle::slurp(out / "log.jsonl").find("\"seed\":2") != std::string::npos);

    const auto e = run({"eval", "--config", (dir / "run.cfg").string(), "--checkpoint",
                        (out / "checkpoint.dagp").string(), "--bank", (out / "bank.dagf").string(), "--features",
                        (d / "test_features.dagf").string(), "--labels", (d / "test_labels.csv").string()});
    INFO(e.err);
    CHECK(e.status == cli::exit_ok);
    CHECK(e.out.starts_with("error_rate "));

    save_matrix(FeatureMatrix(5, 3, std::vector<float>(15, 1.0f)), dir / "narrow.dagf");
    const auto mismatch = run({"eval", "--config", (dir / "run.cfg").string(), "--checkpoint",
                               (out / "checkpoint.dagp").string(), "--bank", (dir / "narrow.dagf").string(),
                               "--features", (d / "test_features.dagf").string(), "--labels",
                               (d / "test_labels.csv").string()});
    CHECK(mismatch.status == cli::exit_data);
}

TEST_CASE("gradcheck command") {
    const auto ok = run({"gradcheck", "--instances", "4", "--seed", "1"});
    CHECK(ok.status == cli::exit_ok);
    CHECK_FALSE(ok.out.empty());
    CHECK(run({"gradcheck", "--instances", "2", "--tolerance", "0"}).status == cli::exit_check);
}
