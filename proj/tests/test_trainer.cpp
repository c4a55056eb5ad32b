#include "doctest.h"
#include "oracles.hpp"

#include "dag/trainer.hpp"
#include "json.hpp"

#include <sstream>

using namespace dag;

namespace {

struct Fixture {
    Dataset train;
    Dataset test;
    Split split;
    TrainData data;
};

Fixture blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
              std::size_t labels_per_class, std::uint64_t seed) {
    auto all = gen_blobs(classes, per_class + 20, dim, separation, 1.0, seed);
    auto [train, test] = hold_out(all, 20);
    const auto split = make_split(train.labels, {labels_per_class, seed, classes});
    auto data = make_train_data(train.features.to_matrix(), train.labels, split);
    return {std::move(train), std::move(test), split, std::move(data)};
}

TrainConfig small_config() {
    TrainConfig c;
    c.k_global = 8;
    c.k_sub = 4;
    c.h = 1;
    c.embed_dim = 8;
    c.warmup_epochs = 3;
    c.epochs = 2;
    c.batch_size = 16;
    c.lr = 0.05;
    c.seed = 7;
    c.threads = 1;
    return c;
}

TestData test_of(const Dataset& d) { return {d.features.to_matrix(), d.labels}; }

}  // namespace

TEST_CASE("config text") {
    TrainConfig c = small_config();
    c.lr_milestones = {2, 5};
    c.iterations = 3;
    c.sigma_policy = SigmaPolicy::absolute;
    c.sigma = 0.125;
    c.label_source = LabelSource::origin;
    c.mixup = true;
    c.mixup_alpha = 0.3;
    const auto text = format_config(c);
    const auto back = parse_config(text);
    CHECK(format_config(back) == text);
    CHECK(back.lr_milestones == std::vector<std::size_t>{2, 5});
    CHECK(back.iterations == std::optional<std::size_t>(3));
    CHECK(back.label_source == LabelSource::origin);

    const auto parsed = parse_config("# comment\n\n  h = 2   # trailing\nlambda=0.5\n");
    CHECK(parsed.h == 2);
    CHECK(parsed.lambda == 0.5);
    CHECK(parsed.k_global == TrainConfig{}.k_global);

    auto kind = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const Error& e) {
            return e.kind();
        }
        FAIL("accepted: " << text);
        return ErrorKind::io;
    };
    CHECK(kind("nonsense = 1\n") == ErrorKind::format);
    CHECK(kind("h 2\n") == ErrorKind::format);
    CHECK(kind("h = two\n") != ErrorKind::io);
    CHECK(kind("k_global = 0\n") == ErrorKind::invalid_argument);
    CHECK(kind("momentum = 1\n") == ErrorKind::invalid_argument);
    CHECK(kind("h = 2\nk_sub = 9\nk_global = 8\n") == ErrorKind::invalid_argument);
    CHECK(kind("backbone_depth = 3\n") == ErrorKind::invalid_argument);
    CHECK(kind("lr_milestones = 5,2\n") == ErrorKind::invalid_argument);
}

TEST_CASE("learning-rate schedule") {
    TrainConfig c;
    c.lr = 0.1;
    c.lr_milestones = {3, 6};
    c.lr_decay = 0.5;
    CHECK(learning_rate(c, 0) == 0.1);
    CHECK(learning_rate(c, 2) == 0.1);
    CHECK(learning_rate(c, 3) == 0.05);
    CHECK(learning_rate(c, 6) == 0.025);
    CHECK(learning_rate(c, 100) == 0.025);
}

TEST_CASE("train data") {
    const auto f = blobs(2, 30, 4, 8.0, 3, 1);
    CHECK(f.data.split.labelled.size() == 6);
    CHECK(f.data.labels.count(LabelState::ground_truth) == 6);
    CHECK(f.data.labels.count(LabelState::unlabelled) == 54);
    REQUIRE(f.data.truth.has_value());
    CHECK(*f.data.truth == f.train.labels);

    LabelFile partial = f.train.labels;
    partial.labels[f.split.unlabelled.front()].reset();
    CHECK_FALSE(make_train_data(f.data.x, partial, f.split).truth.has_value());
}

TEST_CASE("warmup") {
    const auto f = blobs(2, 40, 6, 10.0, 10, 3);
    auto c = small_config();
    c.embed_dim = 6;
    const auto net0 = initial_network(6, 2, c);

    auto none = c;
    none.warmup_epochs = 0;
    CHECK(warmup(f.data, none, net0) == net0);

    c.warmup_epochs = 30;
    const auto net = warmup(f.data, c, net0);
    CHECK(net == warmup(f.data, c, net0));
    for (auto i : f.split.labelled) {
        const auto t = forward_sample(f.data.x.row(i), net, nullptr);
        CHECK(static_cast<std::size_t>(std::ranges::max_element(t.probs) - t.probs.begin()) == *f.train.labels.labels[i]);
    }
}

TEST_CASE("feature banks") {
    const auto f = blobs(2, 20, 5, 6.0, 2, 4);
    auto c = small_config();
    c.embed_dim = 5;
    c.backbone_depth = 0;
    const auto id = initial_network(5, 2, c);
    const auto bank = init_banks(id, f.data.x, 3);
    CHECK(bank.epoch() == 3);
    CHECK(std::ranges::equal(bank.features().values(), f.data.x.values()));

    c.backbone_depth = 2;
    c.embed_dim = 7;
    auto net = initial_network(5, 2, c);
    const auto b1 = init_banks(net, f.data.x, 0, 1);
    CHECK(b1.size() == 40);
    CHECK(b1.dim() == 7);
    CHECK(std::ranges::equal(init_banks(net, f.data.x, 0, 3).features().values(), b1.features().values()));
    net.model.backbone.back().b[0] += 1.0;
    CHECK_FALSE(std::ranges::equal(init_banks(net, f.data.x, 0).features().values(), b1.features().values()));
}

TEST_CASE("epoch with no iterations is a no-op") {
    const auto f = blobs(2, 20, 4, 8.0, 2, 5);
    auto c = small_config();
    c.embed_dim = 4;
    c.iterations = 0;
    const auto net = initial_network(4, 2, c);
    TrainState s{net, net.zeros_like(), init_banks(net, f.data.x, 0), {}, f.data.labels, 0};
    s.graph = build_knn_graph(s.bank.features(), c.k_global);
    const auto stats = train_epoch(s, f.data, c);
    CHECK(stats.iterations == 0);
    CHECK(s.net == net);
    CHECK(s.velocity == net.zeros_like());
    CHECK(s.labels == f.data.labels);
}

TEST_CASE("training loop") {
    const auto f = blobs(3, 30, 6, 8.0, 2, 6);
    auto c = small_config();

    SUBCASE("zero epochs returns the warmup model") {
        c.epochs = 0;
        const auto r = train(f.data, c);
        CHECK(r.net == warmup(f.data, c, initial_network(6, 3, c)));
        CHECK(r.log.epochs.empty());
        CHECK(r.log.graph_builds == 0);
        CHECK(r.bank.size() == 90);
        CHECK(r.graph.size() == 90);
    }

    SUBCASE("one graph build and propagation per epoch") {
        const auto test = test_of(f.test);
        const auto r = train(f.data, c, &test);
        CHECK(r.log.graph_builds == 2);
        CHECK(r.log.propagation_passes == 2);
        REQUIRE(r.log.epochs.size() == 2);
        for (const auto& e : r.log.epochs) {
            CHECK(e.sigma > 0.0);
            CHECK(e.ground_truth == 6);
            CHECK(e.iterations == 6);
            CHECK(e.test_error.has_value());
            CHECK(std::isfinite(e.loss_total));
        }
        for (auto i : f.split.labelled) {
            CHECK(r.labels[i].state == LabelState::ground_truth);
            CHECK(r.labels[i].label == *f.train.labels.labels[i]);
        }

        const auto log = r.log.to_jsonl();
        std::istringstream lines(log);
        std::string line;
        std::size_t n = 0;
        while (std::getline(lines, line)) {
            const auto j = nlohmann::json::parse(line);
            CHECK(j.at("type") == (n == 0 ? "run" : "epoch"));
            ++n;
        }
        CHECK(n == 3);
    }

    SUBCASE("propagation off") {
        c.propagation = false;
        const auto r = train(f.data, c);
        CHECK(r.log.propagation_passes == 0);
        CHECK(r.labels == f.data.labels);
    }

    SUBCASE("thread count does not change results") {
        c.mixup = true;
        c.h = 2;
        const auto a = train(f.data, c);
        c.threads = 3;
        const auto b = train(f.data, c);
        CHECK(a.net == b.net);
        CHECK(a.labels == b.labels);
        // The echoed config names the thread count; everything else must match.
        auto log_b = b.log.to_jsonl();
        log_b.replace(log_b.find("threads = 3"), 11, "threads = 1");
        CHECK(a.log.to_jsonl() == log_b);
    }

    SUBCASE("seeds matter") {
        const auto a = train(f.data, c);
        c.seed = 8;
        CHECK_FALSE(train(f.data, c).net == a.net);
    }
}

TEST_CASE("evaluation") {
    const auto f = blobs(2, 30, 4, 12.0, 3, 9);
    auto c = small_config();
    c.h = 0;
    c.propagation = false;
    c.warmup_epochs = 20;
    const auto r = train(f.data, c);
    const auto m = evaluate(r.net, {}, {}, test_of(f.test), c);
    CHECK(m.samples == 40);
    CHECK(m.predictions.size() == 40);
    CHECK(m.error_rate == static_cast<double>(m.errors) / 40.0);
    CHECK(m.error_rate < 0.1);

    TestData empty{Matrix(0, 4), {}};
    CHECK_THROWS_AS(evaluate(r.net, r.bank, r.graph, empty, c), Error);
}

TEST_CASE("ablation grid") {
    CHECK(cell_name(AblationCell::baseline) == "Baseline");
    CHECK(cell_name(AblationCell::dag) == "DAG");
    TrainConfig base;
    base.h = 0;
    const auto dna = configure_cell(base, AblationCell::dna);
    CHECK(dna.h == 1);
    CHECK_FALSE(dna.propagation);
    const auto dplp = configure_cell(base, AblationCell::dplp);
    CHECK(dplp.h == 0);
    CHECK(dplp.propagation);
    base.h = 2;
    CHECK(configure_cell(base, AblationCell::dag).h == 2);
    CHECK(configure_cell(base, AblationCell::baseline).h == 0);

    const auto f = blobs(2, 25, 4, 10.0, 2, 2);
    auto c = small_config();
    c.epochs = 1;
    const std::uint64_t seeds[] = {1, 2};
    const auto rows = run_ablation(f.data.x, f.train.labels, test_of(f.test), 2, seeds, c);
    REQUIRE(rows.size() == 4);
    for (const auto& row : rows) {
        CHECK(row.errors.size() == 2);
        CHECK(row.mean == doctest::Approx((row.errors[0] + row.errors[1]) / 2));
        CHECK(row.stddev == doctest::Approx(std::abs(row.errors[0] - row.errors[1]) / std::sqrt(2.0)));
    }
    const auto table = format_ablation(rows);
    CHECK(table.starts_with("cell,mean_error,stddev,seed_errors\nBaseline,"));
    CHECK(std::ranges::count(table, '\n') == 5);
}
