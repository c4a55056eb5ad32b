#include "doctest.h"
#include "oracles.hpp"

#include "dag/dplp.hpp"
#include "dag/graph.hpp"

#include <numeric>

using namespace dag;

namespace {

std::vector<std::size_t> complement(std::size_t m, const std::vector<std::size_t>& in) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m; ++i)
        if (std::ranges::find(in, i) == in.end()) out.push_back(i);
    return out;
}

void check_same(const LabelBank& got, const oracle::RefBank& ref) {
    for (std::size_t i = 0; i < got.size(); ++i) {
        if (ref.label[i] < 0) {
            CHECK(got[i].state == LabelState::unlabelled);
        } else {
            CHECK(got[i].state == (ref.truth[i] ? LabelState::ground_truth : LabelState::pseudo));
            CHECK(got[i].label == static_cast<std::size_t>(ref.label[i]));
        }
    }
}

}  // namespace

TEST_CASE("label bank") {
    const LabelFile truth{{0, 1, 2, std::nullopt}};
    auto b = LabelBank::from_split(truth, std::vector<std::size_t>{0, 2});
    CHECK(b[0].state == LabelState::ground_truth);
    CHECK(b[1].state == LabelState::unlabelled);
    CHECK(b.label(2) == std::optional<std::size_t>(2));
    CHECK_FALSE(b.label(1).has_value());
    b.set_pseudo(1, 5);
    CHECK(b.count(LabelState::pseudo) == 1);
    CHECK_THROWS(b.set_pseudo(0, 1));
    CHECK_THROWS(b.clear(2));
    b.clear(1);
    CHECK(b.count(LabelState::unlabelled) == 2);
    CHECK(b.to_label_file() == LabelFile{{0, std::nullopt, 2, std::nullopt}});
    CHECK_THROWS(LabelBank::from_split(truth, std::vector<std::size_t>{3}));
}

TEST_CASE("successor") {
    const Matrix line(3, 1, {0, 1, 2});
    const std::vector<double> rho{0.1, 0.2, 0.3};
    CHECK(next_higher_density(0, line, rho) == std::optional<std::size_t>(1));
    CHECK_FALSE(next_higher_density(2, line, rho).has_value());

    // Two higher-density candidates at equal distance.
    const Matrix tie(3, 1, {0, -1, 1});
    CHECK(next_higher_density(0, tie, std::vector<double>{0.1, 0.5, 0.5}) == std::optional<std::size_t>(1));

    std::mt19937_64 rng(6);
    const auto f = oracle::random_matrix(80, 3, rng);
    const auto g = build_knn_graph(f, 6, 1);
    const auto table = successor_table(f, g.densities, 2);
    for (std::size_t v = 0; v < 80; ++v) {
        const auto ref = oracle::successor(v, f, g.densities);
        CHECK(next_higher_density(v, f, g.densities) == ref);
        CHECK(table.next[v] == (ref ? *ref : SuccessorTable::none));
    }
}

TEST_CASE("paths") {
    const Matrix chain(5, 1, {0, 1, 2, 4, 5});
    const std::vector<double> rho{0.1, 0.2, 0.3, 0.4, 0.5};
    CHECK(build_path(4, chain, rho, 10.0, 64).nodes == std::vector<std::size_t>{4});
    CHECK(build_path(0, chain, rho, 10.0, 64).nodes == std::vector<std::size_t>{0, 1, 2, 3, 4});
    // The third gap (2 -> 4) exceeds sigma.
    CHECK(build_path(0, chain, rho, 1.5, 64).nodes == std::vector<std::size_t>{0, 1, 2});
    CHECK(build_path(0, chain, rho, 10.0, 2).nodes == std::vector<std::size_t>{0, 1});
    // A gap equal to sigma is still followed.
    CHECK(build_path(0, chain, rho, 1.0, 64).nodes == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("propagation corner cases") {
    std::mt19937_64 rng(1);
    const auto f = oracle::random_matrix(30, 3, rng);
    const auto g = build_knn_graph(f, 5, 1);
    LabelFile truth;
    for (std::size_t i = 0; i < 30; ++i) truth.labels.push_back(i % 3);
    std::vector<std::size_t> all(30);
    std::iota(all.begin(), all.end(), 0);
    const auto full = LabelBank::from_split(truth, all);
    CHECK(propagate(f, g.densities, full, all, {}, {1.0}).bank == full);

    // A unique density peak reachable from everywhere labels everything.
    const auto peak = static_cast<std::size_t>(std::ranges::max_element(g.densities) - g.densities.begin());
    const std::vector<std::size_t> one{peak};
    const auto rest = complement(30, one);
    const auto res = propagate(f, g.densities, LabelBank::from_split(truth, one), one, rest, {1e9});
    for (std::size_t i = 0; i < 30; ++i) CHECK(res.bank[i].label == *truth.labels[peak]);
    CHECK(res.bank.count(LabelState::pseudo) == 29);
    check_same(res.bank, oracle::propagate(f, g.densities, truth, one, 1e9, 64, LabelSource::max_density_labelled));

    // Stale pseudo-labels on unlabelled entries are reset first.
    auto stale = LabelBank::from_split(truth, one);
    for (auto i : rest) stale.set_pseudo(i, 2);
    CHECK(propagate(f, g.densities, stale, one, rest, {1e-9}).bank.count(LabelState::pseudo) == 0);

    // Inconsistent partitions are rejected.
    CHECK_THROWS(propagate(f, g.densities, LabelBank::from_split(truth, one), rest, one, {1.0}));
    CHECK_THROWS(propagate(f, g.densities, LabelBank::from_split(truth, one), one, {}, {1.0}));
}

TEST_CASE("two blobs propagate to blob membership") {
    const auto d = gen_blobs(2, 20, 4, 40.0, 1.0, 3);
    const Matrix f = d.features.to_matrix();
    const auto g = build_knn_graph(f, 5, 1);
    const std::vector<std::size_t> lab{3, 27};
    const auto res = propagate(f, g.densities, LabelBank::from_split(d.labels, lab), lab, complement(40, lab),
                               {15.0, 64, LabelSource::max_density_labelled, 2});
    for (std::size_t i = 0; i < 40; ++i) CHECK(res.bank[i].label == *d.labels.labels[i]);
    check_same(res.bank, oracle::propagate(f, g.densities, d.labels, lab, 15.0, 64, LabelSource::max_density_labelled));
}

TEST_CASE("propagation matches the reference loop") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t m = 60 + seed;
        const auto f = oracle::random_matrix(m, 3, rng);
        const auto g = build_knn_graph(f, 6, 1);
        LabelFile truth;
        for (std::size_t i = 0; i < m; ++i) truth.labels.push_back(rng() % 4);
        std::vector<std::size_t> lab;
        for (std::size_t i = 0; i < m; ++i)
            if (rng() % 5 == 0) lab.push_back(i);
        const double sigma = nn_distance_quantile(f, 0.9, 1);
        for (auto src : {LabelSource::max_density_labelled, LabelSource::origin}) {
            const auto got = propagate(f, g.densities, LabelBank::from_split(truth, lab), lab, complement(m, lab),
                                       {sigma, 8, src, 3});
            check_same(got.bank, oracle::propagate(f, g.densities, truth, lab, sigma, 8, src));
        }
    }
}

TEST_CASE("nearest-neighbor distance quantile") {
    const Matrix line(4, 1, {0, 1, 3, 7});
    // 1-NN distances 1, 1, 2, 4.
    CHECK(nn_distance_quantile(line, 0.0, 1) == 1.0);
    CHECK(nn_distance_quantile(line, 1.0, 1) == 4.0);
    CHECK(nn_distance_quantile(line, 0.5, 1) == doctest::Approx(1.5));
    CHECK(nn_distance_quantile(line, 0.9, 1) == doctest::Approx(3.4));
    CHECK_THROWS(nn_distance_quantile(line, 1.5, 1));
}

TEST_CASE("path-length histogram") {
    const Matrix chain(5, 1, {0, 1, 2, 4, 5});
    const std::vector<double> rho{0.1, 0.2, 0.3, 0.4, 0.5};
    const auto table = successor_table(chain, rho, 1);
    const auto hist = path_length_histogram(table, 1.5, 64);
    // Paths: [0,1,2] [1,2] [2] [3,4] [4].
    CHECK(hist == std::map<std::size_t, std::size_t>{{1, 2}, {2, 2}, {3, 1}});
    oracle::TempDir dir;
    save_histogram({{1, 3}, {4, 1}}, dir / "h.csv");
    CHECK(oracle::slurp(dir / "h.csv") == "1,3\n2,0\n3,0\n4,1\n");
}
