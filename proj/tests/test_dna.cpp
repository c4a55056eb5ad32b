#include "doctest.h"
#include "oracles.hpp"

#include "dag/dna.hpp"
#include "dag/graph.hpp"

#include <cmath>

using namespace dag;

namespace {

DnaParams random_params(std::size_t dim, std::size_t h, bool density_aware, bool shared, std::mt19937_64& rng) {
    auto p = DnaParams::init(dim, h, density_aware, shared, rng);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& l : p.levels) {
        for (auto& v : l.w) v += n(rng);
        for (auto& v : l.b) v = n(rng);
    }
    return p;
}

struct Fixture {
    Matrix m;
    FeatureBank bank;
    DensityGraph graph;
};

Fixture fixture(std::size_t rows, std::size_t dim, std::size_t k, std::mt19937_64& rng) {
    Fixture f{oracle::random_matrix(rows, dim, rng), {}, {}};
    f.bank = FeatureBank(f.m);
    f.graph = build_knn_graph(f.m, k, 1);
    return f;
}

}  // namespace

TEST_CASE("similarity") {
    CHECK(similarity(Vector{1, 2}, Vector{2, 4}) == doctest::Approx(1.0));
    CHECK(similarity(Vector{1, 0}, Vector{0, 5}) == doctest::Approx(0.0));
    CHECK(std::abs(similarity(Vector{3, 0}, Vector{1, 1}) - 0.70710678) < 1e-8);
    CHECK_THROWS(similarity(Vector{0, 0}, Vector{1, 1}));
}

TEST_CASE("aggregation weights") {
    const Vector fu{1, 0};
    const Vector a{1, 1}, b{2, 3};
    std::vector<std::span<const double>> one{a};
    CHECK(aggregation_weights(fu, one, std::vector<double>{0.3}, true) == Vector{1.0});

    // Two neighbors at equal similarity 0.5 with densities 0.9 and 0.3.
    const Vector fx{1, 0, 0};
    const Vector n1{0.5, std::sqrt(0.75), 0}, n2{0.5, 0, std::sqrt(0.75)};
    std::vector<std::span<const double>> two{n1, n2};
    const auto w = aggregation_weights(fx, two, std::vector<double>{0.9, 0.3}, true);
    CHECK(std::abs(w[0] - 0.64565631) < 1e-6);
    CHECK(std::abs(w[1] - 0.35434369) < 1e-6);
    const auto plain = aggregation_weights(fx, two, std::vector<double>{0.9, 0.3}, false);
    CHECK(plain[0] == doctest::Approx(0.5));
    CHECK(plain[1] == doctest::Approx(0.5));
}

TEST_CASE("aggregate") {
    const Vector fu{1, -2, 3};
    Dense id(3, 3);
    for (std::size_t i = 0; i < 3; ++i) id.w[i * 3 + i] = 1.0;
    std::vector<std::span<const double>> self{fu};
    const auto twice = aggregate(fu, self, Vector{1.0}, id);
    CHECK(twice == Vector{2, -4, 6});

    Dense zero(3, 3);
    zero.b = {0.5, -1, 2};
    const Vector other{9, 9, 9};
    std::vector<std::span<const double>> nb{other, fu};
    CHECK(aggregate(fu, nb, Vector{0.3, 0.7}, zero) == zero.b);

    // Random 4-D case against a direct evaluation.
    std::mt19937_64 rng(4);
    const auto feats = oracle::random_matrix(4, 4, rng);
    Dense layer(4, 4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : layer.w) v = n(rng);
    for (auto& v : layer.b) v = n(rng);
    std::vector<std::span<const double>> nbs{feats.row(1), feats.row(2), feats.row(3)};
    const Vector wts{0.2, 0.5, 0.3};
    const auto got = aggregate(feats.row(0), nbs, wts, layer);
    for (std::size_t r = 0; r < 4; ++r) {
        double s = layer.b[r];
        for (std::size_t c = 0; c < 4; ++c) {
            const double x = feats(0, c) + 0.2 * feats(1, c) + 0.5 * feats(2, c) + 0.3 * feats(3, c);
            s += layer.w[r * 4 + c] * x;
        }
        CHECK(std::abs(got[r] - s) < 1e-7);
    }
}

TEST_CASE("forward over trees") {
    std::mt19937_64 rng(9);
    auto fx = fixture(40, 6, 5, rng);
    const Vector f{0.3, -1, 2, 0.5, 0.1, -0.7};

    // h = 0 with the identity map returns the root feature.
    auto id = DnaParams::init(6, 0, true, false, rng);
    for (auto& v : id.levels[0].w) v = 0.0;
    for (std::size_t i = 0; i < 6; ++i) id.levels[0].w[i * 6 + i] = 1.0;
    const auto t0 = sample_subgraph(f, {}, fx.bank, fx.graph, 3, 0);
    CHECK(dna_forward(t0, fx.bank, fx.graph.densities, id).output == f);

    // h = 1 is one aggregate call.
    const auto p1 = random_params(6, 1, true, false, rng);
    const auto t1 = sample_subgraph(f, {}, fx.bank, fx.graph, 4, 1);
    std::vector<std::span<const double>> nb;
    std::vector<double> rho;
    for (const auto& n : t1.levels[0]) {
        nb.push_back(fx.bank.row(n.bank_index));
        rho.push_back(fx.graph.densities[n.bank_index]);
    }
    const auto direct = aggregate(f, nb, aggregation_weights(f, nb, rho, true), p1.levels[0]);
    CHECK(dna_forward(t1, fx.bank, fx.graph.densities, p1).output == direct);

    // h = 2 against the recursive reference, with per-hop and shared sets.
    for (bool shared : {false, true}) {
        for (bool aware : {true, false}) {
            const auto p2 = random_params(6, 2, aware, shared, rng);
            const auto t2 = sample_subgraph(f, {}, fx.bank, fx.graph, 3, 2);
            const auto got = dna_forward(t2, fx.bank, fx.graph.densities, p2).output;
            const auto ref = oracle::dna_reference(t2, fx.bank, fx.graph.densities, p2);
            for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(got[j] - ref[j]) < 1e-6);
        }
    }
    CHECK(random_params(6, 3, true, false, rng).levels.size() == 3);
    CHECK(random_params(6, 3, true, true, rng).levels.size() == 1);
    CHECK(DnaParams::init(6, 0, true, false, rng).levels.size() == 1);
}

TEST_CASE("backward") {
    std::mt19937_64 rng(12);
    auto fx = fixture(40, 5, 4, rng);
    const Vector f{0.4, 1, -0.3, 0.8, -1.2};
    const auto p = random_params(5, 2, true, false, rng);
    const auto tree = sample_subgraph(f, {}, fx.bank, fx.graph, 3, 2);
    const auto fwd = dna_forward(tree, fx.bank, fx.graph.densities, p);

    const auto zero = dna_backward(fwd.record, p, Vector(5, 0.0));
    for (double v : zero.root_feature) CHECK(v == 0.0);
    for (const auto& l : zero.params.levels) {
        for (double v : l.w) CHECK(v == 0.0);
        for (double v : l.b) CHECK(v == 0.0);
    }

    // The output bias receives the upstream gradient unchanged.
    const Vector g{0.5, -1, 2, 0.25, 3};
    const auto grads = dna_backward(fwd.record, p, g);
    CHECK(grads.params.levels[0].b == g);

    // Every partial against central differences of <g, output>.
    auto objective = [&](const Vector& root, const DnaParams& q) {
        auto t = tree;
        t.root_feature = root;
        const auto out = dna_forward(t, fx.bank, fx.graph.densities, q).output;
        return dot(out, g);
    };
    const double h = 1e-5;
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-5}); };
    for (std::size_t j = 0; j < 5; ++j) {
        Vector up = f, down = f;
        up[j] += h;
        down[j] -= h;
        CHECK(rel(grads.root_feature[j], (objective(up, p) - objective(down, p)) / (2 * h)) < 1e-4);
    }
    for (std::size_t l = 0; l < p.levels.size(); ++l) {
        for (std::size_t j = 0; j < p.levels[l].w.size(); ++j) {
            auto up = p, down = p;
            up.levels[l].w[j] += h;
            down.levels[l].w[j] -= h;
            CHECK(rel(grads.params.levels[l].w[j], (objective(f, up) - objective(f, down)) / (2 * h)) < 1e-4);
        }
    }

    // A record from a different parameter layout is rejected.
    const auto other = random_params(5, 1, true, false, rng);
    CHECK_THROWS(dna_backward(fwd.record, other, g));
}
