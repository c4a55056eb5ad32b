#include "doctest.h"
#include "oracles.hpp"

#include "dag/graph.hpp"

#include <cmath>

using namespace dag;

TEST_CASE("l2 normalization") {
    Matrix m(3, 2, {3, 4, 0.6, 0.8, 2, 0});
    const auto n = l2_normalize(m);
    CHECK(n(0, 0) == doctest::Approx(0.6));
    CHECK(n(0, 1) == doctest::Approx(0.8));
    CHECK(n(1, 0) == doctest::Approx(0.6));
    CHECK(n(2, 0) == 1.0);
    CHECK(n(2, 1) == 0.0);
    CHECK_THROWS_AS(l2_normalize(Matrix(1, 2, {0, 0})), Error);
}

TEST_CASE("tie breaking and self exclusion") {
    // e1, e1, e2 with k=1.
    const Matrix f(3, 2, {1, 0, 1, 0, 0, 1});
    const auto g = build_knn_graph(f, 1, 1);
    CHECK(g.neighbors_of(0)[0] == 1);
    CHECK(g.sims_of(0)[0] == doctest::Approx(1.0));
    CHECK(g.neighbors_of(1)[0] == 0);
    CHECK(g.neighbors_of(2)[0] == 0);
    CHECK(g.sims_of(2)[0] == doctest::Approx(0.0));
    CHECK_THROWS(build_knn_graph(f, 3, 1));
    CHECK_THROWS(build_knn_graph(f, 0, 1));
}

TEST_CASE("graph matches a full scan") {
    std::mt19937_64 rng(21);
    const auto f = oracle::random_matrix(300, 16, rng);
    const auto g = build_knn_graph(f, 16, 3);
    const auto ref = oracle::knn(f, 16);
    for (std::size_t u = 0; u < f.rows(); ++u) {
        const auto nb = g.neighbors_of(u);
        CHECK(std::vector<std::size_t>(nb.begin(), nb.end()) == ref.neighbors[u]);
        CHECK(std::ranges::find(nb, u) == nb.end());
        CHECK(std::abs(g.densities[u] - ref.densities[u]) < 1e-12);
    }
    // Thread count does not change the result.
    const auto g1 = build_knn_graph(f, 16, 1);
    CHECK(g1.neighbors == g.neighbors);
    CHECK(g1.sims == g.sims);
}

TEST_CASE("densities") {
    const Matrix same(4, 3, {1, 2, 3, 2, 4, 6, 0.5, 1, 1.5, 3, 6, 9});
    for (double r : build_knn_graph(same, 2, 1).densities) CHECK(r == doctest::Approx(1.0));

    // Node 0 has only orthogonal neighbors.
    const Matrix orth(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(build_knn_graph(orth, 2, 1).densities[0] == doctest::Approx(0.0));

    const Matrix five(5, 2, {1, 0, 1, 1, 0, 1, -1, 1, 2, 1});
    const auto g = build_knn_graph(five, 2, 1);
    const auto ref = oracle::knn(five, 2);
    for (std::size_t u = 0; u < 5; ++u) CHECK(std::abs(g.densities[u] - ref.densities[u]) < 1e-6);

    const std::vector<double> sims{1.0, 0.5, 0.2, 0.0};
    CHECK(compute_densities(sims, 2) == std::vector<double>{0.75, 0.1});
    CHECK_THROWS(compute_densities(sims, 3));
}

TEST_CASE("density export") {
    oracle::TempDir dir;
    save_densities(std::vector<double>{0.25, 1.0}, dir / "d.csv");
    CHECK(oracle::slurp(dir / "d.csv") == "0,0.25\n1,1\n");
}
