#include "dag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace dag {

namespace {

constexpr std::size_t query_block = 64;

struct Candidate {
    double sim;
    std::size_t index;
};

// Descending similarity, then ascending index: a strict total order.
constexpr bool ranks_before(const Candidate& a, const Candidate& b) noexcept {
    return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
}

}  // namespace

Matrix l2_normalize(const Matrix& f) {
    Matrix out = f;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        const double n = norm(r);
        if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::numeric, "cannot normalize row " + std::to_string(i));
        for (auto& v : r) v /= n;
    }
    return out;
}

DensityGraph build_knn_graph(const Matrix& f, std::size_t k, std::size_t threads) {
    const std::size_t m = f.rows();
    require(k >= 1, "build_knn_graph: k must be at least 1");
    require(k < m, "build_knn_graph: k=" + std::to_string(k) + " must be below the node count " + std::to_string(m));
    const Matrix unit = l2_normalize(f);

    DensityGraph g;
    g.k = k;
    g.neighbors.resize(m * k);
    g.sims.resize(m * k);

    const std::size_t blocks = (m + query_block - 1) / query_block;
    parallel_for(blocks, threads, [&](std::size_t b0, std::size_t b1) {
        std::vector<double> block_sims(query_block * m);
        std::vector<Candidate> cand;
        cand.reserve(m);
        for (std::size_t b = b0; b < b1; ++b) {
            const std::size_t q0 = b * query_block;
            const std::size_t q1 = std::min(m, q0 + query_block);
            // Bank row outer, query inner: each bank row is read once per block.
            for (std::size_t j = 0; j < m; ++j) {
                const auto rj = unit.row(j);
                for (std::size_t q = q0; q < q1; ++q) block_sims[(q - q0) * m + j] = dot(unit.row(q), rj);
            }
            for (std::size_t q = q0; q < q1; ++q) {
                cand.clear();
                const double* row = block_sims.data() + (q - q0) * m;
                for (std::size_t j = 0; j < m; ++j)
                    if (j != q) cand.push_back({row[j], j});
                std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                                  ranks_before);
                for (std::size_t t = 0; t < k; ++t) {
                    g.neighbors[q * k + t] = cand[t].index;
                    g.sims[q * k + t] = cand[t].sim;
                }
            }
        }
    });
    g.densities = compute_densities(g.sims, k);
    return g;
}

std::vector<double> compute_densities(std::span<const double> sims, std::size_t k) {
    require(k >= 1, "compute_densities: empty neighbor list");
    require(sims.size() % k == 0, "compute_densities: similarity count is not a multiple of k");
    std::vector<double> rho(sims.size() / k);
    for (std::size_t u = 0; u < rho.size(); ++u) {
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += sims[u * k + t];
        rho[u] = s / static_cast<double>(k);
    }
    return rho;
}

void save_densities(std::span<const double> densities, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    char buf[64];
    for (std::size_t i = 0; i < densities.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", densities[i]);
        out << i << ',' << buf << '\n';
    }
    if (!out) fail(ErrorKind::io, "write failure on " + path.string());
}

}  // namespace dag
