#pragma once

#include "dag/common.hpp"

#include <filesystem>

namespace dag {

// Global cosine k-NN graph with per-node density. Immutable once built.
struct DensityGraph {
    std::size_t k = 0;
    std::vector<std::size_t> neighbors;  // size() * k, each list by descending similarity
    std::vector<double> sims;            // cosine similarities matching `neighbors`
    std::vector<double> densities;       // mean of each node's similarity list

    std::size_t size() const noexcept { return densities.size(); }
    std::span<const std::size_t> neighbors_of(std::size_t u) const noexcept {
        return {neighbors.data() + u * k, k};
    }
    std::span<const double> sims_of(std::size_t u) const noexcept { return {sims.data() + u * k, k}; }
};

// Rows scaled to unit Euclidean norm. Throws on a zero row.
Matrix l2_normalize(const Matrix& f);

// Exact top-k cosine neighbors of every row (self excluded). Ties go to the
// smaller index, so the result is identical for any worker count.
DensityGraph build_knn_graph(const Matrix& f, std::size_t k, std::size_t threads = 0);

// Mean similarity per node, given row-major per-node similarity lists of
// length k.
std::vector<double> compute_densities(std::span<const double> sims, std::size_t k);

// "index,density" text, one node per line.
void save_densities(std::span<const double> densities, const std::filesystem::path& path);

}  // namespace dag
