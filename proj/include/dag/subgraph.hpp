#pragma once

#include "dag/common.hpp"
#include "dag/graph.hpp"

#include <optional>

namespace dag {

// Banked embeddings for every training sample plus their L2 norms.
class FeatureBank {
public:
    FeatureBank() = default;
    explicit FeatureBank(Matrix features, std::size_t epoch = 0);

    std::size_t size() const noexcept { return features_.rows(); }
    std::size_t dim() const noexcept { return features_.cols(); }
    std::size_t epoch() const noexcept { return epoch_; }
    const Matrix& features() const noexcept { return features_; }
    std::span<const double> row(std::size_t i) const noexcept { return features_.row(i); }
    double norm_of(std::size_t i) const noexcept { return norms_[i]; }

private:
    Matrix features_;
    std::vector<double> norms_;
    std::size_t epoch_ = 0;
};

struct Neighbor {
    std::size_t index;
    double sim;
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Top-k bank rows by cosine similarity to `f`, ties to the smaller index.
// Rows listed in `exclude` are skipped (the query's own bank slot during
// training; nothing at test time).
std::vector<Neighbor> query_neighbors(std::span<const double> f, const FeatureBank& bank, std::size_t k,
                                      std::span<const std::size_t> exclude = {});

struct TreeNode {
    std::size_t bank_index;
    std::size_t parent;  // position in the previous level; 0 (the root) for level 1
};

// Depth-h, fan-out-k_sub tree rooted at a fresh embedding. levels[0] holds
// depth-1 nodes. Node i of a level owns children [i*k_sub, (i+1)*k_sub) of
// the next level.
struct SubGraphTree {
    Vector root_feature;
    std::size_t k_sub = 0;
    std::vector<std::vector<TreeNode>> levels;

    std::size_t depth() const noexcept { return levels.size(); }
    std::size_t node_count() const noexcept;
};

SubGraphTree sample_subgraph(std::span<const double> f, std::span<const std::size_t> exclude,
                             const FeatureBank& bank, const DensityGraph& graph, std::size_t k_sub,
                             std::size_t h);

}  // namespace dag
