#include "dag/subgraph.hpp"

#include <algorithm>
#include <cmath>

namespace dag {

FeatureBank::FeatureBank(Matrix features, std::size_t epoch) : features_(std::move(features)), epoch_(epoch) {
    norms_.resize(features_.rows());
    for (std::size_t i = 0; i < features_.rows(); ++i) {
        norms_[i] = norm(features_.row(i));
        if (!(norms_[i] > 0.0) || !std::isfinite(norms_[i]))
            fail(ErrorKind::numeric, "feature bank row " + std::to_string(i) + " has no direction");
    }
}

std::vector<Neighbor> query_neighbors(std::span<const double> f, const FeatureBank& bank, std::size_t k,
                                      std::span<const std::size_t> exclude) {
    require(bank.size() > 0, "query_neighbors: empty bank");
    require(f.size() == bank.dim(), "query_neighbors: query dimension does not match the bank");
    std::size_t excluded = 0;
    for (auto e : exclude)
        if (e < bank.size()) ++excluded;
    require(k <= bank.size() - excluded, "query_neighbors: k exceeds the number of candidates");
    const double fn = norm(f);
    if (!(fn > 0.0) || !std::isfinite(fn)) fail(ErrorKind::numeric, "query_neighbors: query has no direction");

    std::vector<Neighbor> cand;
    cand.reserve(bank.size());
    for (std::size_t j = 0; j < bank.size(); ++j) {
        if (std::ranges::find(exclude, j) != exclude.end()) continue;
        cand.push_back({j, dot(f, bank.row(j)) / (fn * bank.norm_of(j))});
    }
    const auto before = [](const Neighbor& a, const Neighbor& b) {
        return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
    };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), before);
    cand.resize(k);
    return cand;
}

std::size_t SubGraphTree::node_count() const noexcept {
    std::size_t n = 1;
    for (const auto& l : levels) n += l.size();
    return n;
}

SubGraphTree sample_subgraph(std::span<const double> f, std::span<const std::size_t> exclude,
                             const FeatureBank& bank, const DensityGraph& graph, std::size_t k_sub,
                             std::size_t h) {
    SubGraphTree tree;
    tree.root_feature.assign(f.begin(), f.end());
    tree.k_sub = k_sub;
    if (h == 0) return tree;
    require(k_sub >= 1, "sample_subgraph: k_sub must be at least 1");
    require(graph.size() == bank.size(), "sample_subgraph: graph and bank disagree on the sample count");
    require(h == 1 || k_sub <= graph.k, "sample_subgraph: k_sub exceeds the global graph's k");

    tree.levels.reserve(h);
    auto& first = tree.levels.emplace_back();
    for (const auto& nb : query_neighbors(f, bank, k_sub, exclude)) first.push_back({nb.index, 0});

    for (std::size_t d = 1; d < h; ++d) {
        const auto& prev = tree.levels[d - 1];
        std::vector<TreeNode> next;
        next.reserve(prev.size() * k_sub);
        for (std::size_t p = 0; p < prev.size(); ++p) {
            const auto nbrs = graph.neighbors_of(prev[p].bank_index);
            for (std::size_t t = 0; t < k_sub; ++t) next.push_back({nbrs[t], p});
        }
        tree.levels.push_back(std::move(next));
    }
    return tree;
}

}  // namespace dag
