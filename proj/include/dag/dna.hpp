#pragma once

#include "dag/common.hpp"
#include "dag/dense.hpp"
#include "dag/subgraph.hpp"

#include <random>

namespace dag {

// Density-aware neighborhood aggregation.
//
// Every internal tree node u combines its children v as
//
//     f'_u = W (f_u + sum_v a_uv f'_v) + b,
//     a_uv = softmax_v(p_uv + rho_v)      (density_aware)
//     a_uv = softmax_v(p_uv)              (otherwise)
//
// where p_uv is the cosine similarity of the raw features (fresh root
// embedding at depth 0, banked embeddings below) and f'_v is the child's own
// aggregated output, or its banked feature at the leaves. Evaluation runs from
// the deepest level up to the root.

struct DnaParams {
    std::vector<Dense> levels;  // indexed by depth of the aggregating node
    bool density_aware = true;
    bool shared = false;

    std::size_t dim() const noexcept { return levels.empty() ? 0 : levels.front().in; }
    const Dense& at_depth(std::size_t d) const { return shared ? levels.front() : levels.at(d); }
    Dense& at_depth(std::size_t d) { return shared ? levels.front() : levels.at(d); }

    // One parameter set per hop (max(h, 1) sets), or a single shared set.
    // W starts at identity plus U(-0.01, 0.01) noise, b at zero.
    static DnaParams init(std::size_t dim, std::size_t h, bool density_aware, bool shared, std::mt19937_64& rng);
    // Same shapes and flags, all entries zero. Used for gradients.
    DnaParams zeros_like() const;

    friend bool operator==(const DnaParams&, const DnaParams&) = default;
};

// Cosine similarity. Throws on a zero vector.
double similarity(std::span<const double> fu, std::span<const double> fv);

Vector aggregation_weights(std::span<const double> fu, const std::vector<std::span<const double>>& neighbors,
                           std::span<const double> densities, bool density_aware);

Vector aggregate(std::span<const double> fu, const std::vector<std::span<const double>>& neighbor_feats,
                 std::span<const double> weights, const Dense& layer);

struct NodeRecord {
    Vector sum;      // f_u + sum_v a_uv f'_v, the input of the affine map
    Vector output;   // f'_u; equals the raw feature for leaves
    Vector weights;  // over this node's children; empty for leaves
    std::vector<std::size_t> children;  // positions in the next depth, matching `weights`
};

struct AggregationRecord {
    std::size_t depth = 0;
    std::size_t k_sub = 0;
    std::size_t dim = 0;
    bool density_aware = true;
    std::size_t param_sets = 0;
    // nodes[d][i] mirrors node i at depth d of the tree; nodes[0] is the root.
    std::vector<std::vector<NodeRecord>> nodes;
    // Level-1 similarity inputs, needed for the softmax Jacobian at the root.
    Vector root_unit;
    double root_norm = 0.0;
    Matrix child_units;  // k_sub x dim, unit-norm banked features of depth-1 nodes
    Vector child_sims;

    const Vector& output() const { return nodes.front().front().output; }
};

struct DnaForward {
    Vector output;
    AggregationRecord record;
};

DnaForward dna_forward(const SubGraphTree& tree, const FeatureBank& bank, std::span<const double> densities,
                       const DnaParams& params);

struct DnaGradients {
    Vector root_feature;
    DnaParams params;
};

// Gradient of <grad_out, f'_root> with respect to the fresh root feature and
// every W/b. Banked features and densities are constants.
DnaGradients dna_backward(const AggregationRecord& record, const DnaParams& params,
                          std::span<const double> grad_out);
// As above, but adds the parameter gradients onto `grad_params` and returns
// only the root-feature gradient.
Vector dna_backward_into(const AggregationRecord& record, const DnaParams& params,
                         std::span<const double> grad_out, DnaParams& grad_params);

}  // namespace dag
