#pragma once

#include "dag/common.hpp"
#include "dag/dense.hpp"
#include "dag/dna.hpp"
#include "dag/graph.hpp"
#include "dag/subgraph.hpp"

#include <filesystem>
#include <optional>
#include <random>

namespace dag {

inline constexpr double prob_floor = 1e-8;

// Feature extractor and classifier. The backbone is a stack of 0-2 affine
// layers with max(0, x) between consecutive layers; the last backbone layer
// stays linear so embeddings never collapse to the zero vector. Depth 0 is
// the identity and requires input_dim == embed_dim.
struct ModelParams {
    std::vector<Dense> backbone;
    Dense classifier;

    std::size_t input_dim() const noexcept { return backbone.empty() ? classifier.in : backbone.front().in; }
    std::size_t embed_dim() const noexcept { return classifier.in; }
    std::size_t class_count() const noexcept { return classifier.out; }

    static ModelParams init(std::size_t input_dim, std::size_t embed_dim, std::size_t depth,
                            std::size_t class_count, std::mt19937_64& rng);
    ModelParams zeros_like() const;
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Everything that is trained: f_theta, h_phi and the aggregation layer.
struct Network {
    ModelParams model;
    DnaParams dna;

    Network zeros_like() const { return {model.zeros_like(), dna.zeros_like()}; }
    // Flat views over every trainable value, in checkpoint order.
    std::vector<std::span<double>> parameter_views();
    std::vector<std::span<const double>> parameter_views() const;
    std::size_t parameter_count() const;
    friend bool operator==(const Network&, const Network&) = default;
};

struct BackboneCache {
    std::vector<Vector> inputs;  // input of each layer
    std::vector<Vector> pre;     // pre-activation of each layer
};

Vector backbone_forward(std::span<const double> x, const ModelParams& params, BackboneCache* cache = nullptr);
Vector classifier_logits(std::span<const double> f, const ModelParams& params);
Vector classifier_forward(std::span<const double> f, const ModelParams& params);
Vector softmax(std::span<const double> logits);

// Mean clamped negative log-likelihood of the target classes.
double supervised_loss(const std::vector<Vector>& probs, std::span<const std::size_t> targets);

struct RegularizerTerms {
    double entropy = 0.0;  // mean prediction entropy
    double balance = 0.0;  // -(1/n_c) sum_j log(mean prediction of class j)
    double total() const noexcept { return entropy + balance; }
};
RegularizerTerms regularizer_terms(const std::vector<Vector>& probs);
double regularizer(const std::vector<Vector>& probs);

struct LossBreakdown {
    double supervised = 0.0;
    double regularizer = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

// Target of one batch item: a class distribution and a loss weight. Items
// without a target contribute to the regularizer only.
struct SoftTarget {
    Vector distribution;
    double weight = 1.0;
};

struct BatchLoss {
    LossBreakdown loss;
    std::vector<Vector> grad_probs;  // d total / d probs, per item
};

// supervised = sum_i w_i CE(p_i, y_i) / #targeted items; total adds
// lambda * regularizer over every item.
BatchLoss batch_loss(const std::vector<Vector>& probs, const std::vector<std::optional<SoftTarget>>& targets,
                     double lambda);

struct MixedBatch {
    std::vector<Vector> x;
    std::vector<Vector> y;
    std::vector<std::size_t> partner;  // item i was mixed with item partner[i]
    double lambda = 1.0;
};

// x'_i = lambda x_i + (1 - lambda) x_partner(i), likewise for y.
MixedBatch mixup_with(const std::vector<Vector>& x, const std::vector<Vector>& y, double lambda,
                      std::vector<std::size_t> partner);
// lambda ~ Beta(alpha, alpha), partners from a seeded shuffle.
MixedBatch mixup(const std::vector<Vector>& x, const std::vector<Vector>& y, double alpha, std::mt19937_64& rng);

// Where the aggregation layer finds its neighbors. When `fixed_tree` is set
// its structure is reused (with the fresh embedding as root) instead of
// searching the bank.
struct NeighborhoodSource {
    const FeatureBank* bank = nullptr;
    const DensityGraph* graph = nullptr;
    std::size_t k_sub = 0;
    std::size_t h = 0;
    std::vector<std::size_t> exclude;
    const SubGraphTree* fixed_tree = nullptr;
};

struct SampleTrace {
    BackboneCache backbone;
    Vector embedding;
    std::optional<SubGraphTree> tree;
    std::optional<AggregationRecord> record;
    Vector enhanced;  // classifier input
    Vector probs;
};

// backbone -> (sub-graph -> aggregation) -> classifier. Without a source the
// aggregation layer is skipped entirely.
SampleTrace forward_sample(std::span<const double> x, const Network& net, const NeighborhoodSource* source);

// Adds d loss / d parameters for one sample onto `grad`, given d loss / d probs.
void model_backward(const SampleTrace& trace, const Network& net, std::span<const double> grad_probs,
                    Network& grad);

// "DAGP" | u32 version | u64 input_dim, embed_dim, class_count, backbone
// depth, aggregation parameter sets | u32 flags | f32 values in
// parameter_views() order, all little-endian.
inline constexpr std::uint32_t checkpoint_version = 1;
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace dag
