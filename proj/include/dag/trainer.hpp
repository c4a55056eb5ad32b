#pragma once

#include "dag/common.hpp"
#include "dag/dataio.hpp"
#include "dag/dplp.hpp"
#include "dag/graph.hpp"
#include "dag/model.hpp"
#include "dag/subgraph.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace dag {

enum class SigmaPolicy { quantile, absolute };

// Every free hyperparameter of a run. The key-value config file uses these
// field names verbatim.
struct TrainConfig {
    // graph and aggregation
    std::size_t k_global = 64;
    std::size_t k_sub = 8;
    std::size_t h = 1;
    bool density_aware = true;
    bool share_dna_params = false;
    // propagation
    bool propagation = true;
    SigmaPolicy sigma_policy = SigmaPolicy::quantile;
    double sigma_quantile = 0.9;
    double sigma = 1.0;  // used when sigma_policy == absolute
    std::size_t l_max = 64;
    LabelSource label_source = LabelSource::max_density_labelled;
    // loss
    double lambda = 1.0;
    double pseudo_weight = 1.0;
    bool include_unlabelled = false;
    bool mixup = false;
    double mixup_alpha = 1.0;
    // model
    std::size_t embed_dim = 32;
    std::size_t backbone_depth = 1;
    // schedule
    std::size_t warmup_epochs = 10;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    std::optional<std::size_t> iterations;  // per epoch; default ceil(m / batch_size)
    double lr = 0.05;
    std::vector<std::size_t> lr_milestones;
    double lr_decay = 0.1;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    std::size_t threads = 0;

    void validate() const;
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
// key = value lines, parseable by parse_config.
std::string format_config(const TrainConfig& config);

// Step schedule: lr * lr_decay^(number of milestones <= epoch).
double learning_rate(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double sigma = 0.0;
    std::size_t iterations = 0;
    double loss_supervised = 0.0;
    double loss_regularizer = 0.0;
    double loss_total = 0.0;
    std::size_t ground_truth = 0;
    std::size_t pseudo_labels = 0;
    std::optional<double> pseudo_accuracy;
    std::optional<double> test_error;
};

struct RunLog {
    std::string config;  // format_config echo
    std::uint64_t seed = 0;
    std::size_t graph_builds = 0;
    std::size_t propagation_passes = 0;
    std::vector<EpochRecord> epochs;

    // Line-delimited JSON: one "run" record, then one "epoch" record per epoch.
    std::string to_jsonl() const;
};

// Training-set view shared by every stage.
struct TrainData {
    Matrix x;
    Split split;
    LabelBank labels;                  // ground truth for split.labelled only
    std::optional<LabelFile> truth;    // full labels, for logging pseudo-label accuracy
};

TrainData make_train_data(const Matrix& x, const LabelFile& labels, const Split& split);

struct TestData {
    Matrix x;
    LabelFile labels;
};

Network initial_network(std::size_t input_dim, std::size_t class_count, const TrainConfig& config);

// Supervised-only epochs on the labelled samples, no aggregation and no
// propagation.
Network warmup(const TrainData& data, const TrainConfig& config, Network net);

// Bank row i is the backbone embedding of sample i (before aggregation).
FeatureBank init_banks(const Network& net, const Matrix& x, std::size_t epoch, std::size_t threads = 0);

struct TrainState {
    Network net;
    Network velocity;
    FeatureBank bank;
    DensityGraph graph;
    LabelBank labels;
    std::size_t epoch = 0;
};

struct EpochStats {
    std::size_t iterations = 0;
    LossBreakdown mean_loss;
};

// One pass of batch updates against the current banks and graph.
EpochStats train_epoch(TrainState& state, const TrainData& data, const TrainConfig& config);

struct EvalMetrics {
    std::size_t samples = 0;
    std::size_t errors = 0;
    double error_rate = 0.0;
    std::vector<std::size_t> predictions;
};

// Test samples aggregate over neighbors retrieved from the training bank.
EvalMetrics evaluate(const Network& net, const FeatureBank& bank, const DensityGraph& graph, const TestData& test,
                     const TrainConfig& config);

struct TrainResult {
    Network net;
    FeatureBank bank;
    DensityGraph graph;
    LabelBank labels;
    RunLog log;
};

TrainResult train(const TrainData& data, const TrainConfig& config, const TestData* test = nullptr);

// Baseline (no aggregation, no propagation), DNA only, DPLP only, and DAG.
enum class AblationCell { baseline, dna, dplp, dag };
std::string_view cell_name(AblationCell cell);
TrainConfig configure_cell(TrainConfig config, AblationCell cell);

struct AblationRow {
    AblationCell cell;
    std::vector<double> errors;  // one per seed
    double mean = 0.0;
    double stddev = 0.0;
};

// For every seed: split with that seed, train each cell with that seed,
// evaluate on `test`.
std::vector<AblationRow> run_ablation(const Matrix& x, const LabelFile& labels, const TestData& test,
                                      std::size_t labels_per_class, std::span<const std::uint64_t> seeds,
                                      const TrainConfig& config);
std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace dag
