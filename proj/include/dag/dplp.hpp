#pragma once

#include "dag/common.hpp"
#include "dag/dataio.hpp"

#include <filesystem>
#include <map>
#include <optional>

namespace dag {

enum class LabelState { unlabelled, ground_truth, pseudo };

struct LabelEntry {
    LabelState state = LabelState::unlabelled;
    std::size_t label = 0;  // meaningful unless unlabelled
    friend bool operator==(const LabelEntry&, const LabelEntry&) = default;
};

// Per-sample label state. Ground-truth entries are fixed at construction.
class LabelBank {
public:
    LabelBank() = default;
    explicit LabelBank(std::size_t size) : entries_(size) {}
    // Ground truth for `labelled`, unlabelled everywhere else.
    static LabelBank from_split(const LabelFile& truth, std::span<const std::size_t> labelled);

    std::size_t size() const noexcept { return entries_.size(); }
    const LabelEntry& operator[](std::size_t i) const { return entries_.at(i); }
    std::optional<std::size_t> label(std::size_t i) const;

    void set_ground_truth(std::size_t i, std::size_t label);
    // Throws when `i` holds ground truth.
    void set_pseudo(std::size_t i, std::size_t label);
    void clear(std::size_t i);

    std::size_t count(LabelState s) const noexcept;
    // Ground-truth and pseudo labels; unlabelled entries map to -1 on disk.
    LabelFile to_label_file() const;

    friend bool operator==(const LabelBank&, const LabelBank&) = default;

private:
    std::vector<LabelEntry> entries_;
};

enum class LabelSource {
    max_density_labelled,  // label of the highest-density labelled node on the path
    origin,                // label of the labelled node the path starts from
};

// Successor on a density-ascending path: the nearest (Euclidean) node of
// strictly higher density, ties to the smaller index.
std::optional<std::size_t> next_higher_density(std::size_t v, const Matrix& features,
                                               std::span<const double> densities);

struct DensityPath {
    std::vector<std::size_t> nodes;
    std::size_t size() const noexcept { return nodes.size(); }
};

DensityPath build_path(std::size_t u, const Matrix& features, std::span<const double> densities, double sigma,
                       std::size_t l_max);

// Every node's successor and the distance to it, computed once and shared by
// all paths over the same features.
struct SuccessorTable {
    static constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::vector<std::size_t> next;
    std::vector<double> distance;
};

SuccessorTable successor_table(const Matrix& features, std::span<const double> densities, std::size_t threads = 0);
DensityPath follow_path(std::size_t u, const SuccessorTable& table, double sigma, std::size_t l_max);

struct PropagationOptions {
    double sigma = 1.0;
    std::size_t l_max = 64;
    LabelSource label_source = LabelSource::max_density_labelled;
    std::size_t threads = 0;
};

struct PropagationResult {
    LabelBank bank;
    std::size_t from_labelled = 0;    // pseudo-labels set while walking from labelled origins
    std::size_t from_unlabelled = 0;  // pseudo-labels set while walking from the remaining nodes
};

// Label propagation along density-ascending paths. Entries listed in
// `unlabelled` are reset before propagation; ground truth is never touched.
PropagationResult propagate(const Matrix& features, std::span<const double> densities, const LabelBank& bank,
                            std::span<const std::size_t> labelled, std::span<const std::size_t> unlabelled,
                            const PropagationOptions& options);

// q-quantile (linear interpolation) of the 1-nearest-neighbor Euclidean
// distances.
double nn_distance_quantile(const Matrix& features, double q, std::size_t threads = 0);

// Length -> number of nodes whose path has that length, over all nodes.
std::map<std::size_t, std::size_t> path_length_histogram(const SuccessorTable& table, double sigma,
                                                          std::size_t l_max);

// "length,count" lines for every length from 1 to the longest observed.
void save_histogram(const std::map<std::size_t, std::size_t>& histogram, const std::filesystem::path& path);

}  // namespace dag
