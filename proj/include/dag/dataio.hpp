#pragma once

#include "dag/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace dag {

// Per-sample embeddings as they live on disk: m x d, 32-bit, row-major.
// Construction rejects non-finite values and zero-norm rows, since every
// downstream cosine similarity divides by the row norm.
class FeatureMatrix {
public:
    FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<float> values);

    // Rounds to 32 bits, then validates.
    static FeatureMatrix from_matrix(const Matrix& m);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<const float> row(std::size_t i) const noexcept {
        return {values_.data() + i * cols_, cols_};
    }
    std::span<const float> values() const noexcept { return values_; }

    Matrix to_matrix() const;

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<float> values_;
};

// Class id per sample, std::nullopt meaning unlabelled. Indices are dense in
// [0, size()).
struct LabelFile {
    std::vector<std::optional<std::size_t>> labels;

    std::size_t size() const noexcept { return labels.size(); }
    // One past the largest class id present (0 when nothing is labelled).
    std::size_t class_count() const noexcept;

    friend bool operator==(const LabelFile&, const LabelFile&) = default;
};

struct Dataset {
    FeatureMatrix features;
    LabelFile labels;
};

struct SplitSpec {
    std::size_t labels_per_class = 0;
    std::uint64_t seed = 0;
    std::size_t class_count = 0;
};

struct Split {
    std::vector<std::size_t> labelled;    // ascending
    std::vector<std::size_t> unlabelled;  // ascending
};

// "DAGF" | u32 version=1 | u64 rows | u64 cols | rows*cols f32, little-endian.
inline constexpr std::uint32_t matrix_format_version = 1;
inline constexpr std::size_t matrix_header_bytes = 24;

void save_matrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix load_matrix(const std::filesystem::path& path);

// Text, one "index,label" pair per line; label -1 marks an unlabelled sample.
LabelFile load_labels(const std::filesystem::path& path, std::size_t m);
void save_labels(const LabelFile& labels, const std::filesystem::path& path);

// Isotropic Gaussian blobs, class-major order. Class means are pairwise at
// least `separation` apart; `spread` is the per-coordinate standard deviation.
Dataset gen_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim,
                  double separation, double spread, std::uint64_t seed);

// Concentric 2-D rings; class c lies on radius c + 1 with radial Gaussian
// noise of standard deviation `noise`.
Dataset gen_rings(std::size_t class_count, std::size_t per_class, double noise, std::uint64_t seed);

// Exactly labels_per_class labelled indices per class, sampled with the seed.
// Samples unlabelled in the input always land in the unlabelled set.
Split make_split(const LabelFile& labels, const SplitSpec& spec);

// Moves the last `test_per_class` samples of every class into a second
// dataset. Relative order is preserved on both sides.
std::pair<Dataset, Dataset> hold_out(const Dataset& data, std::size_t test_per_class);

}  // namespace dag
