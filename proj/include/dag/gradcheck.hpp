#pragma once

#include "dag/model.hpp"

#include <cstdint>

namespace dag {

// Central finite differences against the analytic backward pass of the whole
// pipeline: backbone, sub-graph aggregation, classifier and batch loss.
struct GradcheckOptions {
    std::size_t instances = 100;
    std::size_t dim = 16;          // input and embedding width
    std::size_t classes = 4;
    std::size_t k_sub = 4;
    std::size_t bank_size = 40;
    std::size_t k_global = 8;
    std::size_t batch = 3;
    std::size_t backbone_depth = 2;
    bool density_aware = true;
    double lambda = 0.5;
    double step = 1e-5;
    // Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-5;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

struct GradcheckReport {
    std::size_t instances = 0;
    std::size_t parameters = 0;  // partial derivatives compared, summed over instances
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
};

// Instance i uses h = 1 for even i and h = 2 for odd i.
GradcheckReport gradcheck(const GradcheckOptions& options);

}  // namespace dag
