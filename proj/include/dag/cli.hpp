#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dag::cli {

enum ExitStatus : int { exit_ok = 0, exit_usage = 2, exit_data = 3, exit_check = 4 };

// Parsed flags of one subcommand. Fields a command does not use keep their
// defaults.
struct Command {
    std::string name;  // gen, train, eval, propagate, density, paths, gradcheck, ablate
    // Unset flags fall back to the config file (train, ablate) or to zero.
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;

    // gen
    std::string kind = "blobs";
    std::size_t classes = 4;
    std::size_t per_class = 500;
    std::size_t dim = 32;
    double separation = 4.0;
    double spread = 1.0;
    double noise = 0.05;
    std::size_t test_per_class = 0;

    // inputs and outputs
    std::filesystem::path config;
    std::filesystem::path features;
    std::filesystem::path labels;
    std::filesystem::path test_features;
    std::filesystem::path test_labels;
    std::filesystem::path checkpoint;
    std::filesystem::path bank;
    std::filesystem::path out;

    // graph and propagation
    std::size_t k = 64;
    std::optional<double> sigma;  // absolute; otherwise the quantile policy
    double sigma_quantile = 0.9;
    std::size_t l_max = 64;
    std::string label_source = "max_density_labelled";

    // training and ablation
    std::optional<std::size_t> labels_per_class;
    std::size_t seeds = 5;

    // gradcheck
    std::size_t instances = 100;
    double tolerance = 1e-4;
};

struct ParseResult {
    std::optional<Command> command;  // empty when parsing ends the program
    int status = exit_ok;
    std::string message;             // help text or usage error
};

ParseResult parse_args(const std::vector<std::string>& args);

// Runs a parsed command; progress goes to `out`, failures to `err`.
int run(const Command& cmd, std::ostream& out, std::ostream& err);

// parse_args + run.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dag::cli
