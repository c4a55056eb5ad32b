#include "dag/dplp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace dag {

LabelBank LabelBank::from_split(const LabelFile& truth, std::span<const std::size_t> labelled) {
    LabelBank bank(truth.size());
    for (auto i : labelled) {
        require(i < truth.size(), "LabelBank: labelled index out of range");
        require(truth.labels[i].has_value(), "LabelBank: labelled index " + std::to_string(i) + " has no label");
        bank.set_ground_truth(i, *truth.labels[i]);
    }
    return bank;
}

std::optional<std::size_t> LabelBank::label(std::size_t i) const {
    const auto& e = entries_.at(i);
    if (e.state == LabelState::unlabelled) return std::nullopt;
    return e.label;
}

void LabelBank::set_ground_truth(std::size_t i, std::size_t label) {
    entries_.at(i) = {LabelState::ground_truth, label};
}

void LabelBank::set_pseudo(std::size_t i, std::size_t label) {
    auto& e = entries_.at(i);
    require(e.state != LabelState::ground_truth, "LabelBank: ground-truth entry " + std::to_string(i) + " is fixed");
    e = {LabelState::pseudo, label};
}

void LabelBank::clear(std::size_t i) {
    auto& e = entries_.at(i);
    require(e.state != LabelState::ground_truth, "LabelBank: ground-truth entry " + std::to_string(i) + " is fixed");
    e = {};
}

std::size_t LabelBank::count(LabelState s) const noexcept {
    return static_cast<std::size_t>(std::ranges::count_if(entries_, [s](const auto& e) { return e.state == s; }));
}

LabelFile LabelBank::to_label_file() const {
    LabelFile lf;
    lf.labels.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) lf.labels.push_back(label(i));
    return lf;
}

std::optional<std::size_t> next_higher_density(std::size_t v, const Matrix& features,
                                               std::span<const double> densities) {
    require(v < features.rows() && densities.size() == features.rows(), "next_higher_density: bad node or densities");
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    const auto fv = features.row(v);
    for (std::size_t w = 0; w < features.rows(); ++w) {
        if (!(densities[w] > densities[v])) continue;
        const double d = squared_distance(fv, features.row(w));
        if (d < best_d) {  // strict: the first (smallest) index wins ties
            best_d = d;
            best = w;
        }
    }
    return best;
}

DensityPath build_path(std::size_t u, const Matrix& features, std::span<const double> densities, double sigma,
                       std::size_t l_max) {
    require(sigma > 0.0, "build_path: sigma must be positive");
    require(l_max >= 1, "build_path: l_max must be at least 1");
    DensityPath path;
    path.nodes.push_back(u);
    while (path.size() < l_max) {
        const auto last = path.nodes.back();
        const auto next = next_higher_density(last, features, densities);
        if (!next) break;
        if (std::sqrt(squared_distance(features.row(last), features.row(*next))) > sigma) break;
        path.nodes.push_back(*next);
    }
    return path;
}

SuccessorTable successor_table(const Matrix& features, std::span<const double> densities, std::size_t threads) {
    const std::size_t m = features.rows();
    require(densities.size() == m, "successor_table: one density per node is required");
    SuccessorTable t;
    t.next.assign(m, SuccessorTable::none);
    t.distance.assign(m, std::numeric_limits<double>::infinity());
    parallel_for(m, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t v = b; v < e; ++v) {
            const auto fv = features.row(v);
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = SuccessorTable::none;
            for (std::size_t w = 0; w < m; ++w) {
                if (!(densities[w] > densities[v])) continue;
                const double d = squared_distance(fv, features.row(w));
                if (d < best) {
                    best = d;
                    arg = w;
                }
            }
            t.next[v] = arg;
            t.distance[v] = std::sqrt(best);
        }
    });
    return t;
}

DensityPath follow_path(std::size_t u, const SuccessorTable& table, double sigma, std::size_t l_max) {
    require(sigma > 0.0, "follow_path: sigma must be positive");
    require(l_max >= 1, "follow_path: l_max must be at least 1");
    require(u < table.next.size(), "follow_path: node out of range");
    DensityPath path;
    path.nodes.push_back(u);
    while (path.size() < l_max) {
        const auto last = path.nodes.back();
        const auto next = table.next[last];
        if (next == SuccessorTable::none || table.distance[last] > sigma) break;
        path.nodes.push_back(next);
    }
    return path;
}

PropagationResult propagate(const Matrix& features, std::span<const double> densities, const LabelBank& bank,
                            std::span<const std::size_t> labelled, std::span<const std::size_t> unlabelled,
                            const PropagationOptions& options) {
    const std::size_t m = features.rows();
    require(bank.size() == m && densities.size() == m, "propagate: bank, features and densities disagree on size");

    std::vector<char> role(m, 0);  // 1 labelled, 2 unlabelled
    for (auto i : labelled) {
        if (i >= m || role[i] != 0 || bank[i].state != LabelState::ground_truth)
            fail(ErrorKind::invalid_argument, "propagate: inconsistent labelled index " + std::to_string(i));
        role[i] = 1;
    }
    for (auto i : unlabelled) {
        if (i >= m || role[i] != 0 || bank[i].state == LabelState::ground_truth)
            fail(ErrorKind::invalid_argument, "propagate: inconsistent unlabelled index " + std::to_string(i));
        role[i] = 2;
    }
    if (std::ranges::find(role, 0) != role.end()) fail(ErrorKind::invalid_argument, "propagate: partition is not exhaustive");

    PropagationResult result{bank, 0, 0};
    LabelBank& out = result.bank;
    for (auto i : unlabelled) out.clear(i);
    if (labelled.empty() || unlabelled.empty()) return result;

    const auto table = successor_table(features, densities, options.threads);
    auto path_of = [&](std::size_t u) { return follow_path(u, table, options.sigma, options.l_max); };

    // Labelled origins, densest first.
    std::vector<std::size_t> order(labelled.begin(), labelled.end());
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) {
        return densities[a] > densities[b] || (densities[a] == densities[b] && a < b);
    });
    for (auto origin : order) {
        const auto path = path_of(origin);
        std::size_t label = out[origin].label;
        if (options.label_source == LabelSource::max_density_labelled) {
            for (auto j : path.nodes)
                if (role[j] == 1) label = out[j].label;  // densities ascend, so the last one is the densest
        }
        for (auto j : path.nodes) {
            if (role[j] == 2 && out[j].state == LabelState::unlabelled) {
                out.set_pseudo(j, label);
                ++result.from_labelled;
            }
        }
    }

    // Remaining nodes take the label of the densest labelled node on their
    // path. "Labelled" here is frozen after the first phase: ground truth plus
    // the pseudo-labels it produced.
    const LabelBank frozen = out;
    std::vector<std::size_t> remaining;
    for (auto i : unlabelled)
        if (frozen[i].state == LabelState::unlabelled) remaining.push_back(i);
    std::vector<std::size_t> assigned(remaining.size(), SuccessorTable::none);
    parallel_for(remaining.size(), options.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            const auto path = path_of(remaining[r]);
            for (auto j : path.nodes)
                if (frozen[j].state != LabelState::unlabelled) assigned[r] = frozen[j].label;
        }
    });
    for (std::size_t r = 0; r < remaining.size(); ++r) {
        if (assigned[r] == SuccessorTable::none) continue;
        out.set_pseudo(remaining[r], assigned[r]);
        ++result.from_unlabelled;
    }
    return result;
}

double nn_distance_quantile(const Matrix& features, double q, std::size_t threads) {
    const std::size_t m = features.rows();
    require(m >= 2, "nn_distance_quantile: needs at least two points");
    require(q >= 0.0 && q <= 1.0, "nn_distance_quantile: q must lie in [0, 1]");
    std::vector<double> nn(m);
    parallel_for(m, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t v = b; v < e; ++v) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t w = 0; w < m; ++w)
                if (w != v) best = std::min(best, squared_distance(features.row(v), features.row(w)));
            nn[v] = std::sqrt(best);
        }
    });
    std::ranges::sort(nn);
    const double pos = q * static_cast<double>(m - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, m - 1);
    return nn[lo] + (pos - static_cast<double>(lo)) * (nn[hi] - nn[lo]);
}

std::map<std::size_t, std::size_t> path_length_histogram(const SuccessorTable& table, double sigma,
                                                          std::size_t l_max) {
    std::map<std::size_t, std::size_t> hist;
    for (std::size_t u = 0; u < table.next.size(); ++u) ++hist[follow_path(u, table, sigma, l_max).size()];
    return hist;
}

void save_histogram(const std::map<std::size_t, std::size_t>& histogram, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    const std::size_t longest = histogram.empty() ? 0 : histogram.rbegin()->first;
    for (std::size_t len = 1; len <= longest; ++len) {
        const auto it = histogram.find(len);
        out << len << ',' << (it == histogram.end() ? 0 : it->second) << '\n';
    }
    if (!out) fail(ErrorKind::io, "write failure on " + path.string());
}

}  // namespace dag
