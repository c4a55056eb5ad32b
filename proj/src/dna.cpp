#include "dag/dna.hpp"

#include <algorithm>
#include <cmath>

namespace dag {

namespace {

Vector softmax(std::span<const double> logits) {
    const double top = *std::ranges::max_element(logits);
    Vector out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

double checked_norm(std::span<const double> f) {
    const double n = norm(f);
    if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::numeric, "cosine similarity of a zero vector");
    return n;
}

// children[d][i] lists positions (in depth d+1) of the children of node i at depth d.
std::vector<std::vector<std::vector<std::size_t>>> child_lists(const SubGraphTree& tree) {
    const std::size_t h = tree.depth();
    std::vector<std::vector<std::vector<std::size_t>>> children(h);
    for (std::size_t d = 0; d < h; ++d) {
        const std::size_t parents = d == 0 ? 1 : tree.levels[d - 1].size();
        children[d].resize(parents);
        for (std::size_t c = 0; c < tree.levels[d].size(); ++c) {
            const auto p = tree.levels[d][c].parent;
            require(p < parents, "dna_forward: dangling parent pointer");
            children[d][p].push_back(c);
        }
    }
    return children;
}

}  // namespace

DnaParams DnaParams::init(std::size_t dim, std::size_t h, bool density_aware, bool shared, std::mt19937_64& rng) {
    require(dim > 0, "DnaParams::init: dimension must be positive");
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    DnaParams p;
    p.density_aware = density_aware;
    p.shared = shared;
    const std::size_t sets = shared ? 1 : std::max<std::size_t>(h, 1);
    for (std::size_t s = 0; s < sets; ++s) {
        Dense layer(dim, dim);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) layer.w[i * dim + j] = (i == j ? 1.0 : 0.0) + noise(rng);
        p.levels.push_back(std::move(layer));
    }
    return p;
}

DnaParams DnaParams::zeros_like() const {
    DnaParams z = *this;
    for (auto& l : z.levels) {
        std::ranges::fill(l.w, 0.0);
        std::ranges::fill(l.b, 0.0);
    }
    return z;
}

double similarity(std::span<const double> fu, std::span<const double> fv) {
    require(fu.size() == fv.size(), "similarity: dimension mismatch");
    return dot(fu, fv) / (checked_norm(fu) * checked_norm(fv));
}

Vector aggregation_weights(std::span<const double> fu, const std::vector<std::span<const double>>& neighbors,
                           std::span<const double> densities, bool density_aware) {
    require(!neighbors.empty(), "aggregation_weights: empty neighbor set");
    require(!density_aware || densities.size() == neighbors.size(),
            "aggregation_weights: one density per neighbor is required");
    Vector sims(neighbors.size());
    for (std::size_t i = 0; i < neighbors.size(); ++i) sims[i] = similarity(fu, neighbors[i]);
    if (!density_aware) return softmax(sims);
    // Each term is shifted by its own maximum, so equal densities cancel
    // exactly and the result matches the plain similarity softmax bit for bit.
    const double top_sim = *std::ranges::max_element(sims);
    const double top_rho = *std::ranges::max_element(densities);
    Vector logits(sims.size());
    for (std::size_t i = 0; i < sims.size(); ++i) logits[i] = (sims[i] - top_sim) + (densities[i] - top_rho);
    return softmax(logits);
}

Vector aggregate(std::span<const double> fu, const std::vector<std::span<const double>>& neighbor_feats,
                 std::span<const double> weights, const Dense& layer) {
    require(weights.size() == neighbor_feats.size(), "aggregate: weight count does not match neighbor count");
    require(fu.size() == layer.in && layer.in == layer.out, "aggregate: dimension mismatch");
    Vector sum(fu.begin(), fu.end());
    for (std::size_t n = 0; n < neighbor_feats.size(); ++n) {
        require(neighbor_feats[n].size() == fu.size(), "aggregate: dimension mismatch");
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += weights[n] * neighbor_feats[n][j];
    }
    return layer.apply(sum);
}

DnaForward dna_forward(const SubGraphTree& tree, const FeatureBank& bank, std::span<const double> densities,
                       const DnaParams& params) {
    const std::size_t h = tree.depth();
    const std::size_t dim = tree.root_feature.size();
    require(dim == params.dim(), "dna_forward: parameter dimension does not match the embedding");
    require(params.shared || params.levels.size() >= std::max<std::size_t>(h, 1),
            "dna_forward: not enough per-hop parameter sets for the tree depth");

    AggregationRecord rec;
    rec.depth = h;
    rec.k_sub = tree.k_sub;
    rec.dim = dim;
    rec.density_aware = params.density_aware;
    rec.param_sets = params.levels.size();
    rec.nodes.resize(h + 1);
    rec.nodes[0].resize(1);
    for (std::size_t d = 1; d <= h; ++d) rec.nodes[d].resize(tree.levels[d - 1].size());

    auto raw_feature = [&](std::size_t d, std::size_t i) -> std::span<const double> {
        if (d == 0) return tree.root_feature;
        const auto idx = tree.levels[d - 1][i].bank_index;
        require(idx < bank.size(), "dna_forward: bank index out of range");
        return bank.row(idx);
    };

    if (h == 0) {
        auto& root = rec.nodes[0][0];
        root.sum = tree.root_feature;
        root.output = params.at_depth(0).apply(root.sum);
        Vector out = root.output;
        return {std::move(out), std::move(rec)};
    }

    const auto children = child_lists(tree);
    for (std::size_t i = 0; i < rec.nodes[h].size(); ++i) {
        const auto raw = raw_feature(h, i);
        rec.nodes[h][i].output.assign(raw.begin(), raw.end());
    }

    for (std::size_t d = h; d-- > 0;) {
        const Dense& layer = params.at_depth(d);
        for (std::size_t i = 0; i < rec.nodes[d].size(); ++i) {
            const auto& kids = children[d][i];
            require(!kids.empty(), "dna_forward: internal node without children");
            std::vector<std::span<const double>> kid_raw;
            Vector kid_rho;
            for (auto c : kids) {
                const auto idx = tree.levels[d][c].bank_index;
                if (params.density_aware && idx >= densities.size())
                    fail(ErrorKind::invalid_argument, "dna_forward: missing density for bank node " + std::to_string(idx));
                kid_raw.push_back(raw_feature(d + 1, c));
                kid_rho.push_back(params.density_aware ? densities[idx] : 0.0);
            }
            const auto self = raw_feature(d, i);
            auto& node = rec.nodes[d][i];
            node.weights = aggregation_weights(self, kid_raw, kid_rho, params.density_aware);
            node.children = kids;
            node.sum.assign(self.begin(), self.end());
            for (std::size_t n = 0; n < kids.size(); ++n) {
                const auto& child_out = rec.nodes[d + 1][kids[n]].output;
                for (std::size_t j = 0; j < dim; ++j) node.sum[j] += node.weights[n] * child_out[j];
            }
            node.output = layer.apply(node.sum);

            if (d == 0) {
                rec.root_norm = checked_norm(self);
                rec.root_unit.assign(self.begin(), self.end());
                for (auto& v : rec.root_unit) v /= rec.root_norm;
                rec.child_units = Matrix(kids.size(), dim);
                rec.child_sims.resize(kids.size());
                for (std::size_t n = 0; n < kids.size(); ++n) {
                    const double cn = checked_norm(kid_raw[n]);
                    auto u = rec.child_units.row(n);
                    for (std::size_t j = 0; j < dim; ++j) u[j] = kid_raw[n][j] / cn;
                    rec.child_sims[n] = dot(rec.root_unit, u);
                }
            }
        }
    }
    Vector out = rec.nodes[0][0].output;
    return {std::move(out), std::move(rec)};
}

Vector dna_backward_into(const AggregationRecord& rec, const DnaParams& params, std::span<const double> grad_out,
                         DnaParams& grad) {
    const std::size_t dim = rec.dim;
    if (rec.nodes.empty() || dim != params.dim() || rec.param_sets != params.levels.size() ||
        rec.density_aware != params.density_aware || grad_out.size() != dim)
        fail(ErrorKind::invalid_argument, "dna_backward: record does not match the parameters");
    require(grad.levels.size() == params.levels.size(), "dna_backward: gradient shape mismatch");

    const std::size_t h = rec.depth;
    // Gradient arriving at each node's output, level by level.
    std::vector<std::vector<Vector>> g_out(h + 1);
    g_out[0].assign(1, Vector(grad_out.begin(), grad_out.end()));
    Vector g_root(dim, 0.0);

    for (std::size_t d = 0; d <= h; ++d) {
        if (d == h && h > 0) break;  // leaves are banked constants
        const Dense& layer = params.at_depth(d);
        Dense& layer_grad = grad.at_depth(d);
        if (d + 1 <= h) g_out[d + 1].assign(rec.nodes[d + 1].size(), Vector(dim, 0.0));
        for (std::size_t i = 0; i < rec.nodes[d].size(); ++i) {
            const auto& node = rec.nodes[d][i];
            const auto& g = g_out[d][i];
            layer.accumulate_grad(node.sum, g, layer_grad);
            const Vector g_sum = layer.apply_transposed(g);
            if (h == 0) {
                g_root = g_sum;
                break;
            }
            const std::size_t kids = node.weights.size();
            if (d + 1 < h) {
                for (std::size_t n = 0; n < kids; ++n) {
                    auto& gc = g_out[d + 1][node.children[n]];
                    for (std::size_t j = 0; j < dim; ++j) gc[j] += node.weights[n] * g_sum[j];
                }
            }
            if (d == 0) {
                // Through the identity term and the level-1 softmax weights.
                for (std::size_t j = 0; j < dim; ++j) g_root[j] += g_sum[j];
                Vector g_a(kids);
                double mean = 0.0;
                for (std::size_t n = 0; n < kids; ++n) {
                    g_a[n] = dot(g_sum, rec.nodes[1][node.children[n]].output);
                    mean += node.weights[n] * g_a[n];
                }
                for (std::size_t n = 0; n < kids; ++n) {
                    const double g_logit = node.weights[n] * (g_a[n] - mean);
                    if (g_logit == 0.0) continue;
                    const auto u = rec.child_units.row(n);
                    const double scale = g_logit / rec.root_norm;
                    for (std::size_t j = 0; j < dim; ++j)
                        g_root[j] += scale * (u[j] - rec.child_sims[n] * rec.root_unit[j]);
                }
            }
        }
    }
    return g_root;
}

DnaGradients dna_backward(const AggregationRecord& record, const DnaParams& params, std::span<const double> grad_out) {
    DnaGradients out{{}, params.zeros_like()};
    out.root_feature = dna_backward_into(record, params, grad_out, out.params);
    return out;
}

}  // namespace dag
