#include "dag/gradcheck.hpp"

#include "dag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

namespace dag {

namespace {

struct Instance {
    Network net;
    FeatureBank bank;
    DensityGraph graph;
    std::vector<Vector> x;
    std::vector<SubGraphTree> trees;
    std::vector<std::optional<SoftTarget>> targets;
};

Vector gaussian(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vector v(n);
    for (auto& e : v) e = dist(rng);
    return v;
}

// Keeps every hidden pre-activation away from the ReLU kink, where finite
// differences straddle the discontinuity in the derivative.
bool clear_of_kinks(std::span<const double> x, const ModelParams& model) {
    BackboneCache cache;
    backbone_forward(x, model, &cache);
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
        for (double v : cache.pre[l])
            if (std::abs(v) < 1e-3) return false;
    return true;
}

Instance make_instance(const GradcheckOptions& o, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(o.seed), static_cast<std::uint32_t>(o.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    const std::size_t h = index % 2 == 0 ? 1 : 2;

    Instance in;
    in.net.model = ModelParams::init(o.dim, o.dim, o.backbone_depth, o.classes, rng);
    in.net.dna = DnaParams::init(o.dim, h, o.density_aware, false, rng);
    // Move away from the near-identity start so every term has weight.
    std::normal_distribution<double> jitter(0.0, 0.2);
    for (auto& s : in.net.parameter_views())
        for (auto& v : s) v += jitter(rng);

    Matrix bank(o.bank_size, o.dim);
    for (std::size_t i = 0; i < o.bank_size; ++i) {
        const auto v = gaussian(o.dim, rng);
        std::ranges::copy(v, bank.row(i).begin());
    }
    in.bank = FeatureBank(bank);
    in.graph = build_knn_graph(bank, o.k_global, 1);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t b = 0; b < o.batch; ++b) {
        Vector x;
        do x = gaussian(o.dim, rng);
        while (!clear_of_kinks(x, in.net.model));
        NeighborhoodSource src{&in.bank, &in.graph, o.k_sub, h, {}, nullptr};
        in.trees.push_back(*forward_sample(x, in.net, &src).tree);
        in.x.push_back(std::move(x));
        // Hard, soft and missing targets all appear in the batch.
        if (b % 3 == 2) {
            in.targets.emplace_back();
        } else {
            Vector y(o.classes, 0.0);
            if (b % 3 == 0) {
                y[b % o.classes] = 1.0;
            } else {
                double s = 0.0;
                for (auto& e : y) s += (e = unit(rng) + 0.05);
                for (auto& e : y) e /= s;
            }
            in.targets.push_back(SoftTarget{y, 0.5 + unit(rng)});
        }
    }
    return in;
}

std::vector<SampleTrace> run(const Instance& in, const Network& net, std::size_t h, std::size_t k_sub) {
    std::vector<SampleTrace> traces;
    for (std::size_t b = 0; b < in.x.size(); ++b) {
        NeighborhoodSource src{&in.bank, &in.graph, k_sub, h, {}, &in.trees[b]};
        traces.push_back(forward_sample(in.x[b], net, &src));
    }
    return traces;
}

double total_loss(const Instance& in, const Network& net, std::size_t h, std::size_t k_sub, double lambda) {
    std::vector<Vector> probs;
    for (auto& t : run(in, net, h, k_sub)) probs.push_back(std::move(t.probs));
    return batch_loss(probs, in.targets, lambda).loss.total;
}

GradcheckReport check_instance(const GradcheckOptions& o, std::size_t index) {
    const Instance in = make_instance(o, index);
    const std::size_t h = in.trees.front().depth();

    const auto traces = run(in, in.net, h, o.k_sub);
    std::vector<Vector> probs;
    for (const auto& t : traces) probs.push_back(t.probs);
    const auto loss = batch_loss(probs, in.targets, o.lambda);
    Network grad = in.net.zeros_like();
    for (std::size_t b = 0; b < traces.size(); ++b) model_backward(traces[b], in.net, loss.grad_probs[b], grad);

    GradcheckReport r;
    r.instances = 1;
    Network probe = in.net;
    auto views = probe.parameter_views();
    const auto analytic = std::as_const(grad).parameter_views();
    for (std::size_t s = 0; s < views.size(); ++s) {
        for (std::size_t j = 0; j < views[s].size(); ++j) {
            const double saved = views[s][j];
            views[s][j] = saved + o.step;
            const double up = total_loss(in, probe, h, o.k_sub, o.lambda);
            views[s][j] = saved - o.step;
            const double down = total_loss(in, probe, h, o.k_sub, o.lambda);
            views[s][j] = saved;
            const double numeric = (up - down) / (2.0 * o.step);
            const double a = analytic[s][j];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), o.floor});
            r.max_absolute_error = std::max(r.max_absolute_error, abs_err);
            r.max_relative_error = std::max(r.max_relative_error, rel);
            ++r.parameters;
        }
    }
    return r;
}

}  // namespace

GradcheckReport gradcheck(const GradcheckOptions& options) {
    require(options.instances > 0, "gradcheck: at least one instance is required");
    require(options.k_sub <= options.k_global && options.k_global < options.bank_size,
            "gradcheck: need k_sub <= k_global < bank_size");
    require(options.batch > 0 && options.classes > 0 && options.dim > 0, "gradcheck: empty instance");
    require(options.step > 0.0, "gradcheck: step must be positive");
    std::vector<GradcheckReport> parts(options.instances);
    parallel_for(options.instances, options.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) parts[i] = check_instance(options, i);
    });
    GradcheckReport total;
    for (const auto& p : parts) {
        total.instances += p.instances;
        total.parameters += p.parameters;
        total.max_relative_error = std::max(total.max_relative_error, p.max_relative_error);
        total.max_absolute_error = std::max(total.max_absolute_error, p.max_absolute_error);
    }
    return total;
}

}  // namespace dag
