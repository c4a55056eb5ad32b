#include "dag/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace dag {

namespace {

void glorot(Dense& layer, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& v : layer.w) v = u(rng);
}

// Square layers start at the identity so the initial embedding keeps the
// input geometry; other shapes fall back to Glorot.
void identity_or_glorot(Dense& layer, std::mt19937_64& rng) {
    if (layer.in != layer.out) return glorot(layer, rng);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    for (std::size_t r = 0; r < layer.out; ++r)
        for (std::size_t c = 0; c < layer.in; ++c) layer.w[r * layer.in + c] = (r == c ? 1.0 : 0.0) + u(rng);
}

double clamp_log(double p) { return std::log(std::max(p, prob_floor)); }

void zero(Dense& d) {
    std::ranges::fill(d.w, 0.0);
    std::ranges::fill(d.b, 0.0);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
}

template <typename U>
U read_le(const unsigned char* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

}  // namespace

ModelParams ModelParams::init(std::size_t input_dim, std::size_t embed_dim, std::size_t depth,
                              std::size_t class_count, std::mt19937_64& rng) {
    require(input_dim > 0 && embed_dim > 0 && class_count > 0, "ModelParams::init: dimensions must be positive");
    require(depth <= 2, "ModelParams::init: backbone depth must be 0, 1 or 2");
    require(depth > 0 || input_dim == embed_dim, "ModelParams::init: identity backbone needs input_dim == embed_dim");
    ModelParams p;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < depth; ++l) {
        Dense layer(in, embed_dim);
        identity_or_glorot(layer, rng);
        p.backbone.push_back(std::move(layer));
        in = embed_dim;
    }
    p.classifier = Dense(embed_dim, class_count);
    glorot(p.classifier, rng);
    return p;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (auto& l : z.backbone) zero(l);
    zero(z.classifier);
    return z;
}

namespace {

template <typename Span, typename Net>
std::vector<Span> collect_views(Net& net) {
    std::vector<Span> v;
    for (auto& l : net.model.backbone) {
        v.emplace_back(l.w);
        v.emplace_back(l.b);
    }
    v.emplace_back(net.model.classifier.w);
    v.emplace_back(net.model.classifier.b);
    for (auto& l : net.dna.levels) {
        v.emplace_back(l.w);
        v.emplace_back(l.b);
    }
    return v;
}

}  // namespace

std::vector<std::span<double>> Network::parameter_views() { return collect_views<std::span<double>>(*this); }

std::vector<std::span<const double>> Network::parameter_views() const {
    return collect_views<std::span<const double>>(*this);
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (auto s : parameter_views()) n += s.size();
    return n;
}

Vector backbone_forward(std::span<const double> x, const ModelParams& params, BackboneCache* cache) {
    require(x.size() == params.input_dim(), "backbone_forward: input has " + std::to_string(x.size()) +
                                                " entries, expected " + std::to_string(params.input_dim()));
    Vector h(x.begin(), x.end());
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    for (std::size_t l = 0; l < params.backbone.size(); ++l) {
        Vector z = params.backbone[l].apply(h);
        if (cache) {
            cache->inputs.push_back(std::move(h));
            cache->pre.push_back(z);
        }
        if (l + 1 < params.backbone.size())
            for (auto& v : z) v = std::max(0.0, v);
        h = std::move(z);
    }
    return h;
}

Vector softmax(std::span<const double> logits) {
    require(!logits.empty(), "softmax: empty input");
    const double top = *std::ranges::max_element(logits);
    Vector p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] = std::exp(logits[i] - top));
    for (auto& v : p) v /= total;
    return p;
}

Vector classifier_logits(std::span<const double> f, const ModelParams& params) { return params.classifier.apply(f); }

Vector classifier_forward(std::span<const double> f, const ModelParams& params) {
    return softmax(classifier_logits(f, params));
}

double supervised_loss(const std::vector<Vector>& probs, std::span<const std::size_t> targets) {
    require(probs.size() == targets.size(), "supervised_loss: one target per prediction is required");
    require(!probs.empty(), "supervised_loss: empty batch");
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        require(targets[i] < probs[i].size(), "supervised_loss: target class out of range");
        s -= clamp_log(probs[i][targets[i]]);
    }
    return s / static_cast<double>(probs.size());
}

RegularizerTerms regularizer_terms(const std::vector<Vector>& probs) {
    require(!probs.empty(), "regularizer: empty batch");
    const std::size_t nc = probs.front().size();
    const double n = static_cast<double>(probs.size());
    RegularizerTerms r;
    Vector mean(nc, 0.0);
    for (const auto& p : probs) {
        require(p.size() == nc, "regularizer: inconsistent class count");
        for (std::size_t j = 0; j < nc; ++j) {
            r.entropy -= p[j] * clamp_log(p[j]);
            mean[j] += p[j];
        }
    }
    r.entropy /= n;
    for (std::size_t j = 0; j < nc; ++j) r.balance -= clamp_log(mean[j] / n);
    r.balance /= static_cast<double>(nc);
    return r;
}

double regularizer(const std::vector<Vector>& probs) { return regularizer_terms(probs).total(); }

BatchLoss batch_loss(const std::vector<Vector>& probs, const std::vector<std::optional<SoftTarget>>& targets,
                     double lambda) {
    require(probs.size() == targets.size(), "batch_loss: one target slot per prediction is required");
    require(!probs.empty(), "batch_loss: empty batch");
    const std::size_t nc = probs.front().size();
    const double n = static_cast<double>(probs.size());

    BatchLoss out;
    out.loss.lambda = lambda;
    out.grad_probs.assign(probs.size(), Vector(nc, 0.0));

    std::size_t targeted = 0;
    for (const auto& t : targets) targeted += t.has_value();
    if (targeted > 0) {
        const double nt = static_cast<double>(targeted);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (!targets[i]) continue;
            const auto& y = targets[i]->distribution;
            const double w = targets[i]->weight;
            require(y.size() == nc, "batch_loss: target distribution has the wrong class count");
            for (std::size_t j = 0; j < nc; ++j) {
                if (y[j] == 0.0) continue;
                out.loss.supervised -= w * y[j] * clamp_log(probs[i][j]) / nt;
                if (probs[i][j] > prob_floor) out.grad_probs[i][j] -= w * y[j] / (nt * probs[i][j]);
            }
        }
    }

    if (lambda != 0.0) {
        const auto terms = regularizer_terms(probs);
        out.loss.regularizer = terms.total();
        Vector mean(nc, 0.0);
        for (const auto& p : probs)
            for (std::size_t j = 0; j < nc; ++j) mean[j] += p[j] / n;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            for (std::size_t j = 0; j < nc; ++j) {
                const double p = probs[i][j];
                double g = p > prob_floor ? -(std::log(p) + 1.0) / n : -std::log(prob_floor) / n;
                if (mean[j] > prob_floor) g -= 1.0 / (static_cast<double>(nc) * mean[j] * n);
                out.grad_probs[i][j] += lambda * g;
            }
        }
    } else {
        out.loss.regularizer = regularizer(probs);
    }
    out.loss.total = out.loss.supervised + lambda * out.loss.regularizer;
    return out;
}

MixedBatch mixup_with(const std::vector<Vector>& x, const std::vector<Vector>& y, double lambda,
                      std::vector<std::size_t> partner) {
    require(x.size() == y.size() && partner.size() == x.size(), "mixup: batch sizes disagree");
    require(lambda >= 0.0 && lambda <= 1.0, "mixup: lambda must lie in [0, 1]");
    MixedBatch mb;
    mb.lambda = lambda;
    mb.partner = std::move(partner);
    mb.x.resize(x.size());
    mb.y.resize(y.size());
    auto mix = [lambda](const Vector& a, const Vector& b) {
        Vector out(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) out[j] = lambda * a[j] + (1.0 - lambda) * b[j];
        return out;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto p = mb.partner[i];
        require(p < x.size(), "mixup: partner index out of range");
        mb.x[i] = lambda == 1.0 ? x[i] : mix(x[i], x[p]);
        mb.y[i] = lambda == 1.0 ? y[i] : mix(y[i], y[p]);
    }
    return mb;
}

MixedBatch mixup(const std::vector<Vector>& x, const std::vector<Vector>& y, double alpha, std::mt19937_64& rng) {
    require(alpha > 0.0, "mixup: alpha must be positive");
    std::gamma_distribution<double> gamma(alpha, 1.0);
    const double a = gamma(rng);
    const double b = gamma(rng);
    const double lambda = (a + b) > 0.0 ? a / (a + b) : 0.5;
    std::vector<std::size_t> partner(x.size());
    std::iota(partner.begin(), partner.end(), std::size_t{0});
    std::shuffle(partner.begin(), partner.end(), rng);
    return mixup_with(x, y, lambda, std::move(partner));
}

SampleTrace forward_sample(std::span<const double> x, const Network& net, const NeighborhoodSource* source) {
    SampleTrace t;
    t.embedding = backbone_forward(x, net.model, &t.backbone);
    if (!source) {
        t.enhanced = t.embedding;
    } else {
        if (source->fixed_tree) {
            t.tree = *source->fixed_tree;
            t.tree->root_feature = t.embedding;
        } else if (source->h == 0) {
            t.tree = SubGraphTree{t.embedding, source->k_sub, {}};
        } else {
            require(source->bank && source->graph, "forward_sample: neighborhood source lacks bank or graph");
            t.tree = sample_subgraph(t.embedding, source->exclude, *source->bank, *source->graph, source->k_sub,
                                     source->h);
        }
        static const FeatureBank no_bank;
        const FeatureBank& bank = source->bank ? *source->bank : no_bank;
        std::span<const double> rho;
        if (source->graph) rho = source->graph->densities;
        auto fwd = dna_forward(*t.tree, bank, rho, net.dna);
        t.enhanced = std::move(fwd.output);
        t.record = std::move(fwd.record);
    }
    t.probs = classifier_forward(t.enhanced, net.model);
    return t;
}

void model_backward(const SampleTrace& trace, const Network& net, std::span<const double> grad_probs,
                    Network& grad) {
    const auto& p = trace.probs;
    require(grad_probs.size() == p.size(), "model_backward: gradient does not match the prediction");
    require(trace.enhanced.size() == net.model.embed_dim(), "model_backward: stale trace");

    // Softmax Jacobian: dz = p * (g - <g, p>).
    const double gp = dot(grad_probs, p);
    Vector g_logits(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) g_logits[j] = p[j] * (grad_probs[j] - gp);

    net.model.classifier.accumulate_grad(trace.enhanced, g_logits, grad.model.classifier);
    Vector g = net.model.classifier.apply_transposed(g_logits);
    if (trace.record) g = dna_backward_into(*trace.record, net.dna, g, grad.dna);

    const auto& bb = trace.backbone;
    require(bb.pre.size() == net.model.backbone.size(), "model_backward: stale backbone cache");
    for (std::size_t l = net.model.backbone.size(); l-- > 0;) {
        if (l + 1 < net.model.backbone.size()) {
            for (std::size_t j = 0; j < g.size(); ++j)
                if (!(bb.pre[l][j] > 0.0)) g[j] = 0.0;
        }
        net.model.backbone[l].accumulate_grad(bb.inputs[l], g, grad.model.backbone[l]);
        if (l > 0) g = net.model.backbone[l].apply_transposed(g);
    }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out.write("DAGP", 4);
    write_u32(out, checkpoint_version);
    write_u64(out, net.model.input_dim());
    write_u64(out, net.model.embed_dim());
    write_u64(out, net.model.class_count());
    write_u64(out, net.model.backbone.size());
    write_u64(out, net.dna.levels.size());
    write_u32(out, (net.dna.density_aware ? 1u : 0u) | (net.dna.shared ? 2u : 0u));
    for (auto view : net.parameter_views())
        for (double v : view) write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!out) fail(ErrorKind::io, "write failure on " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    constexpr std::size_t header = 4 + 4 + 5 * 8 + 4;
    if (bytes.size() < header) fail(ErrorKind::format, "truncated checkpoint header in " + path.string());
    if (std::memcmp(bytes.data(), "DAGP", 4) != 0) fail(ErrorKind::format, "bad checkpoint magic in " + path.string());
    if (read_le<std::uint32_t>(bytes.data() + 4) != checkpoint_version)
        fail(ErrorKind::format, "unsupported checkpoint version in " + path.string());
    const auto input_dim = read_le<std::uint64_t>(bytes.data() + 8);
    const auto embed_dim = read_le<std::uint64_t>(bytes.data() + 16);
    const auto classes = read_le<std::uint64_t>(bytes.data() + 24);
    const auto depth = read_le<std::uint64_t>(bytes.data() + 32);
    const auto sets = read_le<std::uint64_t>(bytes.data() + 40);
    const auto flags = read_le<std::uint32_t>(bytes.data() + 48);
    constexpr std::uint64_t sane = 1u << 20;
    if (input_dim == 0 || embed_dim == 0 || classes == 0 || depth > 2 || sets == 0 || input_dim > sane ||
        embed_dim > sane || classes > sane || sets > 64 || (depth == 0 && input_dim != embed_dim))
        fail(ErrorKind::format, "implausible checkpoint header in " + path.string());

    Network net;
    std::size_t in_dim = input_dim;
    for (std::uint64_t l = 0; l < depth; ++l) {
        net.model.backbone.emplace_back(in_dim, embed_dim);
        in_dim = embed_dim;
    }
    net.model.classifier = Dense(embed_dim, classes);
    net.dna.density_aware = (flags & 1u) != 0;
    net.dna.shared = (flags & 2u) != 0;
    for (std::uint64_t s = 0; s < sets; ++s) net.dna.levels.emplace_back(embed_dim, embed_dim);

    const std::size_t expected = header + 4 * net.parameter_count();
    if (bytes.size() != expected) fail(ErrorKind::format, "checkpoint payload size mismatch in " + path.string());
    std::size_t off = header;
    for (auto view : net.parameter_views()) {
        for (auto& v : view) {
            const float f = std::bit_cast<float>(read_le<std::uint32_t>(bytes.data() + off));
            if (!std::isfinite(f)) fail(ErrorKind::format, "non-finite checkpoint value in " + path.string());
            v = f;
            off += 4;
        }
    }
    return net;
}

}  // namespace dag
