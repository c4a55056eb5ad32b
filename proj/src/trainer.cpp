#include "dag/trainer.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

namespace dag {

namespace {

// Independent, reproducible stream per (seed, stage, epoch).
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t stage, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stage,
                      static_cast<std::uint32_t>(epoch)};
    return std::mt19937_64(seq);
}

enum Stage : std::uint32_t { stage_init = 1, stage_warmup = 2, stage_epoch = 3, stage_mixup = 4 };

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    fail(ErrorKind::format, "config: " + key + " expects a boolean, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        fail(ErrorKind::format, "config: " + key + " expects a non-negative integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
        fail(ErrorKind::format, "config: " + key + " expects a real number, got '" + v + "'");
    return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& config_setters() {
    static const std::map<std::string, Setter> setters = [] {
        std::map<std::string, Setter> s;
        auto size = [](std::size_t TrainConfig::*f) {
            return [f](TrainConfig& c, const std::string& k, const std::string& v) { c.*f = parse_uint(k, v); };
        };
        auto real = [](double TrainConfig::*f) {
            return [f](TrainConfig& c, const std::string& k, const std::string& v) { c.*f = parse_real(k, v); };
        };
        auto flag = [](bool TrainConfig::*f) {
            return [f](TrainConfig& c, const std::string& k, const std::string& v) { c.*f = parse_bool(k, v); };
        };
        s["k_global"] = size(&TrainConfig::k_global);
        s["k_sub"] = size(&TrainConfig::k_sub);
        s["h"] = size(&TrainConfig::h);
        s["density_aware"] = flag(&TrainConfig::density_aware);
        s["share_dna_params"] = flag(&TrainConfig::share_dna_params);
        s["propagation"] = flag(&TrainConfig::propagation);
        s["sigma_policy"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
            if (v == "quantile")
                c.sigma_policy = SigmaPolicy::quantile;
            else if (v == "absolute")
                c.sigma_policy = SigmaPolicy::absolute;
            else
                fail(ErrorKind::format, "config: " + k + " must be quantile or absolute");
        };
        s["sigma_quantile"] = real(&TrainConfig::sigma_quantile);
        s["sigma"] = real(&TrainConfig::sigma);
        s["l_max"] = size(&TrainConfig::l_max);
        s["label_source"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
            if (v == "max_density_labelled")
                c.label_source = LabelSource::max_density_labelled;
            else if (v == "origin")
                c.label_source = LabelSource::origin;
            else
                fail(ErrorKind::format, "config: " + k + " must be max_density_labelled or origin");
        };
        s["lambda"] = real(&TrainConfig::lambda);
        s["pseudo_weight"] = real(&TrainConfig::pseudo_weight);
        s["include_unlabelled"] = flag(&TrainConfig::include_unlabelled);
        s["mixup"] = flag(&TrainConfig::mixup);
        s["mixup_alpha"] = real(&TrainConfig::mixup_alpha);
        s["embed_dim"] = size(&TrainConfig::embed_dim);
        s["backbone_depth"] = size(&TrainConfig::backbone_depth);
        s["warmup_epochs"] = size(&TrainConfig::warmup_epochs);
        s["epochs"] = size(&TrainConfig::epochs);
        s["batch_size"] = size(&TrainConfig::batch_size);
        s["iterations"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
            if (v == "auto")
                c.iterations.reset();
            else
                c.iterations = parse_uint(k, v);
        };
        s["lr"] = real(&TrainConfig::lr);
        s["lr_milestones"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
            c.lr_milestones.clear();
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (!item.empty()) c.lr_milestones.push_back(parse_uint(k, item));
            }
        };
        s["lr_decay"] = real(&TrainConfig::lr_decay);
        s["momentum"] = real(&TrainConfig::momentum);
        s["seed"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); };
        s["threads"] = size(&TrainConfig::threads);
        return s;
    }();
    return setters;
}

// Dimension-matched item of a training batch.
struct BatchItem {
    std::size_t index = 0;
    Vector x;
    std::optional<SoftTarget> target;
    std::vector<std::size_t> exclude;
};

struct BatchResult {
    LossBreakdown loss;
    Network grad;
};

// Forward every item, combine into the batch loss, backward every item, and
// sum per-item gradients in item order.
BatchResult run_batch(const Network& net, const std::vector<BatchItem>& items, const NeighborhoodSource* base,
                      double lambda, std::size_t threads) {
    const std::size_t n = items.size();
    std::vector<SampleTrace> traces(n);
    parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            if (base) {
                NeighborhoodSource src = *base;
                src.exclude = items[i].exclude;
                traces[i] = forward_sample(items[i].x, net, &src);
            } else {
                traces[i] = forward_sample(items[i].x, net, nullptr);
            }
        }
    });
    std::vector<Vector> probs(n);
    std::vector<std::optional<SoftTarget>> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        probs[i] = traces[i].probs;
        targets[i] = items[i].target;
    }
    auto loss = batch_loss(probs, targets, lambda);

    std::vector<Network> grads(n);
    parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            grads[i] = net.zeros_like();
            model_backward(traces[i], net, loss.grad_probs[i], grads[i]);
        }
    });
    BatchResult out{loss.loss, net.zeros_like()};
    auto total = out.grad.parameter_views();
    for (auto& g : grads) {
        const auto views = std::as_const(g).parameter_views();
        for (std::size_t v = 0; v < views.size(); ++v)
            for (std::size_t j = 0; j < views[v].size(); ++j) total[v][j] += views[v][j];
    }
    return out;
}

void sgd_step(Network& net, Network& velocity, const Network& grad, double lr, double momentum) {
    auto p = net.parameter_views();
    auto v = velocity.parameter_views();
    const auto g = grad.parameter_views();
    for (std::size_t s = 0; s < p.size(); ++s) {
        for (std::size_t j = 0; j < p[s].size(); ++j) {
            v[s][j] = momentum * v[s][j] + g[s][j];
            p[s][j] -= lr * v[s][j];
        }
    }
}

Vector one_hot(std::size_t label, std::size_t classes) {
    Vector y(classes, 0.0);
    y.at(label) = 1.0;
    return y;
}

// Cycles through a shuffled pool, reshuffling on every wrap.
class BatchSampler {
public:
    BatchSampler(std::vector<std::size_t> pool, std::mt19937_64& rng) : pool_(std::move(pool)), rng_(rng) {
        std::shuffle(pool_.begin(), pool_.end(), rng_);
    }

    std::vector<std::size_t> next(std::size_t batch_size) {
        if (pool_.size() <= batch_size) return pool_;
        std::vector<std::size_t> batch;
        batch.reserve(batch_size);
        while (batch.size() < batch_size) {
            if (cursor_ == pool_.size()) {
                std::shuffle(pool_.begin(), pool_.end(), rng_);
                cursor_ = 0;
            }
            batch.push_back(pool_[cursor_++]);
        }
        return batch;
    }

private:
    std::vector<std::size_t> pool_;
    std::mt19937_64& rng_;
    std::size_t cursor_ = 0;
};

double resolve_sigma(const FeatureBank& bank, const TrainConfig& config) {
    if (config.sigma_policy == SigmaPolicy::absolute) return config.sigma;
    const double s = nn_distance_quantile(bank.features(), config.sigma_quantile, config.threads);
    // Duplicated features give a zero quantile; keep paths well-defined.
    return s > 0.0 ? s : std::numeric_limits<double>::min();
}

LabelBank ground_truth_only(const TrainData& data) {
    LabelBank bank = data.labels;
    for (auto i : data.split.unlabelled) bank.clear(i);
    return bank;
}

}  // namespace

void TrainConfig::validate() const {
    auto bad = [](const std::string& what) { fail(ErrorKind::invalid_argument, "config: " + what); };
    if (k_global == 0) bad("k_global must be positive");
    if (h > 0 && k_sub == 0) bad("k_sub must be positive");
    if (h > 1 && k_sub > k_global) bad("k_sub cannot exceed k_global when h > 1");
    if (l_max == 0) bad("l_max must be positive");
    if (sigma_policy == SigmaPolicy::absolute && !(sigma > 0.0)) bad("sigma must be positive");
    if (sigma_policy == SigmaPolicy::quantile && !(sigma_quantile >= 0.0 && sigma_quantile <= 1.0))
        bad("sigma_quantile must lie in [0, 1]");
    if (lambda < 0.0) bad("lambda must be non-negative");
    if (pseudo_weight < 0.0) bad("pseudo_weight must be non-negative");
    if (mixup && !(mixup_alpha > 0.0)) bad("mixup_alpha must be positive");
    if (embed_dim == 0) bad("embed_dim must be positive");
    if (backbone_depth > 2) bad("backbone_depth must be 0, 1 or 2");
    if (batch_size == 0) bad("batch_size must be positive");
    if (!(lr > 0.0)) bad("lr must be positive");
    if (!std::ranges::is_sorted(lr_milestones)) bad("lr_milestones must be ascending");
    if (!(lr_decay > 0.0)) bad("lr_decay must be positive");
    if (momentum < 0.0 || momentum >= 1.0) bad("momentum must lie in [0, 1)");
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig c;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    const auto& setters = config_setters();
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(ErrorKind::format, "config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(std::string_view(line).substr(0, eq));
        const auto value = trim(std::string_view(line).substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) fail(ErrorKind::format, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(c, key, value);
    }
    c.validate();
    return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const TrainConfig& c) {
    std::ostringstream os;
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "k_global = " << c.k_global << '\n'
       << "k_sub = " << c.k_sub << '\n'
       << "h = " << c.h << '\n'
       << "density_aware = " << b(c.density_aware) << '\n'
       << "share_dna_params = " << b(c.share_dna_params) << '\n'
       << "propagation = " << b(c.propagation) << '\n'
       << "sigma_policy = " << (c.sigma_policy == SigmaPolicy::quantile ? "quantile" : "absolute") << '\n'
       << "sigma_quantile = " << fmt_double(c.sigma_quantile) << '\n'
       << "sigma = " << fmt_double(c.sigma) << '\n'
       << "l_max = " << c.l_max << '\n'
       << "label_source = " << (c.label_source == LabelSource::origin ? "origin" : "max_density_labelled") << '\n'
       << "lambda = " << fmt_double(c.lambda) << '\n'
       << "pseudo_weight = " << fmt_double(c.pseudo_weight) << '\n'
       << "include_unlabelled = " << b(c.include_unlabelled) << '\n'
       << "mixup = " << b(c.mixup) << '\n'
       << "mixup_alpha = " << fmt_double(c.mixup_alpha) << '\n'
       << "embed_dim = " << c.embed_dim << '\n'
       << "backbone_depth = " << c.backbone_depth << '\n'
       << "warmup_epochs = " << c.warmup_epochs << '\n'
       << "epochs = " << c.epochs << '\n'
       << "batch_size = " << c.batch_size << '\n'
       << "iterations = " << (c.iterations ? std::to_string(*c.iterations) : "auto") << '\n'
       << "lr = " << fmt_double(c.lr) << '\n'
       << "lr_milestones = ";
    for (std::size_t i = 0; i < c.lr_milestones.size(); ++i) os << (i ? "," : "") << c.lr_milestones[i];
    os << '\n'
       << "lr_decay = " << fmt_double(c.lr_decay) << '\n'
       << "momentum = " << fmt_double(c.momentum) << '\n'
       << "seed = " << c.seed << '\n'
       << "threads = " << c.threads << '\n';
    return os.str();
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
    double lr = config.lr;
    for (auto m : config.lr_milestones)
        if (epoch >= m) lr *= config.lr_decay;
    return lr;
}

std::string RunLog::to_jsonl() const {
    using nlohmann::json;
    std::string out;
    json run = {{"type", "run"},
                {"seed", seed},
                {"config", config},
                {"graph_builds", graph_builds},
                {"propagation_passes", propagation_passes},
                {"epochs", epochs.size()}};
    out += run.dump() + '\n';
    for (const auto& e : epochs) {
        json j = {{"type", "epoch"},
                  {"epoch", e.epoch},
                  {"lr", e.lr},
                  {"sigma", e.sigma},
                  {"iterations", e.iterations},
                  {"loss_supervised", e.loss_supervised},
                  {"loss_regularizer", e.loss_regularizer},
                  {"loss_total", e.loss_total},
                  {"ground_truth", e.ground_truth},
                  {"pseudo_labels", e.pseudo_labels}};
        j["pseudo_accuracy"] = e.pseudo_accuracy ? json(*e.pseudo_accuracy) : json(nullptr);
        j["test_error"] = e.test_error ? json(*e.test_error) : json(nullptr);
        out += j.dump() + '\n';
    }
    return out;
}

TrainData make_train_data(const Matrix& x, const LabelFile& labels, const Split& split) {
    require(labels.size() == x.rows(), "make_train_data: label count does not match the sample count");
    require(split.labelled.size() + split.unlabelled.size() == x.rows(), "make_train_data: split is not exhaustive");
    TrainData d;
    d.x = x;
    d.split = split;
    d.labels = LabelBank::from_split(labels, split.labelled);
    // Full ground truth is only known when every sample carries a label.
    if (std::ranges::all_of(labels.labels, [](const auto& l) { return l.has_value(); })) d.truth = labels;
    return d;
}

Network initial_network(std::size_t input_dim, std::size_t class_count, const TrainConfig& config) {
    auto rng = stream(config.seed, stage_init, 0);
    Network net;
    net.model = ModelParams::init(input_dim, config.embed_dim, config.backbone_depth, class_count, rng);
    net.dna = DnaParams::init(config.embed_dim, config.h, config.density_aware, config.share_dna_params, rng);
    return net;
}

Network warmup(const TrainData& data, const TrainConfig& config, Network net) {
    require(!data.split.labelled.empty(), "warmup: empty labelled set");
    if (config.warmup_epochs == 0) return net;
    Network velocity = net.zeros_like();
    const std::size_t classes = net.model.class_count();
    const std::size_t l = data.split.labelled.size();
    const std::size_t iters = (l + config.batch_size - 1) / config.batch_size;
    for (std::size_t epoch = 0; epoch < config.warmup_epochs; ++epoch) {
        auto rng = stream(config.seed, stage_warmup, epoch);
        BatchSampler sampler(data.split.labelled, rng);
        for (std::size_t it = 0; it < iters; ++it) {
            std::vector<BatchItem> items;
            for (auto i : sampler.next(config.batch_size)) {
                const auto row = data.x.row(i);
                items.push_back({i, Vector(row.begin(), row.end()), SoftTarget{one_hot(data.labels[i].label, classes), 1.0}, {}});
            }
            const auto res = run_batch(net, items, nullptr, 0.0, config.threads);
            sgd_step(net, velocity, res.grad, config.lr, config.momentum);
        }
    }
    return net;
}

FeatureBank init_banks(const Network& net, const Matrix& x, std::size_t epoch, std::size_t threads) {
    require(x.cols() == net.model.input_dim(), "init_banks: input dimension does not match the model");
    Matrix f(x.rows(), net.model.embed_dim());
    parallel_for(x.rows(), threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto emb = backbone_forward(x.row(i), net.model);
            std::ranges::copy(emb, f.row(i).begin());
        }
    });
    return FeatureBank(std::move(f), epoch);
}

EpochStats train_epoch(TrainState& state, const TrainData& data, const TrainConfig& config) {
    EpochStats stats;
    const std::size_t m = data.x.rows();
    const std::size_t iters = config.iterations.value_or((m + config.batch_size - 1) / config.batch_size);
    if (iters == 0) return stats;

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < m; ++i)
        if (config.include_unlabelled || state.labels[i].state != LabelState::unlabelled) pool.push_back(i);
    if (pool.empty()) return stats;

    auto rng = stream(config.seed, stage_epoch, state.epoch);
    auto mix_rng = stream(config.seed, stage_mixup, state.epoch);
    BatchSampler sampler(pool, rng);
    const double lr = learning_rate(config, state.epoch);
    const std::size_t classes = state.net.model.class_count();

    NeighborhoodSource source;
    source.bank = &state.bank;
    source.graph = &state.graph;
    source.k_sub = config.k_sub;
    source.h = config.h;

    for (std::size_t it = 0; it < iters; ++it) {
        std::vector<BatchItem> items;
        for (auto i : sampler.next(config.batch_size)) {
            const auto row = data.x.row(i);
            BatchItem item{i, Vector(row.begin(), row.end()), std::nullopt, {i}};
            const auto& entry = state.labels[i];
            if (entry.state != LabelState::unlabelled) {
                const double w = entry.state == LabelState::ground_truth ? 1.0 : config.pseudo_weight;
                item.target = SoftTarget{one_hot(entry.label, classes), w};
            }
            items.push_back(std::move(item));
        }

        if (config.mixup) {
            std::vector<std::size_t> slots;
            for (std::size_t s = 0; s < items.size(); ++s)
                if (items[s].target) slots.push_back(s);
            if (slots.size() > 1) {
                std::vector<Vector> xs, ys;
                for (auto s : slots) {
                    xs.push_back(items[s].x);
                    ys.push_back(items[s].target->distribution);
                }
                const auto mixed = mixup(xs, ys, config.mixup_alpha, mix_rng);
                for (std::size_t t = 0; t < slots.size(); ++t) {
                    auto& item = items[slots[t]];
                    const auto& other = items[slots[mixed.partner[t]]];
                    const double w = mixed.lambda * item.target->weight + (1.0 - mixed.lambda) * other.target->weight;
                    item.exclude = {item.index, other.index};
                    item.x = mixed.x[t];
                    item.target = SoftTarget{mixed.y[t], w};
                }
            }
        }

        const auto res = run_batch(state.net, items, &source, config.lambda, config.threads);
        sgd_step(state.net, state.velocity, res.grad, lr, config.momentum);
        stats.mean_loss.supervised += res.loss.supervised;
        stats.mean_loss.regularizer += res.loss.regularizer;
        stats.mean_loss.total += res.loss.total;
        ++stats.iterations;
    }
    const double n = static_cast<double>(stats.iterations);
    stats.mean_loss.supervised /= n;
    stats.mean_loss.regularizer /= n;
    stats.mean_loss.total /= n;
    stats.mean_loss.lambda = config.lambda;
    return stats;
}

EvalMetrics evaluate(const Network& net, const FeatureBank& bank, const DensityGraph& graph, const TestData& test,
                     const TrainConfig& config) {
    if (test.x.rows() == 0) fail(ErrorKind::invalid_argument, "evaluate: empty test set has no error rate");
    require(test.labels.size() == test.x.rows(), "evaluate: label count does not match the test set");
    require(test.x.cols() == net.model.input_dim(), "evaluate: test dimension does not match the model");
    if (config.h > 0)
        require(bank.dim() == net.model.embed_dim() && graph.size() == bank.size(),
                "evaluate: bank does not match the model");

    NeighborhoodSource source;
    source.bank = &bank;
    source.graph = &graph;
    source.k_sub = config.k_sub;
    source.h = config.h;

    EvalMetrics m;
    m.samples = test.x.rows();
    m.predictions.resize(m.samples);
    parallel_for(m.samples, config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto trace = forward_sample(test.x.row(i), net, &source);
            // max_element keeps the first maximum: ties go to the smaller class id.
            m.predictions[i] = static_cast<std::size_t>(std::ranges::max_element(trace.probs) - trace.probs.begin());
        }
    });
    for (std::size_t i = 0; i < m.samples; ++i) {
        const auto& truth = test.labels.labels[i];
        require(truth.has_value(), "evaluate: test sample " + std::to_string(i) + " has no label");
        if (m.predictions[i] != *truth) ++m.errors;
    }
    m.error_rate = static_cast<double>(m.errors) / static_cast<double>(m.samples);
    return m;
}

TrainResult train(const TrainData& data, const TrainConfig& config, const TestData* test) {
    config.validate();
    require(data.x.rows() > config.k_global, "train: k_global must be below the training-set size");
    std::size_t classes = 0;
    for (auto i : data.split.labelled) classes = std::max(classes, data.labels[i].label + 1);
    if (data.truth) classes = std::max(classes, data.truth->class_count());
    if (test) classes = std::max(classes, test->labels.class_count());

    Network net = warmup(data, config, initial_network(data.x.cols(), classes, config));

    TrainResult result;
    result.log.config = format_config(config);
    result.log.seed = config.seed;

    TrainState state{net, net.zeros_like(), {}, {}, ground_truth_only(data), 0};
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        state.epoch = epoch;
        state.bank = init_banks(state.net, data.x, epoch, config.threads);
        state.graph = build_knn_graph(state.bank.features(), config.k_global, config.threads);
        ++result.log.graph_builds;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = learning_rate(config, epoch);
        if (config.propagation) {
            rec.sigma = resolve_sigma(state.bank, config);
            PropagationOptions opts{rec.sigma, config.l_max, config.label_source, config.threads};
            state.labels = propagate(state.bank.features(), state.graph.densities, state.labels, data.split.labelled,
                                     data.split.unlabelled, opts)
                               .bank;
            ++result.log.propagation_passes;
        }

        const auto stats = train_epoch(state, data, config);
        rec.iterations = stats.iterations;
        rec.loss_supervised = stats.mean_loss.supervised;
        rec.loss_regularizer = stats.mean_loss.regularizer;
        rec.loss_total = stats.mean_loss.total;
        rec.ground_truth = state.labels.count(LabelState::ground_truth);
        rec.pseudo_labels = state.labels.count(LabelState::pseudo);
        if (data.truth && rec.pseudo_labels > 0) {
            std::size_t correct = 0;
            for (std::size_t i = 0; i < state.labels.size(); ++i)
                if (state.labels[i].state == LabelState::pseudo && data.truth->labels[i] == state.labels[i].label)
                    ++correct;
            rec.pseudo_accuracy = static_cast<double>(correct) / static_cast<double>(rec.pseudo_labels);
        }
        if (test) rec.test_error = evaluate(state.net, state.bank, state.graph, *test, config).error_rate;
        result.log.epochs.push_back(rec);
    }

    if (config.epochs == 0) {
        state.bank = init_banks(state.net, data.x, 0, config.threads);
        state.graph = build_knn_graph(state.bank.features(), config.k_global, config.threads);
    }
    result.net = std::move(state.net);
    result.bank = std::move(state.bank);
    result.graph = std::move(state.graph);
    result.labels = std::move(state.labels);
    return result;
}

std::string_view cell_name(AblationCell cell) {
    switch (cell) {
        case AblationCell::baseline: return "Baseline";
        case AblationCell::dna: return "DNA";
        case AblationCell::dplp: return "DPLP";
        case AblationCell::dag: return "DAG";
    }
    return "?";
}

TrainConfig configure_cell(TrainConfig config, AblationCell cell) {
    const std::size_t depth = config.h > 0 ? config.h : 1;
    const bool aggregate = cell == AblationCell::dna || cell == AblationCell::dag;
    config.h = aggregate ? depth : 0;
    config.propagation = cell == AblationCell::dplp || cell == AblationCell::dag;
    return config;
}

std::vector<AblationRow> run_ablation(const Matrix& x, const LabelFile& labels, const TestData& test,
                                      std::size_t labels_per_class, std::span<const std::uint64_t> seeds,
                                      const TrainConfig& config) {
    require(!seeds.empty(), "run_ablation: at least one seed is required");
    constexpr AblationCell cells[] = {AblationCell::baseline, AblationCell::dna, AblationCell::dplp, AblationCell::dag};
    std::vector<AblationRow> rows;
    for (auto c : cells) rows.push_back({c, {}, 0.0, 0.0});
    const std::size_t classes = labels.class_count();
    for (auto seed : seeds) {
        const auto split = make_split(labels, {labels_per_class, seed, classes});
        const auto data = make_train_data(x, labels, split);
        for (auto& row : rows) {
            auto cfg = configure_cell(config, row.cell);
            cfg.seed = seed;
            const auto res = train(data, cfg);
            row.errors.push_back(evaluate(res.net, res.bank, res.graph, test, cfg).error_rate);
        }
    }
    for (auto& row : rows) {
        const double n = static_cast<double>(row.errors.size());
        row.mean = std::accumulate(row.errors.begin(), row.errors.end(), 0.0) / n;
        double ss = 0.0;
        for (double e : row.errors) ss += (e - row.mean) * (e - row.mean);
        row.stddev = row.errors.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "cell,mean_error,stddev,seed_errors\n";
    for (const auto& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,", r.mean, r.stddev);
        os << cell_name(r.cell) << ',' << buf;
        for (std::size_t i = 0; i < r.errors.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.6f", r.errors[i]);
            os << (i ? ";" : "") << buf;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace dag
