#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "bnnlab/analysis/harness.hpp"
#include "bnnlab/autodiff/ops.hpp"
#include "bnnlab/core/error.hpp"
#include "bnnlab/core/rng.hpp"
#include "bnnlab/experiment/adam.hpp"
#include "bnnlab/experiment/csv.hpp"
#include "bnnlab/experiment/dataset.hpp"
#include "bnnlab/experiment/kv_config.hpp"
#include "bnnlab/experiment/schedule.hpp"
#include "bnnlab/init/init.hpp"
#include "bnnlab/net/dense_net.hpp"

namespace bnnlab::exp {

struct TrainConfig {
    std::vector<std::size_t> hidden{256, 256, 256};
    norm::NormalizerConfig normalizer = norm::NormalizerConfig::full_bn();
    InitScheme scheme = InitScheme::uniform(1e-2);
    std::vector<double> layer_variances;  // optional per-layer override of scheme.variance
    AdamHyper adam;
    LrSchedule schedule;
    std::size_t epochs = 30;
    std::size_t batch = 100;
    std::uint64_t master_seed = 1;
    bool latent_clip = true;
    bool telemetry = true;
    std::size_t telemetry_batches = 8;
    std::size_t classes = 0;  // classifier outputs; 0 takes the dataset's class count
    bool hidden_bias = false;  // learned bias on hidden layers; with identity, the bias-only variant

    void validate() const {
        if (hidden.size() < 2) {
            throw ContractViolation("need at least two hidden layers");
        }
        for (std::size_t k : hidden) {
            if (k == 0) {
                throw ContractViolation("hidden widths must be positive");
            }
        }
        if (batch < 2) {
            throw ContractViolation("batch size must be at least 2");
        }
        if (!layer_variances.empty() && layer_variances.size() != hidden.size() + 1) {
            throw ContractViolation("layer_variances needs one entry per layer (" +
                                    std::to_string(hidden.size() + 1) + ")");
        }
        schedule.validate(epochs);
        normalizer.validate();
    }

    /// Flat key/value echo of every setting, in a fixed order.
    std::vector<std::pair<std::string, std::string>> echo() const {
        auto join_sizes = [](const std::vector<std::size_t>& v) {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
            return s;
        };
        std::string lv;
        for (std::size_t i = 0; i < layer_variances.size(); ++i) {
            lv += (i ? "," : "") + format_double(layer_variances[i]);
        }
        return {{"hidden", join_sizes(hidden)},
                {"normalizer", normalizer.to_string()},
                {"init", scheme.to_string()},
                {"variance", format_double(scheme.variance)},
                {"layer_variances", lv},
                {"lr", format_double(schedule.base)},
                {"milestones", join_sizes(schedule.milestones)},
                {"decay", format_double(schedule.decay)},
                {"adam_b1", format_double(adam.b1)},
                {"adam_b2", format_double(adam.b2)},
                {"adam_eps", format_double(adam.eps)},
                {"epochs", std::to_string(epochs)},
                {"batch", std::to_string(batch)},
                {"seed", std::to_string(master_seed)},
                {"latent_clip", latent_clip ? "true" : "false"},
                {"telemetry", telemetry ? "true" : "false"},
                {"telemetry_batches", std::to_string(telemetry_batches)},
                {"classes", std::to_string(classes)},
                {"hidden_bias", hidden_bias ? "true" : "false"}};
    }
};

inline TrainConfig parse_train_config(const KvConfig& kv) {
    kv.require_known({"hidden", "normalizer", "init", "variance", "layer_variances", "lr",
                      "milestones", "decay", "adam_b1", "adam_b2", "adam_eps", "epochs", "batch",
                      "seed", "latent_clip", "telemetry", "telemetry_batches", "classes",
                      "hidden_bias"});
    TrainConfig c;
    if (kv.has("hidden")) {
        c.hidden.clear();
        for (auto k : kv.get_u64s("hidden")) c.hidden.push_back(k);
    }
    if (kv.has("normalizer")) c.normalizer = norm::parse_normalizer(kv.get("normalizer"));
    if (kv.has("init")) c.scheme.family = parse_init_family(kv.get("init"));
    c.scheme.variance = kv.get_double("variance", c.scheme.variance);
    if (kv.has("layer_variances")) c.layer_variances = kv.get_doubles("layer_variances");
    c.schedule.base = kv.get_double("lr", c.schedule.base);
    if (kv.has("milestones")) {
        c.schedule.milestones.clear();
        for (auto m : kv.get_u64s("milestones")) c.schedule.milestones.push_back(m);
    }
    c.schedule.decay = kv.get_double("decay", c.schedule.decay);
    c.adam.b1 = kv.get_double("adam_b1", c.adam.b1);
    c.adam.b2 = kv.get_double("adam_b2", c.adam.b2);
    c.adam.eps = kv.get_double("adam_eps", c.adam.eps);
    c.epochs = kv.get_u64("epochs", c.epochs);
    c.batch = kv.get_u64("batch", c.batch);
    c.master_seed = kv.get_u64("seed", c.master_seed);
    c.latent_clip = kv.get_bool("latent_clip", c.latent_clip);
    c.telemetry = kv.get_bool("telemetry", c.telemetry);
    c.telemetry_batches = kv.get_u64("telemetry_batches", c.telemetry_batches);
    c.classes = kv.get_u64("classes", c.classes);
    c.hidden_bias = kv.get_bool("hidden_bias", c.hidden_bias);
    c.validate();
    return c;
}

/**
 * Dense classifier layout: the first layer is full-precision, the middle
 * layers are binary with sign activations, the last hidden layer feeds a
 * ReLU into a full-precision linear classifier with bias. Every hidden
 * layer uses the configured normalizer.
 */
inline NetworkSpec classifier_spec(const TrainConfig& cfg, std::size_t input_dim,
                                   std::size_t classes) {
    cfg.validate();
    NetworkSpec spec;
    spec.batch = cfg.batch;
    spec.widths.push_back(input_dim);
    spec.widths.insert(spec.widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    spec.widths.push_back(classes);
    const std::size_t depth = spec.depth();
    for (std::size_t l = 1; l <= depth; ++l) {
        LayerSpec ls;
        ls.normalizer = cfg.normalizer;
        ls.binary = l != 1 && l != depth;
        ls.activation = l == depth - 1 ? Activation::Relu : Activation::Sign;
        ls.bias = cfg.hidden_bias;
        if (l == depth) {
            ls.normalizer = norm::NormalizerConfig::identity();
            ls.activation = Activation::Linear;
            ls.bias = true;
        }
        spec.layers.push_back(ls);
    }
    spec.validate();
    return spec;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
};

/**
 * Outcome of one training run. Row 0 of `epochs` is the untrained network
 * (loss and accuracy in eval mode, lr 0); row e > 0 holds the mean
 * mini-batch loss of epoch e and the test accuracy after it.
 */
struct RunRecord {
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<EpochRecord> epochs;
    std::vector<double> grad_variance;  // epoch-0 Var(dL/ds^l), l = 1..L; empty unless requested
    bool failed = false;
    std::string failure;
    double wall_seconds = 0.0;

    double final_accuracy() const {
        return epochs.empty() ? std::numeric_limits<double>::quiet_NaN() : epochs.back().test_accuracy;
    }
};

namespace detail {

inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kShuffleStream = 1;  // + epoch

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin,
                          std::size_t end) {
    Matrix out(end - begin, x.cols());
    for (std::size_t i = begin; i < end; ++i) {
        const auto src = x.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i - begin).begin());
    }
    return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<std::size_t>& idx,
                                      std::size_t begin, std::size_t end) {
    std::vector<int> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(y[idx[i]]);
    return out;
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline EvalResult evaluate(const DenseNet& net, const Dataset& d, std::size_t chunk = 500) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < d.size(); b += chunk) {
        const std::size_t e = std::min(d.size(), b + chunk);
        const Matrix x = gather_rows(d.x, idx, b, e);
        const auto y = gather_labels(d.y, idx, b, e);
        const ForwardPass fp = net.forward(x, {norm::Mode::Eval, ad::SteMode::Clipped});
        const Matrix& logits = fp.tape.value(fp.output);
        loss_sum += ad::softmax_cross_entropy_forward(logits, y) * static_cast<double>(e - b);
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols(); ++j) {
                if (logits(i, j) > logits(i, best)) best = j;
            }
            correct += static_cast<int>(best) == y[i];
        }
    }
    return {loss_sum / static_cast<double>(d.size()),
            static_cast<double>(correct) / static_cast<double>(d.size())};
}

/// Var(dL/ds^l) under the training loss, pooled over the first mini-batches
/// in data order, before any update.
inline std::vector<double> gradient_telemetry(const DenseNet& net, const Dataset& d,
                                              std::size_t batch, std::size_t batches) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t depth = net.spec().depth();
    std::vector<analysis::detail::Pooled> pooled(depth);
    for (std::size_t k = 0; k < batches && (k + 1) * batch <= d.size(); ++k) {
        const Matrix x = gather_rows(d.x, idx, k * batch, (k + 1) * batch);
        const auto y = gather_labels(d.y, idx, k * batch, (k + 1) * batch);
        ForwardPass fp = net.forward(x, {norm::Mode::Train, ad::SteMode::Clipped});
        const ad::Var loss = ad::softmax_cross_entropy(fp.tape, fp.output, y);
        fp.tape.backward(loss);
        for (std::size_t l = 0; l < depth; ++l) {
            pooled[l].merge(analysis::detail::Pooled::of(fp.tape.grad(fp.dot[l])));
        }
    }
    std::vector<double> out;
    for (const auto& p : pooled) out.push_back(p.unbiased_variance());
    return out;
}

struct ParamSlot {
    Matrix* value;
    AdamState state;
    bool clip;
};

}  // namespace detail

inline DenseNet init_classifier(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes) {
    const NetworkSpec spec = classifier_spec(cfg, input_dim, classes);
    std::vector<InitScheme> schemes(spec.depth(), cfg.scheme);
    for (std::size_t l = 0; l < cfg.layer_variances.size(); ++l) {
        schemes[l].variance = cfg.layer_variances[l];
    }
    RngStream rng(cfg.master_seed, detail::kInitStream);
    return DenseNet(spec, schemes, rng);
}

/**
 * Trains the classifier with Adam on shuffled mini-batches (the trailing
 * partial batch is dropped). Non-finite losses or activations end the run
 * and mark it failed instead of throwing.
 */
inline RunRecord train(const TrainConfig& cfg, const DataSplit& data) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    if (data.train.size() < cfg.batch) {
        throw ContractViolation("training set smaller than one batch");
    }
    const std::size_t classes = cfg.classes == 0 ? data.train.classes : cfg.classes;
    if (classes < data.train.classes || classes < 2) {
        throw ContractViolation("classifier has " + std::to_string(classes) + " outputs for " +
                                std::to_string(data.train.classes) + " classes");
    }
    DenseNet net = init_classifier(cfg, data.train.dim(), classes);
    const std::size_t depth = net.spec().depth();

    RunRecord rec;
    rec.config = cfg.echo();

    std::vector<detail::ParamSlot> slots;
    for (std::size_t l = 1; l <= depth; ++l) {
        LayerState& st = net.layer(l);
        const bool binary = net.spec().layer(l).binary;
        slots.push_back({&st.weights, AdamState::for_shape(st.weights), binary && cfg.latent_clip});
        if (st.bias) slots.push_back({&*st.bias, AdamState::for_shape(*st.bias), false});
        if (st.bn) {
            slots.push_back({&st.bn->gamma, AdamState::for_shape(st.bn->gamma), false});
            slots.push_back({&st.bn->beta, AdamState::for_shape(st.bn->beta), false});
        }
    }

    auto fail = [&](const std::string& why) {
        rec.failed = true;
        rec.failure = why;
    };

    try {
        if (cfg.telemetry) {
            rec.grad_variance = detail::gradient_telemetry(net, data.train, cfg.batch, cfg.telemetry_batches);
        }
        const auto e0 = detail::evaluate(net, data.test);
        const auto l0 = detail::evaluate(net, data.train);
        rec.epochs.push_back({0, 0.0, l0.loss, e0.accuracy});

        std::vector<std::size_t> order(data.train.size());
        const std::size_t steps = data.train.size() / cfg.batch;
        for (std::size_t epoch = 1; epoch <= cfg.epochs && !rec.failed; ++epoch) {
            const double lr = lr_at_epoch(cfg.schedule, epoch - 1);
            std::iota(order.begin(), order.end(), std::size_t{0});
            RngStream shuffle(cfg.master_seed, detail::kShuffleStream + epoch);
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[shuffle.below(i)]);
            }
            double loss_sum = 0.0;
            for (std::size_t step = 0; step < steps; ++step) {
                const Matrix x = detail::gather_rows(data.train.x, order, step * cfg.batch, (step + 1) * cfg.batch);
                const auto y = detail::gather_labels(data.train.y, order, step * cfg.batch, (step + 1) * cfg.batch);
                ForwardPass fp = net.forward(x, {norm::Mode::Train, ad::SteMode::Clipped});
                const ad::Var loss = ad::softmax_cross_entropy(fp.tape, fp.output, y);
                const double lv = fp.tape.value(loss)(0, 0);
                if (!std::isfinite(lv)) {
                    fail("non-finite loss at epoch " + std::to_string(epoch));
                    break;
                }
                loss_sum += lv;
                fp.tape.backward(loss);
                net.update_running(fp);

                std::size_t slot = 0;
                for (std::size_t l = 1; l <= depth; ++l) {
                    adam_step(*slots[slot].value, fp.tape.grad(fp.weights[l - 1]), slots[slot].state,
                              cfg.adam, lr, slots[slot].clip);
                    ++slot;
                    if (fp.biases[l - 1]) {
                        adam_step(*slots[slot].value, fp.tape.grad(*fp.biases[l - 1]), slots[slot].state,
                                  cfg.adam, lr);
                        ++slot;
                    }
                    if (fp.gammas[l - 1]) {
                        adam_step(*slots[slot].value, fp.tape.grad(*fp.gammas[l - 1]), slots[slot].state,
                                  cfg.adam, lr);
                        ++slot;
                        adam_step(*slots[slot].value, fp.tape.grad(*fp.betas[l - 1]), slots[slot].state,
                                  cfg.adam, lr);
                        ++slot;
                    }
                }
            }
            if (rec.failed) break;
            const auto ev = detail::evaluate(net, data.test);
            rec.epochs.push_back({epoch, lr, loss_sum / static_cast<double>(steps), ev.accuracy});
        }
    } catch (const NumericError& e) {
        fail(e.what());
    } catch (const SingularityError& e) {
        fail(e.what());
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

inline CsvTable epochs_csv(const RunRecord& r) {
    CsvTable t;
    t.header = {"epoch", "lr", "train_loss", "test_accuracy"};
    for (const auto& e : r.epochs) {
        t.rows.push_back({std::to_string(e.epoch), format_double(e.lr), format_double(e.train_loss),
                          format_double(e.test_accuracy)});
    }
    return t;
}

/// Key/value summary: config echo, outcome and telemetry. Wall time is left
/// out so repeated runs produce identical files.
inline CsvTable summary_csv(const RunRecord& r) {
    CsvTable t;
    t.header = {"key", "value"};
    for (const auto& [k, v] : r.config) t.rows.push_back({k, v});
    t.rows.push_back({"status", r.failed ? "failed" : "ok"});
    t.rows.push_back({"failure", r.failure});
    t.rows.push_back({"final_accuracy", format_double(r.final_accuracy())});
    for (std::size_t l = 0; l < r.grad_variance.size(); ++l) {
        t.rows.push_back({"epoch0_grad_var_l" + std::to_string(l + 1), format_double(r.grad_variance[l])});
    }
    return t;
}

}  // namespace bnnlab::exp
