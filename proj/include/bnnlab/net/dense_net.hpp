#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bnnlab/autodiff/ops.hpp"
#include "bnnlab/autodiff/tape.hpp"
#include "bnnlab/core/rng.hpp"
#include "bnnlab/init/init.hpp"
#include "bnnlab/init/network_spec.hpp"
#include "bnnlab/norm/batch_norm.hpp"
#include "bnnlab/norm/normalizer.hpp"

namespace bnnlab {

/// Trainable state of one dense layer.
struct LayerState {
    Matrix weights;                 // latent K_in x K_out
    std::optional<Matrix> bias;     // 1 x K_out
    std::optional<norm::BNParams> bn;
    norm::RunningStats running;
};

struct ForwardOptions {
    norm::Mode mode = norm::Mode::Train;
    ad::SteMode activation_ste = ad::SteMode::Clipped;
};

/// One recorded forward pass. The tape owns every intermediate value.
struct ForwardPass {
    ad::Tape tape;
    std::vector<ad::Var> weights;                // latent weight leaves
    std::vector<std::optional<ad::Var>> biases;
    std::vector<std::optional<ad::Var>> gammas;
    std::vector<std::optional<ad::Var>> betas;
    std::vector<ad::Var> dot;                    // s^l, layer l at index l - 1
    std::vector<ad::Var> activation;             // x^l for hidden layers
    std::vector<norm::BatchStats> stats;         // per layer (empty when unused)
    std::vector<std::vector<double>> centers;    // centering means per layer
    ad::Var output;                              // s^L
};

/**
 * Dense network built from a NetworkSpec.
 *
 * Hidden layer l computes s^l = x^{l-1} W (+ b), normalizes it and applies
 * its activation. The top layer L only computes s^L (+ b): it is either the
 * classifier producing logits or the point where the analysis harness
 * injects a synthetic gradient, so its normalizer and activation are unused.
 */
class DenseNet {
public:
    DenseNet(NetworkSpec spec, const InitScheme& scheme, RngStream& rng)
        : DenseNet(spec, std::vector<InitScheme>(spec.depth(), scheme), rng) {}

    /// One scheme per layer, drawn from the same stream in layer order.
    DenseNet(NetworkSpec spec, std::span<const InitScheme> schemes, RngStream& rng)
        : spec_(std::move(spec)) {
        spec_.validate();
        if (schemes.size() != spec_.depth()) {
            throw ContractViolation("need one init scheme per layer");
        }
        for (std::size_t l = 1; l <= spec_.depth(); ++l) {
            const LayerSpec& ls = spec_.layer(l);
            LayerState st;
            st.weights = sample_weights(schemes[l - 1], spec_.fan_in(l), spec_.width(l), rng);
            if (ls.bias) {
                st.bias = Matrix(1, spec_.width(l), 0.0);
            }
            if (l < spec_.depth() && ls.normalizer.kind == norm::Kind::FullBN) {
                st.bn = norm::BNParams::initial(spec_.width(l));
            }
            st.running = norm::RunningStats::fresh(spec_.width(l));
            layers_.push_back(std::move(st));
        }
    }

    DenseNet(NetworkSpec spec, std::vector<LayerState> layers)
        : spec_(std::move(spec)), layers_(std::move(layers)) {
        spec_.validate();
        if (layers_.size() != spec_.depth()) {
            throw ContractViolation("layer state count does not match spec");
        }
    }

    const NetworkSpec& spec() const noexcept { return spec_; }
    std::vector<LayerState>& layers() noexcept { return layers_; }
    const std::vector<LayerState>& layers() const noexcept { return layers_; }
    LayerState& layer(std::size_t l) { return layers_.at(l - 1); }
    const LayerState& layer(std::size_t l) const { return layers_.at(l - 1); }

    ForwardPass forward(const Matrix& x, const ForwardOptions& opt) const {
        if (x.cols() != spec_.widths.front()) {
            throw ShapeError("input has " + std::to_string(x.cols()) + " features, network expects " +
                             std::to_string(spec_.widths.front()));
        }
        ForwardPass fp;
        ad::Tape& t = fp.tape;
        const std::size_t depth = spec_.depth();
        fp.stats.resize(depth);
        fp.centers.resize(depth);
        fp.biases.resize(depth);
        fp.gammas.resize(depth);
        fp.betas.resize(depth);

        ad::Var h = t.leaf(x);
        for (std::size_t l = 1; l <= depth; ++l) {
            const LayerSpec& ls = spec_.layer(l);
            const LayerState& st = layer(l);
            ad::Var w = t.leaf(st.weights);
            fp.weights.push_back(w);
            ad::Var w_eff = ls.binary ? ad::sign_ste(t, w, ad::SteMode::Clipped) : w;
            ad::Var s = ad::linear(t, h, w_eff);
            if (st.bias) {
                ad::Var b = t.leaf(*st.bias);
                fp.biases[l - 1] = b;
                s = ad::add_row(t, s, b);
            }
            fp.dot.push_back(s);
            if (l == depth) {
                fp.output = s;
                break;
            }
            ad::Var z = s;
            switch (ls.normalizer.kind) {
            case norm::Kind::FullBN: {
                ad::Var g = t.leaf(st.bn->gamma);
                ad::Var be = t.leaf(st.bn->beta);
                fp.gammas[l - 1] = g;
                fp.betas[l - 1] = be;
                auto r = ad::batch_norm(t, s, g, be, ls.normalizer, opt.mode, &st.running);
                z = r.z;
                fp.stats[l - 1] = std::move(r.stats);
                break;
            }
            case norm::Kind::CenterScale:
            case norm::Kind::CenterOnly: {
                const double c = ls.normalizer.resolved_scale(spec_.fan_in(l));
                auto r = ad::center_scale(t, s, c, opt.mode, &st.running.mean);
                z = r.z;
                fp.centers[l - 1] = std::move(r.mean);
                break;
            }
            case norm::Kind::Identity:
                break;
            }
            switch (ls.activation) {
            case Activation::Sign:
                h = ad::sign_ste(t, z, opt.activation_ste);
                break;
            case Activation::Relu:
                h = ad::relu(t, z);
                break;
            case Activation::Linear:
                h = z;
                break;
            }
            fp.activation.push_back(h);
        }
        return fp;
    }

    /// Folds the batch statistics of a train-mode pass into the running averages.
    void update_running(const ForwardPass& fp) {
        for (std::size_t l = 1; l < spec_.depth(); ++l) {
            const auto& cfg = spec_.layer(l).normalizer;
            LayerState& st = layer(l);
            if (cfg.kind == norm::Kind::FullBN) {
                st.running = norm::update_running_stats(st.running, fp.stats[l - 1], cfg.momentum);
            } else if (cfg.centers()) {
                norm::BatchStats bs;
                bs.mean = fp.centers[l - 1];
                st.running = norm::update_running_stats(st.running, bs, cfg.momentum);
            }
        }
    }

private:
    NetworkSpec spec_;
    std::vector<LayerState> layers_;
};

}  // namespace bnnlab
