#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnnlab/autodiff/grad_check.hpp"
#include "bnnlab/autodiff/ops.hpp"

namespace bnnlab::exp {

struct OpCheck {
    std::string op;
    std::size_t instances = 0;
    std::size_t failures = 0;
    double worst = 0.0;
    std::uint64_t worst_seed = 0;
};

/// Finite-difference check of every differentiable op on `seeds` random instances each.
inline std::vector<OpCheck> verify_gradients(std::size_t seeds, double tolerance = 1e-6) {
    using namespace ad;
    const auto bn_cfg = norm::NormalizerConfig::full_bn();
    struct Case {
        const char* name;
        GraphBuilder build;
        std::vector<std::pair<std::size_t, std::size_t>> shapes;
    };
    const std::vector<Case> cases{
        {"linear", [](Tape& t, std::span<const Var> in) { return linear(t, in[0], in[1]); },
         {{4, 3}, {3, 2}}},
        {"batch_norm",
         [&](Tape& t, std::span<const Var> in) {
             return batch_norm(t, in[0], in[1], in[2], bn_cfg, norm::Mode::Train).z;
         },
         {{8, 4}, {1, 4}, {1, 4}}},
        {"center_scale",
         [](Tape& t, std::span<const Var> in) { return center_scale(t, in[0], 0.125, norm::Mode::Train).z; },
         {{8, 4}}},
        {"relu", [](Tape& t, std::span<const Var> in) { return relu(t, in[0]); }, {{6, 5}}},
        {"add_row", [](Tape& t, std::span<const Var> in) { return add_row(t, in[0], in[1]); },
         {{6, 5}, {1, 5}}},
        {"softmax_cross_entropy",
         [](Tape& t, std::span<const Var> in) {
             return softmax_cross_entropy(t, linear(t, in[0], in[1]), {0, 1, 2, 0, 1});
         },
         {{5, 4}, {4, 3}}},
    };
    std::vector<OpCheck> out;
    for (const auto& c : cases) {
        OpCheck oc;
        oc.op = c.name;
        for (std::uint64_t seed = 0; seed < seeds; ++seed) {
            RngStream rng(seed, 101);
            std::vector<Matrix> inputs;
            for (auto [r, k] : c.shapes) {
                Matrix m(r, k);
                for (double& v : m.values()) v = rng.normal();
                inputs.push_back(std::move(m));
            }
            const auto rep = grad_check(c.build, inputs, tolerance, seed);
            ++oc.instances;
            oc.failures += !rep.pass;
            if (rep.worst > oc.worst) {
                oc.worst = rep.worst;
                oc.worst_seed = seed;
            }
        }
        out.push_back(oc);
    }
    return out;
}

}  // namespace bnnlab::exp
