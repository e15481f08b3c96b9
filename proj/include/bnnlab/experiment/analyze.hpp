#pragma once

#include <string>
#include <vector>

#include "bnnlab/analysis/harness.hpp"
#include "bnnlab/experiment/csv.hpp"
#include "bnnlab/experiment/kv_config.hpp"

namespace bnnlab::exp {

struct AnalysisSpec {
    NetworkSpec net;
    InitScheme scheme = InitScheme::uniform(1e-2);
    analysis::MCConfig mc;
    analysis::CompareModel compare = analysis::CompareModel::Matched;
    double tolerance = 1.33;
};

inline analysis::CompareModel parse_compare_model(const std::string& s) {
    if (s == "matched") return analysis::CompareModel::Matched;
    if (s == "no_norm") return analysis::CompareModel::NoNorm;
    if (s == "bn_leading") return analysis::CompareModel::BnLeading;
    if (s == "bn_exact") return analysis::CompareModel::BnExact;
    throw FormatError("unknown comparison model '" + s + "'");
}

/// Every layer of the analysed net shares one LayerSpec.
inline AnalysisSpec parse_analysis_spec(const KvConfig& kv) {
    kv.require_known({"widths", "normalizer", "binary", "activation", "init", "variance", "input",
                      "ste", "compare", "tolerance", "trials", "batch", "seed", "shat_samples"});
    AnalysisSpec a;
    std::vector<std::size_t> widths;
    for (auto k : kv.get_u64s("widths")) widths.push_back(k);
    LayerSpec layer;
    layer.normalizer = norm::parse_normalizer(kv.get("normalizer", "identity"));
    layer.binary = kv.get_bool("binary", true);
    layer.activation = parse_activation(kv.get("activation", "sign"));
    if (kv.has("init")) a.scheme.family = parse_init_family(kv.get("init"));
    a.scheme.variance = kv.get_double("variance", a.scheme.variance);
    const std::string input = kv.get("input", "rademacher");
    if (input == "rademacher") {
        a.mc.input = analysis::InputDistribution::Rademacher;
    } else if (input == "gaussian") {
        a.mc.input = analysis::InputDistribution::Gaussian;
    } else {
        throw FormatError("unknown input distribution '" + input + "'");
    }
    const std::string ste = kv.get("ste", "identity");
    if (ste == "identity") {
        a.mc.ste = ad::SteMode::Identity;
    } else if (ste == "clipped") {
        a.mc.ste = ad::SteMode::Clipped;
    } else {
        throw FormatError("unknown STE mode '" + ste + "'");
    }
    a.compare = parse_compare_model(kv.get("compare", "matched"));
    a.tolerance = kv.get_double("tolerance", a.tolerance);
    a.mc.trials = kv.get_u64("trials", a.mc.trials);
    a.mc.batch = kv.get_u64("batch", a.mc.batch);
    a.mc.master_seed = kv.get_u64("seed", a.mc.master_seed);
    a.mc.shat_samples = kv.get_u64("shat_samples", a.mc.shat_samples);
    a.net = NetworkSpec::uniform(std::move(widths), layer, a.mc.batch);
    a.net.validate();
    return a;
}

inline CsvTable report_csv(const analysis::GradVarianceReport& r,
                           const std::vector<analysis::Verdict>& verdicts) {
    CsvTable t;
    t.header = {"layer", "fan_in", "width", "samples", "measured", "predicted_no_norm",
                "predicted_bn_leading", "predicted_bn_exact", "predicted_matched", "shat_sq_var",
                "measured_step_ratio", "predicted_step_ratio", "ratio", "pass"};
    for (std::size_t i = 0; i < r.layers.size(); ++i) {
        const auto& l = r.layers[i];
        t.rows.push_back({std::to_string(l.layer), std::to_string(l.fan_in), std::to_string(l.width),
                          std::to_string(l.samples), format_double(l.measured),
                          format_double(l.predicted_no_norm), format_double(l.predicted_bn_leading),
                          format_double(l.predicted_bn_exact), format_double(l.predicted_matched),
                          format_double(l.shat_sq_var), format_double(verdicts[i].measured),
                          format_double(verdicts[i].predicted), format_double(verdicts[i].ratio),
                          verdicts[i].pass ? "true" : "false"});
    }
    return t;
}

}  // namespace bnnlab::exp
