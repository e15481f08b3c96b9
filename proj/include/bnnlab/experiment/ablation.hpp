#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bnnlab/analysis/parallel.hpp"
#include "bnnlab/experiment/csv.hpp"
#include "bnnlab/experiment/dataset.hpp"
#include "bnnlab/experiment/kv_config.hpp"
#include "bnnlab/experiment/train.hpp"

namespace bnnlab::exp {

/// Normalizer x variance grid; every cell trains `seeds` runs with master
/// seeds base.master_seed, base.master_seed + 1, ...
struct AblationSuite {
    TrainConfig base;
    DatasetSpec data;
    std::vector<norm::NormalizerConfig> normalizers;
    std::vector<double> variances;
    std::size_t seeds = 3;
};

inline AblationSuite parse_suite(const KvConfig& kv) {
    kv.require_known({"config", "data", "normalizers", "variances", "seeds"});
    AblationSuite s;
    s.base = parse_train_config(KvConfig::load(kv.get_path("config")));
    s.data = parse_dataset_spec(KvConfig::load(kv.get_path("data")));
    for (const auto& n : kv.get_strings("normalizers")) {
        s.normalizers.push_back(norm::parse_normalizer(n));
    }
    s.variances = kv.has("variances") ? kv.get_doubles("variances")
                                      : std::vector<double>{s.base.scheme.variance};
    s.seeds = kv.get_u64("seeds", s.seeds);
    if (s.seeds == 0) {
        throw ContractViolation("an ablation cell needs at least one seed");
    }
    return s;
}

inline const std::vector<std::string>& ablation_header() {
    static const std::vector<std::string> h{
        "normalizer",     "init",          "variance",           "seeds",
        "best_accuracy",  "mean_accuracy", "seed_accuracies",    "failed_runs",
        "epoch0_grad_var_l1", "epoch0_grad_var", "aggregation", "error"};
    return h;
}

namespace detail {

struct CellRun {
    RunRecord record;
    std::string error;
};

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_double(v[i]);
    return s;
}

}  // namespace detail

/**
 * Trains every (normalizer, variance, seed) run, concurrently when workers
 * allow, and reduces each cell in grid order. A cell's reported accuracy is
 * the best final test accuracy over its seeds; telemetry comes from its
 * first seed. Exceptions are recorded in the row and the suite continues.
 */
inline CsvTable run_ablation(const AblationSuite& suite, const DataSplit& data, std::size_t workers = 0) {
    CsvTable t;
    t.header = ablation_header();
    const std::size_t cells = suite.normalizers.size() * suite.variances.size();
    if (cells == 0) {
        return t;
    }
    const std::size_t runs = cells * suite.seeds;
    const auto results = analysis::run_indexed<detail::CellRun>(
        runs, workers == 0 ? analysis::workers_from_env() : workers, [&](std::size_t i) {
            const std::size_t cell = i / suite.seeds;
            const std::size_t seed = i % suite.seeds;
            TrainConfig cfg = suite.base;
            cfg.normalizer = suite.normalizers[cell / suite.variances.size()];
            cfg.scheme.variance = suite.variances[cell % suite.variances.size()];
            cfg.master_seed = suite.base.master_seed + seed;
            detail::CellRun out;
            try {
                out.record = train(cfg, data);
            } catch (const std::exception& e) {
                out.error = e.what();
            }
            return out;
        });

    for (std::size_t cell = 0; cell < cells; ++cell) {
        const auto& normalizer = suite.normalizers[cell / suite.variances.size()];
        const double variance = suite.variances[cell % suite.variances.size()];
        std::vector<double> accs;
        std::size_t failed = 0;
        std::string error;
        for (std::size_t s = 0; s < suite.seeds; ++s) {
            const auto& r = results[cell * suite.seeds + s];
            if (!r.error.empty()) {
                error += (error.empty() ? "" : "; ") + ("seed " + std::to_string(s) + ": " + r.error);
                accs.push_back(std::numeric_limits<double>::quiet_NaN());
                ++failed;
                continue;
            }
            if (r.record.failed) {
                ++failed;
                error += (error.empty() ? "" : "; ") + ("seed " + std::to_string(s) + ": " + r.record.failure);
            }
            accs.push_back(r.record.final_accuracy());
        }
        double best = std::numeric_limits<double>::quiet_NaN();
        double sum = 0.0;
        std::size_t finite = 0;
        for (double a : accs) {
            if (std::isfinite(a)) {
                best = std::isnan(best) ? a : std::max(best, a);
                sum += a;
                ++finite;
            }
        }
        const double mean = finite ? sum / static_cast<double>(finite) : std::numeric_limits<double>::quiet_NaN();
        const auto& first = results[cell * suite.seeds].record;
        const double gv1 = first.grad_variance.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                       : first.grad_variance.front();
        t.rows.push_back({normalizer.to_string(), suite.base.scheme.to_string(), format_double(variance),
                          std::to_string(suite.seeds), format_double(best), format_double(mean),
                          detail::join(accs), std::to_string(failed), format_double(gv1),
                          detail::join(first.grad_variance),
                          "max of final test accuracy over " + std::to_string(suite.seeds) + " seeds",
                          error});
    }
    return t;
}

}  // namespace bnnlab::exp
