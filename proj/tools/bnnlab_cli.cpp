#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bnnlab/experiment/ablation.hpp"
#include "bnnlab/experiment/analyze.hpp"
#include "bnnlab/experiment/csv.hpp"
#include "bnnlab/experiment/train.hpp"
#include "bnnlab/experiment/verify.hpp"

namespace {

using namespace bnnlab;

void write_table(const exp::CsvTable& t, const std::string& path) {
    if (path.empty() || path == "-") {
        exp::write_csv(std::cout, t);
    } else {
        exp::emit_csv(t, path);
    }
}

int cmd_verify(std::size_t seeds) {
    bool ok = true;
    for (const auto& c : exp::verify_gradients(seeds)) {
        std::printf("%-22s %3zu/%zu pass  worst rel err %.3e (seed %llu)\n", c.op.c_str(),
                    c.instances - c.failures, c.instances, c.worst,
                    static_cast<unsigned long long>(c.worst_seed));
        ok = ok && c.failures == 0;
    }
    return ok ? 0 : 1;
}

struct AnalyzeArgs {
    std::string spec;
    std::optional<std::size_t> trials, batch;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_analyze(const AnalyzeArgs& a) {
    auto spec = exp::parse_analysis_spec(exp::KvConfig::load(a.spec));
    if (a.trials) spec.mc.trials = *a.trials;
    if (a.batch) {
        spec.mc.batch = *a.batch;
        spec.net.batch = *a.batch;
    }
    if (a.seed) spec.mc.master_seed = *a.seed;
    const auto report = analysis::measure_gradient_variance(spec.net, spec.scheme, spec.mc);
    const auto verdicts = analysis::compare_report(report, spec.tolerance, spec.compare);
    write_table(exp::report_csv(report, verdicts), a.out);
    std::cerr << report.note << "\n";
    for (const auto& v : verdicts) {
        if (!v.pass) return 3;
    }
    return 0;
}

struct TrainArgs {
    std::string config, data, out, summary;
};

int cmd_train(const TrainArgs& a) {
    const auto cfg = exp::parse_train_config(exp::KvConfig::load(a.config));
    const auto data = exp::load_dataset(exp::parse_dataset_spec(exp::KvConfig::load(a.data)));
    const auto rec = exp::train(cfg, data);
    write_table(exp::epochs_csv(rec), a.out);
    if (!a.summary.empty()) {
        exp::emit_csv(exp::summary_csv(rec), a.summary);
    }
    std::cerr << (rec.failed ? "run failed: " + rec.failure : "run ok") << ", final accuracy "
              << rec.final_accuracy() << ", " << rec.wall_seconds << " s\n";
    return rec.failed ? 4 : 0;
}

int cmd_ablate(const std::string& suite_path, const std::string& out) {
    const auto suite = exp::parse_suite(exp::KvConfig::load(suite_path));
    const auto data = exp::load_dataset(suite.data);
    write_table(exp::run_ablation(suite, data), out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Binary network normalization laboratory"};
    app.require_subcommand(1);

    std::size_t verify_seeds = 100;
    auto* verify = app.add_subcommand("verify", "Finite-difference check of every differentiable op");
    verify->add_option("--seeds", verify_seeds, "Random instances per op")->check(CLI::PositiveNumber);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Monte-Carlo gradient variance at initialization");
    analyze->add_option("--spec", an.spec, "Network description (key = value)")->required()->check(CLI::ExistingFile);
    analyze->add_option("--trials", an.trials, "Monte-Carlo trials (at least 30)");
    analyze->add_option("--batch", an.batch, "Batch size");
    analyze->add_option("--seed", an.seed, "Master seed");
    analyze->add_option("--out", an.out, "CSV path (stdout when omitted)");

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train one classifier");
    train->add_option("--config", tr.config, "Training config (key = value)")->required()->check(CLI::ExistingFile);
    train->add_option("--data", tr.data, "Dataset description (key = value)")->required()->check(CLI::ExistingFile);
    train->add_option("--out", tr.out, "Per-epoch CSV path (stdout when omitted)");
    train->add_option("--summary", tr.summary, "Summary CSV path");

    std::string suite, ablate_out;
    auto* ablate = app.add_subcommand("ablate", "Normalizer x variance ablation grid");
    ablate->add_option("--suite", suite, "Suite description (key = value)")->required()->check(CLI::ExistingFile);
    ablate->add_option("--out", ablate_out, "CSV path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*verify) return cmd_verify(verify_seeds);
        if (*analyze) return cmd_analyze(an);
        if (*train) return cmd_train(tr);
        if (*ablate) return cmd_ablate(suite, ablate_out);
    } catch (const bnnlab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
