#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "usm/config.hpp"
#include "usm/errors.hpp"
#include "usm/pipeline.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Options {
    std::string config_path;
    std::string out = "out";
    std::string data;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool no_tau_gate = false;
    bool no_confidence_weight = false;
    bool no_crf = false;
    std::string crf_target;
    bool force = false;
    std::vector<std::string> overrides;
};

usm::PipelineConfig build_config(const Options& o) {
    usm::PipelineConfig cfg = o.config_path.empty() ? usm::parse_config("") : usm::load_config(o.config_path);
    for (const std::string& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw usm::ConfigError("--set expects key=value, got '" + kv + "'");
        usm::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed_set) cfg.seed = o.seed;
    if (o.no_tau_gate) cfg.align.tau_gate = false;
    if (o.no_confidence_weight) cfg.loss.confidence_weight = false;
    if (o.no_crf) cfg.crf_enabled = false;
    if (!o.crf_target.empty()) usm::set_config_value(cfg, "crf.target", o.crf_target);
    cfg.finalize();
    return cfg;
}

void print_summary(const usm::EvalSummary& s) {
    std::printf("miou=%.2f\naccuracy=%.2f\nkmeans_miou=%.2f\nkmeans_accuracy=%.2f\npseudo_miou=%.2f\npseudo_accuracy=%.2f\n",
                s.pipeline.miou, s.pipeline.accuracy, s.kmeans_baseline.miou, s.kmeans_baseline.accuracy,
                s.pseudo_labels.miou, s.pseudo_labels.accuracy);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised segmentation pipeline: region proposals, pseudo-labels, confidence-aware training"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { o.seed = v; o.seed_set = true; }, "global seed");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_option("--data", o.data, "directory with train/val/test manifests (default OUT/data)");
        sub->add_option("--set", o.overrides, "override one config entry, key=value");
        sub->add_flag("--no-tau-gate", o.no_tau_gate, "every target soft");
        sub->add_flag("--no-confidence-weight", o.no_confidence_weight, "drop the c^beta factor");
        sub->add_flag("--no-crf", o.no_crf, "skip CRF refinement");
        sub->add_option("--crf-target", o.crf_target, "predictions or pseudo_labels")
            ->check(CLI::IsMember({"predictions", "pseudo_labels"}));
        sub->add_flag("--force", o.force, "ignore stale upstream stamps / recompute every stage");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic split");
    CLI::App* stage1 = app.add_subcommand("stage1", "region maps, KMeans and pre-pseudo-labels");
    CLI::App* train = app.add_subcommand("train", "build targets and train the head");
    CLI::App* predict = app.add_subcommand("predict", "predict (and refine) the test split");
    CLI::App* eval = app.add_subcommand("eval", "score the test split");
    CLI::App* all = app.add_subcommand("all", "run every stage, reusing up-to-date ones");
    for (CLI::App* sub : {synth, stage1, train, predict, eval, all}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        const usm::PipelineConfig cfg = build_config(o);
        const usm::Layout layout(o.out, o.data);
        if (synth->parsed()) {
            if (!o.data.empty()) throw usm::ConfigError("synth writes OUT/data; --data is not accepted");
            usm::run_synth(cfg, layout);
        } else if (stage1->parsed()) {
            usm::run_stage1(cfg, layout);
        } else if (train->parsed()) {
            usm::run_train(cfg, layout, o.force);
        } else if (predict->parsed()) {
            usm::run_predict(cfg, layout, o.force);
        } else if (eval->parsed()) {
            print_summary(usm::run_eval(cfg, layout, o.force));
        } else if (all->parsed()) {
            print_summary(usm::run_all(cfg, layout, o.force, &std::cerr));
        }
    } catch (const usm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const usm::StageError& e) {
        std::cerr << "error in stage " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}
