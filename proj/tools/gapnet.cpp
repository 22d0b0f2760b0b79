#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gapnet/gapnet.hpp"
#include "gapnet/verify.hpp"

namespace {

using gapnet::RunConfig;

struct CommonFlags {
    std::string config_path;
    std::string out;
    long long seed = -1;
    long long k = -1;
    long long heads = -1;
    long long channels = -1;
    long long epochs = -1;
    bool constant_coefficients = false;
    bool no_attention_pooling = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "flat key = value config file");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--k", f.k, "neighbors per point");
    cmd->add_option("--heads", f.heads, "attention heads");
    cmd->add_option("--channels", f.channels, "encoding channels per head");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_flag("--constant-coefficients", f.constant_coefficients,
                  "pin every attention coefficient to 1/k");
    cmd->add_flag("--no-attention-pooling", f.no_attention_pooling,
                  "drop the pooled local signature from the trunk");
}

RunConfig resolve_config(const CommonFlags& f) {
    RunConfig cfg;
    if (!f.config_path.empty()) cfg = gapnet::load_config_file(f.config_path);
    if (!f.out.empty()) cfg.out = f.out;
    if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (f.k >= 0) cfg.k = static_cast<std::size_t>(f.k);
    if (f.heads >= 0) cfg.heads = static_cast<std::size_t>(f.heads);
    if (f.channels >= 0) cfg.channels = static_cast<std::size_t>(f.channels);
    if (f.epochs >= 0) cfg.epochs = static_cast<std::size_t>(f.epochs);
    if (f.constant_coefficients) cfg.constant_coefficients = true;
    if (f.no_attention_pooling) cfg.disable_attention_pooling = true;
    return cfg;
}

int cmd_train(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    gapnet::TrainResult result = gapnet::train_loop<float>(cfg);
    std::printf("trained %zu epochs, %zu parameters\n", cfg.epochs, result.parameter_count);
    if (!result.log.empty()) {
        const auto& last = result.log.back();
        std::printf("final: loss=%.4f train_acc=%.4f", last.train_loss, last.train_acc);
        if (last.eval_overall >= 0) std::printf(" eval_overall=%.4f", last.eval_overall);
        if (last.eval_miou >= 0) std::printf(" eval_miou=%.4f", last.eval_miou);
        std::printf("\n");
    }
    std::printf("checkpoint: %s\n", result.checkpoint_path.c_str());
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint_path,
             const std::string& manifest_path) {
    auto data = gapnet::load_checkpoint<float>(checkpoint_path);
    RunConfig cfg = gapnet::parse_config_text(data.config_echo);
    if (!flags.out.empty()) cfg.out = flags.out;
    gapnet::validate_config(cfg);

    cfg.test_manifest = manifest_path;
    auto set = gapnet::load_set<float>(manifest_path);
    auto batches = gapnet::make_eval_batches(set, cfg);

    std::mt19937 rng = gapnet::make_rng(0);
    gapnet::Tape<float> tape;
    nlohmann::json report;
    report["task"] = cfg.task;
    report["checkpoint"] = checkpoint_path;
    report["shapes"] = set.clouds.size();

    if (cfg.task == "classify") {
        gapnet::Classifier<float> model(gapnet::classifier_config(cfg), rng);
        std::vector<gapnet::NamedTensorRef<float>> refs;
        model.collect_named(refs);
        gapnet::apply_checkpoint(data, refs);
        const gapnet::Metrics m =
            gapnet::evaluate_classifier(tape, model, batches, cfg.num_classes);
        std::printf("overall accuracy:    %.4f\n", m.overall_accuracy);
        std::printf("mean class accuracy: %.4f\n", m.mean_class_accuracy);
        report["overall_accuracy"] = m.overall_accuracy;
        report["mean_class_accuracy"] = m.mean_class_accuracy;
    } else {
        gapnet::Segmenter<float> model(gapnet::segmenter_config(cfg), rng);
        std::vector<gapnet::NamedTensorRef<float>> refs;
        model.collect_named(refs);
        gapnet::apply_checkpoint(data, refs);
        const auto parts = gapnet::parse_part_sets(cfg.part_sets, cfg.num_parts);
        const gapnet::Metrics m =
            gapnet::evaluate_segmenter(tape, model, batches, set.labels, parts);
        std::printf("per-point accuracy: %.4f\n", m.overall_accuracy);
        std::printf("mIoU:               %.4f\n", m.miou);
        std::printf("category  mIoU\n");
        for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) {
            std::printf("%8zu  %.4f\n", c, m.per_class_iou[c]);
        }
        report["per_point_accuracy"] = m.overall_accuracy;
        report["miou"] = m.miou;
        report["per_class_iou"] = m.per_class_iou;
    }

    std::filesystem::create_directories(cfg.out);
    const std::string report_path =
        (std::filesystem::path(cfg.out) / "report.json").string();
    std::ofstream(report_path) << report.dump(2) << "\n";
    std::printf("report: %s\n", report_path.c_str());
    return 0;
}

int cmd_synth(const CommonFlags& flags, long long clouds, long long points,
              const std::string& classes) {
    RunConfig cfg = resolve_config(flags);
    if (clouds >= 0) cfg.synth_clouds = static_cast<std::size_t>(clouds);
    if (points >= 0) cfg.synth_points = static_cast<std::size_t>(points);
    if (!classes.empty()) cfg.synth_classes = classes;
    const auto names = gapnet::split_list(cfg.synth_classes, ',');
    const auto manifest = gapnet::synth_dataset<float>(names, cfg.synth_points, cfg.synth_clouds,
                                                       cfg.seed, cfg.out);
    std::printf("wrote %zu clouds (%zu classes, %zu points each) under %s\n",
                manifest.entries.size(), names.size(), cfg.synth_points, cfg.out.c_str());
    return 0;
}

int cmd_verify(const std::string& scope, const std::string& fault_op) {
    if (scope != "all" && scope != "gradcheck" && scope != "knn" && scope != "metrics") {
        throw gapnet::ConfigError("verify: unknown scope '" + scope + "'");
    }
    gapnet::detail::gradient_fault_op() = fault_op;
    const auto results = gapnet::verify::run_suite(scope);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-28s %s  %s\n", r.name.c_str(), r.passed ? "ok" : "FAILED",
                    r.detail.c_str());
        ok = ok && r.passed;
    }
    if (!ok) {
        std::printf("verification failed\n");
        return 1;
    }
    std::printf("all %zu checks passed\n", results.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-attention point cloud networks: training, evaluation, verification"};
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, synth_flags;
    std::string eval_checkpoint, eval_manifest;
    long long synth_clouds = -1, synth_points = -1;
    std::string synth_classes;
    std::string verify_scope = "all";
    std::string verify_fault;

    CLI::App* train = app.add_subcommand("train", "train a model from a config");
    add_common(train, train_flags);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    add_common(eval, eval_flags);
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, synth_flags);
    synth->add_option("--clouds", synth_clouds, "number of clouds");
    synth->add_option("--points", synth_points, "points per cloud");
    synth->add_option("--classes", synth_classes, "comma-separated generator names");

    CLI::App* verify = app.add_subcommand("verify", "run the built-in oracle suites");
    verify->add_option("--scope", verify_scope, "gradcheck | knn | metrics | all");
    verify->add_option("--inject-gradient-fault", verify_fault,
                       "testing hook: corrupt the named op's backward rule");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    }

    try {
        if (train->parsed()) return cmd_train(train_flags);
        if (eval->parsed()) return cmd_eval(eval_flags, eval_checkpoint, eval_manifest);
        if (synth->parsed()) return cmd_synth(synth_flags, synth_clouds, synth_points, synth_classes);
        if (verify->parsed()) return cmd_verify(verify_scope, verify_fault);
    } catch (const gapnet::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const gapnet::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
