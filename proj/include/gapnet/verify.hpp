#pragma once

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "gapnet/gradcheck.hpp"
#include "gapnet/graph.hpp"
#include "gapnet/metrics.hpp"
#include "gapnet/model.hpp"
#include "gapnet/rng.hpp"
#include "gapnet/train.hpp"

namespace gapnet::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;
    std::string detail;
};

inline Tensor<double> random_points(std::size_t n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor<double> pts(Shape{n, 3});
    for (auto& v : pts.data) v = u(rng);
    return pts;
}

template <typename S>
Batch<S> random_batch(std::size_t n_points, std::size_t k, std::mt19937& rng,
                      std::size_t n_classes_for_labels = 0, bool per_point_labels = false) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Batch<S> b;
    b.n_clouds = 1;
    b.n_points = n_points;
    b.points = Tensor<S>(Shape{n_points, 3});
    for (auto& v : b.points.data) v = static_cast<S>(u(rng));
    const KnnGraph g = knn_build(b.points, k);
    b.nbr.append(g, 0);
    if (n_classes_for_labels) {
        std::uniform_int_distribution<int> lab(0, static_cast<int>(n_classes_for_labels) - 1);
        b.labels.resize(per_point_labels ? n_points : 1);
        for (auto& l : b.labels) l = lab(rng);
    }
    return b;
}

// Finite-difference validation of the full micro classifier and segmenter
// in 64-bit mode (inference-mode batch norm and dropout).
inline std::vector<CheckResult> run_gradcheck(std::uint64_t seed = 7) {
    std::vector<CheckResult> results;
    RunConfig cfg;
    cfg.heads = 2;
    cfg.channels = 4;
    cfg.width_divisor = 8;
    cfg.k = 4;
    cfg.num_points = 16;
    cfg.num_classes = 4;
    cfg.num_parts = 4;

    {
        std::mt19937 rng = make_rng(derive_seed(seed, 1));
        Classifier<double> model(classifier_config(cfg), rng);
        Batch<double> batch = random_batch<double>(cfg.num_points, cfg.k, rng, cfg.num_classes);
        ParamRefs<double> params;
        model.collect(params);
        jitter_params(params, rng);
        Tape<double> tape;
        ForwardCtx<double> ctx;  // inference mode
        auto fn = [&](GradMode mode) {
            tape.set_recording(mode == GradMode::with_grad);
            tape.reset();
            auto res = classify_forward(tape, model, batch, ctx);
            Val<double> loss = softmax_cross_entropy(tape, res.logits, batch.labels);
            const double v = tape.value(loss)[0];
            if (mode == GradMode::with_grad) tape.backward(loss);
            return v;
        };
        const auto rep = check_gradients(fn, params, 1e-5);
        char detail[128];
        std::snprintf(detail, sizeof(detail), "max rel err %.3e (analytic %.6g, numeric %.6g)",
                      rep.max_rel_err, rep.analytic, rep.numeric);
        results.push_back({"gradcheck.classifier", rep.max_rel_err < 1e-4, rep.max_rel_err,
                           detail});
    }
    {
        std::mt19937 rng = make_rng(derive_seed(seed, 2));
        Segmenter<double> model(segmenter_config(cfg), rng);
        Batch<double> batch =
            random_batch<double>(cfg.num_points, cfg.k, rng, cfg.num_parts, true);
        ParamRefs<double> params;
        model.collect(params);
        jitter_params(params, rng);
        Tape<double> tape;
        ForwardCtx<double> ctx;
        auto fn = [&](GradMode mode) {
            tape.set_recording(mode == GradMode::with_grad);
            tape.reset();
            Val<double> logits = segment_forward(tape, model, batch, ctx);
            Val<double> loss = softmax_cross_entropy(tape, logits, batch.labels);
            const double v = tape.value(loss)[0];
            if (mode == GradMode::with_grad) tape.backward(loss);
            return v;
        };
        const auto rep = check_gradients(fn, params, 1e-5);
        char detail[128];
        std::snprintf(detail, sizeof(detail), "max rel err %.3e (analytic %.6g, numeric %.6g)",
                      rep.max_rel_err, rep.analytic, rep.numeric);
        results.push_back({"gradcheck.segmenter", rep.max_rel_err < 1e-4, rep.max_rel_err,
                           detail});
    }
    return results;
}

// Independent full-sort oracle: all indices ordered by (distance, index)
// with the self row pinned first.
inline std::vector<std::int32_t> knn_oracle_row(const Tensor<double>& pts, std::size_t i,
                                                std::size_t k) {
    const std::size_t n = pts.shape[0];
    std::vector<std::pair<double, std::int32_t>> all;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double d = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double t = pts.at2(i, c) - pts.at2(j, c);
            d += t * t;
        }
        all.emplace_back(d, static_cast<std::int32_t>(j));
    }
    std::sort(all.begin(), all.end());
    std::vector<std::int32_t> row{static_cast<std::int32_t>(i)};
    for (std::size_t j = 0; j + 1 < k; ++j) row.push_back(all[j].second);
    return row;
}

inline std::vector<CheckResult> run_knn_checks(std::uint64_t seed = 11) {
    std::vector<CheckResult> results;
    std::mt19937 rng = make_rng(derive_seed(seed, 3));
    std::uniform_int_distribution<std::size_t> nn(8, 128);
    std::uniform_int_distribution<std::size_t> kk(1, 8);
    std::size_t mismatches = 0, rows = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = nn(rng);
        const std::size_t k = std::min(kk(rng), n);
        Tensor<double> pts = random_points(n, rng);
        if (rep % 3 == 0) {
            // integer lattice coordinates force exact distance ties
            for (auto& v : pts.data) v = std::round(v * 2.0);
        }
        const KnnGraph g = knn_build(pts, k);
        for (std::size_t i = 0; i < n; ++i) {
            const auto expect = knn_oracle_row(pts, i, k);
            ++rows;
            for (std::size_t j = 0; j < k; ++j) {
                if (g.at(i, j) != expect[j]) {
                    ++mismatches;
                    break;
                }
            }
        }
    }
    char detail[96];
    std::snprintf(detail, sizeof(detail), "%zu/%zu rows differ from full-sort oracle", mismatches,
                  rows);
    results.push_back({"knn.full_sort_oracle", mismatches == 0,
                       static_cast<double>(mismatches), detail});
    return results;
}

inline std::vector<CheckResult> run_metric_checks() {
    std::vector<CheckResult> results;
    const std::vector<std::vector<int>> parts{{0, 1}};

    const double perfect = shape_iou({0, 0, 1, 1}, {0, 0, 1, 1}, parts[0]);
    results.push_back({"miou.perfect", std::fabs(perfect - 1.0) < 1e-12, perfect,
                       "perfect prediction"});

    // part0 intersection 50 / union 100, part1 absent from both
    std::vector<int> truth(100, 0), pred(100, 0);
    for (int i = 50; i < 100; ++i) pred[static_cast<std::size_t>(i)] = 2;
    const double mixed = shape_iou(pred, truth, {0, 1});
    results.push_back({"miou.half_overlap", std::fabs(mixed - 0.75) < 1e-12, mixed,
                       "(0.5 + 1.0) / 2"});

    const double wrong = shape_iou({1, 1, 0, 0}, {0, 0, 1, 1}, parts[0]);
    results.push_back({"miou.disjoint", std::fabs(wrong - 0.0) < 1e-12, wrong,
                       "completely swapped parts"});

    const Metrics imb = evaluate_classification(
        std::vector<int>(10, 0),
        [] {
            std::vector<int> t(10, 0);
            t[9] = 1;
            return t;
        }(),
        2);
    results.push_back({"accuracy.imbalanced",
                       std::fabs(imb.overall_accuracy - 0.9) < 1e-12 &&
                           std::fabs(imb.mean_class_accuracy - 0.5) < 1e-12,
                       imb.overall_accuracy, "9A+1B all predicted A"});
    return results;
}

inline std::vector<CheckResult> run_suite(const std::string& scope) {
    std::vector<CheckResult> all;
    if (scope == "gradcheck" || scope == "all") {
        auto r = run_gradcheck();
        all.insert(all.end(), r.begin(), r.end());
    }
    if (scope == "knn" || scope == "all") {
        auto r = run_knn_checks();
        all.insert(all.end(), r.begin(), r.end());
    }
    if (scope == "metrics" || scope == "all") {
        auto r = run_metric_checks();
        all.insert(all.end(), r.begin(), r.end());
    }
    return all;
}

}  // namespace gapnet::verify
