#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gapnet/checkpoint.hpp"
#include "gapnet/config.hpp"
#include "gapnet/dataset.hpp"
#include "gapnet/graph.hpp"
#include "gapnet/metrics.hpp"
#include "gapnet/model.hpp"
#include "gapnet/ops.hpp"
#include "gapnet/rng.hpp"

namespace gapnet {

// Bias-corrected Adam over a fixed parameter list; grads are consumed and
// zeroed by each step.
template <typename S>
struct Adam {
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
    std::uint64_t step_count = 0;

    struct Slot {
        Tensor<S> m, v;
    };
    std::vector<Slot> slots;

    void init(const ParamRefs<S>& params) {
        slots.clear();
        slots.reserve(params.size());
        for (auto* p : params) slots.push_back({Tensor<S>(p->value.shape), Tensor<S>(p->value.shape)});
        step_count = 0;
    }

    void step(const ParamRefs<S>& params, S lr) {
        if (slots.size() != params.size()) init(params);
        ++step_count;
        const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1),
                                                     static_cast<double>(step_count)));
        const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2),
                                                     static_cast<double>(step_count)));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            auto& slot = slots[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const S g = p.grad[j];
                slot.m[j] = beta1 * slot.m[j] + (S(1) - beta1) * g;
                slot.v[j] = beta2 * slot.v[j] + (S(1) - beta2) * g * g;
                const S mhat = slot.m[j] / bc1;
                const S vhat = slot.v[j] / bc2;
                p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            p.zero_grad();
        }
    }
};

// lr(e) = max(lr0 * 0.5^(e/decay_every), floor)
inline double lr_at_epoch(std::size_t epoch, double lr0 = 0.005, std::size_t decay_every = 20,
                          double floor = 1e-5) {
    const double lr = lr0 * std::pow(0.5, static_cast<double>(epoch / decay_every));
    return std::max(lr, floor);
}

// Linear ramp from the starting decay rate to the cap.
inline double bn_momentum_at_epoch(std::size_t epoch, double start = 0.7, double end = 0.99,
                                   std::size_t ramp_epochs = 100) {
    const double m = start + static_cast<double>(epoch) * (end - start) /
                                 static_cast<double>(ramp_epochs);
    return std::min(m, end);
}

inline std::size_t worker_threads() {
    if (const char* env = std::getenv("GAPNET_THREADS")) {
        const long n = std::atol(env);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    return 1;
}

// Runs fn(i) for i in [0,n) across at most `threads` workers. Tasks must be
// independent; results land in caller-owned slots so any schedule yields
// identical output.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

template <typename S>
struct LoadedSet {
    std::vector<PointCloud<S>> clouds;  // normalized
    std::vector<int> labels;            // class (classify) or category (segment)
};

template <typename S>
LoadedSet<S> load_set(const std::string& manifest_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    if (manifest.entries.empty()) throw DataError("manifest has no entries: " + manifest_path);
    LoadedSet<S> set;
    set.clouds.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        set.clouds.push_back(normalize_unit_sphere(load_cloud<S>(e.path)));
        set.labels.push_back(e.label);
    }
    return set;
}

// Samples, optionally augments, and graphs the chosen clouds into one batch.
// Per-cloud rng streams are derived from (seed, epoch, cloud id), so the
// result is identical however many workers build it.
template <typename S>
Batch<S> make_batch(const LoadedSet<S>& set, const std::vector<std::size_t>& ids,
                    const RunConfig& cfg, bool training, std::uint64_t epoch_tag) {
    const std::size_t B = ids.size();
    const std::size_t N = cfg.num_points;
    Batch<S> batch;
    batch.n_clouds = B;
    batch.n_points = N;
    batch.points = Tensor<S>(Shape{B * N, 3});
    batch.nbr.rows = 0;
    batch.nbr.k = cfg.k;
    batch.nbr.idx.resize(B * N * cfg.k);
    const bool seg = cfg.task == "segment";
    batch.labels.resize(seg ? B * N : B);
    AugmentOptions aug;
    aug.rotate = cfg.rotate;
    aug.scale_lo = cfg.scale_lo;
    aug.scale_hi = cfg.scale_hi;
    aug.jitter_sigma = cfg.jitter_sigma;
    aug.jitter_clip = cfg.jitter_clip;

    parallel_for(B, worker_threads(), [&](std::size_t b) {
        const std::size_t id = ids[b];
        std::mt19937 rng = make_rng(derive_seed(cfg.seed, epoch_tag, id));
        PointCloud<S> cloud = sample_points(set.clouds[id], N, rng);
        if (training && cfg.augment) cloud = augment(std::move(cloud), rng, aug);
        const KnnGraph g = knn_build(cloud.points, cfg.k);
        const std::size_t base = b * N;
        std::copy(cloud.points.data.begin(), cloud.points.data.end(),
                  batch.points.data.begin() + base * 3);
        for (std::size_t i = 0; i < N * cfg.k; ++i) {
            batch.nbr.idx[base * cfg.k + i] =
                g.indices[i] + static_cast<std::int32_t>(base);
        }
        if (seg) {
            if (!cloud.has_parts()) {
                throw DataError("segmentation task but cloud has no part labels");
            }
            std::copy(cloud.part_labels.begin(), cloud.part_labels.end(),
                      batch.labels.begin() + base);
        } else {
            batch.labels[b] = set.labels[id];
        }
    });
    batch.nbr.rows = B * N;
    return batch;
}

constexpr std::uint64_t kEvalEpochTag = 0xE7A1ULL << 32;

template <typename S>
std::vector<Batch<S>> make_eval_batches(const LoadedSet<S>& set, const RunConfig& cfg) {
    std::vector<Batch<S>> out;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < set.clouds.size(); ++i) {
        ids.push_back(i);
        if (ids.size() == cfg.batch_size || i + 1 == set.clouds.size()) {
            out.push_back(make_batch(set, ids, cfg, false, kEvalEpochTag));
            ids.clear();
        }
    }
    return out;
}

template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& logits) {
    const std::size_t rows = logits.shape[0];
    const std::size_t C = logits.shape[1];
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* row = logits.data.data() + r * C;
        int best = 0;
        for (std::size_t c = 1; c < C; ++c) {
            if (row[c] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
        }
        out[r] = best;
    }
    return out;
}

template <typename S>
Metrics evaluate_classifier(Tape<S>& tape, Classifier<S>& model,
                            const std::vector<Batch<S>>& batches, std::size_t num_classes) {
    ForwardCtx<S> ctx;  // inference mode
    std::vector<int> preds, truth;
    const bool was_recording = tape.recording();
    tape.set_recording(false);
    for (const auto& batch : batches) {
        tape.reset();
        auto res = classify_forward(tape, model, batch, ctx);
        auto p = argmax_rows(tape.value(res.logits));
        preds.insert(preds.end(), p.begin(), p.end());
        truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
    }
    tape.set_recording(was_recording);
    return evaluate_classification(preds, truth, num_classes);
}

template <typename S>
Metrics evaluate_segmenter(Tape<S>& tape, Segmenter<S>& model, const std::vector<Batch<S>>& batches,
                           const std::vector<int>& categories,
                           const std::vector<std::vector<int>>& parts_of_category) {
    ForwardCtx<S> ctx;
    MiouAccumulator acc(parts_of_category.size());
    std::size_t hits = 0, total = 0;
    std::size_t cloud_cursor = 0;
    const bool was_recording = tape.recording();
    tape.set_recording(false);
    for (const auto& batch : batches) {
        tape.reset();
        Val<S> logits = segment_forward(tape, model, batch, ctx);
        auto preds = argmax_rows(tape.value(logits));
        for (std::size_t b = 0; b < batch.n_clouds; ++b) {
            const std::size_t base = b * batch.n_points;
            std::vector<int> p(preds.begin() + static_cast<std::ptrdiff_t>(base),
                               preds.begin() + static_cast<std::ptrdiff_t>(base + batch.n_points));
            std::vector<int> t(batch.labels.begin() + static_cast<std::ptrdiff_t>(base),
                               batch.labels.begin() +
                                   static_cast<std::ptrdiff_t>(base + batch.n_points));
            for (std::size_t i = 0; i < batch.n_points; ++i) {
                if (p[i] == t[i]) ++hits;
            }
            total += batch.n_points;
            acc.add(p, t, static_cast<std::size_t>(categories[cloud_cursor + b]),
                    parts_of_category);
        }
        cloud_cursor += batch.n_clouds;
    }
    tape.set_recording(was_recording);
    Metrics m;
    m.overall_accuracy = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    m.miou = acc.miou();
    m.per_class_iou = acc.per_category_miou();
    return m;
}

struct EpochRow {
    std::size_t epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double train_acc = 0;
    double eval_overall = -1;    // negative = not evaluated
    double eval_meanclass = -1;
    double eval_miou = -1;
};

inline std::string csv_header() {
    return "epoch,lr,train_loss,train_acc,eval_overall,eval_meanclass,eval_miou";
}

inline std::string csv_row(const EpochRow& r) {
    char buf[256];
    auto field = [](double v) {
        char f[48];
        if (v < 0) return std::string();
        std::snprintf(f, sizeof(f), "%.6f", v);
        return std::string(f);
    };
    std::snprintf(buf, sizeof(buf), "%zu,%.8g,%.6f,%.6f,%s,%s,%s", r.epoch, r.lr, r.train_loss,
                  r.train_acc, field(r.eval_overall).c_str(), field(r.eval_meanclass).c_str(),
                  field(r.eval_miou).c_str());
    return std::string(buf);
}

struct TrainResult {
    std::vector<EpochRow> log;
    std::string csv_text;
    Metrics final_eval;
    std::string checkpoint_path;
    std::string best_checkpoint_path;
    std::size_t parameter_count = 0;
};

namespace detail {

template <typename S, typename Model, typename ForwardFn>
TrainResult run_training(const RunConfig& cfg, Model& model, ForwardFn&& forward_loss,
                         const std::function<Metrics(Tape<S>&)>& evaluate) {
    ParamRefs<S> params;
    model.collect(params);
    Adam<S> opt;
    opt.init(params);

    std::filesystem::create_directories(cfg.out);
    const std::string csv_path = (std::filesystem::path(cfg.out) / "metrics.csv").string();
    const std::string ckpt_path = (std::filesystem::path(cfg.out) / "checkpoint.gapc").string();
    const std::string best_path = (std::filesystem::path(cfg.out) / "best.gapc").string();

    auto save = [&](const std::string& path) {
        std::vector<NamedTensorRef<S>> refs;
        model.collect_named(refs);
        save_checkpoint(path, serialize_config(cfg), refs);
    };

    LoadedSet<S> train_set = load_set<S>(cfg.train_manifest);
    const bool has_eval = !cfg.test_manifest.empty();

    TrainResult result;
    result.parameter_count = parameter_count<S>(model);
    std::string csv = csv_header() + "\n";

    Tape<S> tape;
    std::mt19937 dropout_rng = make_rng(derive_seed(cfg.seed, 0xD60));
    const bool seg = cfg.task == "segment";
    double best_metric = -1.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            lr_at_epoch(epoch, cfg.lr0, cfg.lr_decay_every, cfg.lr_floor);
        ForwardCtx<S> ctx;
        ctx.training = true;
        ctx.bn_momentum = static_cast<S>(bn_momentum_at_epoch(
            epoch, cfg.bn_momentum_start, cfg.bn_momentum_end, cfg.bn_ramp_epochs));
        ctx.rng = &dropout_rng;

        std::vector<std::size_t> order(train_set.clouds.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937 shuffle_rng = make_rng(derive_seed(cfg.seed, 0x5AFF, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t seen = 0, correct = 0, examples = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            Batch<S> batch = make_batch(train_set, ids, cfg, true, epoch + 1);
            tape.reset();
            auto [loss, logits] = forward_loss(tape, batch, ctx);
            const double loss_v = static_cast<double>(tape.value(loss)[0]);
            auto preds = argmax_rows(tape.value(logits));
            for (std::size_t i = 0; i < preds.size(); ++i) {
                if (preds[i] == batch.labels[i]) ++correct;
            }
            examples += preds.size();
            loss_sum += loss_v * static_cast<double>(batch.labels.size());
            seen += batch.labels.size();
            tape.backward(loss);
            opt.step(params, static_cast<S>(lr));
        }

        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = loss_sum / static_cast<double>(seen);
        row.train_acc = static_cast<double>(correct) / static_cast<double>(examples);
        if (has_eval) {
            const Metrics m = evaluate(tape);
            row.eval_overall = m.overall_accuracy;
            if (seg) {
                row.eval_miou = m.miou;
            } else {
                row.eval_meanclass = m.mean_class_accuracy;
            }
            result.final_eval = m;
            const double key = seg ? m.miou : m.overall_accuracy;
            if (key > best_metric) {
                best_metric = key;
                save(best_path);
                result.best_checkpoint_path = best_path;
            }
        }
        result.log.push_back(row);
        csv += csv_row(row) + "\n";
    }

    save(ckpt_path);
    result.checkpoint_path = ckpt_path;
    std::ofstream(csv_path) << csv;
    result.csv_text = std::move(csv);
    return result;
}

}  // namespace detail

// Full training drive: shuffle, batch, augment, graph, forward, loss,
// backward, Adam with the configured schedules; one CSV row per epoch and a
// checkpoint at the end plus at the best evaluation metric.
template <typename S = float>
TrainResult train_loop(const RunConfig& cfg) {
    validate_config(cfg);
    if (cfg.train_manifest.empty()) throw ConfigError("config field train_manifest: required");
    std::mt19937 init_rng = make_rng(derive_seed(cfg.seed, 0x171));

    if (cfg.task == "classify") {
        Classifier<S> model(classifier_config(cfg), init_rng);
        LoadedSet<S> test_set;
        std::vector<Batch<S>> eval_batches;
        if (!cfg.test_manifest.empty()) {
            test_set = load_set<S>(cfg.test_manifest);
            eval_batches = make_eval_batches(test_set, cfg);
        }
        auto fwd = [&model](Tape<S>& t, const Batch<S>& b, const ForwardCtx<S>& ctx) {
            auto res = classify_forward(t, model, b, ctx);
            Val<S> loss = softmax_cross_entropy(t, res.logits, b.labels);
            return std::make_pair(loss, res.logits);
        };
        std::function<Metrics(Tape<S>&)> ev = [&](Tape<S>& t) {
            return evaluate_classifier(t, model, eval_batches, cfg.num_classes);
        };
        return detail::run_training<S>(cfg, model, fwd, ev);
    }

    Segmenter<S> model(segmenter_config(cfg), init_rng);
    const auto parts = parse_part_sets(cfg.part_sets, cfg.num_parts);
    LoadedSet<S> test_set;
    std::vector<Batch<S>> eval_batches;
    std::vector<int> eval_categories;
    if (!cfg.test_manifest.empty()) {
        test_set = load_set<S>(cfg.test_manifest);
        eval_batches = make_eval_batches(test_set, cfg);
        eval_categories = test_set.labels;
    }
    auto fwd = [&model](Tape<S>& t, const Batch<S>& b, const ForwardCtx<S>& ctx) {
        Val<S> logits = segment_forward(t, model, b, ctx);
        Val<S> loss = softmax_cross_entropy(t, logits, b.labels);
        return std::make_pair(loss, logits);
    };
    std::function<Metrics(Tape<S>&)> ev = [&, parts](Tape<S>& t) {
        return evaluate_segmenter(t, model, eval_batches, eval_categories, parts);
    };
    return detail::run_training<S>(cfg, model, fwd, ev);
}

}  // namespace gapnet
