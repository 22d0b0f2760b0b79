#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gapnet/attention.hpp"
#include "gapnet/graph.hpp"
#include "gapnet/layers.hpp"
#include "gapnet/ops.hpp"

namespace gapnet {

// A batch of same-sized clouds stacked row-wise; neighbor indices address
// global rows. Labels are per cloud for classification, per point for
// segmentation.
template <typename S>
struct Batch {
    std::size_t n_clouds = 0;
    std::size_t n_points = 0;
    Tensor<S> points;  // [B*N, 3]
    NeighborIndices nbr;
    std::vector<int> labels;

    std::size_t rows() const { return n_clouds * n_points; }
};

// transformed[i,:] = points[i,:] * T_b for the cloud b that owns row i
// (row-vector points, matrix on the right).
template <typename S>
Val<S> apply_point_transform(Tape<S>& t, Val<S> points, Val<S> transforms, std::size_t n_clouds,
                             std::size_t n_points) {
    const auto& pv = t.value(points);
    const auto& tv = t.value(transforms);
    if (pv.rank() != 2 || pv.shape[1] != 3 || tv.rank() != 2 || tv.shape[1] != 9 ||
        tv.shape[0] != n_clouds || pv.shape[0] != n_clouds * n_points) {
        throw std::invalid_argument("apply_point_transform: points " + shape_str(pv.shape) +
                                    " vs transforms " + shape_str(tv.shape));
    }
    Val<S> out = t.alloc(pv.shape);
    auto& ov = t.value(out);
    for (std::size_t b = 0; b < n_clouds; ++b) {
        const S* m = tv.data.data() + b * 9;
        for (std::size_t i = b * n_points; i < (b + 1) * n_points; ++i) {
            const S* p = pv.data.data() + i * 3;
            S* o = ov.data.data() + i * 3;
            for (std::size_t c = 0; c < 3; ++c) {
                o[c] = p[0] * m[c] + p[1] * m[3 + c] + p[2] * m[6 + c];
            }
        }
    }
    t.set_backward(out, [points, transforms, out, n_clouds, n_points](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& pval = tp.value(points);
        const auto& tval = tp.value(transforms);
        auto& gp = tp.grad(points);
        auto& gt = tp.grad(transforms);
        for (std::size_t b = 0; b < n_clouds; ++b) {
            const S* m = tval.data.data() + b * 9;
            S* gm = gt.data.data() + b * 9;
            for (std::size_t i = b * n_points; i < (b + 1) * n_points; ++i) {
                const S* p = pval.data.data() + i * 3;
                const S* g = go.data.data() + i * 3;
                S* gprow = gp.data.data() + i * 3;
                for (std::size_t a = 0; a < 3; ++a) {
                    gprow[a] += g[0] * m[3 * a] + g[1] * m[3 * a + 1] + g[2] * m[3 * a + 2];
                    for (std::size_t c = 0; c < 3; ++c) gm[3 * a + c] += p[a] * g[c];
                }
            }
        }
    });
    return out;
}

// Per-cloud max over points: [B*N, C] -> [B, C].
template <typename S>
Val<S> max_over_points(Tape<S>& t, Val<S> x, std::size_t n_clouds,
                       std::vector<std::int32_t>* argmax_out = nullptr) {
    const auto& xv = t.value(x);
    if (xv.rank() != 2 || xv.shape[0] % n_clouds != 0) {
        throw std::invalid_argument("max_over_points: rows of " + shape_str(xv.shape) +
                                    " not divisible into " + std::to_string(n_clouds) + " clouds");
    }
    const std::size_t n_points = xv.shape[0] / n_clouds;
    const std::size_t C = xv.shape[1];
    return reduce_max_mid(t, x, n_clouds, n_points, C, Shape{n_clouds, C}, argmax_out);
}

// Global feature replicated for every point of its cloud: [B,C] -> [B*N,C].
template <typename S>
Val<S> repeat_rows(Tape<S>& t, Val<S> x, std::size_t times) {
    const auto& xv = t.value(x);
    if (xv.rank() != 2) {
        throw std::invalid_argument("repeat_rows: expected [B,C], got " + shape_str(xv.shape));
    }
    const std::size_t B = xv.shape[0];
    const std::size_t C = xv.shape[1];
    Val<S> out = t.alloc(Shape{B * times, C});
    auto& ov = t.value(out);
    for (std::size_t b = 0; b < B; ++b) {
        const S* src = xv.data.data() + b * C;
        for (std::size_t r = 0; r < times; ++r) {
            std::copy(src, src + C, ov.data.begin() + (b * times + r) * C);
        }
    }
    t.set_backward(out, [x, out, B, C, times](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        auto& gx = tp.grad(x);
        for (std::size_t b = 0; b < B; ++b) {
            S* dst = gx.data.data() + b * C;
            for (std::size_t r = 0; r < times; ++r) {
                const S* src = go.data.data() + (b * times + r) * C;
                for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
            }
        }
    });
    return out;
}

// Attention-aware spatial transform network: a single-head GAPLayer feeding
// shared MLPs, point-wise max pooling and fully connected layers that emit
// one 3x3 matrix per cloud. The output projection starts at zero weights
// with an identity bias, so an untrained network applies the identity.
template <typename S>
struct StnParams {
    HeadParams<S> head;
    std::vector<MlpLayer<S>> mlps;
    std::vector<MlpLayer<S>> fcs;
    Affine<S> out_proj;

    StnParams() = default;
    StnParams(std::size_t head_channels, const std::vector<std::size_t>& mlp_widths,
              const std::vector<std::size_t>& fc_widths, std::mt19937& rng)
        : head(3, head_channels, rng) {
        std::size_t w = head_channels;
        for (auto next : mlp_widths) {
            mlps.emplace_back(w, next, rng);
            w = next;
        }
        for (auto next : fc_widths) {
            fcs.emplace_back(w, next, rng);
            w = next;
        }
        out_proj = Affine<S>(w, 9, rng);
        out_proj.weight.value.fill(S(0));
        for (std::size_t i = 0; i < 3; ++i) out_proj.bias.value[i * 3 + i] = S(1);
    }

    void collect(ParamRefs<S>& out) {
        head.collect(out);
        for (auto& m : mlps) m.collect(out);
        for (auto& f : fcs) f.collect(out);
        out_proj.collect(out);
    }
    void collect_named(const std::string& prefix, std::vector<NamedTensorRef<S>>& out) {
        head.collect_named(prefix + ".head", out);
        for (std::size_t i = 0; i < mlps.size(); ++i) {
            mlps[i].collect_named(prefix + ".mlp" + std::to_string(i), out);
        }
        for (std::size_t i = 0; i < fcs.size(); ++i) {
            fcs[i].collect_named(prefix + ".fc" + std::to_string(i), out);
        }
        out_proj.collect_named(prefix + ".out_proj", out);
    }
};

template <typename S>
struct StnResult {
    Val<S> transform;    // [B, 9]
    Val<S> transformed;  // [B*N, 3]
};

template <typename S>
StnResult<S> stn_forward(Tape<S>& t, StnParams<S>& stn, Val<S> points, const Batch<S>& batch,
                         const ForwardCtx<S>& ctx) {
    Val<S> edges = edge_features(t, points, batch.nbr);
    HeadResult<S> head = head_forward(t, stn.head, points, edges);
    Val<S> x = head.attention;
    for (auto& m : stn.mlps) x = m.apply(t, x, ctx);
    x = max_over_points(t, x, batch.n_clouds);
    for (auto& f : stn.fcs) x = f.apply(t, x, ctx);
    Val<S> transform = stn.out_proj.apply(t, x);
    Val<S> transformed =
        apply_point_transform(t, points, transform, batch.n_clouds, batch.n_points);
    return {transform, transformed};
}

// --- classification network ---

struct ClassifierConfig {
    std::size_t num_classes = 40;
    std::size_t heads = 4;
    std::size_t channels = 16;  // F'
    std::size_t stn_channels = 16;
    std::vector<std::size_t> stn_mlp_widths{64, 128, 1024};
    std::vector<std::size_t> stn_fc_widths{512, 256};
    std::vector<std::size_t> mlp_widths{64, 64, 64, 128};
    std::size_t fuse_width = 1024;
    std::vector<std::size_t> head_widths{512, 256};
    double dropout_keep = 0.5;
    bool constant_coefficients = false;
    bool attention_pooling = true;
};

template <typename S>
struct Classifier {
    ClassifierConfig cfg;
    StnParams<S> stn;
    GapLayerParams<S> gap;
    std::vector<MlpLayer<S>> mlps;
    MlpLayer<S> fuse;
    std::vector<MlpLayer<S>> head_fcs;
    Affine<S> out_proj;

    Classifier() = default;
    Classifier(ClassifierConfig c, std::mt19937& rng)
        : cfg(std::move(c)),
          stn(cfg.stn_channels, cfg.stn_mlp_widths, cfg.stn_fc_widths, rng),
          gap(cfg.heads, 3, cfg.channels, rng) {
        std::size_t w = 3 + cfg.heads * cfg.channels;  // coordinates + multi-attention features
        std::size_t skip = cfg.attention_pooling ? cfg.heads * cfg.channels : 0;
        for (auto next : cfg.mlp_widths) {
            mlps.emplace_back(w, next, rng);
            skip += next;
            w = next;
        }
        fuse = MlpLayer<S>(skip, cfg.fuse_width, rng);
        w = cfg.fuse_width;
        for (auto next : cfg.head_widths) {
            head_fcs.emplace_back(w, next, rng);
            w = next;
        }
        out_proj = Affine<S>(w, cfg.num_classes, rng);
    }

    void collect(ParamRefs<S>& out) {
        stn.collect(out);
        gap.collect(out);
        for (auto& m : mlps) m.collect(out);
        fuse.collect(out);
        for (auto& h : head_fcs) h.collect(out);
        out_proj.collect(out);
    }
    void collect_named(std::vector<NamedTensorRef<S>>& out) {
        stn.collect_named("stn", out);
        gap.collect_named("gap", out);
        for (std::size_t i = 0; i < mlps.size(); ++i) {
            mlps[i].collect_named("mlp" + std::to_string(i), out);
        }
        fuse.collect_named("fuse", out);
        for (std::size_t i = 0; i < head_fcs.size(); ++i) {
            head_fcs[i].collect_named("head" + std::to_string(i), out);
        }
        out_proj.collect_named("out_proj", out);
    }
};

template <typename S>
struct ClassifyResult {
    Val<S> logits;  // [B, num_classes]
    GapLayerOutput<S> gap;
};

template <typename S>
ClassifyResult<S> classify_forward(Tape<S>& t, Classifier<S>& model, const Batch<S>& batch,
                                   const ForwardCtx<S>& ctx) {
    Val<S> raw = t.constant(batch.points);
    StnResult<S> stn = stn_forward(t, model.stn, raw, batch, ctx);
    Val<S> pts = stn.transformed;
    Val<S> edges = edge_features(t, pts, batch.nbr);
    GapLayerOutput<S> gap =
        gaplayer_forward(t, model.gap, pts, edges, model.cfg.constant_coefficients);

    Val<S> x = concat_over_axis(t, {pts, gap.attention}, 1);
    std::vector<Val<S>> skips;
    if (model.cfg.attention_pooling) skips.push_back(attention_pooling(t, gap.graph));
    for (auto& m : model.mlps) {
        x = m.apply(t, x, ctx);
        skips.push_back(x);
    }
    Val<S> fused = model.fuse.apply(t, concat_over_axis(t, std::span<const Val<S>>(skips), 1), ctx);
    Val<S> global = max_over_points(t, fused, batch.n_clouds);
    Val<S> h = global;
    for (auto& fc : model.head_fcs) {
        h = fc.apply(t, h, ctx);
        if (ctx.training && ctx.rng) {
            h = dropout(t, h, static_cast<S>(model.cfg.dropout_keep), ctx.training, *ctx.rng);
        }
    }
    return {model.out_proj.apply(t, h), std::move(gap)};
}

// --- part segmentation network ---

struct SegmenterConfig {
    std::size_t num_parts = 50;
    std::size_t heads = 4;
    std::size_t channels = 16;       // first GAPLayer F'
    std::size_t gap2_channels = 128; // second GAPLayer F'
    std::size_t stn_channels = 16;
    std::vector<std::size_t> stn_mlp_widths{64, 128, 1024};
    std::vector<std::size_t> stn_fc_widths{512, 256};
    std::vector<std::size_t> mlp1_widths{64, 64, 128};
    std::vector<std::size_t> mlp2_widths{128, 128, 512};
    std::size_t fuse_width = 1024;
    std::vector<std::size_t> head_widths{256, 256, 128};
    double dropout_keep = 0.4;
    bool constant_coefficients = false;
    bool attention_pooling = true;
};

template <typename S>
struct Segmenter {
    SegmenterConfig cfg;
    StnParams<S> stn;
    GapLayerParams<S> gap1;
    std::vector<MlpLayer<S>> mlps1;
    GapLayerParams<S> gap2;
    std::vector<MlpLayer<S>> mlps2;
    MlpLayer<S> fuse;
    std::vector<MlpLayer<S>> head_fcs;
    Affine<S> out_proj;

    Segmenter() = default;
    Segmenter(SegmenterConfig c, std::mt19937& rng)
        : cfg(std::move(c)),
          stn(cfg.stn_channels, cfg.stn_mlp_widths, cfg.stn_fc_widths, rng),
          gap1(cfg.heads, 3, cfg.channels, rng) {
        std::size_t w = cfg.heads * cfg.channels;
        for (auto next : cfg.mlp1_widths) {
            mlps1.emplace_back(w, next, rng);
            w = next;
        }
        gap2 = GapLayerParams<S>(cfg.heads, w, cfg.gap2_channels, rng);
        w = cfg.heads * cfg.gap2_channels;
        for (auto next : cfg.mlp2_widths) {
            mlps2.emplace_back(w, next, rng);
            w = next;
        }
        const std::size_t sig = cfg.attention_pooling ? cfg.heads * cfg.gap2_channels : 0;
        fuse = MlpLayer<S>(w + sig, cfg.fuse_width, rng);
        w = 2 * cfg.fuse_width;  // replicated global feature + per-point feature
        for (auto next : cfg.head_widths) {
            head_fcs.emplace_back(w, next, rng);
            w = next;
        }
        out_proj = Affine<S>(w, cfg.num_parts, rng);
    }

    void collect(ParamRefs<S>& out) {
        stn.collect(out);
        gap1.collect(out);
        for (auto& m : mlps1) m.collect(out);
        gap2.collect(out);
        for (auto& m : mlps2) m.collect(out);
        fuse.collect(out);
        for (auto& h : head_fcs) h.collect(out);
        out_proj.collect(out);
    }
    void collect_named(std::vector<NamedTensorRef<S>>& out) {
        stn.collect_named("stn", out);
        gap1.collect_named("gap1", out);
        for (std::size_t i = 0; i < mlps1.size(); ++i) {
            mlps1[i].collect_named("mlp1_" + std::to_string(i), out);
        }
        gap2.collect_named("gap2", out);
        for (std::size_t i = 0; i < mlps2.size(); ++i) {
            mlps2[i].collect_named("mlp2_" + std::to_string(i), out);
        }
        fuse.collect_named("fuse", out);
        for (std::size_t i = 0; i < head_fcs.size(); ++i) {
            head_fcs[i].collect_named("head" + std::to_string(i), out);
        }
        out_proj.collect_named("out_proj", out);
    }
};

template <typename S>
Val<S> segment_forward(Tape<S>& t, Segmenter<S>& model, const Batch<S>& batch,
                       const ForwardCtx<S>& ctx) {
    Val<S> raw = t.constant(batch.points);
    StnResult<S> stn = stn_forward(t, model.stn, raw, batch, ctx);
    Val<S> pts = stn.transformed;

    Val<S> edges1 = edge_features(t, pts, batch.nbr);
    GapLayerOutput<S> gap1 =
        gaplayer_forward(t, model.gap1, pts, edges1, model.cfg.constant_coefficients);
    Val<S> x = gap1.attention;
    for (auto& m : model.mlps1) x = m.apply(t, x, ctx);

    Val<S> edges2 = edge_features(t, x, batch.nbr);
    GapLayerOutput<S> gap2 =
        gaplayer_forward(t, model.gap2, x, edges2, model.cfg.constant_coefficients);
    Val<S> y = gap2.attention;
    for (auto& m : model.mlps2) y = m.apply(t, y, ctx);

    if (model.cfg.attention_pooling) {
        Val<S> signature = attention_pooling(t, gap2.graph);
        y = concat_over_axis(t, {y, signature}, 1);
    }
    Val<S> fused = model.fuse.apply(t, y, ctx);
    Val<S> global = max_over_points(t, fused, batch.n_clouds);
    Val<S> tiled = repeat_rows(t, global, batch.n_points);
    Val<S> h = concat_over_axis(t, {tiled, fused}, 1);
    for (auto& fc : model.head_fcs) {
        h = fc.apply(t, h, ctx);
        if (ctx.training && ctx.rng) {
            h = dropout(t, h, static_cast<S>(model.cfg.dropout_keep), ctx.training, *ctx.rng);
        }
    }
    return model.out_proj.apply(t, h);
}

// Exact count of optimizable scalars (batch-norm scale/shift included,
// running statistics excluded).
template <typename S, typename Model>
std::size_t parameter_count(Model& model) {
    ParamRefs<S> refs;
    model.collect(refs);
    std::size_t n = 0;
    for (auto* p : refs) n += p->value.size();
    return n;
}

}  // namespace gapnet
