#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gapnet/errors.hpp"
#include "gapnet/graph.hpp"
#include "gapnet/layers.hpp"
#include "gapnet/ops.hpp"

namespace gapnet {

inline constexpr double kAttentionSlope = 0.2;

// self_scores[r,0] broadcast across the neighbor slots plus edge_scores,
// producing the raw coefficient grid [rows, k].
template <typename S>
Val<S> fuse_scores(Tape<S>& t, Val<S> self_scores, Val<S> edge_scores) {
    const auto& sv = t.value(self_scores);
    const auto& ev = t.value(edge_scores);
    if (sv.rank() != 2 || sv.shape[1] != 1 || ev.rank() != 3 || ev.shape[2] != 1 ||
        ev.shape[0] != sv.shape[0]) {
        throw std::invalid_argument("fuse_scores: got " + shape_str(sv.shape) + " and " +
                                    shape_str(ev.shape));
    }
    const std::size_t rows = sv.shape[0];
    const std::size_t k = ev.shape[1];
    Val<S> out = t.alloc(Shape{rows, k});
    auto& ov = t.value(out);
    for (std::size_t r = 0; r < rows; ++r) {
        const S s = sv[r];
        for (std::size_t j = 0; j < k; ++j) ov[r * k + j] = s + ev[r * k + j];
    }
    t.set_backward(out, [self_scores, edge_scores, out, rows, k](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        auto& gs = tp.grad(self_scores);
        auto& ge = tp.grad(edge_scores);
        for (std::size_t r = 0; r < rows; ++r) {
            S acc = S(0);
            for (std::size_t j = 0; j < k; ++j) {
                acc += go[r * k + j];
                ge[r * k + j] += go[r * k + j];
            }
            gs[r] += acc;
        }
    });
    return out;
}

// out[r,:] = sum_j alpha[r,j] * edges[r,j,:], the linear combination that
// turns normalized coefficients into an attention feature.
template <typename S>
Val<S> attend(Tape<S>& t, Val<S> alpha, Val<S> edges) {
    const auto& av = t.value(alpha);
    const auto& ev = t.value(edges);
    if (av.rank() != 2 || ev.rank() != 3 || av.shape[0] != ev.shape[0] ||
        av.shape[1] != ev.shape[1]) {
        throw std::invalid_argument("attend: coefficients " + shape_str(av.shape) +
                                    " vs edges " + shape_str(ev.shape));
    }
    const std::size_t rows = av.shape[0];
    const std::size_t k = av.shape[1];
    const std::size_t C = ev.shape[2];
    Val<S> out = t.alloc(Shape{rows, C});
    auto& ov = t.value(out);
    for (std::size_t r = 0; r < rows; ++r) {
        S* orow = ov.data.data() + r * C;
        for (std::size_t c = 0; c < C; ++c) orow[c] = S(0);
        for (std::size_t j = 0; j < k; ++j) {
            const S a = av[r * k + j];
            const S* erow = ev.data.data() + (r * k + j) * C;
            for (std::size_t c = 0; c < C; ++c) orow[c] += a * erow[c];
        }
    }
    t.set_backward(out, [alpha, edges, out, rows, k, C](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& aval = tp.value(alpha);
        const auto& eval = tp.value(edges);
        auto& ga = tp.grad(alpha);
        auto& ge = tp.grad(edges);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* grow = go.data.data() + r * C;
            for (std::size_t j = 0; j < k; ++j) {
                const S* erow = eval.data.data() + (r * k + j) * C;
                S* gerow = ge.data.data() + (r * k + j) * C;
                const S a = aval[r * k + j];
                S dot = S(0);
                for (std::size_t c = 0; c < C; ++c) {
                    dot += grow[c] * erow[c];
                    gerow[c] += a * grow[c];
                }
                ga[r * k + j] += dot;
            }
        }
    });
    return out;
}

// One attention head: shared encoders for nodes and edges plus the two
// 1-dimensional coefficient projections.
template <typename S>
struct HeadParams {
    Affine<S> node_enc;
    Affine<S> edge_enc;
    Affine<S> self_proj;
    Affine<S> edge_proj;

    HeadParams() = default;
    HeadParams(std::size_t in, std::size_t channels, std::mt19937& rng)
        : node_enc(in, channels, rng), edge_enc(in, channels, rng),
          self_proj(channels, 1, rng), edge_proj(channels, 1, rng) {}

    std::size_t channels() const { return node_enc.out(); }

    void collect(ParamRefs<S>& out) {
        node_enc.collect(out);
        edge_enc.collect(out);
        self_proj.collect(out);
        edge_proj.collect(out);
    }
    void collect_named(const std::string& prefix, std::vector<NamedTensorRef<S>>& out) {
        node_enc.collect_named(prefix + ".node_enc", out);
        edge_enc.collect_named(prefix + ".edge_enc", out);
        self_proj.collect_named(prefix + ".self_proj", out);
        edge_proj.collect_named(prefix + ".edge_proj", out);
    }
};

// Encoded node and edge features: affine + LeakyReLU(0.2) with separate
// parameters for the node and edge paths.
template <typename S>
std::pair<Val<S>, Val<S>> encode(Tape<S>& t, HeadParams<S>& head, Val<S> nodes, Val<S> edges) {
    Val<S> x_enc = leaky_relu(t, head.node_enc.apply(t, nodes), S(kAttentionSlope));
    Val<S> y_enc = leaky_relu(t, head.edge_enc.apply(t, edges), S(kAttentionSlope));
    return {x_enc, y_enc};
}

// Normalized attention coefficients over each point's neighborhood.
template <typename S>
Val<S> coefficients(Tape<S>& t, HeadParams<S>& head, Val<S> x_enc, Val<S> y_enc) {
    Val<S> self_scores = head.self_proj.apply(t, x_enc);   // [rows,1]
    Val<S> edge_scores = head.edge_proj.apply(t, y_enc);   // [rows,k,1]
    Val<S> raw = leaky_relu(t, fuse_scores(t, self_scores, edge_scores), S(kAttentionSlope));
    return softmax_over_axis(t, raw, 1);
}

// Single-head forward: returns the attention feature and the encoded edges
// (the head's graph feature), plus the coefficients for inspection.
template <typename S>
struct HeadResult {
    Val<S> attention;
    Val<S> graph;
    Val<S> alpha;
};

template <typename S>
HeadResult<S> head_forward(Tape<S>& t, HeadParams<S>& head, Val<S> nodes, Val<S> edges,
                           bool constant_coefficients = false) {
    auto [x_enc, y_enc] = encode(t, head, nodes, edges);
    const auto& ev = t.value(y_enc);
    Val<S> alpha;
    if (constant_coefficients) {
        alpha = t.alloc(Shape{ev.shape[0], ev.shape[1]});
        t.value(alpha).fill(S(1) / static_cast<S>(ev.shape[1]));
    } else {
        alpha = coefficients(t, head, x_enc, y_enc);
    }
    Val<S> att = relu(t, attend(t, alpha, y_enc));
    return {att, y_enc, alpha};
}

// M independent heads concatenated over feature channels.
template <typename S>
struct GapLayerParams {
    std::vector<HeadParams<S>> heads;

    GapLayerParams() = default;
    GapLayerParams(std::size_t n_heads, std::size_t in, std::size_t channels, std::mt19937& rng) {
        heads.reserve(n_heads);
        for (std::size_t m = 0; m < n_heads; ++m) heads.emplace_back(in, channels, rng);
    }

    std::size_t channels() const { return heads.empty() ? 0 : heads[0].channels(); }
    std::size_t out_channels() const { return heads.size() * channels(); }

    void collect(ParamRefs<S>& out) {
        for (auto& h : heads) h.collect(out);
    }
    void collect_named(const std::string& prefix, std::vector<NamedTensorRef<S>>& out) {
        for (std::size_t m = 0; m < heads.size(); ++m) {
            heads[m].collect_named(prefix + ".head" + std::to_string(m), out);
        }
    }
};

template <typename S>
struct GapLayerOutput {
    Val<S> attention;            // [rows, M*F'] multi-attention features
    Val<S> graph;                // [rows, k, M*F'] multi-graph features
    std::vector<Val<S>> alphas;  // per-head coefficients [rows, k]
};

template <typename S>
GapLayerOutput<S> gaplayer_forward(Tape<S>& t, GapLayerParams<S>& layer, Val<S> nodes,
                                   Val<S> edges, bool constant_coefficients = false) {
    if (layer.heads.empty()) throw ConfigError("gaplayer: no heads configured");
    for (const auto& h : layer.heads) {
        if (h.channels() != layer.channels()) {
            throw ConfigError("gaplayer: heads disagree on encoding channels");
        }
    }
    std::vector<Val<S>> atts, graphs;
    GapLayerOutput<S> out;
    for (auto& head : layer.heads) {
        HeadResult<S> r = head_forward(t, head, nodes, edges, constant_coefficients);
        atts.push_back(r.attention);
        graphs.push_back(r.graph);
        out.alphas.push_back(r.alpha);
    }
    out.attention = atts.size() == 1
                        ? atts[0]
                        : concat_over_axis(t, std::span<const Val<S>>(atts), 1);
    out.graph = graphs.size() == 1
                    ? graphs[0]
                    : concat_over_axis(t, std::span<const Val<S>>(graphs), 2);
    return out;
}

// Ablation variant: every coefficient pinned to the uniform 1/k.
template <typename S>
GapLayerOutput<S> gaplayer_constant(Tape<S>& t, GapLayerParams<S>& layer, Val<S> nodes,
                                    Val<S> edges) {
    return gaplayer_forward(t, layer, nodes, edges, true);
}

// Per-channel max over each neighborhood; with disjoint per-head channel
// blocks this equals per-head max pooling followed by concatenation.
template <typename S>
Val<S> attention_pooling(Tape<S>& t, Val<S> graph_features) {
    const auto& gv = t.value(graph_features);
    if (gv.rank() != 3) {
        throw std::invalid_argument("attention_pooling: expected [rows,k,C], got " +
                                    shape_str(gv.shape));
    }
    return reduce_max_over_axis(t, graph_features, 1);
}

}  // namespace gapnet
