#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gapnet/ops.hpp"
#include "gapnet/tape.hpp"

namespace gapnet {

template <typename S>
struct NamedTensorRef {
    std::string name;
    Tensor<S>* tensor;
    bool is_param;  // running statistics are saved but not optimized
};

template <typename S>
using ParamRefs = std::vector<Parameter<S>*>;

// Learned linear map with bias. Weights use uniform Glorot init, biases zero.
template <typename S>
struct Affine {
    Parameter<S> weight;  // [in, out]
    Parameter<S> bias;    // [out]

    Affine() = default;
    Affine(std::size_t in, std::size_t out, std::mt19937& rng)
        : weight(Tensor<S>(Shape{in, out})), bias(Tensor<S>(Shape{out})) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (auto& w : weight.value.data) w = static_cast<S>(u(rng));
    }

    std::size_t in() const { return weight.value.shape[0]; }
    std::size_t out() const { return weight.value.shape[1]; }

    Val<S> apply(Tape<S>& t, Val<S> x) {
        return affine(t, x, t.param(weight), t.param(bias));
    }

    void collect(ParamRefs<S>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
    void collect_named(const std::string& prefix, std::vector<NamedTensorRef<S>>& out) {
        out.push_back({prefix + ".weight", &weight.value, true});
        out.push_back({prefix + ".bias", &bias.value, true});
    }
};

// Per-channel scale/shift plus running statistics.
template <typename S>
struct BnLayer {
    Parameter<S> scale;
    Parameter<S> shift;
    BnState<S> state;

    BnLayer() = default;
    explicit BnLayer(std::size_t channels)
        : scale(Tensor<S>(Shape{channels}, S(1))), shift(Tensor<S>(Shape{channels})),
          state(channels) {}

    Val<S> apply(Tape<S>& t, Val<S> x, S momentum, bool training) {
        return batch_norm(t, x, scale, shift, state, momentum, training);
    }

    void collect(ParamRefs<S>& out) {
        out.push_back(&scale);
        out.push_back(&shift);
    }
    void collect_named(const std::string& prefix, std::vector<NamedTensorRef<S>>& out) {
        out.push_back({prefix + ".scale", &scale.value, true});
        out.push_back({prefix + ".shift", &shift.value, true});
        out.push_back({prefix + ".running_mean", &state.running_mean, false});
        out.push_back({prefix + ".running_var", &state.running_var, false});
    }
};

// Per-forward knobs threaded through every layer.
template <typename S>
struct ForwardCtx {
    bool training = false;
    S bn_momentum = S(0.7);
    std::mt19937* rng = nullptr;
};

// Shared affine + batch norm + ReLU, the MLP building block of the trunk.
template <typename S>
struct MlpLayer {
    Affine<S> fc;
    BnLayer<S> bn;

    MlpLayer() = default;
    MlpLayer(std::size_t in, std::size_t out, std::mt19937& rng) : fc(in, out, rng), bn(out) {}

    Val<S> apply(Tape<S>& t, Val<S> x, const ForwardCtx<S>& ctx) {
        return relu(t, bn.apply(t, fc.apply(t, x), ctx.bn_momentum, ctx.training));
    }

    void collect(ParamRefs<S>& out) {
        fc.collect(out);
        bn.collect(out);
    }
    void collect_named(const std::string& prefix, std::vector<NamedTensorRef<S>>& out) {
        fc.collect_named(prefix + ".fc", out);
        bn.collect_named(prefix + ".bn", out);
    }
};

}  // namespace gapnet
