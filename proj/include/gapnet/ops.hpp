#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gapnet/tape.hpp"
#include "gapnet/tensor.hpp"

namespace gapnet {

namespace detail {

// Testing hook: when set to an op name, that op's weight-gradient rule is
// deliberately corrupted so verification must catch it.
inline std::string& gradient_fault_op() {
    static std::string op;
    return op;
}

// c[r,:] += a[r,:] * b, with a: RxK, b: KxC, c: RxC row-major.
template <typename S>
void gemm_acc(const S* __restrict a, const S* __restrict b, S* __restrict c,
              std::size_t rows, std::size_t K, std::size_t C) {
    for (std::size_t r = 0; r < rows; ++r) {
        const S* ar = a + r * K;
        S* cr = c + r * C;
        for (std::size_t k = 0; k < K; ++k) {
            const S av = ar[k];
            const S* br = b + k * C;
            for (std::size_t j = 0; j < C; ++j) cr[j] += av * br[j];
        }
    }
}

// dw[k,:] += x[r,k] * dy[r,:]
template <typename S>
void gemm_acc_wgrad(const S* __restrict x, const S* __restrict dy, S* __restrict dw,
                    std::size_t rows, std::size_t K, std::size_t C) {
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xr = x + r * K;
        const S* gr = dy + r * C;
        for (std::size_t k = 0; k < K; ++k) {
            const S xv = xr[k];
            S* wr = dw + k * C;
            for (std::size_t j = 0; j < C; ++j) wr[j] += xv * gr[j];
        }
    }
}

// dx[r,k] += dot(dy[r,:], w[k,:])
template <typename S>
void gemm_acc_xgrad(const S* __restrict dy, const S* __restrict w, S* __restrict dx,
                    std::size_t rows, std::size_t K, std::size_t C) {
    for (std::size_t r = 0; r < rows; ++r) {
        const S* gr = dy + r * C;
        S* xr = dx + r * K;
        for (std::size_t k = 0; k < K; ++k) {
            const S* wr = w + k * C;
            S acc = S(0);
            for (std::size_t j = 0; j < C; ++j) acc += gr[j] * wr[j];
            xr[k] += acc;
        }
    }
}

struct AxisSplit {
    std::size_t outer, mid, inner;
};

inline AxisSplit split_axis(const Shape& sh, std::size_t axis) {
    if (axis >= sh.size()) {
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                    shape_str(sh));
    }
    AxisSplit s{1, sh[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) s.inner *= sh[i];
    return s;
}

}  // namespace detail

// out[..., c] = sum_k x[..., k] * w[k, c] + b[c]. Shared over all leading
// axes, which gives 1x1-convolution semantics over points or edges.
template <typename S>
Val<S> affine(Tape<S>& t, Val<S> x, Val<S> w, Val<S> b) {
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    const auto& bv = t.value(b);
    if (xv.rank() < 1 || wv.rank() != 2 || xv.shape.back() != wv.shape[0]) {
        throw std::invalid_argument("affine: input " + shape_str(xv.shape) +
                                    " incompatible with weight " + shape_str(wv.shape));
    }
    const std::size_t cin = wv.shape[0];
    const std::size_t cout = wv.shape[1];
    if (bv.size() != cout) {
        throw std::invalid_argument("affine: bias " + shape_str(bv.shape) +
                                    " incompatible with weight " + shape_str(wv.shape));
    }
    const std::size_t rows = xv.size() / cin;
    Shape osh = xv.shape;
    osh.back() = cout;
    Val<S> out = t.alloc(osh);
    auto& ov = t.value(out);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(bv.data.begin(), bv.data.end(), ov.data.begin() + r * cout);
    }
    detail::gemm_acc(xv.data.data(), wv.data.data(), ov.data.data(), rows, cin, cout);
    t.set_backward(out, [x, w, b, out, rows, cin, cout](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& xval = tp.value(x);
        const auto& wval = tp.value(w);
        auto& gb = tp.grad(b);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* gr = go.data.data() + r * cout;
            for (std::size_t c = 0; c < cout; ++c) gb[c] += gr[c];
        }
        detail::gemm_acc_wgrad(xval.data.data(), go.data.data(), tp.grad(w).data.data(), rows,
                               cin, cout);
        if (detail::gradient_fault_op() == "affine") {
            for (auto& g : tp.grad(w).data) g *= S(1.01);
        }
        detail::gemm_acc_xgrad(go.data.data(), wval.data.data(), tp.grad(x).data.data(), rows,
                               cin, cout);
    });
    return out;
}

template <typename S>
Val<S> leaky_relu(Tape<S>& t, Val<S> x, S slope) {
    if (!(slope > S(0) && slope < S(1))) {
        throw std::domain_error("leaky_relu: slope must lie in (0,1)");
    }
    const auto& xv = t.value(x);
    Val<S> out = t.alloc(xv.shape);
    auto& ov = t.value(out);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const S v = xv[i];
        ov[i] = v > S(0) ? v : slope * v;
    }
    t.set_backward(out, [x, out, slope](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& xval = tp.value(x);
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += xval[i] > S(0) ? go[i] : slope * go[i];
        }
    });
    return out;
}

template <typename S>
Val<S> relu(Tape<S>& t, Val<S> x) {
    const auto& xv = t.value(x);
    Val<S> out = t.alloc(xv.shape);
    auto& ov = t.value(out);
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::max(xv[i], S(0));
    t.set_backward(out, [x, out](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& xval = tp.value(x);
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xval[i] > S(0)) gx[i] += go[i];
        }
    });
    return out;
}

// Max-shifted softmax along one axis. The denominator is accumulated in
// double so each output slice sums to 1 well within 1e-6 even in float mode.
template <typename S>
Val<S> softmax_over_axis(Tape<S>& t, Val<S> x, std::size_t axis) {
    const auto& xv = t.value(x);
    const auto sp = detail::split_axis(xv.shape, axis);
    Val<S> out = t.alloc(xv.shape);
    auto& ov = t.value(out);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.mid * sp.inner + i;
            S mx = xv[base];
            for (std::size_t m = 1; m < sp.mid; ++m) {
                mx = std::max(mx, xv[base + m * sp.inner]);
            }
            double denom = 0.0;
            for (std::size_t m = 0; m < sp.mid; ++m) {
                const double e = std::exp(static_cast<double>(xv[base + m * sp.inner] - mx));
                ov[base + m * sp.inner] = static_cast<S>(e);
                denom += e;
            }
            for (std::size_t m = 0; m < sp.mid; ++m) {
                ov[base + m * sp.inner] =
                    static_cast<S>(static_cast<double>(ov[base + m * sp.inner]) / denom);
            }
        }
    }
    t.set_backward(out, [x, out, sp](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& y = tp.value(out);
        auto& gx = tp.grad(x);
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.mid * sp.inner + i;
                double dot = 0.0;
                for (std::size_t m = 0; m < sp.mid; ++m) {
                    const std::size_t p = base + m * sp.inner;
                    dot += static_cast<double>(go[p]) * static_cast<double>(y[p]);
                }
                for (std::size_t m = 0; m < sp.mid; ++m) {
                    const std::size_t p = base + m * sp.inner;
                    gx[p] += y[p] * (go[p] - static_cast<S>(dot));
                }
            }
        }
    });
    return out;
}

// Per-slice maximum with gradient routed only to the winning position;
// ties go to the lowest index along the axis.
template <typename S>
Val<S> reduce_max_mid(Tape<S>& t, Val<S> x, std::size_t outer, std::size_t mid, std::size_t inner,
                      Shape out_shape, std::vector<std::int32_t>* argmax_out = nullptr) {
    const auto& xv = t.value(x);
    if (mid == 0) throw std::domain_error("reduce_max: empty reduction axis");
    if (outer * mid * inner != xv.size()) {
        throw std::invalid_argument("reduce_max: split does not cover shape " + shape_str(xv.shape));
    }
    Val<S> out = t.alloc(out_shape);
    auto& ov = t.value(out);
    std::vector<std::int32_t> arg(outer * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * mid * inner + i;
            S best = xv[base];
            std::int32_t bm = 0;
            for (std::size_t m = 1; m < mid; ++m) {
                const S v = xv[base + m * inner];
                if (v > best) {
                    best = v;
                    bm = static_cast<std::int32_t>(m);
                }
            }
            ov[o * inner + i] = best;
            arg[o * inner + i] = bm;
        }
    }
    if (argmax_out) *argmax_out = arg;
    t.set_backward(out, [x, out, outer, mid, inner, arg = std::move(arg)](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        auto& gx = tp.grad(x);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t p = o * inner + i;
                gx[o * mid * inner + static_cast<std::size_t>(arg[p]) * inner + i] += go[p];
            }
        }
    });
    return out;
}

template <typename S>
Val<S> reduce_max_over_axis(Tape<S>& t, Val<S> x, std::size_t axis,
                            std::vector<std::int32_t>* argmax_out = nullptr) {
    const auto& xv = t.value(x);
    const auto sp = detail::split_axis(xv.shape, axis);
    Shape osh;
    for (std::size_t i = 0; i < xv.rank(); ++i) {
        if (i != axis) osh.push_back(xv.shape[i]);
    }
    if (osh.empty()) osh.push_back(1);
    return reduce_max_mid(t, x, sp.outer, sp.mid, sp.inner, std::move(osh), argmax_out);
}

// Concatenation along one axis; every other extent must agree.
template <typename S>
Val<S> concat_over_axis(Tape<S>& t, std::span<const Val<S>> xs, std::size_t axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    const auto& first = t.value(xs[0]);
    Shape osh = first.shape;
    const auto sp0 = detail::split_axis(first.shape, axis);
    std::size_t total_mid = 0;
    for (auto v : xs) {
        const auto& tv = t.value(v);
        if (tv.rank() != first.rank()) {
            throw std::invalid_argument("concat: rank mismatch " + shape_str(tv.shape) + " vs " +
                                        shape_str(first.shape));
        }
        for (std::size_t i = 0; i < tv.rank(); ++i) {
            if (i != axis && tv.shape[i] != first.shape[i]) {
                throw std::invalid_argument("concat: extent mismatch " + shape_str(tv.shape) +
                                            " vs " + shape_str(first.shape));
            }
        }
        total_mid += tv.shape[axis];
    }
    osh[axis] = total_mid;
    Val<S> out = t.alloc(osh);
    auto& ov = t.value(out);
    const std::size_t ostride = total_mid * sp0.inner;
    std::size_t offset = 0;
    for (auto v : xs) {
        const auto& tv = t.value(v);
        const std::size_t chunk = tv.shape[axis] * sp0.inner;
        for (std::size_t o = 0; o < sp0.outer; ++o) {
            std::copy(tv.data.begin() + o * chunk, tv.data.begin() + (o + 1) * chunk,
                      ov.data.begin() + o * ostride + offset);
        }
        offset += chunk;
    }
    std::vector<Val<S>> inputs(xs.begin(), xs.end());
    t.set_backward(out, [inputs, out, outer = sp0.outer, inner = sp0.inner, ostride](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        std::size_t off = 0;
        for (auto v : inputs) {
            auto& gx = tp.grad(v);
            const std::size_t chunk = gx.size() / outer;
            for (std::size_t o = 0; o < outer; ++o) {
                const S* src = go.data.data() + o * ostride + off;
                S* dst = gx.data.data() + o * chunk;
                for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
            }
            off += chunk;
        }
        (void)inner;
    });
    return out;
}

template <typename S>
Val<S> concat_over_axis(Tape<S>& t, std::initializer_list<Val<S>> xs, std::size_t axis) {
    std::vector<Val<S>> v(xs);
    return concat_over_axis(t, std::span<const Val<S>>(v), axis);
}

// Running statistics for one normalization layer.
template <typename S>
struct BnState {
    Tensor<S> running_mean;
    Tensor<S> running_var;

    BnState() = default;
    explicit BnState(std::size_t channels)
        : running_mean({channels}, S(0)), running_var({channels}, S(1)) {}
};

// Normalizes over every non-channel axis (channels are the trailing axis).
// Training mode uses batch statistics and folds them into the running ones
// as m*old + (1-m)*batch; inference mode uses the running statistics.
template <typename S>
Val<S> batch_norm(Tape<S>& t, Val<S> x, Parameter<S>& scale, Parameter<S>& shift,
                  BnState<S>& state, S momentum, bool training) {
    const auto& xv = t.value(x);
    const std::size_t C = xv.shape.back();
    if (scale.value.size() != C || shift.value.size() != C || state.running_mean.size() != C) {
        throw std::invalid_argument("batch_norm: state sized " +
                                    std::to_string(state.running_mean.size()) +
                                    " does not match channels of " + shape_str(xv.shape));
    }
    const std::size_t rows = xv.size() / C;
    const S eps = S(1e-5);
    Val<S> g = t.param(scale);
    Val<S> bshift = t.param(shift);
    Val<S> out = t.alloc(xv.shape);
    auto& ov = t.value(out);
    const auto& gv = t.value(g);
    const auto& sv = t.value(bshift);

    std::vector<S> mean(C), var(C);
    if (training) {
        std::vector<double> acc(C, 0.0), acc2(C, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xr = xv.data.data() + r * C;
            for (std::size_t c = 0; c < C; ++c) {
                acc[c] += xr[c];
                acc2[c] += static_cast<double>(xr[c]) * xr[c];
            }
        }
        for (std::size_t c = 0; c < C; ++c) {
            const double m = acc[c] / static_cast<double>(rows);
            mean[c] = static_cast<S>(m);
            var[c] = static_cast<S>(std::max(0.0, acc2[c] / static_cast<double>(rows) - m * m));
        }
        for (std::size_t c = 0; c < C; ++c) {
            state.running_mean[c] = momentum * state.running_mean[c] + (S(1) - momentum) * mean[c];
            state.running_var[c] = momentum * state.running_var[c] + (S(1) - momentum) * var[c];
        }
    } else {
        mean.assign(state.running_mean.data.begin(), state.running_mean.data.end());
        var.assign(state.running_var.data.begin(), state.running_var.data.end());
    }

    std::vector<S> inv(C);
    for (std::size_t c = 0; c < C; ++c) inv[c] = S(1) / std::sqrt(var[c] + eps);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xr = xv.data.data() + r * C;
        S* orow = ov.data.data() + r * C;
        for (std::size_t c = 0; c < C; ++c) {
            orow[c] = gv[c] * (xr[c] - mean[c]) * inv[c] + sv[c];
        }
    }

    t.set_backward(out, [x, g, bshift, out, rows, C, training, mean = std::move(mean),
                         inv = std::move(inv)](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& xval = tp.value(x);
        const auto& gval = tp.value(g);
        auto& gx = tp.grad(x);
        auto& gg = tp.grad(g);
        auto& gs = tp.grad(bshift);
        std::vector<double> dsum(C, 0.0), dxhat(C, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* gr = go.data.data() + r * C;
            const S* xr = xval.data.data() + r * C;
            for (std::size_t c = 0; c < C; ++c) {
                dsum[c] += gr[c];
                dxhat[c] += static_cast<double>(gr[c]) * (xr[c] - mean[c]) * inv[c];
            }
        }
        for (std::size_t c = 0; c < C; ++c) {
            gs[c] += static_cast<S>(dsum[c]);
            gg[c] += static_cast<S>(dxhat[c]);
        }
        if (training) {
            const double n = static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                const S* gr = go.data.data() + r * C;
                const S* xr = xval.data.data() + r * C;
                S* gxr = gx.data.data() + r * C;
                for (std::size_t c = 0; c < C; ++c) {
                    const double xhat = static_cast<double>(xr[c] - mean[c]) * inv[c];
                    const double d = static_cast<double>(gr[c]) - dsum[c] / n - xhat * dxhat[c] / n;
                    gxr[c] += static_cast<S>(static_cast<double>(gval[c]) * inv[c] * d);
                }
            }
        } else {
            for (std::size_t r = 0; r < rows; ++r) {
                const S* gr = go.data.data() + r * C;
                S* gxr = gx.data.data() + r * C;
                for (std::size_t c = 0; c < C; ++c) gxr[c] += gr[c] * gval[c] * inv[c];
            }
        }
    });
    return out;
}

// Inverted dropout: kept elements are scaled by 1/keep_prob during training;
// inference is the identity (the input handle is returned unchanged).
template <typename S>
Val<S> dropout(Tape<S>& t, Val<S> x, S keep_prob, bool training, std::mt19937& rng) {
    if (!(keep_prob > S(0) && keep_prob <= S(1))) {
        throw std::domain_error("dropout: keep_prob must lie in (0,1]");
    }
    if (!training || keep_prob == S(1)) return x;
    const auto& xv = t.value(x);
    Val<S> out = t.alloc(xv.shape);
    auto& ov = t.value(out);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const S scale = S(1) / keep_prob;
    std::vector<S> mask(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = u(rng) < static_cast<double>(keep_prob) ? scale : S(0);
        ov[i] = xv[i] * mask[i];
    }
    t.set_backward(out, [x, out, mask = std::move(mask)](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        auto& gx = tp.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * mask[i];
    });
    return out;
}

// Mean over the batch of -log softmax(logits)[label], max-shifted.
template <typename S>
Val<S> softmax_cross_entropy(Tape<S>& t, Val<S> logits, const std::vector<int>& labels) {
    const auto& lv = t.value(logits);
    if (lv.rank() != 2) {
        throw std::invalid_argument("cross_entropy: logits must be [batch, classes], got " +
                                    shape_str(lv.shape));
    }
    const std::size_t B = lv.shape[0];
    const std::size_t C = lv.shape[1];
    if (labels.size() != B) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(B));
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= C) {
            throw std::domain_error("cross_entropy: label " + std::to_string(l) +
                                    " outside [0," + std::to_string(C) + ")");
        }
    }
    Val<S> out = t.alloc(Shape{1});
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const S* row = lv.data.data() + b * C;
        S mx = row[0];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        total += std::log(denom) + static_cast<double>(mx) -
                 static_cast<double>(row[static_cast<std::size_t>(labels[b])]);
    }
    t.value(out)[0] = static_cast<S>(total / static_cast<double>(B));
    t.set_backward(out, [logits, out, labels, B, C](Tape<S>& tp) {
        const S seed = tp.grad(out)[0];
        const auto& lval = tp.value(logits);
        auto& gl = tp.grad(logits);
        const S invb = S(1) / static_cast<S>(B);
        for (std::size_t b = 0; b < B; ++b) {
            const S* row = lval.data.data() + b * C;
            S* grow = gl.data.data() + b * C;
            S mx = row[0];
            for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
            double denom = 0.0;
            for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
            for (std::size_t c = 0; c < C; ++c) {
                const S p = static_cast<S>(std::exp(static_cast<double>(row[c] - mx)) / denom);
                const S onehot = (static_cast<std::size_t>(labels[b]) == c) ? S(1) : S(0);
                grow[c] += seed * invb * (p - onehot);
            }
        }
    });
    return out;
}

// --- small elementwise/reduction helpers ---

template <typename S>
Val<S> add(Tape<S>& t, Val<S> a, Val<S> b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (!av.same_shape(bv)) {
        throw std::invalid_argument("add: shape " + shape_str(av.shape) + " vs " +
                                    shape_str(bv.shape));
    }
    Val<S> out = t.alloc(av.shape);
    auto& ov = t.value(out);
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
    t.set_backward(out, [a, b, out](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        auto& ga = tp.grad(a);
        auto& gb = tp.grad(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i];
            gb[i] += go[i];
        }
    });
    return out;
}

template <typename S>
Val<S> mul(Tape<S>& t, Val<S> a, Val<S> b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (!av.same_shape(bv)) {
        throw std::invalid_argument("mul: shape " + shape_str(av.shape) + " vs " +
                                    shape_str(bv.shape));
    }
    Val<S> out = t.alloc(av.shape);
    auto& ov = t.value(out);
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
    t.set_backward(out, [a, b, out](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        const auto& aval = tp.value(a);
        const auto& bval = tp.value(b);
        auto& ga = tp.grad(a);
        auto& gb = tp.grad(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i] * bval[i];
            gb[i] += go[i] * aval[i];
        }
    });
    return out;
}

template <typename S>
Val<S> scale(Tape<S>& t, Val<S> a, S factor) {
    const auto& av = t.value(a);
    Val<S> out = t.alloc(av.shape);
    auto& ov = t.value(out);
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * factor;
    t.set_backward(out, [a, out, factor](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        auto& ga = tp.grad(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * factor;
    });
    return out;
}

template <typename S>
Val<S> sum_all(Tape<S>& t, Val<S> a) {
    const auto& av = t.value(a);
    Val<S> out = t.alloc(Shape{1});
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
    t.value(out)[0] = static_cast<S>(acc);
    t.set_backward(out, [a, out](Tape<S>& tp) {
        const S seed = tp.grad(out)[0];
        auto& ga = tp.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += seed;
    });
    return out;
}

}  // namespace gapnet
