#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gapnet/tensor.hpp"

namespace gapnet {

// A value with an accumulated-gradient companion; the unit of optimization.
template <typename S>
struct Parameter {
    Tensor<S> value;
    Tensor<S> grad;

    Parameter() = default;
    explicit Parameter(Tensor<S> v) : value(std::move(v)), grad(value.shape) {}

    void zero_grad() { grad.fill(S(0)); }
};

template <typename S>
struct Val {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Define-by-run record of executed operations. Rebuilt every forward pass;
// node storage is recycled across resets so steady-state passes do not
// allocate. Backward replays the record in exact reverse order once.
template <typename S>
class Tape {
public:
    Tensor<S>& value(Val<S> v) { return nodes_[check(v)].value; }
    const Tensor<S>& value(Val<S> v) const { return nodes_[check(v)].value; }
    Tensor<S>& grad(Val<S> v) { return nodes_[check(v)].grad; }
    const Tensor<S>& grad(Val<S> v) const { return nodes_[check(v)].grad; }

    // Drops all recorded nodes but keeps their buffers for reuse.
    void reset() { live_ = 0; }

    std::size_t size() const { return live_; }

    // When off, ops compute values only; backward bookkeeping is skipped.
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    // Fresh node with the given shape; contents are unspecified. Node
    // storage is a deque so references held by callers stay valid while new
    // nodes are appended mid-operation.
    Val<S> alloc(const Shape& sh) {
        if (live_ == nodes_.size()) nodes_.emplace_back();
        Node& n = nodes_[live_];
        if (n.value.shape != sh) {
            n.value.shape = sh;
            n.value.data.resize(shape_numel(sh));
        }
        n.back = nullptr;
        n.param = nullptr;
        return Val<S>{static_cast<std::int32_t>(live_++)};
    }

    Val<S> constant(const Tensor<S>& t) {
        Val<S> v = alloc(t.shape);
        value(v).data = t.data;
        return v;
    }

    // Leaf whose value snapshots the parameter; backward adds into p.grad.
    // The parameter must outlive the backward pass.
    Val<S> param(Parameter<S>& p) {
        Val<S> v = constant(p.value);
        if (recording_) nodes_[v.id].param = &p;
        return v;
    }

    template <typename F>
    void set_backward(Val<S> v, F&& fn) {
        if (recording_) nodes_[check(v)].back = std::forward<F>(fn);
    }

    // Seeds d(loss)/d(loss)=1 and accumulates gradients of every reachable
    // parameter; parameters the loss does not depend on are left untouched.
    void backward(Val<S> loss) {
        if (!recording_) throw std::logic_error("backward: tape is not recording");
        if (value(loss).size() != 1) {
            throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                        shape_str(value(loss).shape));
        }
        for (std::size_t i = 0; i < live_; ++i) {
            Node& n = nodes_[i];
            if (n.grad.shape != n.value.shape) {
                n.grad.shape = n.value.shape;
                n.grad.data.resize(n.value.size());
            }
            n.grad.fill(S(0));
        }
        nodes_[loss.id].grad[0] = S(1);
        for (std::size_t i = live_; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.back) n.back(*this);
            if (n.param) {
                auto& pg = n.param->grad.data;
                const auto& g = n.grad.data;
                for (std::size_t j = 0; j < g.size(); ++j) pg[j] += g[j];
            }
        }
    }

private:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        std::function<void(Tape&)> back;
        Parameter<S>* param = nullptr;
    };

    std::size_t check(Val<S> v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= live_) {
            throw std::logic_error("tape: stale or invalid value handle");
        }
        return static_cast<std::size_t>(v.id);
    }

    std::deque<Node> nodes_;
    std::size_t live_ = 0;
    bool recording_ = true;
};

}  // namespace gapnet
