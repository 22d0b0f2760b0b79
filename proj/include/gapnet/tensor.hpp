#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gapnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major n-dimensional array. All extents must be positive.
template <typename S>
struct Tensor {
    Shape shape;
    std::vector<S> data;

    Tensor() = default;

    explicit Tensor(Shape sh, S fill = S(0)) : shape(std::move(sh)) {
        check_extents();
        data.assign(shape_numel(shape), fill);
    }

    Tensor(Shape sh, std::vector<S> values) : shape(std::move(sh)), data(std::move(values)) {
        check_extents();
        if (data.size() != shape_numel(shape)) {
            throw std::invalid_argument("tensor: " + std::to_string(data.size()) +
                                        " values do not fill shape " + shape_str(shape));
        }
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t extent(std::size_t axis) const { return shape.at(axis); }

    S& operator[](std::size_t i) { return data[i]; }
    const S& operator[](std::size_t i) const { return data[i]; }

    S& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const S& at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    S& at3(std::size_t i, std::size_t j, std::size_t l) {
        return data[(i * shape[1] + j) * shape[2] + l];
    }
    const S& at3(std::size_t i, std::size_t j, std::size_t l) const {
        return data[(i * shape[1] + j) * shape[2] + l];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (S v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

private:
    void check_extents() const {
        for (auto e : shape) {
            if (e == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
        }
    }
};

// Convenience builders used heavily by tests.
template <typename S>
Tensor<S> tensor1(std::vector<S> values) {
    Shape sh{values.size()};
    return Tensor<S>(std::move(sh), std::move(values));
}

template <typename S>
Tensor<S> tensor2(std::size_t rows, std::size_t cols, std::vector<S> values) {
    return Tensor<S>({rows, cols}, std::move(values));
}

}  // namespace gapnet
