#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gapnet/ops.hpp"
#include "gapnet/tape.hpp"
#include "gapnet/tensor.hpp"

namespace gapnet {

// Directed k-nearest-neighbor graph over one cloud. Row i lists i itself
// first, then the k-1 nearest other points in non-decreasing distance,
// distance ties broken by ascending point index.
struct KnnGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::int32_t> indices;  // n*k, row-major

    std::int32_t at(std::size_t i, std::size_t j) const { return indices[i * k + j]; }
};

// Brute-force O(N^2) Euclidean search. Distances are accumulated in double
// so tie ordering is consistent with any independent double-precision scan.
template <typename S>
KnnGraph knn_build(const Tensor<S>& points, std::size_t k) {
    if (points.rank() != 2 || points.shape[1] != 3) {
        throw std::invalid_argument("knn_build: expected [N,3] points, got " +
                                    shape_str(points.shape));
    }
    const std::size_t n = points.shape[0];
    if (k < 1 || k > n) {
        throw std::domain_error("knn_build: k=" + std::to_string(k) + " outside [1," +
                                std::to_string(n) + "]");
    }
    KnnGraph g;
    g.n = n;
    g.k = k;
    g.indices.resize(n * k);
    std::vector<double> dist(n);
    std::vector<std::int32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = points.at2(i, 0);
        const double yi = points.at2(i, 1);
        const double zi = points.at2(i, 2);
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = xi - points.at2(j, 0);
            const double dy = yi - points.at2(j, 1);
            const double dz = zi - points.at2(j, 2);
            dist[j] = dx * dx + dy * dy + dz * dz;
        }
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) order[m++] = static_cast<std::int32_t>(j);
        }
        const std::size_t take = k - 1;
        auto cmp = [&dist](std::int32_t a, std::int32_t b) {
            if (dist[a] != dist[b]) return dist[a] < dist[b];
            return a < b;
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                          order.begin() + static_cast<std::ptrdiff_t>(m), cmp);
        g.indices[i * k] = static_cast<std::int32_t>(i);
        for (std::size_t j = 0; j < take; ++j) g.indices[i * k + 1 + j] = order[j];
    }
    return g;
}

// Flattened neighbor table for a batch of clouds; indices address global
// rows of the stacked point tensor.
struct NeighborIndices {
    std::size_t rows = 0;
    std::size_t k = 0;
    std::vector<std::int32_t> idx;  // rows*k

    void append(const KnnGraph& g, std::int32_t base) {
        if (k == 0) k = g.k;
        if (k != g.k) throw std::invalid_argument("neighbor table: mixed k");
        idx.reserve(idx.size() + g.indices.size());
        for (auto v : g.indices) idx.push_back(v + base);
        rows += g.n;
    }
};

// Edge features y_ij = x_i - x_ij over the fixed neighbor table: the self
// slot is always the zero vector. Differentiable in x.
template <typename S>
Val<S> edge_features(Tape<S>& t, Val<S> x, const NeighborIndices& nbr) {
    const auto& xv = t.value(x);
    if (xv.rank() != 2 || xv.shape[0] != nbr.rows) {
        throw std::invalid_argument("edge_features: features " + shape_str(xv.shape) +
                                    " do not match neighbor table of " + std::to_string(nbr.rows) +
                                    " rows");
    }
    const std::size_t C = xv.shape[1];
    const std::size_t k = nbr.k;
    Val<S> out = t.alloc(Shape{nbr.rows, k, C});
    auto& ov = t.value(out);
    for (std::size_t r = 0; r < nbr.rows; ++r) {
        const S* xr = xv.data.data() + r * C;
        for (std::size_t j = 0; j < k; ++j) {
            const S* xn = xv.data.data() + static_cast<std::size_t>(nbr.idx[r * k + j]) * C;
            S* orow = ov.data.data() + (r * k + j) * C;
            for (std::size_t c = 0; c < C; ++c) orow[c] = xr[c] - xn[c];
        }
    }
    t.set_backward(out, [x, out, &nbr, C, k](Tape<S>& tp) {
        const auto& go = tp.grad(out);
        auto& gx = tp.grad(x);
        for (std::size_t r = 0; r < nbr.rows; ++r) {
            S* gr = gx.data.data() + r * C;
            for (std::size_t j = 0; j < k; ++j) {
                const S* grow = go.data.data() + (r * k + j) * C;
                S* gn = gx.data.data() + static_cast<std::size_t>(nbr.idx[r * k + j]) * C;
                for (std::size_t c = 0; c < C; ++c) {
                    gr[c] += grow[c];
                    gn[c] -= grow[c];
                }
            }
        }
    });
    return out;
}

// Plain (non-differentiable) variant for oracles and batch plumbing.
template <typename S>
Tensor<S> edge_features_plain(const Tensor<S>& x, const KnnGraph& g) {
    const std::size_t C = x.shape[1];
    Tensor<S> out(Shape{g.n, g.k, C});
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < g.k; ++j) {
            const std::size_t nb = static_cast<std::size_t>(g.at(i, j));
            for (std::size_t c = 0; c < C; ++c) {
                out.at3(i, j, c) = x.at2(i, c) - x.at2(nb, c);
            }
        }
    }
    return out;
}

}  // namespace gapnet
