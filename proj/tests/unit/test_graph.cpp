#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "gapnet/gradcheck.hpp"
#include "gapnet/graph.hpp"
#include "gapnet/rng.hpp"

using namespace gapnet;

namespace {

template <typename S>
Tensor<S> random_points(std::size_t n, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<S> t(Shape{n, 3});
    for (auto& v : t.data) v = static_cast<S>(u(rng));
    return t;
}

// Independent oracle: sort every other index by (squared distance, index).
template <typename S>
std::vector<std::int32_t> full_sort_row(const Tensor<S>& pts, std::size_t i, std::size_t k) {
    const std::size_t n = pts.shape[0];
    std::vector<std::pair<double, std::int32_t>> all;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double d = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double t = static_cast<double>(pts.at2(i, c)) - pts.at2(j, c);
            d += t * t;
        }
        all.emplace_back(d, static_cast<std::int32_t>(j));
    }
    std::sort(all.begin(), all.end());
    std::vector<std::int32_t> row{static_cast<std::int32_t>(i)};
    for (std::size_t j = 0; j + 1 < k; ++j) row.push_back(all[j].second);
    return row;
}

}  // namespace

TEST_CASE("knn self-inclusion and basic ordering", "[graph]") {
    SECTION("k=1 keeps only the point itself") {
        std::mt19937 rng = make_rng(1);
        const auto pts = random_points<float>(5, rng);
        const KnnGraph g = knn_build(pts, 1);
        for (std::size_t i = 0; i < 5; ++i) CHECK(g.at(i, 0) == static_cast<std::int32_t>(i));
    }
    SECTION("collinear points pick the closer neighbor") {
        // x-axis positions 0, 1, 3: d(1,0)=1 < d(1,3)=2
        Tensor<float> pts(Shape{3, 3}, {0, 0, 0, 1, 0, 0, 3, 0, 0});
        const KnnGraph g = knn_build(pts, 2);
        CHECK(g.at(1, 0) == 1);
        CHECK(g.at(1, 1) == 0);
    }
    SECTION("k out of range is a domain error") {
        std::mt19937 rng = make_rng(2);
        const auto pts = random_points<float>(4, rng);
        CHECK_THROWS_AS(knn_build(pts, 5), std::domain_error);
        CHECK_THROWS_AS(knn_build(pts, 0), std::domain_error);
    }
}

TEST_CASE("knn matches the full-sort oracle", "[graph]") {
    std::mt19937 rng = make_rng(12);

    SECTION("random cloud, N=64") {
        const auto pts = random_points<float>(64, rng);
        const KnnGraph g = knn_build(pts, 8);
        for (std::size_t i = 0; i < 64; ++i) {
            const auto expect = full_sort_row(pts, i, 8);
            for (std::size_t j = 0; j < 8; ++j) CHECK(g.at(i, j) == expect[j]);
        }
    }
    SECTION("duplicated distances break ties by index") {
        // integer lattice gives exact repeated distances
        Tensor<float> pts(Shape{8, 3});
        for (std::size_t i = 0; i < 8; ++i) {
            pts.at2(i, 0) = static_cast<float>(i & 1);
            pts.at2(i, 1) = static_cast<float>((i >> 1) & 1);
            pts.at2(i, 2) = static_cast<float>((i >> 2) & 1);
        }
        const KnnGraph g = knn_build(pts, 4);
        for (std::size_t i = 0; i < 8; ++i) {
            const auto expect = full_sort_row(pts, i, 4);
            for (std::size_t j = 0; j < 4; ++j) CHECK(g.at(i, j) == expect[j]);
        }
    }
    SECTION("duplicated points keep self first") {
        Tensor<float> pts(Shape{3, 3}, {1, 1, 1, 1, 1, 1, 2, 0, 0});
        const KnnGraph g = knn_build(pts, 2);
        CHECK(g.at(1, 0) == 1);  // self, despite index 0 at distance zero
        CHECK(g.at(1, 1) == 0);
    }
    SECTION("deterministic across rebuilds") {
        const auto pts = random_points<float>(32, rng);
        CHECK(knn_build(pts, 6).indices == knn_build(pts, 6).indices);
    }
}

TEST_CASE("edge features follow the center-minus-neighbor sign", "[graph]") {
    Tensor<float> pts(Shape{2, 3}, {0, 0, 0, 1, 2, 3});
    const KnnGraph g = knn_build(pts, 2);
    const auto e = edge_features_plain(pts, g);

    SECTION("self edge is the zero vector") {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(e.at3(0, 0, c) == 0.0f);
            CHECK(e.at3(1, 0, c) == 0.0f);
        }
    }
    SECTION("neighbor edge of the origin is minus the neighbor") {
        CHECK(e.at3(0, 1, 0) == -1.0f);
        CHECK(e.at3(0, 1, 1) == -2.0f);
        CHECK(e.at3(0, 1, 2) == -3.0f);
    }
}

TEST_CASE("edge features match a gather-and-subtract loop bit-exactly", "[graph]") {
    std::mt19937 rng = make_rng(77);
    const auto pts = random_points<float>(24, rng);
    const KnnGraph g = knn_build(pts, 5);
    const auto e = edge_features_plain(pts, g);
    // and through the differentiable op
    Tape<float> tape;
    NeighborIndices nbr;
    nbr.append(g, 0);
    Val<float> ev = edge_features(tape, tape.constant(pts), nbr);
    for (std::size_t i = 0; i < 24; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            const std::size_t nb = static_cast<std::size_t>(g.at(i, j));
            for (std::size_t c = 0; c < 3; ++c) {
                const float expect = pts.at2(i, c) - pts.at2(nb, c);
                CHECK(e.at3(i, j, c) == expect);
                CHECK(tape.value(ev).at3(i, j, c) == expect);
            }
        }
    }
}

TEST_CASE("edge features are translation invariant", "[graph]") {
    std::mt19937 rng = make_rng(31);
    const auto pts = random_points<float>(16, rng);
    const KnnGraph g = knn_build(pts, 4);
    Tensor<float> shifted = pts;
    for (std::size_t i = 0; i < 16; ++i) {
        shifted.at2(i, 0) += 5.0f;
        shifted.at2(i, 1) -= 2.0f;
        shifted.at2(i, 2) += 0.5f;
    }
    const auto a = edge_features_plain(pts, g);
    const auto b = edge_features_plain(shifted, g);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-6));
}

TEST_CASE("consistent permutation permutes edge feature rows", "[graph]") {
    std::mt19937 rng = make_rng(41);
    const std::size_t n = 20, k = 4;
    const auto pts = random_points<double>(n, rng);
    const KnnGraph g = knn_build(pts, k);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);

    Tensor<double> pts2(Shape{n, 3});
    KnnGraph g2;
    g2.n = n;
    g2.k = k;
    g2.indices.resize(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) pts2.at2(perm[i], c) = pts.at2(i, c);
        for (std::size_t j = 0; j < k; ++j) {
            g2.indices[perm[i] * k + j] =
                static_cast<std::int32_t>(perm[static_cast<std::size_t>(g.at(i, j))]);
        }
    }
    const auto e1 = edge_features_plain(pts, g);
    const auto e2 = edge_features_plain(pts2, g2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(e2.at3(perm[i], j, c) == e1.at3(i, j, c));
            }
        }
    }
}

TEST_CASE("edge features backward passes the finite-difference oracle", "[graph]") {
    std::mt19937 rng = make_rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Parameter<double> feats(Tensor<double>(Shape{10, 3}));
    for (auto& v : feats.value.data) v = u(rng);
    const KnnGraph g = knn_build(feats.value, 3);
    NeighborIndices nbr;
    nbr.append(g, 0);
    Tensor<double> mix(Shape{10, 3, 3});
    for (auto& v : mix.data) v = u(rng);

    Tape<double> t;
    auto fn = [&](GradMode mode) {
        t.set_recording(mode == GradMode::with_grad);
        t.reset();
        Val<double> e = edge_features(t, t.param(feats), nbr);
        Val<double> loss = sum_all(t, mul(t, e, t.constant(mix)));
        const double v = t.value(loss)[0];
        if (mode == GradMode::with_grad) t.backward(loss);
        return v;
    };
    CHECK(check_gradients(fn, {&feats}, 1e-6).max_rel_err < 1e-8);
}
