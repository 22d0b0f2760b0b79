#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gapnet/ops.hpp"
#include "gapnet/rng.hpp"
#include "gapnet/tape.hpp"
#include "gapnet/tensor.hpp"

using namespace gapnet;

namespace {

// Independent triple-loop matrix multiply for the affine oracle.
template <typename S>
Tensor<S> matmul_oracle(const Tensor<S>& a, const Tensor<S>& w, const Tensor<S>& b) {
    Tensor<S> out(Shape{a.shape[0], w.shape[1]});
    for (std::size_t i = 0; i < a.shape[0]; ++i) {
        for (std::size_t j = 0; j < w.shape[1]; ++j) {
            S acc = b[j];
            for (std::size_t k = 0; k < a.shape[1]; ++k) {
                acc += a.at2(i, k) * w.at2(k, j);
            }
            out.at2(i, j) = acc;
        }
    }
    return out;
}

template <typename S>
Tensor<S> random_tensor(Shape sh, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<S> t(std::move(sh));
    for (auto& v : t.data) v = static_cast<S>(u(rng));
    return t;
}

}  // namespace

TEST_CASE("affine identity and zero weights", "[core]") {
    Tape<float> t;
    Val<float> x = t.constant(tensor2<float>(1, 2, {1, 2}));

    SECTION("identity weights pass the input") {
        Val<float> w = t.constant(tensor2<float>(2, 2, {1, 0, 0, 1}));
        Val<float> b = t.constant(tensor1<float>({0, 0}));
        Val<float> y = affine(t, x, w, b);
        CHECK(t.value(y).data == std::vector<float>{1, 2});
    }
    SECTION("zero weights pass the bias") {
        Val<float> w = t.constant(tensor2<float>(2, 2, {0, 0, 0, 0}));
        Val<float> b = t.constant(tensor1<float>({3, 4}));
        Val<float> y = affine(t, x, w, b);
        CHECK(t.value(y).data == std::vector<float>{3, 4});
    }
    SECTION("shape mismatch names both shapes") {
        Val<float> w = t.constant(tensor2<float>(3, 2, {0, 0, 0, 0, 0, 0}));
        Val<float> b = t.constant(tensor1<float>({0, 0}));
        CHECK_THROWS_WITH(affine(t, x, w, b),
                          Catch::Matchers::ContainsSubstring("[1,2]") &&
                              Catch::Matchers::ContainsSubstring("[3,2]"));
    }
}

TEST_CASE("affine matches triple-loop matmul oracle", "[core]") {
    std::mt19937 rng = make_rng(42);
    Tape<double> t;
    const Tensor<double> a = random_tensor<double>({4, 3}, rng);
    const Tensor<double> w = random_tensor<double>({3, 5}, rng);
    const Tensor<double> b = random_tensor<double>({5}, rng);
    Val<double> y = affine(t, t.constant(a), t.constant(w), t.constant(b));
    const Tensor<double> expect = matmul_oracle(a, w, b);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(std::fabs(t.value(y)[i] - expect[i]) < 1e-12);
    }
}

TEST_CASE("leaky_relu definition", "[core]") {
    Tape<float> t;
    Val<float> x = t.constant(tensor1<float>({-1.0f, 2.5f, 0.0f}));
    Val<float> y = leaky_relu(t, x, 0.2f);
    CHECK(t.value(y)[0] == Catch::Approx(-0.2));
    CHECK(t.value(y)[1] == 2.5f);
    CHECK(t.value(y)[2] == 0.0f);
    CHECK_THROWS_AS(leaky_relu(t, x, 1.5f), std::domain_error);
}

TEST_CASE("relu definition and agreement with leaky_relu on positives", "[core]") {
    Tape<float> t;
    Val<float> x = t.constant(tensor1<float>({-1, 0, 3}));
    Val<float> y = relu(t, x);
    CHECK(t.value(y).data == std::vector<float>{0, 0, 3});

    Val<float> neg = t.constant(tensor1<float>({-5, -1, -0.25f}));
    Val<float> yn = relu(t, neg);
    CHECK(t.value(yn).data == std::vector<float>{0, 0, 0});

    std::mt19937 rng = make_rng(7);
    Tensor<float> pos = random_tensor<float>({16}, rng, 0.01, 2.0);
    Val<float> p = t.constant(pos);
    CHECK(t.value(relu(t, p)).data == t.value(leaky_relu(t, p, 0.2f)).data);
}

TEST_CASE("softmax rows", "[core]") {
    Tape<float> t;

    SECTION("equal inputs give the uniform distribution") {
        Val<float> x = t.constant(tensor1<float>({0, 0, 0}));
        Val<float> y = softmax_over_axis(t, x, 0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(t.value(y)[i] == Catch::Approx(1.0 / 3));
    }
    SECTION("huge equal inputs do not overflow") {
        Val<float> x = t.constant(tensor1<float>({1000, 1000}));
        Val<float> y = softmax_over_axis(t, x, 0);
        CHECK(t.value(y)[0] == Catch::Approx(0.5));
        CHECK(t.value(y)[1] == Catch::Approx(0.5));
        CHECK(t.value(y).all_finite());
    }
    SECTION("matches the scalar-arithmetic oracle") {
        Val<float> x = t.constant(tensor1<float>({1, 2, 3}));
        Val<float> y = softmax_over_axis(t, x, 0);
        const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
        const double z = e1 + e2 + e3;
        CHECK(t.value(y)[0] == Catch::Approx(e1 / z).epsilon(1e-6));
        CHECK(t.value(y)[1] == Catch::Approx(e2 / z).epsilon(1e-6));
        CHECK(t.value(y)[2] == Catch::Approx(e3 / z).epsilon(1e-6));
        CHECK(t.value(y)[0] == Catch::Approx(0.0900).margin(5e-5));
        CHECK(t.value(y)[1] == Catch::Approx(0.2447).margin(5e-5));
        CHECK(t.value(y)[2] == Catch::Approx(0.6652).margin(5e-5));
    }
    SECTION("slices sum to 1 and stay positive") {
        std::mt19937 rng = make_rng(1);
        Val<float> x = t.constant(random_tensor<float>({8, 30}, rng, -6, 6));
        Val<float> y = softmax_over_axis(t, x, 1);
        for (std::size_t r = 0; r < 8; ++r) {
            double s = 0;
            for (std::size_t j = 0; j < 30; ++j) {
                const float v = t.value(y).at2(r, j);
                CHECK(v > 0.0f);
                s += v;
            }
            CHECK(std::fabs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("reduce_max values, ties, and the loop oracle", "[core]") {
    Tape<float> t;

    SECTION("direct max over axis 0") {
        Val<float> x = t.constant(tensor2<float>(2, 2, {1, 5, 7, 2}));
        Val<float> y = reduce_max_over_axis(t, x, 0);
        CHECK(t.value(y).data == std::vector<float>{7, 5});
    }
    SECTION("tie keeps the lowest index") {
        std::vector<std::int32_t> arg;
        Val<float> x = t.constant(tensor1<float>({3, 3}));
        Val<float> y = reduce_max_over_axis(t, x, 0, &arg);
        CHECK(t.value(y)[0] == 3.0f);
        CHECK(arg == std::vector<std::int32_t>{0});
    }
    SECTION("random 2x3x4 over axis 1 matches the brute-force loop") {
        std::mt19937 rng = make_rng(3);
        const Tensor<float> x = random_tensor<float>({2, 3, 4}, rng);
        Val<float> y = reduce_max_over_axis(t, t.constant(x), 1);
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t c = 0; c < 4; ++c) {
                float best = x.at3(i, 0, c);
                for (std::size_t j = 1; j < 3; ++j) best = std::max(best, x.at3(i, j, c));
                CHECK(t.value(y).at2(i, c) == best);
            }
        }
    }
}

TEST_CASE("concat over an axis", "[core]") {
    Tape<float> t;

    SECTION("two 1x1 blocks side by side") {
        Val<float> a = t.constant(tensor2<float>(1, 1, {1}));
        Val<float> b = t.constant(tensor2<float>(1, 1, {2}));
        Val<float> y = concat_over_axis(t, {a, b}, 1);
        CHECK(t.value(y).shape == Shape{1, 2});
        CHECK(t.value(y).data == std::vector<float>{1, 2});
    }
    SECTION("concat of one tensor is the identity") {
        std::mt19937 rng = make_rng(4);
        const Tensor<float> x = random_tensor<float>({3, 4}, rng);
        Val<float> y = concat_over_axis(t, {t.constant(x)}, 1);
        CHECK(t.value(y).data == x.data);
    }
    SECTION("concat then slice recovers the originals bit-exactly") {
        std::mt19937 rng = make_rng(5);
        const Tensor<float> a = random_tensor<float>({2, 3, 2}, rng);
        const Tensor<float> b = random_tensor<float>({2, 5, 2}, rng);
        Val<float> y = concat_over_axis(t, {t.constant(a), t.constant(b)}, 1);
        const auto& yv = t.value(y);
        REQUIRE(yv.shape == Shape{2, 8, 2});
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 3; ++j)
                for (std::size_t c = 0; c < 2; ++c) CHECK(yv.at3(i, j, c) == a.at3(i, j, c));
            for (std::size_t j = 0; j < 5; ++j)
                for (std::size_t c = 0; c < 2; ++c) CHECK(yv.at3(i, j + 3, c) == b.at3(i, j, c));
        }
    }
    SECTION("mismatched non-axis extents are rejected") {
        Val<float> a = t.constant(tensor2<float>(2, 2, {1, 2, 3, 4}));
        Val<float> b = t.constant(tensor2<float>(3, 2, {1, 2, 3, 4, 5, 6}));
        CHECK_THROWS_AS(concat_over_axis(t, {a, b}, 1), std::invalid_argument);
    }
}

TEST_CASE("batch norm statistics and running update", "[core]") {
    Tape<float> t;

    SECTION("constant channel maps to zero in training mode") {
        Parameter<float> scale(tensor1<float>({1, 1}));
        Parameter<float> shift(tensor1<float>({0, 0}));
        BnState<float> state(2);
        Val<float> x = t.constant(tensor2<float>(3, 2, {4, 7, 4, 7, 4, 7}));
        Val<float> y = batch_norm(t, x, scale, shift, state, 0.9f, true);
        for (float v : t.value(y).data) CHECK(v == Catch::Approx(0.0).margin(1e-6));
    }
    SECTION("standardized input passes through within 1e-5") {
        Parameter<float> scale(tensor1<float>({1}));
        Parameter<float> shift(tensor1<float>({0}));
        BnState<float> state(1);
        // mean 0, biased variance exactly 1
        Val<float> x = t.constant(tensor2<float>(2, 1, {1, -1}));
        Val<float> y = batch_norm(t, x, scale, shift, state, 0.9f, true);
        CHECK(t.value(y)[0] == Catch::Approx(1.0).margin(1e-5));
        CHECK(t.value(y)[1] == Catch::Approx(-1.0).margin(1e-5));
    }
    SECTION("running mean follows m*old + (1-m)*batch") {
        Parameter<float> scale(tensor1<float>({1}));
        Parameter<float> shift(tensor1<float>({0}));
        BnState<float> state(1);
        state.running_mean[0] = 2.0f;
        Val<float> x = t.constant(tensor2<float>(2, 1, {4, 8}));  // batch mean 6
        batch_norm(t, x, scale, shift, state, 0.75f, true);
        CHECK(state.running_mean[0] == Catch::Approx(0.75 * 2.0 + 0.25 * 6.0));
    }
    SECTION("inference mode uses running statistics") {
        Parameter<float> scale(tensor1<float>({2}));
        Parameter<float> shift(tensor1<float>({1}));
        BnState<float> state(1);
        state.running_mean[0] = 1.0f;
        state.running_var[0] = 4.0f;
        Val<float> x = t.constant(tensor2<float>(1, 1, {3}));
        Val<float> y = batch_norm(t, x, scale, shift, state, 0.9f, false);
        CHECK(t.value(y)[0] == Catch::Approx(2.0 * (3.0 - 1.0) / std::sqrt(4.0 + 1e-5) + 1.0));
    }
}

TEST_CASE("dropout contract", "[core]") {
    Tape<float> t;
    std::mt19937 rng = make_rng(9);
    const Tensor<float> x = random_tensor<float>({64}, rng);

    SECTION("keep_prob 1 is the identity") {
        Val<float> v = t.constant(x);
        Val<float> y = dropout(t, v, 1.0f, true, rng);
        CHECK(t.value(y).data == x.data);
    }
    SECTION("inference mode is the identity") {
        Val<float> v = t.constant(x);
        Val<float> y = dropout(t, v, 0.3f, false, rng);
        CHECK(y.id == v.id);
    }
    SECTION("same seed gives a bit-identical mask") {
        std::mt19937 r1 = make_rng(123), r2 = make_rng(123);
        Val<float> y1 = dropout(t, t.constant(x), 0.5f, true, r1);
        Val<float> y2 = dropout(t, t.constant(x), 0.5f, true, r2);
        CHECK(t.value(y1).data == t.value(y2).data);
    }
    SECTION("kept values are scaled by 1/keep") {
        Val<float> y = dropout(t, t.constant(x), 0.5f, true, rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const float v = t.value(y)[i];
            CHECK((v == 0.0f || v == Catch::Approx(x[i] * 2.0f)));
        }
    }
}

TEST_CASE("softmax cross entropy", "[core]") {
    Tape<double> t;

    SECTION("uniform logits over 40 classes give ln 40") {
        Val<double> logits = t.constant(Tensor<double>(Shape{2, 40}, 0.25));
        Val<double> loss = softmax_cross_entropy(t, logits, {3, 17});
        CHECK(t.value(loss)[0] == Catch::Approx(std::log(40.0)).epsilon(1e-10));
    }
    SECTION("huge correct logit drives the loss to zero") {
        Tensor<double> logits(Shape{1, 5});
        logits.at2(0, 2) = 60.0;
        Val<double> loss = softmax_cross_entropy(t, t.constant(logits), {2});
        CHECK(t.value(loss)[0] < 1e-10);
    }
    SECTION("random case matches the direct formula within 1e-10") {
        std::mt19937 rng = make_rng(21);
        const Tensor<double> logits = random_tensor<double>({3, 5}, rng, -2, 2);
        const std::vector<int> labels{4, 0, 2};
        Val<double> loss = softmax_cross_entropy(t, t.constant(logits), labels);
        double expect = 0;
        for (std::size_t b = 0; b < 3; ++b) {
            double z = 0;
            for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits.at2(b, c));
            expect += -std::log(std::exp(logits.at2(b, static_cast<std::size_t>(labels[b]))) / z);
        }
        expect /= 3.0;
        CHECK(t.value(loss)[0] == Catch::Approx(expect).margin(1e-10));
    }
    SECTION("out-of-range label is a domain error") {
        Val<double> logits = t.constant(Tensor<double>(Shape{1, 3}, 0.0));
        CHECK_THROWS_AS(softmax_cross_entropy(t, logits, {3}), std::domain_error);
    }
}

TEST_CASE("forward ops are deterministic", "[core]") {
    auto run = [] {
        std::mt19937 rng = make_rng(33);
        Tape<float> t;
        Val<float> x = t.constant(random_tensor<float>({6, 8}, rng));
        Val<float> w = t.constant(random_tensor<float>({8, 4}, rng));
        Val<float> b = t.constant(random_tensor<float>({4}, rng));
        Val<float> y = softmax_over_axis(t, leaky_relu(t, affine(t, x, w, b), 0.2f), 1);
        return t.value(y).data;
    };
    CHECK(run() == run());
}

TEST_CASE("tensor invariants", "[core]") {
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor<float>(Shape{3}, std::vector<float>{1, 2}), std::invalid_argument);
    Tensor<float> t(Shape{2, 2}, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t.all_finite());
    t[2] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
}
