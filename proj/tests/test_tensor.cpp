#include <doctest.h>

#include <cmath>

#include "maskforge/gradcheck.hpp"
#include "maskforge/ops.hpp"
#include "maskforge/rng.hpp"

using namespace maskforge;

namespace {

TensorPtr random_tensor(std::vector<int> shape, RngStream& rng, bool requires_grad = true,
                        double away_from_zero = 0.0) {
    auto t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t->values) {
        v = rng.uniform_in(-2.0, 2.0);
        if (away_from_zero > 0.0 && std::abs(v) < away_from_zero) v += 0.5;
    }
    return t;
}

}  // namespace

TEST_CASE("elementwise ops compute and validate shapes") {
    Tape tape;
    auto a = Tensor::of({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::of({2, 2}, {5, 6, 7, 8});
    CHECK(ops::add(tape, a, b)->values == std::vector<double>{6, 8, 10, 12});
    CHECK(ops::sub(tape, b, a)->values == std::vector<double>{4, 4, 4, 4});
    CHECK(ops::mul(tape, a, b)->values == std::vector<double>{5, 12, 21, 32});

    auto c = Tensor::of({3}, {1, 2, 3});
    CHECK_THROWS_WITH_AS(ops::add(tape, a, c), doctest::Contains("add"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(ops::mul(tape, a, c), doctest::Contains("[2x2]"), std::invalid_argument);
}

TEST_CASE("conv2d: scalar kernel acts as pointwise scale") {
    Tape tape;
    auto x = Tensor::full({1, 1, 3, 3}, 1.0);
    auto k = Tensor::of({1, 1, 1, 1}, {2.0});
    auto b = Tensor::zeros({1});
    auto y = ops::conv2d(tape, x, k, b, 1, 0);
    CHECK(y->shape == std::vector<int>{1, 1, 3, 3});
    for (double v : y->values) CHECK(v == 2.0);
}

TEST_CASE("conv2d: shape rule and diagnostics") {
    Tape tape;
    auto x = Tensor::full({1, 2, 5, 5}, 1.0);
    auto k = Tensor::full({3, 2, 3, 3}, 0.1);
    auto b = Tensor::zeros({3});
    auto y = ops::conv2d(tape, x, k, b, 2, 1);
    CHECK(y->shape == std::vector<int>{1, 3, 3, 3});

    auto k_bad = Tensor::full({3, 4, 3, 3}, 0.1);
    CHECK_THROWS_WITH_AS(ops::conv2d(tape, x, k_bad, b, 1, 0), doctest::Contains("conv2d"),
                         std::invalid_argument);
}

TEST_CASE("softmax_lastaxis frozen values") {
    Tape tape;
    auto y0 = ops::softmax_lastaxis(tape, Tensor::of({2}, {0, 0}));
    CHECK(y0->values[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(y0->values[1] == doctest::Approx(0.5).epsilon(1e-14));

    auto y1 = ops::softmax_lastaxis(tape, Tensor::of({2}, {1, 0}));
    CHECK(y1->values[0] == doctest::Approx(0.7310585786300049).epsilon(1e-14));
    CHECK(y1->values[1] == doctest::Approx(0.2689414213699951).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and live in (0,1)") {
    auto rng = RngStream::derive(7, 1);
    Tape tape;
    auto x = random_tensor({17, 5}, rng, false);
    auto y = ops::softmax_lastaxis(tape, x);
    for (int r = 0; r < 17; ++r) {
        double s = 0.0;
        for (int j = 0; j < 5; ++j) {
            const double v = y->values[r * 5 + j];
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("cross entropy frozen values and stability") {
    Tape tape;
    auto l0 = ops::cross_entropy_with_logits(tape, Tensor::of({1, 2}, {0, 0}), {0});
    CHECK(l0->item() == doctest::Approx(0.6931471805599453).epsilon(1e-14));

    auto l1 = ops::cross_entropy_with_logits(tape, Tensor::of({1, 2}, {1000, 0}), {0});
    CHECK(std::isfinite(l1->item()));
    CHECK(l1->item() == doctest::Approx(0.0).epsilon(1e-12));

    auto l2 = ops::cross_entropy_with_logits(tape, Tensor::of({1, 2}, {1, 0}), {1});
    CHECK(l2->item() == doctest::Approx(1.3132616875182228).epsilon(1e-14));

    CHECK_THROWS_WITH_AS(ops::cross_entropy_with_logits(tape, Tensor::of({1, 2}, {0, 0}), {2}),
                         doctest::Contains("label"), std::invalid_argument);
}

TEST_CASE("backprop: reduce_sum seeds ones") {
    Tape tape;
    auto x = Tensor::of({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto loss = ops::reduce_sum(tape, x);
    tape.backprop(loss);
    for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("backprop: hand chain rule through mean of squares") {
    Tape tape;
    auto x = Tensor::of({3}, {1, 2, 3}, true);
    auto loss = ops::reduce_mean(tape, ops::mul(tape, x, x));
    tape.backprop(loss);
    CHECK(x->grad[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(x->grad[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(x->grad[2] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("backprop rejects non-scalar loss") {
    Tape tape;
    auto x = Tensor::of({2}, {1, 2}, true);
    auto y = ops::mul(tape, x, x);
    CHECK_THROWS_WITH_AS(tape.backprop(y), doctest::Contains("scalar"), std::invalid_argument);
}

TEST_CASE("log rejects non-positive input") {
    Tape tape;
    CHECK_THROWS_WITH_AS(ops::log(tape, Tensor::of({2}, {1.0, 0.0})),
                         doctest::Contains("non-positive"), std::invalid_argument);
}

TEST_CASE("finite differences per op") {
    auto rng = RngStream::derive(11, 2);

    SUBCASE("relu, away from the kink") {
        auto x = random_tensor({4, 3}, rng, true, 1e-3 * 2);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  return ops::reduce_sum(t, ops::relu(t, in));
              },
                         x) <= 1e-4);
    }
    SUBCASE("exp and log") {
        auto x = random_tensor({5}, rng);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  return ops::reduce_mean(t, ops::exp(t, in));
              },
                         x) <= 1e-4);
        auto pos = Tensor::of({4}, {0.5, 1.5, 2.5, 0.1}, true);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  return ops::reduce_sum(t, ops::log(t, in));
              },
                         pos) <= 1e-4);
    }
    SUBCASE("matmul both sides") {
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({4, 2}, rng);
        CHECK(grad_check([&](Tape& t, const TensorPtr& in) {
                  return ops::reduce_sum(t, ops::matmul(t, in, b->detached()));
              },
                         a) <= 1e-4);
        CHECK(grad_check([&](Tape& t, const TensorPtr& in) {
                  return ops::reduce_sum(t, ops::matmul(t, a->detached(), in));
              },
                         b) <= 1e-4);
    }
    SUBCASE("conv2d input, kernel, bias") {
        auto x = random_tensor({2, 2, 5, 5}, rng);
        auto k = random_tensor({3, 2, 3, 3}, rng);
        auto b = random_tensor({3}, rng);
        auto net = [&](Tape& t, const TensorPtr& xx, const TensorPtr& kk, const TensorPtr& bb) {
            return ops::reduce_mean(t, ops::conv2d(t, xx, kk, bb, 2, 1));
        };
        CHECK(grad_check([&](Tape& t, const TensorPtr& in) {
                  return net(t, in, k->detached(), b->detached());
              },
                         x) <= 1e-4);
        CHECK(grad_check([&](Tape& t, const TensorPtr& in) {
                  return net(t, x->detached(), in, b->detached());
              },
                         k) <= 1e-4);
        CHECK(grad_check([&](Tape& t, const TensorPtr& in) {
                  return net(t, x->detached(), k->detached(), in);
              },
                         b) <= 1e-4);
    }
    SUBCASE("softmax, broadcast, slice, permute, pool, merge paths") {
        auto x = random_tensor({3, 4}, rng);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  auto s = ops::softmax_lastaxis(t, in);
                  return ops::reduce_sum(t, ops::mul(t, s, s));
              },
                         x) <= 1e-4);

        auto small = random_tensor({1, 1, 3}, rng);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  auto b = ops::broadcast_to(t, in, {2, 4, 4, 3});
                  return ops::reduce_mean(t, ops::mul(t, b, b));
              },
                         small) <= 1e-4);

        auto paired = random_tensor({2, 2, 2}, rng);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  return ops::reduce_sum(t, ops::slice_lastaxis(t, in, 0));
              },
                         paired) <= 1e-4);

        auto img = random_tensor({1, 2, 4, 4}, rng, true, 1e-2);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  return ops::reduce_sum(t, ops::maxpool2x2(t, in));
              },
                         img) <= 1e-4);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  auto p = ops::permute4(t, in, {0, 3, 1, 2});
                  return ops::reduce_sum(t, ops::mul(t, p, p));
              },
                         img) <= 1e-4);

        auto grid = random_tensor({2, 2, 3}, rng);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) {
                  auto up = ops::block_upsample(t, in, 5, 7);
                  return ops::reduce_mean(t, ops::mul(t, up, up));
              },
                         grid) <= 1e-4);

        auto parts = random_tensor({2, 3}, rng);
        CHECK(grad_check([&](Tape& t, const TensorPtr& in) {
                  auto cat = ops::concat_axis(t, {in, in}, 1);
                  return ops::reduce_sum(t, ops::mul(t, cat, cat));
              },
                         parts) <= 1e-4);
    }
}

TEST_CASE("grad_check oracle on composite networks") {
    auto rng = RngStream::derive(13, 3);

    SUBCASE("sum is exact") {
        auto x = random_tensor({7}, rng);
        CHECK(grad_check([](Tape& t, const TensorPtr& in) { return ops::reduce_sum(t, in); }, x) <=
              1e-10);
    }
    SUBCASE("cross entropy over conv + relu + dense") {
        auto x = random_tensor({2, 1, 6, 6}, rng, true, 2e-3);
        auto k = random_tensor({2, 1, 3, 3}, rng);
        auto kb = random_tensor({2}, rng);
        auto w = random_tensor({2 * 6 * 6, 3}, rng);
        const std::vector<int> labels = {0, 2};
        auto f = [&](Tape& t, const TensorPtr& in) {
            auto c = ops::conv2d(t, in, k->detached(), kb->detached(), 1, 1);
            auto r = ops::relu(t, c);
            auto flat = ops::reshape(t, r, {2, 2 * 6 * 6});
            auto logits = ops::matmul(t, flat, w->detached());
            return ops::cross_entropy_with_logits(t, logits, labels);
        };
        CHECK(grad_check(f, x) <= 1e-4);
    }
}

TEST_CASE("merge-style gradients distribute exactly") {
    auto rng = RngStream::derive(17, 4);
    auto x = random_tensor({2, 2, 6}, rng);
    // d(sum)/d(in_j) = 1 for every grouped input
    Tape tape;
    auto probe = x->detached();
    probe->requires_grad = true;
    auto sum = ops::reduce_sum(tape, probe);
    tape.backprop(sum);
    for (double g : probe->grad) CHECK(g == 1.0);
}

TEST_CASE("backprop is bit-deterministic across identical tapes") {
    auto build = [] {
        auto rng = RngStream::derive(23, 5);
        auto x = random_tensor({2, 2, 5, 5}, rng);
        auto k = random_tensor({3, 2, 3, 3}, rng);
        auto b = random_tensor({3}, rng);
        Tape tape;
        auto y = ops::conv2d(tape, x, k, b, 1, 1);
        auto r = ops::relu(tape, y);
        auto loss = ops::reduce_mean(tape, ops::mul(tape, r, r));
        tape.backprop(loss);
        return std::tuple{x->grad, k->grad, b->grad};
    };
    auto [g1x, g1k, g1b] = build();
    auto [g2x, g2k, g2b] = build();
    CHECK(g1x == g2x);
    CHECK(g1k == g2k);
    CHECK(g1b == g2b);
}
