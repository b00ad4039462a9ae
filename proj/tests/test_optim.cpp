#include <doctest.h>

#include <cmath>

#include "maskforge/optim.hpp"

using namespace maskforge;

TEST_CASE("zero gradient leaves the parameter unchanged") {
    Parameter p(Tensor::of({3}, {1.0, -2.0, 0.5}));
    const auto before = p.tensor->values;
    adam_amsgrad_step(p, 0.1);
    CHECK(p.tensor->values == before);
}

TEST_CASE("first step with unit gradient moves by ~-lr") {
    Parameter p(Tensor::scalar(0.0));
    p.tensor->grad[0] = 1.0;
    adam_amsgrad_step(p, 0.1);
    // m_hat = 1, v_hat = 1: step = -lr / (1 + eps)
    CHECK(p.tensor->values[0] == doctest::Approx(-0.1).epsilon(1e-7));
    CHECK(p.tensor->grad[0] == 0.0);  // grad zeroed afterwards
}

TEST_CASE("constant gradient: v_max non-decreasing, both steps negative") {
    Parameter p(Tensor::scalar(0.0));
    p.tensor->grad[0] = 1.0;
    adam_amsgrad_step(p, 0.05);
    const double w1 = p.tensor->values[0];
    const double vmax1 = p.v_max[0];
    p.tensor->grad[0] = 1.0;
    adam_amsgrad_step(p, 0.05);
    const double w2 = p.tensor->values[0];
    CHECK(w1 < 0.0);
    CHECK(w2 < w1);
    CHECK(p.v_max[0] >= vmax1);
}

TEST_CASE("v_max stays monotone under varying gradients") {
    Parameter p(Tensor::of({2}, {0.0, 0.0}));
    std::vector<double> prev(2, 0.0);
    const double grads[6] = {1.0, -3.0, 0.25, 0.0, 2.0, -0.5};
    for (double g : grads) {
        p.tensor->grad[0] = g;
        p.tensor->grad[1] = -g * 0.5;
        adam_amsgrad_step(p, 0.01);
        for (int i = 0; i < 2; ++i) {
            CHECK(p.v_max[i] >= prev[i]);
            CHECK(p.v[i] >= 0.0);
            prev[i] = p.v_max[i];
        }
    }
}

TEST_CASE("non-positive learning rate is rejected") {
    Parameter p(Tensor::scalar(0.0));
    p.tensor->grad[0] = 1.0;
    CHECK_THROWS_AS(adam_amsgrad_step(p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(adam_amsgrad_step(p, -0.1), std::invalid_argument);
}
