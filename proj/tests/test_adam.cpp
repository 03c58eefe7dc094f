// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "bonefield/adam.hpp"

using namespace bonefield;

TEST_CASE("zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.5, -2.0};
    AdamSlot slot;
    AdamConfig cfg;
    adam_step(p, {0.0, 0.0}, slot, cfg, 1);
    CHECK(p[0] == 1.5);
    CHECK(p[1] == -2.0);
}

TEST_CASE("first step moves by the learning rate when eps vanishes") {
    // With bias correction, mhat/sqrt(vhat) = g/|g| on step one.
    std::vector<double> p{0.0, 0.0, 0.0};
    AdamSlot slot;
    AdamConfig cfg;
    cfg.lr = 0.07;
    cfg.eps = 0.0;
    adam_step(p, {3.0, -0.004, 1e6}, slot, cfg, 1);
    CHECK(p[0] == doctest::Approx(-0.07).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.07).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(-0.07).epsilon(1e-12));
}

TEST_CASE("200 steps on (x-3)^2 reaches the minimum") {
    // Independent scalar recurrence as the oracle.
    double m = 0.0, v = 0.0, x_ref = 0.0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 200; ++t) {
        const double g = 2.0 * (x_ref - 3.0);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x_ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    }
    REQUIRE(std::fabs(x_ref - 3.0) < 0.05);

    std::vector<double> p{0.0};
    AdamSlot slot;
    AdamConfig cfg;
    cfg.lr = 0.1;
    for (int t = 1; t <= 200; ++t) adam_step(p, {2.0 * (p[0] - 3.0)}, slot, cfg, t);
    CHECK(p[0] == doctest::Approx(x_ref).epsilon(1e-12));
    CHECK(std::fabs(p[0] - 3.0) < 0.05);
}

TEST_CASE("optimizer trains a quadratic through the tape") {
    Tensor x = Tensor::param({1}, {0.0});
    AdamOptimizer opt;
    AdamConfig cfg;
    cfg.lr = 0.1;
    opt.add_group({x}, cfg);
    for (int t = 0; t < 200; ++t) {
        opt.zero_grad();
        Tensor loss = sum(mul(add_scalar(x, -3.0), add_scalar(x, -3.0)));
        backward(loss);
        opt.step();
    }
    CHECK(std::fabs(x.at(0) - 3.0) < 0.05);
}

TEST_CASE("shape mismatch raises") {
    std::vector<double> p{1.0};
    AdamSlot slot;
    CHECK_THROWS(adam_step(p, {1.0, 2.0}, slot, AdamConfig{}, 1));
}
