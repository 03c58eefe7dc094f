// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "bonefield/tensor.hpp"
#include "testutil.hpp"

using namespace bonefield;
using bftest::finite_difference;
using bftest::max_grad_rel_err;
using bftest::random_tensor;

TEST_CASE("softmax of equal logits is uniform") {
    Tensor w = softmax_rows(Tensor::from_data({1, 2}, {0.0, 0.0}));
    CHECK(w.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.at(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("matmul by identity returns the vector") {
    Tensor id = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor v = Tensor::from_data({3, 1}, {0.25, -4.0, 7.5});
    Tensor out = matmul(id, v);
    for (int i = 0; i < 3; ++i) CHECK(out.at(i) == v.at(i));
}

TEST_CASE("exp(0) = 1") { CHECK(exp(Tensor::scalar(0.0)).item() == 1.0); }

TEST_CASE("shape mismatch raises") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    CHECK_THROWS(add(a, b));
    CHECK_THROWS(matmul(a, a));
}

TEST_CASE("non-finite results are an error state") {
    Tensor z = Tensor::scalar(0.0);
    CHECK_THROWS(div(Tensor::scalar(1.0), z));
    CHECK_THROWS(log(Tensor::scalar(-1.0)));
}

TEST_CASE("backward: sum of squares") {
    Tensor x = Tensor::param({2}, {1.0, 2.0});
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward: constant loss gives zero gradients") {
    Tensor x = Tensor::param({3}, {1.0, -1.0, 0.5});
    Tensor loss = sum(mul(detach(x), detach(x)));
    Tensor probe = add(loss, mul_scalar(sum(x), 0.0));
    x.zero_grad();
    backward(probe);
    for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward requires a scalar") {
    Tensor x = Tensor::param({2}, {1.0, 2.0});
    CHECK_THROWS(backward(mul(x, x)));
}

// Gradient of the norm has unit length, and the second-order path through
// it matches finite differences.
TEST_CASE("input-gradient of the L2 norm") {
    Tensor x = Tensor::param({1, 2}, {0.6, 0.8});
    Tensor n = l2_norm(x);
    Tensor g = grad(n, {x}, /*create_graph=*/true)[0];
    Tensor gnorm = l2_norm(g);
    CHECK(gnorm.item() == doctest::Approx(1.0).epsilon(1e-9));

    // d/dx of |grad norm| via the tape vs central differences.
    x.zero_grad();
    backward(gnorm);
    auto fd = finite_difference(
        [](const std::vector<double>& v) {
            Tensor xx = Tensor::param({1, 2}, v);
            Tensor nn = l2_norm(xx);
            Tensor gg = grad(nn, {xx}, true)[0];
            return l2_norm(gg).item();
        },
        {0.6, 0.8});
    CHECK(max_grad_rel_err(x.grad(), fd, 1e-3) < 1e-3);
}

namespace {

// Differentiable pipeline touching most primitive ops.
Tensor pipeline(const Tensor& x) {
    Tensor a = softplus(x);
    Tensor b = sigmoid(mul_scalar(x, 0.5));
    Tensor c = mul(sin(x), cos(a));
    Tensor d = concat_cols({a, b, c});
    Tensor e = softmax_rows(d);
    Tensor f = cumsum_rows_exclusive(mul(e, e));
    Tensor g = reverse_rows(f);
    Tensor h = exp(mul_scalar(g, 0.1));
    return mean(mul(h, h));
}

}  // namespace

TEST_CASE("every differentiable op matches central finite differences") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> vals(8);
        for (auto& v : vals) v = rng.uniform(-2.0, 2.0);
        Tensor x = Tensor::param({2, 4}, vals);
        backward(pipeline(x));
        auto fd = finite_difference(
            [](const std::vector<double>& v) {
                return pipeline(Tensor::from_data({2, 4}, v)).item();
            },
            vals);
        CHECK(max_grad_rel_err(x.grad(), fd, 1e-4) < 1e-3);
    }
}

TEST_CASE("matmul and broadcast ops match finite differences") {
    Rng rng(11);
    std::vector<double> a_v(6), b_v(8), bias_v(4);
    for (auto& v : a_v) v = rng.uniform(-2, 2);
    for (auto& v : b_v) v = rng.uniform(-2, 2);
    for (auto& v : bias_v) v = rng.uniform(-2, 2);

    auto f = [&](const std::vector<double>& av, const std::vector<double>& bv,
                 const std::vector<double>& cv) {
        Tensor a = Tensor::from_data({3, 2}, av);
        Tensor b = Tensor::from_data({2, 4}, bv);
        Tensor c = Tensor::from_data({1, 4}, cv);
        Tensor y = add_rowvec(matmul(a, b), c);
        Tensor z = mul_colvec(y, sum_rows(sigmoid(y)));
        return mean(abs(z)).item();
    };

    Tensor a = Tensor::param({3, 2}, a_v);
    Tensor b = Tensor::param({2, 4}, b_v);
    Tensor c = Tensor::param({1, 4}, bias_v);
    backward(mean(abs(mul_colvec(add_rowvec(matmul(a, b), c),
                                 sum_rows(sigmoid(add_rowvec(matmul(a, b), c)))))));
    auto fd_a = finite_difference([&](const std::vector<double>& v) { return f(v, b_v, bias_v); }, a_v);
    auto fd_b = finite_difference([&](const std::vector<double>& v) { return f(a_v, v, bias_v); }, b_v);
    auto fd_c = finite_difference([&](const std::vector<double>& v) { return f(a_v, b_v, v); }, bias_v);
    CHECK(max_grad_rel_err(a.grad(), fd_a, 1e-4) < 1e-3);
    CHECK(max_grad_rel_err(b.grad(), fd_b, 1e-4) < 1e-3);
    CHECK(max_grad_rel_err(c.grad(), fd_c, 1e-4) < 1e-3);
}

TEST_CASE("second-order path on a two-layer network") {
    // f(theta) = || d/dx scalar_net(x) ||^2; d f / d theta vs FD.
    Rng rng(3);
    const int hidden = 5;
    std::vector<double> w1(3 * hidden), b1(hidden), w2(hidden);
    for (auto& v : w1) v = rng.uniform(-1, 1);
    for (auto& v : b1) v = rng.uniform(-0.5, 0.5);
    for (auto& v : w2) v = rng.uniform(-1, 1);
    const std::vector<double> x0{0.3, -0.2, 0.7};

    auto net_grad_sq = [&](const std::vector<double>& w1v, const std::vector<double>& b1v,
                           const std::vector<double>& w2v) {
        Tensor x = Tensor::param({1, 3}, x0);
        Tensor w1t = Tensor::from_data({3, hidden}, w1v);
        Tensor b1t = Tensor::from_data({1, hidden}, b1v);
        Tensor w2t = Tensor::from_data({hidden, 1}, w2v);
        Tensor y = matmul(softplus(add_rowvec(matmul(x, w1t), b1t)), w2t);
        Tensor g = grad(sum(y), {x}, true)[0];
        return sum(mul(g, g));
    };

    Tensor w1t = Tensor::param({3, hidden}, w1);
    Tensor b1t = Tensor::param({1, hidden}, b1);
    Tensor w2t = Tensor::param({hidden, 1}, w2);
    {
        Tensor x = Tensor::param({1, 3}, x0);
        Tensor y = matmul(softplus(add_rowvec(matmul(x, w1t), b1t)), w2t);
        Tensor g = grad(sum(y), {x}, true)[0];
        backward(sum(mul(g, g)));
    }
    auto fd_w1 = finite_difference(
        [&](const std::vector<double>& v) { return net_grad_sq(v, b1, w2).item(); }, w1);
    auto fd_b1 = finite_difference(
        [&](const std::vector<double>& v) { return net_grad_sq(w1, v, w2).item(); }, b1);
    auto fd_w2 = finite_difference(
        [&](const std::vector<double>& v) { return net_grad_sq(w1, b1, v).item(); }, w2);
    CHECK(max_grad_rel_err(w1t.grad(), fd_w1, 1e-4) < 1e-2);
    CHECK(max_grad_rel_err(b1t.grad(), fd_b1, 1e-4) < 1e-2);
    CHECK(max_grad_rel_err(w2t.grad(), fd_w2, 1e-4) < 1e-2);
}

TEST_CASE("identical seeds give bit-identical results") {
    auto run = [] {
        Rng rng(42);
        Tensor x = random_tensor({4, 4}, rng);
        Tensor y = pipeline(x);
        return y.item();
    };
    const double a = run();
    const double b = run();
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

TEST_CASE("cumsum exclusive and reverse") {
    Tensor x = Tensor::from_data({1, 4}, {1, 2, 3, 4});
    Tensor c = cumsum_rows_exclusive(x);
    CHECK(c.at(0) == 0.0);
    CHECK(c.at(1) == 1.0);
    CHECK(c.at(2) == 3.0);
    CHECK(c.at(3) == 6.0);
    Tensor r = reverse_rows(x);
    CHECK(r.at(0) == 4.0);
    CHECK(r.at(3) == 1.0);
}

TEST_CASE("slices and concats invert each other") {
    Rng rng(5);
    Tensor x = random_tensor({3, 6}, rng);
    Tensor left = slice_cols(x, 0, 2);
    Tensor right = slice_cols(x, 2, 6);
    Tensor back = concat_cols({left, right});
    CHECK(back.data() == x.data());

    Tensor top = slice_rows(x, 0, 1);
    Tensor bottom = slice_rows(x, 1, 3);
    CHECK(concat_rows({top, bottom}).data() == x.data());
}
