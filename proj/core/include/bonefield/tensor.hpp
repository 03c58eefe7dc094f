// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 arrays with reverse-mode automatic differentiation.
//
// Every operation records a node in an implicit tape (the DAG of parent
// links). Backward passes replay the tape in decreasing creation order,
// which is always a valid topological order. All VJPs are themselves
// expressed with tensor ops, so a backward pass run with create_graph=true
// produces gradients that are further differentiable (double backward);
// the Eikonal term relies on this.
//
// Determinism: kernels use fixed summation order and write each output
// element from exactly one thread, so results are bitwise reproducible for
// any thread count.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace bonefield {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

namespace detail {

struct Node {
    uint64_t id = 0;
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Tensor> parents;
    // Returns one gradient per parent, given the gradient w.r.t. this node.
    std::function<std::vector<Tensor>(const Tensor&)> vjp;
    // Accumulator used by optimizers; filled by backward().
    std::shared_ptr<std::vector<double>> grad_buf;
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v);
    static Tensor from_data(Shape shape, std::vector<double> data);
    // Leaf with an optimizer gradient slot.
    static Tensor param(Shape shape, std::vector<double> data);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
    int64_t rows() const;
    int64_t cols() const;

    const std::vector<double>& data() const { return node_->value; }
    // In-place mutation is for optimizers and loaders only; it must never be
    // applied to a tensor that is part of a live graph.
    std::vector<double>& mutable_data() { return node_->value; }

    double item() const;
    double at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }
    double at(int64_t r, int64_t c) const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v);

    bool has_grad() const { return node_->grad_buf != nullptr; }
    const std::vector<double>& grad() const;
    void zero_grad();
    void accumulate_grad(const std::vector<double>& g);

    detail::Node* node() const { return node_.get(); }

    Tensor reshaped(Shape shape) const;

private:
    friend Tensor make_op(const char* name, Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<std::vector<Tensor>(const Tensor&)> vjp);
    std::shared_ptr<detail::Node> node_;
};

// Gradient recording is on unless a guard is active.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Throwing finiteness validation of op outputs (always on by default).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

// ---- elementwise (shapes must match exactly) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// Constants (never differentiable).
Tensor sign_of(const Tensor& a);          // -1/0/+1 per element
Tensor mask_positive(const Tensor& a);    // 1 where a > 0 else 0
Tensor detach(const Tensor& a);

// ---- linear algebra (rank-2) ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- reductions / broadcasts ----
Tensor sum(const Tensor& a);                    // -> scalar
Tensor mean(const Tensor& a);                   // -> scalar
Tensor sum_rows(const Tensor& a);               // [m,n] -> [m,1]
Tensor sum_cols(const Tensor& a);               // [m,n] -> [1,n]
Tensor expand_scalar(const Tensor& s, Shape shape);
Tensor tile_rows(const Tensor& v, int64_t m);   // [1,n] -> [m,n]
Tensor tile_cols(const Tensor& v, int64_t n);   // [m,1] -> [m,n]
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // [m,n] + [1,n]
Tensor mul_rowvec(const Tensor& a, const Tensor& v);
Tensor add_colvec(const Tensor& a, const Tensor& v);  // [m,n] + [m,1]
Tensor mul_colvec(const Tensor& a, const Tensor& v);
Tensor div_colvec(const Tensor& a, const Tensor& v);

// ---- structure ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);
Tensor slice_rows(const Tensor& a, int64_t r0, int64_t r1);

// ---- row-wise helpers ----
Tensor softmax_rows(const Tensor& a);             // stabilized, differentiable
Tensor row_max(const Tensor& a);                  // [m,1] constant
Tensor cumsum_rows_exclusive(const Tensor& a);    // y[i,j] = sum_{k<j} a[i,k]
Tensor reverse_rows(const Tensor& a);             // flips each row

// L2 norm of all elements, sqrt(sum(a*a)); exact 0 for a zero tensor.
Tensor l2_norm(const Tensor& a);

// ---- autodiff drivers ----
// Accumulates d(loss)/d(leaf) into every reachable requires-grad leaf.
void backward(const Tensor& loss);
// Functional gradients; with create_graph=true the returned tensors are
// part of the tape and can be differentiated again.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         bool create_graph);

// ---- operators ----
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul_scalar(a, 1.0 / c); }
inline Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator-(double c, const Tensor& a) { return add_scalar(neg(a), c); }

}  // namespace bonefield
