// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "bonefield/threading.hpp"

namespace bonefield {

namespace {

std::atomic<uint64_t> g_next_id{1};

thread_local int g_no_grad_depth = 0;

bool g_finite_checks = true;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
             shape_str(b.shape()));
    }
}

void check_rank2(const Tensor& a, const char* op) {
    if (a.shape().size() != 2) {
        fail(std::string(op) + ": expected rank-2 tensor, got shape " + shape_str(a.shape()));
    }
}

void check_finite(const std::vector<double>& v, const char* op) {
    if (!g_finite_checks) return;
    for (double x : v) {
        if (!std::isfinite(x)) {
            fail(std::string("non-finite value produced by op '") + op + "'");
        }
    }
}

}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

// Central op factory: validates the result, assigns a tape id, and attaches
// the VJP only when gradients are live.
Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<std::vector<Tensor>(const Tensor&)> vjp) {
    if (shape_numel(shape) != static_cast<int64_t>(value.size())) {
        fail(std::string(name) + ": internal shape/value size mismatch");
    }
    check_finite(value, name);
    auto node = std::make_shared<detail::Node>();
    node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = name;
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->vjp = std::move(vjp);
    }
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
    const int64_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return from_data({}, {v}); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    return make_op("leaf", std::move(shape), std::move(data), {}, nullptr);
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
    Tensor t = from_data(std::move(shape), std::move(data));
    t.set_requires_grad(true);
    return t;
}

int64_t Tensor::rows() const {
    check_rank2(*this, "rows");
    return shape()[0];
}

int64_t Tensor::cols() const {
    check_rank2(*this, "cols");
    return shape()[1];
}

double Tensor::item() const {
    if (numel() != 1) fail("item(): tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(int64_t r, int64_t c) const {
    check_rank2(*this, "at");
    return node_->value[static_cast<size_t>(r * cols() + c)];
}

Tensor& Tensor::set_requires_grad(bool v) {
    if (node_->vjp) fail("set_requires_grad: only valid on leaf tensors");
    node_->requires_grad = v;
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    if (!node_->grad_buf) fail("grad(): no gradient accumulated");
    return *node_->grad_buf;
}

void Tensor::zero_grad() {
    if (!node_->grad_buf) {
        node_->grad_buf = std::make_shared<std::vector<double>>(node_->value.size(), 0.0);
    } else {
        std::fill(node_->grad_buf->begin(), node_->grad_buf->end(), 0.0);
    }
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != node_->value.size()) fail("accumulate_grad: size mismatch");
    if (!node_->grad_buf) {
        node_->grad_buf = std::make_shared<std::vector<double>>(g);
        return;
    }
    auto& buf = *node_->grad_buf;
    for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

Tensor Tensor::reshaped(Shape shape) const { return reshape(*this, std::move(shape)); }

// ---- elementwise helpers ----

namespace {

template <class F>
std::vector<double> map1(const std::vector<double>& a, F f) {
    std::vector<double> out(a.size());
    const int64_t n = static_cast<int64_t>(a.size());
    if (n > 16384) {
        parallel_for(n, [&](int64_t b, int64_t e) {
            for (int64_t i = b; i < e; ++i) out[static_cast<size_t>(i)] = f(a[static_cast<size_t>(i)]);
        });
    } else {
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = f(a[static_cast<size_t>(i)]);
    }
    return out;
}

template <class F>
std::vector<double> map2(const std::vector<double>& a, const std::vector<double>& b, F f) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

}  // namespace

// ---- arithmetic ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    return make_op("add", a.shape(), map2(a.data(), b.data(), [](double x, double y) { return x + y; }),
                   {a, b}, [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    return make_op("sub", a.shape(), map2(a.data(), b.data(), [](double x, double y) { return x - y; }),
                   {a, b}, [](const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    return make_op("mul", a.shape(), map2(a.data(), b.data(), [](double x, double y) { return x * y; }),
                   {a, b},
                   [a, b](const Tensor& g) { return std::vector<Tensor>{mul(g, b), mul(g, a)}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    return make_op("div", a.shape(), map2(a.data(), b.data(), [](double x, double y) { return x / y; }),
                   {a, b}, [a, b](const Tensor& g) {
                       Tensor ga = div(g, b);
                       Tensor gb = neg(div(mul(g, a), mul(b, b)));
                       return std::vector<Tensor>{ga, gb};
                   });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
    return make_op("add_scalar", a.shape(), map1(a.data(), [c](double x) { return x + c; }), {a},
                   [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor mul_scalar(const Tensor& a, double c) {
    return make_op("mul_scalar", a.shape(), map1(a.data(), [c](double x) { return x * c; }), {a},
                   [c](const Tensor& g) { return std::vector<Tensor>{mul_scalar(g, c)}; });
}

// ---- transcendental ----

Tensor exp(const Tensor& a) {
    return make_op("exp", a.shape(), map1(a.data(), [](double x) { return std::exp(x); }), {a},
                   [a](const Tensor& g) { return std::vector<Tensor>{mul(g, exp(a))}; });
}

Tensor log(const Tensor& a) {
    return make_op("log", a.shape(), map1(a.data(), [](double x) { return std::log(x); }), {a},
                   [a](const Tensor& g) { return std::vector<Tensor>{div(g, a)}; });
}

Tensor sqrt(const Tensor& a) {
    return make_op("sqrt", a.shape(), map1(a.data(), [](double x) { return std::sqrt(x); }), {a},
                   [a](const Tensor& g) {
                       return std::vector<Tensor>{div(g, mul_scalar(sqrt(a), 2.0))};
                   });
}

Tensor sin(const Tensor& a) {
    return make_op("sin", a.shape(), map1(a.data(), [](double x) { return std::sin(x); }), {a},
                   [a](const Tensor& g) { return std::vector<Tensor>{mul(g, cos(a))}; });
}

Tensor cos(const Tensor& a) {
    return make_op("cos", a.shape(), map1(a.data(), [](double x) { return std::cos(x); }), {a},
                   [a](const Tensor& g) { return std::vector<Tensor>{neg(mul(g, sin(a)))}; });
}

Tensor abs(const Tensor& a) {
    return make_op("abs", a.shape(), map1(a.data(), [](double x) { return std::fabs(x); }), {a},
                   [a](const Tensor& g) { return std::vector<Tensor>{mul(g, sign_of(a))}; });
}

Tensor softplus(const Tensor& a) {
    auto sp = [](double x) {
        if (x > 30.0) return x;
        if (x < -30.0) return std::exp(x);
        return std::log1p(std::exp(x));
    };
    return make_op("softplus", a.shape(), map1(a.data(), sp), {a},
                   [a](const Tensor& g) { return std::vector<Tensor>{mul(g, sigmoid(a))}; });
}

Tensor sigmoid(const Tensor& a) {
    auto sg = [](double x) {
        if (x >= 0.0) {
            const double e = std::exp(-x);
            return 1.0 / (1.0 + e);
        }
        const double e = std::exp(x);
        return e / (1.0 + e);
    };
    return make_op("sigmoid", a.shape(), map1(a.data(), sg), {a}, [a](const Tensor& g) {
        Tensor s = sigmoid(a);
        return std::vector<Tensor>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
    });
}

Tensor clamp_min(const Tensor& a, double lo) {
    return make_op("clamp_min", a.shape(), map1(a.data(), [lo](double x) { return x < lo ? lo : x; }),
                   {a}, [a, lo](const Tensor& g) {
                       std::vector<double> m(a.data().size());
                       for (size_t i = 0; i < m.size(); ++i) m[i] = a.data()[i] > lo ? 1.0 : 0.0;
                       Tensor mask = Tensor::from_data(a.shape(), std::move(m));
                       return std::vector<Tensor>{mul(g, mask)};
                   });
}

Tensor sign_of(const Tensor& a) {
    return Tensor::from_data(a.shape(), map1(a.data(), [](double x) {
                                 return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                             }));
}

Tensor mask_positive(const Tensor& a) {
    return Tensor::from_data(a.shape(), map1(a.data(), [](double x) { return x > 0.0 ? 1.0 : 0.0; }));
}

Tensor detach(const Tensor& a) { return Tensor::from_data(a.shape(), a.data()); }

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    const int64_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        fail("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
             shape_str(b.shape()));
    }
    std::vector<double> c(static_cast<size_t>(m * n), 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = c.data();
    auto kernel = [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const double* arow = A + i * k;
            double* crow = C + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                const double* brow = B + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    };
    if (m * k * n > 32768) {
        parallel_for(m, kernel);
    } else {
        kernel(0, m);
    }
    return make_op("matmul", {m, n}, std::move(c), {a, b}, [a, b](const Tensor& g) {
        return std::vector<Tensor>{matmul(g, transpose(b)), matmul(transpose(a), g)};
    });
}

Tensor transpose(const Tensor& a) {
    check_rank2(a, "transpose");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(m * n));
    const auto& v = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = v[static_cast<size_t>(i * n + j)];
    return make_op("transpose", {n, m}, std::move(out), {a},
                   [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

// ---- reductions and broadcasts ----

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_op("sum", {}, {s}, {a}, [shape = a.shape()](const Tensor& g) {
        return std::vector<Tensor>{expand_scalar(g, shape)};
    });
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_rows(const Tensor& a) {
    check_rank2(a, "sum_rows");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(m), 0.0);
    const auto& v = a.data();
    for (int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += v[static_cast<size_t>(i * n + j)];
        out[static_cast<size_t>(i)] = s;
    }
    return make_op("sum_rows", {m, 1}, std::move(out), {a}, [n](const Tensor& g) {
        return std::vector<Tensor>{tile_cols(g, n)};
    });
}

Tensor sum_cols(const Tensor& a) {
    check_rank2(a, "sum_cols");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    const auto& v = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j)] += v[static_cast<size_t>(i * n + j)];
    return make_op("sum_cols", {1, n}, std::move(out), {a}, [m](const Tensor& g) {
        return std::vector<Tensor>{tile_rows(g, m)};
    });
}

Tensor expand_scalar(const Tensor& s, Shape shape) {
    if (s.numel() != 1) fail("expand_scalar: input must have one element");
    const int64_t n = shape_numel(shape);
    return make_op("expand_scalar", std::move(shape),
                   std::vector<double>(static_cast<size_t>(n), s.data()[0]), {s},
                   [orig = s.shape()](const Tensor& g) {
                       return std::vector<Tensor>{reshape(sum(g), orig)};
                   });
}

Tensor tile_rows(const Tensor& v, int64_t m) {
    check_rank2(v, "tile_rows");
    if (v.shape()[0] != 1) fail("tile_rows: expected [1,n], got " + shape_str(v.shape()));
    const int64_t n = v.shape()[1];
    std::vector<double> out(static_cast<size_t>(m * n));
    for (int64_t i = 0; i < m; ++i)
        std::copy(v.data().begin(), v.data().end(), out.begin() + i * n);
    return make_op("tile_rows", {m, n}, std::move(out), {v},
                   [](const Tensor& g) { return std::vector<Tensor>{sum_cols(g)}; });
}

Tensor tile_cols(const Tensor& v, int64_t n) {
    check_rank2(v, "tile_cols");
    if (v.shape()[1] != 1) fail("tile_cols: expected [m,1], got " + shape_str(v.shape()));
    const int64_t m = v.shape()[0];
    std::vector<double> out(static_cast<size_t>(m * n));
    for (int64_t i = 0; i < m; ++i)
        std::fill(out.begin() + i * n, out.begin() + (i + 1) * n, v.data()[static_cast<size_t>(i)]);
    return make_op("tile_cols", {m, n}, std::move(out), {v},
                   [](const Tensor& g) { return std::vector<Tensor>{sum_rows(g)}; });
}

namespace {

void check_rowvec(const Tensor& a, const Tensor& v, const char* op) {
    check_rank2(a, op);
    check_rank2(v, op);
    if (v.shape()[0] != 1 || v.shape()[1] != a.shape()[1]) {
        fail(std::string(op) + ": expected [1," + std::to_string(a.shape()[1]) + "], got " +
             shape_str(v.shape()));
    }
}

void check_colvec(const Tensor& a, const Tensor& v, const char* op) {
    check_rank2(a, op);
    check_rank2(v, op);
    if (v.shape()[1] != 1 || v.shape()[0] != a.shape()[0]) {
        fail(std::string(op) + ": expected [" + std::to_string(a.shape()[0]) + ",1], got " +
             shape_str(v.shape()));
    }
}

}  // namespace

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    check_rowvec(a, v, "add_rowvec");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(a.data());
    const auto& w = v.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] += w[static_cast<size_t>(j)];
    return make_op("add_rowvec", {m, n}, std::move(out), {a, v}, [](const Tensor& g) {
        return std::vector<Tensor>{g, sum_cols(g)};
    });
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
    check_rowvec(a, v, "mul_rowvec");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(a.data());
    const auto& w = v.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] *= w[static_cast<size_t>(j)];
    return make_op("mul_rowvec", {m, n}, std::move(out), {a, v}, [a, v](const Tensor& g) {
        return std::vector<Tensor>{mul_rowvec(g, v), sum_cols(mul(g, a))};
    });
}

Tensor add_colvec(const Tensor& a, const Tensor& v) {
    check_colvec(a, v, "add_colvec");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(a.data());
    const auto& w = v.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] += w[static_cast<size_t>(i)];
    return make_op("add_colvec", {m, n}, std::move(out), {a, v}, [](const Tensor& g) {
        return std::vector<Tensor>{g, sum_rows(g)};
    });
}

Tensor mul_colvec(const Tensor& a, const Tensor& v) {
    check_colvec(a, v, "mul_colvec");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(a.data());
    const auto& w = v.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] *= w[static_cast<size_t>(i)];
    return make_op("mul_colvec", {m, n}, std::move(out), {a, v}, [a, v](const Tensor& g) {
        return std::vector<Tensor>{mul_colvec(g, v), sum_rows(mul(g, a))};
    });
}

Tensor div_colvec(const Tensor& a, const Tensor& v) {
    check_colvec(a, v, "div_colvec");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(a.data());
    const auto& w = v.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] /= w[static_cast<size_t>(i)];
    return make_op("div_colvec", {m, n}, std::move(out), {a, v}, [a, v](const Tensor& g) {
        Tensor y = div_colvec(a, v);
        Tensor ga = div_colvec(g, v);
        Tensor gv = neg(div(sum_rows(mul(g, y)), v));
        return std::vector<Tensor>{ga, gv};
    });
}

// ---- structure ----

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        fail("reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    return make_op("reshape", std::move(shape), a.data(), {a},
                   [orig = a.shape()](const Tensor& g) {
                       return std::vector<Tensor>{reshape(g, orig)};
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_cols: no inputs");
    const int64_t m = parts[0].shape()[0];
    int64_t total = 0;
    for (const auto& p : parts) {
        check_rank2(p, "concat_cols");
        if (p.shape()[0] != m) fail("concat_cols: row count mismatch");
        total += p.shape()[1];
    }
    std::vector<double> out(static_cast<size_t>(m * total));
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t w = p.shape()[1];
        const auto& v = p.data();
        for (int64_t i = 0; i < m; ++i)
            std::copy(v.begin() + i * w, v.begin() + (i + 1) * w, out.begin() + i * total + off);
        off += w;
    }
    std::vector<int64_t> widths;
    for (const auto& p : parts) widths.push_back(p.shape()[1]);
    return make_op("concat_cols", {m, total}, std::move(out), parts, [widths](const Tensor& g) {
        std::vector<Tensor> gs;
        int64_t o = 0;
        for (int64_t w : widths) {
            gs.push_back(slice_cols(g, o, o + w));
            o += w;
        }
        return gs;
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_rows: no inputs");
    const int64_t n = parts[0].shape()[1];
    int64_t total = 0;
    for (const auto& p : parts) {
        check_rank2(p, "concat_rows");
        if (p.shape()[1] != n) fail("concat_rows: column count mismatch");
        total += p.shape()[0];
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(n * total));
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<int64_t> heights;
    for (const auto& p : parts) heights.push_back(p.shape()[0]);
    return make_op("concat_rows", {total, n}, std::move(out), parts, [heights](const Tensor& g) {
        std::vector<Tensor> gs;
        int64_t o = 0;
        for (int64_t h : heights) {
            gs.push_back(slice_rows(g, o, o + h));
            o += h;
        }
        return gs;
    });
}

namespace {

// Zero-padded inverses of the slice ops; only reachable through VJPs.
Tensor pad_cols(const Tensor& g, int64_t c0, int64_t total_cols) {
    const int64_t m = g.shape()[0], w = g.shape()[1];
    std::vector<double> out(static_cast<size_t>(m * total_cols), 0.0);
    const auto& v = g.data();
    for (int64_t i = 0; i < m; ++i)
        std::copy(v.begin() + i * w, v.begin() + (i + 1) * w, out.begin() + i * total_cols + c0);
    return make_op("pad_cols", {m, total_cols}, std::move(out), {g}, [c0, w](const Tensor& gg) {
        return std::vector<Tensor>{slice_cols(gg, c0, c0 + w)};
    });
}

Tensor pad_rows(const Tensor& g, int64_t r0, int64_t total_rows) {
    const int64_t h = g.shape()[0], n = g.shape()[1];
    std::vector<double> out(static_cast<size_t>(total_rows * n), 0.0);
    std::copy(g.data().begin(), g.data().end(), out.begin() + r0 * n);
    return make_op("pad_rows", {total_rows, n}, std::move(out), {g}, [r0, h](const Tensor& gg) {
        return std::vector<Tensor>{slice_rows(gg, r0, r0 + h)};
    });
}

}  // namespace

Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
    check_rank2(a, "slice_cols");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    if (c0 < 0 || c1 > n || c0 >= c1) fail("slice_cols: bad range");
    const int64_t w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(m * w));
    const auto& v = a.data();
    for (int64_t i = 0; i < m; ++i)
        std::copy(v.begin() + i * n + c0, v.begin() + i * n + c1, out.begin() + i * w);
    return make_op("slice_cols", {m, w}, std::move(out), {a}, [c0, n](const Tensor& g) {
        return std::vector<Tensor>{pad_cols(g, c0, n)};
    });
}

Tensor slice_rows(const Tensor& a, int64_t r0, int64_t r1) {
    check_rank2(a, "slice_rows");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    if (r0 < 0 || r1 > m || r0 >= r1) fail("slice_rows: bad range");
    std::vector<double> out(a.data().begin() + r0 * n, a.data().begin() + r1 * n);
    return make_op("slice_rows", {r1 - r0, n}, std::move(out), {a}, [r0, m](const Tensor& g) {
        return std::vector<Tensor>{pad_rows(g, r0, m)};
    });
}

// ---- row-wise helpers ----

Tensor row_max(const Tensor& a) {
    check_rank2(a, "row_max");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(m));
    const auto& v = a.data();
    for (int64_t i = 0; i < m; ++i) {
        double best = v[static_cast<size_t>(i * n)];
        for (int64_t j = 1; j < n; ++j) best = std::max(best, v[static_cast<size_t>(i * n + j)]);
        out[static_cast<size_t>(i)] = best;
    }
    return Tensor::from_data({m, 1}, std::move(out));
}

Tensor softmax_rows(const Tensor& a) {
    Tensor shift = neg(row_max(a));  // constant, keeps exp in range
    Tensor e = exp(add_colvec(a, shift));
    return div_colvec(e, sum_rows(e));
}

Tensor cumsum_rows_exclusive(const Tensor& a) {
    check_rank2(a, "cumsum_rows_exclusive");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(m * n));
    const auto& v = a.data();
    for (int64_t i = 0; i < m; ++i) {
        double run = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            out[static_cast<size_t>(i * n + j)] = run;
            run += v[static_cast<size_t>(i * n + j)];
        }
    }
    return make_op("cumsum_rows_exclusive", {m, n}, std::move(out), {a}, [](const Tensor& g) {
        return std::vector<Tensor>{reverse_rows(cumsum_rows_exclusive(reverse_rows(g)))};
    });
}

Tensor reverse_rows(const Tensor& a) {
    check_rank2(a, "reverse_rows");
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(m * n));
    const auto& v = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            out[static_cast<size_t>(i * n + j)] = v[static_cast<size_t>(i * n + (n - 1 - j))];
    return make_op("reverse_rows", {m, n}, std::move(out), {a},
                   [](const Tensor& g) { return std::vector<Tensor>{reverse_rows(g)}; });
}

Tensor l2_norm(const Tensor& a) { return sqrt(sum(mul(a, a))); }

// ---- autodiff drivers ----

namespace {

void run_reverse(const Tensor& root, bool create_graph,
                 std::unordered_map<detail::Node*, Tensor>& gmap,
                 std::vector<detail::Node*>& order) {
    if (root.numel() != 1) fail("backward: root must be scalar");
    if (!root.node()->requires_grad) return;

    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{root.node()};
    seen.insert(root.node());
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p.node()->requires_grad && seen.insert(p.node()).second) stack.push_back(p.node());
        }
    }
    // Creation ids give a topological order of the tape.
    std::sort(order.begin(), order.end(),
              [](detail::Node* a, detail::Node* b) { return a->id > b->id; });

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    gmap.emplace(root.node(), Tensor::full(root.shape(), 1.0));
    for (detail::Node* n : order) {
        auto it = gmap.find(n);
        if (it == gmap.end() || !n->vjp) continue;
        const Tensor g = it->second;
        std::vector<Tensor> pgs = n->vjp(g);
        if (pgs.size() != n->parents.size()) fail("internal: vjp arity mismatch in op " + std::string(n->op));
        for (size_t i = 0; i < pgs.size(); ++i) {
            detail::Node* p = n->parents[i].node();
            if (!p->requires_grad || !pgs[i].defined()) continue;
            if (pgs[i].shape() != p->shape) {
                fail("internal: vjp shape mismatch in op " + std::string(n->op) + ": " +
                     shape_str(pgs[i].shape()) + " vs " + shape_str(p->shape));
            }
            auto g_it = gmap.find(p);
            if (g_it == gmap.end()) {
                gmap.emplace(p, pgs[i]);
            } else {
                g_it->second = add(g_it->second, pgs[i]);
            }
        }
    }
}

}  // namespace

void backward(const Tensor& loss) {
    std::unordered_map<detail::Node*, Tensor> gmap;
    std::vector<detail::Node*> order;
    run_reverse(loss, /*create_graph=*/false, gmap, order);
    for (detail::Node* n : order) {
        if (n->vjp || !n->requires_grad) continue;
        auto it = gmap.find(n);
        if (it == gmap.end()) continue;
        if (!n->grad_buf) n->grad_buf = std::make_shared<std::vector<double>>(n->value.size(), 0.0);
        auto& buf = *n->grad_buf;
        const auto& g = it->second.data();
        for (size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
    }
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt, bool create_graph) {
    std::unordered_map<detail::Node*, Tensor> gmap;
    std::vector<detail::Node*> order;
    run_reverse(output, create_graph, gmap, order);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto it = gmap.find(w.node());
        out.push_back(it != gmap.end() ? it->second : Tensor::zeros(w.shape()));
    }
    return out;
}

}  // namespace bonefield
