#pragma once

// Dense tensors with reverse-mode autodiff. Tensors are cheap handles onto a
// shared node; recording happens implicitly whenever an input requires
// gradients and grads are globally enabled. backward() topo-sorts the DAG
// from a scalar root, accumulates into leaf .grad buffers, then clears the
// graph so a node can be differentiated through at most once.
//
// Precision is a template parameter: float for training runs, double for the
// gradient-check suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "htn/common.hpp"
#include "htn/kernels.hpp"

namespace htn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

// Grad recording is a process-global switch; evaluation wraps forward passes
// in a NoGradGuard. Single-writer: never toggled inside a parallel region.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Forward-op outputs are scanned for NaN/Inf unless disabled.
bool finite_checks_enabled();
void set_finite_checks(bool on);

// Boolean mask for masked_fill; not differentiable, not a tensor.
struct Mask {
    Shape shape;
    std::vector<std::uint8_t> v;

    static Mask zeros(const Shape& s) {
        Mask m;
        m.shape = s;
        m.v.assign(static_cast<std::size_t>(shape_numel(s)), 0);
        return m;
    }
    std::uint8_t& at(std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
};

template <class S>
struct Node {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }
};

template <class S>
class TensorT {
  public:
    using Scalar = S;

    TensorT() : n_(nullptr) {}
    explicit TensorT(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

    static TensorT raw(const Shape& shape) {
        auto n = std::make_shared<Node<S>>();
        n->shape = shape;
        n->data.resize(static_cast<std::size_t>(shape_numel(shape)));
        return TensorT(std::move(n));
    }
    static TensorT zeros(const Shape& shape) {
        auto t = raw(shape);
        std::fill(t.n_->data.begin(), t.n_->data.end(), S(0));
        return t;
    }
    static TensorT full(const Shape& shape, S v) {
        auto t = raw(shape);
        std::fill(t.n_->data.begin(), t.n_->data.end(), v);
        return t;
    }
    static TensorT from_data(const Shape& shape, std::vector<S> values) {
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
            throw DimensionError("from_data: " + std::to_string(values.size()) +
                                 " values for shape " + shape_str(shape));
        auto n = std::make_shared<Node<S>>();
        n->shape = shape;
        n->data = std::move(values);
        return TensorT(std::move(n));
    }
    static TensorT scalar(S v) { return from_data({1}, {v}); }

    bool valid() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    std::int64_t numel() const { return n_->numel(); }

    S* data() { return n_->data.data(); }
    const S* data() const { return n_->data.data(); }
    std::vector<S>& vec() { return n_->data; }
    const std::vector<S>& vec() const { return n_->data; }

    S item() const {
        if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
        return n_->data[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    TensorT& set_requires_grad(bool on = true) {
        n_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return !n_->grad.empty(); }
    const std::vector<S>& grad() const {
        if (n_->grad.empty()) throw ContractError("grad(): no gradient recorded; run backward() first");
        return n_->grad;
    }
    void zero_grad() {
        if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), S(0));
    }
    void drop_grad() { n_->grad.clear(); }

    std::shared_ptr<Node<S>> node() const { return n_; }

    // Reverse pass from a scalar root. Accumulation over fan-out is additive;
    // the graph is cleared afterwards (parents and closures released).
    void backward() const {
        if (numel() != 1) throw ContractError("backward(): root must be scalar, got shape " + shape_str(shape()));
        if (!n_->requires_grad)
            throw ContractError("backward(): root does not require grad (no graph recorded)");

        std::vector<Node<S>*> order;
        std::unordered_set<Node<S>*> seen;
        std::vector<std::pair<Node<S>*, std::size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node<S>* p = node->parents[next].get();
                ++next;
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        // order is a post-order: parents precede children, so iterate from the
        // back (root first).
        n_->ensure_grad();
        n_->grad[0] = S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<S>* node = *it;
            if (node->backward && !node->grad.empty()) node->backward(*node);
        }
        for (Node<S>* node : order) {
            const bool leaf = node->parents.empty() && !node->backward;
            node->parents.clear();
            node->backward = nullptr;
            if (!leaf) node->grad.clear();
        }
    }

  private:
    std::shared_ptr<Node<S>> n_;
};

namespace detail {

template <class S>
inline void check_finite(const TensorT<S>& t, const char* op) {
    if (!finite_checks_enabled()) return;
    const S* d = t.data();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(d[i])))
            throw NumericError(std::string("non-finite value produced by op '") + op +
                               "' at flat index " + std::to_string(i));
    }
}

template <class S>
inline bool track(std::initializer_list<const TensorT<S>*> inputs) {
    if (!grad_enabled()) return false;
    for (const auto* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

template <class S>
inline void attach(TensorT<S>& out, const char* op,
                   std::initializer_list<TensorT<S>> parents,
                   std::function<void(Node<S>&)> bw) {
    out.node()->op = op;
    out.node()->requires_grad = true;
    for (const auto& p : parents) out.node()->parents.push_back(p.node());
    out.node()->backward = std::move(bw);
}

template <class S>
inline void accumulate(Node<S>& parent, const S* g, std::int64_t len) {
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    S* dst = parent.grad.data();
    for (std::int64_t i = 0; i < len; ++i) dst[i] += g[i];
}

// (outer, n, inner) factorization of `shape` around `axis`.
struct AxisSplit {
    std::int64_t outer, n, inner;
};
inline AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
    const int r = static_cast<int>(shape.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw DimensionError(std::string(op) + ": axis out of range for shape " + shape_str(shape));
    AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < r; ++i) s.inner *= shape[static_cast<std::size_t>(i)];
    return s;
}

// Broadcast rule for binary ops: shapes equal, or rhs shape is a suffix of
// lhs shape (bias vectors, shared masks). Returns the rhs period.
template <class S>
inline std::int64_t binary_period(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() > sa.size())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    const std::size_t off = sa.size() - sb.size();
    for (std::size_t i = 0; i < sb.size(); ++i) {
        if (sa[off + i] != sb[i])
            throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(sa) + " vs " +
                                 shape_str(sb));
    }
    return shape_numel(sb);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// op catalog
// ---------------------------------------------------------------------------

// add / sub / mul share the suffix-broadcast rule on the rhs.
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    const std::int64_t period = detail::binary_period(a, b, "add");
    auto out = TensorT<S>::raw(a.shape());
    kern::map2(a.data(), b.data(), out.data(), a.numel(), period, [](S x, S y) { return x + y; });
    detail::check_finite(out, "add");
    if (detail::track<S>({&a, &b})) {
        detail::attach<S>(out, "add", {a, b}, [period](Node<S>& self) {
            detail::accumulate(*self.parents[0], self.grad.data(), self.numel());
            if (self.parents[1]->requires_grad) {
                auto& p = *self.parents[1];
                p.ensure_grad();
                for (std::int64_t i = 0; i < self.numel(); ++i) p.grad[i % period] += self.grad[i];
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    const std::int64_t period = detail::binary_period(a, b, "sub");
    auto out = TensorT<S>::raw(a.shape());
    kern::map2(a.data(), b.data(), out.data(), a.numel(), period, [](S x, S y) { return x - y; });
    detail::check_finite(out, "sub");
    if (detail::track<S>({&a, &b})) {
        detail::attach<S>(out, "sub", {a, b}, [period](Node<S>& self) {
            detail::accumulate(*self.parents[0], self.grad.data(), self.numel());
            if (self.parents[1]->requires_grad) {
                auto& p = *self.parents[1];
                p.ensure_grad();
                for (std::int64_t i = 0; i < self.numel(); ++i) p.grad[i % period] -= self.grad[i];
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    const std::int64_t period = detail::binary_period(a, b, "mul");
    auto out = TensorT<S>::raw(a.shape());
    kern::map2(a.data(), b.data(), out.data(), a.numel(), period, [](S x, S y) { return x * y; });
    detail::check_finite(out, "mul");
    if (detail::track<S>({&a, &b})) {
        detail::attach<S>(out, "mul", {a, b}, [period](Node<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::int64_t i = 0; i < self.numel(); ++i)
                    pa.grad[i] += self.grad[i] * pb.data[i % period];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::int64_t i = 0; i < self.numel(); ++i)
                    pb.grad[i % period] += self.grad[i] * pa.data[i];
            }
        });
    }
    return out;
}

// affine(x, a, b) = a*x + b elementwise; scale(x, c) = affine(x, c, 0).
template <class S>
TensorT<S> affine(const TensorT<S>& x, S a, S b) {
    auto out = TensorT<S>::raw(x.shape());
    kern::map1(x.data(), out.data(), x.numel(), [a, b](S v) { return a * v + b; });
    detail::check_finite(out, "affine");
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "affine", {x}, [a](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::int64_t i = 0; i < self.numel(); ++i) p.grad[i] += a * self.grad[i];
        });
    }
    return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& x, S c) {
    return affine(x, c, S(0));
}

#define HTN_UNARY_OP(NAME, FWD, BWD_EXPR)                                                      \
    template <class S>                                                                         \
    TensorT<S> NAME(const TensorT<S>& x) {                                                     \
        auto out = TensorT<S>::raw(x.shape());                                                 \
        kern::map1(x.data(), out.data(), x.numel(), [](S v) { return FWD; });                  \
        detail::check_finite(out, #NAME);                                                      \
        if (detail::track<S>({&x})) {                                                          \
            detail::attach<S>(out, #NAME, {x}, [](Node<S>& self) {                             \
                auto& p = *self.parents[0];                                                    \
                if (!p.requires_grad) return;                                                  \
                p.ensure_grad();                                                               \
                for (std::int64_t i = 0; i < self.numel(); ++i) {                              \
                    const S xv = p.data[i];                                                    \
                    const S yv = self.data[i];                                                 \
                    (void)xv;                                                                  \
                    (void)yv;                                                                  \
                    p.grad[i] += self.grad[i] * (BWD_EXPR);                                    \
                }                                                                              \
            });                                                                                \
        }                                                                                      \
        return out;                                                                            \
    }

HTN_UNARY_OP(sigmoid, S(1) / (S(1) + std::exp(-v)), yv*(S(1) - yv))
HTN_UNARY_OP(tanh, std::tanh(v), S(1) - yv * yv)
HTN_UNARY_OP(relu, v > S(0) ? v : S(0), xv > S(0) ? S(1) : S(0))
HTN_UNARY_OP(square, v* v, S(2) * xv)
HTN_UNARY_OP(log, std::log(v), S(1) / xv)

#undef HTN_UNARY_OP

// Gradient is passed through strictly inside (lo, hi) and cut at the rails;
// pair with the [1e-7, 1-1e-7] probability guard before log.
template <class S>
TensorT<S> clamp(const TensorT<S>& x, S lo, S hi) {
    auto out = TensorT<S>::raw(x.shape());
    kern::map1(x.data(), out.data(), x.numel(),
               [lo, hi](S v) { return v < lo ? lo : (v > hi ? hi : v); });
    detail::check_finite(out, "clamp");
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "clamp", {x}, [lo, hi](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::int64_t i = 0; i < self.numel(); ++i)
                if (p.data[i] > lo && p.data[i] < hi) p.grad[i] += self.grad[i];
        });
    }
    return out;
}

// matmul over the last two axes. Supported: 2D*2D, 3D*2D (shared rhs),
// 3D*3D (batched). Transpose flags apply to the last two axes.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b, bool ta = false, bool tb = false) {
    const int ra = a.rank(), rb = b.rank();
    if ((ra != 2 && ra != 3) || (rb != 2 && rb != 3) || rb > ra)
        throw DimensionError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const int am = ta ? a.dim(ra - 1) : a.dim(ra - 2);
    const int ak = ta ? a.dim(ra - 2) : a.dim(ra - 1);
    const int bk = tb ? b.dim(rb - 1) : b.dim(rb - 2);
    const int bn = tb ? b.dim(rb - 2) : b.dim(rb - 1);
    if (ak != bk)
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             (ta ? "^T" : "") + " x " + shape_str(b.shape()) + (tb ? "^T" : ""));
    const int batch = ra == 3 ? a.dim(0) : 1;
    if (ra == 3 && rb == 3 && b.dim(0) != batch)
        throw DimensionError("matmul: batch sizes disagree, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));

    Shape out_shape = ra == 3 ? Shape{batch, am, bn} : Shape{am, bn};
    auto out = TensorT<S>::raw(out_shape);
    const std::int64_t a_sz = static_cast<std::int64_t>(a.dim(ra - 2)) * a.dim(ra - 1);
    const std::int64_t b_sz = static_cast<std::int64_t>(b.dim(rb - 2)) * b.dim(rb - 1);
    const std::int64_t c_sz = static_cast<std::int64_t>(am) * bn;
    for (int s = 0; s < batch; ++s) {
        const S* ap = a.data() + (ra == 3 ? s * a_sz : 0);
        const S* bp = b.data() + (rb == 3 ? s * b_sz : 0);
        kern::matmul(ap, bp, out.data() + s * c_sz, am, ak, bn, ta, tb);
    }
    detail::check_finite(out, "matmul");

    if (detail::track<S>({&a, &b})) {
        detail::attach<S>(out, "matmul", {a, b}, [=](Node<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            // dA = dC * B^T, dB = A^T * dC in the ta=tb=false case; the flag
            // combinations below cover the transposed layouts.
            std::vector<S> tmp_a, tmp_b;
            if (pa.requires_grad) {
                pa.ensure_grad();
                tmp_a.resize(static_cast<std::size_t>(a_sz));
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                tmp_b.resize(static_cast<std::size_t>(b_sz));
            }
            for (int s = 0; s < batch; ++s) {
                const S* gp = self.grad.data() + s * c_sz;
                const S* ap = pa.data.data() + (ra == 3 ? s * a_sz : 0);
                const S* bp = pb.data.data() + (rb == 3 ? s * b_sz : 0);
                if (pa.requires_grad) {
                    if (!ta)
                        kern::matmul(gp, bp, tmp_a.data(), am, bn, ak, false, !tb);
                    else
                        kern::matmul(bp, gp, tmp_a.data(), ak, bn, am, tb, true);
                    S* dst = pa.grad.data() + (ra == 3 ? s * a_sz : 0);
                    for (std::int64_t i = 0; i < a_sz; ++i) dst[i] += tmp_a[i];
                }
                if (pb.requires_grad) {
                    if (!tb)
                        kern::matmul(ap, gp, tmp_b.data(), ak, am, bn, !ta, false);
                    else
                        kern::matmul(gp, ap, tmp_b.data(), bn, am, ak, true, ta);
                    S* dst = pb.grad.data() + (rb == 3 ? s * b_sz : 0);
                    for (std::int64_t i = 0; i < b_sz; ++i) dst[i] += tmp_b[i];
                }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> softmax(const TensorT<S>& x, int axis) {
    const auto sp = detail::split_axis(x.shape(), axis, "softmax");
    auto out = TensorT<S>::raw(x.shape());
    kern::softmax_axis(x.data(), out.data(), sp.outer, sp.n, sp.inner);
    detail::check_finite(out, "softmax");
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "softmax", {x}, [sp](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            // dx_i = y_i * (g_i - sum_j g_j y_j) per slice
            for (std::int64_t o = 0; o < sp.outer; ++o) {
                for (std::int64_t in = 0; in < sp.inner; ++in) {
                    const std::int64_t base = o * sp.n * sp.inner + in;
                    S dot = 0;
                    for (std::int64_t t = 0; t < sp.n; ++t) {
                        const std::int64_t i = base + t * sp.inner;
                        dot += self.grad[i] * self.data[i];
                    }
                    for (std::int64_t t = 0; t < sp.n; ++t) {
                        const std::int64_t i = base + t * sp.inner;
                        p.grad[i] += self.data[i] * (self.grad[i] - dot);
                    }
                }
            }
        });
    }
    return out;
}

// Non-affine layer norm over `axis` (population variance, eps inside sqrt);
// compose with mul/add for learnable gain and bias.
template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, int axis, S eps = S(1e-5)) {
    const auto sp = detail::split_axis(x.shape(), axis, "layer_norm");
    auto out = TensorT<S>::raw(x.shape());
    kern::layernorm_axis(x.data(), out.data(), sp.outer, sp.n, sp.inner, eps);
    detail::check_finite(out, "layer_norm");
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "layer_norm", {x}, [sp, eps](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            // dx = (1/sigma) * (g - mean(g) - y * mean(g*y))
            const S invn = S(1) / static_cast<S>(sp.n);
            for (std::int64_t o = 0; o < sp.outer; ++o) {
                for (std::int64_t in = 0; in < sp.inner; ++in) {
                    const std::int64_t base = o * sp.n * sp.inner + in;
                    S mean = 0, var = 0;
                    for (std::int64_t t = 0; t < sp.n; ++t) mean += p.data[base + t * sp.inner];
                    mean *= invn;
                    for (std::int64_t t = 0; t < sp.n; ++t) {
                        const S d = p.data[base + t * sp.inner] - mean;
                        var += d * d;
                    }
                    var *= invn;
                    const S inv_sigma = S(1) / std::sqrt(var + eps);
                    S gmean = 0, gymean = 0;
                    for (std::int64_t t = 0; t < sp.n; ++t) {
                        const std::int64_t i = base + t * sp.inner;
                        gmean += self.grad[i];
                        gymean += self.grad[i] * self.data[i];
                    }
                    gmean *= invn;
                    gymean *= invn;
                    for (std::int64_t t = 0; t < sp.n; ++t) {
                        const std::int64_t i = base + t * sp.inner;
                        p.grad[i] += inv_sigma * (self.grad[i] - gmean - self.data[i] * gymean);
                    }
                }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> sum(const TensorT<S>& x, int axis) {
    const auto sp = detail::split_axis(x.shape(), axis, "sum");
    Shape out_shape;
    const int r = x.rank();
    const int ax = axis < 0 ? axis + r : axis;
    for (int i = 0; i < r; ++i)
        if (i != ax) out_shape.push_back(x.dim(i));
    if (out_shape.empty()) out_shape = {1};
    auto out = TensorT<S>::raw(out_shape);
    kern::reduce_sum_axis(x.data(), out.data(), sp.outer, sp.n, sp.inner);
    detail::check_finite(out, "sum");
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "sum", {x}, [sp](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t t = 0; t < sp.n; ++t)
                    for (std::int64_t in = 0; in < sp.inner; ++in)
                        p.grad[o * sp.n * sp.inner + t * sp.inner + in] += self.grad[o * sp.inner + in];
        });
    }
    return out;
}

template <class S>
TensorT<S> mean(const TensorT<S>& x, int axis) {
    const auto sp = detail::split_axis(x.shape(), axis, "mean");
    return scale(sum(x, axis), S(1) / static_cast<S>(sp.n));
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& x) {
    auto out = TensorT<S>::raw({1});
    out.data()[0] = kern::reduce_sum_all(x.data(), x.numel());
    detail::check_finite(out, "sum_all");
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "sum_all", {x}, [](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            const S g = self.grad[0];
            for (auto& v : p.grad) v += g;
        });
    }
    return out;
}

template <class S>
TensorT<S> reshape(const TensorT<S>& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto out = TensorT<S>::raw(shape);
    std::copy(x.data(), x.data() + x.numel(), out.data());
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "reshape", {x}, [](Node<S>& self) {
            detail::accumulate(*self.parents[0], self.grad.data(), self.numel());
        });
    }
    return out;
}

template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const int r = parts[0].rank();
    const int ax = axis < 0 ? axis + r : axis;
    Shape out_shape = parts[0].shape();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != r) throw DimensionError("concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != ax && p.dim(i) != out_shape[static_cast<std::size_t>(i)])
                throw DimensionError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                                     shape_str(out_shape));
        total += p.dim(ax);
    }
    out_shape[static_cast<std::size_t>(ax)] = total;
    auto out = TensorT<S>::raw(out_shape);

    const auto sp_out = detail::split_axis(out_shape, ax, "concat");
    std::int64_t col_off = 0;
    for (const auto& p : parts) {
        const auto sp = detail::split_axis(p.shape(), ax, "concat");
        for (std::int64_t o = 0; o < sp.outer; ++o)
            std::copy(p.data() + o * sp.n * sp.inner, p.data() + (o + 1) * sp.n * sp.inner,
                      out.data() + o * sp_out.n * sp_out.inner + col_off * sp.inner);
        col_off += sp.n;
    }
    detail::check_finite(out, "concat");

    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (grad_enabled() && any) {
        out.node()->op = "concat";
        out.node()->requires_grad = true;
        for (const auto& p : parts) out.node()->parents.push_back(p.node());
        out.node()->backward = [sp_out, ax](Node<S>& self) {
            std::int64_t col_off = 0;
            for (auto& pp : self.parents) {
                const auto sp = detail::split_axis(pp->shape, ax, "concat");
                if (pp->requires_grad) {
                    pp->ensure_grad();
                    for (std::int64_t o = 0; o < sp.outer; ++o) {
                        const S* src = self.grad.data() + o * sp_out.n * sp_out.inner + col_off * sp.inner;
                        S* dst = pp->grad.data() + o * sp.n * sp.inner;
                        for (std::int64_t i = 0; i < sp.n * sp.inner; ++i) dst[i] += src[i];
                    }
                }
                col_off += sp.n;
            }
        };
    }
    return out;
}

// Row gather: `table` is 2D (rows x d); indices of any shape produce
// idx_shape + [d]. Backward scatter-adds, so repeated indices accumulate.
template <class S>
TensorT<S> lookup(const TensorT<S>& table, const std::vector<int>& indices, const Shape& idx_shape) {
    if (table.rank() != 2) throw DimensionError("lookup: table must be 2D, got " + shape_str(table.shape()));
    if (static_cast<std::int64_t>(indices.size()) != shape_numel(idx_shape))
        throw DimensionError("lookup: index count does not match index shape");
    const int rows = table.dim(0), d = table.dim(1);
    for (int ix : indices)
        if (ix < 0 || ix >= rows)
            throw ContractError("lookup: index " + std::to_string(ix) + " out of range [0," +
                                std::to_string(rows) + ")");
    Shape out_shape = idx_shape;
    out_shape.push_back(d);
    auto out = TensorT<S>::raw(out_shape);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy(table.data() + static_cast<std::int64_t>(indices[i]) * d,
                  table.data() + static_cast<std::int64_t>(indices[i] + 1) * d,
                  out.data() + static_cast<std::int64_t>(i) * d);
    detail::check_finite(out, "lookup");
    if (detail::track<S>({&table})) {
        detail::attach<S>(out, "lookup", {table}, [indices, d](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < indices.size(); ++i) {
                const S* g = self.grad.data() + static_cast<std::int64_t>(i) * d;
                S* dst = p.grad.data() + static_cast<std::int64_t>(indices[i]) * d;
                for (int c = 0; c < d; ++c) dst[c] += g[c];
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> lookup(const TensorT<S>& table, const std::vector<int>& indices) {
    return lookup(table, indices, Shape{static_cast<int>(indices.size())});
}

// Writes `value` where mask is set; mask broadcasts like a binary-op rhs.
// Used with a large negative fill before softmax for the autoregressive mask.
template <class S>
TensorT<S> masked_fill(const TensorT<S>& x, const Mask& mask, S value) {
    TensorT<S> dummy = TensorT<S>::raw(mask.shape);  // shape check only
    const std::int64_t period = detail::binary_period(x, dummy, "masked_fill");
    auto out = TensorT<S>::raw(x.shape());
    const std::uint8_t* mv = mask.v.data();
    const S* xd = x.data();
    S* od = out.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) od[i] = mv[i % period] ? value : xd[i];
    detail::check_finite(out, "masked_fill");
    if (detail::track<S>({&x})) {
        auto mcopy = mask.v;
        detail::attach<S>(out, "masked_fill", {x}, [period, mcopy](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::int64_t i = 0; i < self.numel(); ++i)
                if (!mcopy[i % period]) p.grad[i] += self.grad[i];
        });
    }
    return out;
}

// Inverted dropout: train mode scales kept activations by 1/(1-rate) so eval
// mode is the exact identity.
template <class S>
TensorT<S> dropout(const TensorT<S>& x, double rate, bool train, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0,1)");
    if (!train || rate == 0.0) return x;
    auto out = TensorT<S>::raw(x.shape());
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(x.numel()));
    std::bernoulli_distribution dist(1.0 - rate);
    const S inv_keep = S(1.0 / (1.0 - rate));
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        keep[static_cast<std::size_t>(i)] = dist(rng) ? 1 : 0;
        out.data()[i] = keep[static_cast<std::size_t>(i)] ? x.data()[i] * inv_keep : S(0);
    }
    detail::check_finite(out, "dropout");
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "dropout", {x}, [keep, inv_keep](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::int64_t i = 0; i < self.numel(); ++i)
                if (keep[static_cast<std::size_t>(i)]) p.grad[i] += self.grad[i] * inv_keep;
        });
    }
    return out;
}

// sum over the last axis of a*b — the pairwise inner products used by the
// scoring layers.
template <class S>
TensorT<S> rowdot(const TensorT<S>& a, const TensorT<S>& b) {
    return sum(mul(a, b), -1);
}

// contiguous channel slice [off, off+len) of the last axis
template <class S>
TensorT<S> slice_last(const TensorT<S>& x, int off, int len) {
    const int r = x.rank();
    const int d = x.dim(r - 1);
    if (off < 0 || len < 1 || off + len > d)
        throw DimensionError("slice_last: [" + std::to_string(off) + "," + std::to_string(off + len) +
                             ") out of range for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[static_cast<std::size_t>(r - 1)] = len;
    auto out = TensorT<S>::raw(out_shape);
    const std::int64_t rows = x.numel() / d;
    for (std::int64_t i = 0; i < rows; ++i)
        std::copy(x.data() + i * d + off, x.data() + i * d + off + len, out.data() + i * len);
    if (detail::track<S>({&x})) {
        detail::attach<S>(out, "slice_last", {x}, [off, len, d](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            const std::int64_t rows = self.numel() / len;
            for (std::int64_t i = 0; i < rows; ++i)
                for (int c = 0; c < len; ++c) p.grad[i * d + off + c] += self.grad[i * len + c];
        });
    }
    return out;
}

}  // namespace htn
