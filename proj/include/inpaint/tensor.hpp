#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "inpaint/common.hpp"
#include "inpaint/random.hpp"

namespace inpaint {

template <typename T>
class Tensor;

namespace detail {

// One value in the reverse-mode graph. Parents are owned shared_ptr edges, so
// the graph is a DAG freed when the root tensor goes out of scope. `backward`
// reads this node's grad and accumulates into the parents' grads; it captures
// parent handles but never a handle to its own node.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
        return grad;
    }
};

}  // namespace detail

// Value-semantic handle to an immutable graph node. Copies alias the node.
// Tensors are never mutated after creation; the exceptions are gradient
// accumulation during backward() and parameter updates between graphs, which
// go through values_mut() and invalidate any graph still referencing the leaf.
template <typename T>
class Tensor {
  public:
    using Node = detail::Node<T>;
    using NodePtr = std::shared_ptr<Node>;

    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor full(Shape shape, T fill) {
        auto n = std::make_shared<Node>();
        n->value.assign(static_cast<size_t>(shape_numel(shape)), fill);
        n->shape = std::move(shape);
        return Tensor(std::move(n));
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        require(shape_numel(shape) == static_cast<int64_t>(data.size()),
                "tensor data length ", data.size(), " does not match shape ", shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value.resize(static_cast<size_t>(shape_numel(n->shape)));
        for (auto& x : n->value) x = inpaint::uniform<T>(rng, lo, hi);
        return Tensor(std::move(n));
    }

    static Tensor normal(Shape shape, double mean, double stddev, Rng& rng) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value.resize(static_cast<size_t>(shape_numel(n->shape)));
        for (auto& x : n->value) x = inpaint::normal<T>(rng, mean, stddev);
        return Tensor(std::move(n));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(node_->shape.size()); }
    int64_t dim(int64_t i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    std::span<const T> values() const { return node_->value; }
    // Leaf mutation hook for optimizers and finite differences. Any graph
    // built from the old values is stale after this.
    std::span<T> values_mut() { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }

    Tensor& set_requires_grad(bool rg) {
        require(!node_->backward || !rg, "requires_grad can only be toggled on leaf tensors");
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    T item() const {
        require(numel() == 1, "item() requires a single-element tensor, got ", shape_str(shape()));
        return node_->value[0];
    }

    T at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
        const Shape& s = node_->shape;
        require(s.size() == 4, "at4 requires a rank-4 tensor");
        return node_->value[static_cast<size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
    }

    // Copy of the values as a fresh leaf; gradients do not flow through.
    Tensor detach() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->value = node_->value;
        return Tensor(std::move(n));
    }

    // Reverse-mode sweep from a scalar loss. Populates grad on every
    // requires_grad node reachable through differentiable edges.
    void backward() const {
        require(numel() == 1, "backward() requires a scalar loss, got shape ", shape_str(shape()));

        // iterative post-order DFS over parents, pruned at non-grad nodes
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack;
        if (node_->requires_grad) stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node* p = node->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }

        node_->ensure_grad()[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            if (node->backward) node->backward(*node);
        }
        // leaves keep a populated (possibly zero) grad buffer
        for (Node* node : order)
            if (node->requires_grad) node->ensure_grad();
    }

    const NodePtr& node() const { return node_; }

  private:
    NodePtr node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return Tensor<T>(std::move(n));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()), " vs ",
            shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> v(a.values().begin(), a.values().end());
    for (int64_t i = 0; i < b.numel(); ++i) v[i] += b.values()[i];
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [pa, pb](detail::Node<T>& self) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> v(a.values().begin(), a.values().end());
    for (int64_t i = 0; i < b.numel(); ++i) v[i] -= b.values()[i];
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [pa, pb](detail::Node<T>& self) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = a.values()[i] * b.values()[i];
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [pa, pb](detail::Node<T>& self) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = -a.values()[i];
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> v(a.values().begin(), a.values().end());
    for (auto& x : v) x += c;
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    std::vector<T> v(a.values().begin(), a.values().end());
    for (auto& x : v) x *= c;
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa, c](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
    });
}

// x + coeff * s, with s a single-element tensor broadcast over x.
template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& x, const Tensor<T>& s, T coeff = T(1)) {
    require(s.numel() == 1, "add_broadcast: s must be a single-element tensor");
    const T sv = s.values()[0];
    std::vector<T> v(x.values().begin(), x.values().end());
    for (auto& e : v) e += coeff * sv;
    auto px = x.node();
    auto ps = s.node();
    return detail::make_op<T>(x.shape(), std::move(v), {x, s},
                              [px, ps, coeff](detail::Node<T>& self) {
                                  if (px->requires_grad) {
                                      auto& g = px->ensure_grad();
                                      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                  }
                                  if (ps->requires_grad) {
                                      T acc = T(0);
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          acc += self.grad[i];
                                      ps->ensure_grad()[0] += coeff * acc;
                                  }
                              });
}

// x * s, with s a single-element tensor broadcast over x.
template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s) {
    require(s.numel() == 1, "scale_by: s must be a single-element tensor");
    const T sv = s.values()[0];
    std::vector<T> v(x.values().begin(), x.values().end());
    for (auto& e : v) e *= sv;
    auto px = x.node();
    auto ps = s.node();
    return detail::make_op<T>(x.shape(), std::move(v), {x, s}, [px, ps](detail::Node<T>& self) {
        const T sv2 = ps->value[0];
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sv2;
        }
        if (ps->requires_grad) {
            T acc = T(0);
            for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->value[i];
            ps->ensure_grad()[0] += acc;
        }
    });
}

// ---------------------------------------------------------------------------
// nonlinearities

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = T(1) / (T(1) + std::exp(-a.values()[i]));
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const T y = self.value[i];
            g[i] += self.grad[i] * y * (T(1) - y);
        }
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = a.values()[i] > T(0) ? a.values()[i] : T(0);
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (pa->value[i] > T(0)) g[i] += self.grad[i];
    });
}

// Subgradient at 0 takes the negative-slope branch.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) {
        const T x = a.values()[i];
        v[i] = x > T(0) ? x : slope * x;
    }
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa, slope](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * (pa->value[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Tensor<T> abs_t(const Tensor<T>& a) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = std::abs(a.values()[i]);
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const T x = pa->value[i];
            if (x > T(0))
                g[i] += self.grad[i];
            else if (x < T(0))
                g[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& a) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = T(1) / a.values()[i];
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const T y = self.value[i];
            g[i] -= self.grad[i] * y * y;
        }
    });
}

// log(max(x, eps)); clamped entries get zero gradient.
template <typename T>
Tensor<T> log_clamped(const Tensor<T>& a, T eps) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = std::log(std::max(a.values()[i], eps));
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa, eps](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (pa->value[i] > eps) g[i] += self.grad[i] / pa->value[i];
    });
}

// max(sqrt(x), eps); fused so x == 0 stays NaN-free in the backward pass.
template <typename T>
Tensor<T> sqrt_clamped(const Tensor<T>& a, T eps) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i)
        v[i] = std::max(std::sqrt(std::max(a.values()[i], T(0))), eps);
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa, eps](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const T y = self.value[i];
            if (y > eps) g[i] += self.grad[i] / (T(2) * y);
        }
    });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, T lo) {
    std::vector<T> v(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) v[i] = std::max(a.values()[i], lo);
    auto pa = a.node();
    return detail::make_op<T>(a.shape(), std::move(v), {a}, [pa, lo](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (pa->value[i] > lo) g[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = T(0);
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.values()[i];
    auto pa = a.node();
    return detail::make_op<T>({1}, {acc}, {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        const T gv = self.grad[0];
        for (size_t i = 0; i < g.size(); ++i) g[i] += gv;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> l1_norm(const Tensor<T>& a) {
    return sum_all(abs_t(a));
}

// Sum of a 2-D tensor along one axis: axis 0 -> [cols], axis 1 -> [rows].
template <typename T>
Tensor<T> sum_axis2d(const Tensor<T>& a, int axis) {
    require(a.ndim() == 2, "sum_axis2d requires a rank-2 tensor");
    require(axis == 0 || axis == 1, "sum_axis2d: axis must be 0 or 1");
    const int64_t rows = a.dim(0), cols = a.dim(1);
    const auto av = a.values();
    std::vector<T> v;
    Shape out_shape;
    if (axis == 1) {
        out_shape = {rows};
        v.assign(static_cast<size_t>(rows), T(0));
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) v[r] += av[r * cols + c];
    } else {
        out_shape = {cols};
        v.assign(static_cast<size_t>(cols), T(0));
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) v[c] += av[r * cols + c];
    }
    auto pa = a.node();
    return detail::make_op<T>(out_shape, std::move(v), {a},
                              [pa, rows, cols, axis](detail::Node<T>& self) {
                                  auto& g = pa->ensure_grad();
                                  for (int64_t r = 0; r < rows; ++r)
                                      for (int64_t c = 0; c < cols; ++c)
                                          g[r * cols + c] += self.grad[axis == 1 ? r : c];
                              });
}

// m[R,C] * v[R] broadcast along columns; used to normalize patch rows.
template <typename T>
Tensor<T> row_scale(const Tensor<T>& m, const Tensor<T>& v) {
    require(m.ndim() == 2 && v.ndim() == 1 && v.dim(0) == m.dim(0),
            "row_scale: need [R,C] and [R], got ", shape_str(m.shape()), " and ",
            shape_str(v.shape()));
    const int64_t R = m.dim(0), C = m.dim(1);
    std::vector<T> out(m.values().begin(), m.values().end());
    const auto vv = v.values();
    for (int64_t r = 0; r < R; ++r) {
        T* row = out.data() + r * C;
        for (int64_t c = 0; c < C; ++c) row[c] *= vv[r];
    }
    auto pm = m.node();
    auto pv = v.node();
    return detail::make_op<T>(m.shape(), std::move(out), {m, v}, [pm, pv, R, C](detail::Node<T>& self) {
        for (int64_t r = 0; r < R; ++r) {
            const int64_t base = r * C;
            if (pm->requires_grad) {
                auto& g = pm->ensure_grad();
                const T sc = pv->value[r];
                for (int64_t c = 0; c < C; ++c) g[base + c] += self.grad[base + c] * sc;
            }
            if (pv->requires_grad) {
                T acc = T(0);
                for (int64_t c = 0; c < C; ++c) acc += self.grad[base + c] * pm->value[base + c];
                pv->ensure_grad()[r] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// softmax

// Numerically stabilized softmax along `axis`; lanes sum to 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int64_t axis) {
    const auto& s = a.shape();
    require(axis >= 0 && axis < a.ndim(), "softmax: axis ", axis, " out of range for ",
            shape_str(s));
    int64_t extent = s[static_cast<size_t>(axis)];
    int64_t inner = 1, outer = 1;
    for (int64_t i = axis + 1; i < a.ndim(); ++i) inner *= s[static_cast<size_t>(i)];
    for (int64_t i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];

    std::vector<T> v(static_cast<size_t>(a.numel()));
    const auto av = a.values();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * extent * inner + in;
            T mx = av[base];
            for (int64_t e = 1; e < extent; ++e) mx = std::max(mx, av[base + e * inner]);
            T denom = T(0);
            for (int64_t e = 0; e < extent; ++e) {
                const T ex = std::exp(av[base + e * inner] - mx);
                v[base + e * inner] = ex;
                denom += ex;
            }
            for (int64_t e = 0; e < extent; ++e) v[base + e * inner] /= denom;
        }
    }
    auto pa = a.node();
    return detail::make_op<T>(s, std::move(v), {a},
                              [pa, outer, inner, extent](detail::Node<T>& self) {
                                  auto& g = pa->ensure_grad();
                                  for (int64_t o = 0; o < outer; ++o) {
                                      for (int64_t in = 0; in < inner; ++in) {
                                          const int64_t base = o * extent * inner + in;
                                          T dot = T(0);
                                          for (int64_t e = 0; e < extent; ++e) {
                                              const int64_t i = base + e * inner;
                                              dot += self.grad[i] * self.value[i];
                                          }
                                          for (int64_t e = 0; e < extent; ++e) {
                                              const int64_t i = base + e * inner;
                                              g[i] += self.value[i] * (self.grad[i] - dot);
                                          }
                                      }
                                  }
                              });
}

// ---------------------------------------------------------------------------
// linear algebra (2-D)

namespace detail {

// C[M,N] += A[M,K] * B[K,N]; plain ikj loops, inner loop autovectorizes.
template <typename T>
void matmul_accum(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        T* crow = c + i * N;
        const T* arow = a + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const T av = arow[k];
            const T* brow = b + k * N;
            for (int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
std::vector<T> transpose_data(const T* a, int64_t rows, int64_t cols) {
    std::vector<T> t(static_cast<size_t>(rows * cols));
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
    return t;
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.ndim() == 2 && b.ndim() == 2, "matmul requires rank-2 tensors");
    require(a.dim(1) == b.dim(0), "matmul: inner extents differ, ", shape_str(a.shape()), " x ",
            shape_str(b.shape()));
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<T> v(static_cast<size_t>(M * N), T(0));
    detail::matmul_accum(a.values().data(), b.values().data(), v.data(), M, K, N);
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>({M, N}, std::move(v), {a, b}, [pa, pb, M, K, N](detail::Node<T>& self) {
        if (pa->requires_grad) {
            // dA = g * B^T
            auto bt = detail::transpose_data(pb->value.data(), K, N);
            detail::matmul_accum(self.grad.data(), bt.data(), pa->ensure_grad().data(), M, N, K);
        }
        if (pb->requires_grad) {
            // dB = A^T * g
            auto at = detail::transpose_data(pa->value.data(), M, K);
            detail::matmul_accum(at.data(), self.grad.data(), pb->ensure_grad().data(), K, M, N);
        }
    });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    require(a.ndim() == 2, "transpose2d requires a rank-2 tensor");
    const int64_t R = a.dim(0), C = a.dim(1);
    auto v = detail::transpose_data(a.values().data(), R, C);
    auto pa = a.node();
    return detail::make_op<T>({C, R}, std::move(v), {a}, [pa, R, C](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) g[r * C + c] += self.grad[c * R + r];
    });
}

// ---------------------------------------------------------------------------
// shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    require(shape_numel(shape) == a.numel(), "reshape: ", shape_str(a.shape()),
            " incompatible with ", shape_str(shape));
    std::vector<T> v(a.values().begin(), a.values().end());
    auto pa = a.node();
    return detail::make_op<T>(std::move(shape), std::move(v), {a}, [pa](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int64_t axis) {
    require(!parts.empty(), "concat: no inputs");
    const auto& s0 = parts[0].shape();
    require(axis >= 0 && axis < parts[0].ndim(), "concat: axis ", axis, " out of range");
    Shape out = s0;
    int64_t total_axis = 0;
    for (const auto& p : parts) {
        require(p.ndim() == parts[0].ndim(), "concat: rank mismatch");
        for (int64_t d = 0; d < p.ndim(); ++d)
            require(d == axis || p.dim(d) == s0[static_cast<size_t>(d)],
                    "concat: extent mismatch on dim ", d, ": ", shape_str(p.shape()), " vs ",
                    shape_str(s0));
        total_axis += p.dim(axis);
    }
    out[static_cast<size_t>(axis)] = total_axis;

    int64_t inner = 1, outer = 1;
    for (int64_t i = axis + 1; i < parts[0].ndim(); ++i) inner *= s0[static_cast<size_t>(i)];
    for (int64_t i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];

    std::vector<T> v(static_cast<size_t>(shape_numel(out)));
    std::vector<int64_t> extents;
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t e = p.dim(axis);
        extents.push_back(e);
        const auto pv = p.values();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pv.begin() + o * e * inner, pv.begin() + (o + 1) * e * inner,
                      v.begin() + (o * total_axis + off) * inner);
        off += e;
    }

    std::vector<typename Tensor<T>::NodePtr> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return detail::make_op<T>(out, std::move(v), parts,
                              [pnodes, extents, outer, inner, total_axis](detail::Node<T>& self) {
                                  int64_t off2 = 0;
                                  for (size_t pi = 0; pi < pnodes.size(); ++pi) {
                                      const int64_t e = extents[pi];
                                      if (pnodes[pi]->requires_grad) {
                                          auto& g = pnodes[pi]->ensure_grad();
                                          for (int64_t o = 0; o < outer; ++o) {
                                              const T* src =
                                                  self.grad.data() + (o * total_axis + off2) * inner;
                                              T* dst = g.data() + o * e * inner;
                                              for (int64_t i = 0; i < e * inner; ++i) dst[i] += src[i];
                                          }
                                      }
                                      off2 += e;
                                  }
                              });
}

// Spatial crop of an NCHW tensor; backward scatters into the source window.
template <typename T>
Tensor<T> crop4(const Tensor<T>& a, int64_t h0, int64_t w0, int64_t h, int64_t w) {
    require(a.ndim() == 4, "crop4 requires a rank-4 tensor");
    const int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    require(h0 >= 0 && w0 >= 0 && h > 0 && w > 0 && h0 + h <= H && w0 + w <= W,
            "crop4: window [", h0, ",", h0 + h, ")x[", w0, ",", w0 + w, ") outside ", H, "x", W);
    std::vector<T> v(static_cast<size_t>(N * C * h * w));
    const auto av = a.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < h; ++y) {
                const T* src = av.data() + ((n * C + c) * H + h0 + y) * W + w0;
                std::copy(src, src + w, v.data() + ((n * C + c) * h + y) * w);
            }
    auto pa = a.node();
    return detail::make_op<T>({N, C, h, w}, std::move(v), {a},
                              [pa, N, C, H, W, h0, w0, h, w](detail::Node<T>& self) {
                                  auto& g = pa->ensure_grad();
                                  for (int64_t n = 0; n < N; ++n)
                                      for (int64_t c = 0; c < C; ++c)
                                          for (int64_t y = 0; y < h; ++y) {
                                              const T* src = self.grad.data() + ((n * C + c) * h + y) * w;
                                              T* dst = g.data() + ((n * C + c) * H + h0 + y) * W + w0;
                                              for (int64_t x = 0; x < w; ++x) dst[x] += src[x];
                                          }
                              });
}

// Contiguous slice [from, to) of a rank-1 tensor.
template <typename T>
Tensor<T> slice1d(const Tensor<T>& a, int64_t from, int64_t to) {
    require(a.ndim() == 1, "slice1d requires a rank-1 tensor");
    require(from >= 0 && from < to && to <= a.dim(0), "slice1d: bad range [", from, ",", to,
            ") for length ", a.dim(0));
    std::vector<T> v(a.values().begin() + from, a.values().begin() + to);
    auto pa = a.node();
    return detail::make_op<T>({to - from}, std::move(v), {a}, [pa, from](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) g[from + i] += self.grad[i];
    });
}

// Single batch item as a 1CHW tensor.
template <typename T>
Tensor<T> select_batch(const Tensor<T>& a, int64_t n) {
    require(a.ndim() == 4, "select_batch requires a rank-4 tensor");
    const int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    require(n >= 0 && n < N, "select_batch: index ", n, " out of range [0,", N, ")");
    const int64_t per = C * H * W;
    std::vector<T> v(a.values().begin() + n * per, a.values().begin() + (n + 1) * per);
    auto pa = a.node();
    return detail::make_op<T>({1, C, H, W}, std::move(v), {a}, [pa, n, per](detail::Node<T>& self) {
        auto& g = pa->ensure_grad();
        for (int64_t i = 0; i < per; ++i) g[n * per + i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// limited broadcasts: per-channel bias/scale and per-position (mask) scale

template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b) {
    require(x.ndim() == 4, "bias_add requires a rank-4 input");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    require(b.ndim() == 1 && b.dim(0) == C, "bias_add: bias shape ", shape_str(b.shape()),
            " does not match C=", C);
    std::vector<T> v(x.values().begin(), x.values().end());
    const auto bv = b.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            T* row = v.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) row[i] += bv[c];
        }
    auto px = x.node();
    auto pb = b.node();
    return detail::make_op<T>(x.shape(), std::move(v), {x, b}, [px, pb, N, C, HW](detail::Node<T>& self) {
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T* row = self.grad.data() + (n * C + c) * HW;
                    T acc = T(0);
                    for (int64_t i = 0; i < HW; ++i) acc += row[i];
                    g[c] += acc;
                }
        }
    });
}

// x[N,C,H,W] * s[N,C,1,1]
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s) {
    require(x.ndim() == 4 && s.ndim() == 4, "channel_scale requires rank-4 tensors");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    require(s.dim(0) == N && s.dim(1) == C && s.dim(2) == 1 && s.dim(3) == 1,
            "channel_scale: scale shape ", shape_str(s.shape()), " is not [", N, ",", C, ",1,1]");
    std::vector<T> v(x.values().begin(), x.values().end());
    const auto sv = s.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T sc = sv[n * C + c];
            T* row = v.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) row[i] *= sc;
        }
    auto px = x.node();
    auto ps = s.node();
    return detail::make_op<T>(x.shape(), std::move(v), {x, s}, [px, ps, N, C, HW](detail::Node<T>& self) {
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const int64_t base = (n * C + c) * HW;
                if (px->requires_grad) {
                    auto& g = px->ensure_grad();
                    const T sc = ps->value[n * C + c];
                    for (int64_t i = 0; i < HW; ++i) g[base + i] += self.grad[base + i] * sc;
                }
                if (ps->requires_grad) {
                    T acc = T(0);
                    for (int64_t i = 0; i < HW; ++i) acc += self.grad[base + i] * px->value[base + i];
                    ps->ensure_grad()[n * C + c] += acc;
                }
            }
    });
}

// x[N,C,H,W] * m[N,1,H,W]; the mask broadcast used by hole zeroing,
// partial-conv renormalization and compositing.
template <typename T>
Tensor<T> spatial_scale(const Tensor<T>& x, const Tensor<T>& m) {
    require(x.ndim() == 4 && m.ndim() == 4, "spatial_scale requires rank-4 tensors");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(m.dim(0) == N && m.dim(1) == 1 && m.dim(2) == H && m.dim(3) == W,
            "spatial_scale: mask shape ", shape_str(m.shape()), " is not [", N, ",1,", H, ",", W, "]");
    const int64_t HW = H * W;
    std::vector<T> v(x.values().begin(), x.values().end());
    const auto mv = m.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            T* row = v.data() + (n * C + c) * HW;
            const T* mrow = mv.data() + n * HW;
            for (int64_t i = 0; i < HW; ++i) row[i] *= mrow[i];
        }
    auto px = x.node();
    auto pm = m.node();
    return detail::make_op<T>(x.shape(), std::move(v), {x, m}, [px, pm, N, C, HW](detail::Node<T>& self) {
        for (int64_t n = 0; n < N; ++n) {
            const T* mrow = pm->value.data() + n * HW;
            for (int64_t c = 0; c < C; ++c) {
                const int64_t base = (n * C + c) * HW;
                if (px->requires_grad) {
                    auto& g = px->ensure_grad();
                    for (int64_t i = 0; i < HW; ++i) g[base + i] += self.grad[base + i] * mrow[i];
                }
                if (pm->requires_grad) {
                    auto& g = pm->ensure_grad();
                    for (int64_t i = 0; i < HW; ++i)
                        g[n * HW + i] += self.grad[base + i] * px->value[base + i];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    require(x.ndim() == 4, "global_avg_pool requires a rank-4 tensor");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<T> v(static_cast<size_t>(N * C), T(0));
    const auto xv = x.values();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        T acc = T(0);
        for (int64_t i = 0; i < HW; ++i) acc += xv[nc * HW + i];
        v[nc] = acc / static_cast<T>(HW);
    }
    auto px = x.node();
    return detail::make_op<T>({N, C, 1, 1}, std::move(v), {x}, [px, N, C, HW](detail::Node<T>& self) {
        auto& g = px->ensure_grad();
        const T inv = T(1) / static_cast<T>(HW);
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T gv = self.grad[nc] * inv;
            for (int64_t i = 0; i < HW; ++i) g[nc * HW + i] += gv;
        }
    });
}

// Mean over C,H,W per batch item -> shape [N]. Critic heads use this.
template <typename T>
Tensor<T> mean_chw(const Tensor<T>& x) {
    require(x.ndim() == 4, "mean_chw requires a rank-4 tensor");
    const int64_t N = x.dim(0), per = x.dim(1) * x.dim(2) * x.dim(3);
    std::vector<T> v(static_cast<size_t>(N), T(0));
    const auto xv = x.values();
    for (int64_t n = 0; n < N; ++n) {
        T acc = T(0);
        for (int64_t i = 0; i < per; ++i) acc += xv[n * per + i];
        v[n] = acc / static_cast<T>(per);
    }
    auto px = x.node();
    return detail::make_op<T>({N}, std::move(v), {x}, [px, N, per](detail::Node<T>& self) {
        auto& g = px->ensure_grad();
        const T inv = T(1) / static_cast<T>(per);
        for (int64_t n = 0; n < N; ++n) {
            const T gv = self.grad[n] * inv;
            for (int64_t i = 0; i < per; ++i) g[n * per + i] += gv;
        }
    });
}

}  // namespace inpaint
