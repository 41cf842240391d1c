#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "rgt/error.hpp"

namespace rgt {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d < 0) throw ShapeError("negative extent in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

namespace detail {

// One tape node. The graph is the DAG hanging off an output tensor; nodes
// are freed when the last tensor referencing them dies. Leaf parameters
// keep no inputs, so a forward pass retains memory only while its output
// is alive.
struct Node {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backprop;
};

inline void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
    }
}

} // namespace detail

class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::Node>()) {}

    static Tensor zeros(Shape shape) {
        return from_data(std::move(shape), {}, false, true);
    }

    static Tensor full(Shape shape, double v) {
        auto n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<double>(size_t(n), v), false);
    }

    static Tensor scalar(double v) { return from_data({1}, {v}, false); }

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false,
                            bool zero_fill = false) {
        auto node = std::make_shared<detail::Node>();
        int64_t n = shape_numel(shape);
        if (zero_fill) data.assign(size_t(n), 0.0);
        if (int64_t(data.size()) != n) {
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        detail::check_finite(data, "tensor construction");
        node->shape = std::move(shape);
        node->value = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor param(Shape shape, std::vector<double> data) {
        return from_data(std::move(shape), std::move(data), true);
    }

    const Shape& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }
    int64_t numel() const { return int64_t(node_->value.size()); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& data() const { return node_->value; }

    double item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }

    double at(std::initializer_list<int64_t> idx) const {
        if (idx.size() != rank()) throw ShapeError("index rank mismatch");
        int64_t flat = 0;
        size_t k = 0;
        for (int64_t i : idx) {
            if (i < 0 || i >= node_->shape[k]) throw ShapeError("index out of range");
            flat = flat * node_->shape[k] + i;
            ++k;
        }
        return node_->value[size_t(flat)];
    }

    bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }

    Tensor grad() const {
        if (!has_grad()) throw NumericError("gradient not available; call backward() first");
        return Tensor::from_data(node_->shape, node_->grad, false);
    }

    // Reverse-mode sweep from a scalar output. Zeroes the grad buffers of
    // every reachable node first, so grads are w.r.t. this loss only.
    void backward() const {
        if (numel() != 1) throw ShapeError("backward() requires a scalar, got " + shape_str(shape()));
        if (!node_->requires_grad) {
            throw NumericError("backward() on a tensor with no tape (requires_grad is false)");
        }
        std::vector<detail::Node*> order;
        std::unordered_set<detail::Node*> seen;
        // iterative post-order over the input DAG
        std::vector<std::pair<detail::Node*, size_t>> frames;
        frames.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!frames.empty()) {
            auto& [n, i] = frames.back();
            if (i < n->inputs.size()) {
                detail::Node* child = n->inputs[i++].get();
                if (child->requires_grad && seen.insert(child).second) {
                    frames.emplace_back(child, 0);
                }
            } else {
                order.push_back(n);
                frames.pop_back();
            }
        }
        for (detail::Node* n : order) n->grad.assign(n->value.size(), 0.0);
        node_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::Node* n = *it;
            if (n->backprop) n->backprop(*n);
        }
    }

    // raw node access for op implementations
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                          std::function<void(detail::Node&)>, const char*);
};

// Builds a tape node. If no input carries a tape, the result is a plain
// value: no inputs retained, no backprop closure, so inference runs
// graph-free.
inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backprop, const char* op_name) {
    if (int64_t(value.size()) != shape_numel(shape)) {
        throw ShapeError(std::string(op_name) + ": output buffer does not match shape");
    }
    detail::check_finite(value, op_name);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool rg = false;
    for (const Tensor& t : inputs) rg = rg || t.requires_grad();
    node->requires_grad = rg;
    if (rg) {
        node->inputs.reserve(inputs.size());
        for (const Tensor& t : inputs) node->inputs.push_back(t.node());
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

namespace detail {
// Accumulate helper used by backprop closures; skips inputs outside the tape.
inline void add_grad(const std::shared_ptr<Node>& n, size_t i, double g) {
    if (n->requires_grad) n->grad[i] += g;
}
inline bool wants_grad(const std::shared_ptr<Node>& n) { return n->requires_grad; }
} // namespace detail

// ---- elementwise arithmetic ----

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        auto& ga = n.inputs[0];
        auto& gb = n.inputs[1];
        for (size_t i = 0; i < n.grad.size(); ++i) {
            detail::add_grad(ga, i, n.grad[i]);
            detail::add_grad(gb, i, n.grad[i]);
        }
    }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        auto& ga = n.inputs[0];
        auto& gb = n.inputs[1];
        for (size_t i = 0; i < n.grad.size(); ++i) {
            detail::add_grad(ga, i, n.grad[i]);
            detail::add_grad(gb, i, -n.grad[i]);
        }
    }, "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        auto& na = n.inputs[0];
        auto& nb = n.inputs[1];
        for (size_t i = 0; i < n.grad.size(); ++i) {
            detail::add_grad(na, i, n.grad[i] * nb->value[i]);
            detail::add_grad(nb, i, n.grad[i] * na->value[i]);
        }
    }, "mul");
}

inline Tensor scalar_mul(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& x : out) x *= s;
    return make_op(a.shape(), std::move(out), {a}, [s](detail::Node& n) {
        auto& na = n.inputs[0];
        for (size_t i = 0; i < n.grad.size(); ++i) detail::add_grad(na, i, n.grad[i] * s);
    }, "scalar_mul");
}

inline Tensor abs(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::fabs(x);
    // subgradient 0 at the kink
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        auto& na = n.inputs[0];
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double v = na->value[i];
            double s = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            detail::add_grad(na, i, n.grad[i] * s);
        }
    }, "abs");
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_op({1}, {s}, {a}, [](detail::Node& n) {
        auto& na = n.inputs[0];
        double g = n.grad[0];
        for (size_t i = 0; i < na->value.size(); ++i) detail::add_grad(na, i, g);
    }, "sum");
}

inline Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return scalar_mul(sum(a), 1.0 / double(a.numel()));
}

// mean absolute deviation; the training loss
inline Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "l1_loss");
    return mean(abs(sub(pred, target)));
}

} // namespace rgt
