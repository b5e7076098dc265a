#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "anml/common.hpp"

namespace anml {

// ---------------------------------------------------------------------------
// Reverse-mode autodiff over dense row-major tensors. Ops compute forward
// values eagerly and, while recording is enabled, register a backward rule
// that expresses the input gradients through the same op vocabulary. Because
// the rules themselves build graph nodes when backward() is invoked with
// create_graph, gradients are differentiable and meta-gradients through
// unrolled SGD come out of a single reverse-mode engine.
// ---------------------------------------------------------------------------

inline bool& grad_recording() {
    thread_local bool recording = true;
    return recording;
}

// RAII scope that disables graph recording (forward-only evaluation).
class NoGradGuard {
public:
    NoGradGuard() : prev_(grad_recording()) { grad_recording() = false; }
    ~NoGradGuard() { grad_recording() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class GradRecordingGuard {
public:
    explicit GradRecordingGuard(bool on) : prev_(grad_recording()) { grad_recording() = on; }
    ~GradRecordingGuard() { grad_recording() = prev_; }
    GradRecordingGuard(const GradRecordingGuard&) = delete;
    GradRecordingGuard& operator=(const GradRecordingGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
class Tensor;

template <typename T>
struct TensorNode {
    std::vector<int64_t> shape;
    std::vector<T> values;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Tensor<T>> inputs;
    // Maps d(loss)/d(output) to per-input gradients. Built from ops so the
    // result is itself differentiable when recording is on.
    std::function<std::vector<Tensor<T>>(const Tensor<T>&)> backward_rule;
    uint64_t id = 0;
};

inline uint64_t next_node_id() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor from_values(std::vector<int64_t> shape, std::vector<T> values,
                              bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size()))
            throw ShapeError("tensor value count " + std::to_string(values.size()) +
                             " does not match shape " + format_shape(shape));
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->values = std::move(values);
        t.node_->requires_grad = requires_grad;
        t.node_->id = next_node_id();
        return t;
    }

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false) {
        std::vector<T> v(static_cast<size_t>(shape_numel(shape)), T(0));
        return from_values(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor full(std::vector<int64_t> shape, T value, bool requires_grad = false) {
        std::vector<T> v(static_cast<size_t>(shape_numel(shape)), value);
        return from_values(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor ones(std::vector<int64_t> shape, bool requires_grad = false) {
        return full(std::move(shape), T(1), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from_values({}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->values.size()); }
    const std::vector<T>& values() const { return node_->values; }
    std::vector<T>& mutable_values() { return node_->values; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const char* op() const { return node_->op; }
    uint64_t id() const { return node_->id; }

    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }

    T item() const {
        if (numel() != 1)
            throw ShapeError("item() on tensor with " + std::to_string(numel()) + " elements");
        return node_->values[0];
    }

    // Value copy detached from any graph.
    Tensor detached_copy(bool requires_grad = false) const {
        return from_values(node_->shape, node_->values, requires_grad);
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    TensorNode<T>* node_ptr() const { return node_.get(); }

    // Internal: ops attach parents and a backward rule here.
    static Tensor make_op_result(const char* op, std::vector<int64_t> shape, std::vector<T> values,
                                 std::vector<Tensor> inputs,
                                 std::function<std::vector<Tensor>(const Tensor&)> rule) {
        Tensor t = from_values(std::move(shape), std::move(values));
        if (debug_checks()) {
            for (T v : t.node_->values) {
                if (!std::isfinite(static_cast<double>(v)))
                    throw NumericError(std::string("non-finite value in output of op '") + op + "'");
            }
        }
        t.node_->op = op;
        if (grad_recording()) {
            bool needs = false;
            for (const auto& in : inputs)
                if (in.requires_grad()) needs = true;
            if (needs) {
                t.node_->requires_grad = true;
                t.node_->inputs = std::move(inputs);
                t.node_->backward_rule = std::move(rule);
            }
        }
        return t;
    }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

enum class UnreachablePolicy { error, zero_with_warning };

// Gradient accumulation op; defined in ops.hpp.
template <typename T>
Tensor<T> detail_add(const Tensor<T>& a, const Tensor<T>& b);

// ---------------------------------------------------------------------------
// backward: reverse accumulation from a scalar loss to the wrt tensors.
// With create_graph the produced gradients are graph nodes and a further
// backward() through them yields second-order derivatives.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<Tensor<T>> backward(const Tensor<T>& loss, const std::vector<Tensor<T>>& wrt,
                                bool create_graph = false,
                                UnreachablePolicy policy = UnreachablePolicy::error) {
    if (loss.numel() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " + format_shape(loss.shape()));

    // Topological order over the requires-grad subgraph (iterative DFS).
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    {
        struct Frame {
            TensorNode<T>* node;
            size_t next_input;
        };
        std::vector<Frame> stack;
        if (loss.requires_grad()) {
            stack.push_back({loss.node_ptr(), 0});
            seen.insert(loss.node_ptr());
        }
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_input < f.node->inputs.size()) {
                TensorNode<T>* in = f.node->inputs[f.next_input].node_ptr();
                ++f.next_input;
                if (in->requires_grad && !seen.count(in)) {
                    seen.insert(in);
                    stack.push_back({in, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
    }

    std::unordered_map<TensorNode<T>*, Tensor<T>> grads;
    grads.reserve(order.size());

    {
        GradRecordingGuard guard(create_graph);
        grads[loss.node_ptr()] = Tensor<T>::ones(loss.shape());
        // `order` is post-order (inputs before consumers); walk it backwards.
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorNode<T>* node = *it;
            auto g_it = grads.find(node);
            if (g_it == grads.end()) continue;  // not on a path from the loss
            if (!node->backward_rule) continue;  // leaf
            Tensor<T> gout = g_it->second;
            std::vector<Tensor<T>> gin = node->backward_rule(gout);
            if (gin.size() != node->inputs.size())
                throw NumericError(std::string("backward rule of op '") + node->op +
                                   "' returned wrong gradient count");
            for (size_t i = 0; i < gin.size(); ++i) {
                const Tensor<T>& in = node->inputs[i];
                if (!in.requires_grad()) continue;
                if (!gin[i].defined()) continue;
                auto acc = grads.find(in.node_ptr());
                if (acc == grads.end()) {
                    grads.emplace(in.node_ptr(), gin[i]);
                } else {
                    acc->second = detail_add(acc->second, gin[i]);
                }
            }
        }
    }

    std::vector<Tensor<T>> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto it = grads.find(w.node_ptr());
        if (it == grads.end()) {
            if (policy == UnreachablePolicy::error)
                throw NumericError("backward: tensor (op '" + std::string(w.op()) +
                                   "', shape " + format_shape(w.shape()) +
                                   ") is not reachable from the loss");
            std::fprintf(stderr, "warning: unreachable wrt tensor, returning zeros\n");
            out.push_back(Tensor<T>::zeros(w.shape()));
        } else {
            out.push_back(it->second);
        }
    }
    return out;
}

}  // namespace anml
