#pragma once

// Dense 64-bit tensor with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto shared storage. Operations in ops.hpp
// record a backward closure on their output whenever any input requires a
// gradient; Tensor::backward() replays those closures in reverse topological
// order, accumulating into every upstream grad buffer.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace msihist::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape &s);
std::string shape_str(const Shape &s);

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node &)> backward;

    std::vector<double> &ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape &shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t size() const { return node_->data.size(); }

    std::span<double> data() { return node_->data; }
    std::span<const double> data() const { return node_->data; }
    const std::vector<double> &values() const { return node_->data; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<double> grad() { return node_->grad; }
    std::span<const double> grad() const { return node_->grad; }
    void zero_grad();

    // Seeds d(this)/d(this) = 1 (this must hold one element) and propagates.
    void backward();

    // Same values, no history, no gradient.
    Tensor detach() const;

    Node &node() { return *node_; }
    const Node &node() const { return *node_; }
    const std::shared_ptr<Node> &node_ptr() const { return node_; }

    // Output of an op: requires_grad if any parent does, with history.
    static Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                              std::function<void(Node &)> backward);

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;
};

// When enabled, every op result is checked for non-finite values and throws
// RuntimeFailure naming the op.
void set_debug_checks(bool on);
bool debug_checks();

// Scope guard that disables graph recording (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
    bool prev_;
};
bool grad_enabled();

} // namespace msihist::nn
