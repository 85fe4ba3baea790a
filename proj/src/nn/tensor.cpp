#include "msihist/nn/tensor.hpp"
#include "msihist/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace msihist::nn {

namespace {
bool g_debug_checks = false;
thread_local bool g_grad_enabled = true;
} // namespace

void set_debug_checks(bool on) { g_debug_checks = on; }
bool debug_checks() { return g_debug_checks; }
bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::size_t numel(const Shape &s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape &s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->data.assign(numel(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    require(values.size() == numel(shape),
            "Tensor::from: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

double Tensor::item() const {
    require(size() == 1, "item() on a tensor with " + std::to_string(size()) + " elements");
    return node_->data[0];
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    return Tensor(std::move(n));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                           std::function<void(Node &)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    if (g_debug_checks) {
        for (double v : n->data)
            if (!std::isfinite(v)) throw RuntimeFailure("non-finite value produced by an nn op");
    }
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                     [](const Tensor &p) { return p.requires_grad(); });
    if (needs) {
        n->requires_grad = true;
        for (auto &p : parents) n->parents.push_back(p.node_);
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

void Tensor::backward() {
    require(size() == 1, "backward() requires a scalar tensor");
    require(requires_grad(), "backward() on a tensor that does not require grad");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node *> order;
    std::unordered_set<Node *> seen;
    std::vector<std::pair<Node *, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto &[n, next] = stack.back();
        if (next < n->parents.size()) {
            Node *p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node *n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

} // namespace msihist::nn
