// SPDX-License-Identifier: Apache-2.0

#include "codeforge/numeric/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace codeforge::numeric {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<real>& TensorNode::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), real(0));
    return grad;
}

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    node_->data.assign(shape_numel(shape), real(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    }
    node_->data = std::move(values);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<real>{value}, requires_grad);
}

Tensor Tensor::from_node(NodePtr node) { return Tensor(std::move(node)); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<real> Tensor::data() { return node_->data; }
std::span<const real> Tensor::data() const { return node_->data; }

real Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a single element, got " + shape_str(shape()));
    return node_->data[0];
}

real Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw ShapeError("index rank mismatch for " + shape_str(shape()));
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= node_->shape[axis]) throw ShapeError("index out of range for " + shape_str(shape()));
        offset = offset * node_->shape[axis] + i;
        ++axis;
    }
    return node_->data[offset];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<real> Tensor::grad() { return node_->grad_buffer(); }
std::span<const real> Tensor::grad() const { return node_->grad_buffer(); }

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

Tensor Tensor::clone() const { return Tensor(shape(), node_->data, false); }

void Tensor::backward() const {
    if (!node_) throw std::logic_error("backward() on an undefined tensor");
    if (numel() != 1) throw ShapeError("backward() requires a scalar loss, got " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; recurrent graphs are deep.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            TensorNode* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (TensorNode* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), real(0));
    }
    node_->grad_buffer()[0] += real(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->is_leaf()) continue;
        n->backward(*n);
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<real> data, std::vector<Tensor> inputs, BackwardFn backward) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (g_grad_enabled) {
        bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(inputs.size());
            for (auto& t : inputs) node->parents.push_back(t.node());
            node->backward = std::move(backward);
        }
    }
    return Tensor::from_node(std::move(node));
}

}  // namespace codeforge::numeric
