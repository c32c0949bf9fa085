// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace codeforge::numeric {

// The library is built in single precision. A second build with
// CODEFORGE_REAL_DOUBLE exists so finite-difference checks are not
// dominated by float32 round-off.
#ifdef CODEFORGE_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

/// Backprop record: reads `self.grad` and accumulates into the parents.
using BackwardFn = std::function<void(TensorNode& self)>;

struct TensorNode {
    Shape shape;
    std::vector<real> data;
    std::vector<real> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    BackwardFn backward;

    bool is_leaf() const { return !backward; }
    std::vector<real>& grad_buffer();  // allocates zeros on demand
};

/// Shared handle to a dense row-major array that may sit in a gradient graph.
/// Copies alias the same storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

    static Tensor scalar(real value, bool requires_grad = false);
    static Tensor from_node(NodePtr node);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<real> data();
    std::span<const real> data() const;
    real item() const;
    real at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    bool has_grad() const;
    std::span<real> grad();
    std::span<const real> grad() const;
    void zero_grad();

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls.
    void backward() const;

    /// Deep copy of the values with no graph attached.
    Tensor clone() const;

    const NodePtr& node() const { return node_; }

private:
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}
    NodePtr node_;
};

/// Disables graph construction on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Builds an op result. The graph edge is recorded only when grad mode is on
/// and at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<real> data, std::vector<Tensor> inputs,
                   BackwardFn backward);

}  // namespace codeforge::numeric
