// SPDX-License-Identifier: Apache-2.0

#include "codeforge/numeric/parameter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace codeforge::numeric {

Tensor& ParameterSet::add(std::string name, Tensor tensor, bool trainable) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    tensor.set_requires_grad(trainable);
    params_.push_back(Parameter{std::move(name), std::move(tensor), trainable});
    return params_.back().tensor;
}

Tensor& ParameterSet::get(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p.tensor;
    throw std::out_of_range("no parameter named " + name);
}

const Tensor& ParameterSet::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p.tensor;
    throw std::out_of_range("no parameter named " + name);
}

bool ParameterSet::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

Tensor init_normal(Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<real>(rng.normal(0.0, stddev));
    return t;
}

Tensor init_uniform(Shape shape, double limit, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<real>(rng.uniform(-limit, limit));
    return t;
}

Tensor init_constant(Shape shape, real value) {
    Tensor t(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
}

ClipMode parse_clip_mode(const std::string& text) {
    if (text == "element") return ClipMode::element;
    if (text == "global_norm") return ClipMode::global_norm;
    throw std::invalid_argument("unknown clip mode '" + text + "' (expected element or global_norm)");
}

std::string to_string(ClipMode mode) { return mode == ClipMode::element ? "element" : "global_norm"; }

ClipStats clip_gradients(std::span<Parameter> params, real limit, ClipMode mode) {
    ClipStats stats;
    double sq = 0.0;
    for (auto& p : params) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        for (real g : p.tensor.grad()) {
            stats.max_abs_before = std::max(stats.max_abs_before, static_cast<double>(std::abs(g)));
            sq += static_cast<double>(g) * g;
        }
    }
    stats.global_norm_before = std::sqrt(sq);

    if (mode == ClipMode::element) {
        for (auto& p : params) {
            if (!p.trainable || !p.tensor.has_grad()) continue;
            for (real& g : p.tensor.grad()) g = std::clamp(g, -limit, limit);
        }
    } else if (stats.global_norm_before > static_cast<double>(limit)) {
        const real factor = static_cast<real>(static_cast<double>(limit) / stats.global_norm_before);
        for (auto& p : params) {
            if (!p.trainable || !p.tensor.has_grad()) continue;
            for (real& g : p.tensor.grad()) g *= factor;
        }
    }

    for (auto& p : params) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        for (real g : p.tensor.grad())
            stats.max_abs_after = std::max(stats.max_abs_after, static_cast<double>(std::abs(g)));
    }
    return stats;
}

}  // namespace codeforge::numeric
