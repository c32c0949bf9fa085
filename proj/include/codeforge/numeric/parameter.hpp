// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "codeforge/numeric/rng.hpp"
#include "codeforge/numeric/tensor.hpp"

namespace codeforge::numeric {

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

/// Ordered, uniquely named parameters of one model.
class ParameterSet {
public:
    Tensor& add(std::string name, Tensor tensor, bool trainable = true);

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::span<Parameter> items() { return params_; }
    std::span<const Parameter> items() const { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t element_count() const;

    void zero_grad();

private:
    std::vector<Parameter> params_;
};

Tensor init_normal(Shape shape, double stddev, Rng& rng);
Tensor init_uniform(Shape shape, double limit, Rng& rng);
Tensor init_constant(Shape shape, real value);

enum class ClipMode { element, global_norm };

ClipMode parse_clip_mode(const std::string& text);
std::string to_string(ClipMode mode);

struct ClipStats {
    double max_abs_before = 0.0;
    double max_abs_after = 0.0;
    double global_norm_before = 0.0;
};

/// Element mode clamps each gradient entry to [-limit, limit]; global_norm
/// rescales all gradients together when their joint L2 norm exceeds limit.
ClipStats clip_gradients(std::span<Parameter> params, real limit, ClipMode mode = ClipMode::element);

}  // namespace codeforge::numeric
