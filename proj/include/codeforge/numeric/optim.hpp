// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "codeforge/numeric/parameter.hpp"

namespace codeforge::numeric {

class Optimizer {
public:
    virtual ~Optimizer() = default;
    /// Applies one update with the given learning rate; gradients are left in place.
    virtual void step(std::span<Parameter> params, double lr) = 0;
};

class Sgd final : public Optimizer {
public:
    void step(std::span<Parameter> params, double lr) override;
};

class Adam final : public Optimizer {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(std::span<Parameter> params, double lr) override;

private:
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<real>> m_, v_;
};

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& text);
std::string to_string(OptimizerKind kind);
std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind);

}  // namespace codeforge::numeric
