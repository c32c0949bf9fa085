// SPDX-License-Identifier: Apache-2.0

#include "codeforge/numeric/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace codeforge::numeric {

void Sgd::step(std::span<Parameter> params, double lr) {
    const real rate = static_cast<real>(lr);
    for (auto& p : params) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        auto w = p.tensor.data();
        auto g = p.tensor.grad();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= rate * g[i];
    }
}

void Adam::step(std::span<Parameter> params, double lr) {
    if (m_.size() != params.size()) {
        m_.assign(params.size(), {});
        v_.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].tensor.numel(), real(0));
            v_[i].assign(params[i].tensor.numel(), real(0));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const real step = static_cast<real>(lr * std::sqrt(c2) / c1);
    const real b1 = static_cast<real>(beta1_), b2 = static_cast<real>(beta2_);
    const real eps_hat = static_cast<real>(eps_ * std::sqrt(c2));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        if (!p.trainable || !p.tensor.has_grad()) continue;
        auto w = p.tensor.data();
        auto g = p.tensor.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (real(1) - b1) * g[i];
            v[i] = b2 * v[i] + (real(1) - b2) * g[i] * g[i];
            w[i] -= step * m[i] / (std::sqrt(v[i]) + eps_hat);
        }
    }
}

OptimizerKind parse_optimizer(const std::string& text) {
    if (text == "sgd") return OptimizerKind::sgd;
    if (text == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + text + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind) {
    if (kind == OptimizerKind::sgd) return std::make_unique<Sgd>();
    return std::make_unique<Adam>();
}

}  // namespace codeforge::numeric
