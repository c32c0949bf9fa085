// SPDX-License-Identifier: Apache-2.0

#include "codeforge/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace codeforge::numeric {

namespace {

TensorNode& parent(TensorNode& self, std::size_t i) { return *self.parents[i]; }

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c) {
    for (std::size_t i = 0; i < m; ++i) {
        real* crow = c + i * n;
        const real* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const real av = arow[p];
            const real* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const real* arow = a + p * m;
        const real* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const real av = arow[i];
            real* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

std::vector<real> transposed(const real* src, std::size_t rows, std::size_t cols) {
    std::vector<real> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
    return out;
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c) {
    const auto bt = transposed(b, n, k);
    gemm_nn(m, n, k, a, bt.data(), c);
}

struct Axes {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

Axes split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    Axes ax;
    for (std::size_t i = 0; i < axis; ++i) ax.outer *= shape[i];
    ax.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) ax.inner *= shape[i];
    return ax;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    auto in = a.data();
    std::vector<real> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_result(a.shape(), std::move(out), {a}, [deriv](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
    const std::size_t k = b.dim(0), n = b.dim(1);
    const std::size_t m = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<real> out(m * n, real(0));
    gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    return make_result(std::move(out_shape), std::move(out), {a, b}, [m, n, k](TensorNode& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        if (pa.requires_grad) gemm_nt(m, k, n, self.grad.data(), pb.data.data(), pa.grad_buffer().data());
        if (pb.requires_grad) gemm_tn(k, n, m, pa.data.data(), self.grad.data(), pb.grad_buffer().data());
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(1)) shape_mismatch("matmul_nt", a.shape(), b.shape());
    const std::size_t n = b.dim(0), k = b.dim(1);
    const std::size_t m = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<real> out(m * n, real(0));
    gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data());
    return make_result(std::move(out_shape), std::move(out), {a, b}, [m, n, k](TensorNode& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        // dA[m,k] = dC[m,n] B[n,k];  dB[n,k] = dC^T[n,m] A[m,k]
        if (pa.requires_grad) gemm_nn(m, k, n, self.grad.data(), pb.data.data(), pa.grad_buffer().data());
        if (pb.requires_grad) gemm_tn(n, k, m, self.grad.data(), pa.data.data(), pb.grad_buffer().data());
    });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        shape_mismatch("bmm", a.shape(), b.shape());
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<real> out(batch * m * n, real(0));
    for (std::size_t i = 0; i < batch; ++i)
        gemm_nn(m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n);
    return make_result({batch, m, n}, std::move(out), {a, b}, [batch, m, n, k](TensorNode& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        for (std::size_t i = 0; i < batch; ++i) {
            const real* dc = self.grad.data() + i * m * n;
            if (pa.requires_grad)
                gemm_nt(m, k, n, dc, pb.data.data() + i * k * n, pa.grad_buffer().data() + i * m * k);
            if (pb.requires_grad)
                gemm_tn(k, n, m, pa.data.data() + i * m * k, dc, pb.grad_buffer().data() + i * k * n);
        }
    });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        shape_mismatch("bmm_nt", a.shape(), b.shape());
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
    std::vector<real> out(batch * m * n, real(0));
    for (std::size_t i = 0; i < batch; ++i)
        gemm_nt(m, n, k, a.data().data() + i * m * k, b.data().data() + i * n * k, out.data() + i * m * n);
    return make_result({batch, m, n}, std::move(out), {a, b}, [batch, m, n, k](TensorNode& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        for (std::size_t i = 0; i < batch; ++i) {
            const real* dc = self.grad.data() + i * m * n;
            if (pa.requires_grad)
                gemm_nn(m, k, n, dc, pb.data.data() + i * n * k, pa.grad_buffer().data() + i * m * k);
            if (pb.requires_grad)
                gemm_tn(n, k, m, dc, pa.data.data() + i * m * k, pb.grad_buffer().data() + i * n * k);
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() < 2) throw ShapeError("transpose: needs rank >= 2, got " + shape_str(a.shape()));
    const std::size_t rows = a.dim(a.rank() - 2), cols = a.dim(a.rank() - 1);
    const std::size_t batch = a.numel() / (rows * cols);
    std::vector<real> out(a.numel());
    for (std::size_t b = 0; b < batch; ++b) {
        auto t = transposed(a.data().data() + b * rows * cols, rows, cols);
        std::copy(t.begin(), t.end(), out.begin() + static_cast<std::ptrdiff_t>(b * rows * cols));
    }
    Shape shape = a.shape();
    std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
    return make_result(std::move(shape), std::move(out), {a}, [batch, rows, cols](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
            const real* src = self.grad.data() + b * rows * cols;
            real* dst = g.data() + b * rows * cols;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] += src[c * rows + r];
        }
    });
}

namespace {

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
    const bool same = a.shape() == b.shape();
    const bool b_scalar = b.numel() == 1;
    const bool a_scalar = a.numel() == 1;
    if (!same && !b_scalar && !a_scalar) shape_mismatch(name, a.shape(), b.shape());
    const Shape out_shape = same || b_scalar ? a.shape() : b.shape();
    const std::size_t n = shape_numel(out_shape);
    auto av = a.data();
    auto bv = b.data();
    auto get = [n](std::span<const real> v, std::size_t i) { return v.size() == n ? v[i] : v[0]; };
    std::vector<real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const real x = get(av, i), y = get(bv, i);
        out[i] = kind == BinaryKind::add ? x + y : kind == BinaryKind::sub ? x - y : x * y;
    }
    return make_result(out_shape, std::move(out), {a, b}, [kind, n](TensorNode& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        auto val = [n](const std::vector<real>& v, std::size_t i) { return v.size() == n ? v[i] : v[0]; };
        auto acc = [n](TensorNode& p, std::size_t i, real g) {
            auto& buf = p.grad_buffer();
            buf[buf.size() == n ? i : 0] += g;
        };
        for (std::size_t i = 0; i < n; ++i) {
            const real g = self.grad[i];
            switch (kind) {
                case BinaryKind::add:
                    if (pa.requires_grad) acc(pa, i, g);
                    if (pb.requires_grad) acc(pb, i, g);
                    break;
                case BinaryKind::sub:
                    if (pa.requires_grad) acc(pa, i, g);
                    if (pb.requires_grad) acc(pb, i, -g);
                    break;
                case BinaryKind::mul:
                    if (pa.requires_grad) acc(pa, i, g * val(pb.data, i));
                    if (pb.requires_grad) acc(pb, i, g * val(pa.data, i));
                    break;
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.shape().back() != bias.dim(0)) shape_mismatch("add_bias", x.shape(), bias.shape());
    const std::size_t n = bias.dim(0);
    const std::size_t rows = x.numel() / n;
    std::vector<real> out(x.data().begin(), x.data().end());
    auto bv = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
    return make_result(x.shape(), std::move(out), {x, bias}, [rows, n](TensorNode& self) {
        auto& px = parent(self, 0);
        auto& pb = parent(self, 1);
        if (px.requires_grad) {
            auto& g = px.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
        }
    });
}

Tensor scale(const Tensor& a, real factor) {
    return unary(a, [factor](real x) { return x * factor; }, [factor](real, real) { return factor; });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (real v : a.data()) total += v;
    return make_result({1}, {static_cast<real>(total)}, {a}, [](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        for (auto& g : p.grad_buffer()) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), real(1) / static_cast<real>(a.numel())); }

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i)
            if (i != axis && s[i] != first[i]) ok = false;
        if (!ok) shape_mismatch("concat", first, s);
        out_shape[axis] += s[axis];
    }
    const Axes out_ax = split_axis(out_shape, axis);
    std::vector<real> out(shape_numel(out_shape));
    std::vector<std::size_t> extents;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t ext = p.dim(axis);
        extents.push_back(ext);
        auto src = p.data();
        for (std::size_t o = 0; o < out_ax.outer; ++o) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * ext * out_ax.inner), ext * out_ax.inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * out_ax.extent + offset) * out_ax.inner));
        }
        offset += ext;
    }
    return make_result(std::move(out_shape), std::move(out), parts, [out_ax, extents](TensorNode& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < extents.size(); ++k) {
            auto& p = parent(self, k);
            const std::size_t ext = extents[k];
            if (p.requires_grad) {
                auto& g = p.grad_buffer();
                for (std::size_t o = 0; o < out_ax.outer; ++o) {
                    const real* src = self.grad.data() + (o * out_ax.extent + offset) * out_ax.inner;
                    real* dst = g.data() + o * ext * out_ax.inner;
                    for (std::size_t i = 0; i < ext * out_ax.inner; ++i) dst[i] += src[i];
                }
            }
            offset += ext;
        }
    });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    const Axes ax = split_axis(a.shape(), axis);
    if (begin >= end || end > ax.extent)
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for axis " +
                         std::to_string(axis) + " of " + shape_str(a.shape()));
    const std::size_t ext = end - begin;
    Shape out_shape = a.shape();
    out_shape[axis] = ext;
    std::vector<real> out(shape_numel(out_shape));
    auto src = a.data();
    for (std::size_t o = 0; o < ax.outer; ++o) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((o * ax.extent + begin) * ax.inner), ext * ax.inner,
                    out.begin() + static_cast<std::ptrdiff_t>(o * ext * ax.inner));
    }
    return make_result(std::move(out_shape), std::move(out), {a}, [ax, begin, ext](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t o = 0; o < ax.outer; ++o) {
            const real* src = self.grad.data() + o * ext * ax.inner;
            real* dst = g.data() + (o * ax.extent + begin) * ax.inner;
            for (std::size_t i = 0; i < ext * ax.inner; ++i) dst[i] += src[i];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) shape_mismatch("reshape", a.shape(), shape);
    std::vector<real> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a}, [](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](real x) { return std::tanh(x); }, [](real, real y) { return real(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a, [](real x) { return real(1) / (real(1) + std::exp(-x)); }, [](real, real y) { return y * (real(1) - y); });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](real x) { return x > real(0) ? x : real(0); },
                 [](real x, real) { return x > real(0) ? real(1) : real(0); });
}

Tensor gelu(const Tensor& a) {
    constexpr real c = real(0.7978845608028654);  // sqrt(2/pi)
    constexpr real k = real(0.044715);
    return unary(
        a, [](real x) { return real(0.5) * x * (real(1) + std::tanh(c * (x + k * x * x * x))); },
        [](real x, real) {
            const real t = std::tanh(c * (x + k * x * x * x));
            return real(0.5) * (real(1) + t) + real(0.5) * x * (real(1) - t * t) * c * (real(1) + real(3) * k * x * x);
        });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](real x) { return std::exp(x); }, [](real, real y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, [](real x) { return std::log(x); }, [](real x, real) { return real(1) / x; });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    const Axes ax = split_axis(a.shape(), axis);
    auto in = a.data();
    std::vector<real> out(in.size());
    for (std::size_t o = 0; o < ax.outer; ++o) {
        for (std::size_t i = 0; i < ax.inner; ++i) {
            const std::size_t base = o * ax.extent * ax.inner + i;
            real mx = -std::numeric_limits<real>::infinity();
            for (std::size_t e = 0; e < ax.extent; ++e) mx = std::max(mx, in[base + e * ax.inner]);
            double z = 0.0;
            for (std::size_t e = 0; e < ax.extent; ++e) z += std::exp(static_cast<double>(in[base + e * ax.inner] - mx));
            for (std::size_t e = 0; e < ax.extent; ++e)
                out[base + e * ax.inner] = static_cast<real>(std::exp(static_cast<double>(in[base + e * ax.inner] - mx)) / z);
        }
    }
    return make_result(a.shape(), std::move(out), {a}, [ax](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t o = 0; o < ax.outer; ++o) {
            for (std::size_t i = 0; i < ax.inner; ++i) {
                const std::size_t base = o * ax.extent * ax.inner + i;
                double dot = 0.0;
                for (std::size_t e = 0; e < ax.extent; ++e) {
                    const std::size_t idx = base + e * ax.inner;
                    dot += static_cast<double>(self.grad[idx]) * self.data[idx];
                }
                for (std::size_t e = 0; e < ax.extent; ++e) {
                    const std::size_t idx = base + e * ax.inner;
                    g[idx] += static_cast<real>(self.data[idx] * (self.grad[idx] - dot));
                }
            }
        }
    });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
    const Axes ax = split_axis(a.shape(), axis);
    auto in = a.data();
    std::vector<real> out(in.size());
    for (std::size_t o = 0; o < ax.outer; ++o) {
        for (std::size_t i = 0; i < ax.inner; ++i) {
            const std::size_t base = o * ax.extent * ax.inner + i;
            real mx = -std::numeric_limits<real>::infinity();
            for (std::size_t e = 0; e < ax.extent; ++e) mx = std::max(mx, in[base + e * ax.inner]);
            double z = 0.0;
            for (std::size_t e = 0; e < ax.extent; ++e) z += std::exp(static_cast<double>(in[base + e * ax.inner] - mx));
            const double lse = static_cast<double>(mx) + std::log(z);
            for (std::size_t e = 0; e < ax.extent; ++e)
                out[base + e * ax.inner] = static_cast<real>(in[base + e * ax.inner] - lse);
        }
    }
    return make_result(a.shape(), std::move(out), {a}, [ax](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t o = 0; o < ax.outer; ++o) {
            for (std::size_t i = 0; i < ax.inner; ++i) {
                const std::size_t base = o * ax.extent * ax.inner + i;
                double total = 0.0;
                for (std::size_t e = 0; e < ax.extent; ++e) total += self.grad[base + e * ax.inner];
                for (std::size_t e = 0; e < ax.extent; ++e) {
                    const std::size_t idx = base + e * ax.inner;
                    g[idx] += static_cast<real>(self.grad[idx] - std::exp(static_cast<double>(self.data[idx])) * total);
                }
            }
        }
    });
}

Tensor causal_mask(const Tensor& scores) {
    if (scores.rank() < 2 || scores.dim(scores.rank() - 1) != scores.dim(scores.rank() - 2))
        throw ShapeError("causal_mask: needs trailing square block, got " + shape_str(scores.shape()));
    const std::size_t t = scores.dim(scores.rank() - 1);
    const std::size_t blocks = scores.numel() / (t * t);
    std::vector<real> out(scores.data().begin(), scores.data().end());
    const real neg_inf = -std::numeric_limits<real>::infinity();
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = r + 1; c < t; ++c) out[b * t * t + r * t + c] = neg_inf;
    return make_result(scores.shape(), std::move(out), {scores}, [blocks, t](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t b = 0; b < blocks; ++b)
            for (std::size_t r = 0; r < t; ++r)
                for (std::size_t c = 0; c <= r; ++c) g[b * t * t + r * t + c] += self.grad[b * t * t + r * t + c];
    });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids, Shape index_shape) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be [V, D], got " + shape_str(table.shape()));
    if (shape_numel(index_shape) != ids.size())
        throw ShapeError("embedding: " + std::to_string(ids.size()) + " ids do not fill index shape " +
                         shape_str(index_shape));
    const std::size_t vocab = table.dim(0), width = table.dim(1);
    std::vector<TokenId> rows(ids.begin(), ids.end());
    for (auto id : rows) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw std::out_of_range("embedding: id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(vocab));
    }
    std::vector<real> out(rows.size() * width);
    auto tv = table.data();
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(rows[r]) * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(r * width));
    Shape out_shape = std::move(index_shape);
    out_shape.push_back(width);
    return make_result(std::move(out_shape), std::move(out), {table}, [rows = std::move(rows), width](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            real* dst = g.data() + static_cast<std::size_t>(rows[r]) * width;
            const real* src = self.grad.data() + r * width;
            for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
        }
    });
}

Tensor embedding_bag_mean(const Tensor& table, const std::vector<std::vector<TokenId>>& bags) {
    if (table.rank() != 2) throw ShapeError("embedding_bag_mean: table must be [V, D], got " + shape_str(table.shape()));
    if (bags.empty()) throw ShapeError("embedding_bag_mean: no bags");
    const std::size_t vocab = table.dim(0), width = table.dim(1);
    std::vector<double> acc(width);
    std::vector<real> out(bags.size() * width);
    auto tv = table.data();
    for (std::size_t b = 0; b < bags.size(); ++b) {
        if (bags[b].empty()) throw std::invalid_argument("embedding_bag_mean: empty bag at index " + std::to_string(b));
        std::fill(acc.begin(), acc.end(), 0.0);
        for (auto id : bags[b]) {
            if (id < 0 || static_cast<std::size_t>(id) >= vocab)
                throw std::out_of_range("embedding_bag_mean: id " + std::to_string(id) + " outside vocabulary of " +
                                        std::to_string(vocab));
            const real* row = tv.data() + static_cast<std::size_t>(id) * width;
            for (std::size_t j = 0; j < width; ++j) acc[j] += row[j];
        }
        const double inv = 1.0 / static_cast<double>(bags[b].size());
        for (std::size_t j = 0; j < width; ++j) out[b * width + j] = static_cast<real>(acc[j] * inv);
    }
    return make_result({bags.size(), width}, std::move(out), {table}, [bags, width](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t b = 0; b < bags.size(); ++b) {
            const real inv = real(1) / static_cast<real>(bags[b].size());
            const real* src = self.grad.data() + b * width;
            for (auto id : bags[b]) {
                real* dst = g.data() + static_cast<std::size_t>(id) * width;
                for (std::size_t j = 0; j < width; ++j) dst[j] += src[j] * inv;
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
    const std::size_t width = x.shape().back();
    if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) shape_mismatch("layer_norm", x.shape(), gain.shape());
    const std::size_t rows = x.numel() / width;
    auto in = x.data();
    auto gv = gain.data();
    auto bv = bias.data();
    std::vector<real> out(in.size());
    std::vector<real> normed(in.size());
    std::vector<real> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const real* row = in.data() + r * width;
        double mu = 0.0;
        for (std::size_t j = 0; j < width; ++j) mu += row[j];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(width);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = static_cast<real>(is);
        for (std::size_t j = 0; j < width; ++j) {
            const real n = static_cast<real>((row[j] - mu) * is);
            normed[r * width + j] = n;
            out[r * width + j] = n * gv[j] + bv[j];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [rows, width, normed = std::move(normed), inv_std = std::move(inv_std)](TensorNode& self) {
                           auto& px = parent(self, 0);
                           auto& pg = parent(self, 1);
                           auto& pb = parent(self, 2);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const real* dy = self.grad.data() + r * width;
                               const real* nh = normed.data() + r * width;
                               if (pg.requires_grad) {
                                   auto& g = pg.grad_buffer();
                                   for (std::size_t j = 0; j < width; ++j) g[j] += dy[j] * nh[j];
                               }
                               if (pb.requires_grad) {
                                   auto& g = pb.grad_buffer();
                                   for (std::size_t j = 0; j < width; ++j) g[j] += dy[j];
                               }
                               if (px.requires_grad) {
                                   double m1 = 0.0, m2 = 0.0;
                                   for (std::size_t j = 0; j < width; ++j) {
                                       const double dn = static_cast<double>(dy[j]) * pg.data[j];
                                       m1 += dn;
                                       m2 += dn * nh[j];
                                   }
                                   m1 /= static_cast<double>(width);
                                   m2 /= static_cast<double>(width);
                                   auto& g = px.grad_buffer();
                                   for (std::size_t j = 0; j < width; ++j) {
                                       const double dn = static_cast<double>(dy[j]) * pg.data[j];
                                       g[r * width + j] += static_cast<real>(inv_std[r] * (dn - m1 - nh[j] * m2));
                                   }
                               }
                           }
                       });
}

Tensor dropout(const Tensor& x, real rate, bool training, Rng& rng) {
    if (rate < real(0) || rate >= real(1)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    if (!training || rate == real(0)) return x;
    const real keep_scale = real(1) / (real(1) - rate);
    std::vector<real> mask(x.numel());
    for (auto& m : mask) m = rng.uniform() >= static_cast<double>(rate) ? keep_scale : real(0);
    std::vector<real> out(x.numel());
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
    return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](TensorNode& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets) {
    const std::size_t vocab = logits.shape().back();
    const std::size_t rows = logits.numel() / vocab;
    if (targets.size() != rows)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
    for (auto t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab)
            throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                                    std::to_string(vocab));
    }
    auto in = logits.data();
    std::vector<real> probs(in.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const real* row = in.data() + r * vocab;
        const real mx = *std::max_element(row, row + vocab);
        double z = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(row[j] - mx));
        const double lse = static_cast<double>(mx) + std::log(z);
        total += lse - row[targets[r]];
        for (std::size_t j = 0; j < vocab; ++j) probs[r * vocab + j] = static_cast<real>(std::exp(row[j] - lse));
    }
    const double loss = total / static_cast<double>(rows);
    std::vector<TokenId> tgt(targets.begin(), targets.end());
    return make_result({1}, {static_cast<real>(loss)}, {logits},
                       [rows, vocab, probs = std::move(probs), tgt = std::move(tgt)](TensorNode& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           auto& g = p.grad_buffer();
                           const real s = self.grad[0] / static_cast<real>(rows);
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t j = 0; j < vocab; ++j) g[r * vocab + j] += s * probs[r * vocab + j];
                               g[r * vocab + static_cast<std::size_t>(tgt[r])] -= s;
                           }
                       });
}

Tensor one_hot(std::span<const TokenId> ids, std::size_t k) {
    if (ids.empty() || k == 0) throw ShapeError("one_hot: empty input");
    Tensor out({ids.size(), k});
    auto d = out.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= k)
            throw std::out_of_range("one_hot: id " + std::to_string(ids[i]) + " outside " + std::to_string(k));
        d[i * k + static_cast<std::size_t>(ids[i])] = real(1);
    }
    return out;
}

}  // namespace codeforge::numeric
