/*
 * Copyright 2026 The C2A Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "c2a/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "c2a/errors.hpp"

namespace c2a {

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::needs_grad() const { return tape_->needs_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::bind(const Tensor& value, bool requires_grad) {
    Node n;
    n.external = &value;
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                               [this](std::size_t i) { return nodes_[i].needs_grad; });
    if (n.needs_grad) n.backward = std::move(fn);
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const { return nodes_[id].value(); }

std::vector<double>& Tape::grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value().numel(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw ContractError("backward: loss is not recorded on this tape");
    if (backward_done_) throw ContractError("backward: tape already consumed; create a new tape");
    if (value(loss.id()).numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(value(loss.id()).shape));
    }
    backward_done_ = true;
    if (!nodes_[loss.id()].needs_grad) return;
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
        n.backward(*this, i);
    }
}

Tensor Tape::grad(Var v) const {
    const auto& n = nodes_[v.id()];
    Tensor g(n.value().shape);
    if (!n.grad.empty()) g.data = n.grad;
    return g;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

namespace ops {
namespace {

Tape& common_tape(const Var& a, const Var& b) {
    if (!a.valid() || !b.valid()) throw ContractError("operation on an unbound variable");
    if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
    return *a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
}

// The kernels below give every output row the same summation order, so a
// row's result does not depend on where it sits in the batch.

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B, double* C) {
    std::size_t i = 0;
    // Four rows at a time share each load of B; every element still sums
    // over p in the same order as the single-row tail.
    for (; i + 4 <= m; i += 4) {
        double* c0 = C + i * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        const double* a = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double a0 = a[p], a1 = a[k + p], a2 = a[2 * k + p], a3 = a[3 * k + p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double bj = b[j];
                c0[j] += a0 * bj;
                c1[j] += a1 * bj;
                c2[j] += a2 * bj;
                c3[j] += a3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        double* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B, double* C) {
    thread_local std::vector<double> bt;
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = B[j * k + p];
    gemm_nn(m, n, k, A, bt.data(), C);
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B, double* C) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* b = B + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = A[p * m + i];
            double* c = C + i * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

struct Strided {
    std::size_t outer = 1, extent = 1, inner = 1;
};

Strided split_axis(const Shape& s, std::size_t axis) {
    Strided r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace

Var add(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("add", av, bv);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
    return t.record(std::move(out), {a.id(), b.id()}, [](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        for (std::size_t k = 0; k < 2; ++k) {
            const std::size_t in = tp.input(self, k);
            if (!tp.needs_grad(in)) continue;
            auto& gi = tp.grad_buffer(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("sub", av, bv);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] - bv.data[i];
    return t.record(std::move(out), {a.id(), b.id()}, [](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        for (std::size_t k = 0; k < 2; ++k) {
            const std::size_t in = tp.input(self, k);
            if (!tp.needs_grad(in)) continue;
            const double sign = k == 0 ? 1.0 : -1.0;
            auto& gi = tp.grad_buffer(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += sign * g[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("mul", av, bv);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * bv.data[i];
    return t.record(std::move(out), {a.id(), b.id()}, [](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const std::size_t ia = tp.input(self, 0), ib = tp.input(self, 1);
        const auto& av = tp.value(ia).data;
        const auto& bv = tp.value(ib).data;
        if (tp.needs_grad(ia)) {
            auto& ga = tp.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp.needs_grad(ib)) {
            auto& gb = tp.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double factor) {
    Tape& t = *a.tape();
    Tensor out = a.value();
    out.requires_grad = false;
    for (auto& v : out.data) v *= factor;
    return t.record(std::move(out), {a.id()}, [factor](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += factor * g[i];
    });
}

Var add_bias(Var x, Var bias) {
    Tape& t = common_tape(x, bias);
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    const std::size_t n = bv.numel();
    if (bv.rank() != 1 || xv.shape.back() != n) {
        throw DimensionError("add_bias: cannot broadcast " + shape_str(bv.shape) + " over " + shape_str(xv.shape));
    }
    Tensor out(xv.shape);
    const std::size_t rows = xv.numel() / n;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out.data[r * n + j] = xv.data[r * n + j] + bv.data[j];
    return t.record(std::move(out), {x.id(), bias.id()}, [rows, n](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const std::size_t ix = tp.input(self, 0), ib = tp.input(self, 1);
        if (tp.needs_grad(ix)) {
            auto& gx = tp.grad_buffer(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (tp.needs_grad(ib)) {
            auto& gb = tp.grad_buffer(ib);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
    });
}

Var matmul(Var a, Var b, bool transpose_b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2) {
        throw DimensionError("matmul expects matrices, got " + shape_str(av.shape) + " and " + shape_str(bv.shape));
    }
    const std::size_t m = av.shape[0], k = av.shape[1];
    const std::size_t bk = transpose_b ? bv.shape[1] : bv.shape[0];
    const std::size_t n = transpose_b ? bv.shape[0] : bv.shape[1];
    if (k != bk) {
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(av.shape) + (transpose_b ? " * T" : " * ") +
                             shape_str(bv.shape));
    }
    Tensor out(Shape{m, n});
    if (transpose_b)
        gemm_nt(m, n, k, av.data.data(), bv.data.data(), out.data.data());
    else
        gemm_nn(m, n, k, av.data.data(), bv.data.data(), out.data.data());
    return t.record(std::move(out), {a.id(), b.id()}, [m, n, k, transpose_b](Tape& tp, std::size_t self) {
        const double* g = tp.upstream(self).data();
        const std::size_t ia = tp.input(self, 0), ib = tp.input(self, 1);
        const double* A = tp.value(ia).data.data();
        const double* B = tp.value(ib).data.data();
        if (tp.needs_grad(ia)) {
            double* gA = tp.grad_buffer(ia).data();
            if (transpose_b)
                gemm_nn(m, k, n, g, B, gA);  // G * B
            else
                gemm_nt(m, k, n, g, B, gA);  // G * B^T
        }
        if (tp.needs_grad(ib)) {
            double* gB = tp.grad_buffer(ib).data();
            if (transpose_b)
                gemm_tn(n, k, m, g, A, gB);  // G^T * A
            else
                gemm_tn(k, n, m, A, g, gB);  // A^T * G
        }
    });
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 3 || bv.rank() != 3 || av.shape[0] != bv.shape[0]) {
        throw DimensionError("batched_matmul expects matching 3-D operands, got " + shape_str(av.shape) + " and " +
                             shape_str(bv.shape));
    }
    const std::size_t batch = av.shape[0], m = av.shape[1], k = av.shape[2];
    const std::size_t bk = transpose_b ? bv.shape[2] : bv.shape[1];
    const std::size_t n = transpose_b ? bv.shape[1] : bv.shape[2];
    if (k != bk) {
        throw DimensionError("batched_matmul inner dimensions disagree: " + shape_str(av.shape) + " and " +
                             shape_str(bv.shape));
    }
    Tensor out(Shape{batch, m, n});
    for (std::size_t s = 0; s < batch; ++s) {
        const double* A = av.data.data() + s * m * k;
        const double* B = bv.data.data() + s * k * n;
        double* C = out.data.data() + s * m * n;
        if (transpose_b)
            gemm_nt(m, n, k, A, B, C);
        else
            gemm_nn(m, n, k, A, B, C);
    }
    return t.record(std::move(out), {a.id(), b.id()}, [batch, m, n, k, transpose_b](Tape& tp, std::size_t self) {
        const std::size_t ia = tp.input(self, 0), ib = tp.input(self, 1);
        const bool ga_needed = tp.needs_grad(ia), gb_needed = tp.needs_grad(ib);
        double* gA = ga_needed ? tp.grad_buffer(ia).data() : nullptr;
        double* gB = gb_needed ? tp.grad_buffer(ib).data() : nullptr;
        const double* G = tp.upstream(self).data();
        const double* A = tp.value(ia).data.data();
        const double* B = tp.value(ib).data.data();
        for (std::size_t s = 0; s < batch; ++s) {
            const double* g = G + s * m * n;
            const double* As = A + s * m * k;
            const double* Bs = B + s * k * n;
            if (gA) {
                if (transpose_b)
                    gemm_nn(m, k, n, g, Bs, gA + s * m * k);
                else
                    gemm_nt(m, k, n, g, Bs, gA + s * m * k);
            }
            if (gB) {
                if (transpose_b)
                    gemm_tn(n, k, m, g, As, gB + s * k * n);
                else
                    gemm_tn(k, n, m, As, g, gB + s * k * n);
            }
        }
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    if (av.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_str(av.shape));
    const std::size_t rows = av.shape[0], cols = av.shape[1];
    return t.record(transpose2d(av), {a.id()}, [rows, cols](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gi[r * cols + c] += g[c * rows + r];
    });
}

Var reshape(Var a, Shape shape) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    if (shape_numel(shape) != av.numel()) {
        throw DimensionError("reshape " + shape_str(av.shape) + " -> " + shape_str(shape) + " changes element count");
    }
    Tensor out(std::move(shape), av.data);
    return t.record(std::move(out), {a.id()}, [](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    });
}

Var permute(Var a, std::span<const std::size_t> axes) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    const std::size_t rank = av.rank();
    if (axes.size() != rank) throw DimensionError("permute: axis count does not match rank of " + shape_str(av.shape));
    std::vector<bool> seen(rank, false);
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (axes[i] >= rank || seen[axes[i]]) throw DimensionError("permute: invalid axis order");
        seen[axes[i]] = true;
        out_shape[i] = av.shape[axes[i]];
    }
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * av.shape[i];

    // source[j] = input offset of output element j
    auto source = std::make_shared<std::vector<std::size_t>>(av.numel());
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t j = 0; j < av.numel(); ++j) {
        (*source)[j] = off;
        for (std::size_t d = rank; d-- > 0;) {
            const std::size_t stride = in_strides[axes[d]];
            if (++idx[d] < out_shape[d]) {
                off += stride;
                break;
            }
            off -= (out_shape[d] - 1) * stride;
            idx[d] = 0;
        }
    }
    Tensor out(out_shape);
    for (std::size_t j = 0; j < out.numel(); ++j) out.data[j] = av.data[(*source)[j]];
    return t.record(std::move(out), {a.id()}, [source](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t j = 0; j < g.size(); ++j) gi[(*source)[j]] += g[j];
    });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
    Tape& t = *table.tape();
    const Tensor& tv = table.value();
    if (tv.rank() != 2) throw DimensionError("gather_rows expects a matrix table, got " + shape_str(tv.shape));
    if (indices.empty()) throw DegenerateInputError("gather_rows: empty index list");
    const std::size_t rows = tv.shape[0], width = tv.shape[1];
    auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
    Tensor out(Shape{idx->size(), width});
    for (std::size_t i = 0; i < idx->size(); ++i) {
        const std::size_t r = (*idx)[i];
        if (r >= rows) {
            throw IndexError("gather_rows: index " + std::to_string(r) + " out of range for " + std::to_string(rows) +
                             " rows");
        }
        std::copy_n(tv.data.begin() + r * width, width, out.data.begin() + i * width);
    }
    return t.record(std::move(out), {table.id()}, [idx, width](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const std::size_t r = (*idx)[i];
            for (std::size_t c = 0; c < width; ++c) gi[r * width + c] += g[i * width + c];
        }
    });
}

Var gelu(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.value();
    Tensor out(xv.shape);
    if (!x.needs_grad()) {
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = gelu_value(xv.data[i]);
        return t.record(std::move(out), {x.id()}, nullptr);
    }
    // Forward also keeps the derivative, so erf is evaluated once per element.
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    auto slope = std::make_shared<std::vector<double>>(xv.numel());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double v = xv.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        out.data[i] = v * cdf;
        (*slope)[i] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    }
    return t.record(std::move(out), {x.id()}, [slope](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * (*slope)[i];
    });
}

Var softmax_last(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.value();
    const std::size_t n = xv.shape.back();
    const std::size_t rows = xv.numel() / n;
    Tensor out(xv.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data.data() + r * n;
        double* o = out.data.data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= s;
    }
    return t.record(std::move(out), {x.id()}, [rows, n](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const auto& y = tp.value(self).data;
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
            for (std::size_t j = 0; j < n; ++j) gi[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias) {
    Tape& t = common_tape(x, gain);
    common_tape(x, bias);
    const Tensor& xv = x.value();
    const std::size_t d = xv.shape.back();
    if (d < 2) throw DegenerateInputError("layer_norm needs a last axis of at least 2, got " + shape_str(xv.shape));
    if (gain.value().shape != Shape{d} || bias.value().shape != Shape{d}) {
        throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                             shape_str(gain.value().shape) + " and " + shape_str(bias.value().shape));
    }
    const std::size_t rows = xv.numel() / d;
    const auto& gv = gain.value().data;
    const auto& bv = bias.value().data;
    auto xhat = std::make_shared<std::vector<double>>(xv.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    Tensor out(xv.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data.data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += in[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        (*inv_std)[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (in[j] - mean) * inv;
            (*xhat)[r * d + j] = h;
            out.data[r * d + j] = gv[j] * h + bv[j];
        }
    }
    return t.record(std::move(out), {x.id(), gain.id(), bias.id()}, [rows, d, xhat, inv_std](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const std::size_t ix = tp.input(self, 0), ig = tp.input(self, 1), ib = tp.input(self, 2);
        const auto& gv = tp.value(ig).data;
        if (tp.needs_grad(ig)) {
            auto& gg = tp.grad_buffer(ig);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
        }
        if (tp.needs_grad(ib)) {
            auto& gb = tp.grad_buffer(ib);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (tp.needs_grad(ix)) {
            auto& gx = tp.grad_buffer(ix);
            const double dd = static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                double sum_gh = 0.0, sum_gh_x = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double gh = g[r * d + j] * gv[j];
                    sum_gh += gh;
                    sum_gh_x += gh * (*xhat)[r * d + j];
                }
                const double inv = (*inv_std)[r];
                for (std::size_t j = 0; j < d; ++j) {
                    const double gh = g[r * d + j] * gv[j];
                    gx[r * d + j] += inv / dd * (dd * gh - sum_gh - (*xhat)[r * d + j] * sum_gh_x);
                }
            }
        }
    });
}

Var pool(Var x, std::size_t axis, PoolMode mode) {
    Tape& t = *x.tape();
    const Tensor& xv = x.value();
    if (axis >= xv.rank()) {
        throw DimensionError("pool: axis " + std::to_string(axis) + " invalid for " + shape_str(xv.shape));
    }
    const Strided s = split_axis(xv.shape, axis);
    if (s.extent == 0) throw DegenerateInputError("pool: empty axis");
    Shape out_shape;
    for (std::size_t i = 0; i < xv.rank(); ++i)
        if (i != axis) out_shape.push_back(xv.shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor out(out_shape);
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    if (mode == PoolMode::Mean) {
        const double inv = 1.0 / static_cast<double>(s.extent);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i)
                    out.data[o * s.inner + i] += xv.data[(o * s.extent + e) * s.inner + i] * inv;
    } else {
        argmax->assign(out.numel(), 0);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                std::size_t best = 0;
                double best_v = xv.data[(o * s.extent) * s.inner + i];
                for (std::size_t e = 1; e < s.extent; ++e) {
                    const double v = xv.data[(o * s.extent + e) * s.inner + i];
                    if (v > best_v) {  // strict: ties keep the lowest index
                        best_v = v;
                        best = e;
                    }
                }
                out.data[o * s.inner + i] = best_v;
                (*argmax)[o * s.inner + i] = best;
            }
    }
    return t.record(std::move(out), {x.id()}, [s, mode, argmax](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        if (mode == PoolMode::Mean) {
            const double inv = 1.0 / static_cast<double>(s.extent);
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t e = 0; e < s.extent; ++e)
                    for (std::size_t i = 0; i < s.inner; ++i)
                        gi[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i] * inv;
        } else {
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t e = (*argmax)[o * s.inner + i];
                    gi[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
                }
        }
    });
}

Var normalize(Var x, NormMode mode) {
    Tape& t = *x.tape();
    const Tensor& xv = x.value();
    const std::size_t n = mode == NormMode::Frobenius ? xv.numel() : xv.shape.back();
    const std::size_t rows = xv.numel() / n;
    // norms[r] == 0 marks a pass-through row
    auto norms = std::make_shared<std::vector<double>>(rows, 0.0);
    Tensor out(xv.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data.data() + r * n;
        double ss = 0.0;
        for (std::size_t j = 0; j < n; ++j) ss += in[j] * in[j];
        const double norm = std::sqrt(ss);
        if (norm <= kNormEpsilon) {
            t.note_zero_norm();
            std::copy_n(in, n, out.data.data() + r * n);
            continue;
        }
        (*norms)[r] = norm;
        for (std::size_t j = 0; j < n; ++j) out.data[r * n + j] = in[j] / norm;
    }
    return t.record(std::move(out), {x.id()}, [rows, n, norms](Tape& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        const auto& y = tp.value(self).data;
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t r = 0; r < rows; ++r) {
            const double norm = (*norms)[r];
            if (norm == 0.0) {
                for (std::size_t j = 0; j < n; ++j) gi[r * n + j] += g[r * n + j];
                continue;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
            for (std::size_t j = 0; j < n; ++j) gi[r * n + j] += (g[r * n + j] - y[r * n + j] * dot) / norm;
        }
    });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
    Tape& t = *logits.tape();
    const Tensor& lv = logits.value();
    if (lv.rank() != 2) throw DimensionError("softmax_cross_entropy expects [B x C] logits, got " + shape_str(lv.shape));
    const std::size_t batch = lv.shape[0], classes = lv.shape[1];
    if (labels.size() != batch) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(batch));
    }
    auto probs = std::make_shared<std::vector<double>>(lv.numel());
    auto lab = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        if ((*lab)[b] >= classes) {
            throw IndexError("label " + std::to_string((*lab)[b]) + " out of range for " + std::to_string(classes) +
                             " classes");
        }
        const double* row = lv.data.data() + b * classes;
        const double mx = *std::max_element(row, row + classes);
        double s = 0.0;
        for (std::size_t c = 0; c < classes; ++c) s += std::exp(row[c] - mx);
        const double log_z = mx + std::log(s);
        for (std::size_t c = 0; c < classes; ++c) (*probs)[b * classes + c] = std::exp(row[c] - log_z);
        loss += log_z - row[(*lab)[b]];
    }
    loss /= static_cast<double>(batch);
    return t.record(Tensor::scalar(loss), {logits.id()}, [batch, classes, probs, lab](Tape& tp, std::size_t self) {
        const double g = tp.upstream(self)[0] / static_cast<double>(batch);
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < classes; ++c) {
                const double target = c == (*lab)[b] ? 1.0 : 0.0;
                gi[b * classes + c] += g * ((*probs)[b * classes + c] - target);
            }
    });
}

Var sum(Var x) {
    Tape& t = *x.tape();
    double s = 0.0;
    for (double v : x.value().data) s += v;
    return t.record(Tensor::scalar(s), {x.id()}, [](Tape& tp, std::size_t self) {
        const double g = tp.upstream(self)[0];
        auto& gi = tp.grad_buffer(tp.input(self, 0));
        for (auto& v : gi) v += g;
    });
}

}  // namespace ops
}  // namespace c2a
