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

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "c2a/tensor.hpp"

namespace c2a {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while
/// the owning tape is alive.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }
    bool needs_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape. Operations append nodes in execution
/// order, so the node list is always topologically sorted; backward() walks
/// it once in reverse. A tape is single-use: call backward() at most once.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf owning a copy of `value`.
    Var leaf(Tensor value, bool requires_grad = false);
    /// Leaf that reads `value` in place. The tensor must outlive the tape.
    Var bind(const Tensor& value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    void backward(Var loss);
    bool backward_done() const { return backward_done_; }

    /// Accumulated gradient of `v`; zeros when nothing reached it.
    Tensor grad(Var v) const;

    /// Count of normalize() calls that hit the zero-norm pass-through.
    std::size_t zero_norm_events() const { return zero_norm_events_; }
    void note_zero_norm() { ++zero_norm_events_; }

    std::size_t size() const { return nodes_.size(); }

    // Building blocks for operations.
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
    const Tensor& value(std::size_t id) const;
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    /// Gradient buffer of node `id`, allocated on first use.
    std::vector<double>& grad_buffer(std::size_t id);
    const std::vector<double>& upstream(std::size_t id) const { return nodes_[id].grad; }
    std::size_t input(std::size_t self, std::size_t k) const { return nodes_[self].inputs[k]; }
    Var handle(std::size_t id) { return Var(this, id); }

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        std::vector<std::size_t> inputs;
        std::vector<double> grad;
        bool needs_grad = false;
        BackwardFn backward;

        const Tensor& value() const { return external ? *external : owned; }
    };

    std::deque<Node> nodes_;  // deque: value() references survive later pushes
    bool backward_done_ = false;
    std::size_t zero_norm_events_ = 0;
};

enum class PoolMode { Mean, Max };
enum class NormMode { L2Vector, Frobenius };

/// Threshold below which normalize() passes its input through unchanged.
inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kLayerNormEpsilon = 1e-5;

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// x[..., n] + bias[n]
Var add_bias(Var x, Var bias);
/// a[m x k] * b[k x n], or a * b^T when `transpose_b` (b is then n x k).
Var matmul(Var a, Var b, bool transpose_b = false);
/// Batched a[B x m x k] * b[B x k x n] (or b[B x n x k] when transposed).
Var batched_matmul(Var a, Var b, bool transpose_b = false);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var permute(Var a, std::span<const std::size_t> axes);
/// Rows of `table` (2-D) selected by `indices`.
Var gather_rows(Var table, std::span<const std::size_t> indices);
Var gelu(Var x);
Var softmax_last(Var x);
Var layer_norm(Var x, Var gain, Var bias);
Var pool(Var x, std::size_t axis, PoolMode mode);
Var normalize(Var x, NormMode mode);
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
Var sum(Var x);

}  // namespace ops

double gelu_value(double x);

}  // namespace c2a
