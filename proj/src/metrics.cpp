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

#include "c2a/metrics.hpp"

#include <cmath>

#include "c2a/errors.hpp"

namespace c2a {

double accuracy(const Tensor& logits, std::span<const std::size_t> labels) {
    if (logits.rank() != 2) throw DimensionError("accuracy: logits must be 2-D, got " + shape_str(logits.shape));
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n) {
        throw DimensionError("accuracy: " + std::to_string(n) + " rows but " + std::to_string(labels.size()) +
                             " labels");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        hits += best == labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

std::vector<double> centered(const Tensor& m) {
    const std::size_t n = m.dim(0), p = m.dim(1);
    std::vector<double> out(m.data);
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += out[i * p + j];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) out[i * p + j] -= mean;
    }
    return out;
}

// ||A^T B||_F^2 for row-major A [n x p] and B [n x q].
double cross_norm_sq(const std::vector<double>& a, std::size_t p, const std::vector<double>& b, std::size_t q,
                     std::size_t n) {
    double total = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += a[k * p + i] * b[k * q + j];
            total += s * s;
        }
    }
    return total;
}

}  // namespace

double linear_cka(const Tensor& x, const Tensor& y) {
    if (x.rank() != 2 || y.rank() != 2) {
        throw DimensionError("linear_cka: inputs must be 2-D, got " + shape_str(x.shape) + " and " + shape_str(y.shape));
    }
    const std::size_t n = x.dim(0), p = x.dim(1), q = y.dim(1);
    if (y.dim(0) != n) throw DimensionError("linear_cka: row counts differ");
    if (n < 2) throw DegenerateInputError("linear_cka: need at least two rows");
    const auto xc = centered(x);
    const auto yc = centered(y);
    const double xx = std::sqrt(cross_norm_sq(xc, p, xc, p, n));
    const double yy = std::sqrt(cross_norm_sq(yc, q, yc, q, n));
    if (xx == 0.0 || yy == 0.0) throw UndefinedSimilarityError("linear_cka: input has zero variance");
    return cross_norm_sq(yc, q, xc, p, n) / (xx * yy);
}

double drift_probe(const ModelState& local, const ModelState& global, const Dataset& probe, std::size_t batch_size) {
    return linear_cka(predict_logits(local, probe, batch_size), predict_logits(global, probe, batch_size));
}

std::optional<std::size_t> rounds_to_target(std::span<const double> trace, double target) {
    if (trace.empty()) throw ContractError("rounds_to_target: empty accuracy trace");
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace[i] >= target) return i + 1;
    }
    return std::nullopt;
}

double speedup(std::size_t baseline_rounds, std::size_t method_rounds) {
    if (method_rounds == 0) throw ContractError("speedup: method rounds must be positive");
    return static_cast<double>(baseline_rounds) / static_cast<double>(method_rounds);
}

std::string format_rounds(std::optional<std::size_t> rounds, std::size_t max_rounds) {
    return rounds ? std::to_string(*rounds) : std::to_string(max_rounds) + "↑";
}

std::size_t comm_cost(std::size_t trainable_scalars) { return trainable_scalars * kBytesPerScalar * 2; }

std::size_t comm_cost(const ModelState& state) { return comm_cost(count_trainable_params(state).trainable); }

std::size_t comm_cost(const ModelConfig& model, const HyperConfig& hyper) {
    auto eng = rng::engine(0, "comm_cost");
    return comm_cost(build_model(model, hyper, init_backbone(model, eng), 0));
}

}  // namespace c2a
