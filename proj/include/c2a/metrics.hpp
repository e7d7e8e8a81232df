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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2a/data.hpp"
#include "c2a/network.hpp"
#include "c2a/tensor.hpp"

namespace c2a {

/// Fraction of rows whose argmax equals the label. Ties go to the lowest
/// class index.
double accuracy(const Tensor& logits, std::span<const std::size_t> labels);

/// Linear CKA between two [n x p] / [n x q] matrices with the same rows:
/// ||Y~^T X~||_F^2 / (||X~^T X~||_F ||Y~^T Y~||_F), columns centered.
/// Throws UndefinedSimilarityError if either input has zero variance.
double linear_cka(const Tensor& x, const Tensor& y);

/// Linear CKA of the two models' inference-mode logits on `probe`.
/// Identical parameters give exactly 1.
double drift_probe(const ModelState& local, const ModelState& global, const Dataset& probe,
                   std::size_t batch_size = 64);

/// First round (1-indexed) whose accuracy reaches `target`. The trace holds
/// the accuracy after each round, round 1 first.
std::optional<std::size_t> rounds_to_target(std::span<const double> trace, double target);

/// baseline_rounds / method_rounds.
double speedup(std::size_t baseline_rounds, std::size_t method_rounds);

/// Rounds for a table cell: the number, or "R↑" when the target was not
/// reached within `max_rounds`.
std::string format_rounds(std::optional<std::size_t> rounds, std::size_t max_rounds);

inline constexpr std::size_t kBytesPerScalar = 8;

/// Bytes one client exchanges per round: every trainable scalar travels down
/// and back up.
std::size_t comm_cost(std::size_t trainable_scalars);
std::size_t comm_cost(const ModelState& state);

/// Same, from configuration alone (builds a throwaway model).
std::size_t comm_cost(const ModelConfig& model, const HyperConfig& hyper);

}  // namespace c2a
