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
#include <span>
#include <string>
#include <vector>

#include "c2a/autodiff.hpp"
#include "c2a/model.hpp"
#include "c2a/rng.hpp"

namespace c2a {

// Client embeddings condition the hypernetwork on what a mini-batch looks
// like: its label distribution, pooled hidden-state context, and which
// adapter site is being generated.
//
// Stored in NamedTensors under these names:
//   client.W_L [C x t], client.b_L [t]       label projection
//   client.W_F [d x t], client.b_F [t]       context projection
//   client.layer<site> [t]                   one per adapter site
namespace names {
inline const std::string kLabelWeight = "client.W_L";
inline const std::string kLabelBias = "client.b_L";
inline const std::string kContextWeight = "client.W_F";
inline const std::string kContextBias = "client.b_F";
std::string layer_embedding(std::size_t site);
}  // namespace names

enum class EmbedPhase { Train, Inference };

struct EmbedVars {
    Var label_weight;
    Var label_bias;
    Var context_weight;
    Var context_bias;
    std::vector<Var> layer;  // indexed by site

    static EmbedVars bind(ParamBinder& params, std::size_t num_sites);
};

/// Adds W_L, W_F and layer embeddings ~ N(0, 0.02^2); zero biases.
void init_embed_params(std::size_t num_classes, std::size_t d, std::size_t t, std::size_t num_sites,
                       NamedTensors& params, rng::Engine& eng);

/// One-hot rows for `labels`, as a [B x C] tensor.
Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

/// The uniform (1/C, ..., 1/C) distribution used in place of batch labels
/// at inference time.
Tensor inference_label_distribution(std::size_t num_classes);

/// W_L^T avg(rows) + b_L. Rows must each be a probability distribution
/// (one-hot in training, uniform at inference).
Var label_embedding(Var label_rows, Var label_weight, Var label_bias);

/// Per example: mean over positions, l2-normalised; then max over the
/// batch and an affine map into R^t. `hidden` is [B x L x d].
Var context_embedding(Var hidden, Var context_weight, Var context_bias);

/// I = le + ce + layer[site]. Either of le / ce may be unset (ablations).
Var compose_client_embedding(Var le, Var ce, const EmbedVars& embed, std::size_t site);

}  // namespace c2a
