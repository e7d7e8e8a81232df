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

#include "c2a/autodiff.hpp"
#include "c2a/client_embedding.hpp"
#include "c2a/model.hpp"

namespace c2a {

/// Client-conditional hypernetwork settings.
///
/// Factorized (default): U = reshape(sigma(F_U S_U), d x r x t) . I, where
/// sigma divides by the Frobenius norm, F_U is [d x s] and S_U is
/// [s x (r*t)]. The composed matrix is read row-major with d outermost,
/// r in the middle and t innermost; checkpoints depend on this layout.
/// Tied mode sets D = U^T.
///
/// Unfactorized: U = reshape(W_U I, d x r), D = reshape(W_D I, r x d) with
/// W_U [(d*r) x t] and W_D [(r*d) x t], untied.
struct HyperConfig {
    std::size_t t = 8;   // client-embedding size
    std::size_t s = 8;   // latent factor
    bool factorized = true;
    bool tied = true;
    bool normalize = true;    // Frobenius normalisation of F_U S_U
    bool use_label = true;    // label embedding term of I
    bool use_context = true;  // context embedding term of I

    void validate() const;
};

namespace names {
inline const std::string kFactorF = "hyper.F_U";
inline const std::string kFactorS = "hyper.S_U";
inline const std::string kWeightU = "hyper.W_U";
inline const std::string kWeightD = "hyper.W_D";
}  // namespace names

/// Adds hypernetwork weights ~ N(0, 0.02^2) for the configured variant.
void init_hyper_params(const ModelConfig& model, const HyperConfig& hyper, NamedTensors& params, rng::Engine& eng);

/// sigma(F_U S_U) (or the raw product when `normalize` is false): [d x (r*t)].
Var compose_weight(Var factor_f, Var factor_s, bool normalize = true);

/// Factorized generation from a composed [d x (r*t)] weight.
AdapterVars generate_adapter(Var client_embedding, Var composed, std::size_t d, std::size_t r, bool tied);

/// Unfactorized generation from W_U and W_D.
AdapterVars generate_adapter_unfactorized(Var client_embedding, Var weight_u, Var weight_d, std::size_t d,
                                          std::size_t r);

/// Adapters produced for one mini-batch, indexed by site.
struct GeneratedAdapterSet {
    std::vector<AdapterVars> adapters;
    std::vector<Var> client_embeddings;
};

/// Generates adapters for every site. It is called block by block during
/// the forward pass, because each block's context embedding depends on the
/// adapters of the blocks below it.
class HyperAdapterGenerator {
public:
    /// `labels` supplies the batch labels in Train phase; ignored at Inference.
    HyperAdapterGenerator(ParamBinder& params, const ModelConfig& model, const HyperConfig& hyper, EmbedPhase phase,
                          std::span<const std::size_t> labels);

    /// Adapters for both sites of `layer`, given the [B x L x d] hidden
    /// state entering that block.
    std::pair<AdapterVars, AdapterVars> for_block(std::size_t layer, Var block_input);

    AdapterProvider provider();

    const GeneratedAdapterSet& generated() const { return generated_; }
    Var label_embedding() const { return label_embedding_; }
    Var composed_weight() const { return composed_; }

private:
    AdapterVars generate(Var client_embedding) const;

    ParamBinder& params_;
    ModelConfig model_;
    HyperConfig hyper_;
    EmbedVars embed_;
    Var label_embedding_;
    Var composed_;
    Var weight_u_, weight_d_;
    GeneratedAdapterSet generated_;
};

/// Generates adapters for all sites from hidden states already computed
/// (one [B x L x d] tensor per block). Matches what the forward pass
/// generated when given the hiddens it returned.
GeneratedAdapterSet generate_all_sites(std::span<const Var> hiddens, ParamBinder& params, const ModelConfig& model,
                                       const HyperConfig& hyper, EmbedPhase phase,
                                       std::span<const std::size_t> labels);

/// Trainable scalars of the generator alone: d*s + s*r*t when factorized,
/// 2*d*r*t otherwise. Independent of the number of layers.
std::size_t generator_param_count(const ModelConfig& model, const HyperConfig& hyper);

}  // namespace c2a
