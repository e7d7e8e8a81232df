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

#include "c2a/hypernet.hpp"

#include "c2a/errors.hpp"

namespace c2a {

void HyperConfig::validate() const {
    if (t == 0) throw ConfigError("hyper: t must be positive");
    if (factorized && s == 0) throw ConfigError("hyper: s must be positive");
    if (!factorized && tied) throw ConfigError("hyper: the unfactorized variant is untied");
}

void init_hyper_params(const ModelConfig& model, const HyperConfig& hyper, NamedTensors& params, rng::Engine& eng) {
    hyper.validate();
    const std::size_t d = model.d, r = model.r, t = hyper.t;
    if (hyper.factorized) {
        params[names::kFactorF] = rng::normal({d, hyper.s}, 0.02, eng);
        params[names::kFactorS] = rng::normal({hyper.s, r * t}, 0.02, eng);
    } else {
        params[names::kWeightU] = rng::normal({d * r, t}, 0.02, eng);
        params[names::kWeightD] = rng::normal({r * d, t}, 0.02, eng);
    }
}

Var compose_weight(Var factor_f, Var factor_s, bool normalize) {
    Var product = ops::matmul(factor_f, factor_s);
    return normalize ? ops::normalize(product, NormMode::Frobenius) : product;
}

namespace {

Var as_column(Var client_embedding, std::size_t t) {
    if (client_embedding.value().numel() != t) {
        throw ConfigError("hypernetwork expects a client embedding of size " + std::to_string(t) + ", got " +
                          shape_str(client_embedding.shape()));
    }
    return ops::reshape(client_embedding, Shape{t, 1});
}

}  // namespace

AdapterVars generate_adapter(Var client_embedding, Var composed, std::size_t d, std::size_t r, bool tied) {
    const Shape cs = composed.shape();
    if (cs.size() != 2 || cs[0] != d || cs[1] % r != 0) {
        throw ConfigError("generate_adapter: composed weight " + shape_str(cs) + " incompatible with d=" +
                          std::to_string(d) + ", r=" + std::to_string(r));
    }
    if (!tied) throw ConfigError("generate_adapter: the factorized generator is tied (D = U^T)");
    const std::size_t t = cs[1] / r;
    Var flat = ops::reshape(composed, Shape{d * r, t});
    Var up = ops::reshape(ops::matmul(flat, as_column(client_embedding, t)), Shape{d, r});
    return AdapterVars{ops::transpose(up), up};
}

AdapterVars generate_adapter_unfactorized(Var client_embedding, Var weight_u, Var weight_d, std::size_t d,
                                          std::size_t r) {
    const Shape us = weight_u.shape();
    const Shape ds = weight_d.shape();
    if (us.size() != 2 || ds.size() != 2 || us[0] != d * r || ds[0] != d * r || us[1] != ds[1]) {
        throw ConfigError("generate_adapter_unfactorized: W_U " + shape_str(us) + " / W_D " + shape_str(ds) +
                          " incompatible with d=" + std::to_string(d) + ", r=" + std::to_string(r));
    }
    Var column = as_column(client_embedding, us[1]);
    Var up = ops::reshape(ops::matmul(weight_u, column), Shape{d, r});
    Var down = ops::reshape(ops::matmul(weight_d, column), Shape{r, d});
    return AdapterVars{down, up};
}

HyperAdapterGenerator::HyperAdapterGenerator(ParamBinder& params, const ModelConfig& model, const HyperConfig& hyper,
                                             EmbedPhase phase, std::span<const std::size_t> labels)
    : params_(params), model_(model), hyper_(hyper) {
    hyper_.validate();
    embed_ = EmbedVars::bind(params, model.num_sites());
    if (hyper_.use_label) {
        Tape& tape = params.tape();
        Var rows = phase == EmbedPhase::Train ? tape.constant(one_hot(labels, model.num_classes))
                                              : tape.constant(inference_label_distribution(model.num_classes));
        label_embedding_ = c2a::label_embedding(rows, embed_.label_weight, embed_.label_bias);
    }
    if (hyper_.factorized) {
        composed_ = compose_weight(params(names::kFactorF), params(names::kFactorS), hyper_.normalize);
    } else {
        weight_u_ = params(names::kWeightU);
        weight_d_ = params(names::kWeightD);
    }
    generated_.adapters.resize(model.num_sites());
    generated_.client_embeddings.resize(model.num_sites());
}

AdapterVars HyperAdapterGenerator::generate(Var client_embedding) const {
    if (hyper_.factorized) return generate_adapter(client_embedding, composed_, model_.d, model_.r, hyper_.tied);
    return generate_adapter_unfactorized(client_embedding, weight_u_, weight_d_, model_.d, model_.r);
}

std::pair<AdapterVars, AdapterVars> HyperAdapterGenerator::for_block(std::size_t layer, Var block_input) {
    if (layer >= model_.n_layers) throw ContractError("hypernetwork: no block " + std::to_string(layer));
    if (!block_input.valid()) throw ContractError("hypernetwork: hidden state for block " + std::to_string(layer) + " missing");
    // Both sites of a block share the context embedding.
    Var ce;
    if (hyper_.use_context) ce = context_embedding(block_input, embed_.context_weight, embed_.context_bias);
    std::pair<AdapterVars, AdapterVars> out;
    for (auto pos : {SitePosition::PostAttention, SitePosition::PostFeedForward}) {
        const std::size_t site = SiteId{layer, pos}.index();
        Var client = compose_client_embedding(label_embedding_, ce, embed_, site);
        generated_.client_embeddings[site] = client;
        generated_.adapters[site] = generate(client);
        (pos == SitePosition::PostAttention ? out.first : out.second) = generated_.adapters[site];
    }
    return out;
}

AdapterProvider HyperAdapterGenerator::provider() {
    return [this](std::size_t layer, Var block_input) { return for_block(layer, block_input); };
}

GeneratedAdapterSet generate_all_sites(std::span<const Var> hiddens, ParamBinder& params, const ModelConfig& model,
                                       const HyperConfig& hyper, EmbedPhase phase,
                                       std::span<const std::size_t> labels) {
    if (hiddens.size() != model.n_layers) {
        throw ContractError("generate_all_sites: expected hidden states for " + std::to_string(model.n_layers) +
                            " blocks, got " + std::to_string(hiddens.size()));
    }
    HyperAdapterGenerator gen(params, model, hyper, phase, labels);
    for (std::size_t l = 0; l < model.n_layers; ++l) gen.for_block(l, hiddens[l]);
    return gen.generated();
}

std::size_t generator_param_count(const ModelConfig& model, const HyperConfig& hyper) {
    if (hyper.factorized) return model.d * hyper.s + hyper.s * model.r * hyper.t;
    return 2 * model.d * model.r * hyper.t;
}

}  // namespace c2a
