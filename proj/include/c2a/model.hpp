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
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "c2a/autodiff.hpp"
#include "c2a/data.hpp"
#include "c2a/rng.hpp"
#include "c2a/tensor.hpp"

namespace c2a {

enum class PeftMode { C2A, Adapter, LoRA, BitFit, Full };

std::string to_string(PeftMode mode);

/// Micro-transformer encoder classifier. Post-LN blocks (BERT layout) with
/// two adapter sites each: after self-attention and after the feed-forward.
struct ModelConfig {
    std::size_t vocab_size = 256;
    std::size_t max_seq_len = 16;
    std::size_t d = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t d_ff = 64;
    std::size_t r = 8;  // adapter bottleneck, also the LoRA rank
    std::size_t num_classes = 8;
    PeftMode peft_mode = PeftMode::C2A;

    void validate() const;
    std::size_t num_sites() const { return 2 * n_layers; }
};

enum class SitePosition : std::size_t { PostAttention = 0, PostFeedForward = 1 };

struct SiteId {
    std::size_t layer = 0;
    SitePosition position = SitePosition::PostAttention;

    std::size_t index() const { return 2 * layer + static_cast<std::size_t>(position); }
    static SiteId from_index(std::size_t index) { return {index / 2, static_cast<SitePosition>(index % 2)}; }
    bool operator==(const SiteId&) const = default;
};

/// Value-level adapter weights: D is r x d, U is d x r.
struct AdapterParams {
    Tensor down;
    Tensor up;
    SiteId site;
};

/// Adapter weights recorded on a tape.
struct AdapterVars {
    Var down;
    Var up;
};

/// A^l(x) = U GeLU(D x) + x applied along the last axis of `x`.
Var apply_adapter(Var x, const AdapterVars& adapter);
Tensor apply_adapter(const Tensor& x, const AdapterParams& adapter);

// Parameter naming. Backbone tensors are addressed by these names in every
// NamedTensors map (checkpoints, federation snapshots, optimizer state).
namespace names {
std::string block(std::size_t layer, const std::string& leaf);
std::string adapter_down(std::size_t site);
std::string adapter_up(std::size_t site);
std::string lora(std::size_t layer, char proj, char factor);  // proj in {q,v}, factor in {a,b}
inline const std::string kHeadWeight = "head.weight";
inline const std::string kHeadBias = "head.bias";
bool is_bias(const std::string& name);
bool is_head(const std::string& name);
}  // namespace names

/// Binds named tensors onto a tape on first use. Trainable tensors become
/// gradient-carrying leaves; frozen ones are constants read in place.
class ParamBinder {
public:
    /// With `track_gradients` false every tensor is bound as a constant.
    ParamBinder(Tape& tape, const NamedTensors& trainable, const NamedTensors* frozen = nullptr,
                bool track_gradients = true);

    Var operator()(const std::string& name);
    bool contains(const std::string& name) const;
    Tape& tape() { return tape_; }

    /// Gradient for every trainable tensor (zeros if it never influenced the loss).
    NamedTensors gradients() const;

private:
    Tape& tape_;
    const NamedTensors& trainable_;
    const NamedTensors* frozen_;
    bool track_gradients_;
    std::map<std::string, Var> bound_;
};

/// Supplies the two adapters of block `layer` given the hidden state
/// entering that block ([B x L x d]). Called once per block, in order.
using AdapterProvider = std::function<std::pair<AdapterVars, AdapterVars>(std::size_t layer, Var block_input)>;

struct ForwardOutput {
    Var logits;                 // [B x C]
    std::vector<Var> hiddens;   // per block, the [B x L x d] state entering it
    Var final_hidden;           // [(B*L) x d]
};

/// Full encoder forward. `adapters` must be set in C2A and Adapter modes;
/// LoRA factors are read from the binder in LoRA mode. With `classify`
/// false the head is skipped and `logits` stays unset.
ForwardOutput forward(ParamBinder& params, const ModelConfig& cfg, const Batch& batch,
                      const AdapterProvider* adapters = nullptr, bool classify = true);

/// Provider that serves directly trained adapters (vanilla Adapter mode).
AdapterProvider direct_adapters(ParamBinder& params);

/// Randomly initialised backbone without classifier head.
NamedTensors init_backbone(const ModelConfig& cfg, rng::Engine& eng);
/// Adds head.weight ~ N(0, 0.02^2) and a zero head.bias.
void init_head(const ModelConfig& cfg, NamedTensors& params, rng::Engine& eng);
/// Adds per-site adapters: D ~ N(0, 0.02^2), U = 0.
void add_adapters(const ModelConfig& cfg, NamedTensors& params, rng::Engine& eng);
/// Adds rank-r factors on the query and value projections: A ~ N(0, 0.02^2), B = 0.
void apply_lora(const ModelConfig& cfg, NamedTensors& params, rng::Engine& eng);

std::set<std::string> lora_trainable_set(const ModelConfig& cfg, const NamedTensors& params);
std::set<std::string> bitfit_trainable_set(const ModelConfig& cfg, const NamedTensors& params);
std::set<std::string> full_trainable_set(const ModelConfig& cfg, const NamedTensors& params);

/// Trainable names for the config's mode. C2A / Adapter: the head plus
/// every name outside the backbone; BitFit: biases plus head; etc.
std::set<std::string> trainable_set(const ModelConfig& cfg, const NamedTensors& params);

struct ParamCount {
    std::size_t trainable = 0;
    std::size_t total = 0;
    double percent() const { return total ? 100.0 * static_cast<double>(trainable) / static_cast<double>(total) : 0.0; }
};

ParamCount count_trainable_params(const NamedTensors& trainable, const NamedTensors& frozen);

struct PretrainOptions {
    std::size_t steps = 300;
    std::size_t batch_size = 32;
    double lr = 3e-3;
    double mask_rate = 0.15;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    NamedTensors backbone;          // frozen, no head
    double final_loss = 0.0;
    double masked_accuracy = 0.0;   // on a held-out tenth of the corpus
    double majority_accuracy = 0.0; // always-predict-most-frequent-token baseline on the same masks
};

/// Masked-token pretraining standing in for a pretrained language model.
PretrainResult pretrain_backbone(const Dataset& corpus, const ModelConfig& cfg, const PretrainOptions& opts);

}  // namespace c2a
