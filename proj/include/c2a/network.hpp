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

#include <memory>
#include <span>
#include <string>

#include "c2a/data.hpp"
#include "c2a/hypernet.hpp"
#include "c2a/model.hpp"
#include "c2a/optim.hpp"

namespace c2a {

/// Fine-tuning methods the simulator can run. The c2a_* variants are the
/// ablations: without label embedding, without context embedding, without
/// Frobenius normalisation, and the unfactorized untied hypernetwork.
enum class Method { C2A, C2AUnfactorized, C2ANoLE, C2ANoCE, C2ANoNorm, Adapter, LoRA, BitFit, Full };

std::string to_string(Method method);
Method parse_method(const std::string& name);
PeftMode peft_mode_of(Method method);
bool is_c2a(Method method);
/// `base` with the ablation flags of `method` applied.
HyperConfig hyper_config_for(Method method, HyperConfig base);

/// A classifier ready for federated training: a shared read-only backbone
/// and the trainable tensors that are exchanged with the server.
struct ModelState {
    ModelConfig model;
    HyperConfig hyper;
    std::shared_ptr<const NamedTensors> frozen;
    NamedTensors trainable;
};

/// Adds the head and the method's extra tensors to a pretrained backbone,
/// then splits everything into frozen and trainable sets.
ModelState build_model(const ModelConfig& model, const HyperConfig& hyper, const NamedTensors& backbone,
                       std::uint64_t init_seed);

/// Forward pass in any mode. C2A models generate their adapters on the fly;
/// pass `generated` to inspect them.
ForwardOutput model_forward(ParamBinder& params, const ModelState& state, const Batch& batch, EmbedPhase phase,
                            GeneratedAdapterSet* generated = nullptr);

/// One AdamW step on a mini-batch; returns the loss before the update.
/// Throws PoisonedGradientError on non-finite gradients.
double train_step(ModelState& state, AdamW& optimizer, const Batch& batch);

/// Inference-mode logits [N x C] for the examples of `data`, in order,
/// evaluated `batch_size` at a time.
Tensor predict_logits(const ModelState& state, const Dataset& data, std::size_t batch_size);

double evaluate_accuracy(const ModelState& state, const Dataset& data, std::size_t batch_size);

ParamCount count_trainable_params(const ModelState& state);

}  // namespace c2a
