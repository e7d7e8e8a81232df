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

#include "c2a/network.hpp"

#include <algorithm>
#include <numeric>

#include "c2a/errors.hpp"
#include "c2a/metrics.hpp"

namespace c2a {

std::string to_string(Method method) {
    switch (method) {
        case Method::C2A: return "c2a";
        case Method::C2AUnfactorized: return "c2a_unfactorized";
        case Method::C2ANoLE: return "c2a_no_le";
        case Method::C2ANoCE: return "c2a_no_ce";
        case Method::C2ANoNorm: return "c2a_no_norm";
        case Method::Adapter: return "adapter";
        case Method::LoRA: return "lora";
        case Method::BitFit: return "bitfit";
        case Method::Full: return "full";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    for (auto m : {Method::C2A, Method::C2AUnfactorized, Method::C2ANoLE, Method::C2ANoCE, Method::C2ANoNorm,
                   Method::Adapter, Method::LoRA, Method::BitFit, Method::Full}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("method: unknown method '" + name + "'");
}

bool is_c2a(Method method) { return peft_mode_of(method) == PeftMode::C2A; }

PeftMode peft_mode_of(Method method) {
    switch (method) {
        case Method::Adapter: return PeftMode::Adapter;
        case Method::LoRA: return PeftMode::LoRA;
        case Method::BitFit: return PeftMode::BitFit;
        case Method::Full: return PeftMode::Full;
        default: return PeftMode::C2A;
    }
}

HyperConfig hyper_config_for(Method method, HyperConfig base) {
    switch (method) {
        case Method::C2AUnfactorized:
            base.factorized = false;
            base.tied = false;
            break;
        case Method::C2ANoLE: base.use_label = false; break;
        case Method::C2ANoCE: base.use_context = false; break;
        case Method::C2ANoNorm: base.normalize = false; break;
        default: break;
    }
    return base;
}

ModelState build_model(const ModelConfig& model, const HyperConfig& hyper, const NamedTensors& backbone,
                       std::uint64_t init_seed) {
    model.validate();
    auto eng = rng::engine(init_seed, "init");
    NamedTensors params = backbone;
    init_head(model, params, eng);
    switch (model.peft_mode) {
        case PeftMode::C2A:
            init_hyper_params(model, hyper, params, eng);
            init_embed_params(model.num_classes, model.d, hyper.t, model.num_sites(), params, eng);
            break;
        case PeftMode::Adapter: add_adapters(model, params, eng); break;
        case PeftMode::LoRA: apply_lora(model, params, eng); break;
        case PeftMode::BitFit:
        case PeftMode::Full: break;
    }
    const auto names = trainable_set(model, params);
    ModelState state{model, hyper, nullptr, {}};
    auto frozen = std::make_shared<NamedTensors>();
    for (auto& [name, t] : params) {
        const bool train = names.count(name) > 0;
        t.requires_grad = train;
        (train ? state.trainable : *frozen)[name] = std::move(t);
    }
    state.frozen = std::move(frozen);
    return state;
}

ForwardOutput model_forward(ParamBinder& params, const ModelState& state, const Batch& batch, EmbedPhase phase,
                            GeneratedAdapterSet* generated) {
    switch (state.model.peft_mode) {
        case PeftMode::C2A: {
            HyperAdapterGenerator gen(params, state.model, state.hyper, phase, batch.labels);
            AdapterProvider provider = gen.provider();
            ForwardOutput out = forward(params, state.model, batch, &provider);
            if (generated) *generated = gen.generated();
            return out;
        }
        case PeftMode::Adapter: {
            AdapterProvider provider = direct_adapters(params);
            return forward(params, state.model, batch, &provider);
        }
        default: return forward(params, state.model, batch);
    }
}

double train_step(ModelState& state, AdamW& optimizer, const Batch& batch) {
    Tape tape;
    ParamBinder params(tape, state.trainable, state.frozen.get());
    ForwardOutput out = model_forward(params, state, batch, EmbedPhase::Train);
    Var loss = ops::softmax_cross_entropy(out.logits, batch.labels);
    tape.backward(loss);
    optimizer.step(state.trainable, params.gradients());
    return loss.value()[0];
}

Tensor predict_logits(const ModelState& state, const Dataset& data, std::size_t batch_size) {
    if (data.empty()) throw DataError("predict_logits: empty dataset");
    if (batch_size == 0) throw ConfigError("predict_logits: batch size must be positive");
    const std::size_t C = state.model.num_classes;
    Tensor logits(Shape{data.size(), C});
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        idx.resize(std::min(batch_size, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        Batch batch = make_batch(data, idx);
        Tape tape;
        ParamBinder params(tape, state.trainable, state.frozen.get(), /*track_gradients=*/false);
        ForwardOutput out = model_forward(params, state, batch, EmbedPhase::Inference);
        const auto& v = out.logits.value().data;
        std::copy(v.begin(), v.end(), logits.data.begin() + static_cast<std::ptrdiff_t>(start * C));
    }
    return logits;
}

double evaluate_accuracy(const ModelState& state, const Dataset& data, std::size_t batch_size) {
    return accuracy(predict_logits(state, data, batch_size), labels_of(data));
}

ParamCount count_trainable_params(const ModelState& state) {
    return count_trainable_params(state.trainable, *state.frozen);
}

}  // namespace c2a
