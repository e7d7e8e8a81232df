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

#include "c2a/client_embedding.hpp"

#include <cmath>

#include "c2a/errors.hpp"

namespace c2a {

std::string names::layer_embedding(std::size_t site) { return "client.layer" + std::to_string(site); }

EmbedVars EmbedVars::bind(ParamBinder& params, std::size_t num_sites) {
    EmbedVars e;
    e.label_weight = params(names::kLabelWeight);
    e.label_bias = params(names::kLabelBias);
    e.context_weight = params(names::kContextWeight);
    e.context_bias = params(names::kContextBias);
    for (std::size_t s = 0; s < num_sites; ++s) e.layer.push_back(params(names::layer_embedding(s)));
    return e;
}

void init_embed_params(std::size_t num_classes, std::size_t d, std::size_t t, std::size_t num_sites,
                       NamedTensors& params, rng::Engine& eng) {
    params[names::kLabelWeight] = rng::normal({num_classes, t}, 0.02, eng);
    params[names::kLabelBias] = Tensor({t}, 0.0);
    params[names::kContextWeight] = rng::normal({d, t}, 0.02, eng);
    params[names::kContextBias] = Tensor({t}, 0.0);
    for (std::size_t s = 0; s < num_sites; ++s) params[names::layer_embedding(s)] = rng::normal({t}, 0.02, eng);
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
    if (labels.empty()) throw DegenerateInputError("one_hot: empty label list");
    Tensor out(Shape{labels.size(), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) {
            throw IndexError("one_hot: label " + std::to_string(labels[i]) + " out of range for " +
                             std::to_string(num_classes) + " classes");
        }
        out.at(i, labels[i]) = 1.0;
    }
    return out;
}

Tensor inference_label_distribution(std::size_t num_classes) {
    if (num_classes < 2) throw ConfigError("inference_label_distribution: need at least 2 classes");
    return Tensor(Shape{num_classes}, 1.0 / static_cast<double>(num_classes));
}

Var label_embedding(Var label_rows, Var label_weight, Var label_bias) {
    Tensor rows = label_rows.value();
    if (rows.rank() == 1) rows.shape = {1, rows.shape[0]};
    if (rows.rank() != 2) throw DimensionError("label_embedding: expected [B x C] rows, got " + shape_str(rows.shape));
    const std::size_t C = rows.shape[1];
    const Shape ws = label_weight.shape();
    if (ws.size() != 2 || ws[0] != C) {
        throw DimensionError("label_embedding: W_L " + shape_str(ws) + " does not match " + std::to_string(C) + " classes");
    }
    for (std::size_t b = 0; b < rows.shape[0]; ++b) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double v = rows.at(b, c);
            if (v < 0.0) throw ContractError("label_embedding: negative label mass in row " + std::to_string(b));
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) {
            throw ContractError("label_embedding: row " + std::to_string(b) + " sums to " + std::to_string(s) +
                                ", expected a distribution");
        }
    }
    Var as_rows = ops::reshape(label_rows, rows.shape);
    Var mean = ops::reshape(ops::pool(as_rows, 0, PoolMode::Mean), Shape{1, C});
    return ops::add_bias(ops::reshape(ops::matmul(mean, label_weight), Shape{ws[1]}), label_bias);
}

Var context_embedding(Var hidden, Var context_weight, Var context_bias) {
    const Shape hs = hidden.shape();
    if (hs.size() != 3) throw DimensionError("context_embedding: expected [B x L x d], got " + shape_str(hs));
    const std::size_t d = hs[2];
    const Shape ws = context_weight.shape();
    if (ws.size() != 2 || ws[0] != d) {
        throw DimensionError("context_embedding: W_F " + shape_str(ws) + " does not match hidden size " + std::to_string(d));
    }
    Var per_example = ops::normalize(ops::pool(hidden, 1, PoolMode::Mean), NormMode::L2Vector);  // [B x d]
    Var pooled = ops::reshape(ops::pool(per_example, 0, PoolMode::Max), Shape{1, d});
    return ops::add_bias(ops::reshape(ops::matmul(pooled, context_weight), Shape{ws[1]}), context_bias);
}

Var compose_client_embedding(Var le, Var ce, const EmbedVars& embed, std::size_t site) {
    if (site >= embed.layer.size()) {
        throw ConfigError("compose_client_embedding: unknown site " + std::to_string(site) + " (have " +
                          std::to_string(embed.layer.size()) + ")");
    }
    const Var& layer = embed.layer[site];
    for (const Var* part : {&le, &ce}) {
        if (part->valid() && part->shape() != layer.shape()) {
            throw DimensionError("compose_client_embedding: embedding sizes disagree: " + shape_str(part->shape()) +
                                 " vs " + shape_str(layer.shape()));
        }
    }
    Var out;
    if (le.valid() && ce.valid())
        out = ops::add(le, ce);
    else if (le.valid())
        out = le;
    else if (ce.valid())
        out = ce;
    return out.valid() ? ops::add(out, layer) : layer;
}

}  // namespace c2a
