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

#include <vector>

#include "c2a/data.hpp"
#include "c2a/model.hpp"
#include "c2a/network.hpp"
#include "c2a/rng.hpp"

namespace c2a::testing {

// d=8, r=2, t=4, s=2: small enough for exhaustive finite differences.
inline ModelConfig tiny_model(PeftMode mode = PeftMode::C2A) {
    ModelConfig cfg;
    cfg.vocab_size = 12;
    cfg.max_seq_len = 5;
    cfg.d = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 12;
    cfg.r = 2;
    cfg.num_classes = 3;
    cfg.peft_mode = mode;
    return cfg;
}

inline HyperConfig tiny_hyper() {
    HyperConfig h;
    h.t = 4;
    h.s = 2;
    return h;
}

inline Dataset random_dataset(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
    auto eng = rng::engine(seed, "fixture.data");
    std::uniform_int_distribution<std::uint32_t> tok(kReservedTokens, static_cast<std::uint32_t>(cfg.vocab_size - 1));
    std::uniform_int_distribution<std::uint32_t> lab(0, static_cast<std::uint32_t>(cfg.num_classes - 1));
    Dataset data(n);
    for (auto& ex : data) {
        ex.tokens.resize(cfg.max_seq_len);
        for (auto& t : ex.tokens) t = tok(eng);
        ex.tokens.back() = kPadToken;
        ex.label = lab(eng);
    }
    return data;
}

inline NamedTensors random_backbone(const ModelConfig& cfg, std::uint64_t seed) {
    auto eng = rng::engine(seed, "fixture.backbone");
    return init_backbone(cfg, eng);
}

/// Overwrites every trainable tensor with N(0, stddev^2) noise, so that
/// zero-initialised factors do not hide gradient paths.
inline void randomize(NamedTensors& params, double stddev, std::uint64_t seed) {
    auto eng = rng::engine(seed, "fixture.randomize");
    for (auto& [name, t] : params) {
        const Tensor noise = rng::normal(t.shape, stddev, eng);
        t.data = noise.data;
    }
}

}  // namespace c2a::testing
