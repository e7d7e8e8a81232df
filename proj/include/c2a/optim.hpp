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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "c2a/tensor.hpp"

namespace c2a {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Adam with decoupled weight decay and bias-corrected moments.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg);

    /// Updates every tensor in `params` that has an entry in `grads`.
    /// Throws PoisonedGradientError (leaving params untouched) if any
    /// gradient is NaN or infinite.
    void step(NamedTensors& params, const NamedTensors& grads);

    std::int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };

    AdamWConfig cfg_;
    std::int64_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace c2a
