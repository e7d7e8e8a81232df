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

#include "c2a/optim.hpp"

#include <cmath>

#include "c2a/errors.hpp"

namespace c2a {

AdamW::AdamW(AdamWConfig cfg) : cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("AdamW: lr must be positive");
}

void AdamW::step(NamedTensors& params, const NamedTensors& grads) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("AdamW: gradient for unknown parameter '" + name + "'");
        if (it->second.shape != g.shape) {
            throw DimensionError("AdamW: gradient shape " + shape_str(g.shape) + " for '" + name + "' of shape " +
                                 shape_str(it->second.shape));
        }
        for (double v : g.data) {
            if (!std::isfinite(v)) throw PoisonedGradientError("non-finite gradient in '" + name + "'");
        }
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        Moments& mo = moments_[name];
        if (mo.m.empty()) {
            mo.m.assign(p.numel(), 0.0);
            mo.v.assign(p.numel(), 0.0);
        }
        const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g.data[i];
            mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * gi;
            mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double m_hat = mo.m[i] / bc1;
            const double v_hat = mo.v[i] / bc2;
            p.data[i] = p.data[i] * decay - cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

}  // namespace c2a
