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
#include <initializer_list>
#include <random>
#include <string_view>

#include "c2a/tensor.hpp"

namespace c2a::rng {

using Engine = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);

/// Counter-based substream derivation: the same (seed, stream, counters)
/// always yields the same 64-bit seed, and distinct streams never share
/// state. Used for corpus / partition / sampling / init / per-client RNGs.
std::uint64_t derive(std::uint64_t seed, std::string_view stream, std::initializer_list<std::uint64_t> counters = {});

inline Engine engine(std::uint64_t seed, std::string_view stream, std::initializer_list<std::uint64_t> counters = {}) {
    return Engine(derive(seed, stream, counters));
}

/// Tensor with i.i.d. N(0, stddev^2) entries.
Tensor normal(Shape shape, double stddev, Engine& eng);

/// log of a Gamma(shape, 1) draw, stable for shape << 1 where the plain
/// draw underflows to zero.
double log_gamma_draw(double shape, Engine& eng);

/// Dirichlet(concentration * 1_k) sample computed in log space.
std::vector<double> dirichlet(std::size_t k, double concentration, Engine& eng);

}  // namespace c2a::rng
