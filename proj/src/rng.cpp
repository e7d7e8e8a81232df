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

#include "c2a/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace c2a::rng {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive(std::uint64_t seed, std::string_view stream, std::initializer_list<std::uint64_t> counters) {
    std::uint64_t h = splitmix64(seed ^ splitmix64(fnv1a(stream)));
    for (auto c : counters) h = splitmix64(h ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
    return h;
}

Tensor normal(Shape shape, double stddev, Engine& eng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data) v = dist(eng);
    return t;
}

double log_gamma_draw(double shape, Engine& eng) {
    if (shape >= 1.0) {
        std::gamma_distribution<double> g(shape, 1.0);
        double x = g(eng);
        while (x <= 0.0) x = g(eng);
        return std::log(x);
    }
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    std::gamma_distribution<double> g(shape + 1.0, 1.0);
    std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
    double x = g(eng);
    while (x <= 0.0) x = g(eng);
    return std::log(x) + std::log(u(eng)) / shape;
}

std::vector<double> dirichlet(std::size_t k, double concentration, Engine& eng) {
    std::vector<double> logs(k);
    for (auto& l : logs) l = log_gamma_draw(concentration, eng);
    const double mx = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (auto& l : logs) s += (l = std::exp(l - mx));
    for (auto& l : logs) l /= s;
    return logs;
}

}  // namespace c2a::rng
