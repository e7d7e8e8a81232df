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
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace c2a {

inline constexpr std::uint32_t kPadToken = 0;
inline constexpr std::uint32_t kMaskToken = 1;
inline constexpr std::uint32_t kReservedTokens = 2;

/// One classification instance. `tokens` always has the corpus sequence
/// length; unused trailing positions hold kPadToken.
struct Example {
    std::vector<std::uint32_t> tokens;
    std::uint32_t label = 0;
    std::uint32_t group = 0;

    bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

/// Flattened mini-batch: tokens are row-major [size x seq_len].
struct Batch {
    std::vector<std::size_t> tokens;
    std::vector<std::size_t> labels;
    std::size_t size = 0;
    std::size_t seq_len = 0;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch make_batch(const Dataset& data);

struct CorpusSpec {
    std::size_t vocab_size = 256;
    std::size_t num_classes = 8;
    std::size_t num_groups = 5;
    std::size_t train_per_cell = 200;  // per (class, group)
    std::size_t test_per_cell = 50;
    std::size_t pretrain_examples = 2000;
    std::size_t seq_len = 16;
    double signal = 0.35;  // probability a position carries a class-indicative token
    double divergence = 1.0;  // share of group-band tokens in the base distribution; rest is shared
    std::uint64_t seed = 0;

    void validate() const;
};

struct Corpus {
    Dataset train;
    Dataset test;
    Dataset pretrain;  // labels and groups are meaningless here
};

/// Group g owns a disjoint token band [band_begin(g), band_begin(g) + band_size).
struct TokenBands {
    std::size_t band_size = 0;
    std::size_t class_tokens = 0;  // class-indicative tokens per (group, class)

    std::size_t band_begin(std::size_t group) const { return kReservedTokens + group * band_size; }
    /// Band owning `token`, or num_groups when the token is reserved/unbanded.
    std::size_t group_of(std::size_t token, std::size_t num_groups) const;
};

TokenBands token_bands(const CorpusSpec& spec);

Corpus synthesize_corpus(const CorpusSpec& spec);

struct DatasetLimits {
    std::size_t vocab_size = 256;
    std::size_t num_classes = 8;
    std::size_t num_groups = 5;
    std::size_t seq_len = 16;
};

/// Reads {"tokens": [...], "label": c, "group": g} records, one per line.
/// Blank lines are skipped. Sequences shorter than seq_len are padded.
Dataset load_jsonl(const std::filesystem::path& path, const DatasetLimits& limits);
void save_jsonl(const std::filesystem::path& path, const Dataset& data);

/// Stratified by (label, group) with cumulative rounding, so every class's
/// test share is within one example of `test_fraction`.
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);

std::vector<std::size_t> labels_of(const Dataset& data);
std::vector<std::size_t> groups_of(const Dataset& data);

}  // namespace c2a
