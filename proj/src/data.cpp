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

#include "c2a/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "c2a/errors.hpp"
#include "c2a/rng.hpp"

namespace c2a {

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw DataError("make_batch: empty index list");
    Batch b;
    b.size = indices.size();
    b.seq_len = data.at(indices[0]).tokens.size();
    b.tokens.reserve(b.size * b.seq_len);
    b.labels.reserve(b.size);
    for (auto i : indices) {
        const Example& ex = data.at(i);
        if (ex.tokens.size() != b.seq_len) throw DataError("make_batch: ragged sequence lengths");
        b.tokens.insert(b.tokens.end(), ex.tokens.begin(), ex.tokens.end());
        b.labels.push_back(ex.label);
    }
    return b;
}

Batch make_batch(const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    return make_batch(data, idx);
}

void CorpusSpec::validate() const {
    if (num_classes < 2) throw ConfigError("corpus: num_classes must be >= 2");
    if (num_groups < 1) throw ConfigError("corpus: num_groups must be >= 1");
    if (seq_len < 2) throw ConfigError("corpus: seq_len must be >= 2");
    if (train_per_cell == 0 || test_per_cell == 0) throw ConfigError("corpus: per-cell example counts must be positive");
    if (!(signal >= 0.0 && signal < 1.0)) throw ConfigError("corpus: signal must lie in [0, 1)");
    if (!(divergence > 0.0 && divergence <= 1.0)) throw ConfigError("corpus: divergence must lie in (0, 1]");
    token_bands(*this);
}

std::size_t TokenBands::group_of(std::size_t token, std::size_t num_groups) const {
    if (token < kReservedTokens) return num_groups;
    const std::size_t g = (token - kReservedTokens) / band_size;
    return std::min(g, num_groups);
}

TokenBands token_bands(const CorpusSpec& spec) {
    if (spec.vocab_size <= kReservedTokens) throw DataError("corpus: vocab too small");
    // G group bands plus one shared band (used when divergence < 1).
    TokenBands b;
    b.band_size = (spec.vocab_size - kReservedTokens) / (spec.num_groups + 1);
    b.class_tokens = std::max<std::size_t>(2, b.band_size / (2 * spec.num_classes));
    if (b.band_size < spec.num_classes * b.class_tokens + 2) {
        throw DataError("corpus: vocab of " + std::to_string(spec.vocab_size) + " too small for " +
                        std::to_string(spec.num_groups) + " disjoint bands with " +
                        std::to_string(spec.num_classes) + " classes");
    }
    return b;
}

namespace {

class SequenceSampler {
public:
    SequenceSampler(const CorpusSpec& spec, rng::Engine& layout_eng) : spec_(spec), bands_(token_bands(spec)) {
        // Zipf-like base distribution over each group's band, with a
        // group-specific rank order.
        std::vector<double> weights(bands_.band_size);
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = 1.0 / static_cast<double>(i + 1);
        for (std::size_t g = 0; g < spec.num_groups; ++g) {
            std::vector<std::size_t> order(bands_.band_size);
            std::iota(order.begin(), order.end(), bands_.band_begin(g));
            std::shuffle(order.begin(), order.end(), layout_eng);
            base_tokens_.push_back(std::move(order));
        }
        base_dist_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
    }

    Example sample(std::size_t label, std::size_t group, rng::Engine& eng) {
        Example ex;
        ex.label = static_cast<std::uint32_t>(label);
        ex.group = static_cast<std::uint32_t>(group);
        ex.tokens.assign(spec_.seq_len, kPadToken);
        std::uniform_int_distribution<std::size_t> len_dist(spec_.seq_len / 2, spec_.seq_len);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> class_pick(0, bands_.class_tokens - 1);
        std::uniform_int_distribution<std::size_t> shared_pick(0, bands_.band_size - 1);
        const std::size_t len = len_dist(eng);
        const std::size_t class_begin = bands_.band_begin(group) + label * bands_.class_tokens;
        const std::size_t shared_begin = bands_.band_begin(spec_.num_groups);
        for (std::size_t p = 0; p < len; ++p) {
            std::size_t tok;
            if (unit(eng) < spec_.signal) {
                tok = class_begin + class_pick(eng);
            } else if (unit(eng) < spec_.divergence) {
                tok = base_tokens_[group][base_dist_(eng)];
            } else {
                tok = shared_begin + shared_pick(eng);
            }
            ex.tokens[p] = static_cast<std::uint32_t>(tok);
        }
        return ex;
    }

private:
    const CorpusSpec& spec_;
    TokenBands bands_;
    std::vector<std::vector<std::size_t>> base_tokens_;
    std::discrete_distribution<std::size_t> base_dist_;
};

}  // namespace

Corpus synthesize_corpus(const CorpusSpec& spec) {
    spec.validate();
    auto layout = rng::engine(spec.seed, "corpus.layout");
    SequenceSampler sampler(spec, layout);
    Corpus corpus;
    auto train_eng = rng::engine(spec.seed, "corpus.train");
    auto test_eng = rng::engine(spec.seed, "corpus.test");
    for (std::size_t g = 0; g < spec.num_groups; ++g)
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            for (std::size_t i = 0; i < spec.train_per_cell; ++i) corpus.train.push_back(sampler.sample(c, g, train_eng));
            for (std::size_t i = 0; i < spec.test_per_cell; ++i) corpus.test.push_back(sampler.sample(c, g, test_eng));
        }
    auto pre_eng = rng::engine(spec.seed, "corpus.pretrain");
    std::uniform_int_distribution<std::size_t> cls(0, spec.num_classes - 1), grp(0, spec.num_groups - 1);
    for (std::size_t i = 0; i < spec.pretrain_examples; ++i) {
        const std::size_t c = cls(pre_eng), g = grp(pre_eng);
        Example ex = sampler.sample(c, g, pre_eng);
        ex.label = 0;
        ex.group = 0;
        corpus.pretrain.push_back(std::move(ex));
    }
    return corpus;
}

Dataset load_jsonl(const std::filesystem::path& path, const DatasetLimits& limits) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file " + path.string());
    Dataset out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(where + ": malformed JSON (" + e.what() + ")");
        }
        if (!rec.is_object() || !rec.contains("tokens") || !rec.contains("label") || !rec.contains("group") ||
            !rec["tokens"].is_array() || !rec["label"].is_number_integer() || !rec["group"].is_number_integer()) {
            throw ParseError(where + ": expected {\"tokens\": [ints], \"label\": int, \"group\": int}");
        }
        Example ex;
        const auto label = rec["label"].get<long long>();
        const auto group = rec["group"].get<long long>();
        if (label < 0 || static_cast<std::size_t>(label) >= limits.num_classes) {
            throw DataError(where + ": label " + std::to_string(label) + " out of range [0, " +
                            std::to_string(limits.num_classes) + ")");
        }
        if (group < 0 || static_cast<std::size_t>(group) >= limits.num_groups) {
            throw DataError(where + ": group " + std::to_string(group) + " out of range [0, " +
                            std::to_string(limits.num_groups) + ")");
        }
        const auto& toks = rec["tokens"];
        if (toks.size() > limits.seq_len) {
            throw DataError(where + ": sequence length " + std::to_string(toks.size()) + " exceeds " +
                            std::to_string(limits.seq_len));
        }
        ex.tokens.assign(limits.seq_len, kPadToken);
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (!toks[i].is_number_integer()) throw ParseError(where + ": non-integer token");
            const auto tok = toks[i].get<long long>();
            if (tok < 0 || static_cast<std::size_t>(tok) >= limits.vocab_size) {
                throw DataError(where + ": token " + std::to_string(tok) + " out of range [0, " +
                                std::to_string(limits.vocab_size) + ")");
            }
            ex.tokens[i] = static_cast<std::uint32_t>(tok);
        }
        ex.label = static_cast<std::uint32_t>(label);
        ex.group = static_cast<std::uint32_t>(group);
        out.push_back(std::move(ex));
    }
    if (out.empty()) spdlog::warn("dataset {} contains no records", path.string());
    return out;
}

void save_jsonl(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file " + path.string());
    for (const auto& ex : data) {
        nlohmann::json rec = {{"tokens", ex.tokens}, {"label", ex.label}, {"group", ex.group}};
        out << rec.dump() << '\n';
    }
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("split: test fraction must lie in (0, 1)");
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < data.size(); ++i) strata[{data[i].label, data[i].group}].push_back(i);

    auto eng = rng::engine(seed, "split");
    std::vector<bool> is_test(data.size(), false);
    std::uint32_t current_label = 0;
    std::size_t cumulative = 0;
    bool first = true;
    for (auto& [key, idx] : strata) {
        if (first || key.first != current_label) {
            current_label = key.first;
            cumulative = 0;
            first = false;
        }
        std::shuffle(idx.begin(), idx.end(), eng);
        const auto before = static_cast<std::size_t>(std::llround(static_cast<double>(cumulative) * test_fraction));
        cumulative += idx.size();
        const auto after = static_cast<std::size_t>(std::llround(static_cast<double>(cumulative) * test_fraction));
        for (std::size_t k = 0; k < after - before; ++k) is_test[idx[k]] = true;
    }
    std::pair<Dataset, Dataset> out;
    for (std::size_t i = 0; i < data.size(); ++i) (is_test[i] ? out.second : out.first).push_back(data[i]);
    return out;
}

std::vector<std::size_t> labels_of(const Dataset& data) {
    std::vector<std::size_t> out;
    out.reserve(data.size());
    for (const auto& ex : data) out.push_back(ex.label);
    return out;
}

std::vector<std::size_t> groups_of(const Dataset& data) {
    std::vector<std::size_t> out;
    out.reserve(data.size());
    for (const auto& ex : data) out.push_back(ex.group);
    return out;
}

}  // namespace c2a
