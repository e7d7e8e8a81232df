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
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "c2a/data.hpp"
#include "c2a/federation.hpp"
#include "c2a/network.hpp"

namespace c2a {

/// One federated run. Read from an INI-style file with the sections
/// [experiment], [corpus], [partition], [model] and [train]; every key is
/// optional and unknown keys are rejected.
struct ExperimentConfig {
    // [experiment]
    std::string name;  // empty: derived by cell_name()
    Method method = Method::C2A;
    std::uint64_t seed = 0;
    std::vector<double> targets{0.3, 0.5};

    // [corpus] Limits double as the synthetic spec and the bounds checked
    // when loading JSON-lines files. The corpus seed is derived from `seed`.
    CorpusSpec corpus;
    std::string train_path;  // empty: synthesize
    std::string test_path;   // empty with a train file: split it
    double test_fraction = 0.2;

    // [partition]
    std::string scheme = "dirichlet";  // or "group"
    double beta = 0.1;
    std::size_t clients = 20;

    // [model] vocabulary, sequence length and classes come from [corpus].
    std::size_t d = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t d_ff = 64;
    std::size_t r = 8;
    std::size_t t = 8;
    std::size_t s = 8;
    std::size_t pretrain_steps = 300;

    // [train]
    double lr = 1e-2;
    double weight_decay = 0.0;
    std::size_t batch_size = 0;  // 0 = auto: 16, or 64 for large training sets
    std::size_t local_epochs = 1;
    std::size_t rounds = 40;
    double fraction = 0.25;
    std::size_t eval_batch_size = 128;
    std::size_t probe_size = 256;
    std::size_t workers = 1;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    /// e.g. "c2a_dirichlet_b0.1_E1_R40_s0"; used for output file names.
    std::string cell_name() const;
    /// INI text that parses back to an equal config.
    std::string echo() const;

    ModelConfig model_config() const;
    HyperConfig hyper_config() const;
    FederationConfig federation_config(std::size_t resolved_batch) const;
};

inline constexpr std::size_t kLargeTrainingSet = 20000;
std::size_t auto_batch_size(std::size_t train_examples);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// "section.key=value", as given to --set.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Per-run seeds, one named substream each.
struct SeedStreams {
    std::uint64_t corpus, split, pretrain, partition, init, probe, federation;
    static SeedStreams from(std::uint64_t seed);
};

struct ExperimentReport {
    ExperimentConfig config;  // batch size resolved
    std::string round_csv;    // file name, next to the report
    std::vector<double> accuracy;              // rounds 0..R
    std::vector<std::optional<double>> drift;  // mean per round, rounds 1..R
    std::size_t bytes_total = 0;
    std::size_t trainable_params = 0;
    std::size_t total_params = 0;

    std::vector<double> trace() const;  // rounds 1..R
    double final_accuracy() const { return accuracy.back(); }
    double best_accuracy() const;
    std::optional<double> mean_drift() const;
    double param_percent() const;
};

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
ExperimentReport load_report(const std::filesystem::path& path);

struct RunOptions {
    std::filesystem::path output_dir;  // receives <cell>.rounds.csv and <cell>.report.json
    std::filesystem::path cache_dir;   // pretrained backbones
    bool write_files = true;
};

/// Output directory from C2A_OUT_DIR, else "c2a_out". The backbone cache
/// defaults to C2A_CACHE_DIR, else <output>/cache.
RunOptions default_run_options();

/// Loads or synthesizes the data, pretrains (or loads) the backbone,
/// partitions, federates and writes the round log and report.
ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Masked-token backbone for `corpus`, cached under `cache_dir` by a hash of
/// the corpus, the backbone dimensions and the pretraining options.
NamedTensors cached_backbone(const Dataset& corpus, const ModelConfig& model, const PretrainOptions& options,
                             const std::filesystem::path& cache_dir);

struct SweepSpec {
    std::vector<Method> methods;
    std::vector<double> betas;
    std::vector<std::uint64_t> seeds;
    std::vector<std::pair<std::size_t, std::size_t>> epochs_rounds;  // empty: keep the base E and R
};

/// Local epochs x rounds with a constant product: 1x40, 2x20, 4x10, 8x5.
std::vector<std::pair<std::size_t, std::size_t>> epochs_rounds_grid(std::size_t budget = 40);
std::vector<Method> ablation_methods();

/// Cells in method-major, then beta, then E x R, then seed order.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, const SweepSpec& sweep);

/// Summary CSV: one row per (method, scheme, beta, E, R) over its seeds,
/// with rounds-to-target on the seed-mean accuracy trace and speedups
/// against the adapter row of the same cell.
void emit_results(std::span<const ExperimentReport> reports, std::ostream& out);

}  // namespace c2a
