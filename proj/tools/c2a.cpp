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

#include <malloc.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "c2a/errors.hpp"
#include "c2a/experiment.hpp"

namespace {

using namespace c2a;

struct ConfigArgs {
    std::string path;
    std::vector<std::string> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", path, "INI config file")->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override a field, e.g. --set partition.beta=0.5");
    }

    ExperimentConfig load() const {
        ExperimentConfig config = path.empty() ? ExperimentConfig{} : load_config(path);
        for (const auto& o : overrides) apply_override(config, o);
        config.validate();
        return config;
    }
};

struct OutputArgs {
    std::string out, cache;

    void attach(CLI::App* cmd) {
        cmd->add_option("-o,--out", out, "Output directory (default: $C2A_OUT_DIR or c2a_out)");
        cmd->add_option("--cache", cache, "Backbone cache (default: $C2A_CACHE_DIR or <out>/cache)");
    }

    RunOptions options() const {
        RunOptions o = default_run_options();
        if (!out.empty()) {
            o.output_dir = out;
            if (!std::getenv("C2A_CACHE_DIR")) o.cache_dir = o.output_dir / "cache";
        }
        if (!cache.empty()) o.cache_dir = cache;
        return o;
    }
};

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
    std::vector<Method> out;
    for (const auto& n : names) out.push_back(parse_method(n));
    return out;
}

void write_summary(const std::vector<ExperimentReport>& reports, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    emit_results(reports, out);
    spdlog::info("summary written to {}", path.string());
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);

    CLI::App app{"Federated simulator for client-customized adapters"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

    ConfigArgs run_cfg;
    OutputArgs run_out;
    auto* run = app.add_subcommand("run", "Run one experiment");
    run_cfg.attach(run);
    run_out.attach(run);

    ConfigArgs sweep_cfg;
    OutputArgs sweep_out;
    std::vector<std::string> methods;
    std::vector<double> betas;
    std::vector<std::uint64_t> seeds;
    std::string preset, summary;
    bool grid = false;
    auto* sweep = app.add_subcommand("sweep", "Run a grid of experiments and summarise it");
    sweep_cfg.attach(sweep);
    sweep_out.attach(sweep);
    sweep->add_option("--methods", methods, "Methods")->delimiter(',');
    sweep->add_option("--betas", betas, "Dirichlet concentrations")->delimiter(',');
    sweep->add_option("--seeds", seeds, "Seeds")->delimiter(',');
    sweep->add_flag("--epochs-rounds", grid, "Sweep E x R over 1x40, 2x20, 4x10, 8x5 (same product as E*R)");
    sweep->add_option("--preset", preset, "table1 | epochs | ablation")
        ->check(CLI::IsMember({"table1", "epochs", "ablation"}));
    sweep->add_option("--summary", summary, "Summary CSV path (default: <out>/summary.csv)");

    ConfigArgs synth_cfg;
    std::string train_out, test_out;
    auto* synth = app.add_subcommand("synth", "Write the synthetic corpus as JSON lines");
    synth_cfg.attach(synth);
    synth->add_option("--train", train_out, "Training set output")->required();
    synth->add_option("--test", test_out, "Test set output")->required();

    std::vector<std::string> report_paths;
    std::string summarize_out;
    auto* summarize = app.add_subcommand("summarize", "Summarise report JSON files into one CSV");
    summarize->add_option("reports", report_paths, "Report files")->required()->check(CLI::ExistingFile);
    summarize->add_option("-o,--out", summarize_out, "Output CSV (default: stdout)");

    ConfigArgs echo_cfg;
    auto* echo = app.add_subcommand("echo", "Print the fully resolved config");
    echo_cfg.attach(echo);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("c2a"));
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*run) {
            const auto options = run_out.options();
            const auto report = run_experiment(run_cfg.load(), options);
            std::cout << (options.output_dir / (report.config.cell_name() + ".report.json")).string() << '\n';
        } else if (*sweep) {
            const ExperimentConfig base = sweep_cfg.load();
            SweepSpec spec;
            if (preset == "table1") {
                spec.methods = {Method::C2A, Method::Adapter};
                spec.betas = {5.0, 1.0, 0.1};
            } else if (preset == "epochs") {
                spec.methods = {Method::C2A, Method::Adapter};
                spec.epochs_rounds = epochs_rounds_grid(base.local_epochs * base.rounds);
            } else if (preset == "ablation") {
                spec.methods = ablation_methods();
            }
            if (!methods.empty()) spec.methods = parse_methods(methods);
            if (!betas.empty()) spec.betas = betas;
            if (!seeds.empty()) spec.seeds = seeds;
            if (grid) spec.epochs_rounds = epochs_rounds_grid(base.local_epochs * base.rounds);
            const auto cells = expand_sweep(base, spec);
            const auto options = sweep_out.options();
            spdlog::info("sweep: {} cells into {}", cells.size(), options.output_dir.string());
            std::vector<ExperimentReport> reports;
            for (const auto& cell : cells) reports.push_back(run_experiment(cell, options));
            write_summary(reports, summary.empty() ? options.output_dir / "summary.csv" : std::filesystem::path(summary));
        } else if (*synth) {
            const auto config = synth_cfg.load();
            CorpusSpec spec = config.corpus;
            spec.seed = SeedStreams::from(config.seed).corpus;
            const Corpus corpus = synthesize_corpus(spec);
            save_jsonl(train_out, corpus.train);
            save_jsonl(test_out, corpus.test);
            spdlog::info("wrote {} training and {} test examples", corpus.train.size(), corpus.test.size());
        } else if (*summarize) {
            std::vector<ExperimentReport> reports;
            for (const auto& p : report_paths) reports.push_back(load_report(p));
            if (summarize_out.empty()) {
                emit_results(reports, std::cout);
            } else {
                write_summary(reports, summarize_out);
            }
        } else if (*echo) {
            std::cout << echo_cfg.load().echo();
        }
    } catch (const c2a::Error& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
