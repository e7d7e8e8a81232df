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

#include "c2a/experiment.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "c2a/checkpoint.hpp"
#include "c2a/errors.hpp"
#include "c2a/metrics.hpp"
#include "c2a/rng.hpp"

namespace c2a {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

[[noreturn]] void bad_value(const std::string& field, const std::string& what, const std::string& text) {
    throw ConfigError(fmt::format("{}: expected {}, got '{}'", field, what, text));
}

std::size_t parse_size(const std::string& field, const std::string& text) {
    const std::string v = trim(text);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) bad_value(field, "a non-negative integer", text);
    try {
        return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::exception&) {
        bad_value(field, "a non-negative integer", text);
    }
}

double parse_double(const std::string& field, const std::string& text) {
    const std::string v = trim(text);
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        bad_value(field, "a number", text);
    }
    if (used != v.size() || !std::isfinite(out)) bad_value(field, "a number", text);
    return out;
}

std::vector<double> parse_list(const std::string& field, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) out.push_back(parse_double(field, item));
    }
    return out;
}

std::string format_number(double v) { return fmt::format("{}", v); }

std::string format_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_number(values[i]);
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

Field size_field(std::string section, std::string key, std::size_t ExperimentConfig::*member) {
    return {std::move(section), std::move(key), [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
            [member](ExperimentConfig& c, const std::string& f, const std::string& v) { c.*member = parse_size(f, v); }};
}

Field double_field(std::string section, std::string key, double ExperimentConfig::*member) {
    return {std::move(section), std::move(key), [member](const ExperimentConfig& c) { return format_number(c.*member); },
            [member](ExperimentConfig& c, const std::string& f, const std::string& v) { c.*member = parse_double(f, v); }};
}

Field string_field(std::string section, std::string key, std::string ExperimentConfig::*member) {
    return {std::move(section), std::move(key), [member](const ExperimentConfig& c) { return c.*member; },
            [member](ExperimentConfig& c, const std::string&, const std::string& v) { c.*member = trim(v); }};
}

Field corpus_size(std::string key, std::size_t CorpusSpec::*member) {
    return {"corpus", std::move(key), [member](const ExperimentConfig& c) { return std::to_string(c.corpus.*member); },
            [member](ExperimentConfig& c, const std::string& f, const std::string& v) {
                c.corpus.*member = parse_size(f, v);
            }};
}

Field corpus_double(std::string key, double CorpusSpec::*member) {
    return {"corpus", std::move(key), [member](const ExperimentConfig& c) { return format_number(c.corpus.*member); },
            [member](ExperimentConfig& c, const std::string& f, const std::string& v) {
                c.corpus.*member = parse_double(f, v);
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(string_field("experiment", "name", &ExperimentConfig::name));
        f.push_back({"experiment", "method", [](const ExperimentConfig& c) { return to_string(c.method); },
                     [](ExperimentConfig& c, const std::string& field, const std::string& v) {
                         try {
                             c.method = parse_method(trim(v));
                         } catch (const ConfigError&) {
                             bad_value(field, "one of c2a, c2a_unfactorized, c2a_no_le, c2a_no_ce, c2a_no_norm, "
                                              "adapter, lora, bitfit, full", v);
                         }
                     }});
        f.push_back({"experiment", "seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
                     [](ExperimentConfig& c, const std::string& field, const std::string& v) {
                         c.seed = parse_size(field, v);
                     }});
        f.push_back({"experiment", "targets", [](const ExperimentConfig& c) { return format_list(c.targets); },
                     [](ExperimentConfig& c, const std::string& field, const std::string& v) {
                         c.targets = parse_list(field, v);
                     }});
        f.push_back(string_field("corpus", "train_path", &ExperimentConfig::train_path));
        f.push_back(string_field("corpus", "test_path", &ExperimentConfig::test_path));
        f.push_back(double_field("corpus", "test_fraction", &ExperimentConfig::test_fraction));
        f.push_back(corpus_size("vocab_size", &CorpusSpec::vocab_size));
        f.push_back(corpus_size("num_classes", &CorpusSpec::num_classes));
        f.push_back(corpus_size("num_groups", &CorpusSpec::num_groups));
        f.push_back(corpus_size("seq_len", &CorpusSpec::seq_len));
        f.push_back(corpus_size("train_per_cell", &CorpusSpec::train_per_cell));
        f.push_back(corpus_size("test_per_cell", &CorpusSpec::test_per_cell));
        f.push_back(corpus_size("pretrain_examples", &CorpusSpec::pretrain_examples));
        f.push_back(corpus_double("signal", &CorpusSpec::signal));
        f.push_back(corpus_double("divergence", &CorpusSpec::divergence));
        f.push_back(string_field("partition", "scheme", &ExperimentConfig::scheme));
        f.push_back(double_field("partition", "beta", &ExperimentConfig::beta));
        f.push_back(size_field("partition", "clients", &ExperimentConfig::clients));
        f.push_back(size_field("model", "d", &ExperimentConfig::d));
        f.push_back(size_field("model", "n_layers", &ExperimentConfig::n_layers));
        f.push_back(size_field("model", "n_heads", &ExperimentConfig::n_heads));
        f.push_back(size_field("model", "d_ff", &ExperimentConfig::d_ff));
        f.push_back(size_field("model", "r", &ExperimentConfig::r));
        f.push_back(size_field("model", "t", &ExperimentConfig::t));
        f.push_back(size_field("model", "s", &ExperimentConfig::s));
        f.push_back(size_field("model", "pretrain_steps", &ExperimentConfig::pretrain_steps));
        f.push_back(double_field("train", "lr", &ExperimentConfig::lr));
        f.push_back(double_field("train", "weight_decay", &ExperimentConfig::weight_decay));
        f.push_back({"train", "batch_size",
                     [](const ExperimentConfig& c) { return c.batch_size ? std::to_string(c.batch_size) : "auto"; },
                     [](ExperimentConfig& c, const std::string& field, const std::string& v) {
                         c.batch_size = trim(v) == "auto" ? 0 : parse_size(field, v);
                         if (trim(v) != "auto" && c.batch_size == 0) bad_value(field, "a positive integer or auto", v);
                     }});
        f.push_back(size_field("train", "local_epochs", &ExperimentConfig::local_epochs));
        f.push_back(size_field("train", "rounds", &ExperimentConfig::rounds));
        f.push_back(double_field("train", "fraction", &ExperimentConfig::fraction));
        f.push_back(size_field("train", "eval_batch_size", &ExperimentConfig::eval_batch_size));
        f.push_back(size_field("train", "probe_size", &ExperimentConfig::probe_size));
        f.push_back(size_field("train", "workers", &ExperimentConfig::workers));
        return f;
    }();
    return table;
}

const Field& find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields())
        if (f.section == section && f.key == key) return f;
    throw ConfigError(fmt::format("unknown config key '{}.{}'", section, key));
}

void require(bool ok, const std::string& field, const std::string& message) {
    if (!ok) throw ConfigError(field + ": " + message);
}

}  // namespace

void ExperimentConfig::validate() const {
    require(!targets.empty(), "experiment.targets", "at least one target is required");
    for (double t : targets) require(t > 0.0 && t <= 1.0, "experiment.targets", "targets must lie in (0, 1]");
    require(test_fraction > 0.0 && test_fraction < 1.0, "corpus.test_fraction", "must lie in (0, 1)");
    require(!(train_path.empty() && !test_path.empty()), "corpus.test_path", "needs corpus.train_path");
    require(corpus.signal >= 0.0 && corpus.signal < 1.0, "corpus.signal", "must lie in [0, 1)");
    require(corpus.divergence > 0.0 && corpus.divergence <= 1.0, "corpus.divergence", "must lie in (0, 1]");
    require(corpus.num_classes >= 2, "corpus.num_classes", "must be at least 2");
    require(corpus.num_groups >= 1, "corpus.num_groups", "must be at least 1");
    if (train_path.empty()) {
        try {
            corpus.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("corpus: ") + e.what());
        }
    }
    require(scheme == "dirichlet" || scheme == "group", "partition.scheme", "must be 'dirichlet' or 'group'");
    require(beta > 0.0, "partition.beta", fmt::format("must be > 0, got {}", beta));
    require(clients >= 1, "partition.clients", "must be at least 1");
    require(scheme != "group" || clients >= corpus.num_groups, "partition.clients",
            "group partition needs at least one client per group");
    require(lr > 0.0, "train.lr", "must be > 0");
    require(weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
    require(local_epochs >= 1, "train.local_epochs", "must be at least 1");
    require(fraction > 0.0 && fraction <= 1.0, "train.fraction", "must lie in (0, 1]");
    require(eval_batch_size >= 1, "train.eval_batch_size", "must be at least 1");
    require(probe_size >= 2, "train.probe_size", "must be at least 2");
    require(workers >= 1, "train.workers", "must be at least 1");
    try {
        model_config().validate();
        hyper_config().validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    require(t >= 1 && s >= 1, "model.t", "t and s must be positive");
}

std::string ExperimentConfig::cell_name() const {
    if (!name.empty()) return name;
    return fmt::format("{}_{}_b{}_E{}_R{}_s{}", to_string(method), scheme, format_number(beta), local_epochs, rounds, seed);
}

std::string ExperimentConfig::echo() const {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            section = f.section;
            out += (out.empty() ? "" : "\n") + fmt::format("[{}]\n", section);
        }
        out += fmt::format("{} = {}\n", f.key, f.get(*this));
    }
    return out;
}

ModelConfig ExperimentConfig::model_config() const {
    ModelConfig m;
    m.vocab_size = corpus.vocab_size;
    m.max_seq_len = corpus.seq_len;
    m.num_classes = corpus.num_classes;
    m.d = d;
    m.n_layers = n_layers;
    m.n_heads = n_heads;
    m.d_ff = d_ff;
    m.r = r;
    m.peft_mode = peft_mode_of(method);
    return m;
}

HyperConfig ExperimentConfig::hyper_config() const {
    HyperConfig h;
    h.t = t;
    h.s = s;
    return hyper_config_for(method, h);
}

FederationConfig ExperimentConfig::federation_config(std::size_t resolved_batch) const {
    FederationConfig f;
    f.fraction = fraction;
    f.local_epochs = local_epochs;
    f.batch_size = resolved_batch;
    f.optimizer.lr = lr;
    f.optimizer.weight_decay = weight_decay;
    f.eval_batch_size = eval_batch_size;
    f.workers = workers;
    f.seed = SeedStreams::from(seed).federation;
    return f;
}

std::size_t auto_batch_size(std::size_t train_examples) { return train_examples < kLargeTrainingSet ? 16 : 64; }

ExperimentConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
    }
    ExperimentConfig config;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(fmt::format("config key '{}' must sit inside a [section]", section));
        for (const auto& [key, value] : body) {
            const Field& f = find_field(section, key);
            f.set(config, section + "." + key, value.data());
        }
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    const std::string section = trim(assignment.substr(0, dot));
    const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
    find_field(section, key).set(config, section + "." + key, assignment.substr(eq + 1));
}

SeedStreams SeedStreams::from(std::uint64_t seed) {
    return {rng::derive(seed, "corpus"),    rng::derive(seed, "split"), rng::derive(seed, "pretrain"),
            rng::derive(seed, "partition"), rng::derive(seed, "init"),  rng::derive(seed, "probe"),
            rng::derive(seed, "federation")};
}

std::vector<double> ExperimentReport::trace() const {
    return accuracy.size() > 1 ? std::vector<double>(accuracy.begin() + 1, accuracy.end()) : std::vector<double>{};
}

double ExperimentReport::best_accuracy() const { return *std::max_element(accuracy.begin(), accuracy.end()); }

std::optional<double> ExperimentReport::mean_drift() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& d : drift)
        if (d) {
            sum += *d;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

double ExperimentReport::param_percent() const {
    return total_params ? 100.0 * static_cast<double>(trainable_params) / static_cast<double>(total_params) : 0.0;
}

std::string report_to_json(const ExperimentReport& r) {
    nlohmann::ordered_json j;
    j["config"] = r.config.echo();
    j["cell"] = r.config.cell_name();
    j["round_csv"] = r.round_csv;
    j["final_accuracy"] = r.final_accuracy();
    j["best_accuracy"] = r.best_accuracy();
    nlohmann::ordered_json targets = nlohmann::ordered_json::array();
    const auto trace = r.trace();
    for (double t : r.config.targets) {
        const auto rounds = trace.empty() ? std::nullopt : rounds_to_target(trace, t);
        targets.push_back({{"target", t},
                           {"rounds", rounds ? nlohmann::ordered_json(*rounds) : nlohmann::ordered_json(nullptr)},
                           {"display", format_rounds(rounds, r.config.rounds)}});
    }
    j["rounds_to_target"] = targets;
    j["bytes_total"] = r.bytes_total;
    j["trainable_params"] = r.trainable_params;
    j["total_params"] = r.total_params;
    j["param_percent"] = r.param_percent();
    const auto md = r.mean_drift();
    j["mean_drift"] = md ? nlohmann::ordered_json(*md) : nlohmann::ordered_json(nullptr);
    j["accuracy"] = r.accuracy;
    nlohmann::ordered_json drift = nlohmann::ordered_json::array();
    for (const auto& d : r.drift) drift.push_back(d ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(nullptr));
    j["drift"] = drift;
    return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text) {
    ExperimentReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.config = parse_config(j.at("config").get<std::string>());
        r.round_csv = j.at("round_csv").get<std::string>();
        r.accuracy = j.at("accuracy").get<std::vector<double>>();
        for (const auto& d : j.at("drift")) r.drift.push_back(d.is_null() ? std::nullopt : std::optional<double>(d.get<double>()));
        r.bytes_total = j.at("bytes_total").get<std::size_t>();
        r.trainable_params = j.at("trainable_params").get<std::size_t>();
        r.total_params = j.at("total_params").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed report: ") + e.what());
    }
    if (r.accuracy.empty()) throw ParseError("malformed report: empty accuracy trace");
    return r;
}

ExperimentReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read report " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return report_from_json(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

RunOptions default_run_options() {
    RunOptions o;
    const char* out = std::getenv("C2A_OUT_DIR");
    o.output_dir = out && *out ? out : "c2a_out";
    const char* cache = std::getenv("C2A_CACHE_DIR");
    o.cache_dir = cache && *cache ? std::filesystem::path(cache) : o.output_dir / "cache";
    return o;
}

NamedTensors cached_backbone(const Dataset& corpus, const ModelConfig& model, const PretrainOptions& options,
                             const std::filesystem::path& cache_dir) {
    std::string key = fmt::format("v1|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|", model.vocab_size, model.max_seq_len, model.d,
                                  model.n_layers, model.n_heads, model.d_ff, options.steps, options.batch_size,
                                  format_number(options.lr), format_number(options.mask_rate), options.seed);
    for (const auto& ex : corpus) {
        key.append(reinterpret_cast<const char*>(ex.tokens.data()), ex.tokens.size() * sizeof(std::uint32_t));
    }
    const auto path = cache_dir / fmt::format("backbone-{:016x}.bin", rng::fnv1a(key));
    if (std::filesystem::exists(path)) {
        spdlog::debug("backbone cache hit {}", path.string());
        return load_tensors(path);
    }
    const auto start = std::chrono::steady_clock::now();
    auto result = pretrain_backbone(corpus, model, options);
    spdlog::info("pretrained backbone: masked acc {:.3f} (majority {:.3f}) in {:.1f}s", result.masked_accuracy,
                 result.majority_accuracy,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    save_tensors(path, result.backbone);
    return std::move(result.backbone);
}

namespace {

struct LoadedData {
    Dataset train, test, pretrain;
};

LoadedData load_data(const ExperimentConfig& config, const SeedStreams& seeds) {
    LoadedData data;
    if (config.train_path.empty()) {
        CorpusSpec spec = config.corpus;
        spec.seed = seeds.corpus;
        Corpus corpus = synthesize_corpus(spec);
        data.train = std::move(corpus.train);
        data.test = std::move(corpus.test);
        data.pretrain = std::move(corpus.pretrain);
        return data;
    }
    const DatasetLimits limits{config.corpus.vocab_size, config.corpus.num_classes, config.corpus.num_groups,
                               config.corpus.seq_len};
    Dataset train = load_jsonl(config.train_path, limits);
    if (config.test_path.empty()) {
        auto [tr, te] = split(train, config.test_fraction, seeds.split);
        data.train = std::move(tr);
        data.test = std::move(te);
    } else {
        data.train = std::move(train);
        data.test = load_jsonl(config.test_path, limits);
    }
    if (data.train.empty() || data.test.empty()) throw DataError("training and test sets must both be nonempty");
    data.pretrain = data.train;
    return data;
}

Dataset select_probe(const Dataset& test, std::size_t size, std::uint64_t seed) {
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto eng = rng::engine(seed, "probe");
    std::shuffle(idx.begin(), idx.end(), eng);
    idx.resize(std::min(size, idx.size()));
    std::sort(idx.begin(), idx.end());
    Dataset probe;
    for (auto i : idx) probe.push_back(test[i]);
    return probe;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config_in, const RunOptions& options) {
    config_in.validate();
    ExperimentConfig config = config_in;
    const auto seeds = SeedStreams::from(config.seed);
    const auto start = std::chrono::steady_clock::now();

    LoadedData data = load_data(config, seeds);
    if (config.batch_size == 0) config.batch_size = auto_batch_size(data.train.size());
    const ModelConfig model = config.model_config();

    PretrainOptions pre;
    pre.steps = config.pretrain_steps;
    pre.seed = seeds.pretrain;
    const NamedTensors backbone = cached_backbone(data.pretrain, model, pre, options.cache_dir);

    const auto labels = labels_of(data.train);
    const auto partitions =
        config.scheme == "group"
            ? group_partition(labels, groups_of(data.train), config.clients, config.corpus.num_groups, config.beta,
                              seeds.partition)
            : dirichlet_partition(labels, config.clients, config.beta, seeds.partition);

    ModelState state = build_model(model, config.hyper_config(), backbone, seeds.init);
    const auto counts = count_trainable_params(state);
    Dataset probe = select_probe(data.test, config.probe_size, seeds.probe);
    Federation fed(std::move(state), make_clients(data.train, partitions), std::move(data.test), std::move(probe),
                   config.federation_config(config.batch_size));
    fed.run(config.rounds);

    ExperimentReport report;
    report.config = config;
    report.round_csv = config.cell_name() + ".rounds.csv";
    for (const auto& log : fed.logs()) {
        report.accuracy.push_back(log.test_accuracy);
        if (log.round > 0) report.drift.push_back(log.mean_drift());
    }
    report.bytes_total = fed.total_bytes();
    report.trainable_params = counts.trainable;
    report.total_params = counts.total;

    if (options.write_files) {
        std::filesystem::create_directories(options.output_dir);
        std::ofstream csv(options.output_dir / report.round_csv);
        write_round_csv(csv, fed.logs());
        std::ofstream(options.output_dir / (config.cell_name() + ".report.json")) << report_to_json(report);
        if (!csv) throw DataError("failed writing " + (options.output_dir / report.round_csv).string());
    }
    spdlog::info("{}: final acc {:.4f}, best {:.4f}, {:.1f}s", config.cell_name(), report.final_accuracy(),
                 report.best_accuracy(), std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return report;
}

std::vector<std::pair<std::size_t, std::size_t>> epochs_rounds_grid(std::size_t budget) {
    std::vector<std::pair<std::size_t, std::size_t>> grid;
    for (std::size_t e : {1, 2, 4, 8})
        if (budget % e == 0) grid.emplace_back(e, budget / e);
    return grid;
}

std::vector<Method> ablation_methods() {
    return {Method::C2A, Method::C2ANoLE, Method::C2ANoCE, Method::C2ANoNorm, Method::C2AUnfactorized};
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, const SweepSpec& sweep) {
    const auto methods = sweep.methods.empty() ? std::vector<Method>{base.method} : sweep.methods;
    const auto betas = sweep.betas.empty() ? std::vector<double>{base.beta} : sweep.betas;
    const auto seeds = sweep.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : sweep.seeds;
    const auto grid = sweep.epochs_rounds.empty()
                          ? std::vector<std::pair<std::size_t, std::size_t>>{{base.local_epochs, base.rounds}}
                          : sweep.epochs_rounds;
    std::vector<ExperimentConfig> cells;
    for (Method m : methods)
        for (double b : betas)
            for (const auto& [e, r] : grid)
                for (auto s : seeds) {
                    ExperimentConfig c = base;
                    c.name.clear();
                    c.method = m;
                    c.beta = b;
                    c.local_epochs = e;
                    c.rounds = r;
                    c.seed = s;
                    c.validate();
                    cells.push_back(std::move(c));
                }
    return cells;
}

namespace {

struct CellKey {
    std::string scheme;
    double beta;
    std::size_t epochs, rounds;
    bool operator==(const CellKey&) const = default;
};

struct Group {
    Method method;
    CellKey key;
    std::vector<const ExperimentReport*> runs;

    std::vector<double> mean_trace() const {
        std::vector<double> mean(key.rounds, 0.0);
        for (const auto* r : runs) {
            const auto t = r->trace();
            for (std::size_t i = 0; i < mean.size() && i < t.size(); ++i) mean[i] += t[i] / static_cast<double>(runs.size());
        }
        return mean;
    }
};

std::string speedup_cell(const Group& g, const Group* baseline, double target) {
    if (!baseline) return "";
    if (baseline == &g) return "1.00";
    const auto mine = g.mean_trace(), base = baseline->mean_trace();
    if (mine.empty() || base.empty()) return "";
    const auto m = rounds_to_target(mine, target);
    const auto b = rounds_to_target(base, target);
    // Unreached counts as R, which bounds the ratio: ↑ marks a lower bound,
    // ↓ an upper bound.
    if (!m && !b) return "-";
    const std::size_t mr = m ? *m : g.key.rounds;
    const std::size_t br = b ? *b : baseline->key.rounds;
    return fmt::format("{:.2f}{}", speedup(br, mr), !b ? "↑" : (!m ? "↓" : ""));
}

}  // namespace

void emit_results(std::span<const ExperimentReport> reports, std::ostream& out) {
    if (reports.empty()) throw ContractError("emit_results: no reports");
    std::vector<Group> groups;
    for (const auto& r : reports) {
        const CellKey key{r.config.scheme, r.config.beta, r.config.local_epochs, r.config.rounds};
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const Group& g) { return g.method == r.config.method && g.key == key; });
        if (it == groups.end()) {
            groups.push_back({r.config.method, key, {}});
            it = groups.end() - 1;
        }
        it->runs.push_back(&r);
    }
    const auto& targets = reports.front().config.targets;
    out << "method,scheme,beta,E,R,seeds,final_acc_mean,final_acc_sd,mean_drift,param_pct";
    for (double t : targets) out << fmt::format(",rounds@{},speedup@{}", format_number(t), format_number(t));
    out << '\n';
    for (const auto& g : groups) {
        const Group* baseline = nullptr;
        for (const auto& other : groups)
            if (other.method == Method::Adapter && other.key == g.key) baseline = &other;
        const double n = static_cast<double>(g.runs.size());
        double mean = 0.0, drift = 0.0;
        std::size_t drift_n = 0;
        for (const auto* r : g.runs) {
            mean += r->final_accuracy() / n;
            if (auto d = r->mean_drift()) {
                drift += *d;
                ++drift_n;
            }
        }
        double var = 0.0;
        for (const auto* r : g.runs) var += (r->final_accuracy() - mean) * (r->final_accuracy() - mean);
        const double sd = g.runs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        out << fmt::format("{},{},{},{},{},{},{:.4f},{:.4f},{},{:.4f}", to_string(g.method), g.key.scheme,
                           format_number(g.key.beta), g.key.epochs, g.key.rounds, g.runs.size(), mean, sd,
                           drift_n ? fmt::format("{:.4f}", drift / static_cast<double>(drift_n)) : "",
                           g.runs.front()->param_percent());
        const auto trace = g.mean_trace();
        for (double t : targets) {
            const auto rounds = trace.empty() ? std::nullopt : rounds_to_target(trace, t);
            out << ',' << format_rounds(rounds, g.key.rounds) << ',' << speedup_cell(g, baseline, t);
        }
        out << '\n';
    }
}

}  // namespace c2a
