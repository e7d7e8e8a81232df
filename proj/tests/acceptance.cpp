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

// Acceptance suite: one PASS/FAIL line per criterion with the measured
// numbers. Exits nonzero when any criterion fails.
//
//   acceptance [--out DIR] [--only 1,2,7]

#include <fmt/format.h>
#include <malloc.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "c2a/experiment.hpp"
#include "c2a/metrics.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

namespace {

using namespace c2a;

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Tensor uniform(Shape shape, rng::Engine& eng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = u(eng);
    return t;
}

// sum(out * w) for a fixed random w, so every output entry matters.
Var project(Var out, std::uint64_t seed) {
    auto eng = rng::engine(seed, "acceptance.project");
    return ops::sum(ops::mul(out, out.tape()->constant(rng::normal(out.shape(), 1.0, eng))));
}

// ---------------------------------------------------------------- 1

Outcome gradient_integrity() {
    Stopwatch watch;
    auto eng = rng::engine(1, "acceptance.grad");
    struct Case {
        std::string name;
        NamedTensors inputs;
        testing::LossFn loss;
    };
    const std::vector<std::size_t> axes{1, 2, 0}, rows{2, 0, 2, 1}, labels{1, 0, 2};
    std::vector<Case> cases;
    cases.push_back({"add/sub/mul/scale/add_bias",
                     {{"a", uniform({2, 3, 4}, eng)}, {"b", uniform({2, 3, 4}, eng)}, {"c", uniform({4}, eng)}},
                     [](ParamBinder& p) {
                         Var x = ops::sub(ops::mul(p("a"), p("b")), ops::scale(p("a"), 0.3));
                         return project(ops::add(ops::add_bias(x, p("c")), p("b")), 1);
                     }});
    cases.push_back({"matmul", {{"a", uniform({3, 4}, eng)}, {"b", uniform({4, 5}, eng)}},
                     [](ParamBinder& p) { return project(ops::matmul(p("a"), p("b")), 2); }});
    cases.push_back({"matmul^T", {{"a", uniform({3, 4}, eng)}, {"b", uniform({5, 4}, eng)}},
                     [](ParamBinder& p) { return project(ops::matmul(p("a"), p("b"), true), 3); }});
    cases.push_back({"batched_matmul", {{"a", uniform({2, 3, 4}, eng)}, {"b", uniform({2, 4, 3}, eng)}},
                     [](ParamBinder& p) { return project(ops::batched_matmul(p("a"), p("b")), 4); }});
    cases.push_back({"batched_matmul^T", {{"a", uniform({2, 3, 4}, eng)}, {"b", uniform({2, 5, 4}, eng)}},
                     [](ParamBinder& p) { return project(ops::batched_matmul(p("a"), p("b"), true), 5); }});
    cases.push_back({"transpose", {{"a", uniform({3, 5}, eng)}},
                     [](ParamBinder& p) { return project(ops::transpose(p("a")), 6); }});
    cases.push_back({"reshape", {{"a", uniform({2, 3, 4}, eng)}},
                     [](ParamBinder& p) { return project(ops::reshape(p("a"), Shape{6, 4}), 7); }});
    cases.push_back({"permute", {{"a", uniform({2, 3, 4}, eng)}},
                     [&](ParamBinder& p) { return project(ops::permute(p("a"), axes), 8); }});
    cases.push_back({"gather_rows", {{"a", uniform({3, 5}, eng)}},
                     [&](ParamBinder& p) { return project(ops::gather_rows(p("a"), rows), 9); }});
    cases.push_back({"gelu", {{"a", uniform({4, 5}, eng)}}, [](ParamBinder& p) { return project(ops::gelu(p("a")), 10); }});
    cases.push_back({"softmax", {{"a", uniform({3, 5}, eng)}},
                     [](ParamBinder& p) { return project(ops::softmax_last(p("a")), 11); }});
    cases.push_back({"layer_norm", {{"a", uniform({3, 6}, eng)}, {"g", uniform({6}, eng)}, {"b", uniform({6}, eng)}},
                     [](ParamBinder& p) { return project(ops::layer_norm(p("a"), p("g"), p("b")), 12); }});
    for (std::size_t axis : {0, 1}) {
        cases.push_back({fmt::format("pool mean axis {}", axis), {{"a", uniform({3, 4, 5}, eng)}},
                         [axis](ParamBinder& p) { return project(ops::pool(p("a"), axis, PoolMode::Mean), 13); }});
        cases.push_back({fmt::format("pool max axis {}", axis), {{"a", uniform({3, 4, 5}, eng)}},
                         [axis](ParamBinder& p) { return project(ops::pool(p("a"), axis, PoolMode::Max), 14); }});
    }
    cases.push_back({"normalize l2", {{"a", uniform({3, 5}, eng)}},
                     [](ParamBinder& p) { return project(ops::normalize(p("a"), NormMode::L2Vector), 15); }});
    cases.push_back({"normalize frobenius", {{"a", uniform({3, 5}, eng)}},
                     [](ParamBinder& p) { return project(ops::normalize(p("a"), NormMode::Frobenius), 16); }});
    cases.push_back({"softmax_cross_entropy", {{"a", uniform({3, 4}, eng)}},
                     [&](ParamBinder& p) { return ops::softmax_cross_entropy(p("a"), labels); }});

    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : cases) {
        const auto gc = testing::check_gradients(c.inputs, nullptr, c.loss);
        if (gc.max_rel_error > worst) {
            worst = gc.max_rel_error;
            worst_name = c.name + " " + gc.worst;
        }
    }

    // Full C2A forward on a d=8, r=2, t=4, s=2 model, every trainable entry.
    const auto cfg = testing::tiny_model(PeftMode::C2A);
    auto state = build_model(cfg, testing::tiny_hyper(), testing::random_backbone(cfg, 2), 2);
    testing::randomize(state.trainable, 0.5, 2);
    const Batch batch = make_batch(testing::random_dataset(cfg, 4, 2));
    const auto full = testing::check_gradients(state.trainable, state.frozen.get(), [&](ParamBinder& p) {
        return ops::softmax_cross_entropy(model_forward(p, state, batch, EmbedPhase::Train).logits, batch.labels);
    });
    const double secs = watch.seconds();
    const bool pass = worst < 1e-4 && full.max_rel_error < 1e-4 && full.nonzero > 0 && secs < 10.0;
    return {pass, fmt::format("{} ops max rel err {:.2e} ({}); full C2A forward {} entries, max rel err {:.2e} ({}); "
                              "{:.1f}s (limit 10s)",
                              cases.size(), worst, worst_name, full.checked, full.max_rel_error, full.worst, secs)};
}

// ---------------------------------------------------------------- 2, 3

Outcome composed_weight_invariants() {
    ModelConfig cfg;
    HyperConfig hyper;
    auto eng = rng::engine(2, "acceptance.hyper");
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    double norm_err = 0.0, scale_err = 0.0;
    bool tied_exact = true;
    for (int draw = 0; draw < 100; ++draw) {
        NamedTensors p;
        init_hyper_params(cfg, hyper, p, eng);
        const Tensor client = rng::normal({hyper.t}, 1.0, eng);
        const double c = scale(eng);
        Tape tape;
        Var composed = compose_weight(tape.constant(p.at(names::kFactorF)), tape.constant(p.at(names::kFactorS)));
        norm_err = std::max(norm_err, std::abs(frobenius_norm(composed.value()) - 1.0));
        Tensor scaled_f = p.at(names::kFactorF);
        for (auto& v : scaled_f.data) v *= c;
        Var rescaled = compose_weight(tape.constant(scaled_f), tape.constant(p.at(names::kFactorS)));
        const auto a = generate_adapter(tape.constant(client), composed, cfg.d, cfg.r, true);
        const auto b = generate_adapter(tape.constant(client), rescaled, cfg.d, cfg.r, true);
        scale_err = std::max({scale_err, max_abs_diff(a.up.value(), b.up.value()),
                              max_abs_diff(a.down.value(), b.down.value())});
        tied_exact = tied_exact && a.down.value().same_values(transpose2d(a.up.value()));
    }
    return {norm_err <= 1e-9 && scale_err <= 1e-12 && tied_exact,
            fmt::format("100 draws: max |norm-1| {:.1e} (limit 1e-9), max scale drift {:.1e} (limit 1e-12), "
                        "tied D=U^T exact: {}",
                        norm_err, scale_err, tied_exact ? "yes" : "no")};
}

Outcome generation_linearity() {
    ModelConfig cfg;
    HyperConfig hyper;
    auto eng = rng::engine(3, "acceptance.linear");
    std::uniform_real_distribution<double> coef(-3.0, 3.0);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        NamedTensors p;
        init_hyper_params(cfg, hyper, p, eng);
        const Tensor i1 = rng::normal({hyper.t}, 1.0, eng), i2 = rng::normal({hyper.t}, 1.0, eng);
        const double a = coef(eng), b = coef(eng);
        Tensor mix({hyper.t});
        for (std::size_t k = 0; k < hyper.t; ++k) mix[k] = a * i1[k] + b * i2[k];
        Tape tape;
        Var composed = compose_weight(tape.constant(p.at(names::kFactorF)), tape.constant(p.at(names::kFactorS)));
        const auto g1 = generate_adapter(tape.constant(i1), composed, cfg.d, cfg.r, true);
        const auto g2 = generate_adapter(tape.constant(i2), composed, cfg.d, cfg.r, true);
        const auto gm = generate_adapter(tape.constant(mix), composed, cfg.d, cfg.r, true);
        for (auto part : {&AdapterVars::up, &AdapterVars::down}) {
            const Tensor& x1 = (g1.*part).value();
            const Tensor& x2 = (g2.*part).value();
            const Tensor& xm = (gm.*part).value();
            for (std::size_t j = 0; j < xm.numel(); ++j) worst = std::max(worst, std::abs(xm[j] - (a * x1[j] + b * x2[j])));
        }
    }
    return {worst <= 1e-10, fmt::format("50 trials: max |gen(aI1+bI2) - (a gen(I1) + b gen(I2))| = {:.1e} (limit 1e-10)",
                                        worst)};
}

// ---------------------------------------------------------------- 4

Outcome fedavg_equivalence() {
    auto eng = rng::engine(4, "acceptance.fedavg");
    std::vector<NamedTensors> params;
    const std::vector<std::size_t> sizes{31, 7, 250, 64, 12};
    for (std::size_t k = 0; k < 5; ++k) params.push_back({{"a", rng::normal({4, 6}, 2.0, eng)}, {"b", rng::normal({9}, 1.0, eng)}});
    std::vector<WeightedUpdate> updates;
    for (std::size_t k = 0; k < 5; ++k) updates.push_back({&params[k], sizes[k]});
    const auto agg = fedavg_aggregate(updates);
    long double total = 0;
    for (auto n : sizes) total += n;
    double oracle_err = 0.0;
    for (const auto& [name, t] : agg)
        for (std::size_t i = 0; i < t.numel(); ++i) {
            long double ref = 0;
            for (std::size_t k = 0; k < 5; ++k) ref += static_cast<long double>(sizes[k]) * params[k].at(name)[i];
            oracle_err = std::max(oracle_err, std::abs(t[i] - static_cast<double>(ref / total)));
        }

    // K=1, fraction 1, E=1 federation against a plain training loop.
    const auto cfg = testing::tiny_model(PeftMode::C2A);
    const auto state = build_model(cfg, testing::tiny_hyper(), testing::random_backbone(cfg, 5), 5);
    const Dataset train = testing::random_dataset(cfg, 40, 6), test = testing::random_dataset(cfg, 10, 7);
    FederationConfig fc;
    fc.fraction = 1.0;
    fc.batch_size = 8;
    fc.optimizer.lr = 1e-2;
    fc.seed = 8;
    Federation fed(state, make_clients(train, dirichlet_partition(labels_of(train), 1, 1.0, 0)), test, {}, fc);
    fed.run(20);
    ModelState central = state;
    double loss_err = 0.0;
    for (std::size_t round = 1; round <= 20; ++round) {
        AdamW opt(fc.optimizer);
        const auto order = epoch_order(train.size(), fc.seed, 0, round, 0);
        double sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += fc.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + start,
                                               order.begin() + std::min(order.size(), start + fc.batch_size));
            sum += train_step(central, opt, make_batch(train, idx));
            ++steps;
        }
        loss_err = std::max(loss_err, std::abs(fed.logs()[round].clients.at(0).loss - sum / static_cast<double>(steps)));
    }
    double param_err = 0.0;
    for (const auto& [name, t] : central.trainable) param_err = std::max(param_err, max_abs_diff(fed.global().trainable.at(name), t));
    const bool pass = oracle_err <= 1e-12 && loss_err <= 1e-12 && param_err <= 1e-12;
    return {pass, fmt::format("5-update oracle err {:.1e}; K=1 federation vs centralized over 20 rounds: loss err {:.1e}, "
                              "param err {:.1e} (limit 1e-12)",
                              oracle_err, loss_err, param_err)};
}

// ---------------------------------------------------------------- 5

Outcome partition_statistics() {
    Stopwatch watch;
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < 10; ++c) labels.insert(labels.end(), 1000, c);
    double worst_tvd = 0.0;
    std::vector<double> tops;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (const auto& p : dirichlet_partition(labels, 4, 1e4, seed)) {
            std::vector<double> mass(10, 0.0);
            for (auto i : p.indices) mass[labels[i]] += 1.0 / static_cast<double>(p.indices.size());
            double tvd = 0.0;
            for (double m : mass) tvd += 0.5 * std::abs(m - 0.1);
            worst_tvd = std::max(worst_tvd, tvd);
        }
        for (const auto& p : dirichlet_partition(labels, 4, 0.01, seed)) {
            std::vector<double> mass(10, 0.0);
            for (auto i : p.indices) mass[labels[i]] += 1.0 / static_cast<double>(p.indices.size());
            tops.push_back(*std::max_element(mass.begin(), mass.end()));
        }
    }
    std::sort(tops.begin(), tops.end());
    const double median = 0.5 * (tops[tops.size() / 2 - 1] + tops[tops.size() / 2]);
    const double secs = watch.seconds();
    return {worst_tvd < 0.05 && median >= 0.80 && secs < 5.0,
            fmt::format("beta=1e4 worst client TVD {:.4f} (limit 0.05); beta=0.01 median top-class mass {:.3f} "
                        "(needs >= 0.80); {:.2f}s (limit 5s)",
                        worst_tvd, median, secs)};
}

// ---------------------------------------------------------------- 6

Tensor multiply(const Tensor& a, const Tensor& b) {
    Tensor out({a.dim(0), b.dim(1)}, 0.0);
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j)
            for (std::size_t k = 0; k < a.dim(1); ++k) out.at(i, j) += a.at(i, k) * b.at(k, j);
    return out;
}

Tensor orthogonal(std::size_t p, rng::Engine& eng) {
    Tensor q = rng::normal({p, p}, 1.0, eng);
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < p; ++i) dot += q.at(i, j) * q.at(i, k);
            for (std::size_t i = 0; i < p; ++i) q.at(i, j) -= dot * q.at(i, k);
        }
        double n = 0.0;
        for (std::size_t i = 0; i < p; ++i) n += q.at(i, j) * q.at(i, j);
        for (std::size_t i = 0; i < p; ++i) q.at(i, j) /= std::sqrt(n);
    }
    return q;
}

long double centred_gram_dot(const Tensor& x, const Tensor& y) {
    const std::size_t n = x.dim(0);
    auto centred = [n](const Tensor& m) {
        std::vector<long double> g(n * n, 0.0L), row(n, 0.0L);
        long double all = 0.0L;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < m.dim(1); ++k) g[i * n + j] += static_cast<long double>(m.at(i, k)) * m.at(j, k);
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                row[i] += g[i * n + j] / n;
                all += g[i * n + j] / (n * n);
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += all - row[i] - row[j];
        return g;
    };
    const auto k = centred(x), l = centred(y);
    long double tr = 0.0L;
    for (std::size_t i = 0; i < n * n; ++i) tr += k[i] * l[i];
    return tr;
}

Outcome cka_properties() {
    auto eng = rng::engine(6, "acceptance.cka");
    double self_err = 0.0, inv_err = 0.0, oracle_err = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor x = rng::normal({5, 3}, 1.0, eng), y = rng::normal({5, 3}, 1.0, eng);
        self_err = std::max(self_err, std::abs(linear_cka(x, x) - 1.0));
        const double base = linear_cka(x, y);
        Tensor scaled = y;
        for (auto& v : scaled.data) v *= -4.25;
        inv_err = std::max({inv_err, std::abs(linear_cka(multiply(x, orthogonal(3, eng)), y) - base),
                            std::abs(linear_cka(x, scaled) - base), std::abs(linear_cka(x, multiply(x, orthogonal(3, eng))) - 1.0)});
        const long double ref = centred_gram_dot(x, y) / std::sqrt(centred_gram_dot(x, x) * centred_gram_dot(y, y));
        oracle_err = std::max(oracle_err, std::abs(base - static_cast<double>(ref)));
    }
    return {self_err <= 1e-9 && inv_err <= 1e-9 && oracle_err <= 1e-10,
            fmt::format("50 random 5x3 pairs: self err {:.1e}, orthogonal/scale err {:.1e} (limit 1e-9), HSIC oracle "
                        "err {:.1e} (limit 1e-10)",
                        self_err, inv_err, oracle_err)};
}

// ---------------------------------------------------------------- 7-11

struct Grid {
    std::map<std::pair<Method, double>, std::vector<ExperimentReport>> cells;  // seed order

    const std::vector<ExperimentReport>& at(Method m, double beta) const { return cells.at({m, beta}); }

    double mean_final(Method m, double beta) const {
        double s = 0.0;
        for (const auto& r : at(m, beta)) s += r.final_accuracy();
        return s / static_cast<double>(at(m, beta).size());
    }

    double mean_drift(Method m, double beta) const {
        double s = 0.0;
        for (const auto& r : at(m, beta)) s += r.mean_drift().value_or(NAN);
        return s / static_cast<double>(at(m, beta).size());
    }

    std::vector<double> mean_trace(Method m, double beta) const {
        std::vector<double> mean;
        for (const auto& r : at(m, beta)) {
            const auto t = r.trace();
            mean.resize(t.size(), 0.0);
            for (std::size_t i = 0; i < t.size(); ++i) mean[i] += t[i] / static_cast<double>(at(m, beta).size());
        }
        return mean;
    }
};

constexpr double kHeterogeneous = 0.1;
constexpr double kNearIid = 5.0;
const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3};

ExperimentConfig base_cell() {
    ExperimentConfig c;  // default corpus, K=20, fraction 0.25, E=1, R=40
    c.targets = {0.2, 0.99};
    return c;
}

Grid run_directional_grid(const RunOptions& options, double& seconds) {
    Stopwatch watch;
    SweepSpec spec;
    spec.methods = {Method::C2A, Method::Adapter};
    spec.betas = {kHeterogeneous, kNearIid};
    spec.seeds = kSeeds;
    Grid grid;
    for (const auto& cell : expand_sweep(base_cell(), spec))
        grid.cells[{cell.method, cell.beta}].push_back(run_experiment(cell, options));
    seconds = watch.seconds();
    return grid;
}

Outcome directional_reproduction(const Grid& grid, double seconds) {
    std::string detail;
    bool heterogeneity_hurts = true;
    for (Method m : {Method::C2A, Method::Adapter}) {
        const double lo = grid.mean_final(m, kHeterogeneous), hi = grid.mean_final(m, kNearIid);
        heterogeneity_hurts = heterogeneity_hurts && lo <= hi;
        detail += fmt::format("{} acc beta=0.1 {:.4f} vs beta=5 {:.4f}; ", to_string(m), lo, hi);
    }
    double paired = 0.0;
    const auto& c2a = grid.at(Method::C2A, kHeterogeneous);
    const auto& adapter = grid.at(Method::Adapter, kHeterogeneous);
    for (std::size_t i = 0; i < c2a.size(); ++i) paired += (c2a[i].final_accuracy() - adapter[i].final_accuracy()) / static_cast<double>(c2a.size());
    const bool c2a_wins = grid.mean_final(Method::C2A, kHeterogeneous) > grid.mean_final(Method::Adapter, kHeterogeneous) && paired > 0.0;
    const double c2a_pct = c2a.front().param_percent(), adapter_pct = adapter.front().param_percent();
    const bool fewer = c2a_pct < adapter_pct;
    detail += fmt::format("(a) {}; (b) paired C2A-Adapter diff at beta=0.1 {:+.4f}: {}; (c) params {:.3f}% vs {:.3f}%: {}; "
                          "16 runs in {:.0f}s",
                          heterogeneity_hurts ? "pass" : "FAIL", paired, c2a_wins ? "pass" : "FAIL", c2a_pct, adapter_pct,
                          fewer ? "pass" : "FAIL", seconds);
    return {heterogeneity_hurts && c2a_wins && fewer, detail};
}

Outcome drift_trend(const Grid& grid) {
    const double c2a = grid.mean_drift(Method::C2A, kHeterogeneous);
    const double adapter = grid.mean_drift(Method::Adapter, kHeterogeneous);
    return {c2a >= adapter, fmt::format("mean per-round drift-probe CKA at beta=0.1: C2A {:.4f} vs Adapter {:.4f} "
                                        "(C2A must be >=)",
                                        c2a, adapter)};
}

Outcome rounds_to_target_report(const Grid& grid, const std::filesystem::path& out_dir) {
    const auto c2a = grid.mean_trace(Method::C2A, kHeterogeneous);
    const auto adapter = grid.mean_trace(Method::Adapter, kHeterogeneous);
    // A low target both methods reach: 90% of the weaker method's best
    // seed-mean accuracy, floored to two decimals.
    const double reachable = std::min(*std::max_element(c2a.begin(), c2a.end()), *std::max_element(adapter.begin(), adapter.end()));
    const double target = std::floor(90.0 * reachable) / 100.0;
    const double unreachable = 0.99;
    std::vector<ExperimentReport> reports;
    for (Method m : {Method::Adapter, Method::C2A})
        for (auto r : grid.at(m, kHeterogeneous)) {
            r.config.targets = {target, unreachable};
            reports.push_back(std::move(r));
        }
    std::ostringstream table;
    emit_results(reports, table);
    std::ofstream(out_dir / "rounds_to_target.csv") << table.str();
    const auto rc = rounds_to_target(c2a, target), ra = rounds_to_target(adapter, target);
    const bool both = rc && ra;
    const double s = both ? speedup(*ra, *rc) : 0.0;
    const std::string marker = format_rounds(rounds_to_target(c2a, unreachable), c2a.size());
    const bool rendered = table.str().find(marker) != std::string::npos && marker == fmt::format("{}↑", c2a.size());
    return {both && s >= 1.0 && rendered,
            fmt::format("target {:.2f}: C2A {} rounds, Adapter {} rounds, speedup {:.2f} (needs >= 1.0); target {:.2f} "
                        "rendered as '{}'; table at {}",
                        target, format_rounds(rc, c2a.size()), format_rounds(ra, adapter.size()), s, unreachable, marker,
                        (out_dir / "rounds_to_target.csv").string())};
}

Outcome ablation_harness(const RunOptions& options) {
    ExperimentConfig base = base_cell();
    base.rounds = 10;
    SweepSpec spec;
    spec.methods = ablation_methods();
    std::vector<ExperimentReport> reports;
    std::string accs;
    for (const auto& cell : expand_sweep(base, spec)) {
        reports.push_back(run_experiment(cell, options));
        accs += fmt::format("{} {:.3f}, ", to_string(cell.method), reports.back().final_accuracy());
    }
    std::ostringstream table;
    emit_results(reports, table);
    std::ofstream(options.output_dir / "ablation_summary.csv") << table.str();
    std::size_t rows = 0;
    std::set<std::size_t> widths;
    std::istringstream in(table.str());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        ++rows;
        widths.insert(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')));
    }
    std::size_t factorized = 0, unfactorized = 0;
    for (const auto& r : reports) {
        if (r.config.method == Method::C2A) factorized = r.trainable_params;
        if (r.config.method == Method::C2AUnfactorized) unfactorized = r.trainable_params;
    }
    const bool pass = rows == reports.size() && widths.size() == 1 && unfactorized > factorized;
    return {pass, fmt::format("{} ablation rows at R=10 ({}); trainable params unfactorized {} vs factorized {}",
                              rows, accs.substr(0, accs.size() - 2), unfactorized, factorized)};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism(const Grid& grid, const RunOptions& first) {
    const auto& original = grid.at(Method::C2A, kHeterogeneous).front();
    RunOptions again = first;
    again.output_dir = first.output_dir.parent_path() / "rerun";
    run_experiment(original.config, again);
    const bool csv = slurp(first.output_dir / original.round_csv) == slurp(again.output_dir / original.round_csv);
    const std::string json = original.config.cell_name() + ".report.json";
    const bool report = slurp(first.output_dir / json) == slurp(again.output_dir / json);
    return {csv && report, fmt::format("rerun of {}: round CSV {}, report JSON {}", original.config.cell_name(),
                                       csv ? "byte-identical" : "DIFFERS", report ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    CLI::App app{"Acceptance suite"};
    std::string out = "acceptance_out";
    std::vector<int> only;
    app.add_option("--out", out, "Working directory for experiment outputs");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::warn);

    const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}
                                                : std::set<int>(only.begin(), only.end());
    const std::map<int, std::string> titles{
        {1, "gradient integrity"},        {2, "composed-weight invariants"}, {3, "generation linearity"},
        {4, "FedAvg oracle equivalence"}, {5, "partition statistics"},       {6, "CKA properties"},
        {7, "directional accuracy"},      {8, "drift trend"},                {9, "rounds to target"},
        {10, "ablation harness"},         {11, "determinism"}};
    std::map<int, Outcome> results;
    auto report = [&](int id, const std::function<Outcome()>& fn) {
        if (!selected.count(id)) return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        results[id] = o;
        std::cout << fmt::format("criterion {:>2} {} {}: {}", id, o.pass ? "PASS" : "FAIL", titles.at(id), o.detail)
                  << std::endl;
    };

    report(1, gradient_integrity);
    report(2, composed_weight_invariants);
    report(3, generation_linearity);
    report(4, fedavg_equivalence);
    report(5, partition_statistics);
    report(6, cka_properties);

    const std::filesystem::path root = out;
    RunOptions options{root / "grid", root / "cache", true};
    std::optional<Grid> grid;
    double grid_seconds = 0.0;
    auto with_grid = [&](const std::function<Outcome(const Grid&)>& fn) {
        return [&, fn] {
            if (!grid) grid = run_directional_grid(options, grid_seconds);
            return fn(*grid);
        };
    };
    report(7, with_grid([&](const Grid& g) { return directional_reproduction(g, grid_seconds); }));
    report(8, with_grid(drift_trend));
    report(9, with_grid([&](const Grid& g) { return rounds_to_target_report(g, root); }));
    report(10, [&] { return ablation_harness(RunOptions{root / "ablation", root / "cache", true}); });
    report(11, with_grid([&](const Grid& g) { return determinism(g, options); }));

    const auto passed = std::count_if(results.begin(), results.end(), [](const auto& kv) { return kv.second.pass; });
    std::cout << fmt::format("{}/{} criteria pass", passed, results.size()) << std::endl;
    return passed == static_cast<long>(results.size()) ? 0 : 1;
}
