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

#include "c2a/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "c2a/errors.hpp"
#include "c2a/optim.hpp"

namespace c2a {

std::string to_string(PeftMode mode) {
    switch (mode) {
        case PeftMode::C2A: return "c2a";
        case PeftMode::Adapter: return "adapter";
        case PeftMode::LoRA: return "lora";
        case PeftMode::BitFit: return "bitfit";
        case PeftMode::Full: return "full";
    }
    return "unknown";
}

void ModelConfig::validate() const {
    if (d == 0 || n_layers == 0 || n_heads == 0 || vocab_size <= kReservedTokens || max_seq_len == 0 || d_ff == 0) {
        throw ConfigError("model: dimensions must be positive");
    }
    if (d % n_heads != 0) throw ConfigError("model: d must be divisible by n_heads");
    if (r == 0 || r >= d) throw ConfigError("model: r must satisfy 0 < r < d");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
}

Var apply_adapter(Var x, const AdapterVars& adapter) {
    if (!adapter.down.valid() || !adapter.up.valid()) throw ConfigError("apply_adapter: adapter site is unset");
    const Shape shape = x.shape();
    const std::size_t d = shape.back();
    const Shape ds = adapter.down.shape();
    const Shape us = adapter.up.shape();
    if (ds.size() != 2 || us.size() != 2 || ds[1] != d || us[0] != d || ds[0] != us[1]) {
        throw DimensionError("apply_adapter: D " + shape_str(ds) + " / U " + shape_str(us) + " incompatible with x " +
                             shape_str(shape));
    }
    Var flat = ops::reshape(x, Shape{x.value().numel() / d, d});
    Var hidden = ops::gelu(ops::matmul(flat, adapter.down, /*transpose_b=*/true));
    Var out = ops::add(ops::matmul(hidden, adapter.up, /*transpose_b=*/true), flat);
    return ops::reshape(out, shape);
}

Tensor apply_adapter(const Tensor& x, const AdapterParams& adapter) {
    Tape tape;
    AdapterVars vars{tape.bind(adapter.down, false), tape.bind(adapter.up, false)};
    return apply_adapter(tape.bind(x, false), vars).value();
}

namespace names {

std::string block(std::size_t layer, const std::string& leaf) { return "block" + std::to_string(layer) + "." + leaf; }
std::string adapter_down(std::size_t site) { return "adapter" + std::to_string(site) + ".down"; }
std::string adapter_up(std::size_t site) { return "adapter" + std::to_string(site) + ".up"; }
std::string lora(std::size_t layer, char proj, char factor) {
    return block(layer, std::string("lora.") + proj + "." + factor);
}
bool is_bias(const std::string& name) {
    return name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
}
bool is_head(const std::string& name) { return name.rfind("head.", 0) == 0; }

}  // namespace names

ParamBinder::ParamBinder(Tape& tape, const NamedTensors& trainable, const NamedTensors* frozen, bool track_gradients)
    : tape_(tape), trainable_(trainable), frozen_(frozen), track_gradients_(track_gradients) {}

Var ParamBinder::operator()(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    Var v;
    if (auto it = trainable_.find(name); it != trainable_.end()) {
        v = tape_.bind(it->second, track_gradients_);
    } else if (frozen_ != nullptr && frozen_->count(name)) {
        v = tape_.bind(frozen_->at(name), false);
    } else {
        throw ConfigError("model parameter '" + name + "' is missing");
    }
    bound_.emplace(name, v);
    return v;
}

bool ParamBinder::contains(const std::string& name) const {
    return trainable_.count(name) || (frozen_ != nullptr && frozen_->count(name));
}

NamedTensors ParamBinder::gradients() const {
    NamedTensors grads;
    for (const auto& [name, t] : trainable_) {
        auto it = bound_.find(name);
        grads.emplace(name, it == bound_.end() ? Tensor(t.shape) : tape_.grad(it->second));
    }
    return grads;
}

namespace {

Var linear(ParamBinder& p, Var x, const std::string& weight, const std::string& bias) {
    return ops::add_bias(ops::matmul(x, p(weight)), p(bias));
}

// Query/value projection, with the LoRA delta x*A*B when present.
Var projection(ParamBinder& p, const ModelConfig& cfg, Var x, std::size_t layer, char proj) {
    Var out = linear(p, x, names::block(layer, std::string("attn.") + proj + ".weight"),
                     names::block(layer, std::string("attn.") + proj + ".bias"));
    if (cfg.peft_mode == PeftMode::LoRA && (proj == 'q' || proj == 'v')) {
        Var a = p(names::lora(layer, proj, 'a'));
        Var b = p(names::lora(layer, proj, 'b'));
        out = ops::add(out, ops::matmul(ops::matmul(x, a), b));
    }
    return out;
}

Var split_heads(Var x, std::size_t batch, std::size_t len, std::size_t heads, std::size_t head_dim) {
    static constexpr std::array<std::size_t, 4> kOrder{0, 2, 1, 3};
    Var v = ops::reshape(x, Shape{batch, len, heads, head_dim});
    v = ops::permute(v, kOrder);
    return ops::reshape(v, Shape{batch * heads, len, head_dim});
}

Var merge_heads(Var x, std::size_t batch, std::size_t len, std::size_t heads, std::size_t head_dim) {
    static constexpr std::array<std::size_t, 4> kOrder{0, 2, 1, 3};
    Var v = ops::reshape(x, Shape{batch, heads, len, head_dim});
    v = ops::permute(v, kOrder);
    return ops::reshape(v, Shape{batch * len, heads * head_dim});
}

}  // namespace

ForwardOutput forward(ParamBinder& p, const ModelConfig& cfg, const Batch& batch, const AdapterProvider* adapters,
                      bool classify) {
    const std::size_t B = batch.size, L = batch.seq_len, d = cfg.d;
    if (B == 0) throw DataError("forward: empty batch");
    if (L > cfg.max_seq_len) {
        throw DataError("forward: sequence length " + std::to_string(L) + " exceeds max_seq_len " +
                        std::to_string(cfg.max_seq_len));
    }
    for (auto t : batch.tokens) {
        if (t >= cfg.vocab_size) throw IndexError("forward: token id " + std::to_string(t) + " >= vocab_size");
    }
    const bool needs_adapters = cfg.peft_mode == PeftMode::C2A || cfg.peft_mode == PeftMode::Adapter;
    if (needs_adapters && (adapters == nullptr || !*adapters)) {
        throw ConfigError("forward: " + to_string(cfg.peft_mode) + " mode requires adapters for all " +
                          std::to_string(cfg.num_sites()) + " sites");
    }

    std::vector<std::size_t> positions(B * L);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % L;
    Var x = ops::add(ops::gather_rows(p("embed.token"), batch.tokens), ops::gather_rows(p("embed.position"), positions));
    x = ops::layer_norm(x, p("embed.ln.gain"), p("embed.ln.bias"));

    ForwardOutput out;
    const std::size_t H = cfg.n_heads, hd = d / H;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        Var block_in = ops::reshape(x, Shape{B, L, d});
        out.hiddens.push_back(block_in);
        std::pair<AdapterVars, AdapterVars> site_adapters;
        if (needs_adapters) site_adapters = (*adapters)(l, block_in);

        Var q = split_heads(projection(p, cfg, x, l, 'q'), B, L, H, hd);
        Var k = split_heads(projection(p, cfg, x, l, 'k'), B, L, H, hd);
        Var v = split_heads(projection(p, cfg, x, l, 'v'), B, L, H, hd);
        Var attn = ops::softmax_last(ops::scale(ops::batched_matmul(q, k, /*transpose_b=*/true), inv_sqrt_hd));
        Var ctx = merge_heads(ops::batched_matmul(attn, v), B, L, H, hd);
        Var a = linear(p, ctx, names::block(l, "attn.o.weight"), names::block(l, "attn.o.bias"));
        if (needs_adapters) a = apply_adapter(a, site_adapters.first);
        Var h = ops::layer_norm(ops::add(x, a), p(names::block(l, "ln1.gain")), p(names::block(l, "ln1.bias")));

        Var f = ops::gelu(linear(p, h, names::block(l, "ffn.w1.weight"), names::block(l, "ffn.w1.bias")));
        f = linear(p, f, names::block(l, "ffn.w2.weight"), names::block(l, "ffn.w2.bias"));
        if (needs_adapters) f = apply_adapter(f, site_adapters.second);
        x = ops::layer_norm(ops::add(h, f), p(names::block(l, "ln2.gain")), p(names::block(l, "ln2.bias")));
    }
    out.final_hidden = x;
    if (!classify) return out;
    Var pooled = ops::pool(ops::reshape(x, Shape{B, L, d}), 1, PoolMode::Mean);
    out.logits = linear(p, pooled, names::kHeadWeight, names::kHeadBias);
    return out;
}

AdapterProvider direct_adapters(ParamBinder& params) {
    return [&params](std::size_t layer, Var) {
        const std::size_t s0 = SiteId{layer, SitePosition::PostAttention}.index();
        const std::size_t s1 = SiteId{layer, SitePosition::PostFeedForward}.index();
        for (auto s : {s0, s1}) {
            if (!params.contains(names::adapter_down(s)) || !params.contains(names::adapter_up(s))) {
                throw ConfigError("adapter site " + std::to_string(s) + " is missing");
            }
        }
        return std::pair<AdapterVars, AdapterVars>{
            {params(names::adapter_down(s0)), params(names::adapter_up(s0))},
            {params(names::adapter_down(s1)), params(names::adapter_up(s1))}};
    };
}

NamedTensors init_backbone(const ModelConfig& cfg, rng::Engine& eng) {
    cfg.validate();
    NamedTensors p;
    const std::size_t d = cfg.d;
    const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double ff_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
    p["embed.token"] = rng::normal({cfg.vocab_size, d}, 1.0, eng);
    p["embed.position"] = rng::normal({cfg.max_seq_len, d}, 0.1, eng);
    p["embed.ln.gain"] = Tensor({d}, 1.0);
    p["embed.ln.bias"] = Tensor({d}, 0.0);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        for (char proj : {'q', 'k', 'v', 'o'}) {
            const std::string base = std::string("attn.") + proj;
            p[names::block(l, base + ".weight")] = rng::normal({d, d}, w_std, eng);
            p[names::block(l, base + ".bias")] = Tensor({d}, 0.0);
        }
        p[names::block(l, "ffn.w1.weight")] = rng::normal({d, cfg.d_ff}, w_std, eng);
        p[names::block(l, "ffn.w1.bias")] = Tensor({cfg.d_ff}, 0.0);
        p[names::block(l, "ffn.w2.weight")] = rng::normal({cfg.d_ff, d}, ff_std, eng);
        p[names::block(l, "ffn.w2.bias")] = Tensor({d}, 0.0);
        for (const char* ln : {"ln1", "ln2"}) {
            p[names::block(l, std::string(ln) + ".gain")] = Tensor({d}, 1.0);
            p[names::block(l, std::string(ln) + ".bias")] = Tensor({d}, 0.0);
        }
    }
    return p;
}

void init_head(const ModelConfig& cfg, NamedTensors& params, rng::Engine& eng) {
    params[names::kHeadWeight] = rng::normal({cfg.d, cfg.num_classes}, 0.02, eng);
    params[names::kHeadBias] = Tensor({cfg.num_classes}, 0.0);
}

void add_adapters(const ModelConfig& cfg, NamedTensors& params, rng::Engine& eng) {
    for (std::size_t s = 0; s < cfg.num_sites(); ++s) {
        params[names::adapter_down(s)] = rng::normal({cfg.r, cfg.d}, 0.02, eng);
        params[names::adapter_up(s)] = Tensor({cfg.d, cfg.r}, 0.0);
    }
}

void apply_lora(const ModelConfig& cfg, NamedTensors& params, rng::Engine& eng) {
    if (cfg.peft_mode != PeftMode::LoRA) throw ConfigError("apply_lora: model is in " + to_string(cfg.peft_mode) + " mode");
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        for (char proj : {'q', 'v'}) {
            params[names::lora(l, proj, 'a')] = rng::normal({cfg.d, cfg.r}, 0.02, eng);
            params[names::lora(l, proj, 'b')] = Tensor({cfg.r, cfg.d}, 0.0);
        }
}

namespace {

void require_mode(const ModelConfig& cfg, PeftMode expected, const char* what) {
    if (cfg.peft_mode != expected) {
        throw ConfigError(std::string(what) + ": model is in " + to_string(cfg.peft_mode) + " mode, expected " +
                          to_string(expected));
    }
}

bool is_backbone_name(const std::string& name) {
    return name.rfind("embed.", 0) == 0 || (name.rfind("block", 0) == 0 && name.find(".lora.") == std::string::npos);
}

}  // namespace

std::set<std::string> lora_trainable_set(const ModelConfig& cfg, const NamedTensors& params) {
    require_mode(cfg, PeftMode::LoRA, "lora_trainable_set");
    std::set<std::string> out;
    for (const auto& [name, t] : params)
        if (names::is_head(name) || name.find(".lora.") != std::string::npos) out.insert(name);
    return out;
}

std::set<std::string> bitfit_trainable_set(const ModelConfig& cfg, const NamedTensors& params) {
    require_mode(cfg, PeftMode::BitFit, "bitfit_trainable_set");
    std::set<std::string> out;
    for (const auto& [name, t] : params)
        if (names::is_head(name) || names::is_bias(name)) out.insert(name);
    return out;
}

std::set<std::string> full_trainable_set(const ModelConfig& cfg, const NamedTensors& params) {
    require_mode(cfg, PeftMode::Full, "full_trainable_set");
    std::set<std::string> out;
    for (const auto& [name, t] : params) out.insert(name);
    return out;
}

std::set<std::string> trainable_set(const ModelConfig& cfg, const NamedTensors& params) {
    switch (cfg.peft_mode) {
        case PeftMode::LoRA: return lora_trainable_set(cfg, params);
        case PeftMode::BitFit: return bitfit_trainable_set(cfg, params);
        case PeftMode::Full: return full_trainable_set(cfg, params);
        case PeftMode::C2A:
        case PeftMode::Adapter: {
            std::set<std::string> out;
            for (const auto& [name, t] : params)
                if (!is_backbone_name(name)) out.insert(name);
            return out;
        }
    }
    return {};
}

ParamCount count_trainable_params(const NamedTensors& trainable, const NamedTensors& frozen) {
    ParamCount c;
    c.trainable = total_numel(trainable);
    c.total = c.trainable + total_numel(frozen);
    return c;
}

PretrainResult pretrain_backbone(const Dataset& corpus, const ModelConfig& cfg_in, const PretrainOptions& opts) {
    if (corpus.empty()) throw DataError("pretrain_backbone: empty corpus");
    ModelConfig cfg = cfg_in;
    cfg.peft_mode = PeftMode::Full;
    cfg.validate();

    auto init_eng = rng::engine(opts.seed, "pretrain.init");
    NamedTensors params = init_backbone(cfg, init_eng);
    params["mlm.weight"] = rng::normal({cfg.d, cfg.vocab_size}, 0.02, init_eng);
    params["mlm.bias"] = Tensor({cfg.vocab_size}, 0.0);

    // Last tenth is held out for the accuracy report.
    const std::size_t n_eval = std::max<std::size_t>(1, corpus.size() / 10);
    const std::size_t n_train = corpus.size() > n_eval ? corpus.size() - n_eval : corpus.size();

    // Masks non-pad positions; guarantees at least one per batch.
    auto mask_batch = [&](Batch& b, rng::Engine& eng, std::vector<std::size_t>& rows, std::vector<std::size_t>& targets) {
        std::bernoulli_distribution pick(opts.mask_rate);
        rows.clear();
        targets.clear();
        std::size_t first_real = b.tokens.size();
        for (std::size_t i = 0; i < b.tokens.size(); ++i) {
            if (b.tokens[i] == kPadToken) continue;
            first_real = std::min(first_real, i);
            if (pick(eng)) {
                rows.push_back(i);
                targets.push_back(b.tokens[i]);
                b.tokens[i] = kMaskToken;
            }
        }
        if (rows.empty() && first_real < b.tokens.size()) {
            rows.push_back(first_real);
            targets.push_back(b.tokens[first_real]);
            b.tokens[first_real] = kMaskToken;
        }
    };

    AdamW opt(AdamWConfig{.lr = opts.lr, .weight_decay = 0.01});
    auto eng = rng::engine(opts.seed, "pretrain.batches");
    std::uniform_int_distribution<std::size_t> pick_example(0, n_train - 1);
    std::vector<std::size_t> rows, targets, idx(opts.batch_size);
    PretrainResult result;
    for (std::size_t step = 0; step < opts.steps; ++step) {
        for (auto& i : idx) i = pick_example(eng);
        Batch b = make_batch(corpus, idx);
        mask_batch(b, eng, rows, targets);
        if (rows.empty()) continue;
        Tape tape;
        ParamBinder binder(tape, params);
        ForwardOutput fo = forward(binder, cfg, b, nullptr, /*classify=*/false);
        Var logits = ops::add_bias(ops::matmul(ops::gather_rows(fo.final_hidden, rows), binder("mlm.weight")),
                                   binder("mlm.bias"));
        Var loss = ops::softmax_cross_entropy(logits, targets);
        tape.backward(loss);
        opt.step(params, binder.gradients());
        result.final_loss = loss.value()[0];
    }

    // Held-out masked-token accuracy against the majority-token baseline.
    std::vector<std::size_t> token_freq(cfg.vocab_size, 0);
    for (std::size_t i = 0; i < n_train; ++i)
        for (auto t : corpus[i].tokens)
            if (t != kPadToken) ++token_freq[t];
    const auto majority = static_cast<std::size_t>(std::max_element(token_freq.begin(), token_freq.end()) - token_freq.begin());
    auto eval_eng = rng::engine(opts.seed, "pretrain.eval");
    std::size_t correct = 0, majority_correct = 0, total = 0;
    const NamedTensors none;
    for (std::size_t start = n_train == corpus.size() ? 0 : n_train; start < corpus.size(); start += opts.batch_size) {
        std::vector<std::size_t> eidx;
        for (std::size_t i = start; i < std::min(corpus.size(), start + opts.batch_size); ++i) eidx.push_back(i);
        Batch b = make_batch(corpus, eidx);
        mask_batch(b, eval_eng, rows, targets);
        if (rows.empty()) continue;
        Tape tape;
        ParamBinder binder(tape, none, &params);
        ForwardOutput fo = forward(binder, cfg, b, nullptr, /*classify=*/false);
        Var logits = ops::add_bias(ops::matmul(ops::gather_rows(fo.final_hidden, rows), binder("mlm.weight")),
                                   binder("mlm.bias"));
        const Tensor& lv = logits.value();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const double* row = lv.data.data() + r * cfg.vocab_size;
            const auto pred = static_cast<std::size_t>(std::max_element(row, row + cfg.vocab_size) - row);
            correct += pred == targets[r];
            majority_correct += majority == targets[r];
            ++total;
        }
    }
    result.masked_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    result.majority_accuracy = total ? static_cast<double>(majority_correct) / static_cast<double>(total) : 0.0;

    params.erase("mlm.weight");
    params.erase("mlm.bias");
    for (auto& [name, t] : params) t.requires_grad = false;
    result.backbone = std::move(params);
    return result;
}

}  // namespace c2a
