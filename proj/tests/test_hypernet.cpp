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

#include <gtest/gtest.h>

#include "c2a/errors.hpp"
#include "c2a/hypernet.hpp"
#include "c2a/network.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

namespace c2a {
namespace {

Tensor random_tensor(Shape shape, rng::Engine& eng) { return rng::normal(std::move(shape), 1.0, eng); }

TEST(ComposeWeightTest, AlignedOneHotFactorsAreUnchanged) {
    Tape tape;
    Tensor f({2, 2}, 0.0), s({2, 3}, 0.0);
    f.at(1, 0) = 1.0;
    s.at(0, 2) = 1.0;
    const Tensor out = compose_weight(tape.constant(f), tape.constant(s)).value();
    Tensor expected({2, 3}, 0.0);
    expected.at(1, 2) = 1.0;
    EXPECT_TRUE(out.same_values(expected));
}

TEST(ComposeWeightTest, UnitNormAndScaleInvariance) {
    auto eng = rng::engine(1, "test");
    for (int trial = 0; trial < 100; ++trial) {
        Tape tape;
        const Tensor f = random_tensor({8, 2}, eng), s = random_tensor({2, 8}, eng);
        const Tensor w = compose_weight(tape.constant(f), tape.constant(s)).value();
        EXPECT_NEAR(frobenius_norm(w), 1.0, 1e-9);
        Tensor scaled = f;
        for (auto& v : scaled.data) v *= 3.7;
        EXPECT_LT(max_abs_diff(compose_weight(tape.constant(scaled), tape.constant(s)).value(), w), 1e-12);
    }
}

// U[i][j] = sum_k W[i][j*t + k] I[k], from the d x (r*t) layout directly.
Tensor contraction_oracle(const Tensor& composed, const Tensor& client, std::size_t d, std::size_t r) {
    const std::size_t t = client.numel();
    Tensor up({d, r}, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            long double s = 0;
            for (std::size_t k = 0; k < t; ++k) s += static_cast<long double>(composed.at(i, j * t + k)) * client[k];
            up.at(i, j) = static_cast<double>(s);
        }
    return up;
}

TEST(GenerateAdapterTest, MatchesBruteForceContraction) {
    auto eng = rng::engine(2, "test");
    const std::size_t d = 4, r = 2, t = 3, s = 2;
    Tape tape;
    Var composed = compose_weight(tape.constant(random_tensor({d, s}, eng)), tape.constant(random_tensor({s, r * t}, eng)));
    const Tensor client = random_tensor({t}, eng);
    const auto a = generate_adapter(tape.constant(client), composed, d, r, true);
    const Tensor expected = contraction_oracle(composed.value(), client, d, r);
    EXPECT_LT(max_abs_diff(a.up.value(), expected), 1e-12);
}

TEST(GenerateAdapterTest, ZeroEmbeddingGivesIdentityAdapter) {
    auto eng = rng::engine(3, "test");
    Tape tape;
    Var composed = compose_weight(tape.constant(random_tensor({8, 2}, eng)), tape.constant(random_tensor({2, 8}, eng)));
    const auto a = generate_adapter(tape.constant(Tensor({4}, 0.0)), composed, 8, 2, true);
    for (double v : a.up.value().data) EXPECT_EQ(v, 0.0);
    for (double v : a.down.value().data) EXPECT_EQ(v, 0.0);
    const Tensor x = random_tensor({3, 8}, eng);
    EXPECT_TRUE(apply_adapter(tape.constant(x), a).value().same_values(x));
}

TEST(GenerateAdapterTest, TiedDownIsExactTranspose) {
    auto eng = rng::engine(4, "test");
    Tape tape;
    Var composed = compose_weight(tape.constant(random_tensor({8, 2}, eng)), tape.constant(random_tensor({2, 12}, eng)));
    const auto a = generate_adapter(tape.constant(random_tensor({4}, eng)), composed, 8, 3, true);
    EXPECT_TRUE(a.down.value().same_values(transpose2d(a.up.value())));
}

TEST(GenerateAdapterTest, LinearInTheClientEmbedding) {
    auto eng = rng::engine(5, "test");
    std::uniform_real_distribution<double> coef(-3.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        Var composed =
            compose_weight(tape.constant(random_tensor({8, 2}, eng)), tape.constant(random_tensor({2, 8}, eng)));
        const Tensor i1 = random_tensor({4}, eng), i2 = random_tensor({4}, eng);
        const double a = coef(eng), b = coef(eng);
        Tensor mix({4});
        for (std::size_t k = 0; k < 4; ++k) mix[k] = a * i1[k] + b * i2[k];
        const Tensor u1 = generate_adapter(tape.constant(i1), composed, 8, 2, true).up.value();
        const Tensor u2 = generate_adapter(tape.constant(i2), composed, 8, 2, true).up.value();
        const Tensor um = generate_adapter(tape.constant(mix), composed, 8, 2, true).up.value();
        for (std::size_t j = 0; j < um.numel(); ++j) EXPECT_NEAR(um[j], a * u1[j] + b * u2[j], 1e-10);
    }
}

TEST(GenerateAdapterTest, DimensionMismatchIsConfigError) {
    Tape tape;
    Var composed = tape.constant(Tensor({8, 8}, 0.1));
    EXPECT_THROW(generate_adapter(tape.constant(Tensor({3})), composed, 8, 2, true), ConfigError);
    EXPECT_THROW(generate_adapter(tape.constant(Tensor({4})), composed, 8, 3, true), ConfigError);
}

TEST(GenerateAdapterTest, UnfactorizedShapesAndLinearity) {
    auto eng = rng::engine(6, "test");
    Tape tape;
    Var wu = tape.constant(random_tensor({8 * 2, 4}, eng));
    Var wd = tape.constant(random_tensor({2 * 8, 4}, eng));
    const Tensor i1 = random_tensor({4}, eng);
    const auto a = generate_adapter_unfactorized(tape.constant(i1), wu, wd, 8, 2);
    EXPECT_EQ(a.up.shape(), (Shape{8, 2}));
    EXPECT_EQ(a.down.shape(), (Shape{2, 8}));
    Tensor twice = i1;
    for (auto& v : twice.data) v *= 2.0;
    const auto b = generate_adapter_unfactorized(tape.constant(twice), wu, wd, 8, 2);
    for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(b.down.value()[j], 2.0 * a.down.value()[j], 1e-12);
}

TEST(HyperConfigTest, UnfactorizedMustBeUntied) {
    HyperConfig h;
    h.factorized = false;
    EXPECT_THROW(h.validate(), ConfigError);
    h.tied = false;
    EXPECT_NO_THROW(h.validate());
}

class GeneratorTest : public ::testing::Test {
protected:
    void SetUp() override {
        cfg_ = testing::tiny_model(PeftMode::C2A);
        state_ = build_model(cfg_, testing::tiny_hyper(), testing::random_backbone(cfg_, 7), 7);
        testing::randomize(state_.trainable, 0.5, 7);
        batch_ = make_batch(testing::random_dataset(cfg_, 4, 7));
    }
    ModelConfig cfg_;
    ModelState state_;
    Batch batch_;
};

TEST_F(GeneratorTest, CoversEverySiteAndMatchesForwardPass) {
    Tape tape;
    ParamBinder params(tape, state_.trainable, state_.frozen.get());
    GeneratedAdapterSet during;
    const auto out = model_forward(params, state_, batch_, EmbedPhase::Train, &during);
    const auto after = generate_all_sites(out.hiddens, params, cfg_, state_.hyper, EmbedPhase::Train, batch_.labels);
    ASSERT_EQ(after.adapters.size(), cfg_.num_sites());
    for (std::size_t s = 0; s < cfg_.num_sites(); ++s) {
        EXPECT_TRUE(after.adapters[s].up.value().same_values(during.adapters[s].up.value())) << s;
        EXPECT_TRUE(after.adapters[s].down.value().same_values(transpose2d(after.adapters[s].up.value()))) << s;
    }
}

TEST_F(GeneratorTest, MissingHiddenStatesIsContractError) {
    Tape tape;
    ParamBinder params(tape, state_.trainable, state_.frozen.get());
    const std::vector<Var> one(1);
    EXPECT_THROW(generate_all_sites(one, params, cfg_, state_.hyper, EmbedPhase::Train, batch_.labels), ContractError);
    const std::vector<Var> unset(cfg_.n_layers);
    EXPECT_THROW(generate_all_sites(unset, params, cfg_, state_.hyper, EmbedPhase::Train, batch_.labels), ContractError);
}

TEST_F(GeneratorTest, SitesDifferOnlyThroughLayerEmbeddings) {
    // Equal layer embeddings on sites 0 and 1 (same block, same context)
    // give equal adapters; different ones do not.
    state_.trainable.at("client.layer1") = state_.trainable.at("client.layer0");
    Tape tape;
    ParamBinder params(tape, state_.trainable, state_.frozen.get());
    GeneratedAdapterSet gen;
    model_forward(params, state_, batch_, EmbedPhase::Train, &gen);
    EXPECT_TRUE(gen.adapters[0].up.value().same_values(gen.adapters[1].up.value()));
    EXPECT_FALSE(gen.adapters[2].up.value().same_values(gen.adapters[3].up.value()));
}

TEST_F(GeneratorTest, ScalingTheFactorKeepsPredictions) {
    const Dataset data = testing::random_dataset(cfg_, 6, 8);
    const Tensor before = predict_logits(state_, data, 6);
    for (double c : {0.01, 2.5, 400.0}) {
        ModelState scaled = state_;
        for (auto& v : scaled.trainable.at(names::kFactorF).data) v *= c;
        const Tensor after = predict_logits(scaled, data, 6);
        EXPECT_LT(max_abs_diff(before, after), 1e-12) << c;
    }
}

TEST_F(GeneratorTest, GradientReachesTheFactors) {
    NamedTensors factors{{names::kFactorF, state_.trainable.at(names::kFactorF)},
                         {names::kFactorS, state_.trainable.at(names::kFactorS)}};
    NamedTensors rest = *state_.frozen;
    for (const auto& [name, t] : state_.trainable)
        if (!factors.count(name)) rest[name] = t;
    const auto gc = testing::check_gradients(factors, &rest, [&](ParamBinder& params) {
        return ops::softmax_cross_entropy(model_forward(params, state_, batch_, EmbedPhase::Train).logits,
                                          batch_.labels);
    });
    EXPECT_LT(gc.max_rel_error, 1e-4) << gc.worst;
    EXPECT_EQ(gc.nonzero, gc.checked);
}

TEST(GeneratorCountTest, ClosedFormsIndependentOfDepth) {
    ModelConfig cfg;
    HyperConfig h;
    EXPECT_EQ(generator_param_count(cfg, h), cfg.d * h.s + h.s * cfg.r * h.t);
    cfg.n_layers = 6;
    EXPECT_EQ(generator_param_count(cfg, h), cfg.d * h.s + h.s * cfg.r * h.t);
    h.factorized = false;
    h.tied = false;
    EXPECT_EQ(generator_param_count(cfg, h), 2 * cfg.d * cfg.r * h.t);
}

}  // namespace
}  // namespace c2a
