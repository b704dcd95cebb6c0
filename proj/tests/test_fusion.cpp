#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "conceptcil/gradcheck.hpp"
#include "reference_model.hpp"
#include "support.hpp"

using namespace conceptcil;
using testsupport::random_matrix;

namespace {

FusionParams random_params(std::size_t d, std::size_t c, std::uint64_t seed) {
    return FusionParams::init(d, c, seed);
}

std::vector<std::optional<ConceptSet>> sets_of(std::initializer_list<ConceptSet> s) {
    std::vector<std::optional<ConceptSet>> out;
    for (const auto& e : s) out.emplace_back(e);
    return out;
}

}  // namespace

TEST(Forward, ShapesAndRowSums) {
    std::mt19937_64 rng(1);
    const auto p = random_params(8, 3, 1);
    const Matrix z = random_matrix(2, 8, rng), h = random_matrix(4, 8, rng);
    const auto t = forward(p, z, h);
    EXPECT_EQ(t.q.shape(), "[2x8]");
    EXPECT_EQ(t.k.shape(), "[4x8]");
    EXPECT_EQ(t.v.shape(), "[4x8]");
    EXPECT_EQ(t.attention.shape(), "[2x4]");
    EXPECT_EQ(t.fused.shape(), "[2x8]");
    EXPECT_EQ(t.fused_proj.shape(), "[2x8]");
    EXPECT_EQ(t.logits_img.shape(), "[2x3]");
    EXPECT_EQ(t.logits_aux.shape(), "[2x3]");
    for (std::size_t i = 0; i < 2; ++i) {
        double s = 0;
        for (double v : t.attention.row(i)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    EXPECT_THROW(forward(p, random_matrix(2, 7, rng), h), DimensionError);
    EXPECT_THROW(forward(p, z, Matrix(0, 8)), DimensionError);
}

TEST(Forward, ZeroQueryGivesUniformAttention) {
    std::mt19937_64 rng(2);
    auto p = random_params(6, 2, 2);
    p.w_q.value.fill(0.0);
    const Matrix z = random_matrix(3, 6, rng), h = random_matrix(5, 6, rng);
    const auto t = forward(p, z, h);
    for (double a : t.attention.data()) EXPECT_DOUBLE_EQ(a, 0.2);
    const Matrix mean = column_sums(t.v) * (1.0 / 5.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(t.fused(i, j), mean(0, j), 1e-12);
}

TEST(Forward, SingleConceptTakesAllAttention) {
    std::mt19937_64 rng(3);
    const auto p = random_params(6, 2, 3);
    const auto t = forward(p, random_matrix(4, 6, rng), random_matrix(1, 6, rng));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(t.attention(i, 0), 1.0);
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(t.fused(i, j), t.v(0, j));
    }
}

TEST(Forward, IsPure) {
    std::mt19937_64 rng(4);
    const auto p = random_params(8, 3, 4);
    const Matrix z = random_matrix(5, 8, rng), h = random_matrix(6, 8, rng);
    const auto a = forward(p, z, h), b = forward(p, z, h);
    EXPECT_EQ(a.attention, b.attention);
    EXPECT_EQ(a.logits_aux, b.logits_aux);
    EXPECT_EQ(a.logits_img, b.logits_img);
}

TEST(Forward, FusedFeatureStaysInConvexHullOfValues) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_params(8, 2, static_cast<std::uint64_t>(trial));
        Matrix h = random_matrix(5, 8, rng);
        const Matrix z = random_matrix(4, 8, rng);
        // Append a concept, then re-check containment over the enlarged value set.
        h = vstack(h, random_matrix(1, 8, rng, -3, 3));
        const auto t = forward(p, z, h);
        for (std::size_t j = 0; j < 8; ++j) {
            double lo = t.v(0, j), hi = t.v(0, j);
            for (std::size_t r = 1; r < t.v.rows(); ++r) {
                lo = std::min(lo, t.v(r, j));
                hi = std::max(hi, t.v(r, j));
            }
            for (std::size_t i = 0; i < 4; ++i) {
                EXPECT_GE(t.fused(i, j), lo - 1e-12);
                EXPECT_LE(t.fused(i, j), hi + 1e-12);
            }
        }
    }
}

TEST(AttentionLoss, WorkedValues) {
    const Matrix uniform{{0.25, 0.25, 0.25, 0.25}};
    EXPECT_NEAR(attention_loss(uniform, sets_of({{2}})).loss, std::log(4.0), 1e-12);
    EXPECT_NEAR(attention_loss(uniform, sets_of({{1, 3}})).loss, 2.0 * std::log(4.0), 1e-12);
    const Matrix onehot{{0, 0, 1, 0}};
    EXPECT_EQ(attention_loss(onehot, sets_of({{2}})).loss, 0.0);
}

TEST(AttentionLoss, FloorAndErrors) {
    const Matrix zero_mass{{1, 0}};
    EXPECT_NEAR(attention_loss(zero_mass, sets_of({{1}})).loss, -std::log(1e-12), 1e-9);
    EXPECT_THROW(attention_loss(zero_mass, sets_of({{}})), ConfigError);
    EXPECT_THROW(attention_loss(zero_mass, sets_of({{2}})), RangeError);
    // Unconstrained rows are skipped and do not count toward the mean.
    const Matrix two{{0.5, 0.5}, {0.25, 0.75}};
    std::vector<std::optional<ConceptSet>> s{std::nullopt, ConceptSet{0}};
    EXPECT_NEAR(attention_loss(two, s).loss, std::log(4.0), 1e-12);
}

TEST(AttentionLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = random_matrix(3, 5, rng, 0.05, 1.0);
        const auto sets = sets_of({{0, 2}, {4}, {1, 2, 3}});
        auto f = [&] { return attention_loss(a, sets).loss; };
        EXPECT_LT(testsupport::max_rel_err(attention_loss(a, sets).grad, testsupport::numeric_grad(a, f)), 1e-6);
    }
}

TEST(CompositeLoss, LinearCombination) {
    EXPECT_DOUBLE_EQ(combine_losses(1.0, 2.0, 0.5, 0.8, 0.6), 1.5);
}

TEST(CompositeLoss, DegenerateWeightsReduceToImageCrossEntropy) {
    std::mt19937_64 rng(7);
    auto p = random_params(8, 3, 7);
    const Matrix z = random_matrix(4, 8, rng), h = random_matrix(5, 8, rng);
    const std::vector<std::size_t> y{0, 1, 2, 1};
    const auto sets = sets_of({{0}, {1}, {2}, {1, 3}});
    p.zero_grad();
    const auto t = forward(p, z, h);
    const auto l = composite_loss(p, t, y, sets, {1.0, 0.0, true});
    EXPECT_EQ(l.total, cross_entropy(t.logits_img, y).loss);
    EXPECT_GT(l.aux, 0.0);  // still reported
    for (auto& [name, tensor] : p.named_tensors()) {
        if (name == "h.weight" || name == "h.bias") continue;
        for (double g : tensor->grad.data()) EXPECT_EQ(g, 0.0) << name;
    }
}

TEST(CompositeLoss, RejectsBadWeights) {
    auto p = random_params(4, 2, 0);
    const Matrix z(1, 4, 1.0), h(1, 4, 1.0);
    const std::vector<std::size_t> y{0};
    const auto t = forward(p, z, h);
    EXPECT_THROW(composite_loss(p, t, y, sets_of({{0}}), {1.5, 0.6, true}), ConfigError);
    EXPECT_THROW(composite_loss(p, t, y, sets_of({{0}}), {0.5, -1.0, true}), ConfigError);
}

TEST(Gradcheck, ReferenceObjectiveAgreesWithLibrary) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GradcheckOptions o;
        o.seed = seed;
        auto inst = make_gradcheck_instance(o);
        const LossWeights w{o.alpha, o.lambda, true};
        const double lib = objective_value(inst.params, inst.z, inst.h, inst.labels, inst.sets, w).total;
        const auto ref = testsupport::reference_objective(inst.params, inst.z, inst.h, inst.labels, inst.sets,
                                                          o.alpha, o.lambda);
        EXPECT_NEAR(lib, static_cast<double>(ref), 1e-12) << "seed " << seed;
    }
}

// Central differences (step 1e-5) of the long double reference, so roundoff in the oracle sits
// far below the 1e-8 denominator floor even for near-zero gradient entries.
TEST(Gradcheck, EveryParameterOverTwentyTrials) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GradcheckOptions o;
        o.seed = seed;
        auto inst = make_gradcheck_instance(o);
        FusionParams& p = inst.params;
        const LossWeights w{o.alpha, o.lambda, true};
        p.zero_grad();
        composite_loss(p, forward(p, inst.z, inst.h), inst.labels, inst.sets, w);
        std::size_t checked = 0;
        for (auto& [name, t] : p.named_tensors()) {
            double worst = 0.0;
            for (std::size_t i = 0; i < t->value.size(); ++i) {
                const double keep = t->value.data()[i];
                auto eval = [&](double x) {
                    t->value.data()[i] = x;
                    return testsupport::reference_objective(p, inst.z, inst.h, inst.labels, inst.sets, o.alpha,
                                                            o.lambda);
                };
                const long double up = eval(keep + o.step), down = eval(keep - o.step);
                t->value.data()[i] = keep;
                // The perturbation actually applied, which differs from o.step by rounding.
                const long double span = static_cast<long double>(keep + o.step) - (keep - o.step);
                worst = std::max(worst, relative_error(t->grad.data()[i], static_cast<double>((up - down) / span)));
                ++checked;
            }
            EXPECT_LT(worst, 1e-4) << "seed " << seed << " tensor " << name;
        }
        EXPECT_EQ(checked, 4u * 64u + 4u * 8u + 2u * (8u * 3u + 3u));
    }
}

TEST(Gradcheck, OtherShapesAndWeights) {
    GradcheckOptions o;
    o.batch = 4;
    o.concepts = 3;
    o.dim = 5;
    o.classes = 4;
    o.alpha = 0.3;
    o.lambda = 1.7;
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        o.seed = seed;
        const auto r = run_gradcheck(o);
        EXPECT_TRUE(r.passed) << "seed " << seed << " max " << r.max_rel_error;
    }
}

TEST(Gradcheck, RelativeErrorDenominatorFloor) {
    EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-8);
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}

TEST(Predict, WeightedFusionAndTieBreak) {
    FusionParams p = FusionParams::init(2, 2, 0);
    p.h_weight.value.fill(0.0);
    p.aux_weight.value.fill(0.0);
    p.h_bias.value = Matrix{{2, 0}};
    p.aux_bias.value = Matrix{{0, 2}};
    const Matrix z{{0.3, -0.1}}, h{{1, 0}};
    const auto pr = predict(p, z, h, 0.8);
    EXPECT_NEAR(pr.logits(0, 0), 1.6, 1e-15);
    EXPECT_NEAR(pr.logits(0, 1), 0.4, 1e-15);
    EXPECT_EQ(pr.classes[0], 0u);

    p.h_bias.value = Matrix{{1, 0}};
    p.aux_bias.value = Matrix{{0, 1}};
    const auto tie = predict(p, z, h, 0.5);
    EXPECT_EQ(tie.logits(0, 0), tie.logits(0, 1));
    EXPECT_EQ(tie.classes[0], 0u);
    EXPECT_THROW(predict(p, z, h, 1.2), ConfigError);
}

TEST(Predict, AlphaOneIgnoresAttentionPath) {
    std::mt19937_64 rng(8);
    auto p = random_params(8, 4, 8);
    const Matrix z = random_matrix(10, 8, rng), h = random_matrix(6, 8, rng);
    const auto base = predict(p, z, h, 1.0);
    EXPECT_EQ(base.classes, argmax_rows(image_logits(p, z)));
    for (ParamTensor* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.aux_weight, &p.aux_bias}) {
        for (double& v : t->value.data()) v += 3.0;
    }
    EXPECT_EQ(predict(p, z, h, 1.0).classes, base.classes);
    EXPECT_EQ(predict(p, z, Matrix(), 1.0).classes, base.classes);
}

TEST(ExpandClasses, PreservesOldColumnsAndComposes) {
    std::mt19937_64 rng(9);
    auto p = random_params(6, 2, 42);
    const Matrix z = random_matrix(5, 6, rng), h = random_matrix(3, 6, rng);
    const auto before = forward(p, z, h);
    auto direct = p;
    p.expand_classes(4, 42);
    const auto after = forward(p, z, h);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
            EXPECT_EQ(after.logits_img(i, c), before.logits_img(i, c));
            EXPECT_EQ(after.logits_aux(i, c), before.logits_aux(i, c));
        }

    auto stepwise = random_params(6, 2, 42);
    stepwise.expand_classes(3, 42);
    stepwise.expand_classes(5, 42);
    direct.expand_classes(5, 42);
    EXPECT_EQ(stepwise.h_weight.value, direct.h_weight.value);
    EXPECT_EQ(stepwise.aux_weight.value, direct.aux_weight.value);
    EXPECT_EQ(random_params(6, 5, 42).h_weight.value, direct.h_weight.value);
    EXPECT_THROW(direct.expand_classes(5, 42), RangeError);
    EXPECT_THROW(direct.expand_classes(2, 42), RangeError);
}

TEST(Init, DeclaredScheme) {
    const auto p = random_params(64, 50, 3);
    auto stddev = [](const Matrix& m) {
        double s = 0, mean = 0;
        for (double v : m.data()) mean += v;
        mean /= static_cast<double>(m.size());
        for (double v : m.data()) s += (v - mean) * (v - mean);
        return std::sqrt(s / static_cast<double>(m.size()));
    };
    EXPECT_NEAR(stddev(p.w_q.value), 1.0 / 8.0, 0.01);
    EXPECT_NEAR(stddev(p.h_weight.value), 0.02, 0.002);
    for (double b : p.h_bias.value.data()) EXPECT_EQ(b, 0.0);
    for (double g : p.ln_img.gain.value.data()) EXPECT_EQ(g, 1.0);
    EXPECT_EQ(random_params(64, 50, 3).w_k.value, p.w_k.value);
    EXPECT_NE(random_params(64, 50, 4).w_k.value, p.w_k.value);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto dir = testsupport::scratch("fusion_ckpt");
    auto p = random_params(8, 3, 11);
    std::mt19937_64 rng(11);
    for (auto& [name, t] : p.named_tensors()) t->value = random_matrix(t->value.rows(), t->value.cols(), rng);
    save_checkpoint(p, dir, 7);
    auto back = load_checkpoint(dir);
    EXPECT_EQ(back.pool_size, 7u);
    auto names = p.named_tensors();
    auto back_names = back.params.named_tensors();
    for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(names[i].second->value, back_names[i].second->value);
    EXPECT_THROW(load_checkpoint(dir / "missing"), IoError);
    std::filesystem::remove(dir / "W_o.cemb");
    EXPECT_THROW(load_checkpoint(dir), IoError);
}

TEST(Gradcheck, DefaultInstanceRunsWellUnderTenSeconds) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_gradcheck();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_TRUE(r.passed);
    EXPECT_LT(s, 10.0);
}
