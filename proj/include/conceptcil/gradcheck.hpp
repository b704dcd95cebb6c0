#pragma once

// Central finite-difference check of every trainable scalar of the full objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "conceptcil/fusion_head.hpp"

namespace conceptcil {

struct GradcheckOptions {
    std::size_t batch = 2;
    std::size_t concepts = 5;
    std::size_t dim = 8;
    std::size_t classes = 3;
    double alpha = 0.8;
    double lambda = 0.6;
    double step = 1e-5;
    double tolerance = 1e-4;
    std::uint64_t seed = 0;
};

struct TensorCheck {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
};

struct GradcheckResult {
    std::vector<TensorCheck> tensors;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

/// |a − n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Random instance with inputs uniform in [−1, 1]. Weight matrices are uniform in [−1, 1] scaled by
/// 1/sqrt(fan_in), LayerNorm gains lie in [0.5, 1.5], and bias-like vectors are uniform in [−1, 1].
/// Without the fan-in scaling, logits reach magnitudes around 15 and some class probabilities drop
/// to 1e-11, where the analytic gradient is right but a double-precision central difference of the
/// total loss can no longer resolve it against the 1e-8 denominator floor.
struct GradcheckInstance {
    FusionParams params;
    Matrix z, h;
    std::vector<std::size_t> labels;
    std::vector<std::optional<ConceptSet>> sets;
};

inline GradcheckInstance make_gradcheck_instance(const GradcheckOptions& o) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GradcheckInstance inst;
    inst.params = FusionParams::init(o.dim, o.classes, o.seed);
    for (auto& [name, t] : inst.params.named_tensors()) {
        const bool gain = name.ends_with(".gain");
        const double scale = t->value.rows() > 1 ? 1.0 / std::sqrt(static_cast<double>(t->value.rows())) : 1.0;
        for (double& v : t->value.data()) v = gain ? 1.0 + 0.5 * u(rng) : scale * u(rng);
    }
    inst.z = Matrix(o.batch, o.dim);
    inst.h = Matrix(o.concepts, o.dim);
    for (double& v : inst.z.data()) v = u(rng);
    for (double& v : inst.h.data()) v = u(rng);
    std::uniform_int_distribution<std::size_t> label(0, o.classes - 1);
    std::uniform_int_distribution<std::size_t> pick_concept(0, o.concepts - 1);
    for (std::size_t i = 0; i < o.batch; ++i) {
        inst.labels.push_back(label(rng));
        ConceptSet s{pick_concept(rng), pick_concept(rng)};
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
        inst.sets.emplace_back(std::move(s));
    }
    return inst;
}

inline GradcheckResult run_gradcheck(const GradcheckOptions& o = {}) {
    GradcheckInstance inst = make_gradcheck_instance(o);
    const LossWeights w{o.alpha, o.lambda, true};
    FusionParams& p = inst.params;

    p.zero_grad();
    const ForwardTrace trace = forward(p, inst.z, inst.h);
    composite_loss(p, trace, inst.labels, inst.sets, w);

    GradcheckResult r;
    for (auto& [name, t] : p.named_tensors()) {
        TensorCheck tc{name, t->value.size(), 0.0};
        for (std::size_t i = 0; i < t->value.size(); ++i) {
            const double orig = t->value.data()[i];
            t->value.data()[i] = orig + o.step;
            const double up = objective_value(p, inst.z, inst.h, inst.labels, inst.sets, w).total;
            t->value.data()[i] = orig - o.step;
            const double down = objective_value(p, inst.z, inst.h, inst.labels, inst.sets, w).total;
            t->value.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * o.step);
            tc.max_rel_error = std::max(tc.max_rel_error, relative_error(t->grad.data()[i], numeric));
        }
        r.checked += tc.count;
        r.max_rel_error = std::max(r.max_rel_error, tc.max_rel_error);
        r.tensors.push_back(tc);
    }
    r.passed = r.max_rel_error < o.tolerance;
    return r;
}

}  // namespace conceptcil
