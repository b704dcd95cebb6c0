#pragma once

// Straight-line long double re-implementation of the training objective. It shares no code
// with the library beyond reading parameter values, and its extra precision keeps central
// differences meaningful for gradient entries far below 1e-6.

#include <cmath>
#include <optional>
#include <vector>

#include "conceptcil/fusion_head.hpp"

namespace testsupport {

using LD = long double;
using LMat = std::vector<std::vector<LD>>;

inline LMat to_ld(const conceptcil::Matrix& m) {
    LMat out(m.rows(), std::vector<LD>(m.cols()));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

inline LMat mul(const LMat& a, const LMat& b) {
    LMat out(a.size(), std::vector<LD>(b[0].size(), 0.0L));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    return out;
}

inline LMat layer_norm(const LMat& x, const conceptcil::LayerNormParams& p) {
    LMat out = x;
    const std::size_t d = x[0].size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        LD mean = 0, var = 0;
        for (LD v : x[i]) mean += v;
        mean /= d;
        for (LD v : x[i]) var += (v - mean) * (v - mean);
        var /= d;
        const LD s = std::sqrt(var + static_cast<LD>(conceptcil::kLayerNormEps));
        for (std::size_t j = 0; j < d; ++j)
            out[i][j] = (x[i][j] - mean) / s * p.gain.value(0, j) + p.shift.value(0, j);
    }
    return out;
}

inline LD mean_ce(const LMat& logits, const std::vector<std::size_t>& y) {
    LD total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        LD m = logits[i][0];
        for (LD v : logits[i]) m = std::max(m, v);
        LD s = 0;
        for (LD v : logits[i]) s += std::exp(v - m);
        total += m + std::log(s) - logits[i][y[i]];
    }
    return total / logits.size();
}

inline LMat add_bias(LMat x, const conceptcil::Matrix& b) {
    for (auto& row : x)
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += b(0, j);
    return x;
}

inline LD reference_objective(const conceptcil::FusionParams& p, const conceptcil::Matrix& z,
                              const conceptcil::Matrix& h, const std::vector<std::size_t>& y,
                              const std::vector<std::optional<conceptcil::ConceptSet>>& sets, LD alpha,
                              LD lambda) {
    const LMat zl = to_ld(z), hl = to_ld(h);
    const LMat q = mul(layer_norm(zl, p.ln_img), to_ld(p.w_q.value));
    const LMat hn = layer_norm(hl, p.ln_concept);
    const LMat k = mul(hn, to_ld(p.w_k.value));
    const LMat v = mul(hn, to_ld(p.w_v.value));
    const LD scale = 1.0L / std::sqrt(static_cast<LD>(p.dim()));

    LMat a(q.size(), std::vector<LD>(k.size()));
    LD attn = 0;
    std::size_t active = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        LD m = -INFINITY;
        for (std::size_t n = 0; n < k.size(); ++n) {
            LD s = 0;
            for (std::size_t d = 0; d < q[i].size(); ++d) s += q[i][d] * k[n][d];
            a[i][n] = s * scale;
            m = std::max(m, a[i][n]);
        }
        LD sum = 0;
        for (LD& e : a[i]) sum += (e = std::exp(e - m));
        for (LD& e : a[i]) e /= sum;
        if (sets[i]) {
            ++active;
            for (std::size_t id : *sets[i])
                attn -= std::log(std::max(a[i][id], static_cast<LD>(conceptcil::kAttentionLogFloor)));
        }
    }
    if (active) attn /= active;

    const LMat fused = mul(mul(a, v), to_ld(p.w_o.value));
    const LD ce = mean_ce(add_bias(mul(zl, to_ld(p.h_weight.value)), p.h_bias.value), y);
    const LD aux = mean_ce(add_bias(mul(fused, to_ld(p.aux_weight.value)), p.aux_bias.value), y);
    return alpha * ce + (1 - alpha) * aux + lambda * attn;
}

}  // namespace testsupport
