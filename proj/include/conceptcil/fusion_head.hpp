#pragma once

// Image/concept cross-attention head.
//
//   z' = LN_img(z)            H' = LN_concept(H)
//   q  = z' W_q               K = H' W_k          V = H' W_v
//   a  = softmax(q Kᵀ / √D)   z_aux = a V         z'_aux = z_aux W_o
//   logits_img = z h + b_h    logits_aux = z'_aux h_aux + b_aux
//
// Single head, no residual path. The image classifier reads the raw feature z.
// Training objective: α CE(logits_img) + (1 − α) CE(logits_aux) + λ L_attn(a),
// with L_attn = mean over constrained rows of −Σ_{i ∈ S(c)} log a_i.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptcil/embedding_io.hpp"
#include "conceptcil/matrix.hpp"
#include "conceptcil/ops.hpp"

namespace conceptcil {

using ConceptSet = std::vector<std::size_t>;

inline constexpr double kAttentionLogFloor = 1e-12;

struct FusionParams {
    ParamTensor w_q, w_k, w_v, w_o;
    LayerNormParams ln_img, ln_concept;
    ParamTensor h_weight, h_bias;
    ParamTensor aux_weight, aux_bias;

    std::size_t dim() const noexcept { return w_q.value.rows(); }
    std::size_t num_classes() const noexcept { return h_weight.value.cols(); }

    /// Projections ~ N(0, (1/√D)²), classifier weights ~ N(0, 0.02²), biases 0, LayerNorm identity.
    static FusionParams init(std::size_t dim, std::size_t num_classes, std::uint64_t seed) {
        if (dim == 0) throw DimensionError("fusion head: dimension must be >= 1");
        FusionParams p;
        const double proj_std = 1.0 / std::sqrt(static_cast<double>(dim));
        std::uint64_t tag = 0;
        for (ParamTensor* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) {
            std::seed_seq seq{seed, std::uint64_t{0x70726f6a}, tag++};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> normal(0.0, proj_std);
            Matrix m(dim, dim);
            for (double& v : m.data()) v = normal(rng);
            *w = ParamTensor(std::move(m));
        }
        p.ln_img = LayerNormParams::identity(dim);
        p.ln_concept = LayerNormParams::identity(dim);
        p.h_weight = ParamTensor(Matrix(dim, 0));
        p.h_bias = ParamTensor(Matrix(1, 0));
        p.aux_weight = ParamTensor(Matrix(dim, 0));
        p.aux_bias = ParamTensor(Matrix(1, 0));
        if (num_classes > 0) p.expand_classes(num_classes, seed);
        return p;
    }

    /// Append classifier columns for classes [C, new_count). Existing columns are untouched;
    /// each new column is seeded from (seed, head, column) so growth order does not matter.
    void expand_classes(std::size_t new_count, std::uint64_t seed) {
        const std::size_t old = num_classes();
        if (new_count <= old) {
            throw RangeError("expand_classes: new class count " + std::to_string(new_count) +
                             " must exceed current " + std::to_string(old));
        }
        const std::size_t d = dim();
        auto grow = [&](ParamTensor& w, ParamTensor& b, std::uint64_t head) {
            Matrix nw(d, new_count);
            Matrix nb(1, new_count);
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < old; ++c) nw(r, c) = w.value(r, c);
            for (std::size_t c = 0; c < old; ++c) nb(0, c) = b.value(0, c);
            for (std::size_t c = old; c < new_count; ++c) {
                std::seed_seq seq{seed, std::uint64_t{0x68656164}, head, std::uint64_t{c}};
                std::mt19937_64 rng(seq);
                std::normal_distribution<double> normal(0.0, 0.02);
                for (std::size_t r = 0; r < d; ++r) nw(r, c) = normal(rng);
            }
            w = ParamTensor(std::move(nw));
            b = ParamTensor(std::move(nb));
        };
        grow(h_weight, h_bias, 0);
        grow(aux_weight, aux_bias, 1);
    }

    /// Stable tensor names, used for optimizers, gradient checks and checkpoints.
    std::vector<std::pair<std::string, ParamTensor*>> named_tensors() {
        return {{"W_q", &w_q},
                {"W_k", &w_k},
                {"W_v", &w_v},
                {"W_o", &w_o},
                {"ln_img.gain", &ln_img.gain},
                {"ln_img.shift", &ln_img.shift},
                {"ln_concept.gain", &ln_concept.gain},
                {"ln_concept.shift", &ln_concept.shift},
                {"h.weight", &h_weight},
                {"h.bias", &h_bias},
                {"h_aux.weight", &aux_weight},
                {"h_aux.bias", &aux_bias}};
    }

    std::vector<ParamTensor*> all_tensors() {
        std::vector<ParamTensor*> out;
        for (auto& [name, t] : named_tensors()) out.push_back(t);
        return out;
    }

    std::vector<ParamTensor*> image_head_tensors() { return {&h_weight, &h_bias}; }

    void zero_grad() {
        for (ParamTensor* t : all_tensors()) t->zero_grad();
    }
};

struct ForwardTrace {
    Matrix z;                          // raw image features (input of h)
    Matrix z_norm, h_norm;             // z', H'
    LayerNormCache z_cache, h_cache;
    Matrix q, k, v;
    Matrix attention;                  // a, rows sum to 1
    Matrix fused;                      // z_aux
    Matrix fused_proj;                 // z'_aux
    Matrix logits_img, logits_aux;
};

inline void check_forward_shapes(const FusionParams& p, const Matrix& z, const Matrix* h) {
    if (z.cols() != p.dim()) {
        throw DimensionError("fusion forward: image features " + z.shape() + " vs model dim " +
                             std::to_string(p.dim()));
    }
    if (h != nullptr) {
        if (h->rows() == 0) throw DimensionError("fusion forward: concept matrix has no rows");
        if (h->cols() != p.dim()) {
            throw DimensionError("fusion forward: concept features " + h->shape() + " vs model dim " +
                                 std::to_string(p.dim()));
        }
    }
}

inline ForwardTrace forward(const FusionParams& p, const Matrix& z, const Matrix& h) {
    check_forward_shapes(p, z, &h);
    ForwardTrace t;
    t.z = z;
    t.z_norm = layernorm_forward(z, p.ln_img, kLayerNormEps, &t.z_cache);
    t.h_norm = layernorm_forward(h, p.ln_concept, kLayerNormEps, &t.h_cache);
    t.q = linear_forward(t.z_norm, p.w_q);
    t.k = linear_forward(t.h_norm, p.w_k);
    t.v = linear_forward(t.h_norm, p.w_v);
    Matrix scores = matmul_nt(t.q, t.k);
    scores *= 1.0 / std::sqrt(static_cast<double>(p.dim()));
    t.attention = softmax_rows(scores);
    t.fused = matmul(t.attention, t.v);
    t.fused_proj = linear_forward(t.fused, p.w_o);
    t.logits_img = linear_forward(z, p.h_weight, &p.h_bias);
    t.logits_aux = linear_forward(t.fused_proj, p.aux_weight, &p.aux_bias);
    return t;
}

inline Matrix image_logits(const FusionParams& p, const Matrix& z) {
    check_forward_shapes(p, z, nullptr);
    return linear_forward(z, p.h_weight, &p.h_bias);
}

/// Mean over constrained rows of −Σ_{i∈S} log(max(a_i, floor)). Rows with no set are skipped.
inline LossAndGrad attention_loss(const Matrix& a, std::span<const std::optional<ConceptSet>> sets) {
    if (sets.size() != a.rows()) {
        throw DimensionError("attention_loss: " + std::to_string(sets.size()) +
                             " concept sets for attention " + a.shape());
    }
    LossAndGrad out{0.0, Matrix(a.rows(), a.cols())};
    std::size_t active = 0;
    for (const auto& s : sets) {
        if (!s) continue;
        if (s->empty()) throw ConfigError("attention_loss: labeled sample has an empty concept set");
        ++active;
    }
    if (active == 0) return out;
    const double inv = 1.0 / static_cast<double>(active);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        if (!sets[r]) continue;
        for (std::size_t id : *sets[r]) {
            if (id >= a.cols()) {
                throw RangeError("attention_loss: concept id " + std::to_string(id) + " >= N = " +
                                 std::to_string(a.cols()));
            }
            const double ai = a(r, id);
            if (ai > kAttentionLogFloor) {
                out.loss -= std::log(ai) * inv;
                out.grad(r, id) -= inv / ai;
            } else {
                out.loss -= std::log(kAttentionLogFloor) * inv;
            }
        }
    }
    return out;
}

struct LossWeights {
    double alpha = 0.8;
    double lambda = 0.6;
    bool concept_branch = true;
};

struct LossBreakdown {
    double ce = 0.0;
    double aux = 0.0;
    double attn = 0.0;
    double total = 0.0;
};

inline double combine_losses(double ce, double aux, double attn, double alpha, double lambda) {
    return alpha * ce + (1.0 - alpha) * aux + lambda * attn;
}

/// Loss and full backward pass for the concept-branch model. Accumulates into the grads
/// of `p`; the caller zeroes them beforehand.
inline LossBreakdown composite_loss(FusionParams& p, const ForwardTrace& t,
                                    std::span<const std::size_t> labels,
                                    std::span<const std::optional<ConceptSet>> sets,
                                    const LossWeights& w) {
    if (!(w.alpha >= 0.0 && w.alpha <= 1.0)) throw ConfigError("composite_loss: alpha must be in [0, 1]");
    if (!(w.lambda >= 0.0)) throw ConfigError("composite_loss: lambda must be >= 0");

    LossBreakdown out;
    auto ce = cross_entropy(t.logits_img, labels);
    auto aux = cross_entropy(t.logits_aux, labels);
    LossAndGrad attn{0.0, Matrix(t.attention.rows(), t.attention.cols())};
    if (w.lambda > 0.0) attn = attention_loss(t.attention, sets);
    out.ce = ce.loss;
    out.aux = aux.loss;
    out.attn = attn.loss;
    out.total = combine_losses(ce.loss, aux.loss, attn.loss, w.alpha, w.lambda);

    // Image head.
    ce.grad *= w.alpha;
    linear_backward(t.z, p.h_weight, &p.h_bias, ce.grad);

    // Auxiliary head → projection → attention mixing.
    aux.grad *= 1.0 - w.alpha;
    const Matrix d_fused_proj = linear_backward(t.fused_proj, p.aux_weight, &p.aux_bias, aux.grad);
    const Matrix d_fused = linear_backward(t.fused, p.w_o, nullptr, d_fused_proj);
    Matrix d_attention = matmul_nt(d_fused, t.v);
    const Matrix d_v = matmul_tn(t.attention, d_fused);
    attn.grad *= w.lambda;
    d_attention += attn.grad;

    Matrix d_scores = softmax_rows_backward(t.attention, d_attention);
    d_scores *= 1.0 / std::sqrt(static_cast<double>(p.dim()));
    const Matrix d_q = matmul(d_scores, t.k);
    const Matrix d_k = matmul_tn(d_scores, t.q);

    const Matrix d_z_norm = linear_backward(t.z_norm, p.w_q, nullptr, d_q);
    Matrix d_h_norm = linear_backward(t.h_norm, p.w_k, nullptr, d_k);
    d_h_norm += linear_backward(t.h_norm, p.w_v, nullptr, d_v);
    layernorm_backward(t.z_cache, p.ln_img, d_z_norm);
    layernorm_backward(t.h_cache, p.ln_concept, d_h_norm);
    return out;
}

/// Objective value only (no gradients), for finite-difference checks.
inline LossBreakdown objective_value(const FusionParams& p, const Matrix& z, const Matrix& h,
                                     std::span<const std::size_t> labels,
                                     std::span<const std::optional<ConceptSet>> sets, const LossWeights& w) {
    const ForwardTrace t = forward(p, z, h);
    LossBreakdown out;
    out.ce = cross_entropy(t.logits_img, labels).loss;
    out.aux = cross_entropy(t.logits_aux, labels).loss;
    out.attn = w.lambda > 0.0 ? attention_loss(t.attention, sets).loss : 0.0;
    out.total = combine_losses(out.ce, out.aux, out.attn, w.alpha, w.lambda);
    return out;
}

/// Image-head-only objective (concept branch disabled): plain cross-entropy on h.
inline LossBreakdown image_only_loss(FusionParams& p, const Matrix& z, std::span<const std::size_t> labels) {
    const Matrix logits = image_logits(p, z);
    auto ce = cross_entropy(logits, labels);
    linear_backward(z, p.h_weight, &p.h_bias, ce.grad);
    return {ce.loss, 0.0, 0.0, ce.loss};
}

struct Prediction {
    Matrix logits;
    std::vector<std::size_t> classes;
};

inline std::vector<std::size_t> argmax_rows(const Matrix& m) {
    std::vector<std::size_t> out(m.rows(), 0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < m.cols(); ++j)
            if (m(i, j) > m(i, best)) best = j;  // strict: ties go to the lower index
        out[i] = best;
    }
    return out;
}

/// final = α·logits_img + (1 − α)·logits_aux. With α = 1 the concept path is not evaluated
/// and `h` may be empty.
inline Prediction predict(const FusionParams& p, const Matrix& z, const Matrix& h, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("predict: alpha must be in [0, 1]");
    Prediction out;
    if (alpha == 1.0) {
        out.logits = image_logits(p, z);
    } else {
        const ForwardTrace t = forward(p, z, h);
        out.logits = t.logits_img * alpha;
        out.logits += t.logits_aux * (1.0 - alpha);
    }
    out.classes = argmax_rows(out.logits);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: a directory with manifest.json and one float64 CEMB file per tensor.

inline void save_checkpoint(FusionParams& p, const std::filesystem::path& dir, std::size_t pool_size) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["dim"] = p.dim();
    manifest["classes"] = p.num_classes();
    manifest["pool_size"] = pool_size;
    manifest["tensors"] = nlohmann::json::array();
    for (auto& [name, t] : p.named_tensors()) {
        const std::string file = name + ".cemb";
        write_embeddings(dir / file, t->value, CembPrecision::Float64);
        manifest["tensors"].push_back(
            {{"name", name}, {"rows", t->value.rows()}, {"cols", t->value.cols()}, {"file", file}});
    }
    detail::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct LoadedCheckpoint {
    FusionParams params;
    std::size_t pool_size = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) {
        throw IoError("checkpoint: missing '" + manifest_path.string() + "'");
    }
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(detail::read_text_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("checkpoint manifest: parse error at byte offset " + std::to_string(e.byte));
    }
    try {
        LoadedCheckpoint out;
        const std::size_t dim = m.at("dim").get<std::size_t>();
        const std::size_t classes = m.at("classes").get<std::size_t>();
        out.pool_size = m.at("pool_size").get<std::size_t>();
        out.params = FusionParams::init(dim, 0, 0);
        std::size_t found = 0;
        for (auto& [name, t] : out.params.named_tensors()) {
            for (const auto& entry : m.at("tensors")) {
                if (entry.at("name").get<std::string>() != name) continue;
                Matrix v = read_embeddings(dir / entry.at("file").get<std::string>());
                if (v.rows() != entry.at("rows").get<std::size_t>() ||
                    v.cols() != entry.at("cols").get<std::size_t>()) {
                    throw IntegrityError("checkpoint: tensor '" + name + "' shape " + v.shape() +
                                         " disagrees with manifest");
                }
                *t = ParamTensor(std::move(v));
                ++found;
            }
        }
        if (found != out.params.named_tensors().size()) {
            throw IntegrityError("checkpoint: manifest lists " + std::to_string(found) + " of " +
                                 std::to_string(out.params.named_tensors().size()) + " tensors");
        }
        if (out.params.num_classes() != classes || out.params.dim() != dim) {
            throw IntegrityError("checkpoint: tensor shapes disagree with manifest dim/classes");
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint manifest: ") + e.what());
    }
}

}  // namespace conceptcil
