#pragma once

// Forward and hand-derived backward passes for the layers used by the fusion head.
// Backward functions take the forward inputs (or the cached intermediates) explicitly
// and accumulate into ParamTensor::grad.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "conceptcil/matrix.hpp"

namespace conceptcil {

// ---------------------------------------------------------------------------
// Linear: y = x·w (+ b)

inline Matrix linear_forward(const Matrix& x, const ParamTensor& w, const ParamTensor* b = nullptr) {
    if (x.cols() != w.value.rows()) {
        throw DimensionError("linear_forward: input " + x.shape() + " vs weight " + w.value.shape());
    }
    Matrix y = matmul(x, w.value);
    if (b != nullptr) {
        if (b->value.rows() != 1 || b->value.cols() != y.cols()) {
            throw DimensionError("linear_forward: bias " + b->value.shape() + " vs output " +
                                 y.shape());
        }
        for (std::size_t i = 0; i < y.rows(); ++i)
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b->value(0, j);
    }
    return y;
}

/// Accumulates dW = xᵀ·dy and db = Σ_rows dy; returns dx = dy·wᵀ.
inline Matrix linear_backward(const Matrix& x, ParamTensor& w, ParamTensor* b, const Matrix& dy) {
    w.grad += matmul_tn(x, dy);
    if (b != nullptr) b->grad += column_sums(dy);
    return matmul_nt(dy, w.value);
}

// ---------------------------------------------------------------------------
// LayerNorm over the last dimension, population variance, eps inside the sqrt.

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    Matrix normalized;             // x̂ before gain/shift
    std::vector<double> inv_std;   // 1/sqrt(var + eps) per row
};

struct LayerNormParams {
    ParamTensor gain;
    ParamTensor shift;

    static LayerNormParams identity(std::size_t dim) {
        return {ParamTensor(Matrix(1, dim, 1.0)), ParamTensor(Matrix(1, dim, 0.0))};
    }
};

inline Matrix layernorm_forward(const Matrix& x, const ParamTensor& gain, const ParamTensor& shift,
                                double eps, LayerNormCache* cache = nullptr) {
    const std::size_t d = x.cols();
    if (d == 0) throw DimensionError("layernorm_forward: zero-width input");
    if (gain.value.rows() != 1 || gain.value.cols() != d || shift.value.rows() != 1 ||
        shift.value.cols() != d) {
        throw DimensionError("layernorm_forward: input " + x.shape() + " vs gain " +
                             gain.value.shape() + " / shift " + shift.value.shape());
    }
    if (!(eps >= 0.0)) throw RangeError("layernorm_forward: eps must be non-negative");

    Matrix xhat(x.rows(), d);
    std::vector<double> inv_std(x.rows());
    Matrix y(x.rows(), d);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        // eps = 0 with a constant row would divide by zero; treat it as zero output.
        const double denom = std::sqrt(var + eps);
        const double is = denom > 0.0 ? 1.0 / denom : 0.0;
        inv_std[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            xhat(i, j) = (row[j] - mean) * is;
            y(i, j) = xhat(i, j) * gain.value(0, j) + shift.value(0, j);
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

inline Matrix layernorm_forward(const Matrix& x, const LayerNormParams& p, double eps,
                                LayerNormCache* cache = nullptr) {
    return layernorm_forward(x, p.gain, p.shift, eps, cache);
}

/// dx = inv_std · (g − mean(g) − x̂·mean(g⊙x̂)) with g = dy⊙gain.
inline Matrix layernorm_backward(const LayerNormCache& cache, ParamTensor& gain, ParamTensor& shift,
                                 const Matrix& dy) {
    const Matrix& xhat = cache.normalized;
    const std::size_t d = xhat.cols();
    Matrix dx(xhat.rows(), d);
    for (std::size_t i = 0; i < xhat.rows(); ++i) {
        double mean_g = 0.0;
        double mean_gx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            gain.grad(0, j) += dy(i, j) * xhat(i, j);
            shift.grad(0, j) += dy(i, j);
            const double g = dy(i, j) * gain.value(0, j);
            mean_g += g;
            mean_gx += g * xhat(i, j);
        }
        mean_g /= static_cast<double>(d);
        mean_gx /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double g = dy(i, j) * gain.value(0, j);
            dx(i, j) = cache.inv_std[i] * (g - mean_g - xhat(i, j) * mean_gx);
        }
    }
    return dx;
}

inline Matrix layernorm_backward(const LayerNormCache& cache, LayerNormParams& p, const Matrix& dy) {
    return layernorm_backward(cache, p.gain, p.shift, dy);
}

// ---------------------------------------------------------------------------
// Row-wise softmax with max subtraction.

inline Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        if (row.empty()) continue;
        const double m = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            y(i, j) = std::exp(row[j] - m);
            sum += y(i, j);
        }
        for (std::size_t j = 0; j < row.size(); ++j) y(i, j) /= sum;
    }
    return y;
}

/// Given y = softmax(x) and dL/dy, returns dL/dx = y ⊙ (dy − ⟨dy, y⟩).
inline Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
    detail::require(y.rows() == dy.rows() && y.cols() == dy.cols(), "softmax_rows_backward", y, dy);
    Matrix dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (dy(i, j) - dot);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Mean softmax cross-entropy.

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad;
};

inline LossAndGrad cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
    if (labels.size() != logits.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                             logits.shape());
    }
    const std::size_t c = logits.cols();
    LossAndGrad out{0.0, Matrix(logits.rows(), c)};
    if (logits.rows() == 0) return out;
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (labels[i] >= c) {
            throw LabelError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                             std::to_string(c) + ")");
        }
        auto row = logits.row(i);
        const double m = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - m);
        const double log_z = m + std::log(sum);
        out.loss += (log_z - row[labels[i]]) * inv_b;
        for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(row[j] - log_z);
            out.grad(i, j) = (p - (j == labels[i] ? 1.0 : 0.0)) * inv_b;
        }
    }
    return out;
}

}  // namespace conceptcil
