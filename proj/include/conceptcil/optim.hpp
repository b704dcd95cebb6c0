#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "conceptcil/matrix.hpp"

namespace conceptcil {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay and bias correction. Holds non-owning pointers to the
/// parameters it updates; the parameters must outlive the optimizer.
class AdamW {
public:
    AdamW(std::vector<ParamTensor*> params, AdamWOptions opts = {})
        : params_(std::move(params)), opts_(opts) {
        first_.reserve(params_.size());
        second_.reserve(params_.size());
        for (const ParamTensor* p : params_) {
            first_.emplace_back(p->value.rows(), p->value.cols());
            second_.emplace_back(p->value.rows(), p->value.cols());
        }
    }

    void zero_grad() {
        for (ParamTensor* p : params_) p->zero_grad();
    }

    void step(double lr) {
        ++step_;
        const double t = static_cast<double>(step_);
        const double bc1 = 1.0 - std::pow(opts_.beta1, t);
        const double bc2 = 1.0 - std::pow(opts_.beta2, t);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            ParamTensor& p = *params_[k];
            if (p.grad.size() != p.value.size()) {
                throw DimensionError("adamw: gradient " + p.grad.shape() + " vs value " +
                                     p.value.shape());
            }
            auto& m = first_[k].data();
            auto& v = second_[k].data();
            auto& w = p.value.data();
            const auto& g = p.grad.data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
                v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                w[i] *= 1.0 - lr * opts_.weight_decay;
                w[i] -= lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
            }
        }
    }

    long step_count() const noexcept { return step_; }
    const AdamWOptions& options() const noexcept { return opts_; }
    const Matrix& first_moment(std::size_t k) const { return first_.at(k); }
    const Matrix& second_moment(std::size_t k) const { return second_.at(k); }

private:
    std::vector<ParamTensor*> params_;
    AdamWOptions opts_;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    long step_ = 0;
};

/// Cosine annealing from base_lr at step 0 to 0 at total_steps.
inline double cosine_lr(long step, long total_steps, double base_lr) {
    if (total_steps < 1) throw RangeError("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) {
        throw RangeError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                         std::to_string(total_steps) + "]");
    }
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace conceptcil
