#pragma once

#include <cmath>
#include <vector>

#include "kseg/nn/tensor.hpp"

namespace kseg::nn {

/// Decoupled-weight-decay Adam.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<Param<T>*> params, double lr, double weight_decay = 1e-2,
          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2),
          eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->numel(), 0.0);
            v_[i].assign(params_[i]->numel(), 0.0);
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Param<T>& p = *params_[i];
            for (size_t j = 0; j < p.numel(); ++j) {
                double g = double(p.grad[j]);
                m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
                double mhat = m_[i][j] / bc1;
                double vhat = v_[i][j] / bc2;
                double val = double(p.value[j]);
                val -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * val);
                p.value[j] = T(val);
            }
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

private:
    std::vector<Param<T>*> params_;
    double lr_, wd_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Cosine annealing from lr0 at epoch 0 to lr_min at epoch total-1.
inline double cosine_lr(double epoch, int total_epochs, double lr0, double lr_min) {
    if (total_epochs <= 1) return lr0;
    double t = epoch / double(total_epochs - 1);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * t));
}

/// Scale all gradients so the global L2 norm is at most max_norm.
/// Returns the post-clip norm.
template <typename T>
double clip_global_grad_norm(const std::vector<Param<T>*>& params, double max_norm) {
    double sq = 0.0;
    for (const auto* p : params)
        for (const T& g : p->grad) sq += double(g) * double(g);
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        T scale = T(max_norm / norm);
        for (auto* p : params)
            for (T& g : p->grad) g *= scale;
        return max_norm;
    }
    return norm;
}

} // namespace kseg::nn
