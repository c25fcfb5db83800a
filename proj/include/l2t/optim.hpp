#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/tensor.hpp"

namespace l2t {

// Velocity-accumulate momentum: v' = momentum*v + g, p' = p - lr*v'.
class SgdMomentum {
public:
    explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              double lr) {
        if (lr < 0.0) throw Error("sgd step: negative lr");
        check(params, grads);
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = *params[k];
            const Tensor& g = *grads[k];
            Tensor& v = velocity_[k];
            for (std::size_t i = 0; i < p.numel(); ++i) {
                v[i] = momentum_ * v[i] + g[i];
                p[i] -= lr * v[i];
            }
        }
    }

    double momentum() const { return momentum_; }

private:
    void check(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
        if (params.size() != grads.size())
            throw ShapeError("sgd step: " + std::to_string(params.size()) + " params, " +
                             std::to_string(grads.size()) + " grads");
        if (velocity_.empty())
            for (const Tensor* p : params) velocity_.emplace_back(p->shape());
        if (velocity_.size() != params.size())
            throw ShapeError("sgd step: parameter count changed between steps");
        for (std::size_t k = 0; k < params.size(); ++k) {
            check_same_shape(*params[k], *grads[k], "sgd param/grad");
            check_same_shape(*params[k], velocity_[k], "sgd param/velocity");
        }
    }

    double momentum_;
    std::vector<Tensor> velocity_;
};

// Bias-corrected Adam.
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (eps <= 0.0) throw Error("adam: eps must be positive");
    }

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              double lr) {
        if (lr < 0.0) throw Error("adam step: negative lr");
        check(params, grads);
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = *params[k];
            const Tensor& g = *grads[k];
            Tensor& m = m_[k];
            Tensor& v = v_[k];
            for (std::size_t i = 0; i < p.numel(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::size_t step_count() const { return step_count_; }

private:
    void check(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
        if (params.size() != grads.size())
            throw ShapeError("adam step: " + std::to_string(params.size()) + " params, " +
                             std::to_string(grads.size()) + " grads");
        if (m_.empty())
            for (const Tensor* p : params) {
                m_.emplace_back(p->shape());
                v_.emplace_back(p->shape());
            }
        if (m_.size() != params.size())
            throw ShapeError("adam step: parameter count changed between steps");
        for (std::size_t k = 0; k < params.size(); ++k) {
            check_same_shape(*params[k], *grads[k], "adam param/grad");
            check_same_shape(*params[k], m_[k], "adam param/moment");
        }
    }

    double beta1_, beta2_, eps_;
    std::size_t step_count_ = 0;
    std::vector<Tensor> m_, v_;
};

enum class ScheduleKind { Constant, CosineWarmup };

// Linear ramp 0 -> base_lr over warmup_steps, then either flat (constant) or
// cosine decay to 0 at total_steps. Continuous at the warmup boundary.
class LrSchedule {
public:
    LrSchedule(ScheduleKind kind, double base_lr, std::size_t warmup_steps,
               std::size_t total_steps)
        : kind_(kind), base_lr_(base_lr), warmup_(warmup_steps), total_(total_steps) {
        if (base_lr <= 0.0) throw Error("lr schedule: base_lr must be positive");
        if (total_steps == 0) throw Error("lr schedule: total_steps must be positive");
        if (warmup_steps >= total_steps)
            throw Error("lr schedule: warmup_steps must be < total_steps");
    }

    double at(std::size_t i) const {
        if (i > total_)
            throw Error("lr schedule: step " + std::to_string(i) + " past total " +
                        std::to_string(total_));
        if (i < warmup_)
            return base_lr_ * static_cast<double>(i) / static_cast<double>(warmup_);
        if (kind_ == ScheduleKind::Constant) return base_lr_;
        const double t = static_cast<double>(i - warmup_) / static_cast<double>(total_ - warmup_);
        return base_lr_ * (1.0 + std::cos(3.14159265358979323846 * t)) / 2.0;
    }

    ScheduleKind kind() const { return kind_; }
    double base_lr() const { return base_lr_; }
    std::size_t warmup_steps() const { return warmup_; }
    std::size_t total_steps() const { return total_; }

private:
    ScheduleKind kind_;
    double base_lr_;
    std::size_t warmup_, total_;
};

} // namespace l2t
