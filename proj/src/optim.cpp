#include "dygrag/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dygrag {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    first_moment_.reserve(params_.size());
    second_moment_.reserve(params_.size());
    for (const auto& p : params_) {
        first_moment_.emplace_back(p.size(), 0.0);
        second_moment_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    step_count_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) {
            throw std::runtime_error("adam_step: parameter " + std::to_string(i) +
                                     " has no gradient");
        }
        const auto& g = p.grad();
        auto& m = first_moment_[i];
        auto& v = second_moment_[i];
        auto& x = p.data();
        for (std::size_t j = 0; j < x.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            x[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double grad_check(const std::function<Tensor()>& make_loss, const std::vector<Tensor>& params,
                  double eps) {
    for (auto p : params) p.zero_grad();
    Tensor loss = make_loss();
    if (!std::isfinite(loss.value())) throw std::runtime_error("grad_check: non-finite loss");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double saved = p.data()[j];
            p.data()[j] = saved + eps;
            const double fp = make_loss().value();
            p.data()[j] = saved - eps;
            const double fm = make_loss().value();
            p.data()[j] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw std::runtime_error("grad_check: non-finite perturbed loss");
            }
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[i][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace dygrag
