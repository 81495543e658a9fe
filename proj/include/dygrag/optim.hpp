#pragma once

#include <string>
#include <vector>

#include "dygrag/tensor.hpp"

namespace dygrag {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Standard Adam with bias correction. Gradients are left untouched by
// step(); the caller zeroes them between iterations.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    // One update over every registered parameter. Throws if a parameter
    // has no populated gradient.
    void step();
    void zero_grad();

    std::size_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
    std::size_t step_count_ = 0;
    AdamConfig cfg_;
};

// Compares analytic gradients of `make_loss` against central differences
// for every coordinate of `params`; returns the worst relative error.
// The closure must be deterministic. Throws on non-finite values.
double grad_check(const std::function<Tensor()>& make_loss, const std::vector<Tensor>& params,
                  double eps = 1e-5);

}  // namespace dygrag
