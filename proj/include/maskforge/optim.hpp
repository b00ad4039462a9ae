#pragma once

#include <cstdint>
#include <vector>

#include "maskforge/tensor.hpp"

namespace maskforge {

// Trainable tensor plus AMSGrad state. v_max is element-wise non-decreasing
// across steps.
struct Parameter {
    TensorPtr tensor;
    std::vector<double> m;
    std::vector<double> v;
    std::vector<double> v_max;
    std::int64_t step_count = 0;

    explicit Parameter(TensorPtr t)
        : tensor(std::move(t)),
          m(tensor->values.size(), 0.0),
          v(tensor->values.size(), 0.0),
          v_max(tensor->values.size(), 0.0) {
        tensor->requires_grad = true;
    }
};

// Adam with the AMSGrad max-correction and bias correction; zeroes the grad
// buffer after applying the update.
void adam_amsgrad_step(Parameter& param, double lr, double beta1 = 0.9, double beta2 = 0.999,
                       double eps = 1e-8);

}  // namespace maskforge
