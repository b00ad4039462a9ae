#include "maskforge/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace maskforge {

void adam_amsgrad_step(Parameter& param, double lr, double beta1, double beta2, double eps) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam_amsgrad_step: non-positive learning rate");
    auto& w = param.tensor->values;
    auto& g = param.tensor->grad;
    param.step_count += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(param.step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(param.step_count));
    for (std::size_t i = 0; i < w.size(); ++i) {
        param.m[i] = beta1 * param.m[i] + (1.0 - beta1) * g[i];
        param.v[i] = beta2 * param.v[i] + (1.0 - beta2) * g[i] * g[i];
        if (param.v[i] > param.v_max[i]) param.v_max[i] = param.v[i];
        const double m_hat = param.m[i] / bc1;
        const double v_hat = param.v_max[i] / bc2;
        w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        g[i] = 0.0;
    }
}

}  // namespace maskforge
