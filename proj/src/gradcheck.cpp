#include "maskforge/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace maskforge {

double grad_check(const ScalarFn& f, const TensorPtr& x, double step) {
    auto probe = x->detached();
    probe->requires_grad = true;

    Tape tape;
    auto loss = f(tape, probe);
    if (!std::isfinite(loss->item()))
        throw std::runtime_error("grad_check: non-finite function value");
    tape.backprop(loss);
    std::vector<double> analytic = probe->grad;

    double max_err = 0.0;
    for (std::size_t i = 0; i < probe->values.size(); ++i) {
        const double saved = probe->values[i];
        auto eval = [&](double v) {
            probe->values[i] = v;
            Tape t;
            auto fp = probe->detached();  // fresh leaf so prior grads cannot leak
            double out = f(t, fp)->item();
            if (!std::isfinite(out)) throw std::runtime_error("grad_check: non-finite evaluation");
            return out;
        };
        const double numeric = (eval(saved + step) - eval(saved - step)) / (2.0 * step);
        probe->values[i] = saved;
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
    }
    return max_err;
}

}  // namespace maskforge
