#pragma once

#include <functional>

#include "maskforge/tensor.hpp"

namespace maskforge {

// Scalar-valued function of one tensor, built fresh on the given tape.
using ScalarFn = std::function<TensorPtr(Tape&, const TensorPtr&)>;

// Compares analytic gradients against central finite differences.
// Returns max over elements of |analytic - numeric| / max(1, |analytic|, |numeric|).
// Rejects non-finite evaluations.
double grad_check(const ScalarFn& f, const TensorPtr& x, double step = 1e-5);

}  // namespace maskforge
