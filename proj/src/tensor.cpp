#include "maskforge/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace maskforge {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void check_shape(const std::vector<int>& shape) {
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in " + shape_str(shape));
    }
    if (shape.empty()) throw std::invalid_argument("tensor: empty shape (use {1} for scalars)");
}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    check_shape(shape);
    auto t = std::make_shared<Tensor>();
    std::size_t n = static_cast<std::size_t>(shape_numel(shape));
    t->shape = std::move(shape);
    t->values.assign(n, 0.0);
    t->grad.assign(n, 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t->values.begin(), t->values.end(), v);
    return t;
}

TensorPtr Tensor::of(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
        throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->grad.assign(t->values.size(), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
    return of({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (!is_scalar()) throw std::runtime_error("item(): tensor " + shape_str(shape) + " is not scalar");
    return values[0];
}

void Tape::backprop(const TensorPtr& loss) {
    if (!loss->is_scalar()) {
        throw std::invalid_argument("backprop: loss must be scalar, got " + shape_str(loss->shape));
    }
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace maskforge
