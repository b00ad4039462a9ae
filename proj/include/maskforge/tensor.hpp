#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace maskforge {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major f64 tensor with a same-shape gradient buffer. Values are
// immutable after the producing op; only grad and optimizer-owned leaves
// mutate between batches.
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // all-zero until backprop populates it
    bool requires_grad = false;

    static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<int> shape, double v, bool requires_grad = false);
    static TensorPtr of(std::vector<int> shape, std::vector<double> values,
                        bool requires_grad = false);
    static TensorPtr scalar(double v, bool requires_grad = false);

    std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
    bool is_scalar() const { return values.size() == 1; }
    double item() const;

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

    // Detached copy: same values, no grad flow.
    TensorPtr detached() const { return of(shape, values, false); }
};

// Reverse-mode tape. Ops append one backward closure per recorded node in
// forward order; backprop seeds d(loss)=1 and replays the closures in
// reverse, visiting each node exactly once.
class Tape {
public:
    void record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

    std::size_t node_count() const { return nodes_.size(); }

    // loss must be a scalar produced on this tape.
    void backprop(const TensorPtr& loss);

private:
    std::vector<std::function<void()>> nodes_;
};

}  // namespace maskforge
