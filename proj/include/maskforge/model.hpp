#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskforge/optim.hpp"
#include "maskforge/tensor.hpp"

namespace maskforge {

struct LayerSpec {
    enum class Kind { Conv, Relu, MaxPool, Flatten, Dense };
    Kind kind = Kind::Relu;
    int units = 0;   // Conv: out channels; Dense: out units
    int kernel = 0;  // Conv
    int stride = 1;  // Conv
    int pad = 0;     // Conv

    static LayerSpec conv(int out_ch, int kernel, int stride = 1, int pad = 0) {
        return {Kind::Conv, out_ch, kernel, stride, pad};
    }
    static LayerSpec relu() { return {Kind::Relu, 0, 0, 1, 0}; }
    static LayerSpec maxpool() { return {Kind::MaxPool, 0, 0, 1, 0}; }
    static LayerSpec flatten() { return {Kind::Flatten, 0, 0, 1, 0}; }
    static LayerSpec dense(int units) { return {Kind::Dense, units, 0, 1, 0}; }
};

struct ModelSpec {
    std::vector<LayerSpec> layers;
    int in_w = 0, in_h = 0, in_c = 0;
    int classes = 0;
};

// Feed-forward conv/dense stack over [n,w,h,c] input (converted to NCHW
// internally). Parameters are Kaiming-uniform initialized from the seed.
class Model {
public:
    ModelSpec spec;
    std::vector<Parameter> params;  // conv: kernel+bias pairs; dense: weight+bias

    TensorPtr forward(Tape& tape, const TensorPtr& x) const;
    std::int64_t parameter_count() const;
};

// Shape-checks the spec (throws naming the offending layer) and initializes
// parameters; the final layer must emit `classes` logits.
Model build_model(const ModelSpec& spec, std::uint64_t seed);

}  // namespace maskforge
