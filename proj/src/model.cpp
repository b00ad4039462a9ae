#include "maskforge/model.hpp"

#include <cmath>
#include <stdexcept>

#include "maskforge/ops.hpp"
#include "maskforge/rng.hpp"

namespace maskforge {

namespace {

struct ShapeState {
    int c, h, w;       // NCHW tail after the input permute
    int flat = 0;      // set after Flatten
    bool flattened = false;
};

void infer_shapes(const ModelSpec& spec, std::vector<ShapeState>* states) {
    if (spec.in_w <= 0 || spec.in_h <= 0 || spec.in_c <= 0 || spec.classes <= 0)
        throw std::invalid_argument("build_model: input shape/classes not declared");
    ShapeState st{spec.in_c, spec.in_w, spec.in_h, 0, false};
    states->push_back(st);
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const auto& l = spec.layers[li];
        const std::string where = "layer " + std::to_string(li);
        switch (l.kind) {
            case LayerSpec::Kind::Conv: {
                if (st.flattened)
                    throw std::invalid_argument("build_model: " + where + " conv after flatten");
                const int oh = (st.h + 2 * l.pad - l.kernel) / l.stride + 1;
                const int ow = (st.w + 2 * l.pad - l.kernel) / l.stride + 1;
                if (l.units <= 0 || l.kernel <= 0 || oh <= 0 || ow <= 0)
                    throw std::invalid_argument("build_model: " + where + " conv does not fit");
                st.c = l.units;
                st.h = oh;
                st.w = ow;
                break;
            }
            case LayerSpec::Kind::Relu:
                break;
            case LayerSpec::Kind::MaxPool:
                if (st.flattened || st.h % 2 != 0 || st.w % 2 != 0)
                    throw std::invalid_argument("build_model: " + where +
                                                " maxpool needs even spatial dims");
                st.h /= 2;
                st.w /= 2;
                break;
            case LayerSpec::Kind::Flatten:
                if (st.flattened)
                    throw std::invalid_argument("build_model: " + where + " double flatten");
                st.flat = st.c * st.h * st.w;
                st.flattened = true;
                break;
            case LayerSpec::Kind::Dense:
                if (!st.flattened)
                    throw std::invalid_argument("build_model: " + where + " dense before flatten");
                if (l.units <= 0)
                    throw std::invalid_argument("build_model: " + where + " dense needs units");
                st.flat = l.units;
                break;
        }
        states->push_back(st);
    }
    if (!st.flattened || st.flat != spec.classes)
        throw std::invalid_argument("build_model: final layer emits " +
                                    std::to_string(st.flattened ? st.flat : -1) +
                                    " values, expected " + std::to_string(spec.classes) +
                                    " class logits");
}

TensorPtr kaiming_uniform(const std::vector<int>& shape, int fan_in, RngStream& rng) {
    auto t = Tensor::zeros(shape, true);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : t->values) v = rng.uniform_in(-bound, bound);
    return t;
}

}  // namespace

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
    std::vector<ShapeState> states;
    infer_shapes(spec, &states);

    Model model;
    model.spec = spec;
    auto rng = RngStream::derive(seed, 0x6d6f646cULL /* "modl" */);
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const auto& l = spec.layers[li];
        const auto& in = states[li];
        if (l.kind == LayerSpec::Kind::Conv) {
            const int fan_in = in.c * l.kernel * l.kernel;
            model.params.emplace_back(
                kaiming_uniform({l.units, in.c, l.kernel, l.kernel}, fan_in, rng));
            model.params.emplace_back(Tensor::zeros({l.units}, true));
        } else if (l.kind == LayerSpec::Kind::Dense) {
            model.params.emplace_back(kaiming_uniform({in.flat, l.units}, in.flat, rng));
            model.params.emplace_back(Tensor::zeros({1, l.units}, true));
        }
    }
    return model;
}

TensorPtr Model::forward(Tape& tape, const TensorPtr& x) const {
    if (x->shape.size() != 4)
        throw std::invalid_argument("model: expected [n,w,h,c] input, got " + shape_str(x->shape));
    const int n = x->shape[0];
    // [n,w,h,c] -> [n,c,w,h]
    TensorPtr cur = ops::permute4(tape, x, {0, 3, 1, 2});
    std::size_t pi = 0;
    for (const auto& l : spec.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::Conv: {
                const auto& kernel = params[pi].tensor;
                const auto& bias = params[pi + 1].tensor;
                pi += 2;
                cur = ops::conv2d(tape, cur, kernel, bias, l.stride, l.pad);
                break;
            }
            case LayerSpec::Kind::Relu:
                cur = ops::relu(tape, cur);
                break;
            case LayerSpec::Kind::MaxPool:
                cur = ops::maxpool2x2(tape, cur);
                break;
            case LayerSpec::Kind::Flatten:
                cur = ops::reshape(tape, cur,
                                   {n, static_cast<int>(cur->numel() / n)});
                break;
            case LayerSpec::Kind::Dense: {
                const auto& weight = params[pi].tensor;
                const auto& bias = params[pi + 1].tensor;
                pi += 2;
                cur = ops::matmul(tape, cur, weight);
                auto bb = ops::broadcast_to(tape, bias, cur->shape);
                cur = ops::add(tape, cur, bb);
                break;
            }
        }
    }
    return cur;
}

std::int64_t Model::parameter_count() const {
    std::int64_t total = 0;
    for (const auto& p : params) total += p.tensor->numel();
    return total;
}

}  // namespace maskforge
