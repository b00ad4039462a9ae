#pragma once

#include <optional>
#include <vector>

#include "maskforge/mask.hpp"
#include "maskforge/tensor.hpp"

namespace maskforge {

// Deterministic JPEG-style degradation of one channel: blockwise orthonormal
// 8x8 DCT, luminance-table quantization at quality q, inverse DCT, clamp.
// Values in [0,255]; the image is edge-replicated to block multiples.
std::vector<double> quality_transform(const std::vector<double>& channel, int w, int h, double q);

// Fans each channel out into one degraded version per quality (channel-major
// order: all versions of channel 0, then channel 1, ...). x is [w,h,c] or
// [n,w,h,c] in [0,1]; the 255 bridge is internal.
std::vector<double> extend_values(const std::vector<double>& x, int n, int w, int h, int c,
                                  const std::vector<double>& qualities);

// Element-wise sum over `group` consecutive channels; differentiable.
TensorPtr merge_sum(Tape& tape, const TensorPtr& x, int group);

struct Stage {
    enum class Kind { Extend, Mask, MergeSum };
    Kind kind = Kind::Mask;
    std::vector<double> qualities;  // Extend
    int mask_id = -1;               // Mask
    int group = 0;                  // MergeSum
    bool pre_applied = false;       // Extend already baked into the dataset

    static Stage extend(std::vector<double> qualities);
    static Stage mask(int id) { return {Kind::Mask, {}, id, 0, false}; }
    static Stage merge(int group) { return {Kind::MergeSum, {}, -1, group, false}; }
};

enum class LossCombine { Sum, Product };

// Ordered input-side stages applied before the model.
struct Pipeline {
    std::vector<Stage> stages;
    int in_w = 0, in_h = 0, in_c = 0;
    LossCombine combine = LossCombine::Sum;

    // Validates stage-to-stage shape inference against the registered masks;
    // returns the output channel count (spatial dims are unchanged).
    int validate(const std::vector<SelectionMask>& masks) const;
};

struct PipelineResult {
    TensorPtr x;                          // masked tensor, pipeline output
    TensorPtr q;                          // combined mask loss (scalar, on the tape)
    std::vector<TensorPtr> stage_losses;  // per mask stage
};

// Runs all stages at the given temperature/phase; masks are discretized here.
PipelineResult pipeline_forward(Tape& tape, const Pipeline& p, const TensorPtr& x,
                                std::vector<SelectionMask>& masks, double tau, bool explore);

// Evaluation path: applies fixed hard keep-indicators, no tape bookkeeping.
TensorPtr pipeline_apply_hard(const Pipeline& p, const TensorPtr& x,
                              const std::vector<SelectionMask>& masks,
                              const std::vector<TensorPtr>& keeps);

// Combined Q of fixed hard masks under the pipeline's combiner.
double pipeline_hard_cost(const Pipeline& p, const std::vector<SelectionMask>& masks,
                          const std::vector<TensorPtr>& hards);

}  // namespace maskforge
