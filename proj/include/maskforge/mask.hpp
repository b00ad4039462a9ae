#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskforge/rng.hpp"
#include "maskforge/tensor.hpp"

namespace maskforge {

enum class MaskVariant { ChannelAny, ChannelXor, PixelAny, PixelXor, BlockAny };

struct MaskKind {
    MaskVariant variant = MaskVariant::ChannelAny;
    int grid_w = 0, grid_h = 0;  // BlockAny only

    static MaskKind channel_any() { return {MaskVariant::ChannelAny, 0, 0}; }
    static MaskKind channel_xor() { return {MaskVariant::ChannelXor, 0, 0}; }
    static MaskKind pixel_any() { return {MaskVariant::PixelAny, 0, 0}; }
    static MaskKind pixel_xor() { return {MaskVariant::PixelXor, 0, 0}; }
    static MaskKind block_any(int gw, int gh) { return {MaskVariant::BlockAny, gw, gh}; }

    // "any" kinds carry per-element (keep, drop) pairs; "xor" kinds one-hot
    // groups along the channel axis.
    bool is_any() const {
        return variant == MaskVariant::ChannelAny || variant == MaskVariant::PixelAny ||
               variant == MaskVariant::BlockAny;
    }
    bool is_xor() const { return !is_any(); }
    std::string name() const;
};

// Initial selection pattern: everything, a single channel index (per group for
// xor kinds), or an explicit per-element boolean pattern.
struct MaskInit {
    enum class Mode { All, Index, Pattern };
    Mode mode = Mode::All;
    int index = 0;
    std::vector<std::uint8_t> pattern;

    static MaskInit all() { return {}; }
    static MaskInit at_index(int i) { return {Mode::Index, i, {}}; }
    static MaskInit from_pattern(std::vector<std::uint8_t> p) {
        return {Mode::Pattern, 0, std::move(p)};
    }
};

// Trainable selection mask: logits parameterize the paper-style positive
// weights via l = log m, clamped below at m_min = 1e-4 so the "unselected"
// slot stays finite.
class SelectionMask {
public:
    MaskKind kind;
    int k = 0;  // channel count at the mask's insertion point
    int w = 0, h = 0;
    int group_size = 0;  // xor kinds: one-hot group width (ChannelXor may subdivide k)
    TensorPtr logits;
    std::vector<double> costs;  // per selectable element
    RngStream noise;

    SelectionMask() : noise(0) {}

    // Shape of the logits tensor for this kind.
    std::vector<int> logit_shape() const;
    // Number of selectable elements (k, w*h*k, or gw*gh*k).
    std::int64_t element_count() const;
    // Total cost if every element were selected (for "any") / max group cost sum (xor).
    double max_total_cost() const;
};

constexpr double kMaskWeightFloor = 1e-4;  // m_min

SelectionMask init_mask(MaskKind kind, int k, int w, int h, const MaskInit& init,
                        double sigma, std::uint64_t seed, int group_size = 0);

// i.i.d. Gumbel(0,1) samples.
TensorPtr sample_gumbel(const std::vector<int>& shape, RngStream& stream);

// Hard mask (argmax one-hot per group) plus the temperature-softmax surrogate,
// both from the same noise draw so their argmax agrees.
struct DiscretePair {
    TensorPtr hard;             // binary, same shape as logits, off the tape
    TensorPtr soft;             // on the tape; group rows sum to 1
    std::vector<double> noise;  // the shared Gumbel draw (zero when fixating)
};

DiscretePair discretize(Tape& tape, SelectionMask& mask, double tau, bool explore);

// Forward value uses the hard mask; gradients flow through the soft surrogate
// (straight-through). x is [n,w,h,k] or [w,h,k].
TensorPtr apply_mask(Tape& tape, const TensorPtr& x, const DiscretePair& pair,
                     const SelectionMask& mask);

// Cost-weighted count of selected elements, same straight-through contract.
TensorPtr mask_loss(Tape& tape, const DiscretePair& pair, const SelectionMask& mask);

// Noise-free hard mask; idempotent.
TensorPtr final_discretize(const SelectionMask& mask);

// Extracts the per-element "selected" indicator from a hard mask
// (slot 0 of each pair for "any" kinds; the one-hot itself for "xor").
TensorPtr keep_indicator(const TensorPtr& hard, const SelectionMask& mask);

// Sum of costs over selected elements of a hard mask (the metrics-facing Q).
double hard_mask_cost(const TensorPtr& hard, const SelectionMask& mask);

}  // namespace maskforge
