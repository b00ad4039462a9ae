#include "maskforge/mask.hpp"

#include <cmath>
#include <stdexcept>

#include "maskforge/ops.hpp"

namespace maskforge {

std::string MaskKind::name() const {
    switch (variant) {
        case MaskVariant::ChannelAny: return "channel_any";
        case MaskVariant::ChannelXor: return "channel_xor";
        case MaskVariant::PixelAny: return "pixel_any";
        case MaskVariant::PixelXor: return "pixel_xor";
        case MaskVariant::BlockAny:
            return "block_any_" + std::to_string(grid_w) + "x" + std::to_string(grid_h);
    }
    return "?";
}

std::vector<int> SelectionMask::logit_shape() const {
    switch (kind.variant) {
        case MaskVariant::ChannelAny: return {1, 1, k, 2};
        case MaskVariant::ChannelXor: return {1, 1, k};
        case MaskVariant::PixelAny: return {w, h, k, 2};
        case MaskVariant::PixelXor: return {w, h, k};
        case MaskVariant::BlockAny: return {kind.grid_w, kind.grid_h, k, 2};
    }
    return {};
}

std::int64_t SelectionMask::element_count() const {
    switch (kind.variant) {
        case MaskVariant::ChannelAny:
        case MaskVariant::ChannelXor: return k;
        case MaskVariant::PixelAny:
        case MaskVariant::PixelXor: return static_cast<std::int64_t>(w) * h * k;
        case MaskVariant::BlockAny: return static_cast<std::int64_t>(kind.grid_w) * kind.grid_h * k;
    }
    return 0;
}

double SelectionMask::max_total_cost() const {
    if (kind.is_any()) {
        double s = 0.0;
        for (double c : costs) s += c;
        return s;
    }
    // xor: one pick per group; worst case is the max cost within each group
    const int gw = group_size;
    double s = 0.0;
    for (std::size_t base = 0; base < costs.size(); base += gw) {
        double m = costs[base];
        for (int j = 1; j < gw; ++j) m = std::max(m, costs[base + j]);
        s += m;
    }
    return s;
}

namespace {

// Width of one one-hot group in the flat logits layout. Groups are contiguous:
// (keep,drop) pairs for "any" kinds, channel runs for "xor" kinds.
int group_width(const SelectionMask& mask) {
    if (mask.kind.is_any()) return 2;
    return mask.group_size;
}

// One-hot argmax per contiguous group; ties break toward the lowest index.
TensorPtr hard_from(const std::vector<double>& z, const SelectionMask& mask) {
    const int gw = group_width(mask);
    auto hard = Tensor::zeros(mask.logits->shape);
    for (std::size_t base = 0; base < z.size(); base += gw) {
        int best = 0;
        for (int j = 1; j < gw; ++j)
            if (z[base + j] > z[base + best]) best = j;
        hard->values[base + best] = 1.0;
    }
    return hard;
}

}  // namespace

SelectionMask init_mask(MaskKind kind, int k, int w, int h, const MaskInit& init, double sigma,
                        std::uint64_t seed, int group_size) {
    if (k <= 0 || w <= 0 || h <= 0) throw std::invalid_argument("init_mask: non-positive dims");
    if (kind.variant == MaskVariant::BlockAny && (kind.grid_w <= 0 || kind.grid_h <= 0 ||
                                                  kind.grid_w > w || kind.grid_h > h)) {
        throw std::invalid_argument("init_mask: block grid does not fit image");
    }

    SelectionMask mask;
    mask.kind = kind;
    mask.k = k;
    mask.w = w;
    mask.h = h;
    if (kind.variant == MaskVariant::ChannelXor) {
        mask.group_size = group_size > 0 ? group_size : k;
        if (k % mask.group_size != 0)
            throw std::invalid_argument("init_mask: group size must divide channel count");
    } else if (kind.variant == MaskVariant::PixelXor) {
        mask.group_size = k;
    }
    mask.noise = RngStream::derive(seed, 0x6d61736bULL /* "mask" */);

    const auto shape = mask.logit_shape();
    const std::int64_t elements = mask.element_count();
    const double log_floor = std::log(kMaskWeightFloor);

    // Per-element selection flags. For xor kinds this is "index within group".
    std::vector<std::uint8_t> selected(static_cast<std::size_t>(elements), 0);
    const int gw = mask.kind.is_xor() ? (kind.variant == MaskVariant::ChannelXor ? mask.group_size
                                                                                 : mask.k)
                                      : 0;
    if (mask.kind.is_any()) {
        switch (init.mode) {
            case MaskInit::Mode::All:
                std::fill(selected.begin(), selected.end(), 1);
                break;
            case MaskInit::Mode::Index:
                // channel index: mark that channel across all spatial elements
                if (init.index < 0 || init.index >= k)
                    throw std::invalid_argument("init_mask: channel index out of range");
                for (std::int64_t e = 0; e < elements; ++e)
                    if (e % k == init.index) selected[e] = 1;
                break;
            case MaskInit::Mode::Pattern:
                if (static_cast<std::int64_t>(init.pattern.size()) != elements)
                    throw std::invalid_argument("init_mask: pattern length mismatch");
                selected = init.pattern;
                break;
        }
    } else {
        switch (init.mode) {
            case MaskInit::Mode::All:
                throw std::invalid_argument("init_mask: xor kinds need exactly one selection per group");
            case MaskInit::Mode::Index:
                if (init.index < 0 || init.index >= gw)
                    throw std::invalid_argument("init_mask: xor index out of group range");
                for (std::int64_t e = 0; e < elements; ++e)
                    if (e % gw == init.index) selected[e] = 1;
                break;
            case MaskInit::Mode::Pattern: {
                if (static_cast<std::int64_t>(init.pattern.size()) != elements)
                    throw std::invalid_argument("init_mask: pattern length mismatch");
                for (std::int64_t base = 0; base < elements; base += gw) {
                    int count = 0;
                    for (int j = 0; j < gw; ++j) count += init.pattern[base + j] ? 1 : 0;
                    if (count != 1)
                        throw std::invalid_argument(
                            "init_mask: xor pattern must select exactly one element per group");
                }
                selected = init.pattern;
                break;
            }
        }
    }

    // Paper init m = (1+eps, 0+eps) carried over to logit space: selected slot
    // log(1) + eps', unselected slot log(m_min) + eps'.
    auto init_stream = RngStream::derive(seed, 0x696e6974ULL /* "init" */);
    auto logits = Tensor::zeros(shape, true);
    if (mask.kind.is_any()) {
        for (std::int64_t e = 0; e < elements; ++e) {
            const double keep_base = selected[e] ? 0.0 : log_floor;
            const double drop_base = selected[e] ? log_floor : 0.0;
            logits->values[2 * e] = keep_base + (sigma > 0.0 ? init_stream.normal(0.0, sigma) : 0.0);
            logits->values[2 * e + 1] =
                drop_base + (sigma > 0.0 ? init_stream.normal(0.0, sigma) : 0.0);
        }
    } else {
        for (std::int64_t e = 0; e < elements; ++e) {
            const double base = selected[e] ? 0.0 : log_floor;
            logits->values[e] = base + (sigma > 0.0 ? init_stream.normal(0.0, sigma) : 0.0);
        }
    }
    mask.logits = logits;

    // default uniform costs; callers override for weighted schemes
    const double unit = mask.kind.is_any()
                            ? 1.0 / static_cast<double>(elements)
                            : 1.0 / static_cast<double>(elements / gw);
    mask.costs.assign(static_cast<std::size_t>(elements), unit);
    return mask;
}

TensorPtr sample_gumbel(const std::vector<int>& shape, RngStream& stream) {
    auto t = Tensor::zeros(shape);
    for (auto& v : t->values) v = stream.gumbel();
    return t;
}

DiscretePair discretize(Tape& tape, SelectionMask& mask, double tau, bool explore) {
    if (!(tau > 0.0)) throw std::invalid_argument("discretize: tau must be positive");
    const auto& shape = mask.logits->shape;
    std::vector<double> noise(mask.logits->values.size(), 0.0);
    if (explore) {
        for (auto& g : noise) g = mask.noise.gumbel();
    }

    std::vector<double> z(mask.logits->values.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mask.logits->values[i] + noise[i];

    DiscretePair pair;
    pair.hard = hard_from(z, mask);

    // soft path: softmax((l + g)/tau) per group, on the tape
    const int gw = group_width(mask);
    const int rows = static_cast<int>(mask.logits->values.size()) / gw;
    auto noised = ops::add_const(tape, mask.logits, noise);
    auto scaled = ops::scale(tape, noised, 1.0 / tau);
    auto grouped = ops::reshape(tape, scaled, {rows, gw});
    auto soft = ops::softmax_lastaxis(tape, grouped);
    pair.soft = ops::reshape(tape, soft, shape);
    pair.noise = std::move(noise);
    return pair;
}

namespace {

// "selected" indicator on the tape: slot 0 of each pair for "any" kinds,
// the one-hot itself for "xor" kinds.
TensorPtr keep_soft(Tape& tape, const TensorPtr& soft, const SelectionMask& mask) {
    if (mask.kind.is_any()) return ops::slice_lastaxis(tape, soft, 0);
    return soft;
}

std::vector<double> keep_values(const TensorPtr& t, const SelectionMask& mask) {
    if (!mask.kind.is_any()) return t->values;
    std::vector<double> out(t->values.size() / 2);
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = t->values[2 * e];
    return out;
}

// hard + (soft - detached soft): value equals the hard mask, gradient flows
// through the soft surrogate.
TensorPtr straight_through(Tape& tape, const DiscretePair& pair, const SelectionMask& mask) {
    auto ks = keep_soft(tape, pair.soft, mask);
    auto kh = keep_values(pair.hard, mask);
    std::vector<double> shift(kh.size());
    for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = kh[i] - ks->values[i];
    return ops::add_const(tape, ks, shift);
}

}  // namespace

TensorPtr apply_mask(Tape& tape, const TensorPtr& x, const DiscretePair& pair,
                     const SelectionMask& mask) {
    if (x->shape.size() != 3 && x->shape.size() != 4) {
        throw std::invalid_argument("apply_mask: expected [w,h,k] or [n,w,h,k] input, got " +
                                    shape_str(x->shape));
    }
    const int xw = x->shape[x->shape.size() - 3];
    const int xh = x->shape[x->shape.size() - 2];
    const int xk = x->shape.back();
    if (xk != mask.k) {
        throw std::invalid_argument("apply_mask: input channels " + shape_str(x->shape) +
                                    " vs mask k=" + std::to_string(mask.k));
    }
    const bool spatial = mask.kind.variant == MaskVariant::PixelAny ||
                         mask.kind.variant == MaskVariant::PixelXor ||
                         mask.kind.variant == MaskVariant::BlockAny;
    if (spatial && (xw != mask.w || xh != mask.h)) {
        throw std::invalid_argument("apply_mask: input " + shape_str(x->shape) +
                                    " vs mask domain " + std::to_string(mask.w) + "x" +
                                    std::to_string(mask.h));
    }

    auto st = straight_through(tape, pair, mask);
    switch (mask.kind.variant) {
        case MaskVariant::ChannelAny:
            st = ops::reshape(tape, st, {1, 1, mask.k});
            break;
        case MaskVariant::ChannelXor:
            break;  // already {1,1,k}
        case MaskVariant::PixelAny:
        case MaskVariant::PixelXor:
            break;  // {w,h,k}
        case MaskVariant::BlockAny:
            st = ops::block_upsample(tape, st, mask.w, mask.h);
            break;
    }
    auto stb = ops::broadcast_to(tape, st, x->shape);
    return ops::mul(tape, x, stb);
}

TensorPtr mask_loss(Tape& tape, const DiscretePair& pair, const SelectionMask& mask) {
    for (double c : mask.costs)
        if (c < 0.0) throw std::invalid_argument("mask_loss: negative cost");
    auto st = straight_through(tape, pair, mask);
    auto flat = ops::reshape(tape, st, {static_cast<int>(mask.element_count())});
    auto weighted = ops::mul_const(tape, flat, mask.costs);
    return ops::reduce_sum(tape, weighted);
}

TensorPtr final_discretize(const SelectionMask& mask) {
    return hard_from(mask.logits->values, mask);
}

TensorPtr keep_indicator(const TensorPtr& hard, const SelectionMask& mask) {
    if (!mask.kind.is_any()) return Tensor::of(hard->shape, hard->values);
    std::vector<int> shape(hard->shape.begin(), hard->shape.end() - 1);
    return Tensor::of(shape, keep_values(hard, mask));
}

double hard_mask_cost(const TensorPtr& hard, const SelectionMask& mask) {
    auto keep = keep_values(hard, mask);
    double q = 0.0;
    for (std::size_t i = 0; i < keep.size(); ++i) q += keep[i] != 0.0 ? mask.costs[i] : 0.0;
    return q;
}

}  // namespace maskforge
