#include "maskforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "maskforge/ops.hpp"

namespace maskforge {

namespace {

// Standard JPEG luminance quantization table (Annex K).
constexpr int kLumaTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct DctBasis {
    double cosines[8][8];  // cos((2x+1)*u*pi/16)
    double alpha[8];       // orthonormal scale
    DctBasis() {
        for (int x = 0; x < 8; ++x)
            for (int u = 0; u < 8; ++u)
                cosines[x][u] = std::cos((2 * x + 1) * u * M_PI / 16.0);
        alpha[0] = std::sqrt(1.0 / 8.0);
        for (int u = 1; u < 8; ++u) alpha[u] = std::sqrt(2.0 / 8.0);
    }
};

const DctBasis& basis() {
    static const DctBasis b;
    return b;
}

void dct8x8(const double block[64], double coef[64]) {
    const auto& b = basis();
    for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x)
                for (int y = 0; y < 8; ++y)
                    acc += block[x * 8 + y] * b.cosines[x][u] * b.cosines[y][v];
            coef[u * 8 + v] = b.alpha[u] * b.alpha[v] * acc;
        }
    }
}

void idct8x8(const double coef[64], double block[64]) {
    const auto& b = basis();
    for (int x = 0; x < 8; ++x) {
        for (int y = 0; y < 8; ++y) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v)
                    acc += b.alpha[u] * b.alpha[v] * coef[u * 8 + v] * b.cosines[x][u] *
                           b.cosines[y][v];
            block[x * 8 + y] = acc;
        }
    }
}

}  // namespace

std::vector<double> quality_transform(const std::vector<double>& channel, int w, int h, double q) {
    if (!(q >= 1.0 && q <= 100.0))
        throw std::invalid_argument("quality_transform: quality " + std::to_string(q) +
                                    " outside [1,100]");
    if (w < 1 || h < 1 || static_cast<std::int64_t>(channel.size()) != static_cast<std::int64_t>(w) * h)
        throw std::invalid_argument("quality_transform: bad image dims");

    const double scale = q < 50.0 ? 5000.0 / q : 200.0 - 2.0 * q;
    int steps[64];
    for (int i = 0; i < 64; ++i) {
        double s = std::floor((kLumaTable[i] * scale + 50.0) / 100.0);
        steps[i] = static_cast<int>(std::clamp(s, 1.0, 255.0));
    }

    const int pw = (w + 7) / 8 * 8, ph = (h + 7) / 8 * 8;
    std::vector<double> padded(static_cast<std::size_t>(pw) * ph);
    for (int x = 0; x < pw; ++x) {
        const int sx = std::min(x, w - 1);  // edge replication
        for (int y = 0; y < ph; ++y) padded[x * ph + y] = channel[sx * h + std::min(y, h - 1)];
    }

    // JPEG-style pipeline per block: level shift, DCT, quantize, inverse,
    // unshift, clamp, integer pixels.
    double block[64], coef[64];
    for (int bx = 0; bx < pw; bx += 8) {
        for (int by = 0; by < ph; by += 8) {
            for (int x = 0; x < 8; ++x)
                for (int y = 0; y < 8; ++y)
                    block[x * 8 + y] = padded[(bx + x) * ph + (by + y)] - 128.0;
            dct8x8(block, coef);
            for (int i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / steps[i]) * steps[i];
            idct8x8(coef, block);
            for (int x = 0; x < 8; ++x)
                for (int y = 0; y < 8; ++y)
                    padded[(bx + x) * ph + (by + y)] =
                        std::round(std::clamp(block[x * 8 + y] + 128.0, 0.0, 255.0));
        }
    }

    std::vector<double> out(channel.size());
    for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y) out[x * h + y] = padded[x * ph + y];
    return out;
}

std::vector<double> extend_values(const std::vector<double>& x, int n, int w, int h, int c,
                                  const std::vector<double>& qualities) {
    if (qualities.empty()) throw std::invalid_argument("extend: empty quality list");
    for (std::size_t i = 1; i < qualities.size(); ++i) {
        if (!(qualities[i] < qualities[i - 1]))
            throw std::invalid_argument("extend: qualities must be strictly decreasing");
    }
    if (!(qualities.back() >= 1.0))
        throw std::invalid_argument("extend: qualities must be >= 1");

    const int v = static_cast<int>(qualities.size());
    const std::int64_t plane = static_cast<std::int64_t>(w) * h;
    std::vector<double> out(static_cast<std::size_t>(n) * plane * c * v);
    std::vector<double> chan(static_cast<std::size_t>(plane));
    for (int img = 0; img < n; ++img) {
        const double* src = x.data() + static_cast<std::size_t>(img) * plane * c;
        double* dst = out.data() + static_cast<std::size_t>(img) * plane * c * v;
        for (int ci = 0; ci < c; ++ci) {
            for (std::int64_t p = 0; p < plane; ++p) chan[p] = src[p * c + ci] * 255.0;
            for (int qi = 0; qi < v; ++qi) {
                auto degraded = quality_transform(chan, w, h, qualities[qi]);
                const int oc = ci * v + qi;  // channel-major, then quality
                for (std::int64_t p = 0; p < plane; ++p) dst[p * c * v + oc] = degraded[p] / 255.0;
            }
        }
    }
    return out;
}

TensorPtr merge_sum(Tape& tape, const TensorPtr& x, int group) {
    if (group < 1) throw std::invalid_argument("merge_sum: group must be positive");
    if (x->shape.size() != 3 && x->shape.size() != 4)
        throw std::invalid_argument("merge_sum: expected [w,h,c] or [n,w,h,c], got " +
                                    shape_str(x->shape));
    const int cin = x->shape.back();
    if (cin % group != 0)
        throw std::invalid_argument("merge_sum: channel count " + std::to_string(cin) +
                                    " not divisible by group " + std::to_string(group));
    const int cout = cin / group;
    auto oshape = x->shape;
    oshape.back() = cout;
    auto out = Tensor::zeros(oshape, x->requires_grad);
    const std::size_t pixels = x->values.size() / static_cast<std::size_t>(cin);
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* src = x->values.data() + p * cin;
        double* dst = out->values.data() + p * cout;
        for (int co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (int j = 0; j < group; ++j) acc += src[co * group + j];
            dst[co] = acc;
        }
    }
    if (out->requires_grad) {
        tape.record([x, out, cin, cout, group, pixels] {
            for (std::size_t p = 0; p < pixels; ++p) {
                const double* g = out->grad.data() + p * cout;
                double* dx = x->grad.data() + p * cin;
                for (int co = 0; co < cout; ++co)
                    for (int j = 0; j < group; ++j) dx[co * group + j] += g[co];
            }
        });
    }
    return out;
}

Stage Stage::extend(std::vector<double> qualities) {
    Stage s;
    s.kind = Kind::Extend;
    s.qualities = std::move(qualities);
    return s;
}

int Pipeline::validate(const std::vector<SelectionMask>& masks) const {
    if (in_w <= 0 || in_h <= 0 || in_c <= 0)
        throw std::invalid_argument("pipeline: input shape not declared");
    int c = in_c;
    for (const auto& s : stages) {
        switch (s.kind) {
            case Stage::Kind::Extend: {
                if (s.qualities.empty()) throw std::invalid_argument("pipeline: empty extend");
                for (std::size_t i = 1; i < s.qualities.size(); ++i)
                    if (!(s.qualities[i] < s.qualities[i - 1]))
                        throw std::invalid_argument(
                            "pipeline: extend qualities must be strictly decreasing");
                c *= static_cast<int>(s.qualities.size());
                break;
            }
            case Stage::Kind::Mask: {
                if (s.mask_id < 0 || s.mask_id >= static_cast<int>(masks.size()))
                    throw std::invalid_argument("pipeline: unregistered mask id " +
                                                std::to_string(s.mask_id));
                const auto& m = masks[s.mask_id];
                if (m.k != c)
                    throw std::invalid_argument("pipeline: mask " + std::to_string(s.mask_id) +
                                                " expects k=" + std::to_string(m.k) +
                                                " channels, pipeline carries " + std::to_string(c));
                const bool spatial = m.kind.variant == MaskVariant::PixelAny ||
                                     m.kind.variant == MaskVariant::PixelXor ||
                                     m.kind.variant == MaskVariant::BlockAny;
                if (spatial && (m.w != in_w || m.h != in_h))
                    throw std::invalid_argument("pipeline: mask domain mismatch");
                break;
            }
            case Stage::Kind::MergeSum: {
                if (s.group < 1 || c % s.group != 0)
                    throw std::invalid_argument("pipeline: merge group " + std::to_string(s.group) +
                                                " does not divide " + std::to_string(c));
                c /= s.group;
                break;
            }
        }
    }
    return c;
}

PipelineResult pipeline_forward(Tape& tape, const Pipeline& p, const TensorPtr& x,
                                std::vector<SelectionMask>& masks, double tau, bool explore) {
    PipelineResult res;
    res.x = x;
    const bool batched = x->shape.size() == 4;
    const int n = batched ? x->shape[0] : 1;
    for (const auto& s : p.stages) {
        switch (s.kind) {
            case Stage::Kind::Extend: {
                if (s.pre_applied) break;
                const auto& sh = res.x->shape;
                const int w = sh[sh.size() - 3], h = sh[sh.size() - 2], c = sh.back();
                auto vals = extend_values(res.x->values, n, w, h, c, s.qualities);
                auto oshape = sh;
                oshape.back() = c * static_cast<int>(s.qualities.size());
                res.x = Tensor::of(oshape, std::move(vals));
                break;
            }
            case Stage::Kind::Mask: {
                auto& m = masks[s.mask_id];
                auto pair = discretize(tape, m, tau, explore);
                res.x = apply_mask(tape, res.x, pair, m);
                res.stage_losses.push_back(mask_loss(tape, pair, m));
                break;
            }
            case Stage::Kind::MergeSum:
                res.x = merge_sum(tape, res.x, s.group);
                break;
        }
    }
    if (res.stage_losses.empty()) {
        res.q = Tensor::scalar(0.0);
    } else {
        res.q = res.stage_losses[0];
        for (std::size_t i = 1; i < res.stage_losses.size(); ++i) {
            res.q = p.combine == LossCombine::Sum ? ops::add(tape, res.q, res.stage_losses[i])
                                                  : ops::mul(tape, res.q, res.stage_losses[i]);
        }
    }
    return res;
}

TensorPtr pipeline_apply_hard(const Pipeline& p, const TensorPtr& x,
                              const std::vector<SelectionMask>& masks,
                              const std::vector<TensorPtr>& keeps) {
    Tape scratch;  // nothing requires grad on this path; stays empty
    TensorPtr cur = x;
    const bool batched = x->shape.size() == 4;
    const int n = batched ? x->shape[0] : 1;
    std::size_t ki = 0;
    for (const auto& s : p.stages) {
        switch (s.kind) {
            case Stage::Kind::Extend: {
                if (s.pre_applied) break;
                const auto& sh = cur->shape;
                const int w = sh[sh.size() - 3], h = sh[sh.size() - 2], c = sh.back();
                auto vals = extend_values(cur->values, n, w, h, c, s.qualities);
                auto oshape = sh;
                oshape.back() = c * static_cast<int>(s.qualities.size());
                cur = Tensor::of(oshape, std::move(vals));
                break;
            }
            case Stage::Kind::Mask: {
                const auto& m = masks[s.mask_id];
                if (ki >= keeps.size())
                    throw std::invalid_argument("pipeline_apply_hard: missing mask for stage");
                auto keep = keeps[ki++];
                TensorPtr kt = keep;
                if (m.kind.variant == MaskVariant::BlockAny)
                    kt = ops::block_upsample(scratch, kt, m.w, m.h);
                auto kb = ops::broadcast_to(scratch, kt, cur->shape);
                cur = ops::mul(scratch, cur, kb);
                break;
            }
            case Stage::Kind::MergeSum:
                cur = merge_sum(scratch, cur, s.group);
                break;
        }
    }
    return cur;
}

double pipeline_hard_cost(const Pipeline& p, const std::vector<SelectionMask>& masks,
                          const std::vector<TensorPtr>& hards) {
    double combined = p.combine == LossCombine::Sum ? 0.0 : 1.0;
    std::size_t hi = 0;
    bool any = false;
    for (const auto& s : p.stages) {
        if (s.kind != Stage::Kind::Mask) continue;
        const double q = hard_mask_cost(hards[hi], masks[s.mask_id]);
        ++hi;
        any = true;
        combined = p.combine == LossCombine::Sum ? combined + q : combined * q;
    }
    return any ? combined : 0.0;
}

}  // namespace maskforge
