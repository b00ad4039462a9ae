#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maskforge/rng.hpp"
#include "maskforge/tensor.hpp"

namespace maskforge {

// Labeled image set; values live in [0,1], layout [n][w][h][c] row-major.
struct Dataset {
    int w = 0, h = 0, c = 0;
    int class_count = 0;
    std::string name;
    std::vector<double> images;
    std::vector<int> labels;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    std::int64_t image_numel() const { return static_cast<std::int64_t>(w) * h * c; }
    const double* image(std::int64_t i) const { return images.data() + i * image_numel(); }

    // Copies a batch (by dataset indices) into an [n,w,h,c] tensor.
    TensorPtr gather(const std::vector<std::int64_t>& idx) const;
};

// IDX (big-endian MNIST container). Rejects bad magic, truncation, and
// image/label count mismatches with byte-level diagnostics.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::optional<std::int64_t> limit = std::nullopt);
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// Internal cached-dataset format: 16-byte header (magic "MSKD", u32 version,
// u32 rank, u32 reserved) + rank little-endian u32 dims + little-endian f32
// payload.
void save_mskd(const std::string& path, const std::vector<int>& dims,
               const std::vector<double>& values);
std::pair<std::vector<int>, std::vector<double>> load_mskd(const std::string& path);

void save_dataset_cache(const Dataset& ds, const std::string& stem);
Dataset load_dataset_cache(const std::string& stem);

// Quadrant-blob classification where channel 0 carries the signal, channels
// 1..informative-1 are noisy copies, and the rest are pure noise.
Dataset synth_redundant_channels(std::int64_t n, int w = 16, int h = 16, int k = 8,
                                 int informative = 1, double noise_sigma = 0.1, int classes = 4,
                                 std::uint64_t seed = 0);

// Two-class set whose label depends only on the central 6x6 window; border
// pixels are class-independent noise.
Dataset synth_center_target(std::int64_t n, int w = 20, int h = 20, int k = 3, int classes = 2,
                            std::uint64_t seed = 0);

// Deterministic 28x28x1 ten-class digit glyphs with affine jitter; an
// offline stand-in with MNIST-like empty borders.
Dataset synth_digits(std::int64_t n, std::uint64_t seed = 0);

// Seeded permutation split into batch index lists; the final partial batch is
// kept.
std::vector<std::vector<std::int64_t>> make_batches(std::int64_t n, int batch_size,
                                                    RngStream& stream);

}  // namespace maskforge
