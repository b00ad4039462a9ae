#include "maskforge/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace maskforge {

TensorPtr Dataset::gather(const std::vector<std::int64_t>& idx) const {
    const std::int64_t m = image_numel();
    auto t = Tensor::zeros({static_cast<int>(idx.size()), w, h, c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::memcpy(t->values.data() + static_cast<std::int64_t>(i) * m, image(idx[i]),
                    static_cast<std::size_t>(m) * sizeof(double));
    }
    return t;
}

namespace {

std::uint32_t read_be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void write_be32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_idx: cannot open " + path);
    is.seekg(0, std::ios::end);
    const auto len = is.tellg();
    is.seekg(0);
    std::vector<unsigned char> buf(static_cast<std::size_t>(len));
    is.read(reinterpret_cast<char*>(buf.data()), len);
    return buf;
}

struct IdxPayload {
    std::vector<std::uint32_t> dims;
    const unsigned char* data;
};

IdxPayload parse_idx(const std::vector<unsigned char>& buf, const std::string& path) {
    if (buf.size() < 4)
        throw std::runtime_error("load_idx: " + path + " truncated at byte " +
                                 std::to_string(buf.size()) + " (need 4-byte magic)");
    if (buf[0] != 0 || buf[1] != 0 || buf[2] != 0x08)
        throw std::runtime_error("load_idx: " + path + " bad magic (expected 0x0000 08 rank)");
    const int rank = buf[3];
    const std::size_t header = 4 + 4 * static_cast<std::size_t>(rank);
    if (buf.size() < header)
        throw std::runtime_error("load_idx: " + path + " truncated at byte " +
                                 std::to_string(buf.size()) + " (header needs " +
                                 std::to_string(header) + ")");
    IdxPayload p;
    std::size_t total = 1;
    for (int d = 0; d < rank; ++d) {
        p.dims.push_back(read_be32(buf.data() + 4 + 4 * d));
        total *= p.dims.back();
    }
    if (buf.size() != header + total)
        throw std::runtime_error("load_idx: " + path + " payload is " +
                                 std::to_string(buf.size() - header) + " bytes, expected " +
                                 std::to_string(total) + " at byte offset " +
                                 std::to_string(header));
    p.data = buf.data() + header;
    return p;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::optional<std::int64_t> limit) {
    const auto ibuf = read_file(images_path);
    const auto lbuf = read_file(labels_path);
    const auto img = parse_idx(ibuf, images_path);
    const auto lab = parse_idx(lbuf, labels_path);
    if (img.dims.size() != 3)
        throw std::runtime_error("load_idx: " + images_path + " must be rank 3 (count, rows, cols)");
    if (lab.dims.size() != 1)
        throw std::runtime_error("load_idx: " + labels_path + " must be rank 1");
    if (img.dims[0] != lab.dims[0])
        throw std::runtime_error("load_idx: image count " + std::to_string(img.dims[0]) +
                                 " != label count " + std::to_string(lab.dims[0]));

    std::int64_t n = img.dims[0];
    if (limit) n = std::min<std::int64_t>(n, std::max<std::int64_t>(*limit, 0));
    const int rows = static_cast<int>(img.dims[1]);
    const int cols = static_cast<int>(img.dims[2]);

    Dataset ds;
    ds.w = rows;
    ds.h = cols;
    ds.c = 1;
    ds.name = "idx";
    ds.images.resize(static_cast<std::size_t>(n) * rows * cols);
    ds.labels.resize(static_cast<std::size_t>(n));
    int max_label = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const unsigned char* src = img.data + i * rows * cols;
        double* dst = ds.images.data() + i * rows * cols;
        for (int p = 0; p < rows * cols; ++p) dst[p] = src[p] / 255.0;
        ds.labels[i] = lab.data[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = max_label + 1;
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.c != 1) throw std::runtime_error("save_idx: only single-channel datasets");
    std::ofstream io(images_path, std::ios::binary);
    if (!io) throw std::runtime_error("save_idx: cannot write " + images_path);
    write_be32(io, 0x00000803u);
    write_be32(io, static_cast<std::uint32_t>(ds.size()));
    write_be32(io, static_cast<std::uint32_t>(ds.w));
    write_be32(io, static_cast<std::uint32_t>(ds.h));
    for (double v : ds.images) {
        const auto b = static_cast<unsigned char>(std::lround(v * 255.0));
        io.put(static_cast<char>(b));
    }
    std::ofstream lo(labels_path, std::ios::binary);
    if (!lo) throw std::runtime_error("save_idx: cannot write " + labels_path);
    write_be32(lo, 0x00000801u);
    write_be32(lo, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels) lo.put(static_cast<char>(static_cast<unsigned char>(y)));
}

namespace {

void write_le32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_le32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

}  // namespace

void save_mskd(const std::string& path, const std::vector<int>& dims,
               const std::vector<double>& values) {
    std::int64_t total = 1;
    for (int d : dims) total *= d;
    if (total != static_cast<std::int64_t>(values.size()))
        throw std::runtime_error("save_mskd: dims do not match value count");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_mskd: cannot write " + path);
    os.write("MSKD", 4);
    write_le32(os, 1u);  // version
    write_le32(os, static_cast<std::uint32_t>(dims.size()));
    write_le32(os, 0u);  // reserved
    for (int d : dims) write_le32(os, static_cast<std::uint32_t>(d));
    for (double v : values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_le32(os, bits);
    }
}

std::pair<std::vector<int>, std::vector<double>> load_mskd(const std::string& path) {
    auto buf = read_file(path);
    if (buf.size() < 16 || std::memcmp(buf.data(), "MSKD", 4) != 0)
        throw std::runtime_error("load_mskd: " + path + " missing MSKD header");
    const std::uint32_t version = read_le32(buf.data() + 4);
    if (version != 1) throw std::runtime_error("load_mskd: unsupported version");
    const std::uint32_t rank = read_le32(buf.data() + 8);
    if (buf.size() < 16 + 4 * rank) throw std::runtime_error("load_mskd: truncated dims");
    std::vector<int> dims(rank);
    std::int64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
        dims[d] = static_cast<int>(read_le32(buf.data() + 16 + 4 * d));
        total *= dims[d];
    }
    const std::size_t off = 16 + 4 * rank;
    if (buf.size() != off + 4 * static_cast<std::size_t>(total))
        throw std::runtime_error("load_mskd: payload size mismatch in " + path);
    std::vector<double> values(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) {
        const std::uint32_t bits = read_le32(buf.data() + off + 4 * i);
        float f;
        std::memcpy(&f, &bits, 4);
        values[i] = f;
    }
    return {dims, values};
}

void save_dataset_cache(const Dataset& ds, const std::string& stem) {
    save_mskd(stem + ".images.mskd", {static_cast<int>(ds.size()), ds.w, ds.h, ds.c}, ds.images);
    std::vector<double> lab(ds.labels.begin(), ds.labels.end());
    save_mskd(stem + ".labels.mskd", {static_cast<int>(ds.size())}, lab);
}

Dataset load_dataset_cache(const std::string& stem) {
    auto [idims, ivals] = load_mskd(stem + ".images.mskd");
    auto [ldims, lvals] = load_mskd(stem + ".labels.mskd");
    if (idims.size() != 4 || ldims.size() != 1 || idims[0] != ldims[0])
        throw std::runtime_error("load_dataset_cache: inconsistent cache at " + stem);
    Dataset ds;
    ds.w = idims[1];
    ds.h = idims[2];
    ds.c = idims[3];
    ds.name = "cache";
    ds.images = std::move(ivals);
    ds.labels.resize(lvals.size());
    int max_label = 0;
    for (std::size_t i = 0; i < lvals.size(); ++i) {
        ds.labels[i] = static_cast<int>(lvals[i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = max_label + 1;
    return ds;
}

Dataset synth_redundant_channels(std::int64_t n, int w, int h, int k, int informative,
                                 double noise_sigma, int classes, std::uint64_t seed) {
    if (informative > k)
        throw std::invalid_argument("synth_redundant_channels: informative > channels");
    Dataset ds;
    ds.w = w;
    ds.h = h;
    ds.c = k;
    ds.class_count = classes;
    ds.name = "synth_redundant_channels";
    ds.images.assign(static_cast<std::size_t>(n) * w * h * k, 0.0);
    ds.labels.resize(static_cast<std::size_t>(n));

    auto rng = RngStream::derive(seed, 0x7265645fULL /* "red_" */);
    const double blob_sigma = std::min(w, h) / 9.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % classes);  // exactly balanced
        ds.labels[i] = y;
        // blob center inside quadrant (y mod 4)
        const int quad = y % 4;
        const double qx0 = (quad % 2 == 0) ? 0.1 : 0.55;
        const double qy0 = (quad / 2 == 0) ? 0.1 : 0.55;
        const double cx = (qx0 + 0.35 * rng.uniform()) * w;
        const double cy = (qy0 + 0.35 * rng.uniform()) * h;

        double* img = ds.images.data() + i * static_cast<std::int64_t>(w) * h * k;
        for (int px = 0; px < w; ++px) {
            for (int py = 0; py < h; ++py) {
                const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                const double v =
                    std::clamp(0.1 + 0.85 * std::exp(-d2 / (2.0 * blob_sigma * blob_sigma)), 0.0, 1.0);
                img[(static_cast<std::int64_t>(px) * h + py) * k] = v;
            }
        }
        for (int ci = 1; ci < k; ++ci) {
            for (int px = 0; px < w; ++px) {
                for (int py = 0; py < h; ++py) {
                    const std::int64_t base = (static_cast<std::int64_t>(px) * h + py) * k;
                    double v;
                    if (ci < informative) {
                        v = img[base];  // noisy copy of the signal channel
                        if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
                    } else {
                        v = rng.uniform();  // pure noise
                    }
                    img[base + ci] = std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    return ds;
}

Dataset synth_center_target(std::int64_t n, int w, int h, int k, int classes, std::uint64_t seed) {
    Dataset ds;
    ds.w = w;
    ds.h = h;
    ds.c = k;
    ds.class_count = classes;
    ds.name = "synth_center_target";
    ds.images.assign(static_cast<std::size_t>(n) * w * h * k, 0.0);
    ds.labels.resize(static_cast<std::size_t>(n));

    auto rng = RngStream::derive(seed, 0x63656e74ULL /* "cent" */);
    const int cx0 = w / 2 - 3, cy0 = h / 2 - 3;  // central 6x6 window
    for (std::int64_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % classes);
        ds.labels[i] = y;
        const double level = 0.3 + 0.4 * (static_cast<double>(y) / (classes - 1));
        double* img = ds.images.data() + i * static_cast<std::int64_t>(w) * h * k;
        for (int px = 0; px < w; ++px) {
            for (int py = 0; py < h; ++py) {
                const bool central =
                    px >= cx0 && px < cx0 + 6 && py >= cy0 && py < cy0 + 6;
                for (int ci = 0; ci < k; ++ci) {
                    double v = central ? rng.normal(level, 0.08) : rng.uniform();
                    img[(static_cast<std::int64_t>(px) * h + py) * k + ci] =
                        std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    return ds;
}

namespace {

struct Seg {
    double x0, y0, x1, y1;
};

// seven-segment strokes in a unit box (x right, y down)
const std::array<Seg, 7> kSegs = {{
    {0.2, 0.15, 0.8, 0.15},  // A top
    {0.8, 0.15, 0.8, 0.50},  // B upper right
    {0.8, 0.50, 0.8, 0.85},  // C lower right
    {0.2, 0.85, 0.8, 0.85},  // D bottom
    {0.2, 0.50, 0.2, 0.85},  // E lower left
    {0.2, 0.15, 0.2, 0.50},  // F upper left
    {0.2, 0.50, 0.8, 0.50},  // G middle
}};

constexpr std::uint8_t kDigitSegs[10] = {
    0b0111111,  // 0: ABCDEF
    0b0000110,  // 1: BC
    0b1011011,  // 2: ABDEG
    0b1001111,  // 3: ABCDG
    0b1100110,  // 4: BCFG
    0b1101101,  // 5: ACDFG
    0b1111101,  // 6: ACDEFG
    0b0000111,  // 7: ABC
    0b1111111,  // 8
    0b1101111,  // 9: ABCDFG
};

double seg_distance(const Seg& s, double x, double y) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = ((x - s.x0) * dx + (y - s.y0) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const double px = s.x0 + t * dx, py = s.y0 + t * dy;
    return std::sqrt((x - px) * (x - px) + (y - py) * (y - py));
}

}  // namespace

Dataset synth_digits(std::int64_t n, std::uint64_t seed) {
    constexpr int W = 28, H = 28;
    Dataset ds;
    ds.w = W;
    ds.h = H;
    ds.c = 1;
    ds.class_count = 10;
    ds.name = "synth_digits";
    ds.images.assign(static_cast<std::size_t>(n) * W * H, 0.0);
    ds.labels.resize(static_cast<std::size_t>(n));

    auto rng = RngStream::derive(seed, 0x64696774ULL /* "digt" */);
    for (std::int64_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(i % 10);
        ds.labels[i] = digit;
        const double rot = rng.normal(0.0, 0.07);
        const double sc = 0.9 + 0.2 * rng.uniform();
        const double tx = rng.normal(0.0, 1.0);
        const double ty = rng.normal(0.0, 1.0);
        const double stroke = 0.055 + 0.02 * rng.uniform();
        const double gain = 0.85 + 0.15 * rng.uniform();
        const double cosr = std::cos(rot), sinr = std::sin(rot);

        double* img = ds.images.data() + i * W * H;
        // glyph box occupies the central ~18px, borders stay empty
        const double box = 18.0 * sc;
        const double ox = (W - box) / 2.0 + tx, oy = (H - box) / 2.0 + ty;
        for (int px = 0; px < W; ++px) {
            for (int py = 0; py < H; ++py) {
                // inverse affine into unit glyph coords around the box center
                const double rx = (px + 0.5 - ox) / box - 0.5;
                const double ry = (py + 0.5 - oy) / box - 0.5;
                const double gx = cosr * rx + sinr * ry + 0.5;
                const double gy = -sinr * rx + cosr * ry + 0.5;
                if (gx < -0.1 || gx > 1.1 || gy < -0.1 || gy > 1.1) continue;
                double dist = 1e9;
                for (int s = 0; s < 7; ++s) {
                    if (kDigitSegs[digit] & (1u << s))
                        dist = std::min(dist, seg_distance(kSegs[s], gx, gy));
                }
                const double v = std::clamp((stroke - dist) / 0.04 + 0.5, 0.0, 1.0) * gain;
                img[px * H + py] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return ds;
}

std::vector<std::vector<std::int64_t>> make_batches(std::int64_t n, int batch_size,
                                                    RngStream& stream) {
    if (batch_size < 1 || batch_size > n)
        throw std::invalid_argument("make_batches: batch size " + std::to_string(batch_size) +
                                    " out of range for n=" + std::to_string(n));
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    stream.shuffle_indices(order);
    std::vector<std::vector<std::int64_t>> batches;
    for (std::int64_t start = 0; start < n; start += batch_size) {
        const std::int64_t end = std::min<std::int64_t>(start + batch_size, n);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

}  // namespace maskforge
