#include "maskforge/formats.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace maskforge {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

static const char* kHeader =
    "run_id,epoch,lambda,tau,train_acc,test_acc,task_loss,mask_q,lambda_stepped,seconds";

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::binary);  // binary: keep '\n' endings everywhere
    if (!os) throw std::runtime_error("write_metrics_csv: cannot write " + path);
    os << kHeader << '\n';
    for (const auto& r : rows) {
        os << r.run_id << ',' << r.epoch << ',' << format_double(r.lambda) << ','
           << format_double(r.tau) << ',' << format_double(r.train_acc) << ','
           << format_double(r.test_acc) << ',' << format_double(r.task_loss) << ','
           << format_double(r.mask_q) << ',' << (r.lambda_stepped ? 1 : 0) << ','
           << format_double(r.seconds) << '\n';
    }
}

namespace {

double parse_field_double(const std::string& s, const std::string& path) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error("parse_metrics_csv: bad number '" + s + "' in " + path);
    return v;
}

}  // namespace

std::vector<MetricsRow> parse_metrics_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("parse_metrics_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != kHeader)
        throw std::runtime_error("parse_metrics_csv: bad header in " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != 10)
            throw std::runtime_error("parse_metrics_csv: expected 10 fields in " + path);
        MetricsRow r;
        r.run_id = static_cast<int>(parse_field_double(fields[0], path));
        r.epoch = static_cast<int>(parse_field_double(fields[1], path));
        r.lambda = parse_field_double(fields[2], path);
        r.tau = parse_field_double(fields[3], path);
        r.train_acc = parse_field_double(fields[4], path);
        r.test_acc = parse_field_double(fields[5], path);
        r.task_loss = parse_field_double(fields[6], path);
        r.mask_q = parse_field_double(fields[7], path);
        r.lambda_stepped = fields[8] == "1";
        r.seconds = parse_field_double(fields[9], path);
        rows.push_back(r);
    }
    return rows;
}

void write_pgm(const std::string& path, int rows, int cols,
               const std::vector<unsigned char>& pixels) {
    if (static_cast<std::size_t>(rows) * cols != pixels.size())
        throw std::runtime_error("write_pgm: pixel count mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot write " + path);
    os << "P5\n" << cols << ' ' << rows << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
}

std::pair<std::pair<int, int>, std::vector<unsigned char>> read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string magic;
    int cols = 0, rows = 0, maxval = 0;
    is >> magic >> cols >> rows >> maxval;
    if (magic != "P5" || maxval != 255) throw std::runtime_error("read_pgm: unsupported " + path);
    is.get();  // single whitespace after maxval
    std::vector<unsigned char> pixels(static_cast<std::size_t>(rows) * cols);
    is.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!is) throw std::runtime_error("read_pgm: truncated " + path);
    return {{rows, cols}, pixels};
}

std::vector<std::string> write_mask_pgm(const TensorPtr& keep, const std::string& stem) {
    for (double v : keep->values) {
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("write_mask_pgm: mask is not binary");
    }
    auto to_byte = [](double v) { return static_cast<unsigned char>(v != 0.0 ? 255 : 0); };
    std::vector<std::string> written;

    const auto& sh = keep->shape;
    if (sh.size() == 3 && sh[0] == 1 && sh[1] == 1) {
        // channel strip
        std::vector<unsigned char> px(keep->values.size());
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte(keep->values[i]);
        const std::string path = stem + ".pgm";
        write_pgm(path, 1, sh[2], px);
        written.push_back(path);
        return written;
    }
    if (sh.size() == 3) {
        const int w = sh[0], h = sh[1], k = sh[2];
        for (int ci = 0; ci < k; ++ci) {
            std::vector<unsigned char> px(static_cast<std::size_t>(w) * h);
            for (int x = 0; x < w; ++x)
                for (int y = 0; y < h; ++y)
                    px[static_cast<std::size_t>(x) * h + y] =
                        to_byte(keep->values[(static_cast<std::size_t>(x) * h + y) * k + ci]);
            const std::string path = k == 1 ? stem + ".pgm" : stem + "_c" + std::to_string(ci) + ".pgm";
            write_pgm(path, w, h, px);
            written.push_back(path);
        }
        return written;
    }
    throw std::invalid_argument("write_mask_pgm: unsupported keep shape " + shape_str(keep->shape));
}

}  // namespace maskforge
