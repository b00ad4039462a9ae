#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace maskforge {

// Deterministic random stream. All distribution transforms are implemented
// by hand on top of mt19937_64 raw output so that sequences are bit-identical
// across compilers and standard libraries (std::*_distribution is
// implementation-defined).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    // Derives an independent stream from (base seed, purpose, index) via
    // splitmix64 so that unrelated consumers never share a sequence.
    static RngStream derive(std::uint64_t base, std::uint64_t purpose, std::uint64_t index = 0);

    std::uint64_t next_u64() {
        ++draws_;
        return engine_();
    }

    // Uniform in [0,1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without caching; every call consumes exactly two uniforms,
    // which keeps draw accounting and checkpoint state trivial.
    double normal(double mean, double sigma);

    // Standard Gumbel(0,1): -log(-log(u)), u clamped into (0,1).
    double gumbel();

    // Fisher-Yates permutation of 0..n-1.
    template <typename Int>
    void shuffle_indices(std::vector<Int>& idx) {
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(idx[i - 1], idx[j]);
        }
    }

    // Number of raw engine draws so far; tests use this to assert that
    // explore/fixate phases touch the noise source as contracted.
    std::uint64_t draw_count() const { return draws_; }

    // Textual engine state for bit-exact checkpoint resume.
    std::string state_string() const;
    void restore_state(const std::string& s, std::uint64_t draws);

private:
    std::mt19937_64 engine_;
    std::uint64_t draws_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace maskforge
