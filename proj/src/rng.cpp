#include "maskforge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace maskforge {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t base, std::uint64_t purpose, std::uint64_t index) {
    std::uint64_t s = splitmix64(base ^ splitmix64(purpose ^ 0xa076'1d64'78bd'642fULL));
    s = splitmix64(s ^ splitmix64(index ^ 0xe703'7ed1'a0b4'28dbULL));
    return RngStream(s);
}

double RngStream::normal(double mean, double sigma) {
    double u1 = uniform();
    double u2 = uniform();
    u1 = std::max(u1, 1e-300);
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * M_PI * u2);
}

double RngStream::gumbel() {
    double u = uniform();
    u = std::clamp(u, 1e-12, 1.0 - 1e-12);
    return -std::log(-std::log(u));
}

std::string RngStream::state_string() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void RngStream::restore_state(const std::string& s, std::uint64_t draws) {
    std::istringstream is(s);
    is >> engine_;
    draws_ = draws;
}

}  // namespace maskforge
