#include "gptree/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gptree {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix64(seed ^ mix64(stream_id))) {}

RngStream RngStream::derive(std::uint64_t child) const {
    return RngStream(seed_, mix64(stream_id_ * 0x100000001b3ULL + mix64(child + 1)));
}

double RngStream::uniform() {
    // 53 random bits, offset by half an ulp so 0 and 1 are never returned.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::exponential() { return -std::log(uniform()); }

std::size_t RngStream::below(std::size_t n) {
    // modulo with rejection of the incomplete top block
    if (n <= 1) return 0;
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
}

std::string RngStream::state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

RngStream RngStream::restore(std::uint64_t seed, std::uint64_t stream_id, const std::string& state) {
    RngStream r(seed, stream_id);
    std::istringstream in(state);
    in >> r.engine_;
    if (in.fail()) throw std::invalid_argument("RngStream::restore: malformed engine state");
    return r;
}

}  // namespace gptree
