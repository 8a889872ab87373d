#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gptree {

/// Reproducible random stream identified by (seed, stream_id).
///
/// Child streams are derived deterministically, so every tree node and every
/// Gibbs chain owns an independent stream whose draws do not depend on the
/// order in which other streams are consumed (or on the worker count).
/// Streams must not be shared between threads.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Fresh stream for a child (e.g. node id, chain id). Does not advance *this.
    RngStream derive(std::uint64_t child) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    /// Exponential with rate 1.
    double exponential();
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    std::vector<std::size_t> permutation(std::size_t n);

    /// Engine state as text; restore() continues the stream exactly.
    std::string state() const;
    static RngStream restore(std::uint64_t seed, std::uint64_t stream_id, const std::string& state);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used for stream derivation and payload hashing.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace gptree
