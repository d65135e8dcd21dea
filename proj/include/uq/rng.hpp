#pragma once

#include <cstdint>

namespace uq {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x);

// domain tags keeping unrelated random streams disjoint
enum class StreamKind : std::uint64_t {
    gates = 1,
    dropout = 2,
    shuffle = 3,
    init = 4,
    data = 5,
    verify = 6,
};

// Counter-based stream: draw i is a pure function of (key, i). Streams derived
// from (seed, kind, pass, layer) are independent by construction, so results
// never depend on evaluation order or worker count.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64();
    double next_uniform();   // [0, 1)
    double next_gaussian();  // standard normal, Box-Muller
    bool next_bernoulli(double p);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t derive_key(std::uint64_t seed, StreamKind kind, std::uint64_t pass = 0,
                         std::uint64_t layer = 0);
RngStream derive_stream(std::uint64_t seed, StreamKind kind, std::uint64_t pass = 0,
                        std::uint64_t layer = 0);

}  // namespace uq
