#include "uq/rng.hpp"

#include <cmath>

namespace uq {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
}

std::uint64_t mix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t RngStream::next_u64() {
    return mix64(key_ ^ (counter_++ * kGolden));
}

double RngStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    // two fresh uniforms per draw; u1 shifted into (0,1] so log stays finite
    const double u1 = 1.0 - next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

bool RngStream::next_bernoulli(double p) {
    return next_uniform() < p;
}

std::uint64_t derive_key(std::uint64_t seed, StreamKind kind, std::uint64_t pass,
                         std::uint64_t layer) {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ static_cast<std::uint64_t>(kind));
    k = mix64(k ^ pass);
    k = mix64(k ^ layer);
    return k;
}

RngStream derive_stream(std::uint64_t seed, StreamKind kind, std::uint64_t pass,
                        std::uint64_t layer) {
    return RngStream(derive_key(seed, kind, pass, layer));
}

}  // namespace uq
