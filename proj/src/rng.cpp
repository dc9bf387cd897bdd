#include "reval/rng.hpp"

namespace reval {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

CounterRng CounterRng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) {
    std::uint64_t key = mix64(seed + kGolden);
    for (std::uint64_t label : labels) {
        key = mix64(key ^ (label + kGolden));
    }
    return CounterRng(key);
}

std::uint64_t CounterRng::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double CounterRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
    if (n < 2) return 0;
    // reject the tail that would make `% n` uneven
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r < threshold);
    return r % n;
}

} // namespace reval
