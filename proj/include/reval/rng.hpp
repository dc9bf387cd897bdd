#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace reval {

// Stable 64-bit FNV-1a over the id bytes; used to key per-entity substreams.
std::uint64_t fnv1a64(std::string_view s);

// Counter-based generator, "splitmix64/v1". The i-th draw is a pure function
// of (key, i), so any substream can be consumed independently of every other
// and results do not depend on thread scheduling or iteration order.
class CounterRng {
public:
    static constexpr std::string_view name = "splitmix64/v1";

    explicit CounterRng(std::uint64_t key) : key_(key) {}

    // Fold labels (e.g. a stage tag and an id hash) into a seed to obtain an
    // independent stream key.
    static CounterRng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> labels);

    std::uint64_t next_u64();

    // Uniform in [0,1), 53 mantissa bits.
    double next_double();

    // Uniform in [0,n), rejection sampling so every value is equally likely.
    std::uint64_t next_below(std::uint64_t n);

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace reval
