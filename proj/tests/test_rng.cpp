#include <doctest.h>

#include <map>
#include <set>

#include "reval/rng.hpp"

using namespace reval;

TEST_CASE("same key gives the same stream") {
    CounterRng a = CounterRng::derive(42, {fnv1a64("x")});
    CounterRng b = CounterRng::derive(42, {fnv1a64("x")});
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different labels give different streams") {
    CounterRng a = CounterRng::derive(42, {fnv1a64("split")});
    CounterRng b = CounterRng::derive(42, {fnv1a64("mf")});
    int equal = 0;
    for (int i = 0; i < 64; ++i) {
        if (a.next_u64() == b.next_u64()) ++equal;
    }
    CHECK(equal == 0);
}

TEST_CASE("next_below stays in range with roughly even mass") {
    CounterRng rng(7);
    std::map<std::uint64_t, int> counts;
    for (int i = 0; i < 30000; ++i) ++counts[rng.next_below(3)];
    CHECK(counts.size() == 3);
    for (const auto& [v, c] : counts) {
        CHECK(v < 3);
        CHECK(c > 9000); // ~10000 each
    }
}

TEST_CASE("next_double in [0,1)") {
    CounterRng rng(9);
    for (int i = 0; i < 1000; ++i) {
        double v = rng.next_double();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("shuffle is a permutation and seed-stable") {
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    CounterRng a = CounterRng::derive(1, {fnv1a64("s")});
    a.shuffle(v);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 8);

    std::vector<int> w{1, 2, 3, 4, 5, 6, 7, 8};
    CounterRng b = CounterRng::derive(1, {fnv1a64("s")});
    b.shuffle(w);
    CHECK(v == w);
}
