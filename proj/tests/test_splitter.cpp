#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "reval/errors.hpp"
#include "reval/rng.hpp"
#include "reval/splitter.hpp"

using namespace reval;
using namespace testutil;

namespace {

std::string key_of(const Interaction& r) {
    return r.user + "\t" + r.item + "\t" + std::to_string(r.rating) + "\t" +
           std::to_string(r.timestamp.value_or(-1));
}

std::multiset<std::string> keys_of(const Dataset& ds) {
    std::multiset<std::string> out;
    for (const Interaction& r : ds.rows()) out.insert(key_of(r));
    return out;
}

// disjointness and provenance against the multiset oracle
void check_partition(const Dataset& source, const SplitPair& pair) {
    std::multiset<std::string> src = keys_of(source);
    std::multiset<std::string> train = keys_of(pair.train);
    std::multiset<std::string> test = keys_of(pair.test);
    CHECK(train.size() + test.size() == src.size());
    std::multiset<std::string> merged = train;
    merged.insert(test.begin(), test.end());
    CHECK(merged == src);
}

Dataset random_dataset(CounterRng& rng, bool timestamps, int max_users = 8, int max_items = 12) {
    int n = 2 + static_cast<int>(rng.next_below(60));
    std::vector<Interaction> rows;
    std::set<std::pair<std::string, std::string>> seen;
    for (int i = 0; i < n; ++i) {
        std::string u = "u" + std::to_string(rng.next_below(max_users));
        std::string it = "i" + std::to_string(rng.next_below(max_items));
        if (!seen.insert({u, it}).second) continue;
        Interaction r;
        r.user = u;
        r.item = it;
        r.rating = 1.0 + static_cast<double>(rng.next_below(5));
        if (timestamps) r.timestamp = static_cast<std::int64_t>(rng.next_below(1000));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) rows.push_back(timestamps ? row("u0", "i0", 3, 1) : row("u0", "i0", 3));
    return make_dataset(std::move(rows));
}

} // namespace

TEST_CASE("random global: exact test size and determinism") {
    std::vector<Interaction> rows;
    for (int i = 0; i < 100; ++i) {
        rows.push_back(row("u" + std::to_string(i % 10), "i" + std::to_string(i), 3));
    }
    Dataset ds = make_dataset(rows);
    SplitPair a = split_random_global(ds, 0.2, 7);
    CHECK(a.test.size() == 20);
    CHECK(a.train.size() == 80);
    check_partition(ds, a);

    SplitPair b = split_random_global(ds, 0.2, 7);
    CHECK(keys_of(a.train) == keys_of(b.train));
    CHECK(keys_of(a.test) == keys_of(b.test));
}

TEST_CASE("random global: 5 interactions at ratio 0.2 put exactly one in test, any seed valid") {
    Dataset ds = make_dataset(
        {row("u", "a", 1), row("u", "b", 2), row("u", "c", 3), row("u", "d", 4), row("u", "e", 5)});
    // oracle: every singleton is a valid test set; enumerate them
    std::set<std::string> singletons{"a", "b", "c", "d", "e"};
    std::set<std::string> seen;
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
        SplitPair pair = split_random_global(ds, 0.2, seed);
        REQUIRE(pair.test.size() == 1);
        check_partition(ds, pair);
        std::string item = pair.test.rows()[0].item;
        CHECK(singletons.count(item) == 1);
        seen.insert(item);
    }
    CHECK(seen.size() > 1); // different seeds do reach different singletons
}

TEST_CASE("ratio outside (0,1) rejected") {
    Dataset ds = make_dataset({row("u", "a", 1), row("u", "b", 2)});
    CHECK_THROWS_AS(split_random_global(ds, 0.0, 1), config_error);
    CHECK_THROWS_AS(split_random_global(ds, 1.0, 1), config_error);
}

TEST_CASE("random per-user: exact per-user counts") {
    std::vector<Interaction> rows;
    for (int u = 0; u < 5; ++u) {
        for (int i = 0; i < 10; ++i) {
            rows.push_back(row("u" + std::to_string(u), "i" + std::to_string(i), 3));
        }
    }
    Dataset ds = make_dataset(rows);
    SplitPair pair = split_random_per_user(ds, 0.2, 3);
    check_partition(ds, pair);
    for (const UserId& u : ds.users()) {
        CHECK(pair.test.rows_of_user(u).size() == 2);
    }
}

TEST_CASE("random per-user: a single-interaction user stays in train and is reported") {
    Dataset ds = make_dataset({row("u1", "a", 3), row("u2", "a", 3), row("u2", "b", 4),
                               row("u2", "c", 5), row("u2", "d", 2), row("u2", "e", 1)});
    SplitPair pair = split_random_per_user(ds, 0.2, 1);
    CHECK(pair.test.rows_of_user("u1").empty());
    CHECK(pair.train.rows_of_user("u1").size() == 1);
    CHECK(std::count(pair.train_only_users.begin(), pair.train_only_users.end(), "u1") == 1);
    CHECK(pair.test.rows_of_user("u2").size() == 1);
}

TEST_CASE("temporal global by ratio: timestamps 1..10 leave 9 and 10 in test") {
    std::vector<Interaction> rows;
    for (int t = 1; t <= 10; ++t) {
        rows.push_back(row("u" + std::to_string(t % 3), "i" + std::to_string(t), 3, t));
    }
    Dataset ds = make_dataset(rows);
    SplitPair pair = split_temporal_global(ds, 0.2);
    REQUIRE(pair.test.size() == 2);
    std::set<std::int64_t> test_ts;
    for (const Interaction& r : pair.test.rows()) test_ts.insert(*r.timestamp);
    CHECK(test_ts == std::set<std::int64_t>{9, 10});
    check_partition(ds, pair);
}

TEST_CASE("temporal global at explicit boundary below min: empty train") {
    Dataset ds = make_dataset({row("u", "a", 3, 10), row("u", "b", 4, 20)});
    SplitPair pair = split_temporal_global_at(ds, 5);
    CHECK(pair.train.empty());
    CHECK(pair.test.size() == 2);
}

TEST_CASE("temporal splits refuse untimestamped data") {
    Dataset ds = make_dataset({row("u", "a", 3), row("u", "b", 4)});
    CHECK_THROWS_AS(split_temporal_global(ds, 0.2), data_error);
    CHECK_THROWS_AS(split_temporal_per_user(ds, 0.2), data_error);
}

TEST_CASE("temporal per-user: latest interactions go to test") {
    std::vector<Interaction> rows;
    for (int t = 1; t <= 5; ++t) rows.push_back(row("u", "i" + std::to_string(t), 3, t));
    Dataset ds = make_dataset(rows);
    SplitPair pair = split_temporal_per_user(ds, 0.4);
    REQUIRE(pair.test.size() == 2);
    std::set<std::string> test_items;
    for (const Interaction& r : pair.test.rows()) test_items.insert(r.item);
    CHECK(test_items == std::set<std::string>{"i4", "i5"});
}

TEST_CASE("temporal per-user tie: the lexicographically larger item goes to test") {
    Dataset ds = make_dataset({row("u", "a", 3, 7), row("u", "b", 4, 7), row("u", "c", 2, 1)});
    SplitPair pair = split_temporal_per_user(ds, 0.34);
    REQUIRE(pair.test.size() == 1);
    CHECK(pair.test.rows()[0].item == "b");
}

TEST_CASE("given-n: test-gets-n leaves at least one train interaction") {
    Dataset ds = make_dataset({row("u", "a", 1), row("u", "b", 2), row("u", "c", 3),
                               row("u", "d", 4), row("u", "e", 5)});
    SplitPair pair = split_given_n(ds, 1, GivenNMode::test_gets_n, 5);
    CHECK(pair.test.size() == 1);
    CHECK(pair.train.size() == 4);

    SplitPair greedy = split_given_n(ds, 99, GivenNMode::test_gets_n, 5);
    CHECK(greedy.train.size() == 1); // never emptied
    CHECK(greedy.test.size() == 4);
}

TEST_CASE("all-but-n with n >= max user count: empty test") {
    Dataset ds = make_dataset({row("u1", "a", 1), row("u1", "b", 2), row("u2", "c", 3)});
    SplitPair pair = split_given_n(ds, 10, GivenNMode::all_but_n_in_test, 5);
    CHECK(pair.test.empty());
    CHECK(pair.train.size() == 3);
}

TEST_CASE("all-but-n keeps exactly n per user (cold-start shape)") {
    std::vector<Interaction> rows;
    for (int u = 0; u < 4; ++u) {
        for (int i = 0; i < 8; ++i) {
            rows.push_back(row("u" + std::to_string(u), "i" + std::to_string(i), 3));
        }
    }
    Dataset ds = make_dataset(rows);
    SplitPair pair = split_given_n(ds, 2, GivenNMode::all_but_n_in_test, 9);
    for (const UserId& u : ds.users()) {
        CHECK(pair.train.rows_of_user(u).size() == 2);
        CHECK(pair.test.rows_of_user(u).size() == 6);
    }
}

TEST_CASE("given-n honors a per-user count table") {
    Dataset ds = make_dataset({row("u1", "a", 1), row("u1", "b", 2), row("u1", "c", 3),
                               row("u2", "a", 1), row("u2", "b", 2), row("u2", "c", 3)});
    std::map<UserId, std::size_t> table{{"u1", 2}};
    SplitPair pair = split_given_n(ds, 1, GivenNMode::test_gets_n, 3, &table);
    CHECK(pair.test.rows_of_user("u1").size() == 2); // overridden
    CHECK(pair.test.rows_of_user("u2").size() == 1); // default n
}

TEST_CASE("cross validation global: folds partition the dataset") {
    std::vector<Interaction> rows;
    for (int i = 0; i < 10; ++i) rows.push_back(row("u" + std::to_string(i % 3), "i" + std::to_string(i), 3));
    Dataset ds = make_dataset(rows);
    FoldSet folds = split_cross_validation(ds, 5, 3, SplitScope::global);
    REQUIRE(folds.folds.size() == 5);
    std::multiset<std::string> all;
    for (const SplitPair& f : folds.folds) {
        CHECK(f.test.size() == 2);
        check_partition(ds, f);
        for (const Interaction& r : f.test.rows()) all.insert(key_of(r));
    }
    CHECK(all == keys_of(ds)); // disjoint and covering
}

TEST_CASE("k equal to dataset size is leave-one-out") {
    Dataset ds = make_dataset({row("u", "a", 1), row("u", "b", 2), row("u", "c", 3)});
    FoldSet folds = split_cross_validation(ds, 3, 1, SplitScope::global);
    for (const SplitPair& f : folds.folds) CHECK(f.test.size() == 1);
    CHECK_THROWS_AS(split_cross_validation(ds, 4, 1, SplitScope::global), data_error);
}

TEST_CASE("cross validation per-user: per-user fold counts differ by at most one") {
    CounterRng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Dataset ds = random_dataset(rng, false);
        std::size_t k = 2 + rng.next_below(3);
        if (ds.size() < k) continue;
        FoldSet folds = split_cross_validation(ds, k, trial, SplitScope::per_user);
        for (const UserId& u : ds.users()) {
            std::vector<std::size_t> counts;
            for (const SplitPair& f : folds.folds) counts.push_back(f.test.rows_of_user(u).size());
            std::size_t lo = *std::min_element(counts.begin(), counts.end());
            std::size_t hi = *std::max_element(counts.begin(), counts.end());
            CHECK(hi - lo <= 1); // counting oracle
        }
    }
}

TEST_CASE("determinism: identical spec and seed give byte-identical emitted files") {
    CounterRng rng(17);
    Dataset ds = random_dataset(rng, true, 6, 10);
    SplitSpec spec;
    spec.strategy = SplitStrategy::random_per_user;
    spec.test_ratio = 0.3;
    spec.seed = 99;
    std::ostringstream a, b;
    SplitPair pa = run_split(ds, spec);
    write_ratings(pa.train, a);
    write_ratings(pa.test, a);
    SplitPair pb = run_split(ds, spec);
    write_ratings(pb.train, b);
    write_ratings(pb.test, b);
    CHECK(a.str() == b.str());
}

TEST_CASE("property: disjointness, temporal ordering and rounding across strategies") {
    CounterRng rng(23);
    for (int trial = 0; trial < 60; ++trial) {
        Dataset ds = random_dataset(rng, true);
        double ratio = 0.1 + 0.8 * rng.next_double();
        std::uint64_t seed = rng.next_u64();

        SplitPair rg = split_random_global(ds, ratio, seed);
        check_partition(ds, rg);
        CHECK(rg.test.size() ==
              static_cast<std::size_t>(std::floor(ratio * static_cast<double>(ds.size()) + 0.5)));

        SplitPair rp = split_random_per_user(ds, ratio, seed);
        check_partition(ds, rp);
        for (const UserId& u : ds.users()) {
            std::size_t n_u = ds.rows_of_user(u).size();
            std::size_t expected =
                n_u < 2 ? 0
                        : static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_u) + 0.5));
            CHECK(rp.test.rows_of_user(u).size() == expected);
        }

        SplitPair tg = split_temporal_global(ds, ratio);
        check_partition(ds, tg);
        if (!tg.train.empty() && !tg.test.empty()) {
            std::int64_t max_train = dataset_stats(tg.train).timespan->second;
            std::int64_t min_test = dataset_stats(tg.test).timespan->first;
            CHECK(max_train < min_test); // no future information trains the model
        }

        SplitPair tp = split_temporal_per_user(ds, ratio);
        check_partition(ds, tp);
        for (const UserId& u : ds.users()) {
            const auto& train_rows = tp.train.rows_of_user(u);
            const auto& test_rows = tp.test.rows_of_user(u);
            if (train_rows.empty() || test_rows.empty()) continue;
            std::int64_t max_train = -1, min_test = 1 << 30;
            for (std::uint32_t r : train_rows) {
                max_train = std::max(max_train, *tp.train.rows()[r].timestamp);
            }
            for (std::uint32_t r : test_rows) {
                min_test = std::min(min_test, *tp.test.rows()[r].timestamp);
            }
            CHECK(max_train <= min_test);
        }
    }
}
