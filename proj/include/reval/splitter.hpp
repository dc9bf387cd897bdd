#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reval/dataset.hpp"

namespace reval {

enum class SplitStrategy {
    random_global,
    random_per_user,
    temporal_global,
    temporal_per_user,
    given_n,
    cross_validation,
};

std::string to_string(SplitStrategy s);
SplitStrategy split_strategy_from_string(const std::string& s);

enum class GivenNMode { test_gets_n, all_but_n_in_test };
enum class SplitScope { global, per_user };

struct SplitSpec {
    SplitStrategy strategy = SplitStrategy::random_global;
    double test_ratio = 0.2;
    std::optional<std::int64_t> at_timestamp; // temporal_global explicit boundary
    std::size_t n = 1;                        // given_n
    GivenNMode mode = GivenNMode::test_gets_n;
    std::size_t k = 5;                        // cross_validation
    SplitScope scope = SplitScope::global;    // cross_validation
    std::uint64_t seed = 0;
    // Optional per-user override of n for given_n (the cold-start variant
    // with a different count per user); users absent fall back to n.
    std::map<UserId, std::size_t> per_user_n;

    std::string to_string() const;
};

struct SplitPair {
    Dataset train;
    Dataset test;
    SplitSpec spec;
    // Users a per-user protocol could not split (too few interactions or a
    // rounded test count of zero); they stay entirely in train and are
    // surfaced in the split report rather than hidden.
    std::vector<UserId> train_only_users;
};

struct FoldSet {
    std::vector<SplitPair> folds;
    std::size_t k = 0;
};

SplitPair split_random_global(const Dataset& ds, double test_ratio, std::uint64_t seed);
SplitPair split_random_per_user(const Dataset& ds, double test_ratio, std::uint64_t seed);

// Ratio form picks the boundary timestamp whose train fraction is closest to
// 1-test_ratio, ties to the earlier point; explicit form: train strictly
// before, test at/after.
SplitPair split_temporal_global(const Dataset& ds, double test_ratio);
SplitPair split_temporal_global_at(const Dataset& ds, std::int64_t boundary);

SplitPair split_temporal_per_user(const Dataset& ds, double test_ratio);

SplitPair split_given_n(const Dataset& ds, std::size_t n, GivenNMode mode, std::uint64_t seed,
                        const std::map<UserId, std::size_t>* per_user_n = nullptr);

FoldSet split_cross_validation(const Dataset& ds, std::size_t k, std::uint64_t seed, SplitScope scope);

// Dispatch on spec.strategy (cross_validation not included; call
// split_cross_validation for fold sets).
SplitPair run_split(const Dataset& ds, const SplitSpec& spec);

// Plain-text summary: counts, train-only users, spec echo.
std::string split_report(const SplitPair& pair);
std::string split_report(const FoldSet& folds, const SplitSpec& spec);

} // namespace reval
