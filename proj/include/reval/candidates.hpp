#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reval/dataset.hpp"

namespace reval {

struct CandidateList {
    UserId user;
    std::vector<ItemId> items; // sorted ascending, unique
    std::string strategy;      // spec echo
};

// Exactly the user's test items; empty when the user is absent from test.
CandidateList candidates_usertest(const UserId& u, const Dataset& test);

// Every item rated by anyone in train, minus the user's own train items.
CandidateList candidates_trainitems(const UserId& u, const Dataset& train);

// One list per relevant test item of the user: the item plus n_random seeded
// random items the user rated nowhere in train or test. Metrics over these
// micro-rankings are averaged. Throws when fewer than n_random unrated items
// exist, naming the shortfall.
std::vector<CandidateList> candidates_oneplusrandom(const UserId& u, const Dataset& train,
                                                    const Dataset& test, std::size_t n_random,
                                                    double relevance_threshold,
                                                    std::uint64_t seed);

} // namespace reval
