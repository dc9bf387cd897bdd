#include "reval/candidates.hpp"

#include <algorithm>
#include <set>

#include "reval/errors.hpp"
#include "reval/rng.hpp"

namespace reval {

CandidateList candidates_usertest(const UserId& u, const Dataset& test) {
    CandidateList list;
    list.user = u;
    list.strategy = "usertest";
    std::set<ItemId> items;
    for (std::uint32_t r : test.rows_of_user(u)) items.insert(test.rows()[r].item);
    list.items.assign(items.begin(), items.end());
    return list;
}

CandidateList candidates_trainitems(const UserId& u, const Dataset& train) {
    CandidateList list;
    list.user = u;
    list.strategy = "trainitems";
    std::set<ItemId> own;
    for (std::uint32_t r : train.rows_of_user(u)) own.insert(train.rows()[r].item);
    for (const ItemId& i : train.items()) {
        if (!own.count(i)) list.items.push_back(i);
    }
    return list;
}

std::vector<CandidateList> candidates_oneplusrandom(const UserId& u, const Dataset& train,
                                                    const Dataset& test, std::size_t n_random,
                                                    double relevance_threshold,
                                                    std::uint64_t seed) {
    std::set<ItemId> rated;
    for (std::uint32_t r : train.rows_of_user(u)) rated.insert(train.rows()[r].item);
    for (std::uint32_t r : test.rows_of_user(u)) rated.insert(test.rows()[r].item);

    // unrated universe in canonical order, so sampling is independent of any
    // container iteration quirks
    std::vector<ItemId> eligible;
    {
        std::set<ItemId> universe(train.items().begin(), train.items().end());
        universe.insert(test.items().begin(), test.items().end());
        for (const ItemId& i : universe) {
            if (!rated.count(i)) eligible.push_back(i);
        }
    }

    std::vector<ItemId> relevant;
    for (std::uint32_t r : test.rows_of_user(u)) {
        if (test.rows()[r].rating >= relevance_threshold) relevant.push_back(test.rows()[r].item);
    }
    std::sort(relevant.begin(), relevant.end());
    relevant.erase(std::unique(relevant.begin(), relevant.end()), relevant.end());

    std::vector<CandidateList> lists;
    for (const ItemId& rel : relevant) {
        if (eligible.size() < n_random) {
            throw data_error("one-plus-random: user " + u + " has only " +
                             std::to_string(eligible.size()) + " unrated items, need " +
                             std::to_string(n_random));
        }
        CandidateList list;
        list.user = u;
        list.strategy = "one-plus-random";
        std::vector<ItemId> sample = eligible;
        CounterRng rng = CounterRng::derive(seed, {fnv1a64("one-plus-random"), fnv1a64(u), fnv1a64(rel)});
        // partial Fisher-Yates: only the first n_random slots are needed
        for (std::size_t i = 0; i < n_random; ++i) {
            std::size_t j = i + rng.next_below(sample.size() - i);
            std::swap(sample[i], sample[j]);
        }
        sample.resize(n_random);
        sample.push_back(rel);
        std::sort(sample.begin(), sample.end());
        list.items = std::move(sample);
        lists.push_back(std::move(list));
    }
    return lists;
}

} // namespace reval
