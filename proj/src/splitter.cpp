#include "reval/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "reval/errors.hpp"
#include "reval/rng.hpp"
#include "reval/util.hpp"

namespace reval {

std::string to_string(SplitStrategy s) {
    switch (s) {
        case SplitStrategy::random_global: return "random-global";
        case SplitStrategy::random_per_user: return "random-per-user";
        case SplitStrategy::temporal_global: return "temporal-global";
        case SplitStrategy::temporal_per_user: return "temporal-per-user";
        case SplitStrategy::given_n: return "given-n";
        case SplitStrategy::cross_validation: return "cross-validation";
    }
    return "?";
}

SplitStrategy split_strategy_from_string(const std::string& s) {
    if (s == "random-global") return SplitStrategy::random_global;
    if (s == "random-per-user") return SplitStrategy::random_per_user;
    if (s == "temporal-global") return SplitStrategy::temporal_global;
    if (s == "temporal-per-user") return SplitStrategy::temporal_per_user;
    if (s == "given-n") return SplitStrategy::given_n;
    if (s == "cross-validation") return SplitStrategy::cross_validation;
    throw config_error("bad split strategy '" + s + "'");
}

std::string SplitSpec::to_string() const {
    std::ostringstream out;
    out << reval::to_string(strategy);
    switch (strategy) {
        case SplitStrategy::random_global:
        case SplitStrategy::random_per_user:
            out << " test-ratio=" << format_double(test_ratio) << " seed=" << seed;
            break;
        case SplitStrategy::temporal_global:
            if (at_timestamp) {
                out << " at-timestamp=" << *at_timestamp;
            } else {
                out << " test-ratio=" << format_double(test_ratio);
            }
            break;
        case SplitStrategy::temporal_per_user:
            out << " test-ratio=" << format_double(test_ratio);
            break;
        case SplitStrategy::given_n:
            out << " n=" << n
                << " mode=" << (mode == GivenNMode::test_gets_n ? "test-gets-n" : "all-but-n")
                << " seed=" << seed;
            if (!per_user_n.empty()) out << " per-user-n-entries=" << per_user_n.size();
            break;
        case SplitStrategy::cross_validation:
            out << " k=" << k << " scope=" << (scope == SplitScope::global ? "global" : "per-user")
                << " seed=" << seed;
            break;
    }
    return out.str();
}

namespace {

void require_ratio(double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw config_error("test ratio must be in (0,1), got " + format_double(ratio));
    }
}

void require_nonempty(const Dataset& ds) {
    if (ds.empty()) throw data_error("cannot split an empty dataset");
}

void require_timestamps(const Dataset& ds) {
    if (!ds.fully_timestamped()) {
        throw data_error("temporal split requires a timestamp on every interaction");
    }
}

// Assemble a SplitPair from a test membership mask over source rows. Both
// sides are stored in canonical (user, item, timestamp) order so files and
// in-memory use are identical regardless of how rows were picked.
SplitPair build_pair(const Dataset& ds, const SplitSpec& spec, const std::vector<bool>& in_test,
                     std::vector<UserId> train_only) {
    std::vector<Interaction> train_rows, test_rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        (in_test[i] ? test_rows : train_rows).push_back(ds.rows()[i]);
    }
    auto sort_canonical = [](std::vector<Interaction>& rows) {
        std::sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
            std::int64_t ta = a.timestamp.value_or(0), tb = b.timestamp.value_or(0);
            return std::tie(a.user, a.item, ta) < std::tie(b.user, b.item, tb);
        });
    };
    sort_canonical(train_rows);
    sort_canonical(test_rows);
    std::string note = "; split=" + spec.to_string();
    SplitPair pair;
    pair.train = Dataset(std::move(train_rows), ds.scale(), ds.provenance() + note + " (train)",
                         ds.dedup_policy_applied());
    pair.test = Dataset(std::move(test_rows), ds.scale(), ds.provenance() + note + " (test)",
                        ds.dedup_policy_applied());
    pair.spec = spec;
    pair.train_only_users = std::move(train_only);
    return pair;
}

} // namespace

SplitPair split_random_global(const Dataset& ds, double test_ratio, std::uint64_t seed) {
    require_nonempty(ds);
    require_ratio(test_ratio);
    std::vector<std::uint32_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng = CounterRng::derive(seed, {fnv1a64("random-global")});
    rng.shuffle(order);
    std::size_t n_test = round_half_up(test_ratio * static_cast<double>(ds.size()));
    std::vector<bool> in_test(ds.size(), false);
    for (std::size_t i = 0; i < n_test && i < order.size(); ++i) in_test[order[i]] = true;
    SplitSpec spec;
    spec.strategy = SplitStrategy::random_global;
    spec.test_ratio = test_ratio;
    spec.seed = seed;
    return build_pair(ds, spec, in_test, {});
}

SplitPair split_random_per_user(const Dataset& ds, double test_ratio, std::uint64_t seed) {
    require_nonempty(ds);
    require_ratio(test_ratio);
    std::vector<bool> in_test(ds.size(), false);
    std::vector<UserId> train_only;
    for (const UserId& u : ds.users()) {
        std::vector<std::uint32_t> rows = ds.rows_of_user(u);
        std::size_t n_u = rows.size();
        std::size_t n_test_u = n_u < 2 ? 0 : round_half_up(test_ratio * static_cast<double>(n_u));
        if (n_test_u == 0) {
            train_only.push_back(u);
            continue;
        }
        CounterRng rng = CounterRng::derive(seed, {fnv1a64("random-per-user"), fnv1a64(u)});
        rng.shuffle(rows);
        for (std::size_t i = 0; i < n_test_u; ++i) in_test[rows[i]] = true;
    }
    SplitSpec spec;
    spec.strategy = SplitStrategy::random_per_user;
    spec.test_ratio = test_ratio;
    spec.seed = seed;
    return build_pair(ds, spec, in_test, std::move(train_only));
}

SplitPair split_temporal_global_at(const Dataset& ds, std::int64_t boundary) {
    require_nonempty(ds);
    require_timestamps(ds);
    std::vector<bool> in_test(ds.size(), false);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        in_test[i] = *ds.rows()[i].timestamp >= boundary;
    }
    SplitSpec spec;
    spec.strategy = SplitStrategy::temporal_global;
    spec.at_timestamp = boundary;
    return build_pair(ds, spec, in_test, {});
}

SplitPair split_temporal_global(const Dataset& ds, double test_ratio) {
    require_nonempty(ds);
    require_ratio(test_ratio);
    require_timestamps(ds);
    std::vector<std::int64_t> sorted;
    sorted.reserve(ds.size());
    for (const Interaction& r : ds.rows()) sorted.push_back(*r.timestamp);
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::int64_t> candidates = sorted;
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    // candidates: split at each distinct timestamp, plus "everything in train"
    candidates.push_back(candidates.back() + 1);

    const double target = (1.0 - test_ratio) * static_cast<double>(ds.size());
    std::int64_t best = candidates.front();
    double best_gap = -1;
    for (std::int64_t t : candidates) {
        auto train_count = static_cast<double>(
            std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
        double gap = std::abs(train_count - target);
        if (best_gap < 0 || gap < best_gap) { // ties keep the earlier point
            best_gap = gap;
            best = t;
        }
    }
    SplitPair pair = split_temporal_global_at(ds, best);
    pair.spec.at_timestamp.reset();
    pair.spec.test_ratio = test_ratio;
    return pair;
}

SplitPair split_temporal_per_user(const Dataset& ds, double test_ratio) {
    require_nonempty(ds);
    require_ratio(test_ratio);
    require_timestamps(ds);
    std::vector<bool> in_test(ds.size(), false);
    std::vector<UserId> train_only;
    for (const UserId& u : ds.users()) {
        std::vector<std::uint32_t> rows = ds.rows_of_user(u);
        std::size_t n_u = rows.size();
        std::size_t n_test_u = n_u < 2 ? 0 : round_half_up(test_ratio * static_cast<double>(n_u));
        if (n_test_u == 0) {
            train_only.push_back(u);
            continue;
        }
        // oldest first; equal timestamps ordered by item id, so the
        // lexicographically larger item goes to test when one slot remains
        std::sort(rows.begin(), rows.end(), [&](std::uint32_t a, std::uint32_t b) {
            return std::tie(*ds.rows()[a].timestamp, ds.rows()[a].item) <
                   std::tie(*ds.rows()[b].timestamp, ds.rows()[b].item);
        });
        for (std::size_t i = rows.size() - n_test_u; i < rows.size(); ++i) in_test[rows[i]] = true;
    }
    SplitSpec spec;
    spec.strategy = SplitStrategy::temporal_per_user;
    spec.test_ratio = test_ratio;
    return build_pair(ds, spec, in_test, std::move(train_only));
}

SplitPair split_given_n(const Dataset& ds, std::size_t n, GivenNMode mode, std::uint64_t seed,
                        const std::map<UserId, std::size_t>* per_user_n) {
    require_nonempty(ds);
    std::vector<bool> in_test(ds.size(), false);
    std::vector<UserId> train_only;
    for (const UserId& u : ds.users()) {
        std::vector<std::uint32_t> rows = ds.rows_of_user(u);
        std::size_t n_u = rows.size();
        std::size_t n_eff = n;
        if (per_user_n) {
            auto it = per_user_n->find(u);
            if (it != per_user_n->end()) n_eff = it->second;
        }
        std::size_t n_test_u;
        if (mode == GivenNMode::test_gets_n) {
            n_test_u = std::min(n_eff, n_u > 0 ? n_u - 1 : 0);
        } else {
            n_test_u = n_u - std::min(n_eff, n_u);
        }
        if (n_test_u == 0) {
            train_only.push_back(u);
            continue;
        }
        CounterRng rng = CounterRng::derive(seed, {fnv1a64("given-n"), fnv1a64(u)});
        rng.shuffle(rows);
        for (std::size_t i = 0; i < n_test_u; ++i) in_test[rows[i]] = true;
    }
    SplitSpec spec;
    spec.strategy = SplitStrategy::given_n;
    spec.n = n;
    spec.mode = mode;
    spec.seed = seed;
    if (per_user_n) spec.per_user_n = *per_user_n;
    return build_pair(ds, spec, in_test, std::move(train_only));
}

FoldSet split_cross_validation(const Dataset& ds, std::size_t k, std::uint64_t seed,
                               SplitScope scope) {
    require_nonempty(ds);
    if (k < 2) throw config_error("cross-validation requires k >= 2");
    if (k > ds.size()) {
        throw data_error("k=" + std::to_string(k) + " exceeds dataset size " +
                         std::to_string(ds.size()));
    }
    std::vector<std::size_t> fold_of(ds.size(), 0);
    if (scope == SplitScope::global) {
        std::vector<std::uint32_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        CounterRng rng = CounterRng::derive(seed, {fnv1a64("cv-global")});
        rng.shuffle(order);
        for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i]] = i % k;
    } else {
        for (const UserId& u : ds.users()) {
            std::vector<std::uint32_t> rows = ds.rows_of_user(u);
            CounterRng rng = CounterRng::derive(seed, {fnv1a64("cv-per-user"), fnv1a64(u)});
            rng.shuffle(rows);
            std::size_t offset = rng.next_below(k);
            for (std::size_t i = 0; i < rows.size(); ++i) fold_of[rows[i]] = (offset + i) % k;
        }
    }
    SplitSpec spec;
    spec.strategy = SplitStrategy::cross_validation;
    spec.k = k;
    spec.scope = scope;
    spec.seed = seed;

    FoldSet set;
    set.k = k;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<bool> in_test(ds.size(), false);
        for (std::size_t i = 0; i < ds.size(); ++i) in_test[i] = fold_of[i] == f;
        set.folds.push_back(build_pair(ds, spec, in_test, {}));
    }
    return set;
}

SplitPair run_split(const Dataset& ds, const SplitSpec& spec) {
    switch (spec.strategy) {
        case SplitStrategy::random_global:
            return split_random_global(ds, spec.test_ratio, spec.seed);
        case SplitStrategy::random_per_user:
            return split_random_per_user(ds, spec.test_ratio, spec.seed);
        case SplitStrategy::temporal_global:
            return spec.at_timestamp ? split_temporal_global_at(ds, *spec.at_timestamp)
                                     : split_temporal_global(ds, spec.test_ratio);
        case SplitStrategy::temporal_per_user:
            return split_temporal_per_user(ds, spec.test_ratio);
        case SplitStrategy::given_n:
            return split_given_n(ds, spec.n, spec.mode, spec.seed,
                                 spec.per_user_n.empty() ? nullptr : &spec.per_user_n);
        case SplitStrategy::cross_validation:
            throw config_error("cross-validation produces a fold set, not a single pair");
    }
    throw config_error("unknown split strategy");
}

namespace {

void report_pair(std::ostringstream& out, const SplitPair& pair) {
    out << "train interactions: " << pair.train.size() << "\n"
        << "test interactions: " << pair.test.size() << "\n"
        << "train users: " << pair.train.users().size()
        << ", test users: " << pair.test.users().size() << "\n";
    out << "train-only users (" << pair.train_only_users.size() << "):";
    for (const UserId& u : pair.train_only_users) out << ' ' << u;
    out << "\n";
}

} // namespace

std::string split_report(const SplitPair& pair) {
    std::ostringstream out;
    out << "split: " << pair.spec.to_string() << "\n";
    report_pair(out, pair);
    return out.str();
}

std::string split_report(const FoldSet& folds, const SplitSpec& spec) {
    std::ostringstream out;
    out << "split: " << spec.to_string() << "\n";
    for (std::size_t f = 0; f < folds.folds.size(); ++f) {
        out << "fold " << f << ":\n";
        report_pair(out, folds.folds[f]);
    }
    return out.str();
}

} // namespace reval
