#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reval/dataset.hpp"
#include "reval/recommenders.hpp"

namespace reval {

struct ImportResult {
    std::vector<RankedList> lists;
    // items absent from train and test are accepted but counted
    std::size_t unknown_item_warnings = 0;
};

// Parse an externally produced recommendations file against a declared
// split. Ranks must be contiguous per user and users must exist in the
// split; imported ranks are authoritative even where scores would re-sort
// differently (the external tie policy is part of what is audited).
ImportResult import_external_recommendations(std::istream& in, const Dataset& train,
                                             const Dataset& test);

// aggregate metric values of one run directory, keyed by
// (recommender, strategy, metric, cutoff)
struct RunMetrics {
    struct Key {
        std::string rec;
        std::string strategy;
        std::string metric;
        std::optional<std::size_t> cutoff;
        auto operator<=>(const Key&) const = default;
    };
    std::map<Key, double> values;
    std::map<std::string, std::string> split_digests; // file -> digest, from the manifest
};

RunMetrics load_run_metrics(const std::filesystem::path& run_dir);

struct DivergenceReport {
    // set when the two runs do not share split digests; values are then not
    // comparable and the report says so
    bool cross_protocol = false;

    struct Delta {
        RunMetrics::Key key;
        double value_a = 0;
        double value_b = 0;
        double delta = 0; // a - b
    };
    std::vector<Delta> deltas;

    // winner per (rec, metric, cutoff) and strategy: 'A', 'B' or '='
    struct Flip {
        std::string rec;
        std::string metric;
        std::optional<std::size_t> cutoff;
        std::string strategy_where_a_wins;
        std::string strategy_where_b_wins;
    };
    std::vector<Flip> flips;

    std::vector<std::string> notes; // unmatched rows, coverage disparities
};

DivergenceReport compare_runs(const std::filesystem::path& dir_a,
                              const std::filesystem::path& dir_b);

void render_divergence(const DivergenceReport& report, std::ostream& text, std::ostream& csv);

struct ProtocolHint {
    std::vector<std::string> strategies; // more than one on a tie
    double distance = 0;
    bool tie = false;
};

// Nearest candidate strategy by L1 distance between the external metric
// vector and each strategy's controlled vector (shared metrics only). A
// hint, never a verdict.
ProtocolHint protocol_hint(const std::map<std::string, double>& external,
                           const std::map<std::string, std::map<std::string, double>>& grid);

} // namespace reval
