#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reval/candidates.hpp"
#include "reval/metrics.hpp"
#include "reval/recommenders.hpp"
#include "reval/stats.hpp"

namespace reval {

// Plain-text interchange formats. Every stage communicates through these
// files only, so any stage can be re-run (or replaced by another tool) in
// isolation.

// user<TAB>item<TAB>score<TAB>rank, sorted by (user, rank); score "NaN" for
// bottom-placed entries. Also the import format for external recommenders.
void write_ranked_lists(const std::vector<RankedList>& lists, std::ostream& out);

// Strict read: ranks contiguous from 1 within a user, user blocks
// contiguous; violations throw data_error with the line number.
std::vector<RankedList> read_ranked_lists(std::istream& in);

// user<TAB>item<TAB>score with "NaN" for undefined predictions, canonical
// (user, item) order. Raw model output before candidate filtering.
void write_scores(const std::vector<Prediction>& predictions, std::ostream& out);
std::vector<Prediction> read_scores(std::istream& in);

// user<TAB>item pairs, canonical order
void write_candidates(const std::vector<CandidateList>& lists, std::ostream& out);

// metric<TAB>cutoff<TAB>scope<TAB>value; cutoff "-" when not applicable,
// scope "all" for the aggregate, otherwise a user id ("all" is reserved).
struct MetricsFile {
    struct Row {
        std::string metric;
        std::optional<std::size_t> cutoff;
        std::string scope;
        double value;
    };
    std::vector<Row> rows;

    bool has(const std::string& metric, std::optional<std::size_t> cutoff) const;
    double aggregate(const std::string& metric, std::optional<std::size_t> cutoff) const;
    std::map<UserId, double> per_user(const std::string& metric,
                                      std::optional<std::size_t> cutoff) const;
    // distinct (metric, cutoff) pairs in file order
    std::vector<std::pair<std::string, std::optional<std::size_t>>> metric_keys() const;
};

// Aggregate row first, then per-user rows in sorted order.
void write_metric_result(const MetricResult& result, std::ostream& out);
// A named scalar (coverage ratios): single "all" row.
void write_metric_scalar(const std::string& metric, std::optional<std::size_t> cutoff,
                         double value, std::ostream& out);
MetricsFile read_metrics(std::istream& in);

// metric<TAB>systemA<TAB>systemB<TAB>test<TAB>policy<TAB>n<TAB>statistic
// <TAB>p<TAB>effect<TAB>ci-low<TAB>ci-high
struct StatsRow {
    std::string metric;
    std::string system_a;
    std::string system_b;
    std::string test;
    std::string policy;
    std::size_t n = 0;
    double statistic = 0;
    double p = 1;
    double effect = 0;
    double ci_low = 0;
    double ci_high = 0;
};

void write_stats_rows(const std::vector<StatsRow>& rows, std::ostream& out);
std::vector<StatsRow> read_stats_rows(std::istream& in);

} // namespace reval
