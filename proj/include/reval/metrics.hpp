#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reval/dataset.hpp"
#include "reval/recommenders.hpp"

namespace reval {

// Rule for test pairs the recommender could not score.
struct NanPolicy {
    enum class Kind { ignore, substitute };
    Kind kind = Kind::ignore;
    double c = 0.0;

    static NanPolicy ignore() { return {}; }
    static NanPolicy substitute(double c) { return {Kind::substitute, c}; }

    std::string to_string() const;
    static NanPolicy from_string(const std::string& s);
};

struct RelevanceJudgments {
    // only test pairs with rating >= threshold, raw rating kept for gains
    std::map<UserId, std::map<ItemId, double>> by_user;
    double threshold = 0.0;

    bool is_relevant(const UserId& u, const ItemId& i) const;
    std::size_t relevant_count(const UserId& u) const;
};

RelevanceJudgments relevance_from_test(const Dataset& test, double threshold);

struct MetricResult {
    std::string name;
    std::optional<std::size_t> cutoff;
    std::map<UserId, double> per_user;
    double aggregate = 0.0;
    // samples aggregated: pairs for global error metrics, users otherwise
    std::size_t n = 0;
    // users left out (no relevant items, zero ideal gain, no usable pairs)
    std::size_t n_excluded = 0;
};

enum class ErrorAggregation { global, per_user_then_average };

// `normalize` divides every error by the bounded scale's range. Throws
// degenerate_sample_error when the ignore policy leaves zero usable pairs.
MetricResult mae(const std::vector<Prediction>& predictions, const Dataset& test,
                 NanPolicy nan_policy, ErrorAggregation aggregation, bool normalize);
MetricResult rmse(const std::vector<Prediction>& predictions, const Dataset& test,
                  NanPolicy nan_policy, ErrorAggregation aggregation, bool normalize);

enum class PrecisionDenom { cutoff_k, returned_length };

MetricResult precision_at_k(const std::vector<RankedList>& rankings,
                            const RelevanceJudgments& judgments, std::size_t k,
                            PrecisionDenom denom);
// denominator = the user's total relevant count; users with none are excluded
// and counted
MetricResult recall_at_k(const std::vector<RankedList>& rankings,
                         const RelevanceJudgments& judgments, std::size_t k);

enum class NdcgGain { binary, exp_shifted, exp_raw };

std::string to_string(NdcgGain g);
NdcgGain ndcg_gain_from_string(const std::string& s);

// Guard against runaway exponential gains (the implicit-count hazard: a raw
// listen count fed into 2^(r-t+1)). `error` throws naming the offending
// exponent; `saturate` clamps the exponent at `cap`.
struct OverflowPolicy {
    enum class Kind { error, saturate };
    Kind kind = Kind::error;
    double cap = 64.0;

    static OverflowPolicy error() { return {}; }
    static OverflowPolicy saturate(double cap) { return {Kind::saturate, cap}; }
};

// DCG with log2 discount over ranks 1..k; IDCG from the user's relevant test
// items sorted (rating desc, item asc), truncated at k. Users with zero IDCG
// are excluded and counted.
MetricResult ndcg_at_k(const std::vector<RankedList>& rankings,
                       const RelevanceJudgments& judgments, std::size_t k, NdcgGain gain,
                       OverflowPolicy overflow);

// 1/rank of the first relevant item (full list, no cutoff), 0 when none is
// retrieved; averaged over users with at least one relevant test item.
MetricResult mrr(const std::vector<RankedList>& rankings, const RelevanceJudgments& judgments);

// fraction of eligible users whose ranked list is non-empty
double user_coverage(const std::vector<RankedList>& rankings,
                     const std::vector<UserId>& eligible_users);
// fraction of the item universe that appears in any ranked list
double catalog_coverage(const std::vector<RankedList>& rankings, std::size_t item_universe);

} // namespace reval
