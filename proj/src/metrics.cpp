#include "reval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reval/errors.hpp"
#include "reval/util.hpp"

namespace reval {

std::string NanPolicy::to_string() const {
    if (kind == Kind::ignore) return "ignore";
    return "substitute:" + format_double(c);
}

NanPolicy NanPolicy::from_string(const std::string& s) {
    if (s == "ignore") return ignore();
    if (s.rfind("substitute:", 0) == 0) return substitute(parse_double(s.substr(11), 0));
    throw config_error("bad nan policy '" + s + "'");
}

bool RelevanceJudgments::is_relevant(const UserId& u, const ItemId& i) const {
    auto it = by_user.find(u);
    return it != by_user.end() && it->second.count(i) != 0;
}

std::size_t RelevanceJudgments::relevant_count(const UserId& u) const {
    auto it = by_user.find(u);
    return it == by_user.end() ? 0 : it->second.size();
}

RelevanceJudgments relevance_from_test(const Dataset& test, double threshold) {
    RelevanceJudgments j;
    j.threshold = threshold;
    for (const Interaction& r : test.rows()) {
        if (r.rating >= threshold) j.by_user[r.user][r.item] = r.rating;
    }
    return j;
}

namespace {

struct ErrorAccumulator {
    double sum = 0;
    std::size_t n = 0;
    void add(double err) {
        sum += err;
        ++n;
    }
};

MetricResult error_metric(const std::string& name, bool squared,
                          const std::vector<Prediction>& predictions, const Dataset& test,
                          NanPolicy nan_policy, ErrorAggregation aggregation, bool normalize) {
    // predictions indexed by (user,item); test pairs without an entry count
    // as undefined predictions
    std::map<std::pair<UserId, ItemId>, std::optional<double>> by_pair;
    for (const Prediction& p : predictions) by_pair[{p.user, p.item}] = p.score;

    double norm = 1.0;
    if (normalize) {
        if (!test.scale().is_bounded()) {
            throw config_error(name + ": normalization needs a bounded rating scale");
        }
        norm = test.scale().range();
    }

    std::map<UserId, ErrorAccumulator> per_user_acc;
    ErrorAccumulator global;
    for (const Interaction& row : test.rows()) {
        std::optional<double> predicted;
        auto it = by_pair.find({row.user, row.item});
        if (it != by_pair.end()) predicted = it->second;
        if (!predicted) {
            if (nan_policy.kind == NanPolicy::Kind::ignore) continue;
            predicted = nan_policy.c;
        }
        double err = std::abs(row.rating - *predicted) / norm;
        if (squared) err = err * err;
        per_user_acc[row.user].add(err);
        global.add(err);
    }
    if (global.n == 0) {
        throw degenerate_sample_error(name + ": no usable pairs (all predictions undefined under ignore)");
    }

    MetricResult result;
    result.name = name;
    auto finish = [&](double mean) { return squared ? std::sqrt(mean) : mean; };
    for (const auto& [u, acc] : per_user_acc) {
        result.per_user[u] = finish(acc.sum / static_cast<double>(acc.n));
    }
    if (aggregation == ErrorAggregation::global) {
        result.aggregate = finish(global.sum / static_cast<double>(global.n));
        result.n = global.n;
    } else {
        double sum = 0;
        for (const auto& [_, v] : result.per_user) sum += v;
        result.aggregate = sum / static_cast<double>(result.per_user.size());
        result.n = result.per_user.size();
    }
    return result;
}

// mean over per_user map in sorted key order: the deterministic reduction
void aggregate_mean(MetricResult& r) {
    if (r.per_user.empty()) {
        r.aggregate = 0;
        r.n = 0;
        return;
    }
    double sum = 0;
    for (const auto& [_, v] : r.per_user) sum += v;
    r.aggregate = sum / static_cast<double>(r.per_user.size());
    r.n = r.per_user.size();
}

} // namespace

MetricResult mae(const std::vector<Prediction>& predictions, const Dataset& test,
                 NanPolicy nan_policy, ErrorAggregation aggregation, bool normalize) {
    return error_metric("mae", false, predictions, test, nan_policy, aggregation, normalize);
}

MetricResult rmse(const std::vector<Prediction>& predictions, const Dataset& test,
                  NanPolicy nan_policy, ErrorAggregation aggregation, bool normalize) {
    return error_metric("rmse", true, predictions, test, nan_policy, aggregation, normalize);
}

MetricResult precision_at_k(const std::vector<RankedList>& rankings,
                            const RelevanceJudgments& judgments, std::size_t k,
                            PrecisionDenom denom) {
    MetricResult result;
    result.name = "p";
    result.cutoff = k;
    for (const RankedList& list : rankings) {
        std::size_t returned = std::min(k, list.entries.size());
        if (denom == PrecisionDenom::returned_length && returned == 0) {
            ++result.n_excluded; // nothing returned: no denominator to judge by
            continue;
        }
        std::size_t hits = 0;
        for (std::size_t r = 0; r < returned; ++r) {
            if (judgments.is_relevant(list.user, list.entries[r].item)) ++hits;
        }
        double d = denom == PrecisionDenom::cutoff_k ? static_cast<double>(k)
                                                     : static_cast<double>(returned);
        result.per_user[list.user] = static_cast<double>(hits) / d;
    }
    aggregate_mean(result);
    return result;
}

MetricResult recall_at_k(const std::vector<RankedList>& rankings,
                         const RelevanceJudgments& judgments, std::size_t k) {
    MetricResult result;
    result.name = "r";
    result.cutoff = k;
    for (const RankedList& list : rankings) {
        std::size_t total_relevant = judgments.relevant_count(list.user);
        if (total_relevant == 0) {
            ++result.n_excluded;
            continue;
        }
        std::size_t hits = 0;
        for (std::size_t r = 0; r < std::min(k, list.entries.size()); ++r) {
            if (judgments.is_relevant(list.user, list.entries[r].item)) ++hits;
        }
        result.per_user[list.user] =
            static_cast<double>(hits) / static_cast<double>(total_relevant);
    }
    aggregate_mean(result);
    return result;
}

std::string to_string(NdcgGain g) {
    switch (g) {
        case NdcgGain::binary: return "binary";
        case NdcgGain::exp_shifted: return "exp-shifted";
        case NdcgGain::exp_raw: return "exp-raw";
    }
    return "?";
}

NdcgGain ndcg_gain_from_string(const std::string& s) {
    if (s == "binary") return NdcgGain::binary;
    if (s == "exp-shifted") return NdcgGain::exp_shifted;
    if (s == "exp-raw") return NdcgGain::exp_raw;
    throw config_error("bad ndcg gain '" + s + "'");
}

namespace {

// gain of a judged rating; 0 for anything below the threshold
double ndcg_gain_value(double rating, double threshold, NdcgGain gain,
                       const OverflowPolicy& overflow) {
    if (rating < threshold) return 0.0;
    double exponent;
    switch (gain) {
        case NdcgGain::binary:
            return 1.0;
        case NdcgGain::exp_shifted:
            exponent = rating - threshold + 1.0;
            break;
        case NdcgGain::exp_raw:
            exponent = rating;
            break;
        default:
            return 0.0;
    }
    if (exponent > overflow.cap) {
        if (overflow.kind == OverflowPolicy::Kind::error) {
            throw data_error("ndcg gain overflow: exponent " + format_double(exponent) +
                             " exceeds cap " + format_double(overflow.cap) +
                             " (rating " + format_double(rating) + ", threshold " +
                             format_double(threshold) + ")");
        }
        exponent = overflow.cap;
    }
    double g = std::pow(2.0, exponent);
    if (gain == NdcgGain::exp_raw) g -= 1.0;
    return g;
}

} // namespace

MetricResult ndcg_at_k(const std::vector<RankedList>& rankings,
                       const RelevanceJudgments& judgments, std::size_t k, NdcgGain gain,
                       OverflowPolicy overflow) {
    MetricResult result;
    result.name = "ndcg";
    result.cutoff = k;
    for (const RankedList& list : rankings) {
        auto judged = judgments.by_user.find(list.user);
        if (judged == judgments.by_user.end()) {
            ++result.n_excluded;
            continue;
        }
        // ideal ordering: rating desc, item asc
        std::vector<std::pair<ItemId, double>> ideal(judged->second.begin(), judged->second.end());
        std::sort(ideal.begin(), ideal.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        double idcg = 0;
        for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) {
            idcg += ndcg_gain_value(ideal[r].second, judgments.threshold, gain, overflow) /
                    std::log2(static_cast<double>(r) + 2.0);
        }
        if (idcg == 0) {
            ++result.n_excluded;
            continue;
        }
        double dcg = 0;
        for (std::size_t r = 0; r < std::min(k, list.entries.size()); ++r) {
            auto it = judged->second.find(list.entries[r].item);
            if (it == judged->second.end()) continue;
            dcg += ndcg_gain_value(it->second, judgments.threshold, gain, overflow) /
                   std::log2(static_cast<double>(r) + 2.0);
        }
        result.per_user[list.user] = dcg / idcg;
    }
    aggregate_mean(result);
    return result;
}

MetricResult mrr(const std::vector<RankedList>& rankings, const RelevanceJudgments& judgments) {
    MetricResult result;
    result.name = "mrr";
    for (const RankedList& list : rankings) {
        if (judgments.relevant_count(list.user) == 0) {
            ++result.n_excluded;
            continue;
        }
        double value = 0.0;
        for (const RankedEntry& e : list.entries) {
            if (judgments.is_relevant(list.user, e.item)) {
                value = 1.0 / static_cast<double>(e.rank);
                break;
            }
        }
        result.per_user[list.user] = value;
    }
    aggregate_mean(result);
    return result;
}

double user_coverage(const std::vector<RankedList>& rankings,
                     const std::vector<UserId>& eligible_users) {
    if (eligible_users.empty()) return 0.0;
    std::set<UserId> eligible(eligible_users.begin(), eligible_users.end());
    std::set<UserId> covered;
    for (const RankedList& list : rankings) {
        if (!list.entries.empty() && eligible.count(list.user)) covered.insert(list.user);
    }
    return static_cast<double>(covered.size()) / static_cast<double>(eligible.size());
}

double catalog_coverage(const std::vector<RankedList>& rankings, std::size_t item_universe) {
    if (item_universe == 0) return 0.0;
    std::set<ItemId> seen;
    for (const RankedList& list : rankings) {
        for (const RankedEntry& e : list.entries) seen.insert(e.item);
    }
    return static_cast<double>(seen.size()) / static_cast<double>(item_universe);
}

} // namespace reval
