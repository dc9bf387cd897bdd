#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reval/candidates.hpp"
#include "reval/dataset.hpp"
#include "reval/similarity.hpp"

namespace reval {

struct Prediction {
    UserId user;
    ItemId item;
    // absent = the model could not produce a score; a coverage signal that is
    // never silently imputed
    std::optional<double> score;
};

// Trained recommender state. Immutable after training; predict is const and
// thread-safe, so scoring parallelizes over users.
class RecModel {
public:
    virtual ~RecModel() = default;
    virtual std::optional<double> predict(const UserId& u, const ItemId& i) const = 0;
    // true when every (user, item) pair gets a defined score
    virtual bool full_coverage() const { return false; }
    virtual std::string describe() const = 0;
};

enum class KnnFormulation {
    weighted_average, // sum(r_vi * w) / sum(|w|)
    mean_centered,    // user mean + sum((r_vi - neighbor mean) * w) / sum(|w|)
    unnormalized_sum, // sum(r_vi * w); leaves the rating range
};
enum class NeighborTiming { static_train_time, dynamic_predict_time };
enum class Capping { none, clamp_to_scale };

std::string to_string(KnnFormulation f);
KnnFormulation knn_formulation_from_string(const std::string& s);

struct KnnConfig {
    Direction direction = Direction::user_user;
    std::size_t k = 50;
    KnnFormulation formulation = KnnFormulation::weighted_average;
    NeighborTiming timing = NeighborTiming::static_train_time;
    // similarity used to find neighbors; `weighting`, when set, scores the
    // contributions with a second metric
    SimilarityConfig similarity;
    std::optional<SimilarityConfig> weighting;
    // when set, neighbors are taken by similarity threshold instead of top-k
    std::optional<double> neighbor_threshold;
    // r-bar inside the mean-centered formulation; all_items is the stated
    // theory, overlap_only computes each neighbor's mean over the items it
    // shares with the target (the target's own mean always uses all items)
    MeanPolicy prediction_mean_policy = MeanPolicy::all_items;
    Capping capping = Capping::none;
};

class KnnModel : public RecModel {
public:
    std::optional<double> predict(const UserId& u, const ItemId& i) const override;
    std::string describe() const override;

    const SimilarityModel& similarity() const { return finding_; }
    const KnnConfig& config() const { return cfg_; }

    friend std::unique_ptr<KnnModel> train_knn(const Dataset&, const KnnConfig&);

private:
    // entity = user (user-user) or item (item-item); key = the other axis
    struct EntityData {
        RatingVec vec; // sorted by key
        double mean = 0;
    };

    std::optional<double> rating_of(const std::string& entity, const std::string& key) const;
    std::vector<ScoredNeighbor> select_neighbors(const std::string& entity,
                                                 const std::string& key) const;
    double pair_mean(const std::string& neighbor, const std::string& target) const;

    KnnConfig cfg_;
    RatingScale scale_;
    SimilarityModel finding_;
    std::optional<SimilarityModel> weighting_;
    std::map<std::string, EntityData> data_;       // keyed by entity id
    std::map<std::string, std::vector<std::string>> raters_; // key -> sorted entities holding it
    std::map<std::string, std::vector<ScoredNeighbor>> static_cache_; // top-k per entity
};

std::unique_ptr<KnnModel> train_knn(const Dataset& train, const KnnConfig& cfg);

struct MfConfig {
    std::size_t factors = 50;
    double learning_rate = 0.01;
    double regularization = 0.05;
    std::size_t iterations = 30;
    std::uint64_t init_seed = 1;
    bool global_mean_offset = true;
};

class MfModel : public RecModel {
public:
    std::optional<double> predict(const UserId& u, const ItemId& i) const override;
    std::string describe() const override;

    // squared error + L2 penalty after each pass; non-increasing for a sane
    // learning rate
    const std::vector<double>& loss_history() const { return loss_history_; }
    const MfConfig& config() const { return cfg_; }

    friend std::unique_ptr<MfModel> train_mf(const Dataset&, const MfConfig&);

private:
    MfConfig cfg_;
    double global_mean_ = 0;
    std::vector<UserId> users_; // sorted; row index = position
    std::vector<ItemId> items_;
    std::vector<double> user_factors_; // users x factors, row-major
    std::vector<double> item_factors_;
    std::vector<double> loss_history_;
};

// Sequential SGD over observed ratings, bit-deterministic for a fixed config
// and seed. Throws naming the iteration if any factor goes non-finite.
std::unique_ptr<MfModel> train_mf(const Dataset& train, const MfConfig& cfg);

// score = number of train ratings of the item, user-independent; always
// defined (0 for unknown items), so coverage is full
class PopularityModel : public RecModel {
public:
    explicit PopularityModel(const Dataset& train);
    std::optional<double> predict(const UserId& u, const ItemId& i) const override;
    bool full_coverage() const override { return true; }
    std::string describe() const override { return "popularity"; }

private:
    std::map<ItemId, std::size_t> counts_;
};

std::unique_ptr<PopularityModel> train_popularity(const Dataset& train);

// seeded uniform in the declared scale (in [0,1) for count data), from a
// per-(user,item) substream: repeat calls and thread schedules cannot change
// a score
class RandomModel : public RecModel {
public:
    RandomModel(std::uint64_t seed, RatingScale scale) : seed_(seed), scale_(scale) {}
    std::optional<double> predict(const UserId& u, const ItemId& i) const override;
    bool full_coverage() const override { return true; }
    std::string describe() const override { return "random"; }

private:
    std::uint64_t seed_;
    RatingScale scale_;
};

// primary's score when defined, else fallback's
std::unique_ptr<RecModel> with_fallback(std::unique_ptr<RecModel> primary,
                                        std::unique_ptr<RecModel> fallback);

// what to do with candidates the model cannot score
enum class UndefinedPolicy { skip, bottom };

struct RankedEntry {
    ItemId item;
    std::optional<double> score; // absent for bottom-placed entries
    std::size_t rank = 0;        // 1-based, contiguous
};

struct RankedList {
    UserId user;
    std::vector<RankedEntry> entries;
};

// Scores every candidate, sorts by (score desc, item asc), truncates to n.
// Undefined predictions are skipped by default (the list may come up short —
// a coverage signal) or appended after all scored items under `bottom`.
RankedList recommend_topn(const RecModel& model, const UserId& u, const CandidateList& candidates,
                          std::size_t n, UndefinedPolicy policy = UndefinedPolicy::skip);

} // namespace reval
