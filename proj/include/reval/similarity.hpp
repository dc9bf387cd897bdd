#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reval/dataset.hpp"

namespace reval {

// Undefined similarities are absent values, never 0 (0 is a meaningful
// Pearson score); they contribute nothing to any downstream sum.
using SimScore = std::optional<double>;

enum class MeanPolicy { all_items, overlap_only };
enum class SimilarityMetric { pearson, cosine };

std::string to_string(MeanPolicy p);
MeanPolicy mean_policy_from_string(const std::string& s);
std::string to_string(SimilarityMetric m);
SimilarityMetric similarity_metric_from_string(const std::string& s);

struct SimilarityTransform {
    enum class Kind { identity, shift_to_0_2, drop_negative, threshold };
    Kind kind = Kind::identity;
    double tau = 0.0;

    static SimilarityTransform identity() { return {}; }
    static SimilarityTransform shift() { return {Kind::shift_to_0_2, 0.0}; }
    static SimilarityTransform drop_negative() { return {Kind::drop_negative, 0.0}; }
    static SimilarityTransform threshold(double tau) { return {Kind::threshold, tau}; }

    std::string to_string() const;
    static SimilarityTransform from_string(const std::string& s);
    bool operator==(const SimilarityTransform&) const = default;
};

struct SimilarityConfig {
    SimilarityMetric metric = SimilarityMetric::cosine;
    MeanPolicy mean_policy = MeanPolicy::all_items; // Pearson r-bar
    SimilarityTransform transform;                  // identity by default

    std::string to_string() const;
    bool operator==(const SimilarityConfig&) const = default;
};

// A sparse rating vector, sorted by id; the pairwise metrics run a merge walk
// over two of these.
using RatingVec = std::vector<std::pair<std::string, double>>;

RatingVec user_vector(const Dataset& ds, const UserId& u);
RatingVec item_vector(const Dataset& ds, const ItemId& i);

// Pearson over the overlap key set, r-bar per mean policy. Undefined when the
// overlap has fewer than 2 keys or either deviation norm is 0.
SimScore pearson(const RatingVec& a, const RatingVec& b, MeanPolicy policy);
// Dot product over the overlap divided by each vector's full norm. Undefined
// when the overlap is empty or either full norm is 0.
SimScore cosine(const RatingVec& a, const RatingVec& b);

SimScore pearson(const UserId& u, const UserId& v, const Dataset& train, MeanPolicy policy);
SimScore cosine(const UserId& u, const UserId& v, const Dataset& train);

SimScore apply_transform(SimScore score, const SimilarityTransform& t);

SimScore compute_similarity(const RatingVec& a, const RatingVec& b, const SimilarityConfig& cfg);

enum class Direction { user_user, item_item };
std::string to_string(Direction d);

struct ScoredNeighbor {
    std::string id;
    double score;
};

// Symmetric pairwise score table plus per-entity neighbor lists sorted by
// (score desc, id asc). Undefined pairs are simply absent. Immutable once
// built; shareable across threads.
class SimilarityModel {
public:
    SimilarityModel() = default;

    SimScore score(const std::string& a, const std::string& b) const;
    // full sorted list; a top-k cache is this truncated to k
    const std::vector<ScoredNeighbor>& neighbors(const std::string& entity) const;
    const std::vector<std::string>& entities() const { return entities_; }
    Direction direction() const { return direction_; }

    friend SimilarityModel build_similarity_model(const Dataset&, const SimilarityConfig&, Direction);

private:
    std::optional<std::uint32_t> index_of(const std::string& id) const;

    Direction direction_ = Direction::user_user;
    std::vector<std::string> entities_; // sorted; index = position
    // per entity, (other index, score) sorted by other index
    std::vector<std::vector<std::pair<std::uint32_t, double>>> by_index_;
    // per entity, neighbors sorted by (score desc, id asc)
    std::vector<std::vector<ScoredNeighbor>> lists_;
};

// Pairwise over all entities; parallelizes over pairs with results written to
// fixed slots, so the table is identical for any worker count.
SimilarityModel build_similarity_model(const Dataset& train, const SimilarityConfig& cfg,
                                       Direction direction);

struct NeighborSelect {
    enum class Method { top_k, sim_threshold };
    Method method = Method::top_k;
    std::size_t k = 50;
    double tau = 0.0;
};

// Selection over an already-scored pool. When `eligible` is given (the
// predict-time constraint: raters of the target item), only those ids
// qualify. Ordering: score desc, id asc.
std::vector<ScoredNeighbor> neighbor_select(const std::vector<ScoredNeighbor>& pool,
                                            const NeighborSelect& sel,
                                            const std::vector<std::string>* eligible = nullptr);

// entityA<TAB>entityB<TAB>value with A<B, canonical order.
void write_similarities(const SimilarityModel& model, std::ostream& out);

} // namespace reval
