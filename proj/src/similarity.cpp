#include "reval/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "reval/errors.hpp"
#include "reval/util.hpp"

namespace reval {

std::string to_string(MeanPolicy p) {
    return p == MeanPolicy::all_items ? "all-items" : "overlap-only";
}

MeanPolicy mean_policy_from_string(const std::string& s) {
    if (s == "all-items") return MeanPolicy::all_items;
    if (s == "overlap-only") return MeanPolicy::overlap_only;
    throw config_error("bad mean policy '" + s + "'");
}

std::string to_string(SimilarityMetric m) {
    return m == SimilarityMetric::pearson ? "pearson" : "cosine";
}

SimilarityMetric similarity_metric_from_string(const std::string& s) {
    if (s == "pearson") return SimilarityMetric::pearson;
    if (s == "cosine") return SimilarityMetric::cosine;
    throw config_error("bad similarity metric '" + s + "'");
}

std::string SimilarityTransform::to_string() const {
    switch (kind) {
        case Kind::identity: return "identity";
        case Kind::shift_to_0_2: return "shift-0-2";
        case Kind::drop_negative: return "drop-negative";
        case Kind::threshold: return "threshold:" + format_double(tau);
    }
    return "?";
}

SimilarityTransform SimilarityTransform::from_string(const std::string& s) {
    if (s == "identity") return identity();
    if (s == "shift-0-2") return shift();
    if (s == "drop-negative") return drop_negative();
    if (s.rfind("threshold:", 0) == 0) return threshold(parse_double(s.substr(10), 0));
    throw config_error("bad similarity transform '" + s + "'");
}

std::string SimilarityConfig::to_string() const {
    return reval::to_string(metric) + "/" + reval::to_string(mean_policy) + "/" +
           transform.to_string();
}

std::string to_string(Direction d) {
    return d == Direction::user_user ? "user-user" : "item-item";
}

namespace {

// collapse a rows view into a sorted sparse vector; a later duplicate of the
// same key wins (only possible under keep-all data)
RatingVec make_vector(const Dataset& ds, const std::vector<std::uint32_t>& row_idx, bool key_is_item) {
    RatingVec vec;
    vec.reserve(row_idx.size());
    for (std::uint32_t r : row_idx) {
        const Interaction& row = ds.rows()[r];
        vec.emplace_back(key_is_item ? row.item : row.user, row.rating);
    }
    std::stable_sort(vec.begin(), vec.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    // keep the last occurrence of each key
    RatingVec out;
    out.reserve(vec.size());
    for (auto& kv : vec) {
        if (!out.empty() && out.back().first == kv.first) {
            out.back().second = kv.second;
        } else {
            out.push_back(std::move(kv));
        }
    }
    return out;
}

double vec_mean(const RatingVec& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (const auto& [_, r] : v) s += r;
    return s / static_cast<double>(v.size());
}

double vec_norm2(const RatingVec& v) {
    double s = 0;
    for (const auto& [_, r] : v) s += r * r;
    return s;
}

// pairs of ratings on the overlap key set, via a two-pointer walk
void overlap_pairs(const RatingVec& a, const RatingVec& b,
                   std::vector<std::pair<double, double>>& out) {
    out.clear();
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first < b[j].first) {
            ++i;
        } else if (b[j].first < a[i].first) {
            ++j;
        } else {
            out.emplace_back(a[i].second, b[j].second);
            ++i;
            ++j;
        }
    }
}

} // namespace

RatingVec user_vector(const Dataset& ds, const UserId& u) {
    return make_vector(ds, ds.rows_of_user(u), /*key_is_item=*/true);
}

RatingVec item_vector(const Dataset& ds, const ItemId& i) {
    return make_vector(ds, ds.rows_of_item(i), /*key_is_item=*/false);
}

SimScore pearson(const RatingVec& a, const RatingVec& b, MeanPolicy policy) {
    std::vector<std::pair<double, double>> overlap;
    overlap_pairs(a, b, overlap);
    if (overlap.size() < 2) return std::nullopt;
    double mean_a, mean_b;
    if (policy == MeanPolicy::all_items) {
        mean_a = vec_mean(a);
        mean_b = vec_mean(b);
    } else {
        double sa = 0, sb = 0;
        for (const auto& [ra, rb] : overlap) {
            sa += ra;
            sb += rb;
        }
        mean_a = sa / static_cast<double>(overlap.size());
        mean_b = sb / static_cast<double>(overlap.size());
    }
    double num = 0, da = 0, db = 0;
    for (const auto& [ra, rb] : overlap) {
        num += (ra - mean_a) * (rb - mean_b);
        da += (ra - mean_a) * (ra - mean_a);
        db += (rb - mean_b) * (rb - mean_b);
    }
    if (da == 0 || db == 0) return std::nullopt;
    return num / std::sqrt(da * db);
}

SimScore cosine(const RatingVec& a, const RatingVec& b) {
    std::vector<std::pair<double, double>> overlap;
    overlap_pairs(a, b, overlap);
    if (overlap.empty()) return std::nullopt;
    double dot = 0;
    for (const auto& [ra, rb] : overlap) dot += ra * rb;
    double na2 = vec_norm2(a), nb2 = vec_norm2(b);
    if (na2 == 0 || nb2 == 0) return std::nullopt;
    return dot / std::sqrt(na2 * nb2);
}

SimScore pearson(const UserId& u, const UserId& v, const Dataset& train, MeanPolicy policy) {
    return pearson(user_vector(train, u), user_vector(train, v), policy);
}

SimScore cosine(const UserId& u, const UserId& v, const Dataset& train) {
    return cosine(user_vector(train, u), user_vector(train, v));
}

SimScore apply_transform(SimScore score, const SimilarityTransform& t) {
    if (!score) return std::nullopt;
    switch (t.kind) {
        case SimilarityTransform::Kind::identity:
            return score;
        case SimilarityTransform::Kind::shift_to_0_2:
            return *score + 1.0;
        case SimilarityTransform::Kind::drop_negative:
            return *score < 0.0 ? std::nullopt : score;
        case SimilarityTransform::Kind::threshold:
            return *score < t.tau ? std::nullopt : score;
    }
    return std::nullopt;
}

SimScore compute_similarity(const RatingVec& a, const RatingVec& b, const SimilarityConfig& cfg) {
    SimScore s = cfg.metric == SimilarityMetric::pearson ? pearson(a, b, cfg.mean_policy)
                                                         : cosine(a, b);
    return apply_transform(s, cfg.transform);
}

std::optional<std::uint32_t> SimilarityModel::index_of(const std::string& id) const {
    auto it = std::lower_bound(entities_.begin(), entities_.end(), id);
    if (it == entities_.end() || *it != id) return std::nullopt;
    return static_cast<std::uint32_t>(it - entities_.begin());
}

SimScore SimilarityModel::score(const std::string& a, const std::string& b) const {
    auto ia = index_of(a), ib = index_of(b);
    if (!ia || !ib) return std::nullopt;
    const auto& row = by_index_[*ia];
    auto it = std::lower_bound(row.begin(), row.end(), *ib,
                               [](const auto& kv, std::uint32_t key) { return kv.first < key; });
    if (it == row.end() || it->first != *ib) return std::nullopt;
    return it->second;
}

const std::vector<ScoredNeighbor>& SimilarityModel::neighbors(const std::string& entity) const {
    static const std::vector<ScoredNeighbor> empty;
    auto idx = index_of(entity);
    return idx ? lists_[*idx] : empty;
}

SimilarityModel build_similarity_model(const Dataset& train, const SimilarityConfig& cfg,
                                       Direction direction) {
    if (train.empty()) throw data_error("cannot build a similarity model from an empty dataset");
    SimilarityModel model;
    model.direction_ = direction;
    model.entities_ =
        direction == Direction::user_user ? train.users() : train.items();
    const std::size_t n = model.entities_.size();

    std::vector<RatingVec> vectors(n);
    for (std::size_t i = 0; i < n; ++i) {
        vectors[i] = direction == Direction::user_user
                         ? user_vector(train, model.entities_[i])
                         : item_vector(train, model.entities_[i]);
    }

    // upper triangle, one slot per row: results are position-addressed so the
    // table is byte-identical for any worker count
    std::vector<std::vector<std::pair<std::uint32_t, double>>> upper(n);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            SimScore s = compute_similarity(vectors[i], vectors[j], cfg);
            if (s) upper[i].emplace_back(static_cast<std::uint32_t>(j), *s);
        }
    });

    model.by_index_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [j, s] : upper[i]) {
            model.by_index_[i].emplace_back(j, s);
            model.by_index_[j].emplace_back(static_cast<std::uint32_t>(i), s);
        }
    }
    for (auto& row : model.by_index_) {
        std::sort(row.begin(), row.end());
    }

    model.lists_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
        auto& list = model.lists_[i];
        list.reserve(model.by_index_[i].size());
        for (const auto& [j, s] : model.by_index_[i]) {
            list.push_back({model.entities_[j], s});
        }
        std::sort(list.begin(), list.end(), [](const ScoredNeighbor& a, const ScoredNeighbor& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.id < b.id;
        });
    }
    return model;
}

std::vector<ScoredNeighbor> neighbor_select(const std::vector<ScoredNeighbor>& pool,
                                            const NeighborSelect& sel,
                                            const std::vector<std::string>* eligible) {
    std::vector<ScoredNeighbor> sorted = pool;
    std::sort(sorted.begin(), sorted.end(), [](const ScoredNeighbor& a, const ScoredNeighbor& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    std::vector<ScoredNeighbor> out;
    for (const ScoredNeighbor& cand : sorted) {
        if (eligible && !std::binary_search(eligible->begin(), eligible->end(), cand.id)) continue;
        if (sel.method == NeighborSelect::Method::sim_threshold && cand.score < sel.tau) continue;
        out.push_back(cand);
        if (sel.method == NeighborSelect::Method::top_k && out.size() == sel.k) break;
    }
    return out;
}

void write_similarities(const SimilarityModel& model, std::ostream& out) {
    const auto& entities = model.entities();
    for (std::size_t i = 0; i < entities.size(); ++i) {
        for (std::size_t j = i + 1; j < entities.size(); ++j) {
            SimScore s = model.score(entities[i], entities[j]);
            if (s) {
                out << entities[i] << '\t' << entities[j] << '\t' << format_double(*s) << '\n';
            }
        }
    }
}

} // namespace reval
