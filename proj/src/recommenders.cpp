#include "reval/recommenders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reval/errors.hpp"
#include "reval/rng.hpp"
#include "reval/util.hpp"

namespace reval {

std::string to_string(KnnFormulation f) {
    switch (f) {
        case KnnFormulation::weighted_average: return "weighted-average";
        case KnnFormulation::mean_centered: return "mean-centered";
        case KnnFormulation::unnormalized_sum: return "unnormalized-sum";
    }
    return "?";
}

KnnFormulation knn_formulation_from_string(const std::string& s) {
    if (s == "weighted-average") return KnnFormulation::weighted_average;
    if (s == "mean-centered") return KnnFormulation::mean_centered;
    if (s == "unnormalized-sum") return KnnFormulation::unnormalized_sum;
    throw config_error("bad knn formulation '" + s + "'");
}

namespace {

double clamp_to(const RatingScale& scale, double v) {
    if (!scale.is_bounded()) return v;
    return std::clamp(v, scale.min, scale.max);
}

} // namespace

std::optional<double> KnnModel::rating_of(const std::string& entity, const std::string& key) const {
    auto it = data_.find(entity);
    if (it == data_.end()) return std::nullopt;
    const RatingVec& vec = it->second.vec;
    auto pos = std::lower_bound(vec.begin(), vec.end(), key,
                                [](const auto& kv, const std::string& k) { return kv.first < k; });
    if (pos == vec.end() || pos->first != key) return std::nullopt;
    return pos->second;
}

std::vector<ScoredNeighbor> KnnModel::select_neighbors(const std::string& entity,
                                                       const std::string& key) const {
    auto raters = raters_.find(key);
    if (raters == raters_.end()) return {};
    const std::vector<std::string>& eligible = raters->second;

    if (cfg_.timing == NeighborTiming::static_train_time) {
        // the train-time cache is already the selected neighborhood; predict
        // time only restricts it to entities that actually hold the key
        auto it = static_cache_.find(entity);
        if (it == static_cache_.end()) return {};
        std::vector<ScoredNeighbor> out;
        for (const ScoredNeighbor& nb : it->second) {
            if (std::binary_search(eligible.begin(), eligible.end(), nb.id)) out.push_back(nb);
        }
        return out;
    }
    NeighborSelect sel;
    if (cfg_.neighbor_threshold) {
        sel.method = NeighborSelect::Method::sim_threshold;
        sel.tau = *cfg_.neighbor_threshold;
    } else {
        sel.method = NeighborSelect::Method::top_k;
        sel.k = cfg_.k;
    }
    return neighbor_select(finding_.neighbors(entity), sel, &eligible);
}

double KnnModel::pair_mean(const std::string& neighbor, const std::string& target) const {
    const RatingVec& nv = data_.at(neighbor).vec;
    const RatingVec& tv = data_.at(target).vec;
    double sum = 0;
    std::size_t count = 0;
    std::size_t i = 0, j = 0;
    while (i < nv.size() && j < tv.size()) {
        if (nv[i].first < tv[j].first) {
            ++i;
        } else if (tv[j].first < nv[i].first) {
            ++j;
        } else {
            sum += nv[i].second;
            ++count;
            ++i;
            ++j;
        }
    }
    if (count == 0) return data_.at(neighbor).mean; // no overlap: fall back to the full mean
    return sum / static_cast<double>(count);
}

std::optional<double> KnnModel::predict(const UserId& u, const ItemId& i) const {
    // user-user: entity = user, key = item; item-item swaps the roles
    const std::string& entity = cfg_.direction == Direction::user_user ? u : i;
    const std::string& key = cfg_.direction == Direction::user_user ? i : u;
    auto self = data_.find(entity);
    if (self == data_.end()) return std::nullopt;

    std::vector<ScoredNeighbor> neighborhood = select_neighbors(entity, key);
    if (neighborhood.empty()) return std::nullopt;

    double num = 0, abs_den = 0;
    bool any = false;
    for (const ScoredNeighbor& nb : neighborhood) {
        double w = nb.score;
        if (weighting_) {
            SimScore ws = weighting_->score(entity, nb.id);
            if (!ws) continue; // undefined weight contributes nothing
            w = *ws;
        }
        std::optional<double> r = rating_of(nb.id, key);
        if (!r) continue; // cannot happen for eligible neighbors, but stay safe
        any = true;
        switch (cfg_.formulation) {
            case KnnFormulation::weighted_average:
                num += *r * w;
                abs_den += std::abs(w);
                break;
            case KnnFormulation::mean_centered: {
                double nb_mean = cfg_.prediction_mean_policy == MeanPolicy::all_items
                                     ? data_.at(nb.id).mean
                                     : pair_mean(nb.id, entity);
                num += (*r - nb_mean) * w;
                abs_den += std::abs(w);
                break;
            }
            case KnnFormulation::unnormalized_sum:
                num += *r * w;
                break;
        }
    }
    if (!any) return std::nullopt;

    double score;
    switch (cfg_.formulation) {
        case KnnFormulation::weighted_average:
            if (abs_den == 0) return std::nullopt;
            score = num / abs_den;
            break;
        case KnnFormulation::mean_centered:
            if (abs_den == 0) return std::nullopt;
            score = self->second.mean + num / abs_den;
            break;
        case KnnFormulation::unnormalized_sum:
            score = num;
            break;
        default:
            return std::nullopt;
    }
    if (cfg_.capping == Capping::clamp_to_scale) score = clamp_to(scale_, score);
    return score;
}

std::string KnnModel::describe() const {
    std::string s = cfg_.direction == Direction::user_user ? "ub-knn" : "ib-knn";
    s += " k=" + std::to_string(cfg_.k);
    s += " formulation=" + to_string(cfg_.formulation);
    s += " timing=" + std::string(cfg_.timing == NeighborTiming::static_train_time ? "static" : "dynamic");
    s += " similarity=" + cfg_.similarity.to_string();
    if (weighting_) s += " weighting=" + cfg_.weighting->to_string();
    return s;
}

std::unique_ptr<KnnModel> train_knn(const Dataset& train, const KnnConfig& cfg) {
    if (train.empty()) throw data_error("cannot train knn on an empty dataset");
    if (cfg.k < 1) throw config_error("knn requires k >= 1");
    auto model = std::unique_ptr<KnnModel>(new KnnModel());
    model->cfg_ = cfg;
    model->scale_ = train.scale();
    model->finding_ = build_similarity_model(train, cfg.similarity, cfg.direction);
    if (cfg.weighting && !(*cfg.weighting == cfg.similarity)) {
        model->weighting_ = build_similarity_model(train, *cfg.weighting, cfg.direction);
    }

    const bool user_entity = cfg.direction == Direction::user_user;
    const std::vector<std::string>& entities = user_entity ? train.users() : train.items();
    for (const std::string& e : entities) {
        KnnModel::EntityData data;
        data.vec = user_entity ? user_vector(train, e) : item_vector(train, e);
        double sum = 0;
        for (const auto& [_, r] : data.vec) sum += r;
        data.mean = data.vec.empty() ? 0.0 : sum / static_cast<double>(data.vec.size());
        model->data_.emplace(e, std::move(data));
    }
    // key -> entities holding it (raters of an item / items of a user)
    for (const auto& [e, data] : model->data_) {
        for (const auto& [key, _] : data.vec) model->raters_[key].push_back(e);
    }
    for (auto& [_, list] : model->raters_) std::sort(list.begin(), list.end());

    if (cfg.timing == NeighborTiming::static_train_time) {
        for (const std::string& e : entities) {
            NeighborSelect sel;
            if (cfg.neighbor_threshold) {
                sel.method = NeighborSelect::Method::sim_threshold;
                sel.tau = *cfg.neighbor_threshold;
            } else {
                sel.method = NeighborSelect::Method::top_k;
                sel.k = cfg.k;
            }
            model->static_cache_[e] = neighbor_select(model->finding_.neighbors(e), sel);
        }
    }
    return model;
}

std::optional<double> MfModel::predict(const UserId& u, const ItemId& i) const {
    auto uit = std::lower_bound(users_.begin(), users_.end(), u);
    auto iit = std::lower_bound(items_.begin(), items_.end(), i);
    if (uit == users_.end() || *uit != u || iit == items_.end() || *iit != i) return std::nullopt;
    std::size_t ui = static_cast<std::size_t>(uit - users_.begin());
    std::size_t ii = static_cast<std::size_t>(iit - items_.begin());
    const double* p = &user_factors_[ui * cfg_.factors];
    const double* q = &item_factors_[ii * cfg_.factors];
    double dot = 0;
    for (std::size_t f = 0; f < cfg_.factors; ++f) dot += p[f] * q[f];
    return global_mean_ + dot;
}

std::string MfModel::describe() const {
    return "mf factors=" + std::to_string(cfg_.factors) +
           " lr=" + format_double(cfg_.learning_rate) +
           " reg=" + format_double(cfg_.regularization) +
           " iterations=" + std::to_string(cfg_.iterations) +
           " seed=" + std::to_string(cfg_.init_seed);
}

std::unique_ptr<MfModel> train_mf(const Dataset& train, const MfConfig& cfg) {
    if (train.empty()) throw data_error("cannot train mf on an empty dataset");
    if (cfg.factors < 1 || cfg.iterations < 1) throw config_error("mf: factors and iterations must be >= 1");
    if (!(cfg.learning_rate > 0) || !(cfg.regularization >= 0)) {
        throw config_error("mf: learning rate must be > 0 and regularization >= 0");
    }
    auto model = std::unique_ptr<MfModel>(new MfModel());
    model->cfg_ = cfg;
    model->users_ = train.users();
    model->items_ = train.items();

    if (cfg.global_mean_offset) {
        double sum = 0;
        for (const Interaction& r : train.rows()) sum += r.rating;
        model->global_mean_ = sum / static_cast<double>(train.size());
    }

    const std::size_t nf = cfg.factors;
    model->user_factors_.resize(model->users_.size() * nf);
    model->item_factors_.resize(model->items_.size() * nf);
    CounterRng init = CounterRng::derive(cfg.init_seed, {fnv1a64("mf-init")});
    const double spread = 0.1 / std::sqrt(static_cast<double>(nf));
    for (double& v : model->user_factors_) v = (init.next_double() * 2.0 - 1.0) * spread;
    for (double& v : model->item_factors_) v = (init.next_double() * 2.0 - 1.0) * spread;

    // dense row/col index per interaction, fixed once
    std::vector<std::pair<std::uint32_t, std::uint32_t>> coords(train.size());
    for (std::size_t r = 0; r < train.size(); ++r) {
        const Interaction& row = train.rows()[r];
        coords[r].first = static_cast<std::uint32_t>(
            std::lower_bound(model->users_.begin(), model->users_.end(), row.user) -
            model->users_.begin());
        coords[r].second = static_cast<std::uint32_t>(
            std::lower_bound(model->items_.begin(), model->items_.end(), row.item) -
            model->items_.begin());
    }

    std::vector<std::uint32_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        CounterRng epoch = CounterRng::derive(cfg.init_seed, {fnv1a64("mf-epoch"), iter});
        epoch.shuffle(order);
        for (std::uint32_t idx : order) {
            const auto [ui, ii] = coords[idx];
            double* p = &model->user_factors_[std::size_t(ui) * nf];
            double* q = &model->item_factors_[std::size_t(ii) * nf];
            double dot = 0;
            for (std::size_t f = 0; f < nf; ++f) dot += p[f] * q[f];
            double err = train.rows()[idx].rating - (model->global_mean_ + dot);
            for (std::size_t f = 0; f < nf; ++f) {
                double pf = p[f];
                p[f] += cfg.learning_rate * (err * q[f] - cfg.regularization * pf);
                q[f] += cfg.learning_rate * (err * pf - cfg.regularization * q[f]);
            }
        }
        double loss = 0;
        for (std::size_t r = 0; r < train.size(); ++r) {
            const auto [ui, ii] = coords[r];
            const double* p = &model->user_factors_[std::size_t(ui) * nf];
            const double* q = &model->item_factors_[std::size_t(ii) * nf];
            double dot = 0;
            for (std::size_t f = 0; f < nf; ++f) dot += p[f] * q[f];
            double err = train.rows()[r].rating - (model->global_mean_ + dot);
            loss += err * err;
        }
        double penalty = 0;
        for (double v : model->user_factors_) penalty += v * v;
        for (double v : model->item_factors_) penalty += v * v;
        loss += cfg.regularization * penalty;
        if (!std::isfinite(loss)) {
            throw training_error("mf training diverged at iteration " + std::to_string(iter + 1));
        }
        model->loss_history_.push_back(loss);
    }
    return model;
}

PopularityModel::PopularityModel(const Dataset& train) {
    for (const Interaction& r : train.rows()) ++counts_[r.item];
}

std::optional<double> PopularityModel::predict(const UserId&, const ItemId& i) const {
    auto it = counts_.find(i);
    return static_cast<double>(it == counts_.end() ? 0 : it->second);
}

std::unique_ptr<PopularityModel> train_popularity(const Dataset& train) {
    return std::make_unique<PopularityModel>(train);
}

std::optional<double> RandomModel::predict(const UserId& u, const ItemId& i) const {
    CounterRng rng = CounterRng::derive(seed_, {fnv1a64("random-rec"), fnv1a64(u), fnv1a64(i)});
    double u01 = rng.next_double();
    if (scale_.is_bounded()) return scale_.min + u01 * (scale_.max - scale_.min);
    return u01;
}

namespace {

class FallbackModel : public RecModel {
public:
    FallbackModel(std::unique_ptr<RecModel> primary, std::unique_ptr<RecModel> fallback)
        : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

    std::optional<double> predict(const UserId& u, const ItemId& i) const override {
        std::optional<double> score = primary_->predict(u, i);
        return score ? score : fallback_->predict(u, i);
    }
    bool full_coverage() const override { return fallback_->full_coverage(); }
    std::string describe() const override {
        return primary_->describe() + " fallback=(" + fallback_->describe() + ")";
    }

private:
    std::unique_ptr<RecModel> primary_;
    std::unique_ptr<RecModel> fallback_;
};

} // namespace

std::unique_ptr<RecModel> with_fallback(std::unique_ptr<RecModel> primary,
                                        std::unique_ptr<RecModel> fallback) {
    return std::make_unique<FallbackModel>(std::move(primary), std::move(fallback));
}

RankedList recommend_topn(const RecModel& model, const UserId& u, const CandidateList& candidates,
                          std::size_t n, UndefinedPolicy policy) {
    // canonicalize so the result is independent of the input permutation
    std::vector<ItemId> items = candidates.items;
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());

    std::vector<std::pair<ItemId, double>> scored;
    std::vector<ItemId> undefined;
    for (const ItemId& item : items) {
        std::optional<double> s = model.predict(u, item);
        if (s) {
            scored.emplace_back(item, *s);
        } else {
            undefined.push_back(item);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    RankedList list;
    list.user = u;
    for (const auto& [item, score] : scored) {
        if (list.entries.size() == n) break;
        list.entries.push_back({item, score, list.entries.size() + 1});
    }
    if (policy == UndefinedPolicy::bottom) {
        for (const ItemId& item : undefined) {
            if (list.entries.size() == n) break;
            list.entries.push_back({item, std::nullopt, list.entries.size() + 1});
        }
    }
    return list;
}

} // namespace reval
