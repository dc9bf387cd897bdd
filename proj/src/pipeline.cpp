#include "reval/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "reval/candidates.hpp"
#include "reval/digest.hpp"
#include "reval/errors.hpp"
#include "reval/io.hpp"
#include "reval/rng.hpp"
#include "reval/similarity.hpp"
#include "reval/util.hpp"

namespace reval {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- experiment config ----

namespace {

char parse_delimiter(const std::string& s) {
    if (s == "tab") return '\t';
    if (s.size() == 1) return s[0];
    throw config_error("dataset.delimiter must be 'tab' or a single character");
}

std::string delimiter_string(char c) {
    return c == '\t' ? "tab" : std::string(1, c);
}

SimilarityConfig parse_similarity(const Config& raw, const std::string& prefix) {
    SimilarityConfig sim;
    sim.metric = similarity_metric_from_string(raw.get(prefix + "similarity", "cosine"));
    sim.mean_policy = mean_policy_from_string(raw.get(prefix + "mean-policy", "all-items"));
    sim.transform = SimilarityTransform::from_string(raw.get(prefix + "transform", "identity"));
    return sim;
}

} // namespace

ExperimentConfig ExperimentConfig::from(const Config& raw) {
    ExperimentConfig cfg;
    cfg.master_seed = static_cast<std::uint64_t>(raw.get_int("seed", 1));

    cfg.dataset_path = raw.get("dataset.path", "");
    cfg.schema.delimiter = parse_delimiter(raw.get("dataset.delimiter", "tab"));
    cfg.schema.header = raw.get_bool("dataset.header", false);
    cfg.schema.user_col = static_cast<int>(raw.get_int("dataset.user-col", 0));
    cfg.schema.item_col = static_cast<int>(raw.get_int("dataset.item-col", 1));
    cfg.schema.rating_col = static_cast<int>(raw.get_int("dataset.rating-col", 2));
    cfg.schema.timestamp_col = static_cast<int>(raw.get_int("dataset.timestamp-col", -1));
    cfg.schema.lenient = raw.get_bool("dataset.lenient", false);
    cfg.scale = RatingScale::from_string(raw.get("dataset.scale", "bounded:1:5:1"));
    cfg.dedup = dedup_from_string(raw.get("dataset.dedup", "keep-last"));
    cfg.min_interactions = static_cast<std::size_t>(raw.get_int("dataset.min-interactions", 0));

    cfg.split.strategy = split_strategy_from_string(raw.get("split.strategy", "random-global"));
    cfg.split.test_ratio = raw.get_double("split.test-ratio", 0.2);
    if (raw.has("split.timestamp")) {
        cfg.split.at_timestamp = raw.get_int("split.timestamp", 0);
    } else {
        raw.get("split.timestamp", ""); // consume
    }
    cfg.split.n = static_cast<std::size_t>(raw.get_int("split.n", 1));
    {
        std::string mode = raw.get("split.mode", "test-gets-n");
        if (mode == "test-gets-n") {
            cfg.split.mode = GivenNMode::test_gets_n;
        } else if (mode == "all-but-n") {
            cfg.split.mode = GivenNMode::all_but_n_in_test;
        } else {
            throw config_error("split.mode must be test-gets-n or all-but-n");
        }
    }
    cfg.split.k = static_cast<std::size_t>(raw.get_int("split.k", 5));
    {
        std::string scope = raw.get("split.scope", "global");
        if (scope == "global") {
            cfg.split.scope = SplitScope::global;
        } else if (scope == "per-user") {
            cfg.split.scope = SplitScope::per_user;
        } else {
            throw config_error("split.scope must be global or per-user");
        }
    }
    cfg.split.seed = static_cast<std::uint64_t>(
        raw.get_int("split.seed", static_cast<long long>(cfg.master_seed)));
    cfg.per_user_n_file = raw.get("split.per-user-n-file", "");

    for (const std::string& name : raw.get_list("recommenders", {"ub", "mf"})) {
        RecommenderSpec spec;
        spec.name = name;
        std::string prefix = "recommender." + name + ".";
        // unnamed algorithms default by convention: mf/popularity/random when
        // the recommender is literally named that, user-based knn otherwise
        std::string default_algo = "ub-knn";
        if (name == "mf") default_algo = "mf";
        if (name == "popularity" || name == "pop") default_algo = "popularity";
        if (name == "random") default_algo = "random";
        spec.algorithm = raw.get(prefix + "algorithm", default_algo);
        spec.seed = static_cast<std::uint64_t>(
            raw.get_int(prefix + "seed", static_cast<long long>(cfg.master_seed)));
        spec.fallback = raw.get(prefix + "fallback", "none");
        if (spec.fallback != "none" && spec.fallback != "popularity" && spec.fallback != "random") {
            throw config_error(prefix + "fallback must be none, popularity or random");
        }
        if (spec.algorithm == "ub-knn" || spec.algorithm == "ib-knn") {
            KnnConfig& knn = spec.knn;
            knn.direction =
                spec.algorithm == "ub-knn" ? Direction::user_user : Direction::item_item;
            knn.k = static_cast<std::size_t>(raw.get_int(prefix + "k", 50));
            knn.similarity = parse_similarity(raw, prefix);
            if (raw.has(prefix + "weight-similarity")) {
                SimilarityConfig w;
                w.metric = similarity_metric_from_string(raw.require(prefix + "weight-similarity"));
                w.mean_policy = mean_policy_from_string(
                    raw.get(prefix + "weight-mean-policy", to_string(knn.similarity.mean_policy)));
                w.transform = SimilarityTransform::from_string(
                    raw.get(prefix + "weight-transform", knn.similarity.transform.to_string()));
                knn.weighting = w;
            }
            knn.formulation =
                knn_formulation_from_string(raw.get(prefix + "formulation", "weighted-average"));
            {
                std::string timing = raw.get(prefix + "timing", "static");
                if (timing == "static") {
                    knn.timing = NeighborTiming::static_train_time;
                } else if (timing == "dynamic") {
                    knn.timing = NeighborTiming::dynamic_predict_time;
                } else {
                    throw config_error(prefix + "timing must be static or dynamic");
                }
            }
            if (raw.has(prefix + "neighbor-threshold")) {
                knn.neighbor_threshold = raw.get_double(prefix + "neighbor-threshold", 0);
            } else {
                raw.get(prefix + "neighbor-threshold", ""); // consume
            }
            knn.prediction_mean_policy =
                mean_policy_from_string(raw.get(prefix + "prediction-mean-policy", "all-items"));
            {
                std::string capping = raw.get(prefix + "capping", "none");
                if (capping == "none") {
                    knn.capping = Capping::none;
                } else if (capping == "clamp") {
                    knn.capping = Capping::clamp_to_scale;
                } else {
                    throw config_error(prefix + "capping must be none or clamp");
                }
            }
        } else if (spec.algorithm == "mf") {
            MfConfig& mf = spec.mf;
            mf.factors = static_cast<std::size_t>(raw.get_int(prefix + "factors", 50));
            mf.learning_rate = raw.get_double(prefix + "learning-rate", 0.01);
            mf.regularization = raw.get_double(prefix + "regularization", 0.05);
            mf.iterations = static_cast<std::size_t>(raw.get_int(prefix + "iterations", 30));
            mf.init_seed = spec.seed;
            mf.global_mean_offset = raw.get_bool(prefix + "global-mean", true);
        } else if (spec.algorithm != "popularity" && spec.algorithm != "random") {
            throw config_error(prefix + "algorithm: unknown algorithm '" + spec.algorithm + "'");
        }
        cfg.recommenders.push_back(std::move(spec));
    }
    if (cfg.recommenders.empty()) throw config_error("at least one recommender is required");
    {
        std::set<std::string> names;
        for (const RecommenderSpec& s : cfg.recommenders) {
            if (!names.insert(s.name).second) {
                throw config_error("duplicate recommender name '" + s.name + "'");
            }
        }
    }

    cfg.topn = static_cast<std::size_t>(raw.get_int("topn", 10));
    if (cfg.topn < 1) throw config_error("topn must be >= 1");
    {
        std::string policy = raw.get("undefined-policy", "skip");
        if (policy == "skip") {
            cfg.undefined_policy = UndefinedPolicy::skip;
        } else if (policy == "bottom") {
            cfg.undefined_policy = UndefinedPolicy::bottom;
        } else {
            throw config_error("undefined-policy must be skip or bottom");
        }
    }
    cfg.dump_similarities = raw.get_bool("similarity.dump", false);

    cfg.strategies = raw.get_list("candidates.strategies", {"usertest", "trainitems"});
    for (const std::string& s : cfg.strategies) {
        if (s != "usertest" && s != "trainitems" && s != "one-plus-random") {
            throw config_error("candidates.strategies: unknown strategy '" + s + "'");
        }
    }
    if (cfg.strategies.empty()) {
        throw config_error("candidates.strategies must name at least one strategy");
    }
    cfg.opr_n = static_cast<std::size_t>(raw.get_int("candidates.opr-n", 100));
    cfg.dump_candidates = raw.get_bool("candidates.dump", false);

    cfg.ranking_metrics = raw.get_list("metrics.ranking", {"p", "r", "ndcg"});
    for (const std::string& m : cfg.ranking_metrics) {
        if (m != "p" && m != "r" && m != "ndcg" && m != "mrr") {
            throw config_error("metrics.ranking: unknown metric '" + m + "'");
        }
    }
    cfg.cutoffs.clear();
    for (const std::string& c : raw.get_list("metrics.cutoffs", {"10"})) {
        long long v = parse_int(c, 0);
        if (v < 1) throw config_error("metrics.cutoffs: cutoffs must be >= 1");
        cfg.cutoffs.push_back(static_cast<std::size_t>(v));
    }
    for (const std::string& m : cfg.ranking_metrics) {
        if (m != "mrr" && cfg.cutoffs.empty()) {
            throw config_error("metrics.cutoffs must be non-empty for metric '" + m + "'");
        }
    }
    cfg.error_metrics = raw.get_list("metrics.error", {"mae", "rmse"});
    for (const std::string& m : cfg.error_metrics) {
        if (m != "mae" && m != "rmse") {
            throw config_error("metrics.error: unknown metric '" + m + "'");
        }
    }
    cfg.relevance_threshold = raw.get_double("metrics.threshold", 4.0);
    cfg.nan_policy = NanPolicy::from_string(raw.get("metrics.nan-policy", "ignore"));
    {
        std::string agg = raw.get("metrics.error-aggregation", "global");
        if (agg == "global") {
            cfg.error_aggregation = ErrorAggregation::global;
        } else if (agg == "per-user") {
            cfg.error_aggregation = ErrorAggregation::per_user_then_average;
        } else {
            throw config_error("metrics.error-aggregation must be global or per-user");
        }
    }
    cfg.normalize_error = raw.get_bool("metrics.normalize", false);
    cfg.error_clamp = raw.get_bool("metrics.error-clamp", true);
    cfg.gain = ndcg_gain_from_string(raw.get("metrics.gain", "exp-shifted"));
    {
        std::string overflow = raw.get("metrics.overflow", "error");
        if (overflow == "error") {
            cfg.overflow.kind = OverflowPolicy::Kind::error;
        } else if (overflow == "saturate") {
            cfg.overflow.kind = OverflowPolicy::Kind::saturate;
        } else {
            throw config_error("metrics.overflow must be error or saturate");
        }
        cfg.overflow.cap = raw.get_double("metrics.gain-cap", 64.0);
    }
    {
        std::string denom = raw.get("metrics.denominator", "cutoff-k");
        if (denom == "cutoff-k") {
            cfg.denom = PrecisionDenom::cutoff_k;
        } else if (denom == "returned-length") {
            cfg.denom = PrecisionDenom::returned_length;
        } else {
            throw config_error("metrics.denominator must be cutoff-k or returned-length");
        }
    }

    cfg.stats_test = raw.get("stats.test", "paired-t");
    if (cfg.stats_test != "paired-t" && cfg.stats_test != "wilcoxon" && cfg.stats_test != "none") {
        throw config_error("stats.test must be paired-t, wilcoxon or none");
    }
    {
        std::string sides = raw.get("stats.sides", "two");
        if (sides == "two") {
            cfg.sides = Sides::two;
        } else if (sides == "one") {
            cfg.sides = Sides::one;
        } else {
            throw config_error("stats.sides must be one or two");
        }
    }
    {
        std::string policy = raw.get("stats.fold-policy", "per-fold");
        if (policy == "per-fold") {
            cfg.fold_policy = FoldPolicy::per_fold;
        } else if (policy == "concatenated") {
            cfg.fold_policy = FoldPolicy::concatenated;
        } else {
            throw config_error("stats.fold-policy must be per-fold or concatenated");
        }
    }

    raw.check_consumed();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
    return from(Config::parse_file(path));
}

Config ExperimentConfig::canonical() const {
    Config out;
    out.set("seed", std::to_string(master_seed));

    out.set("dataset.path", dataset_path);
    out.set("dataset.delimiter", delimiter_string(schema.delimiter));
    out.set("dataset.header", schema.header ? "true" : "false");
    out.set("dataset.user-col", std::to_string(schema.user_col));
    out.set("dataset.item-col", std::to_string(schema.item_col));
    out.set("dataset.rating-col", std::to_string(schema.rating_col));
    out.set("dataset.timestamp-col", std::to_string(schema.timestamp_col));
    out.set("dataset.lenient", schema.lenient ? "true" : "false");
    out.set("dataset.scale", scale.to_string());
    out.set("dataset.dedup", to_string(dedup));
    out.set("dataset.min-interactions", std::to_string(min_interactions));

    out.set("split.strategy", to_string(split.strategy));
    switch (split.strategy) {
        case SplitStrategy::random_global:
        case SplitStrategy::random_per_user:
            out.set_double("split.test-ratio", split.test_ratio);
            out.set("split.seed", std::to_string(split.seed));
            break;
        case SplitStrategy::temporal_global:
            if (split.at_timestamp) {
                out.set("split.timestamp", std::to_string(*split.at_timestamp));
            } else {
                out.set_double("split.test-ratio", split.test_ratio);
            }
            break;
        case SplitStrategy::temporal_per_user:
            out.set_double("split.test-ratio", split.test_ratio);
            break;
        case SplitStrategy::given_n:
            out.set("split.n", std::to_string(split.n));
            out.set("split.mode",
                    split.mode == GivenNMode::test_gets_n ? "test-gets-n" : "all-but-n");
            out.set("split.seed", std::to_string(split.seed));
            if (!per_user_n_file.empty()) out.set("split.per-user-n-file", per_user_n_file);
            break;
        case SplitStrategy::cross_validation:
            out.set("split.k", std::to_string(split.k));
            out.set("split.scope", split.scope == SplitScope::global ? "global" : "per-user");
            out.set("split.seed", std::to_string(split.seed));
            break;
    }

    std::string names;
    for (const RecommenderSpec& spec : recommenders) {
        if (!names.empty()) names += ",";
        names += spec.name;
    }
    out.set("recommenders", names);
    for (const RecommenderSpec& spec : recommenders) {
        std::string prefix = "recommender." + spec.name + ".";
        out.set(prefix + "algorithm", spec.algorithm);
        out.set(prefix + "fallback", spec.fallback);
        if (spec.algorithm == "ub-knn" || spec.algorithm == "ib-knn") {
            const KnnConfig& knn = spec.knn;
            out.set(prefix + "k", std::to_string(knn.k));
            out.set(prefix + "similarity", to_string(knn.similarity.metric));
            out.set(prefix + "mean-policy", to_string(knn.similarity.mean_policy));
            out.set(prefix + "transform", knn.similarity.transform.to_string());
            if (knn.weighting) {
                out.set(prefix + "weight-similarity", to_string(knn.weighting->metric));
                out.set(prefix + "weight-mean-policy", to_string(knn.weighting->mean_policy));
                out.set(prefix + "weight-transform", knn.weighting->transform.to_string());
            }
            out.set(prefix + "formulation", to_string(knn.formulation));
            out.set(prefix + "timing",
                    knn.timing == NeighborTiming::static_train_time ? "static" : "dynamic");
            if (knn.neighbor_threshold) {
                out.set_double(prefix + "neighbor-threshold", *knn.neighbor_threshold);
            }
            out.set(prefix + "prediction-mean-policy", to_string(knn.prediction_mean_policy));
            out.set(prefix + "capping", knn.capping == Capping::none ? "none" : "clamp");
        } else if (spec.algorithm == "mf") {
            out.set(prefix + "factors", std::to_string(spec.mf.factors));
            out.set_double(prefix + "learning-rate", spec.mf.learning_rate);
            out.set_double(prefix + "regularization", spec.mf.regularization);
            out.set(prefix + "iterations", std::to_string(spec.mf.iterations));
            out.set(prefix + "seed", std::to_string(spec.seed));
            out.set(prefix + "global-mean", spec.mf.global_mean_offset ? "true" : "false");
        } else if (spec.algorithm == "random") {
            out.set(prefix + "seed", std::to_string(spec.seed));
        }
    }

    out.set("topn", std::to_string(topn));
    out.set("undefined-policy", undefined_policy == UndefinedPolicy::skip ? "skip" : "bottom");
    out.set("similarity.dump", dump_similarities ? "true" : "false");

    std::string strat;
    for (const std::string& s : strategies) {
        if (!strat.empty()) strat += ",";
        strat += s;
    }
    out.set("candidates.strategies", strat);
    if (std::find(strategies.begin(), strategies.end(), "one-plus-random") != strategies.end()) {
        out.set("candidates.opr-n", std::to_string(opr_n));
    }
    out.set("candidates.dump", dump_candidates ? "true" : "false");

    std::string ranking;
    for (const std::string& m : ranking_metrics) {
        if (!ranking.empty()) ranking += ",";
        ranking += m;
    }
    out.set("metrics.ranking", ranking);
    std::string cuts;
    for (std::size_t c : cutoffs) {
        if (!cuts.empty()) cuts += ",";
        cuts += std::to_string(c);
    }
    out.set("metrics.cutoffs", cuts);
    std::string errors;
    for (const std::string& m : error_metrics) {
        if (!errors.empty()) errors += ",";
        errors += m;
    }
    out.set("metrics.error", errors);
    out.set_double("metrics.threshold", relevance_threshold);
    out.set("metrics.nan-policy", nan_policy.to_string());
    out.set("metrics.error-aggregation",
            error_aggregation == ErrorAggregation::global ? "global" : "per-user");
    out.set("metrics.normalize", normalize_error ? "true" : "false");
    out.set("metrics.error-clamp", error_clamp ? "true" : "false");
    out.set("metrics.gain", to_string(gain));
    out.set("metrics.overflow",
            overflow.kind == OverflowPolicy::Kind::error ? "error" : "saturate");
    out.set_double("metrics.gain-cap", overflow.cap);
    out.set("metrics.denominator",
            denom == PrecisionDenom::cutoff_k ? "cutoff-k" : "returned-length");

    out.set("stats.test", stats_test);
    out.set("stats.sides", sides == Sides::two ? "two" : "one");
    out.set("stats.fold-policy",
            fold_policy == FoldPolicy::per_fold ? "per-fold" : "concatenated");
    return out;
}

// ---- manifest ----

void Manifest::save(const fs::path& path) const {
    json j;
    j["tool"] = tool;
    j["version"] = version;
    j["digest_algorithm"] = digest_algorithm;
    j["master_seed"] = master_seed;
    j["canonical_config"] = canonical_config;
    j["config_digest"] = config_digest;
    j["stages"] = json::array();
    for (const StageRecord& s : stages) {
        json stage;
        stage["name"] = s.name;
        stage["inputs"] = s.inputs;
        stage["outputs"] = s.outputs;
        stage["wall_ms"] = s.wall_ms;
        j["stages"].push_back(stage);
    }
    if (failed_stage) j["failed_stage"] = *failed_stage;
    std::ofstream out(path);
    if (!out) throw stage_error("manifest", "cannot write " + path.string());
    out << j.dump(2) << "\n";
}

Manifest Manifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest: " + path.string());
    json j = json::parse(in);
    Manifest m;
    m.tool = j.value("tool", "");
    m.version = j.value("version", "");
    m.digest_algorithm = j.value("digest_algorithm", "sha256");
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    m.canonical_config = j.value("canonical_config", "");
    m.config_digest = j.value("config_digest", "");
    for (const json& stage : j.value("stages", json::array())) {
        StageRecord s;
        s.name = stage.value("name", "");
        s.inputs = stage.value("inputs", std::map<std::string, std::string>{});
        s.outputs = stage.value("outputs", std::map<std::string, std::string>{});
        s.wall_ms = stage.value("wall_ms", std::int64_t{0});
        m.stages.push_back(std::move(s));
    }
    if (j.contains("failed_stage") && !j["failed_stage"].is_null()) {
        m.failed_stage = j["failed_stage"].get<std::string>();
    }
    return m;
}

const StageRecord* Manifest::stage(const std::string& name) const {
    for (const StageRecord& s : stages) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

// ---- directory lock ----

DirectoryLock::DirectoryLock(const fs::path& dir) {
    fs::create_directories(dir);
    path_ = dir / ".reval-lock";
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw stage_error("lock", "output directory is locked by another invocation (" +
                                      path_.string() + " exists)");
    }
    ::close(fd);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

// ---- stage plumbing ----

namespace {

// interchange ratings files: 3 columns, or 4 when timestamped
Dataset read_interchange_dataset(const fs::path& path, const RatingScale& scale) {
    std::ifstream probe(path);
    if (!probe) throw data_error("cannot open " + path.string());
    std::string first;
    std::getline(probe, first);
    probe.close();
    ColumnSchema schema;
    schema.lenient = true; // already validated at ingest
    if (!first.empty() && split_view(first, '\t').size() >= 4) schema.timestamp_col = 3;
    std::ifstream in(path);
    return parse_dataset(in, schema, scale, DedupPolicy::keep_all, path.filename().string());
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw stage_error("io", "cannot write " + path.string());
    out << content;
}

struct StopWatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::int64_t ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start)
            .count();
    }
};

void record_input_path(StageRecord& rec, const std::string& name, const fs::path& path) {
    rec.inputs[name] = sha256_file(path);
}

void record_output(StageRecord& rec, const fs::path& dir, const std::string& name) {
    rec.outputs[name] = sha256_file(dir / name);
}

// model output exposed through the scores file; lookups are binary searches
// in per-user item-sorted vectors
class ScoreTable {
public:
    explicit ScoreTable(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open " + path.string());
        for (const Prediction& p : read_scores(in)) {
            table_[p.user].emplace_back(p.item, p.score);
        }
        for (auto& [_, vec] : table_) {
            std::sort(vec.begin(), vec.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
        }
    }

    std::optional<double> lookup(const UserId& u, const ItemId& i) const {
        auto it = table_.find(u);
        if (it == table_.end()) return std::nullopt;
        const auto& vec = it->second;
        auto pos = std::lower_bound(vec.begin(), vec.end(), i,
                                    [](const auto& kv, const ItemId& key) { return kv.first < key; });
        if (pos == vec.end() || pos->first != i) return std::nullopt;
        return pos->second;
    }

private:
    std::map<UserId, std::vector<std::pair<ItemId, std::optional<double>>>> table_;
};

class ScoreTableModel : public RecModel {
public:
    explicit ScoreTableModel(const ScoreTable& table) : table_(table) {}
    std::optional<double> predict(const UserId& u, const ItemId& i) const override {
        return table_.lookup(u, i);
    }
    std::string describe() const override { return "score-file"; }

private:
    const ScoreTable& table_;
};

struct BuiltModel {
    std::unique_ptr<RecModel> model;
    // set for knn algorithms even when a fallback wraps the model
    const KnnModel* knn = nullptr;
};

BuiltModel build_model(const RecommenderSpec& spec, const Dataset& train) {
    BuiltModel built;
    std::unique_ptr<RecModel> model;
    if (spec.algorithm == "ub-knn" || spec.algorithm == "ib-knn") {
        auto knn = train_knn(train, spec.knn);
        built.knn = knn.get();
        model = std::move(knn);
    } else if (spec.algorithm == "mf") {
        model = train_mf(train, spec.mf);
    } else if (spec.algorithm == "popularity") {
        model = train_popularity(train);
    } else if (spec.algorithm == "random") {
        model = std::make_unique<RandomModel>(spec.seed, train.scale());
    } else {
        throw config_error("unknown algorithm '" + spec.algorithm + "'");
    }
    if (spec.fallback == "popularity") {
        model = with_fallback(std::move(model), train_popularity(train));
    } else if (spec.fallback == "random") {
        model = with_fallback(std::move(model),
                              std::make_unique<RandomModel>(spec.seed, train.scale()));
    }
    built.model = std::move(model);
    return built;
}

// micro-ranking scope for one-plus-random: "<user>#<planted item>"
std::string opr_scope(const UserId& u, const ItemId& planted) { return u + "#" + planted; }

std::pair<UserId, ItemId> opr_split_scope(const std::string& scope) {
    std::size_t pos = scope.rfind('#');
    if (pos == std::string::npos) throw data_error("not a one-plus-random scope: " + scope);
    return {scope.substr(0, pos), scope.substr(pos + 1)};
}

// average micro-ranking values per real user, then aggregate over users
void collapse_opr(MetricResult& result) {
    std::map<UserId, std::pair<double, std::size_t>> acc;
    for (const auto& [scope, value] : result.per_user) {
        auto [user, _] = opr_split_scope(scope);
        acc[user].first += value;
        acc[user].second += 1;
    }
    result.per_user.clear();
    double sum = 0;
    for (const auto& [user, sc] : acc) {
        double mean = sc.first / static_cast<double>(sc.second);
        result.per_user[user] = mean;
        sum += mean;
    }
    result.n = result.per_user.size();
    result.aggregate = result.n ? sum / static_cast<double>(result.n) : 0.0;
}

} // namespace

// ---- stages ----

ExperimentRun::ExperimentRun(ExperimentConfig cfg, fs::path out_dir, fs::path in_dir)
    : cfg_(std::move(cfg)), dir_(std::move(out_dir)), in_dir_(std::move(in_dir)) {
    if (in_dir_.empty()) in_dir_ = dir_;
}

const std::vector<std::string>& ExperimentRun::stage_names() {
    static const std::vector<std::string> names = {"ingest", "split",    "recommend",
                                                   "filter", "evaluate", "test"};
    return names;
}

fs::path ExperimentRun::input_path(const std::string& name) const {
    fs::path preferred = in_dir_ / name;
    if (in_dir_ != dir_ && !fs::exists(preferred) && fs::exists(dir_ / name)) {
        return dir_ / name;
    }
    return preferred;
}

std::vector<std::string> ExperimentRun::fold_prefixes() const {
    if (cfg_.split.strategy != SplitStrategy::cross_validation) return {""};
    std::vector<std::string> prefixes;
    for (std::size_t f = 0; f < cfg_.split.k; ++f) {
        prefixes.push_back("fold-" + std::to_string(f) + ".");
    }
    return prefixes;
}

StageRecord ExperimentRun::stage_ingest() {
    StageRecord rec;
    rec.name = "ingest";
    if (cfg_.dataset_path.empty()) {
        throw stage_error("ingest", "dataset.path is not set");
    }
    rec.inputs[cfg_.dataset_path] = sha256_file(cfg_.dataset_path);

    std::ifstream in(cfg_.dataset_path);
    if (!in) throw stage_error("ingest", "cannot open dataset " + cfg_.dataset_path);
    std::vector<ParseWarning> warnings;
    Dataset ds = parse_dataset(in, cfg_.schema, cfg_.scale, cfg_.dedup, cfg_.dataset_path,
                               &warnings);

    {
        std::ofstream out(dir_ / "dataset.tsv", std::ios::binary);
        write_ratings(ds, out);
    }
    ValidationReport report = validate(ds, cfg_.min_interactions);
    {
        std::ostringstream out;
        out << "provenance: " << ds.provenance() << "\n";
        out << "parse warnings: " << warnings.size() << "\n";
        for (const ParseWarning& w : warnings) {
            out << "  line " << w.line << ": " << w.message << "\n";
        }
        out << "scale violations: " << report.scale_violations.size() << "\n";
        for (const auto& v : report.scale_violations) {
            out << "  row " << v.row << ": (" << v.user << "," << v.item << ") rating "
                << format_double(v.rating) << "\n";
        }
        out << "duplicate pairs: " << report.duplicate_pairs.size() << "\n";
        for (const auto& [u, i] : report.duplicate_pairs) out << "  (" << u << "," << i << ")\n";
        out << "min-interactions threshold: " << report.min_interactions << "\n";
        out << "users below threshold: " << report.users_below_min.size() << "\n";
        for (const UserId& u : report.users_below_min) out << "  " << u << "\n";
        out << "items below threshold: " << report.items_below_min.size() << "\n";
        for (const ItemId& i : report.items_below_min) out << "  " << i << "\n";
        write_text_file(dir_ / "validation.txt", out.str());
    }
    {
        DatasetStats stats = dataset_stats(ds);
        std::ostringstream out;
        out << "users: " << stats.n_users << "\n"
            << "items: " << stats.n_items << "\n"
            << "ratings: " << stats.n_ratings << "\n"
            << "density: " << format_double(stats.density) << "\n";
        if (stats.timespan) {
            out << "timespan: " << stats.timespan->first << ".." << stats.timespan->second << "\n";
        }
        write_text_file(dir_ / "dataset-stats.txt", out.str());
    }
    record_output(rec, dir_, "dataset.tsv");
    record_output(rec, dir_, "validation.txt");
    record_output(rec, dir_, "dataset-stats.txt");
    return rec;
}

StageRecord ExperimentRun::stage_split() {
    StageRecord rec;
    rec.name = "split";
    record_input_path(rec, "dataset.tsv", input_path("dataset.tsv"));
    Dataset ds = read_interchange_dataset(input_path("dataset.tsv"), cfg_.scale);

    SplitSpec spec = cfg_.split;
    if (!cfg_.per_user_n_file.empty()) {
        rec.inputs[cfg_.per_user_n_file] = sha256_file(cfg_.per_user_n_file);
        std::ifstream in(cfg_.per_user_n_file);
        if (!in) throw stage_error("split", "cannot open " + cfg_.per_user_n_file);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto fields = split_view(line, '\t');
            if (fields.size() != 2) throw data_error(line_no, "expected user<TAB>n");
            spec.per_user_n[std::string(fields[0])] =
                static_cast<std::size_t>(parse_int(fields[1], line_no));
        }
    }

    auto emit = [&](const SplitPair& pair, const std::string& prefix) {
        {
            std::ofstream out(dir_ / (prefix + "train.tsv"), std::ios::binary);
            write_ratings(pair.train, out);
        }
        {
            std::ofstream out(dir_ / (prefix + "test.tsv"), std::ios::binary);
            write_ratings(pair.test, out);
        }
        record_output(rec, dir_, prefix + "train.tsv");
        record_output(rec, dir_, prefix + "test.tsv");
    };

    if (spec.strategy == SplitStrategy::cross_validation) {
        FoldSet folds = split_cross_validation(ds, spec.k, spec.seed, spec.scope);
        for (std::size_t f = 0; f < folds.folds.size(); ++f) {
            emit(folds.folds[f], "fold-" + std::to_string(f) + ".");
        }
        write_text_file(dir_ / "split-report.txt", split_report(folds, spec));
    } else {
        SplitPair pair = run_split(ds, spec);
        emit(pair, "");
        write_text_file(dir_ / "split-report.txt", split_report(pair));
    }
    record_output(rec, dir_, "split-report.txt");
    return rec;
}

StageRecord ExperimentRun::stage_recommend() {
    StageRecord rec;
    rec.name = "recommend";
    for (const std::string& prefix : fold_prefixes()) {
        record_input_path(rec, prefix + "train.tsv", input_path(prefix + "train.tsv"));
        record_input_path(rec, prefix + "test.tsv", input_path(prefix + "test.tsv"));
        Dataset train = read_interchange_dataset(input_path(prefix + "train.tsv"), cfg_.scale);
        Dataset test = read_interchange_dataset(input_path(prefix + "test.tsv"), cfg_.scale);

        // models index users and items densely in memory; the mapping is an
        // explicit artifact
        {
            std::ofstream out(dir_ / (prefix + "id-map.tsv"), std::ios::binary);
            for (std::size_t i = 0; i < train.users().size(); ++i) {
                out << "user\t" << train.users()[i] << '\t' << i << '\n';
            }
            for (std::size_t i = 0; i < train.items().size(); ++i) {
                out << "item\t" << train.items()[i] << '\t' << i << '\n';
            }
        }
        record_output(rec, dir_, prefix + "id-map.tsv");

        // score domain per test user: every item observed anywhere, except
        // the user's own train items
        std::vector<ItemId> universe;
        {
            std::set<ItemId> all(train.items().begin(), train.items().end());
            all.insert(test.items().begin(), test.items().end());
            universe.assign(all.begin(), all.end());
        }
        const std::vector<UserId>& users = test.users();

        for (const RecommenderSpec& spec : cfg_.recommenders) {
            BuiltModel built = build_model(spec, train);
            const RecModel& model = *built.model;

            std::vector<std::vector<std::pair<std::size_t, std::optional<double>>>> slots(
                users.size());
            parallel_for(users.size(), [&](std::size_t ui) {
                const UserId& u = users[ui];
                std::set<ItemId> own;
                for (std::uint32_t r : train.rows_of_user(u)) own.insert(train.rows()[r].item);
                auto& slot = slots[ui];
                for (std::size_t ii = 0; ii < universe.size(); ++ii) {
                    if (own.count(universe[ii])) continue;
                    slot.emplace_back(ii, model.predict(u, universe[ii]));
                }
            });

            std::string file = prefix + "scores-" + spec.name + ".tsv";
            {
                std::ofstream out(dir_ / file, std::ios::binary);
                for (std::size_t ui = 0; ui < users.size(); ++ui) {
                    for (const auto& [ii, score] : slots[ui]) {
                        out << users[ui] << '\t' << universe[ii] << '\t'
                            << (score ? format_double(*score) : std::string("NaN")) << '\n';
                    }
                }
            }
            record_output(rec, dir_, file);

            if (cfg_.dump_similarities && built.knn) {
                std::string sim_file = prefix + "similarities-" + spec.name + ".tsv";
                std::ofstream out(dir_ / sim_file, std::ios::binary);
                write_similarities(built.knn->similarity(), out);
                out.close();
                record_output(rec, dir_, sim_file);
            }
        }
    }
    return rec;
}

StageRecord ExperimentRun::stage_filter() {
    StageRecord rec;
    rec.name = "filter";
    for (const std::string& prefix : fold_prefixes()) {
        record_input_path(rec, prefix + "train.tsv", input_path(prefix + "train.tsv"));
        record_input_path(rec, prefix + "test.tsv", input_path(prefix + "test.tsv"));
        Dataset train = read_interchange_dataset(input_path(prefix + "train.tsv"), cfg_.scale);
        Dataset test = read_interchange_dataset(input_path(prefix + "test.tsv"), cfg_.scale);

        // candidate lists per strategy, shared by all recommenders
        std::map<std::string, std::vector<CandidateList>> lists_by_strategy;
        for (const std::string& strategy : cfg_.strategies) {
            std::vector<CandidateList>& lists = lists_by_strategy[strategy];
            for (const UserId& u : test.users()) {
                if (strategy == "usertest") {
                    lists.push_back(candidates_usertest(u, test));
                } else if (strategy == "trainitems") {
                    lists.push_back(candidates_trainitems(u, train));
                } else {
                    for (CandidateList& micro :
                         candidates_oneplusrandom(u, train, test, cfg_.opr_n,
                                                  cfg_.relevance_threshold, cfg_.master_seed)) {
                        for (const ItemId& i : micro.items) {
                            if (i.find('#') != std::string::npos) {
                                throw stage_error("filter",
                                                  "one-plus-random requires item ids without '#'");
                            }
                        }
                        lists.push_back(std::move(micro));
                    }
                }
            }
            if (cfg_.dump_candidates) {
                std::string file = prefix + "candidates-" + strategy + ".tsv";
                std::ofstream out(dir_ / file, std::ios::binary);
                write_candidates(lists, out);
                out.close();
                record_output(rec, dir_, file);
            }
        }

        for (const RecommenderSpec& spec : cfg_.recommenders) {
            std::string scores_file = prefix + "scores-" + spec.name + ".tsv";
            record_input_path(rec, scores_file, input_path(scores_file));
            ScoreTable table(input_path(scores_file));
            ScoreTableModel model(table);

            for (const std::string& strategy : cfg_.strategies) {
                const std::vector<CandidateList>& lists = lists_by_strategy[strategy];
                std::vector<RankedList> rankings(lists.size());
                parallel_for(lists.size(), [&](std::size_t li) {
                    const CandidateList& cl = lists[li];
                    RankedList ranked =
                        recommend_topn(model, cl.user, cl, cfg_.topn, cfg_.undefined_policy);
                    if (strategy == "one-plus-random") {
                        // micro-ranking scope: one relevant item per list
                        // (the lexicographically greatest candidate the user
                        // has in test is exactly the planted one)
                        ItemId planted;
                        for (const ItemId& i : cl.items) {
                            for (std::uint32_t r : test.rows_of_user(cl.user)) {
                                if (test.rows()[r].item == i &&
                                    test.rows()[r].rating >= cfg_.relevance_threshold) {
                                    planted = i;
                                }
                            }
                        }
                        ranked.user = opr_scope(cl.user, planted);
                    }
                    rankings[li] = std::move(ranked);
                });
                std::string file = prefix + "recs-" + spec.name + "-" + strategy + ".tsv";
                std::ofstream out(dir_ / file, std::ios::binary);
                write_ranked_lists(rankings, out);
                out.close();
                record_output(rec, dir_, file);
            }
        }
    }
    return rec;
}

StageRecord ExperimentRun::stage_evaluate() {
    StageRecord rec;
    rec.name = "evaluate";
    for (const std::string& prefix : fold_prefixes()) {
        record_input_path(rec, prefix + "train.tsv", input_path(prefix + "train.tsv"));
        record_input_path(rec, prefix + "test.tsv", input_path(prefix + "test.tsv"));
        Dataset train = read_interchange_dataset(input_path(prefix + "train.tsv"), cfg_.scale);
        Dataset test = read_interchange_dataset(input_path(prefix + "test.tsv"), cfg_.scale);
        RelevanceJudgments judgments = relevance_from_test(test, cfg_.relevance_threshold);

        for (const RecommenderSpec& spec : cfg_.recommenders) {
            // error metrics over the test pairs, strategy-independent
            if (!cfg_.error_metrics.empty()) {
                std::string scores_file = prefix + "scores-" + spec.name + ".tsv";
                record_input_path(rec, scores_file, input_path(scores_file));
                ScoreTable table(input_path(scores_file));
                std::vector<Prediction> predictions;
                std::size_t defined = 0;
                for (const Interaction& row : test.rows()) {
                    Prediction p;
                    p.user = row.user;
                    p.item = row.item;
                    p.score = table.lookup(row.user, row.item);
                    if (p.score) {
                        ++defined;
                        if (cfg_.error_clamp && cfg_.scale.is_bounded()) {
                            p.score = std::clamp(*p.score, cfg_.scale.min, cfg_.scale.max);
                        }
                    }
                    predictions.push_back(std::move(p));
                }
                std::ostringstream out;
                for (const std::string& name : cfg_.error_metrics) {
                    try {
                        MetricResult result =
                            name == "mae" ? mae(predictions, test, cfg_.nan_policy,
                                                cfg_.error_aggregation, cfg_.normalize_error)
                                          : rmse(predictions, test, cfg_.nan_policy,
                                                 cfg_.error_aggregation, cfg_.normalize_error);
                        write_metric_result(result, out);
                    } catch (const degenerate_sample_error&) {
                        write_metric_scalar(name, std::nullopt, std::nan(""), out);
                    }
                }
                double coverage = test.empty() ? 0.0
                                               : static_cast<double>(defined) /
                                                     static_cast<double>(test.size());
                write_metric_scalar("prediction-coverage", std::nullopt, coverage, out);
                std::string file = prefix + "metrics-" + spec.name + "-error.tsv";
                write_text_file(dir_ / file, out.str());
                record_output(rec, dir_, file);
            }

            for (const std::string& strategy : cfg_.strategies) {
                std::string recs_file = prefix + "recs-" + spec.name + "-" + strategy + ".tsv";
                record_input_path(rec, recs_file, input_path(recs_file));
                std::ifstream in(input_path(recs_file));
                if (!in) throw stage_error("evaluate", "cannot open " + recs_file);
                std::vector<RankedList> rankings = read_ranked_lists(in);

                const bool opr = strategy == "one-plus-random";
                RelevanceJudgments scoped = judgments;
                if (opr) {
                    // each micro-ranking is judged against its planted item only
                    scoped.by_user.clear();
                    for (const RankedList& list : rankings) {
                        auto [user, planted] = opr_split_scope(list.user);
                        auto it = judgments.by_user.find(user);
                        if (it != judgments.by_user.end()) {
                            auto jt = it->second.find(planted);
                            if (jt != it->second.end()) {
                                scoped.by_user[list.user][planted] = jt->second;
                            }
                        }
                    }
                }

                std::ostringstream out;
                for (const std::string& name : cfg_.ranking_metrics) {
                    if (name == "mrr") {
                        MetricResult result = mrr(rankings, scoped);
                        if (opr) collapse_opr(result);
                        write_metric_result(result, out);
                        continue;
                    }
                    for (std::size_t k : cfg_.cutoffs) {
                        MetricResult result;
                        if (name == "p") {
                            result = precision_at_k(rankings, scoped, k, cfg_.denom);
                        } else if (name == "r") {
                            result = recall_at_k(rankings, scoped, k);
                        } else {
                            result = ndcg_at_k(rankings, scoped, k, cfg_.gain, cfg_.overflow);
                        }
                        if (opr) collapse_opr(result);
                        write_metric_result(result, out);
                    }
                }
                double ucov;
                if (opr) {
                    std::set<UserId> covered;
                    for (const RankedList& list : rankings) {
                        if (!list.entries.empty()) covered.insert(opr_split_scope(list.user).first);
                    }
                    ucov = test.users().empty() ? 0.0
                                                : static_cast<double>(covered.size()) /
                                                      static_cast<double>(test.users().size());
                } else {
                    ucov = user_coverage(rankings, test.users());
                }
                write_metric_scalar("user-coverage", std::nullopt, ucov, out);
                write_metric_scalar("catalog-coverage", std::nullopt,
                                    catalog_coverage(rankings, train.items().size()), out);
                std::string file = prefix + "metrics-" + spec.name + "-" + strategy + ".tsv";
                write_text_file(dir_ / file, out.str());
                record_output(rec, dir_, file);
            }
        }
    }
    return rec;
}

StageRecord ExperimentRun::stage_test() {
    StageRecord rec;
    rec.name = "test";
    std::vector<StatsRow> rows;
    if (cfg_.stats_test != "none" && cfg_.recommenders.size() >= 2) {
        WhichTest which =
            cfg_.stats_test == "paired-t" ? WhichTest::paired_t : WhichTest::wilcoxon;

        // metric columns to test: each (strategy, ranking metric) plus the
        // strategy-independent error metrics
        std::vector<std::pair<std::string, std::string>> columns; // (file tag, metric label)
        for (const std::string& strategy : cfg_.strategies) {
            for (const std::string& name : cfg_.ranking_metrics) {
                if (name == "mrr") {
                    columns.emplace_back(strategy, strategy + "/mrr");
                } else {
                    for (std::size_t k : cfg_.cutoffs) {
                        columns.emplace_back(strategy,
                                             strategy + "/" + name + "@" + std::to_string(k));
                    }
                }
            }
        }
        for (const std::string& name : cfg_.error_metrics) {
            columns.emplace_back("error", "error/" + name);
        }

        auto per_user_column = [&](const std::string& prefix, const std::string& rec_name,
                                   const std::string& tag, const std::string& label) {
            std::string file = prefix + "metrics-" + rec_name + "-" + tag + ".tsv";
            record_input_path(rec, file, input_path(file));
            std::ifstream in(input_path(file));
            if (!in) throw stage_error("test", "cannot open " + file);
            MetricsFile metrics = read_metrics(in);
            // label is "<tag>/<metric>[@k]"
            std::string name = label.substr(label.find('/') + 1);
            std::optional<std::size_t> cutoff;
            std::size_t at = name.find('@');
            if (at != std::string::npos) {
                cutoff = static_cast<std::size_t>(parse_int(name.substr(at + 1), 0));
                name = name.substr(0, at);
            }
            return metrics.per_user(name, cutoff);
        };

        const std::vector<std::string> prefixes = fold_prefixes();
        for (std::size_t a = 0; a < cfg_.recommenders.size(); ++a) {
            for (std::size_t b = a + 1; b < cfg_.recommenders.size(); ++b) {
                const std::string& name_a = cfg_.recommenders[a].name;
                const std::string& name_b = cfg_.recommenders[b].name;
                for (const auto& [tag, label] : columns) {
                    std::vector<std::map<UserId, double>> va, vb;
                    for (const std::string& prefix : prefixes) {
                        va.push_back(per_user_column(prefix, name_a, tag, label));
                        vb.push_back(per_user_column(prefix, name_b, tag, label));
                    }
                    std::vector<TestReport> reports;
                    try {
                        std::vector<PairedSample> samples = make_fold_samples(va, vb);
                        if (prefixes.size() == 1) {
                            samples[0].fold_id.reset();
                            TestReport r = which == WhichTest::paired_t
                                               ? paired_t_test(samples[0], cfg_.sides)
                                               : wilcoxon_signed_rank(samples[0], cfg_.sides);
                            reports.push_back(std::move(r));
                        } else {
                            reports = apply_fold_policy(samples, cfg_.fold_policy, which,
                                                        cfg_.sides);
                        }
                    } catch (const degenerate_sample_error&) {
                        StatsRow row;
                        row.metric = label;
                        row.system_a = name_a;
                        row.system_b = name_b;
                        row.test = cfg_.stats_test;
                        row.policy = "degenerate";
                        row.n = 0;
                        row.statistic = std::nan("");
                        row.p = std::nan("");
                        row.effect = std::nan("");
                        row.ci_low = std::nan("");
                        row.ci_high = std::nan("");
                        rows.push_back(std::move(row));
                        continue;
                    }
                    for (const TestReport& r : reports) {
                        StatsRow row;
                        row.metric = label;
                        row.system_a = name_a;
                        row.system_b = name_b;
                        row.test = r.test;
                        row.policy = r.policy + (r.concat_warning ? ",dependent-points" : "");
                        row.n = r.n;
                        row.statistic = r.statistic;
                        row.p = r.p;
                        row.effect = r.effect_size;
                        row.ci_low = r.ci_low;
                        row.ci_high = r.ci_high;
                        rows.push_back(std::move(row));
                    }
                }
            }
        }
    }
    {
        std::ofstream out(dir_ / "stats.tsv", std::ios::binary);
        write_stats_rows(rows, out);
    }
    record_output(rec, dir_, "stats.tsv");
    return rec;
}

StageRecord ExperimentRun::do_stage(const std::string& stage) {
    StopWatch watch;
    StageRecord rec;
    try {
        if (stage == "ingest") {
            rec = stage_ingest();
        } else if (stage == "split") {
            rec = stage_split();
        } else if (stage == "recommend") {
            rec = stage_recommend();
        } else if (stage == "filter") {
            rec = stage_filter();
        } else if (stage == "evaluate") {
            rec = stage_evaluate();
        } else if (stage == "test") {
            rec = stage_test();
        } else {
            throw config_error("unknown stage '" + stage + "'");
        }
    } catch (const stage_error&) {
        throw;
    } catch (const config_error&) {
        throw;
    } catch (const std::exception& e) {
        throw stage_error(stage, e.what());
    }
    rec.wall_ms = watch.ms();
    return rec;
}

namespace {

Manifest fresh_manifest(const ExperimentConfig& cfg) {
    Manifest m;
    m.master_seed = cfg.master_seed;
    m.canonical_config = cfg.canonical().canonical_text();
    m.config_digest = sha256_hex(m.canonical_config);
    return m;
}

void upsert_stage(Manifest& m, StageRecord rec) {
    for (StageRecord& s : m.stages) {
        if (s.name == rec.name) {
            s = std::move(rec);
            return;
        }
    }
    m.stages.push_back(std::move(rec));
}

} // namespace

Manifest ExperimentRun::run() {
    DirectoryLock lock(dir_);
    Manifest manifest = fresh_manifest(cfg_);
    for (const std::string& stage : stage_names()) {
        try {
            upsert_stage(manifest, do_stage(stage));
        } catch (...) {
            manifest.failed_stage = stage;
            manifest.save(dir_ / kManifestFile);
            throw;
        }
        manifest.save(dir_ / kManifestFile);
    }
    return manifest;
}

Manifest ExperimentRun::run_stage(const std::string& stage) {
    DirectoryLock lock(dir_);
    Manifest manifest;
    if (fs::exists(dir_ / kManifestFile)) {
        manifest = Manifest::load(dir_ / kManifestFile);
        manifest.failed_stage.reset();
    } else {
        manifest = fresh_manifest(cfg_);
    }
    try {
        upsert_stage(manifest, do_stage(stage));
    } catch (...) {
        manifest.failed_stage = stage;
        manifest.save(dir_ / kManifestFile);
        throw;
    }
    manifest.save(dir_ / kManifestFile);
    return manifest;
}

// ---- verify ----

VerifyResult verify_manifest(const fs::path& manifest_path, const fs::path& artifact_dir) {
    Manifest manifest = Manifest::load(manifest_path);
    VerifyResult result;
    auto check = [&](const std::string& name, const std::string& digest) {
        fs::path path = artifact_dir / name;
        if (!fs::exists(path)) {
            // external inputs (e.g. the raw dataset) may live outside the dir
            if (fs::exists(name)) {
                path = name;
            } else {
                result.missing.push_back(name);
                return;
            }
        }
        if (sha256_file(path) == digest) {
            result.matched.push_back(name);
        } else {
            result.mismatched.push_back(name);
        }
    };
    std::set<std::string> seen;
    for (const StageRecord& stage : manifest.stages) {
        for (const auto& [name, digest] : stage.outputs) {
            if (seen.insert(name).second) check(name, digest);
        }
        for (const auto& [name, digest] : stage.inputs) {
            if (seen.insert(name).second) check(name, digest);
        }
    }
    return result;
}

// ---- report ----

namespace {

struct ReportTable {
    std::vector<std::string> columns;
    // row label -> values (NaN for missing)
    std::vector<std::pair<std::string, std::vector<double>>> rows;
};

std::string csv_escape(const std::string& s) {
    if (s.find(',') == std::string::npos && s.find('"') == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

void emit_report(const ExperimentConfig& cfg, const fs::path& run_dir) {
    std::vector<std::pair<std::string, std::optional<std::size_t>>> metric_keys;
    for (const std::string& name : cfg.ranking_metrics) {
        if (name == "mrr") {
            metric_keys.emplace_back("mrr", std::nullopt);
        } else {
            for (std::size_t k : cfg.cutoffs) metric_keys.emplace_back(name, k);
        }
    }

    std::vector<std::string> prefixes;
    if (cfg.split.strategy == SplitStrategy::cross_validation) {
        for (std::size_t f = 0; f < cfg.split.k; ++f) {
            prefixes.push_back("fold-" + std::to_string(f) + ".");
        }
    } else {
        prefixes.push_back("");
    }

    std::ostringstream text;
    std::ostringstream csv;
    csv << "section,fold,recommender,strategy,metric,value\n";

    for (const std::string& prefix : prefixes) {
        std::string fold_label = prefix.empty() ? "-" : prefix.substr(0, prefix.size() - 1);
        ReportTable table;
        for (const auto& [name, cutoff] : metric_keys) {
            table.columns.push_back(cutoff ? name + "@" + std::to_string(*cutoff) : name);
        }
        table.columns.push_back("user-coverage");
        table.columns.push_back("catalog-coverage");

        struct StatLine {
            std::string row;
            std::string metric;
            Summary s;
        };
        std::vector<StatLine> stat_lines;

        for (const RecommenderSpec& spec : cfg.recommenders) {
            for (const std::string& strategy : cfg.strategies) {
                fs::path file = run_dir / (prefix + "metrics-" + spec.name + "-" + strategy + ".tsv");
                std::ifstream in(file);
                if (!in) throw stage_error("report", "missing metrics file " + file.string());
                MetricsFile metrics = read_metrics(in);
                std::vector<double> values;
                for (const auto& [name, cutoff] : metric_keys) {
                    values.push_back(metrics.has(name, cutoff) ? metrics.aggregate(name, cutoff)
                                                               : std::nan(""));
                    if (metrics.has(name, cutoff)) {
                        std::map<UserId, double> pu = metrics.per_user(name, cutoff);
                        if (!pu.empty()) {
                            stat_lines.push_back({spec.name + "/" + strategy,
                                                  table.columns[values.size() - 1], summary(pu)});
                        }
                    }
                }
                values.push_back(metrics.has("user-coverage", std::nullopt)
                                     ? metrics.aggregate("user-coverage", std::nullopt)
                                     : std::nan(""));
                values.push_back(metrics.has("catalog-coverage", std::nullopt)
                                     ? metrics.aggregate("catalog-coverage", std::nullopt)
                                     : std::nan(""));
                table.rows.emplace_back(spec.name + "/" + strategy, std::move(values));
            }
        }

        // best value per column (max), marked in the text rendering
        std::vector<double> best(table.columns.size(), std::nan(""));
        for (const auto& [_, values] : table.rows) {
            for (std::size_t c = 0; c < values.size(); ++c) {
                if (!std::isnan(values[c]) && (std::isnan(best[c]) || values[c] > best[c])) {
                    best[c] = values[c];
                }
            }
        }

        text << "== ranking metrics";
        if (!prefix.empty()) text << " (" << fold_label << ")";
        text << " ==\n";
        text << "recommender/strategy";
        for (const std::string& c : table.columns) text << '\t' << c;
        text << '\n';
        for (const auto& [label, values] : table.rows) {
            text << label;
            for (std::size_t c = 0; c < values.size(); ++c) {
                text << '\t' << format_double(values[c]);
                if (!std::isnan(values[c]) && values[c] == best[c]) text << '*';
            }
            text << '\n';
        }
        text << '\n';

        for (const auto& [label, values] : table.rows) {
            std::size_t slash = label.find('/');
            for (std::size_t c = 0; c < values.size(); ++c) {
                csv << "ranking," << fold_label << ',' << csv_escape(label.substr(0, slash)) << ','
                    << csv_escape(label.substr(slash + 1)) << ',' << table.columns[c] << ','
                    << format_double(values[c]) << '\n';
            }
        }

        // error metrics travel with their coverage companion or not at all
        if (!cfg.error_metrics.empty()) {
            struct ErrorRow {
                std::string rec;
                std::vector<double> errors;
                double coverage = 0;
            };
            std::vector<ErrorRow> error_rows;
            for (const RecommenderSpec& spec : cfg.recommenders) {
                fs::path file = run_dir / (prefix + "metrics-" + spec.name + "-error.tsv");
                std::ifstream in(file);
                if (!in) throw stage_error("report", "missing metrics file " + file.string());
                MetricsFile metrics = read_metrics(in);
                if (!metrics.has("prediction-coverage", std::nullopt)) {
                    throw stage_error("report",
                                      "refusing to report error metrics without coverage (" +
                                          file.string() + ")");
                }
                ErrorRow row;
                row.rec = spec.name;
                for (const std::string& m : cfg.error_metrics) {
                    row.errors.push_back(metrics.has(m, std::nullopt)
                                             ? metrics.aggregate(m, std::nullopt)
                                             : std::nan(""));
                    if (metrics.has(m, std::nullopt)) {
                        std::map<UserId, double> pu = metrics.per_user(m, std::nullopt);
                        if (!pu.empty()) stat_lines.push_back({spec.name + "/-", m, summary(pu)});
                    }
                }
                row.coverage = metrics.aggregate("prediction-coverage", std::nullopt);
                error_rows.push_back(std::move(row));
            }
            // best = lowest error, highest coverage
            std::vector<double> best_err(cfg.error_metrics.size(), std::nan(""));
            double best_cov = std::nan("");
            for (const ErrorRow& row : error_rows) {
                for (std::size_t c = 0; c < row.errors.size(); ++c) {
                    if (!std::isnan(row.errors[c]) &&
                        (std::isnan(best_err[c]) || row.errors[c] < best_err[c])) {
                        best_err[c] = row.errors[c];
                    }
                }
                if (std::isnan(best_cov) || row.coverage > best_cov) best_cov = row.coverage;
            }

            text << "== error metrics";
            if (!prefix.empty()) text << " (" << fold_label << ")";
            text << " ==\n";
            text << "recommender";
            for (const std::string& m : cfg.error_metrics) text << '\t' << m;
            text << "\tprediction-coverage\n";
            for (const ErrorRow& row : error_rows) {
                text << row.rec;
                for (std::size_t c = 0; c < row.errors.size(); ++c) {
                    text << '\t' << format_double(row.errors[c]);
                    if (!std::isnan(row.errors[c]) && row.errors[c] == best_err[c]) text << '*';
                    csv << "error," << fold_label << ',' << csv_escape(row.rec) << ",-,"
                        << cfg.error_metrics[c] << ',' << format_double(row.errors[c]) << '\n';
                }
                text << '\t' << format_double(row.coverage);
                if (row.coverage == best_cov) text << '*';
                text << '\n';
                csv << "error," << fold_label << ',' << csv_escape(row.rec)
                    << ",-,prediction-coverage," << format_double(row.coverage) << '\n';
            }
            text << '\n';
        }

        text << "== per-user summary (mean / variance / n)";
        if (!prefix.empty()) text << " (" << fold_label << ")";
        text << " ==\n";
        for (const StatLine& line : stat_lines) {
            text << line.row << '\t' << line.metric << '\t' << format_double(line.s.mean) << '\t'
                 << format_double(line.s.variance) << '\t' << line.s.n << '\n';
            csv << "summary-mean," << fold_label << ',' << csv_escape(line.row) << ",-,"
                << line.metric << ',' << format_double(line.s.mean) << '\n';
            csv << "summary-variance," << fold_label << ',' << csv_escape(line.row) << ",-,"
                << line.metric << ',' << format_double(line.s.variance) << '\n';
            csv << "summary-n," << fold_label << ',' << csv_escape(line.row) << ",-,"
                << line.metric << ',' << std::to_string(line.s.n) << '\n';
        }
        text << '\n';
    }

    // significance tests, when the stage ran
    if (fs::exists(run_dir / "stats.tsv")) {
        std::ifstream in(run_dir / "stats.tsv");
        std::vector<StatsRow> stats = read_stats_rows(in);
        if (!stats.empty()) {
            text << "== significance ==\n";
            text << "metric\tA\tB\ttest\tpolicy\tn\tstatistic\tp\teffect\tci\n";
            for (const StatsRow& r : stats) {
                text << r.metric << '\t' << r.system_a << '\t' << r.system_b << '\t' << r.test
                     << '\t' << r.policy << '\t' << r.n << '\t' << format_double(r.statistic)
                     << '\t' << format_double(r.p) << '\t' << format_double(r.effect) << "\t["
                     << format_double(r.ci_low) << "," << format_double(r.ci_high) << "]\n";
            }
        }
    }

    write_text_file(run_dir / "report.txt", text.str());
    write_text_file(run_dir / "report.csv", csv.str());
}

} // namespace reval
