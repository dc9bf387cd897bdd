#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reval/config.hpp"
#include "reval/dataset.hpp"
#include "reval/metrics.hpp"
#include "reval/recommenders.hpp"
#include "reval/splitter.hpp"
#include "reval/stats.hpp"

namespace reval {

inline constexpr std::string_view kToolName = "reval";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct RecommenderSpec {
    std::string name;
    std::string algorithm; // ub-knn | ib-knn | mf | popularity | random
    KnnConfig knn;
    MfConfig mf;
    std::uint64_t seed = 1;        // mf init / random scores
    std::string fallback = "none"; // none | popularity | random
};

// Every field of the declarative experiment, defaults fully expanded. The
// canonical() serialization is what gets hashed into the manifest, so no
// implicit behavior survives into a run record.
struct ExperimentConfig {
    // dataset
    std::string dataset_path;
    ColumnSchema schema;
    RatingScale scale = RatingScale::bounded(1, 5, 1);
    DedupPolicy dedup = DedupPolicy::keep_last;
    std::size_t min_interactions = 0; // validation report threshold

    // split
    SplitSpec split;
    std::string per_user_n_file;

    // recommendation
    std::vector<RecommenderSpec> recommenders;
    std::size_t topn = 10;
    UndefinedPolicy undefined_policy = UndefinedPolicy::skip;
    bool dump_similarities = false;

    // candidates
    std::vector<std::string> strategies; // usertest | trainitems | one-plus-random
    std::size_t opr_n = 100;
    bool dump_candidates = false;

    // metrics
    std::vector<std::string> ranking_metrics; // p r ndcg mrr
    std::vector<std::size_t> cutoffs;
    std::vector<std::string> error_metrics; // mae rmse
    double relevance_threshold = 4.0;
    NanPolicy nan_policy;
    ErrorAggregation error_aggregation = ErrorAggregation::global;
    bool normalize_error = false;
    // clamp predictions into the scale for error metrics (ranking always
    // sees raw scores)
    bool error_clamp = true;
    NdcgGain gain = NdcgGain::exp_shifted;
    OverflowPolicy overflow;
    PrecisionDenom denom = PrecisionDenom::cutoff_k;

    // stats
    std::string stats_test = "paired-t"; // paired-t | wilcoxon | none
    Sides sides = Sides::two;
    FoldPolicy fold_policy = FoldPolicy::per_fold;

    std::uint64_t master_seed = 1;

    static ExperimentConfig from(const Config& raw);
    static ExperimentConfig from_file(const std::filesystem::path& path);
    Config canonical() const;
};

struct StageRecord {
    std::string name;
    std::map<std::string, std::string> inputs;  // file name -> digest
    std::map<std::string, std::string> outputs;
    std::int64_t wall_ms = 0;
};

struct Manifest {
    std::string tool{kToolName};
    std::string version{kToolVersion};
    std::string digest_algorithm = "sha256";
    std::uint64_t master_seed = 0;
    std::string canonical_config;
    std::string config_digest;
    std::vector<StageRecord> stages;
    std::optional<std::string> failed_stage;

    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path);

    const StageRecord* stage(const std::string& name) const;
};

inline const char* kManifestFile = "manifest.json";

// One experiment bound to an output directory. Stages talk to each other
// only through files in that directory, so each is independently re-runnable.
class ExperimentRun {
public:
    // Stages read inputs from in_dir (default: out_dir itself) and write
    // outputs plus the manifest to out_dir.
    ExperimentRun(ExperimentConfig cfg, std::filesystem::path out_dir,
                  std::filesystem::path in_dir = {});

    // ingest -> split -> recommend -> filter -> evaluate -> test; writes the
    // manifest after every stage. On a stage failure the partial manifest
    // (with failed_stage set) is saved before the error propagates.
    Manifest run();

    // Re-run one stage against whatever files are in the directory; the
    // manifest record for that stage is replaced.
    Manifest run_stage(const std::string& stage);

    static const std::vector<std::string>& stage_names();

    const std::filesystem::path& dir() const { return dir_; }

private:
    StageRecord do_stage(const std::string& stage);
    StageRecord stage_ingest();
    StageRecord stage_split();
    StageRecord stage_recommend();
    StageRecord stage_filter();
    StageRecord stage_evaluate();
    StageRecord stage_test();

    // fold file prefixes: {""} for single splits, {"fold-0.", ...} for CV
    std::vector<std::string> fold_prefixes() const;

    // stage inputs resolve from in_dir first, then from the output directory
    // (so a stage can consume what an earlier stage just wrote there)
    std::filesystem::path input_path(const std::string& name) const;

    ExperimentConfig cfg_;
    std::filesystem::path dir_;
    std::filesystem::path in_dir_;
};

struct VerifyResult {
    std::vector<std::string> matched;
    std::vector<std::string> mismatched;
    std::vector<std::string> missing;
    bool ok() const { return mismatched.empty() && missing.empty(); }
};

// Recompute digests of every file the manifest records and compare.
VerifyResult verify_manifest(const std::filesystem::path& manifest_path,
                             const std::filesystem::path& artifact_dir);

// report.txt and report.csv: one row per (recommender, strategy) with the
// ranking metrics and coverage, best value per column marked in the text
// rendering; plus mean/variance/n per metric and the error-metric block.
// Refuses to render an error metric whose coverage companion is missing.
void emit_report(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

// held while a run mutates an output directory; a second invocation on the
// same directory fails fast
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path path_;
};

} // namespace reval
