#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reval/dataset.hpp"

namespace reval {

// Aligned per-user values for two systems. Users present on only one side
// are dropped at construction and counted, never silently imputed.
struct PairedSample {
    std::vector<UserId> users;                     // sorted
    std::vector<std::pair<double, double>> values; // parallel to users
    std::size_t n_dropped = 0;
    std::optional<std::size_t> fold_id;

    std::size_t size() const { return values.size(); }
};

PairedSample make_paired(const std::map<UserId, double>& a, const std::map<UserId, double>& b);

// One sample per fold; throws on mismatched fold counts.
std::vector<PairedSample> make_fold_samples(const std::vector<std::map<UserId, double>>& a,
                                            const std::vector<std::map<UserId, double>>& b);

enum class Sides { one, two };

struct TestReport {
    std::string test; // "paired-t" | "wilcoxon"
    double statistic = 0;
    double p = 1;
    std::size_t n = 0;
    double mean_a = 0, mean_b = 0;
    double variance_a = 0, variance_b = 0;
    double effect_size = 0; // Cohen's d for paired data
    double ci_low = 0, ci_high = 0; // 95% CI of the mean difference
    std::size_t n_dropped = 0;      // users missing from either system
    std::size_t n_zero_dropped = 0; // zero differences removed (wilcoxon)
    std::string policy = "single";
    bool concat_warning = false; // set when per-fold values were concatenated
};

// t = mean(d) / (sd(d)/sqrt(n)), df = n-1. One-sided tests the upper tail of
// the observed statistic (system A greater). Throws degenerate_sample_error
// for n < 2 or zero difference variance.
TestReport paired_t_test(const PairedSample& sample, Sides sides);

// Exact sign-pattern distribution (midranks, DP over rank sums) for n <= 25,
// normal approximation with tie correction and continuity correction above.
// Zero differences are dropped and counted; all-zero input throws.
TestReport wilcoxon_signed_rank(const PairedSample& sample, Sides sides);

enum class FoldPolicy { per_fold, concatenated };
enum class WhichTest { paired_t, wilcoxon };

// per_fold: one report per fold. concatenated: per-fold values merged into a
// single sample where a user may appear once per fold; the report carries a
// warning flag because those points are not independent.
std::vector<TestReport> apply_fold_policy(const std::vector<PairedSample>& folds,
                                          FoldPolicy policy, WhichTest which, Sides sides);

struct Summary {
    double mean = 0;
    double variance = 0; // sample variance, n-1 denominator; 0 when n == 1
    std::size_t n = 0;
};

Summary summary(const std::vector<double>& values);
Summary summary(const std::map<UserId, double>& values);

// t-distribution pieces, continued-fraction incomplete beta underneath
// (target accuracy ~1e-9); exposed for tests and the CI computation.
double regularized_incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
double student_t_two_sided_p(double t, double df);
double student_t_quantile(double prob, double df); // lower-tail quantile

} // namespace reval
