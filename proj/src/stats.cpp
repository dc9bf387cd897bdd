#include "reval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reval/errors.hpp"

namespace reval {

PairedSample make_paired(const std::map<UserId, double>& a, const std::map<UserId, double>& b) {
    PairedSample sample;
    for (const auto& [user, va] : a) {
        auto it = b.find(user);
        if (it == b.end()) {
            ++sample.n_dropped;
            continue;
        }
        sample.users.push_back(user);
        sample.values.emplace_back(va, it->second);
    }
    for (const auto& [user, _] : b) {
        if (!a.count(user)) ++sample.n_dropped;
    }
    return sample;
}

std::vector<PairedSample> make_fold_samples(const std::vector<std::map<UserId, double>>& a,
                                            const std::vector<std::map<UserId, double>>& b) {
    if (a.size() != b.size()) {
        throw data_error("mismatched fold counts: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    std::vector<PairedSample> folds;
    for (std::size_t f = 0; f < a.size(); ++f) {
        PairedSample s = make_paired(a[f], b[f]);
        s.fold_id = f;
        folds.push_back(std::move(s));
    }
    return folds;
}

// ---- t distribution ----

namespace {

// Lentz continued fraction for the incomplete beta function
double incomplete_beta_cf(double a, double b, double x) {
    constexpr double eps = 1e-14;
    constexpr double tiny = 1e-300;
    constexpr int max_iter = 500;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log(1.0 - x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * incomplete_beta_cf(a, b, x) / a;
    }
    return 1.0 - front * incomplete_beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    double x = df / (df + t * t);
    return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

double student_t_cdf(double t, double df) {
    double half = student_t_two_sided_p(t, df) / 2.0;
    return t >= 0 ? 1.0 - half : half;
}

double student_t_quantile(double prob, double df) {
    if (!(prob > 0.0 && prob < 1.0)) throw config_error("t quantile: probability must be in (0,1)");
    double lo = -1e6, hi = 1e6;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, df) < prob) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// ---- tests ----

namespace {

void fill_column_stats(const PairedSample& sample, TestReport& report) {
    double sa = 0, sb = 0;
    for (const auto& [a, b] : sample.values) {
        sa += a;
        sb += b;
    }
    double n = static_cast<double>(sample.size());
    report.mean_a = sa / n;
    report.mean_b = sb / n;
    double va = 0, vb = 0;
    for (const auto& [a, b] : sample.values) {
        va += (a - report.mean_a) * (a - report.mean_a);
        vb += (b - report.mean_b) * (b - report.mean_b);
    }
    report.variance_a = sample.size() > 1 ? va / (n - 1.0) : 0.0;
    report.variance_b = sample.size() > 1 ? vb / (n - 1.0) : 0.0;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace

TestReport paired_t_test(const PairedSample& sample, Sides sides) {
    const std::size_t n = sample.size();
    if (n < 2) throw degenerate_sample_error("paired t-test requires n >= 2");

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = sample.values[i].first - sample.values[i].second;
    double mean_d = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double var_d = 0;
    for (double v : d) var_d += (v - mean_d) * (v - mean_d);
    var_d /= static_cast<double>(n - 1);
    if (var_d == 0) {
        throw degenerate_sample_error("paired t-test: zero variance of differences");
    }

    double sd = std::sqrt(var_d);
    double df = static_cast<double>(n - 1);
    double se = sd / std::sqrt(static_cast<double>(n));
    TestReport report;
    report.test = "paired-t";
    report.n = n;
    report.n_dropped = sample.n_dropped;
    report.statistic = mean_d / se;
    report.p = sides == Sides::two ? student_t_two_sided_p(report.statistic, df)
                                   : 1.0 - student_t_cdf(report.statistic, df);
    report.effect_size = mean_d / sd;
    double tq = student_t_quantile(0.975, df);
    report.ci_low = mean_d - tq * se;
    report.ci_high = mean_d + tq * se;
    fill_column_stats(sample, report);
    return report;
}

TestReport wilcoxon_signed_rank(const PairedSample& sample, Sides sides) {
    std::vector<double> d;
    std::size_t zeros = 0;
    for (const auto& [a, b] : sample.values) {
        double diff = a - b;
        if (diff == 0) {
            ++zeros;
        } else {
            d.push_back(diff);
        }
    }
    if (d.empty()) throw degenerate_sample_error("wilcoxon: all differences are zero");
    const std::size_t n = d.size();

    // midranks over |d|
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }

    double w_plus = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (d[t] > 0) w_plus += rank[t];
    }

    TestReport report;
    report.test = "wilcoxon";
    report.n = n;
    report.n_dropped = sample.n_dropped;
    report.n_zero_dropped = zeros;
    report.statistic = w_plus;

    if (n <= 25) {
        // exact distribution over the 2^n sign patterns: generating-function
        // DP over doubled ranks (so midranks like 2.5 stay integral)
        std::vector<long long> r2(n);
        long long total2 = 0;
        for (std::size_t t = 0; t < n; ++t) {
            r2[t] = static_cast<long long>(std::llround(rank[t] * 2.0));
            total2 += r2[t];
        }
        std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
        count[0] = 1.0;
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t w = count.size(); w-- > static_cast<std::size_t>(r2[t]);) {
                count[w] += count[w - static_cast<std::size_t>(r2[t])];
            }
        }
        double denom = std::pow(2.0, static_cast<double>(n));
        long long w2 = static_cast<long long>(std::llround(w_plus * 2.0));
        double p_ge = 0, p_le = 0;
        for (long long w = 0; w <= total2; ++w) {
            if (w >= w2) p_ge += count[static_cast<std::size_t>(w)];
            if (w <= w2) p_le += count[static_cast<std::size_t>(w)];
        }
        p_ge /= denom;
        p_le /= denom;
        report.p = sides == Sides::two ? std::min(1.0, 2.0 * std::min(p_ge, p_le)) : p_ge;
    } else {
        double nn = static_cast<double>(n);
        double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        // tie correction
        i = 0;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
            double t = static_cast<double>(j - i + 1);
            var -= t * (t * t - 1.0) / 48.0;
            i = j + 1;
        }
        double sd = std::sqrt(var);
        double cc = w_plus > mean ? -0.5 : (w_plus < mean ? 0.5 : 0.0);
        double z = (w_plus - mean + cc) / sd;
        double upper = 1.0 - normal_cdf(z);
        double lower = normal_cdf(z);
        report.p = sides == Sides::two ? std::min(1.0, 2.0 * std::min(upper, lower)) : upper;
    }

    // effect size and CI use the same paired-difference summary as the t-test
    double mean_d = 0;
    for (double v : d) mean_d += v;
    mean_d /= static_cast<double>(n);
    double var_d = 0;
    for (double v : d) var_d += (v - mean_d) * (v - mean_d);
    var_d = n > 1 ? var_d / static_cast<double>(n - 1) : 0.0;
    if (var_d > 0 && n > 1) {
        double sd_d = std::sqrt(var_d);
        report.effect_size = mean_d / sd_d;
        double tq = student_t_quantile(0.975, static_cast<double>(n - 1));
        report.ci_low = mean_d - tq * sd_d / std::sqrt(static_cast<double>(n));
        report.ci_high = mean_d + tq * sd_d / std::sqrt(static_cast<double>(n));
    } else {
        report.effect_size = 0;
        report.ci_low = report.ci_high = mean_d;
    }
    fill_column_stats(sample, report);
    return report;
}

std::vector<TestReport> apply_fold_policy(const std::vector<PairedSample>& folds,
                                          FoldPolicy policy, WhichTest which, Sides sides) {
    if (folds.empty()) throw degenerate_sample_error("no fold samples");
    auto run = [&](const PairedSample& s) {
        return which == WhichTest::paired_t ? paired_t_test(s, sides)
                                            : wilcoxon_signed_rank(s, sides);
    };
    std::vector<TestReport> reports;
    if (policy == FoldPolicy::per_fold) {
        for (std::size_t f = 0; f < folds.size(); ++f) {
            TestReport r = run(folds[f]);
            r.policy = "per-fold:" + std::to_string(folds[f].fold_id.value_or(f));
            reports.push_back(std::move(r));
        }
        return reports;
    }
    // concatenated: a user may appear once per fold; points are not
    // independent, hence the warning flag
    PairedSample merged;
    for (const PairedSample& s : folds) {
        merged.users.insert(merged.users.end(), s.users.begin(), s.users.end());
        merged.values.insert(merged.values.end(), s.values.begin(), s.values.end());
        merged.n_dropped += s.n_dropped;
    }
    TestReport r = run(merged);
    r.policy = "concatenated";
    r.concat_warning = true;
    reports.push_back(std::move(r));
    return reports;
}

Summary summary(const std::vector<double>& values) {
    if (values.empty()) throw degenerate_sample_error("summary of an empty sample");
    Summary s;
    s.n = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double acc = 0;
        for (double v : values) acc += (v - s.mean) * (v - s.mean);
        s.variance = acc / static_cast<double>(s.n - 1);
    }
    return s;
}

Summary summary(const std::map<UserId, double>& values) {
    std::vector<double> v;
    v.reserve(values.size());
    for (const auto& [_, x] : values) v.push_back(x);
    return summary(v);
}

} // namespace reval
