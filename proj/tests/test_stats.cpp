#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "reval/errors.hpp"
#include "reval/rng.hpp"
#include "reval/stats.hpp"

using namespace reval;

namespace {

PairedSample sample_from(const std::vector<double>& a, const std::vector<double>& b) {
    PairedSample s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s.users.push_back("u" + std::to_string(i));
        s.values.emplace_back(a[i], b[i]);
    }
    return s;
}

PairedSample diffs(const std::vector<double>& d) {
    std::vector<double> zeros(d.size(), 0.0);
    return sample_from(d, zeros);
}

// independent oracle: brute 2^n loop over sign assignments (the production
// path uses a generating-function DP instead)
double wilcoxon_exact_two_sided_oracle(const std::vector<double>& d) {
    std::size_t n = d.size();
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
    double w_obs = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (d[t] > 0) w_obs += rank[t];
    }
    std::size_t ge = 0, le = 0, total = std::size_t(1) << n;
    for (std::size_t mask = 0; mask < total; ++mask) {
        double w = 0;
        for (std::size_t t = 0; t < n; ++t) {
            if (mask & (std::size_t(1) << t)) w += rank[t];
        }
        if (w >= w_obs - 1e-12) ++ge;
        if (w <= w_obs + 1e-12) ++le;
    }
    double p_ge = static_cast<double>(ge) / static_cast<double>(total);
    double p_le = static_cast<double>(le) / static_cast<double>(total);
    return std::min(1.0, 2.0 * std::min(p_ge, p_le));
}

} // namespace

TEST_CASE("paired t on differences 1..5: t = 4.2426, p ~ 0.0132") {
    TestReport r = paired_t_test(diffs({1, 2, 3, 4, 5}), Sides::two);
    CHECK(std::abs(r.statistic - 4.2426) <= 0.0005);
    CHECK(std::abs(r.p - 0.0132) <= 0.001); // reference-table oracle
    CHECK(r.n == 5);
    CHECK(r.mean_a == doctest::Approx(3.0));
    CHECK(r.mean_b == doctest::Approx(0.0));
    CHECK(r.effect_size == doctest::Approx(3.0 / std::sqrt(2.5)));
    CHECK(r.ci_low < 3.0);
    CHECK(r.ci_high > 3.0);
}

TEST_CASE("paired t degenerate cases") {
    CHECK_THROWS_AS(paired_t_test(diffs({1}), Sides::two), degenerate_sample_error);
    CHECK_THROWS_AS(paired_t_test(sample_from({1, 2, 3}, {1, 2, 3}), Sides::two),
                    degenerate_sample_error);
    // constant nonzero difference also has zero variance
    CHECK_THROWS_AS(paired_t_test(sample_from({2, 3}, {1, 2}), Sides::two),
                    degenerate_sample_error);
}

TEST_CASE("paired t sign flip negates t and keeps p") {
    PairedSample ab = sample_from({1, 2, 3, 4, 5}, {0.5, 1.0, 2.0, 2.5, 4.0});
    PairedSample ba = sample_from({0.5, 1.0, 2.0, 2.5, 4.0}, {1, 2, 3, 4, 5});
    TestReport rab = paired_t_test(ab, Sides::two);
    TestReport rba = paired_t_test(ba, Sides::two);
    CHECK(rab.statistic == doctest::Approx(-rba.statistic));
    CHECK(rab.p == doctest::Approx(rba.p));
}

TEST_CASE("paired t invariances") {
    std::vector<double> a{1.2, 2.0, 0.4, 3.3, 2.2, 1.9};
    std::vector<double> b{0.8, 1.1, 0.9, 2.0, 2.4, 1.0};
    TestReport base = paired_t_test(sample_from(a, b), Sides::two);

    SUBCASE("adding a common constant to both systems changes nothing") {
        std::vector<double> a2 = a, b2 = b;
        for (double& v : a2) v += 10.0;
        for (double& v : b2) v += 10.0;
        TestReport shifted = paired_t_test(sample_from(a2, b2), Sides::two);
        CHECK(shifted.statistic == doctest::Approx(base.statistic));
        CHECK(shifted.p == doctest::Approx(base.p));
    }
    SUBCASE("scaling all differences by a positive constant keeps t and p") {
        std::vector<double> a2(a.size()), b2(b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = (a[i] - b[i]) * 7.5;
            a2[i] = d;
            b2[i] = 0.0;
        }
        TestReport scaled = paired_t_test(sample_from(a2, b2), Sides::two);
        CHECK(scaled.statistic == doctest::Approx(base.statistic));
        CHECK(scaled.p == doctest::Approx(base.p));
    }
}

TEST_CASE("one-sided p is half of two-sided for a positive statistic") {
    TestReport two = paired_t_test(diffs({1, 2, 3, 4, 5}), Sides::two);
    TestReport one = paired_t_test(diffs({1, 2, 3, 4, 5}), Sides::one);
    CHECK(one.p == doctest::Approx(two.p / 2.0));
}

TEST_CASE("t distribution pieces against fixed references") {
    // classic table values
    CHECK(student_t_cdf(0.0, 7) == doctest::Approx(0.5));
    CHECK(student_t_quantile(0.975, 4) == doctest::Approx(2.7764).epsilon(1e-3));
    CHECK(student_t_quantile(0.975, 10) == doctest::Approx(2.2281).epsilon(1e-3));
    CHECK(student_t_two_sided_p(2.0, 60) == doctest::Approx(0.0501).epsilon(1e-2));
    // symmetry
    CHECK(student_t_cdf(1.3, 9) + student_t_cdf(-1.3, 9) == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon: five strictly positive differences give exact p = 0.0625") {
    TestReport r = wilcoxon_signed_rank(diffs({1, 2, 3, 4, 5}), Sides::two);
    CHECK(r.statistic == doctest::Approx(15.0));
    CHECK(r.p == doctest::Approx(2.0 / 32.0));
}

TEST_CASE("wilcoxon: a single nonzero difference gives two-sided p = 1") {
    TestReport r = wilcoxon_signed_rank(diffs({0, 0, 2.5}), Sides::two);
    CHECK(r.n == 1);
    CHECK(r.n_zero_dropped == 2);
    CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon: all differences zero is degenerate") {
    CHECK_THROWS_AS(wilcoxon_signed_rank(diffs({0, 0, 0}), Sides::two), degenerate_sample_error);
}

TEST_CASE("wilcoxon: permuting user order leaves the report unchanged") {
    std::vector<double> a{1.5, 0.2, 3.0, 2.0, 0.9};
    std::vector<double> b{1.0, 0.5, 2.0, 2.5, 0.4};
    TestReport fwd = wilcoxon_signed_rank(sample_from(a, b), Sides::two);
    std::vector<double> ar(a.rbegin(), a.rend());
    std::vector<double> br(b.rbegin(), b.rend());
    TestReport rev = wilcoxon_signed_rank(sample_from(ar, br), Sides::two);
    CHECK(fwd.statistic == doctest::Approx(rev.statistic));
    CHECK(fwd.p == doctest::Approx(rev.p));
}

TEST_CASE("wilcoxon exact matches the 2^n enumeration oracle on 100 random samples") {
    CounterRng rng(47);
    int done = 0;
    while (done < 100) {
        std::size_t n = 1 + rng.next_below(10);
        std::vector<double> d(n);
        bool any = false;
        for (double& v : d) {
            // small integer grid so ties between |d| happen often
            v = static_cast<double>(static_cast<long long>(rng.next_below(9)) - 4);
            if (v != 0) any = true;
        }
        if (!any) continue;
        std::vector<double> nonzero;
        for (double v : d) {
            if (v != 0) nonzero.push_back(v);
        }
        TestReport r = wilcoxon_signed_rank(diffs(d), Sides::two);
        double oracle = wilcoxon_exact_two_sided_oracle(nonzero);
        CHECK(r.p == doctest::Approx(oracle));
        CHECK(r.p >= 0.0);
        CHECK(r.p <= 1.0);
        ++done;
    }
}

TEST_CASE("make_paired drops users missing on either side and counts them") {
    std::map<UserId, double> a{{"u1", 1.0}, {"u2", 2.0}, {"u3", 3.0}};
    std::map<UserId, double> b{{"u2", 1.5}, {"u3", 2.5}, {"u4", 9.0}};
    PairedSample s = make_paired(a, b);
    CHECK(s.size() == 2);
    CHECK(s.n_dropped == 2); // u1 and u4
    CHECK(s.size() + s.n_dropped == 4);
}

TEST_CASE("fold policies: per-fold count, concatenated size and warning") {
    std::vector<std::map<UserId, double>> a(3), b(3);
    for (int f = 0; f < 3; ++f) {
        for (int u = 0; u < 6; ++u) {
            std::string id = "u" + std::to_string(u);
            a[f][id] = u + 0.3 * f + ((u + f) % 3 == 0 ? 0.9 : 0.1);
            b[f][id] = u;
        }
    }
    std::vector<PairedSample> folds = make_fold_samples(a, b);
    auto per_fold = apply_fold_policy(folds, FoldPolicy::per_fold, WhichTest::paired_t, Sides::two);
    CHECK(per_fold.size() == 3);
    CHECK(per_fold[0].policy == "per-fold:0");

    auto concat =
        apply_fold_policy(folds, FoldPolicy::concatenated, WhichTest::paired_t, Sides::two);
    REQUIRE(concat.size() == 1);
    CHECK(concat[0].n == 18); // sum of per-fold sizes
    CHECK(concat[0].concat_warning);

    CHECK_THROWS_AS(make_fold_samples(std::vector<std::map<UserId, double>>(2), b), data_error);
}

TEST_CASE("a fixture where folds disagree but concatenation is significant") {
    // fold 1 clearly significant, fold 2 not, concatenated significant:
    // the inconsistent-conclusions hazard in one picture
    std::vector<std::map<UserId, double>> a(2), b(2);
    std::vector<double> d1{1, 2, 3, 4, 5};
    std::vector<double> d2{0.5, -0.5, 1.5, -1.0, 0.1};
    for (int u = 0; u < 5; ++u) {
        a[0]["u" + std::to_string(u)] = d1[u];
        b[0]["u" + std::to_string(u)] = 0.0;
        a[1]["u" + std::to_string(u)] = d2[u];
        b[1]["u" + std::to_string(u)] = 0.0;
    }
    std::vector<PairedSample> folds = make_fold_samples(a, b);
    auto per_fold = apply_fold_policy(folds, FoldPolicy::per_fold, WhichTest::paired_t, Sides::two);
    CHECK(per_fold[0].p < 0.05);
    CHECK(per_fold[1].p > 0.05);
    auto concat =
        apply_fold_policy(folds, FoldPolicy::concatenated, WhichTest::paired_t, Sides::two);
    CHECK(concat[0].p < 0.05);
}

TEST_CASE("summary: mean, sample variance, n") {
    Summary s = summary(std::vector<double>{1, 2, 3});
    CHECK(s.mean == doctest::Approx(2.0));
    CHECK(s.variance == doctest::Approx(1.0));
    CHECK(s.n == 3);

    Summary single = summary(std::vector<double>{4.2});
    CHECK(single.variance == 0.0);
    CHECK(single.n == 1);

    Summary constant = summary(std::vector<double>{2, 2, 2, 2});
    CHECK(constant.variance == 0.0);

    CHECK_THROWS_AS(summary(std::vector<double>{}), degenerate_sample_error);
}
