#include "covfar/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "covfar/errors.hpp"
#include "covfar/rng.hpp"

namespace {

using covfar::empirical_far;
using covfar::empirical_tar;
using covfar::Error;
using covfar::RocPoint;
using covfar::roc_curve;
using covfar::threshold_at_far;

std::vector<double> one_to_n(int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = i + 1.0;
    return v;
}

// Independent quantile oracle: same continuous-quantile convention, written
// straight from the definition against a freshly sorted copy.
double oracle_threshold(std::vector<double> scores, double target_far) {
    std::sort(scores.begin(), scores.end());
    const std::size_t n = scores.size();
    const double h = (1.0 - target_far) * static_cast<double>(n - 1);
    std::size_t k = static_cast<std::size_t>(h);
    if (k >= n - 1) return scores[n - 1];
    return scores[k] + (h - static_cast<double>(k)) * (scores[k + 1] - scores[k]);
}

double oracle_rate(const std::vector<double>& scores, double threshold) {
    std::size_t count = 0;
    for (double s : scores) count += s >= threshold ? 1 : 0;
    return static_cast<double>(count) / static_cast<double>(scores.size());
}

TEST(EmpiricalFar, CountsAtOrAboveThreshold) {
    const auto scores = one_to_n(100);
    EXPECT_DOUBLE_EQ(empirical_far(scores, 90.5), 0.10);
    EXPECT_DOUBLE_EQ(empirical_far(scores, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(empirical_far(scores, 101.0), 0.0);
    // ties accept: duplicates contribute multiply
    const std::vector<double> tied = {1, 2, 2, 2, 3};
    EXPECT_DOUBLE_EQ(empirical_far(tied, 2.0), 0.8);
}

TEST(EmpiricalFar, RejectsEmptyAndNonFinite) {
    EXPECT_THROW(empirical_far({}, 0.5), Error);
    const std::vector<double> bad = {1.0, std::nan("")};
    EXPECT_THROW(empirical_far(bad, 0.5), Error);
}

TEST(EmpiricalTar, MirrorsFarConvention) {
    const std::vector<double> genuine = {5, 6, 7};
    EXPECT_DOUBLE_EQ(empirical_tar(genuine, 6.0), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(empirical_tar(genuine, 5.0), 1.0);
    EXPECT_DOUBLE_EQ(empirical_tar(genuine, 7.5), 0.0);
}

TEST(ThresholdAtFar, ContinuousQuantileOnUniformScores) {
    const auto scores = one_to_n(100);
    // rank 0.95 * 99 = 94.05 of the ascending sort -> 95 + 0.05 * (96 - 95)
    const double q = threshold_at_far(scores, 0.05);
    EXPECT_NEAR(q, 95.05, 1e-12);
    EXPECT_DOUBLE_EQ(q, oracle_threshold(scores, 0.05));
    // achieved FAR within one rank step of the target
    EXPECT_NEAR(empirical_far(scores, q), 0.05, 1.0 / scores.size());
}

TEST(ThresholdAtFar, TwoPointMidpoint) {
    const std::vector<double> scores = {0.0, 1.0};
    EXPECT_DOUBLE_EQ(threshold_at_far(scores, 0.5), 0.5);
}

TEST(ThresholdAtFar, DegenerateConstantScores) {
    const std::vector<double> scores(50, 3.25);
    EXPECT_DOUBLE_EQ(threshold_at_far(scores, 0.1), 3.25);
    EXPECT_DOUBLE_EQ(threshold_at_far(scores, 0.5), 3.25);
}

TEST(ThresholdAtFar, InsufficientSupportIsAnError) {
    const auto scores = one_to_n(100);
    try {
        threshold_at_far(scores, 0.005);   // needs 200 scores
        FAIL() << "expected insufficient-support error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("insufficient impostor support"), std::string::npos);
    }
    EXPECT_THROW(threshold_at_far(scores, 0.0), Error);
    EXPECT_THROW(threshold_at_far(scores, 1.0), Error);
    EXPECT_THROW(threshold_at_far({}, 0.5), Error);
}

TEST(ThresholdAtFar, BracketingProperty) {
    covfar::SplitMix64 rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> scores(200 + rng.next_below(300));
        for (auto& s : scores) s = rng.normal(0.0, 3.0);
        const double f = rng.uniform(1.0 / static_cast<double>(scores.size()), 0.5);
        const double q = threshold_at_far(scores, f);
        // achieved FAR sits within one rank step at or below the target
        EXPECT_LE(empirical_far(scores, q), f + 1.0 / static_cast<double>(scores.size()) + 1e-12);

        // stepping down past the previous order statistic pushes FAR above f
        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        double prev = sorted.front();
        for (double s : sorted) {
            if (s < q) prev = s;
        }
        if (prev < q) {
            EXPECT_GT(empirical_far(scores, prev), f - 1.0 / scores.size() - 1e-12);
        }
    }
}

TEST(Monotonicity, FarAndTarDecreaseInThreshold) {
    covfar::SplitMix64 rng(11);
    std::vector<double> scores(500);
    for (auto& s : scores) s = rng.normal(1.0, 2.0);
    double prev_far = 1.1;
    for (double t = -6.0; t < 8.0; t += 0.25) {
        const double far = empirical_far(scores, t);
        EXPECT_LE(far, prev_far);
        prev_far = far;
    }
}

TEST(RocCurve, PerfectSeparationGivesUnitTar) {
    std::vector<double> genuine(100), impostor(200);
    covfar::SplitMix64 rng(3);
    for (auto& s : impostor) s = rng.uniform(0.0, 1.0);
    for (auto& s : genuine) s = rng.uniform(2.0, 3.0);
    const std::vector<double> grid = {0.01, 0.05, 0.1, 0.5};
    for (const auto& p : roc_curve(genuine, impostor, grid)) {
        EXPECT_DOUBLE_EQ(p.tar, 1.0);
    }
}

TEST(RocCurve, IdenticalDistributionsTrackTheDiagonal) {
    std::vector<double> shared(200);
    covfar::SplitMix64 rng(5);
    for (auto& s : shared) s = rng.normal(0.0, 1.0);
    const std::vector<double> grid = {0.02, 0.05, 0.1, 0.2, 0.5};
    for (const auto& p : roc_curve(shared, shared, grid)) {
        EXPECT_NEAR(p.tar, p.far, 1.0 / shared.size() + 1e-12);
    }
}

TEST(RocCurve, MatchesExhaustiveSweepExactly) {
    covfar::SplitMix64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> genuine(100 + rng.next_below(200));
        std::vector<double> impostor(100 + rng.next_below(200));
        for (auto& s : genuine) s = rng.normal(2.0, 1.5);
        for (auto& s : impostor) s = rng.normal(0.0, 1.0);
        const std::vector<double> grid = {0.02, 0.05, 0.1, 0.25, 0.5};
        const auto points = roc_curve(genuine, impostor, grid);
        ASSERT_EQ(points.size(), grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double t = oracle_threshold(impostor, grid[i]);
            EXPECT_EQ(points[i].threshold, t);
            EXPECT_EQ(points[i].far, oracle_rate(impostor, t));
            EXPECT_EQ(points[i].tar, oracle_rate(genuine, t));
        }
    }
}

TEST(RocCurve, ValidatesGrid) {
    const std::vector<double> genuine = {1, 2, 3};
    const std::vector<double> impostor = {0, 1, 2, 3};
    EXPECT_THROW(roc_curve(genuine, impostor, std::vector<double>{0.5, 0.25}), Error);
    EXPECT_THROW(roc_curve(genuine, impostor, std::vector<double>{0.0, 0.5}), Error);
}

} // namespace
