#include "covfar/normalization.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "covfar/data_model.hpp"
#include "covfar/errors.hpp"
#include "covfar/rng.hpp"

namespace {

using covfar::apply_norm;
using covfar::Error;
using covfar::fit_tail_map;
using covfar::NormalizationMap;
using covfar::NormOptions;

// Impostor sample whose continuous quantiles hit the requested anchor scores
// exactly: with N = 10^6 + 1 points the rank (1 - far) * (N - 1) is an
// integer for far = 1e-6 .. 1e-2, so no interpolation happens.
std::vector<double> impostors_with_exact_anchors(const std::vector<double>& anchor_scores) {
    const std::size_t n = 1'000'001;
    // anchor ranks for fars 1e-6, 1e-5, 1e-4, 1e-3, 1e-2
    const std::size_t ranks[5] = {999'999, 999'990, 999'900, 999'000, 990'000};
    std::vector<double> scores(n);
    const double lowest = anchor_scores.back() - 4.0;
    const double highest = anchor_scores.front() + 1.0;

    // piecewise linear through (0, lowest), (ranks[4], s4) ... (ranks[0], s0),
    // (n-1, highest); anchor_scores come ordered by descending score
    std::vector<std::pair<std::size_t, double>> knots = {{0, lowest}};
    for (int k = 4; k >= 0; --k) {
        knots.emplace_back(ranks[k], anchor_scores[static_cast<std::size_t>(k)]);
    }
    knots.emplace_back(n - 1, highest);
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (j + 1 < knots.size() && knots[j + 1].first < i) ++j;
        const auto [i0, s0] = knots[j];
        const auto [i1, s1] = knots[j + 1];
        scores[i] =
            s0 + (s1 - s0) * static_cast<double>(i - i0) / static_cast<double>(i1 - i0);
    }
    return scores;
}

TEST(FitTailMap, ExactAnchorsGiveUnitLine) {
    // anchors at scores {6,5,4,3,2} for fars {1e-6..1e-2}: log10(far) = -score
    const auto impostors = impostors_with_exact_anchors({6.0, 5.0, 4.0, 3.0, 2.0});
    const NormalizationMap map = fit_tail_map(impostors, "unit");
    EXPECT_NEAR(map.m, -1.0, 1e-9);
    EXPECT_NEAR(map.b, 0.0, 1e-9);
    EXPECT_NEAR(map.fit_rmse, 0.0, 1e-9);
    ASSERT_EQ(map.anchors.size(), 5u);
    EXPECT_DOUBLE_EQ(map.anchors.front().far, 1e-6);
    EXPECT_NEAR(map.anchors.front().score, 6.0, 1e-9);
}

TEST(FitTailMap, ScaledShiftedAnchorsGiveScaledLine) {
    // scores s' = 2 s + 10 -> anchors {22,20,18,16,14}; line through them has
    // slope -0.5 and intercept 5 (solve -6 = m * 22 + b, -2 = m * 14 + b).
    const auto impostors = impostors_with_exact_anchors({22.0, 20.0, 18.0, 16.0, 14.0});
    const NormalizationMap map = fit_tail_map(impostors, "scaled");
    EXPECT_NEAR(map.m, -0.5, 1e-9);
    EXPECT_NEAR(map.b, 5.0, 1e-9);
    EXPECT_NEAR(map.fit_rmse, 0.0, 1e-9);
}

TEST(FitTailMap, RequiresSupportForSmallestAnchor) {
    std::vector<double> impostors(1000);
    covfar::SplitMix64 rng(1);
    for (auto& s : impostors) s = rng.normal(0.0, 1.0);
    try {
        fit_tail_map(impostors, "small");
        FAIL() << "expected insufficient-support error";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("small"), std::string::npos);
        EXPECT_NE(msg.find("insufficient impostor support"), std::string::npos);
    }
}

TEST(FitTailMap, DropUnresolvableKeepsAtLeastThreeAnchors) {
    covfar::SplitMix64 rng(2);
    std::vector<double> impostors(20000);
    for (auto& s : impostors) s = -std::log10(rng.next_double());   // unit tail
    NormOptions options;
    options.drop_unresolvable = true;
    std::vector<std::string> warnings;
    options.warnings = &warnings;
    const NormalizationMap map = fit_tail_map(impostors, "drop", options);
    ASSERT_EQ(map.anchors.size(), 3u);   // 1e-4, 1e-3, 1e-2 resolvable with 2e4 scores
    EXPECT_EQ(warnings.size(), 2u);
    EXPECT_NEAR(map.m, -1.0, 0.2);

    // with too few impostors even dropping cannot leave three anchors
    std::vector<double> few(impostors.begin(), impostors.begin() + 500);
    EXPECT_THROW(fit_tail_map(few, "few", options), Error);
}

TEST(FitTailMap, DegenerateConstantScores) {
    const std::vector<double> constant(2'000'000, 1.0);
    try {
        fit_tail_map(constant, "flat");
        FAIL() << "expected degenerate-fit error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate"), std::string::npos);
    }
}

TEST(FitTailMap, QuantileAnchorsAlwaysPointDownhill) {
    // FAR is non-increasing in the threshold, so anchors extracted from any
    // impostor sample give a non-positive slope; distance-like score
    // distributions still satisfy the m < 0 orientation guard
    covfar::SplitMix64 rng(3);
    std::vector<double> distances(2'000'000);
    for (auto& s : distances) s = std::log10(rng.next_double());
    const NormalizationMap map = fit_tail_map(distances, "distances");
    EXPECT_LT(map.m, 0.0);
}

TEST(ApplyNorm, EvaluatesLineAndFlagsExtrapolation) {
    NormalizationMap map;
    map.algorithm = "unit";
    map.m = -1.0;
    map.b = 0.0;
    map.anchors = {{1e-6, 6.0}, {1e-5, 5.0}, {1e-4, 4.0}, {1e-3, 3.0}, {1e-2, 2.0}};

    const auto mid = apply_norm(map, 7.003);
    EXPECT_DOUBLE_EQ(mid.est_log_far, -7.003);
    EXPECT_TRUE(mid.extrapolated);   // below the 1e-6 anchor

    const auto inside = apply_norm(map, 4.5);
    EXPECT_DOUBLE_EQ(inside.est_log_far, -4.5);
    EXPECT_FALSE(inside.extrapolated);

    const auto above = apply_norm(map, 1.0);
    EXPECT_DOUBLE_EQ(above.est_log_far, -1.0);
    EXPECT_TRUE(above.extrapolated);   // above the 1e-2 anchor region

    NormalizationMap scaled;
    scaled.m = -0.5;
    scaled.b = 5.0;
    EXPECT_DOUBLE_EQ(apply_norm(scaled, 22.0).est_log_far, -6.0);
}

TEST(FitTailMap, MonteCarloTailRecovery) {
    // scores with survival function 10^(m s + b): predicted FAR from the
    // fitted line tracks empirical FAR across the fit region
    const double m_true = -1.25;
    const double b_true = 0.3;
    covfar::SplitMix64 rng(11);
    std::vector<double> impostors(2'000'000);
    for (auto& s : impostors) s = (std::log10(rng.next_double()) - b_true) / m_true;

    // the 1e-6 anchor is the noisy one at this sample size; the acceptance
    // suite repeats this at 10^7 samples
    const NormalizationMap map = fit_tail_map(impostors, "mc");
    EXPECT_NEAR(map.m, m_true, 0.2);
    EXPECT_NEAR(map.b, b_true, 0.5);

    for (int k = 0; k < 20; ++k) {
        const double target = 1e-4 * std::pow(100.0, k / 19.0);   // 1e-4 .. 1e-2
        const double threshold = (std::log10(target) - b_true) / m_true;
        const double predicted = std::pow(10.0, map.m * threshold + map.b);
        const double empirical = covfar::empirical_far(impostors, threshold);
        EXPECT_GT(predicted, 0.5 * empirical);
        EXPECT_LT(predicted, 2.0 * empirical);
    }
}

TEST(FitTailMap, AnchorsSitOnTheFittedLineWithinRmse) {
    covfar::SplitMix64 rng(29);
    std::vector<double> impostors(2'000'000);
    for (auto& s : impostors) s = -std::log10(rng.next_double()) + 0.05 * rng.next_normal();
    const NormalizationMap map = fit_tail_map(impostors, "noisy");
    // max |residual| <= sqrt(k) * rmse over k anchors
    const double bound = std::sqrt(static_cast<double>(map.anchors.size())) * map.fit_rmse;
    for (const auto& a : map.anchors) {
        const double resid = std::log10(a.far) - (map.m * a.score + map.b);
        EXPECT_LE(std::fabs(resid), bound + 1e-15);
    }
}

TEST(FitTailMap, AffineEquivariance) {
    covfar::SplitMix64 rng(13);
    std::vector<double> impostors(1'500'000);
    for (auto& s : impostors) s = -std::log10(rng.next_double());

    const double a = 2.0;
    const double c = 10.0;
    std::vector<double> transformed(impostors.size());
    for (std::size_t i = 0; i < impostors.size(); ++i) transformed[i] = a * impostors[i] + c;

    const NormalizationMap base = fit_tail_map(impostors, "base");
    const NormalizationMap moved = fit_tail_map(transformed, "moved");
    for (double s : {2.1, 3.0, 4.5, 5.9}) {
        EXPECT_NEAR(apply_norm(base, s).est_log_far, apply_norm(moved, a * s + c).est_log_far,
                    1e-9);
    }
}

covfar::ScoreRow make_row(const std::string& probe, const std::string& algorithm, double score,
                          bool genuine) {
    covfar::ScoreRow row;
    row.probe.probe_id = probe;
    row.probe.subject_id = "S1";
    row.probe.sensor_model = "CAM";
    row.probe.collection_id = "C1";
    row.gallery_subject_id = genuine ? "S1" : "G1";
    row.algorithm = algorithm;
    row.raw_score = score;
    row.is_genuine = genuine;
    return row;
}

TEST(NormalizeTable, IdenticalTailsGiveIdenticalMaps) {
    covfar::SplitMix64 rng(17);
    covfar::ScoreTable table;
    std::vector<double> tail(30000);
    for (auto& s : tail) s = -std::log10(rng.next_double());
    int id = 0;
    for (const char* alg : {"A", "B"}) {
        for (double s : tail) {
            table.rows.push_back(make_row("P" + std::to_string(id++), alg, s, false));
        }
    }
    NormOptions options;
    options.anchor_fars = {1e-4, 1e-3, 1e-2};
    const covfar::NormalizedTable normalized = covfar::normalize_table(table, options);
    ASSERT_EQ(normalized.maps.size(), 2u);
    EXPECT_NEAR(normalized.maps[0].m, normalized.maps[1].m, 1e-12);
    EXPECT_NEAR(normalized.maps[0].b, normalized.maps[1].b, 1e-12);

    // each row's est value is exactly the line evaluated at its raw score
    for (std::size_t i = 0; i < normalized.rows.size(); i += 997) {
        const auto& row = normalized.rows[i];
        const auto* map = normalized.find_map(row.score.algorithm);
        ASSERT_NE(map, nullptr);
        EXPECT_EQ(row.est_log_far, map->m * row.score.raw_score + map->b);
    }
}

TEST(NormalizeTable, AffineScoreTransformCancels) {
    covfar::SplitMix64 rng(19);
    covfar::ScoreTable table;
    int id = 0;
    for (int i = 0; i < 30000; ++i) {
        const double impostor = -std::log10(rng.next_double());
        table.rows.push_back(make_row("P" + std::to_string(id++), "A", impostor, false));
        table.rows.push_back(make_row("P" + std::to_string(id++), "B", 2.0 * impostor + 10.0, false));
        if (i % 10 == 0) {
            const double genuine = rng.uniform(3.0, 6.0);
            table.rows.push_back(make_row("P" + std::to_string(id++), "A", genuine, true));
            table.rows.push_back(make_row("P" + std::to_string(id++), "B", 2.0 * genuine + 10.0, true));
        }
    }
    NormOptions options;
    options.anchor_fars = {1e-4, 1e-3, 1e-2};
    const covfar::NormalizedTable normalized = covfar::normalize_table(table, options);

    std::vector<double> est_a, est_b;
    for (const auto& row : normalized.rows) {
        if (!row.score.is_genuine) continue;
        (row.score.algorithm == "A" ? est_a : est_b).push_back(row.est_log_far);
    }
    ASSERT_EQ(est_a.size(), est_b.size());
    ASSERT_FALSE(est_a.empty());
    for (std::size_t i = 0; i < est_a.size(); ++i) {
        EXPECT_NEAR(est_a[i], est_b[i], 1e-9);
    }
}

TEST(NormalizeTable, FitErrorNamesTheAlgorithm) {
    covfar::ScoreTable table;
    for (int i = 0; i < 50; ++i) {
        table.rows.push_back(make_row("P" + std::to_string(i), "tiny", i * 0.1, false));
    }
    try {
        covfar::normalize_table(table);
        FAIL() << "expected a fit error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
    }
}

TEST(NormalizationMapJson, RoundTrips) {
    NormalizationMap map;
    map.algorithm = "System A";
    map.m = -1.25;
    map.b = 0.375;
    map.fit_rmse = 0.01;
    map.anchors = {{1e-4, 3.5}, {1e-3, 2.75}, {1e-2, 2.0}};
    const NormalizationMap back = covfar::normalization_map_from_json(covfar::to_json(map));
    EXPECT_EQ(back.algorithm, map.algorithm);
    EXPECT_DOUBLE_EQ(back.m, map.m);
    EXPECT_DOUBLE_EQ(back.b, map.b);
    ASSERT_EQ(back.anchors.size(), map.anchors.size());
    EXPECT_DOUBLE_EQ(back.anchors[1].score, map.anchors[1].score);
}

} // namespace
