#include "covfar/lmm.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "covfar/covariates.hpp"
#include "covfar/errors.hpp"
#include "covfar/rng.hpp"
#include "covfar/stats.hpp"
#include "covfar/synthetic.hpp"

namespace {

using covfar::CovariateSpec;
using covfar::DesignMatrix;
using covfar::Error;
using covfar::fit_reml;
using covfar::FittedModel;
using covfar::profiled_loglik;
using covfar::wald_stats;

// Intercept-only design with explicit groups.
DesignMatrix intercept_only_design(const std::vector<std::vector<double>>& groups) {
    DesignMatrix design;
    design.columns = {{"Intercept", "Intercept", "-"}};
    design.spec.covariates = {};
    for (std::size_t g = 0; g < groups.size(); ++g) {
        design.group_labels.push_back("G" + std::to_string(g));
        for (double y : groups[g]) {
            design.y.push_back(y);
            design.x.push_back(1.0);
            design.group_index.push_back(g);
        }
    }
    return design;
}

// Closed-form REML for balanced one-way data: sigma^2 = MSW and
// sigma_u^2 = (MSB - MSW)/n (clamped at zero), intercept = grand mean.
struct AnovaOracle {
    double sigma2;
    double sigma_u2;
    double mean;
};

AnovaOracle anova_oracle(const std::vector<std::vector<double>>& groups) {
    const std::size_t g = groups.size();
    const std::size_t n = groups[0].size();
    double grand = 0.0;
    std::vector<double> means(g, 0.0);
    for (std::size_t i = 0; i < g; ++i) {
        for (double y : groups[i]) means[i] += y;
        means[i] /= static_cast<double>(n);
        grand += means[i];
    }
    grand /= static_cast<double>(g);
    double ssb = 0.0, ssw = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        ssb += (means[i] - grand) * (means[i] - grand) * static_cast<double>(n);
        for (double y : groups[i]) ssw += (y - means[i]) * (y - means[i]);
    }
    const double msb = ssb / static_cast<double>(g - 1);
    const double msw = ssw / static_cast<double>(g * (n - 1));
    return {msw, std::max(0.0, (msb - msw) / static_cast<double>(n)), grand};
}

std::vector<std::vector<double>> balanced_groups(std::size_t g, std::size_t n, double mu,
                                                 double group_sd, double resid_sd,
                                                 std::uint64_t seed) {
    covfar::SplitMix64 rng(seed);
    std::vector<std::vector<double>> groups(g);
    for (std::size_t i = 0; i < g; ++i) {
        const double u = rng.normal(0.0, group_sd);
        groups[i].resize(n);
        for (std::size_t j = 0; j < n; ++j) groups[i][j] = mu + u + rng.normal(0.0, resid_sd);
    }
    return groups;
}

TEST(FitReml, MatchesBalancedAnovaClosedForm) {
    const auto groups = balanced_groups(10, 20, 2.0, 1.0, 2.0, 101);
    const AnovaOracle oracle = anova_oracle(groups);
    ASSERT_GT(oracle.sigma_u2, 0.0);

    const FittedModel model = fit_reml(intercept_only_design(groups));
    EXPECT_TRUE(model.converged);
    EXPECT_NEAR(model.scale / oracle.sigma2, 1.0, 1e-6);
    EXPECT_NEAR(model.group_variance / oracle.sigma_u2, 1.0, 1e-6);
    EXPECT_NEAR(model.coefficients[0] / oracle.mean, 1.0, 1e-6);
    EXPECT_EQ(model.n_observations, 200u);
    EXPECT_EQ(model.n_groups, 10u);
    EXPECT_EQ(model.min_group_size, 20u);
    EXPECT_EQ(model.max_group_size, 20u);
    EXPECT_DOUBLE_EQ(model.mean_group_size, 20.0);
}

TEST(FitReml, ZeroBetweenGroupVariationHitsTheBoundary) {
    // identical group means, pure within noise: REML lands on theta = 0
    covfar::SplitMix64 rng(7);
    std::vector<std::vector<double>> groups(6);
    for (auto& grp : groups) {
        grp.resize(30);
        double sum = 0.0;
        for (auto& y : grp) {
            y = rng.normal(0.0, 1.0);
            sum += y;
        }
        for (auto& y : grp) y -= sum / grp.size();   // exact zero group means
    }
    const FittedModel model = fit_reml(intercept_only_design(groups));
    EXPECT_TRUE(model.converged);
    EXPECT_NEAR(model.group_variance, 0.0, 1e-8);
}

TEST(ProfiledLoglik, ZeroThetaEqualsOlsRemlLoglik) {
    const auto groups = balanced_groups(8, 10, 1.0, 0.7, 1.5, 31);
    const DesignMatrix design = intercept_only_design(groups);

    // independent OLS-REML log-likelihood at theta = 0
    std::vector<double> y = design.y;
    const double n = static_cast<double>(y.size());
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sse = 0.0;
    for (double v : y) sse += (v - mean) * (v - mean);
    const double df = n - 1.0;
    const double sigma2 = sse / df;
    const double expected =
        -0.5 * (df * (std::log(2.0 * M_PI) + 1.0 + std::log(sigma2)) + std::log(n));

    EXPECT_NEAR(profiled_loglik(0.0, design), expected, 1e-8);
    EXPECT_THROW(profiled_loglik(-0.1, design), Error);
}

TEST(ProfiledLoglik, GridMaxNearClosedFormTheta) {
    const auto groups = balanced_groups(12, 15, 0.0, 1.2, 1.8, 57);
    const AnovaOracle oracle = anova_oracle(groups);
    const DesignMatrix design = intercept_only_design(groups);
    const double theta_star = oracle.sigma_u2 / oracle.sigma2;

    const double step = 0.02 * theta_star;
    double best_theta = 0.0;
    double best_ll = -1e300;
    for (double theta = step; theta < 3.0 * theta_star; theta += step) {
        const double ll = profiled_loglik(theta, design);
        if (ll > best_ll) {
            best_ll = ll;
            best_theta = theta;
        }
    }
    EXPECT_NEAR(best_theta, theta_star, step + 1e-12);
}

TEST(ProfiledLoglik, FiniteAtExtremeTheta) {
    const auto groups = balanced_groups(5, 8, 0.5, 1.0, 1.0, 3);
    EXPECT_TRUE(std::isfinite(profiled_loglik(1e6, intercept_only_design(groups))));
}

TEST(FitReml, RejectsDegenerateInputs) {
    // fewer than two groups
    const auto one = balanced_groups(1, 10, 0.0, 0.0, 1.0, 1);
    EXPECT_THROW(fit_reml(intercept_only_design(one)), Error);
}

TEST(FitReml, RankDeficiencyNamesDependentColumns) {
    covfar::SplitMix64 rng(13);
    DesignMatrix design;
    design.columns = {{"Intercept", "Intercept", "-"},
                      {"A=x", "A", "x"},
                      {"B=dup", "B", "dup"}};
    design.spec.covariates = {{"A", {"ref", "x"}}, {"B", {"ref", "dup"}}};
    design.group_labels = {"G0", "G1"};
    for (int i = 0; i < 40; ++i) {
        const double x = i % 2 ? 1.0 : 0.0;
        design.x.push_back(1.0);
        design.x.push_back(x);
        design.x.push_back(x);   // exact copy of the previous column
        design.y.push_back(rng.normal(0.0, 1.0));
        design.group_index.push_back(i % 2);
    }
    try {
        fit_reml(design);
        FAIL() << "expected rank-deficiency error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), covfar::ErrorKind::numerical);
        EXPECT_NE(std::string(e.what()).find("B=dup"), std::string::npos) << e.what();
    }
}

TEST(FitReml, EmptyColumnsAreDroppedWithWarning) {
    const CovariateSpec spec{{{"OnlyRef", {"ref", "never"}}}};
    DesignMatrix design;
    design.spec = spec;
    design.columns = covfar::design_columns(spec);
    covfar::SplitMix64 rng(5);
    design.group_labels = {"G0", "G1", "G2"};
    for (int i = 0; i < 30; ++i) {
        design.x.push_back(1.0);
        design.x.push_back(0.0);   // level "never" has no rows
        design.y.push_back(rng.normal(0.0, 1.0));
        design.group_index.push_back(i % 3);
    }
    const FittedModel model = fit_reml(design);
    ASSERT_EQ(model.dropped_columns.size(), 1u);
    EXPECT_EQ(model.dropped_columns[0], "OnlyRef=never");
    EXPECT_EQ(model.columns.size(), 1u);
}

DesignMatrix random_design(std::uint64_t seed, std::size_t n_rows = 800,
                           std::size_t n_groups = 15) {
    const CovariateSpec spec = CovariateSpec::defaults();
    const auto columns = covfar::design_columns(spec);
    std::vector<double> beta(columns.size(), 0.0);
    covfar::SplitMix64 rng(seed * 31 + 1);
    beta[0] = -7.0;
    for (std::size_t j = 1; j < beta.size(); ++j) beta[j] = rng.normal(0.0, 0.8);
    return covfar::generate_design(spec, n_rows, n_groups, beta, 1.0, 2.0, seed);
}

TEST(FitReml, OlsReductionWhenGroupVarianceForcedToZero) {
    const DesignMatrix design = random_design(3);
    const auto gls_zero = covfar::gls_coefficients(0.0, design);

    // OLS oracle via Eigen normal equations, built directly from the design
    const std::size_t n = design.n_rows();
    const std::size_t p = design.n_cols();
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = design.y[i];
        for (std::size_t j = 0; j < p; ++j) x(i, j) = design.at(i, j);
    }
    const Eigen::VectorXd ols = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    ASSERT_EQ(gls_zero.size(), p);
    for (std::size_t j = 0; j < p; ++j) {
        EXPECT_NEAR(gls_zero[j], ols[j], 1e-9);
    }
}

TEST(Invariants, ReductionPermutationAndShift) {
    const DesignMatrix design = random_design(11);
    const FittedModel model = fit_reml(design);
    ASSERT_TRUE(model.converged);
    const std::size_t p = model.columns.size();

    // permutation invariance: shuffle rows with their group labels
    DesignMatrix shuffled = design;
    covfar::SplitMix64 rng(99);
    const std::size_t n = design.n_rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.next_below(i)]);
    for (std::size_t i = 0; i < n; ++i) {
        shuffled.y[i] = design.y[perm[i]];
        shuffled.group_index[i] = design.group_index[perm[i]];
        for (std::size_t j = 0; j < p; ++j) {
            shuffled.x[i * p + j] = design.x[perm[i] * p + j];
        }
    }
    const FittedModel reshuffled = fit_reml(shuffled);
    EXPECT_NEAR(reshuffled.scale, model.scale, 1e-9 * model.scale);
    EXPECT_NEAR(reshuffled.group_variance, model.group_variance,
                1e-9 * (model.group_variance + 1.0));
    for (std::size_t j = 0; j < p; ++j) {
        EXPECT_NEAR(reshuffled.coefficients[j], model.coefficients[j], 1e-9);
    }

    // response shift: y + c moves only the intercept
    DesignMatrix shifted = design;
    const double c = 3.25;
    for (auto& y : shifted.y) y += c;
    const FittedModel moved = fit_reml(shifted);
    EXPECT_NEAR(moved.coefficients[0], model.coefficients[0] + c, 1e-9);
    for (std::size_t j = 1; j < p; ++j) {
        EXPECT_NEAR(moved.coefficients[j], model.coefficients[j], 1e-9);
        EXPECT_NEAR(moved.standard_errors[j], model.standard_errors[j], 1e-9);
    }
    EXPECT_NEAR(moved.scale, model.scale, 1e-9 * model.scale);
    EXPECT_NEAR(moved.group_variance, model.group_variance, 1e-9 * (model.group_variance + 1.0));
}

TEST(Invariants, GradientVanishesAtInteriorOptimum) {
    const DesignMatrix design = random_design(17);
    const FittedModel model = fit_reml(design);
    ASSERT_TRUE(model.converged);
    if (model.theta == 0.0) {
        SUCCEED() << "boundary optimum";
        return;
    }
    const double h = 1e-5 * model.theta;
    const double grad = (profiled_loglik(model.theta + h, design) -
                         profiled_loglik(model.theta - h, design)) /
                        (2.0 * h);
    EXPECT_LE(std::fabs(grad * model.theta), 1e-4);
}

TEST(WaldStats, RecomputesPublishedPValues) {
    // SE from the CI half-width, then p = 2(1 - Phi(|coef/SE|))
    struct Case {
        double coef, lo, hi, printed_p;
    };
    const Case cases[] = {
        {0.265, 0.013, 0.516, 0.039},    // wind 9-12
        {0.114, 0.031, 0.197, 0.007},    // temperature 0-10
        {0.999, -0.122, 2.120, 0.081},   // uav
    };
    for (const auto& c : cases) {
        const double se = (c.hi - c.lo) / (2.0 * 1.959963984540054);
        const double p = covfar::wald_p_value(c.coef / se);
        EXPECT_NEAR(p, c.printed_p, 0.005);
    }
}

TEST(WaldStats, EmitsReferenceRowsWithZeros) {
    const DesignMatrix design = random_design(23);
    const FittedModel model = fit_reml(design);
    const auto stats = wald_stats(model);

    ASSERT_FALSE(stats.empty());
    EXPECT_EQ(stats[0].covariate, "Intercept");
    EXPECT_FALSE(stats[0].is_reference);

    std::size_t references = 0;
    for (const auto& s : stats) {
        if (s.is_reference) {
            ++references;
            EXPECT_DOUBLE_EQ(s.coef, 0.0);
            EXPECT_DOUBLE_EQ(s.ci_low, 0.0);
            EXPECT_DOUBLE_EQ(s.ci_high, 0.0);
            EXPECT_TRUE(std::isnan(s.p_value));
        } else {
            EXPECT_LE(s.ci_low, s.coef);
            EXPECT_LE(s.coef, s.ci_high);
            // ci half-width = z_0.975 * SE
            EXPECT_NEAR(s.ci_high - s.coef, 1.959963984540054 * s.se, 1e-9);
            EXPECT_GE(s.p_value, 0.0);
            EXPECT_LE(s.p_value, 1.0);
        }
    }
    EXPECT_EQ(references, 9u);   // one per covariate
    EXPECT_EQ(stats.size(), 1u + 9u + 28u);

    // zero coefficient with unit SE: p = 1, symmetric CI
    EXPECT_DOUBLE_EQ(covfar::wald_p_value(0.0), 1.0);
}

TEST(FitReml, CoefficientRecoveryOnKnownGenerator) {
    // single-seed, fixed-generator check; the acceptance suite sweeps 20 seeds
    const CovariateSpec spec = CovariateSpec::defaults();
    const auto columns = covfar::design_columns(spec);
    std::vector<double> beta(columns.size(), 0.0);
    covfar::SplitMix64 rng(2024);
    beta[0] = -7.0;
    for (std::size_t j = 1; j < beta.size(); ++j) beta[j] = rng.normal(0.0, 1.0);

    const DesignMatrix design = covfar::generate_design(spec, 5000, 40, beta, 1.0, 2.0, 4);
    const FittedModel model = fit_reml(design);
    ASSERT_TRUE(model.converged);
    ASSERT_TRUE(model.dropped_columns.empty());
    for (std::size_t j = 0; j < beta.size(); ++j) {
        EXPECT_NEAR(model.coefficients[j], beta[j], 3.0 * model.standard_errors[j])
            << model.columns[j].name;
    }
    EXPECT_NEAR(model.scale, 4.0, 0.5);
    EXPECT_NEAR(model.group_variance, 1.0, 0.8);
}

TEST(ModelJson, RoundTrips) {
    const DesignMatrix design = random_design(29, 400, 8);
    const FittedModel model = fit_reml(design);
    const FittedModel back = covfar::fitted_model_from_json(covfar::to_json(model));
    EXPECT_EQ(back.columns.size(), model.columns.size());
    EXPECT_DOUBLE_EQ(back.scale, model.scale);
    EXPECT_DOUBLE_EQ(back.group_variance, model.group_variance);
    EXPECT_DOUBLE_EQ(back.reml_loglik, model.reml_loglik);
    EXPECT_EQ(back.converged, model.converged);
    EXPECT_EQ(back.n_groups, model.n_groups);
    for (std::size_t j = 0; j < model.coefficients.size(); ++j) {
        EXPECT_DOUBLE_EQ(back.coefficients[j], model.coefficients[j]);
    }
}

} // namespace
