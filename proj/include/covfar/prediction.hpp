#pragma once

// Additive FAR-scenario calculator: S is the intercept plus the coefficient
// of each chosen covariate level (reference levels contribute zero), and
// FAR_est = 10^S. Estimates hold at a fixed 50% TAR operating point; that
// caveat is display text, not part of the computation.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "covfar/covariates.hpp"
#include "covfar/errors.hpp"
#include "covfar/lmm.hpp"

namespace covfar {

struct FarTerm {
    std::string covariate;
    std::string level;
    double coef = 0.0;
};

struct FarEstimate {
    double s = 0.0;            // predicted log10 FAR
    double far = 0.0;          // 10^s
    long long one_in_n = 0;    // round(10^-s), half away from zero
    std::vector<FarTerm> terms;
};

inline FarEstimate predict_far(const std::vector<CoefficientStat>& coeffs,
                               const Scenario& scenario) {
    FarEstimate est;
    bool have_intercept = false;

    // Walk coefficients in table order so the term sum is reproducible
    // left to right.
    std::size_t used = 0;
    for (const auto& stat : coeffs) {
        if (stat.covariate == "Intercept") {
            est.terms.push_back({stat.covariate, stat.level, stat.coef});
            est.s += stat.coef;
            have_intercept = true;
            continue;
        }
        auto it = scenario.choices.find(stat.covariate);
        if (it != scenario.choices.end() && it->second == stat.level) {
            est.terms.push_back({stat.covariate, stat.level, stat.coef});
            est.s += stat.coef;
            ++used;
        }
    }
    if (!have_intercept) {
        throw Error::validation("predict_far: coefficient table has no intercept");
    }
    if (used != scenario.choices.size()) {
        for (const auto& [name, level] : scenario.choices) {
            bool found = false;
            for (const auto& stat : coeffs) {
                if (stat.covariate == name && stat.level == level) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                throw Error::validation("predict_far: no coefficient for '" + name + "=" + level +
                                        "'");
            }
        }
    }

    est.far = std::pow(10.0, est.s);
    const double denom = std::pow(10.0, -est.s);
    if (denom >= 9.0e18) {
        throw Error::numerical("predict_far: 1-in-N denominator overflows at S=" +
                               csv::to_string(est.s));
    }
    est.one_in_n = std::llround(denom);
    return est;
}

// 1,469 style digit grouping for the "1 in N" display.
inline std::string format_thousands(long long value) {
    std::string digits = std::to_string(value < 0 ? -value : value);
    std::string out;
    out.reserve(digits.size() + digits.size() / 3 + 1);
    if (value < 0) out.push_back('-');
    const std::size_t lead = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i != 0 && (i - lead) % 3 == 0 && i >= lead) out.push_back(',');
        out.push_back(digits[i]);
    }
    return out;
}

inline nlohmann::json to_json(const FarEstimate& est) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : est.terms) {
        terms.push_back({{"covariate", t.covariate}, {"level", t.level}, {"coef", t.coef}});
    }
    return nlohmann::json{
        {"s", est.s}, {"far", est.far}, {"one_in_n", est.one_in_n}, {"terms", terms}};
}

} // namespace covfar
