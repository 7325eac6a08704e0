#pragma once

// Per-algorithm tail normalization: fit log10(FAR) = m * score + b through
// anchor points extracted from the impostor tail, then map raw scores into
// the common log10-FAR space. Anchors default to FAR = 1e-6 .. 1e-2; scores
// mapping outside that region are still transformed but flagged as
// extrapolated.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "covfar/data_model.hpp"
#include "covfar/errors.hpp"
#include "covfar/metrics.hpp"
#include "covfar/stats.hpp"

namespace covfar {

struct Anchor {
    double far = 0.0;
    double score = 0.0;
};

struct NormalizationMap {
    std::string algorithm;
    double m = 0.0;        // log10-FAR per score unit, negative for similarity scores
    double b = 0.0;
    std::vector<Anchor> anchors;
    double fit_rmse = 0.0;
};

inline const std::vector<double>& default_anchor_fars() {
    static const std::vector<double> fars = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
    return fars;
}

struct NormOptions {
    std::vector<double> anchor_fars = default_anchor_fars();
    // When set, anchors the impostor sample cannot resolve are dropped with a
    // warning instead of failing, as long as at least three anchors remain.
    bool drop_unresolvable = false;
    std::vector<std::string>* warnings = nullptr;
};

struct NormalizedScore {
    double est_log_far = 0.0;
    bool extrapolated = false;
};

struct NormalizedRow {
    ScoreRow score;
    double est_log_far = 0.0;
    bool extrapolated = false;
};

struct NormalizedTable {
    std::vector<NormalizedRow> rows;
    std::vector<NormalizationMap> maps;   // one per algorithm, first-appearance order

    const NormalizationMap* find_map(const std::string& algorithm) const {
        for (const auto& m : maps) {
            if (m.algorithm == algorithm) return &m;
        }
        return nullptr;
    }
};

inline NormalizationMap fit_tail_map(std::span<const double> impostor_scores,
                                     const std::string& algorithm,
                                     const NormOptions& options = {}) {
    if (options.anchor_fars.size() < 2) {
        throw Error::validation("fit_tail_map(" + algorithm + "): need at least two anchor FARs");
    }
    std::vector<double> fars = options.anchor_fars;
    std::sort(fars.begin(), fars.end());
    for (double f : fars) {
        if (!(f > 0.0 && f < 1.0)) {
            throw Error::validation("fit_tail_map(" + algorithm + "): anchor FARs must lie in (0,1)");
        }
    }

    detail::require_finite_scores(impostor_scores, "fit_tail_map");
    const double n = static_cast<double>(impostor_scores.size());
    if (options.drop_unresolvable) {
        std::vector<double> kept;
        for (double f : fars) {
            if (f * n >= 1.0) {
                kept.push_back(f);
            } else if (options.warnings) {
                options.warnings->push_back("fit_tail_map(" + algorithm + "): dropping anchor FAR=" +
                                            csv::to_string(f) + ", unresolvable with " +
                                            std::to_string(impostor_scores.size()) +
                                            " impostor scores");
            }
        }
        if (kept.size() < 3) {
            throw Error::validation("fit_tail_map(" + algorithm +
                                    "): fewer than three resolvable anchors; provide more impostor "
                                    "scores or coarser anchors");
        }
        fars = std::move(kept);
    } else if (fars.front() * n < 1.0) {
        throw Error::validation("fit_tail_map(" + algorithm +
                                "): insufficient impostor support for anchor FAR=" +
                                csv::to_string(fars.front()) + " (need at least " +
                                std::to_string(static_cast<long long>(std::ceil(1.0 / fars.front()))) +
                                " scores, have " + std::to_string(impostor_scores.size()) + ")");
    }

    std::vector<double> sorted(impostor_scores.begin(), impostor_scores.end());
    std::sort(sorted.begin(), sorted.end());

    NormalizationMap map;
    map.algorithm = algorithm;
    std::vector<double> xs, ys;
    for (double f : fars) {
        Anchor a;
        a.far = f;
        a.score = threshold_at_far_sorted(sorted, f);
        map.anchors.push_back(a);
        xs.push_back(a.score);
        ys.push_back(std::log10(f));
    }

    LineFit fit;
    try {
        fit = fit_line(xs, ys);
    } catch (const Error&) {
        throw Error::numerical("fit_tail_map(" + algorithm +
                               "): degenerate fit, zero score variance across anchors");
    }
    if (!(fit.slope < 0.0)) {
        throw Error::numerical("fit_tail_map(" + algorithm + "): orientation error, fitted slope " +
                               csv::to_string(fit.slope) +
                               " is not negative (higher scores must mean stronger matches)");
    }
    map.m = fit.slope;
    map.b = fit.intercept;
    map.fit_rmse = fit.rmse;
    return map;
}

inline NormalizedScore apply_norm(const NormalizationMap& map, double raw_score) {
    NormalizedScore out;
    out.est_log_far = map.m * raw_score + map.b;
    if (!map.anchors.empty()) {
        const double lo = std::log10(map.anchors.front().far);
        const double hi = std::log10(map.anchors.back().far);
        out.extrapolated = out.est_log_far < lo || out.est_log_far > hi;
    }
    return out;
}

inline NormalizedTable normalize_table(const ScoreTable& table, const NormOptions& options = {}) {
    std::vector<std::string> algorithms;
    std::map<std::string, std::vector<double>> impostors;
    for (const auto& row : table.rows) {
        if (!impostors.contains(row.algorithm)) {
            algorithms.push_back(row.algorithm);
            impostors.emplace(row.algorithm, std::vector<double>{});
        }
        if (!row.is_genuine) impostors[row.algorithm].push_back(row.raw_score);
    }

    NormalizedTable out;
    std::map<std::string, const NormalizationMap*> by_algorithm;
    for (const auto& algorithm : algorithms) {
        out.maps.push_back(fit_tail_map(impostors.at(algorithm), algorithm, options));
    }
    for (const auto& m : out.maps) by_algorithm.emplace(m.algorithm, &m);

    out.rows.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        NormalizedRow nr;
        nr.score = row;
        const NormalizedScore ns = apply_norm(*by_algorithm.at(row.algorithm), row.raw_score);
        nr.est_log_far = ns.est_log_far;
        nr.extrapolated = ns.extrapolated;
        out.rows.push_back(std::move(nr));
    }
    return out;
}

inline nlohmann::json to_json(const NormalizationMap& map) {
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& a : map.anchors) {
        anchors.push_back({{"far", a.far}, {"score", a.score}});
    }
    return nlohmann::json{{"algorithm", map.algorithm},
                          {"m", map.m},
                          {"b", map.b},
                          {"anchors", anchors},
                          {"fit_rmse", map.fit_rmse}};
}

inline NormalizationMap normalization_map_from_json(const nlohmann::json& j) {
    NormalizationMap map;
    map.algorithm = j.at("algorithm").get<std::string>();
    map.m = j.at("m").get<double>();
    map.b = j.at("b").get<double>();
    map.fit_rmse = j.at("fit_rmse").get<double>();
    for (const auto& a : j.at("anchors")) {
        map.anchors.push_back({a.at("far").get<double>(), a.at("score").get<double>()});
    }
    return map;
}

} // namespace covfar
