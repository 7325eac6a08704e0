#pragma once

// Empirical verification metrics: FAR/TAR at a threshold, score quantiles
// for a target FAR, and ROC curves over a FAR grid.
//
// Conventions, pinned here and relied on by the normalization fit:
//  - a comparison is accepted when score >= threshold (ties accept),
//  - threshold_at_far uses the continuous quantile at position
//    (1 - target_far) * (N - 1) of the ascending sort, interpolating
//    linearly between adjacent order statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "covfar/errors.hpp"

namespace covfar {

struct RocPoint {
    double threshold = 0.0;
    double far = 0.0;
    double tar = 0.0;
};

namespace detail {

inline void require_finite_scores(std::span<const double> scores, const char* what) {
    if (scores.empty()) {
        throw Error::validation(std::string(what) + ": score list is empty");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw Error::validation(std::string(what) + ": scores must be finite");
        }
    }
}

inline double accept_rate(std::span<const double> scores, double threshold) {
    std::size_t count = 0;
    for (double s : scores) {
        if (s >= threshold) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(scores.size());
}

// Continuous quantile of an ascending-sorted list at probability p.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const std::size_t n = sorted.size();
    const double h = p * static_cast<double>(n - 1);
    std::size_t k = static_cast<std::size_t>(h);
    if (k >= n - 1) return sorted[n - 1];
    const double frac = h - static_cast<double>(k);
    return sorted[k] + frac * (sorted[k + 1] - sorted[k]);
}

} // namespace detail

inline double empirical_far(std::span<const double> impostor_scores, double threshold) {
    detail::require_finite_scores(impostor_scores, "empirical_far");
    return detail::accept_rate(impostor_scores, threshold);
}

inline double empirical_tar(std::span<const double> genuine_scores, double threshold) {
    detail::require_finite_scores(genuine_scores, "empirical_tar");
    return detail::accept_rate(genuine_scores, threshold);
}

// Same contract as threshold_at_far but requires the caller to pass an
// ascending-sorted list; used by callers that extract many quantiles.
inline double threshold_at_far_sorted(std::span<const double> sorted, double target_far) {
    const std::size_t n = sorted.size();
    if (n < 2) {
        throw Error::validation("threshold_at_far: need at least two impostor scores");
    }
    if (!(target_far > 0.0 && target_far < 1.0)) {
        throw Error::validation("threshold_at_far: target FAR must lie in (0,1)");
    }
    if (target_far * static_cast<double>(n) < 1.0) {
        throw Error::validation(
            "threshold_at_far: insufficient impostor support (need at least " +
            std::to_string(static_cast<long long>(std::ceil(1.0 / target_far))) +
            " scores to resolve FAR=" + std::to_string(target_far) + ", have " +
            std::to_string(n) + ")");
    }
    return detail::quantile_sorted(sorted, 1.0 - target_far);
}

inline double threshold_at_far(std::span<const double> impostor_scores, double target_far) {
    detail::require_finite_scores(impostor_scores, "threshold_at_far");
    std::vector<double> sorted(impostor_scores.begin(), impostor_scores.end());
    std::sort(sorted.begin(), sorted.end());
    return threshold_at_far_sorted(sorted, target_far);
}

// One RocPoint per grid value: threshold from the impostor quantile, then
// the achieved FAR and TAR at that threshold.
inline std::vector<RocPoint> roc_curve(std::span<const double> genuine,
                                       std::span<const double> impostor,
                                       std::span<const double> far_grid) {
    detail::require_finite_scores(genuine, "roc_curve(genuine)");
    detail::require_finite_scores(impostor, "roc_curve(impostor)");
    for (std::size_t i = 0; i < far_grid.size(); ++i) {
        if (!(far_grid[i] > 0.0 && far_grid[i] < 1.0)) {
            throw Error::validation("roc_curve: grid values must lie in (0,1)");
        }
        if (i > 0 && !(far_grid[i] > far_grid[i - 1])) {
            throw Error::validation("roc_curve: grid values must be strictly ascending");
        }
    }

    std::vector<double> sorted_impostor(impostor.begin(), impostor.end());
    std::sort(sorted_impostor.begin(), sorted_impostor.end());

    std::vector<RocPoint> points;
    points.reserve(far_grid.size());
    for (double f : far_grid) {
        RocPoint p;
        p.threshold = threshold_at_far_sorted(sorted_impostor, f);
        p.far = detail::accept_rate(impostor, p.threshold);
        p.tar = detail::accept_rate(genuine, p.threshold);
        points.push_back(p);
    }
    return points;
}

} // namespace covfar
