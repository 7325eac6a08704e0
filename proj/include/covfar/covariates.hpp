#pragma once

// Categorical covariate handling: the default covariate spec (levels and
// reference categories), metadata binning, sensor x collection group keys,
// dummy-coded design matrices and scenario vectors.
//
// All bin edges are half-open [lo, hi): a value on an edge belongs to the
// upper bin (90 px -> ">90 Pix", 3.0 m/s -> "3-6 M/S").

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "covfar/csv.hpp"
#include "covfar/errors.hpp"
#include "covfar/normalization.hpp"

namespace covfar {

struct Covariate {
    std::string name;
    std::vector<std::string> levels;   // first level is the reference

    const std::string& reference() const { return levels.front(); }
    bool has_level(std::string_view level) const {
        for (const auto& l : levels) {
            if (l == level) return true;
        }
        return false;
    }
};

struct CovariateSpec {
    std::vector<Covariate> covariates;

    const Covariate* find(std::string_view name) const {
        for (const auto& c : covariates) {
            if (c.name == name) return &c;
        }
        return nullptr;
    }

    static CovariateSpec defaults();
    // Default spec with the Algorithm levels replaced (first tag = reference).
    static CovariateSpec with_algorithms(const std::vector<std::string>& algorithms);
};

// One chosen level per covariate; covariates not named stay at reference.
struct Scenario {
    std::map<std::string, std::string> choices;
};

namespace covnames {
inline constexpr const char* algorithm = "Algorithm";
inline constexpr const char* has_gait = "Has Gait";
inline constexpr const char* has_turbulence = "Has Turb.";
inline constexpr const char* head_height = "Head Height";
inline constexpr const char* modality = "Modality";
inline constexpr const char* camera_location = "Camera Location";
inline constexpr const char* solar_loading = "Solar Loading";
inline constexpr const char* wind_speed = "Wind Speed";
inline constexpr const char* temperature = "Temperature";
} // namespace covnames

inline CovariateSpec CovariateSpec::defaults() {
    CovariateSpec spec;
    spec.covariates = {
        {covnames::algorithm,
         {"System A", "System B", "System C", "System D", "System E"}},
        {covnames::has_gait, {"False", "True"}},
        {covnames::has_turbulence, {"False", "True"}},
        {covnames::head_height,
         {">90 Pix", "60-90 Pix", "50-60 Pix", "40-50 Pix", "30-40 Pix", "<30 Pix",
          "Restricted"}},
        {covnames::modality, {"Face", "Body"}},
        {covnames::camera_location,
         {"Ctrl", "Short Range", "Medium Range", "Long Range", "Elevated", "Uav"}},
        {covnames::solar_loading,
         {"0-300 W/M$^2$", "300-600 W/M$^2$", "600-900 W/M$^2$", "Above 900 W/M$^2$"}},
        {covnames::wind_speed, {"0-3 M/S", "3-6 M/S", "6-9 M/S", "9-12 M/S"}},
        {covnames::temperature, {"Below 0 C", "0-10 C", "10-20 C", "20-30 C", "30-40 C"}},
    };
    return spec;
}

inline CovariateSpec CovariateSpec::with_algorithms(const std::vector<std::string>& algorithms) {
    CovariateSpec spec = defaults();
    if (algorithms.empty()) {
        throw Error::validation("CovariateSpec: algorithm list must not be empty");
    }
    spec.covariates.front().levels = algorithms;
    return spec;
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

inline std::string bin_head_height(std::optional<double> pixels, bool face_restricted) {
    if (face_restricted || !pixels.has_value()) return "Restricted";
    if (!(std::isfinite(*pixels) && *pixels >= 0.0)) {
        throw Error::validation("bin_head_height: pixel height must be finite and >= 0");
    }
    const double px = *pixels;
    if (px >= 90.0) return ">90 Pix";
    if (px >= 60.0) return "60-90 Pix";
    if (px >= 50.0) return "50-60 Pix";
    if (px >= 40.0) return "40-50 Pix";
    if (px >= 30.0) return "30-40 Pix";
    return "<30 Pix";
}

inline std::string bin_solar(double wm2) {
    if (!(std::isfinite(wm2) && wm2 >= 0.0)) {
        throw Error::validation("bin_solar: irradiance must be finite and >= 0");
    }
    if (wm2 >= 900.0) return "Above 900 W/M$^2$";
    if (wm2 >= 600.0) return "600-900 W/M$^2$";
    if (wm2 >= 300.0) return "300-600 W/M$^2$";
    return "0-300 W/M$^2$";
}

inline std::string bin_wind(double ms) {
    if (!(std::isfinite(ms) && ms >= 0.0)) {
        throw Error::validation("bin_wind: wind speed must be finite and >= 0");
    }
    if (ms >= 12.0) {
        throw Error::validation("bin_wind: wind speed " + csv::to_string(ms) +
                                " m/s is out of range (no bin at or above 12 m/s)");
    }
    if (ms >= 9.0) return "9-12 M/S";
    if (ms >= 6.0) return "6-9 M/S";
    if (ms >= 3.0) return "3-6 M/S";
    return "0-3 M/S";
}

inline std::string bin_temperature(double c) {
    if (!std::isfinite(c)) {
        throw Error::validation("bin_temperature: temperature must be finite");
    }
    if (c >= 40.0) {
        throw Error::validation("bin_temperature: temperature " + csv::to_string(c) +
                                " C is out of range (no bin at or above 40 C)");
    }
    if (c >= 30.0) return "30-40 C";
    if (c >= 20.0) return "20-30 C";
    if (c >= 10.0) return "10-20 C";
    if (c >= 0.0) return "0-10 C";
    return "Below 0 C";
}

inline std::string camera_location_level(CameraLocation loc) {
    switch (loc) {
    case CameraLocation::ctrl: return "Ctrl";
    case CameraLocation::short_range: return "Short Range";
    case CameraLocation::medium_range: return "Medium Range";
    case CameraLocation::long_range: return "Long Range";
    case CameraLocation::elevated: return "Elevated";
    case CameraLocation::uav: return "Uav";
    }
    return "Ctrl";
}

inline std::string modality_level(Modality m) { return m == Modality::face ? "Face" : "Body"; }

inline std::string make_group_key(const std::string& sensor_model,
                                  const std::string& collection_id) {
    if (sensor_model.empty() || collection_id.empty()) {
        throw Error::validation("make_group_key: sensor model and collection id must be non-empty");
    }
    return sensor_model + " - " + collection_id;
}

// Level of one covariate for one scored row. Weather covariates require the
// field to be present (rows should have passed the drop rules first).
inline std::string row_level(const std::string& covariate, const ScoreRow& row) {
    const ProbeMetadata& p = row.probe;
    const std::string context = "probe '" + p.probe_id + "'";
    if (covariate == covnames::algorithm) return row.algorithm;
    if (covariate == covnames::has_gait) return p.has_gait ? "True" : "False";
    if (covariate == covnames::has_turbulence) return p.has_turbulence ? "True" : "False";
    if (covariate == covnames::head_height) return bin_head_height(p.head_height_px, p.face_restricted);
    if (covariate == covnames::modality) return modality_level(p.modality);
    if (covariate == covnames::camera_location) return camera_location_level(p.camera_location);
    if (covariate == covnames::solar_loading) {
        if (!p.solar_wm2) throw Error::validation(context + ": missing solar_wm2");
        return bin_solar(*p.solar_wm2);
    }
    if (covariate == covnames::wind_speed) {
        if (!p.wind_ms) throw Error::validation(context + ": missing wind_ms");
        return bin_wind(*p.wind_ms);
    }
    if (covariate == covnames::temperature) {
        if (!p.temperature_c) throw Error::validation(context + ": missing temperature_c");
        return bin_temperature(*p.temperature_c);
    }
    throw Error::validation("unknown covariate '" + covariate + "'");
}

// ---------------------------------------------------------------------------
// Design matrix
// ---------------------------------------------------------------------------

struct DesignColumn {
    std::string name;        // "Intercept" or "Covariate=Level"
    std::string covariate;   // "Intercept" for the intercept column
    std::string level;       // "-" for the intercept column
};

// Intercept first, then one column per non-reference level in spec order.
inline std::vector<DesignColumn> design_columns(const CovariateSpec& spec) {
    std::vector<DesignColumn> cols;
    cols.push_back({"Intercept", "Intercept", "-"});
    for (const auto& cov : spec.covariates) {
        for (std::size_t i = 1; i < cov.levels.size(); ++i) {
            cols.push_back({cov.name + "=" + cov.levels[i], cov.name, cov.levels[i]});
        }
    }
    return cols;
}

struct DesignMatrix {
    std::vector<double> y;                 // est_log_far per row
    std::vector<double> x;                 // row-major, n rows by columns.size()
    std::vector<DesignColumn> columns;
    std::vector<std::string> group_labels; // distinct labels, first-appearance order
    std::vector<std::size_t> group_index;  // per row, index into group_labels
    CovariateSpec spec;

    std::size_t n_rows() const { return y.size(); }
    std::size_t n_cols() const { return columns.size(); }
    double at(std::size_t row, std::size_t col) const { return x[row * columns.size() + col]; }
};

namespace detail {

// Fills one dummy-coded row. `out` must hold design_columns(spec).size()
// zeros; offsets[c] is the column of covariate c's first non-reference level.
inline void encode_levels(const CovariateSpec& spec,
                          std::span<const std::string> levels,
                          const std::string& context,
                          std::span<double> out) {
    out[0] = 1.0;
    std::size_t col = 1;
    for (std::size_t c = 0; c < spec.covariates.size(); ++c) {
        const Covariate& cov = spec.covariates[c];
        const std::string& level = levels[c];
        bool found = false;
        for (std::size_t i = 0; i < cov.levels.size(); ++i) {
            if (cov.levels[i] == level) {
                if (i > 0) out[col + i - 1] = 1.0;
                found = true;
                break;
            }
        }
        if (!found) {
            throw Error::validation(context + ": level '" + level + "' of covariate '" +
                                    cov.name + "' is not in the covariate spec");
        }
        col += cov.levels.size() - 1;
    }
}

} // namespace detail

// Builds the fixed-effects design from the genuine rows of a normalized
// table: y is est_log_far, X is dummy coded per the covariate spec, groups
// come from sensor_model x collection_id. Row order follows the input table.
inline DesignMatrix build_design(const NormalizedTable& table, const CovariateSpec& spec) {
    DesignMatrix design;
    design.spec = spec;
    design.columns = design_columns(spec);
    const std::size_t p = design.columns.size();

    std::map<std::string, std::size_t> group_of;
    std::vector<std::string> levels(spec.covariates.size());

    for (const auto& row : table.rows) {
        if (!row.score.is_genuine) continue;
        const std::string context = "probe '" + row.score.probe.probe_id + "'";
        for (std::size_t c = 0; c < spec.covariates.size(); ++c) {
            levels[c] = row_level(spec.covariates[c].name, row.score);
        }
        design.y.push_back(row.est_log_far);
        design.x.resize(design.x.size() + p, 0.0);
        detail::encode_levels(spec, levels, context,
                              std::span<double>(design.x).last(p));

        const std::string key =
            make_group_key(row.score.probe.sensor_model, row.score.probe.collection_id);
        auto [it, inserted] = group_of.try_emplace(key, design.group_labels.size());
        if (inserted) design.group_labels.push_back(key);
        design.group_index.push_back(it->second);
    }
    return design;
}

// Encodes a scenario as a single design row (reference levels when absent).
inline std::vector<double> scenario_vector(const CovariateSpec& spec, const Scenario& scenario) {
    for (const auto& [name, level] : scenario.choices) {
        const Covariate* cov = spec.find(name);
        if (cov == nullptr) {
            throw Error::validation("scenario: unknown covariate '" + name + "'");
        }
        if (!cov->has_level(level)) {
            throw Error::validation("scenario: covariate '" + name + "' has no level '" + level +
                                    "'");
        }
    }
    std::vector<std::string> levels;
    levels.reserve(spec.covariates.size());
    for (const auto& cov : spec.covariates) {
        auto it = scenario.choices.find(cov.name);
        levels.push_back(it == scenario.choices.end() ? cov.reference() : it->second);
    }
    std::vector<double> out(design_columns(spec).size(), 0.0);
    detail::encode_levels(spec, levels, "scenario", out);
    return out;
}

// ---------------------------------------------------------------------------
// Per-level row counts (used for the Num.Probes column of reports)
// ---------------------------------------------------------------------------

struct LevelCount {
    std::string covariate;
    std::string level;
    long long count = 0;
};

struct LevelCounts {
    std::vector<LevelCount> counts;   // spec order, every level present

    const LevelCount* find(std::string_view covariate, std::string_view level) const {
        for (const auto& c : counts) {
            if (c.covariate == covariate && c.level == level) return &c;
        }
        return nullptr;
    }
};

// Counts genuine rows per covariate level (the rows build_design would use).
inline LevelCounts count_levels(const NormalizedTable& table, const CovariateSpec& spec) {
    LevelCounts out;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const auto& cov : spec.covariates) {
        for (const auto& level : cov.levels) {
            index.emplace(std::make_pair(cov.name, level), out.counts.size());
            out.counts.push_back({cov.name, level, 0});
        }
    }
    for (const auto& row : table.rows) {
        if (!row.score.is_genuine) continue;
        for (const auto& cov : spec.covariates) {
            const std::string level = row_level(cov.name, row.score);
            auto it = index.find(std::make_pair(cov.name, level));
            if (it == index.end()) {
                throw Error::validation("probe '" + row.score.probe.probe_id + "': level '" +
                                        level + "' of covariate '" + cov.name +
                                        "' is not in the covariate spec");
            }
            ++out.counts[it->second].count;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Names as they appear in coefficient tables vs. on the command line
// ---------------------------------------------------------------------------

// The short covariate and level spellings used in running text and on the
// command line, resolved to the canonical table spellings.
inline std::string canonical_covariate_name(std::string_view name) {
    if (name == "Head Hgt") return covnames::head_height;
    if (name == "Camera Loc") return covnames::camera_location;
    if (name == "Solar Load") return covnames::solar_loading;
    if (name == "Has Turb") return covnames::has_turbulence;
    return std::string(name);
}

inline std::string canonical_level_name(std::string_view covariate, std::string_view level) {
    if (covariate == covnames::camera_location) {
        if (level == "Short-Range") return "Short Range";
        if (level == "Med Range" || level == "Med-Range") return "Medium Range";
        if (level == "Long-Range") return "Long Range";
    }
    if (covariate == covnames::solar_loading) {
        if (level == "0-300") return "0-300 W/M$^2$";
        if (level == "300-600") return "300-600 W/M$^2$";
        if (level == "600-900") return "600-900 W/M$^2$";
        if (level == "Above 900") return "Above 900 W/M$^2$";
    }
    return std::string(level);
}

// Parses one "Covariate=Level" assignment into a scenario entry.
inline void add_scenario_assignment(Scenario& scenario, std::string_view assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 >= assignment.size()) {
        throw Error::validation("scenario: expected \"Covariate=Level\", got '" +
                                std::string(assignment) + "'");
    }
    const std::string name = canonical_covariate_name(assignment.substr(0, eq));
    const std::string level = canonical_level_name(name, assignment.substr(eq + 1));
    if (scenario.choices.contains(name)) {
        throw Error::validation("scenario: covariate '" + name + "' set more than once");
    }
    scenario.choices.emplace(name, level);
}

// ---------------------------------------------------------------------------
// JSON config form of a covariate spec
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const CovariateSpec& spec) {
    nlohmann::json covs = nlohmann::json::array();
    for (const auto& cov : spec.covariates) {
        covs.push_back({{"name", cov.name}, {"levels", cov.levels}});
    }
    return nlohmann::json{{"covariates", covs},
                          {"grouping", "sensor_model x collection_id"}};
}

inline CovariateSpec covariate_spec_from_json(const nlohmann::json& j) {
    CovariateSpec spec;
    for (const auto& cov : j.at("covariates")) {
        Covariate c;
        c.name = cov.at("name").get<std::string>();
        c.levels = cov.at("levels").get<std::vector<std::string>>();
        if (c.name.empty() || c.levels.empty()) {
            throw Error::validation("covariate spec: covariates need a name and at least one level");
        }
        for (std::size_t i = 0; i < c.levels.size(); ++i) {
            for (std::size_t k = i + 1; k < c.levels.size(); ++k) {
                if (c.levels[i] == c.levels[k]) {
                    throw Error::validation("covariate spec: duplicate level '" + c.levels[i] +
                                            "' in covariate '" + c.name + "'");
                }
            }
        }
        spec.covariates.push_back(std::move(c));
    }
    if (spec.covariates.empty()) {
        throw Error::validation("covariate spec: needs at least one covariate");
    }
    return spec;
}

} // namespace covfar
