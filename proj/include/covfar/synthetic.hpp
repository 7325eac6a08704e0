#pragma once

// Synthetic score tables with known ground truth. Genuine scores are drawn
// in est-log-FAR space as X beta + u_group + eps and mapped back to raw
// scores through the inverse of a configured per-algorithm tail line, so the
// pipeline's own normalization is exercised nontrivially. Impostor scores
// are drawn with survival function 10^(m s + b), which makes the tail line
// exactly recoverable. The generator is single threaded and fully
// determined by the seed (SplitMix64 stream).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "covfar/covariates.hpp"
#include "covfar/data_model.hpp"
#include "covfar/errors.hpp"
#include "covfar/rng.hpp"

namespace covfar {

struct TailLine {
    double m = -1.0;   // log10-FAR per score unit
    double b = 0.0;
};

struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t n_probes = 1500;
    std::size_t n_groups = 18;
    std::size_t n_subjects = 120;
    std::size_t n_gallery_extras = 300;   // impostor gallery id pool
    std::size_t impostors_per_probe = 4;  // per algorithm
    double group_sd = 1.0;
    double residual_sd = 2.0;
    double missing_weather_frac = 0.0;
    double unspecified_sex_frac = 0.0;
    std::vector<std::string> algorithms = {"System A", "System B", "System C", "System D",
                                           "System E"};
    std::vector<TailLine> tails;                   // per algorithm; defaults applied when empty
    CovariateSpec spec = CovariateSpec::defaults();
    std::map<std::string, double> true_beta;       // keyed by design column name
    std::map<std::string, std::vector<double>> level_frequencies;   // per covariate

    static SynthConfig defaults();
};

struct GroundTruth {
    std::uint64_t seed = 0;
    std::map<std::string, double> beta;
    double group_sd = 0.0;
    double residual_sd = 0.0;
    std::vector<std::pair<std::string, double>> group_effects;
    std::map<std::string, TailLine> tails;
    std::size_t missing_weather_probes = 0;
    std::size_t unspecified_sex_probes = 0;
    CovariateSpec spec;

    double group_effect(const std::string& label) const {
        for (const auto& [name, effect] : group_effects) {
            if (name == label) return effect;
        }
        throw Error::validation("ground truth: unknown group '" + label + "'");
    }
};

struct SynthResult {
    ScoreTable table;
    GroundTruth truth;
};

inline SynthConfig SynthConfig::defaults() {
    SynthConfig cfg;
    cfg.tails = {{-1.0, 0.0}, {-0.5, -1.0}, {-2.0, 1.0}, {-0.8, 0.5}, {-1.5, -0.5}};
    cfg.true_beta = {
        {"Intercept", -7.0},
        {"Algorithm=System B", 0.3},
        {"Algorithm=System C", 0.45},
        {"Algorithm=System D", 0.7},
        {"Algorithm=System E", 0.4},
        {"Has Gait=True", -0.3},
        {"Has Turb.=True", 0.05},
        {"Head Height=60-90 Pix", 0.5},
        {"Head Height=50-60 Pix", 0.5},
        {"Head Height=40-50 Pix", 0.7},
        {"Head Height=30-40 Pix", 1.3},
        {"Head Height=<30 Pix", 1.9},
        {"Head Height=Restricted", 2.2},
        {"Modality=Body", 0.75},
        {"Camera Location=Short Range", -0.35},
        {"Camera Location=Medium Range", 0.95},
        {"Camera Location=Long Range", 1.95},
        {"Camera Location=Elevated", 0.2},
        {"Camera Location=Uav", 1.0},
        {"Solar Loading=300-600 W/M$^2$", -0.2},
        {"Solar Loading=600-900 W/M$^2$", 0.5},
        {"Solar Loading=Above 900 W/M$^2$", 0.85},
        {"Wind Speed=3-6 M/S", -0.15},
        {"Wind Speed=6-9 M/S", -0.05},
        {"Wind Speed=9-12 M/S", 0.25},
        {"Temperature=0-10 C", 0.1},
        {"Temperature=10-20 C", 0.35},
        {"Temperature=20-30 C", -0.35},
        {"Temperature=30-40 C", -0.15},
    };
    cfg.level_frequencies = {
        {covnames::has_gait, {0.60, 0.40}},
        {covnames::has_turbulence, {0.67, 0.33}},
        {covnames::head_height, {0.28, 0.08, 0.08, 0.18, 0.11, 0.03, 0.24}},
        {covnames::modality, {0.26, 0.74}},
        {covnames::camera_location, {0.18, 0.05, 0.25, 0.24, 0.26, 0.02}},
        {covnames::solar_loading, {0.47, 0.18, 0.17, 0.18}},
        {covnames::wind_speed, {0.63, 0.30, 0.06, 0.01}},
        {covnames::temperature, {0.10, 0.20, 0.20, 0.43, 0.07}},
    };
    return cfg;
}

namespace detail {

inline std::string zero_padded(const char* prefix, std::size_t value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
    return buf;
}

inline std::size_t draw_level(SplitMix64& rng, std::span<const double> freqs) {
    const double u = rng.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        acc += freqs[i];
        if (u < acc) return i;
    }
    return freqs.size() - 1;
}

// Materializes a numeric value inside the half-open interval of a level so
// binning recovers the drawn level exactly.
inline void apply_head_height(ProbeMetadata& p, const std::string& level, SplitMix64& rng) {
    if (level == "Restricted") {
        p.face_restricted = true;
        p.head_height_px.reset();
        return;
    }
    p.face_restricted = false;
    if (level == ">90 Pix") p.head_height_px = rng.uniform(90.0, 180.0);
    else if (level == "60-90 Pix") p.head_height_px = rng.uniform(60.0, 90.0);
    else if (level == "50-60 Pix") p.head_height_px = rng.uniform(50.0, 60.0);
    else if (level == "40-50 Pix") p.head_height_px = rng.uniform(40.0, 50.0);
    else if (level == "30-40 Pix") p.head_height_px = rng.uniform(30.0, 40.0);
    else p.head_height_px = rng.uniform(8.0, 30.0);
}

inline void apply_solar(ProbeMetadata& p, const std::string& level, SplitMix64& rng) {
    if (level == "0-300 W/M$^2$") p.solar_wm2 = rng.uniform(0.0, 300.0);
    else if (level == "300-600 W/M$^2$") p.solar_wm2 = rng.uniform(300.0, 600.0);
    else if (level == "600-900 W/M$^2$") p.solar_wm2 = rng.uniform(600.0, 900.0);
    else p.solar_wm2 = rng.uniform(900.0, 1200.0);
}

inline void apply_wind(ProbeMetadata& p, const std::string& level, SplitMix64& rng) {
    if (level == "0-3 M/S") p.wind_ms = rng.uniform(0.0, 3.0);
    else if (level == "3-6 M/S") p.wind_ms = rng.uniform(3.0, 6.0);
    else if (level == "6-9 M/S") p.wind_ms = rng.uniform(6.0, 9.0);
    else p.wind_ms = rng.uniform(9.0, 12.0);
}

inline void apply_temperature(ProbeMetadata& p, const std::string& level, SplitMix64& rng) {
    if (level == "Below 0 C") p.temperature_c = rng.uniform(-15.0, 0.0);
    else if (level == "0-10 C") p.temperature_c = rng.uniform(0.0, 10.0);
    else if (level == "10-20 C") p.temperature_c = rng.uniform(10.0, 20.0);
    else if (level == "20-30 C") p.temperature_c = rng.uniform(20.0, 30.0);
    else p.temperature_c = rng.uniform(30.0, 40.0);
}

inline CameraLocation camera_location_from_level(const std::string& level) {
    if (level == "Ctrl") return CameraLocation::ctrl;
    if (level == "Short Range") return CameraLocation::short_range;
    if (level == "Medium Range") return CameraLocation::medium_range;
    if (level == "Long Range") return CameraLocation::long_range;
    if (level == "Elevated") return CameraLocation::elevated;
    return CameraLocation::uav;
}

inline void validate_config(const SynthConfig& cfg) {
    if (cfg.n_probes == 0 || cfg.n_groups == 0 || cfg.n_subjects == 0 ||
        cfg.n_gallery_extras == 0) {
        throw Error::validation("synthetic: probe/group/subject/gallery counts must be positive");
    }
    if (cfg.algorithms.empty()) throw Error::validation("synthetic: need at least one algorithm");
    if (!(cfg.residual_sd > 0.0) || !(cfg.group_sd >= 0.0)) {
        throw Error::validation("synthetic: residual_sd must be > 0 and group_sd >= 0");
    }
    if (cfg.missing_weather_frac < 0.0 || cfg.missing_weather_frac > 1.0 ||
        cfg.unspecified_sex_frac < 0.0 || cfg.unspecified_sex_frac > 1.0 ||
        cfg.missing_weather_frac + cfg.unspecified_sex_frac > 1.0) {
        throw Error::validation("synthetic: drop fractions must be in [0,1] and sum to at most 1");
    }
    const auto columns = design_columns(cfg.spec);
    for (const auto& [name, value] : cfg.true_beta) {
        bool known = false;
        for (const auto& col : columns) {
            if (col.name == name) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw Error::validation("synthetic: true_beta key '" + name +
                                    "' is not a design column of the covariate spec");
        }
        (void)value;
    }
    for (const auto& cov : cfg.spec.covariates) {
        if (cov.name == covnames::algorithm) continue;
        auto it = cfg.level_frequencies.find(cov.name);
        if (it == cfg.level_frequencies.end()) {
            throw Error::validation("synthetic: missing level frequencies for covariate '" +
                                    cov.name + "'");
        }
        if (it->second.size() != cov.levels.size()) {
            throw Error::validation("synthetic: level frequencies for '" + cov.name +
                                    "' must have one entry per level");
        }
        double sum = 0.0;
        for (double f : it->second) {
            if (f < 0.0) throw Error::validation("synthetic: negative level frequency");
            sum += f;
        }
        if (std::fabs(sum - 1.0) > 1e-9) {
            throw Error::validation("synthetic: level frequencies for '" + cov.name +
                                    "' must sum to 1");
        }
    }
}

} // namespace detail

inline SynthResult generate(const SynthConfig& config) {
    SynthConfig cfg = config;
    if (cfg.tails.empty()) {
        const SynthConfig defaults = SynthConfig::defaults();
        for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
            cfg.tails.push_back(defaults.tails[i % defaults.tails.size()]);
        }
    }
    if (cfg.tails.size() != cfg.algorithms.size()) {
        throw Error::validation("synthetic: need one tail line per algorithm");
    }
    for (const auto& tail : cfg.tails) {
        if (!(tail.m < 0.0)) {
            throw Error::validation("synthetic: tail slopes must be negative");
        }
    }
    detail::validate_config(cfg);

    SplitMix64 rng(cfg.seed);
    SynthResult result;
    GroundTruth& truth = result.truth;
    truth.seed = cfg.seed;
    truth.beta = cfg.true_beta;
    truth.group_sd = cfg.group_sd;
    truth.residual_sd = cfg.residual_sd;
    truth.spec = cfg.spec;

    // Groups are sensor x collection pairs.
    std::vector<ProbeMetadata> group_ids(cfg.n_groups);
    for (std::size_t i = 0; i < cfg.n_groups; ++i) {
        std::string sensor = detail::zero_padded("CAM-", i / 4 + 1, 2);
        std::string collection = "BGC" + std::to_string(i % 4 + 1);
        group_ids[i].sensor_model = sensor;
        group_ids[i].collection_id = collection;
        truth.group_effects.emplace_back(make_group_key(sensor, collection),
                                         rng.normal(0.0, cfg.group_sd));
    }
    for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
        truth.tails.emplace(cfg.algorithms[i], cfg.tails[i]);
    }

    auto beta_of = [&](const std::string& column) {
        auto it = cfg.true_beta.find(column);
        return it == cfg.true_beta.end() ? 0.0 : it->second;
    };
    const double intercept = beta_of("Intercept");

    // Per-probe metadata and drawn levels (algorithm excluded).
    struct ProbeDraw {
        ProbeMetadata meta;
        std::size_t group = 0;
        double level_sum = 0.0;   // sum of non-algorithm level coefficients
    };
    std::vector<ProbeDraw> probes(cfg.n_probes);
    for (std::size_t i = 0; i < cfg.n_probes; ++i) {
        ProbeDraw& draw = probes[i];
        draw.group = rng.next_below(cfg.n_groups);
        ProbeMetadata& meta = draw.meta;
        meta.probe_id = detail::zero_padded("P", i + 1, 6);
        meta.subject_id = detail::zero_padded("S", i % cfg.n_subjects + 1, 4);
        meta.sensor_model = group_ids[draw.group].sensor_model;
        meta.collection_id = group_ids[draw.group].collection_id;
        for (const auto& cov : cfg.spec.covariates) {
            if (cov.name == covnames::algorithm) continue;
            const auto& freqs = cfg.level_frequencies.at(cov.name);
            const std::size_t idx = detail::draw_level(rng, freqs);
            const std::string& level = cov.levels[idx];
            if (idx > 0) draw.level_sum += beta_of(cov.name + "=" + level);
            if (cov.name == covnames::has_gait) meta.has_gait = level == "True";
            else if (cov.name == covnames::has_turbulence) meta.has_turbulence = level == "True";
            else if (cov.name == covnames::head_height) detail::apply_head_height(meta, level, rng);
            else if (cov.name == covnames::modality)
                meta.modality = level == "Face" ? Modality::face : Modality::body;
            else if (cov.name == covnames::camera_location)
                meta.camera_location = detail::camera_location_from_level(level);
            else if (cov.name == covnames::solar_loading) detail::apply_solar(meta, level, rng);
            else if (cov.name == covnames::wind_speed) detail::apply_wind(meta, level, rng);
            else if (cov.name == covnames::temperature) detail::apply_temperature(meta, level, rng);
            else {
                throw Error::validation("synthetic: cannot materialize metadata for covariate '" +
                                        cov.name + "'");
            }
        }
        meta.subject_sex = rng.next_double() < 0.5 ? "female" : "male";
    }

    // Disjoint drop-rule subsets with exact sizes, chosen by seeded shuffle.
    const std::size_t n_weather =
        static_cast<std::size_t>(std::llround(cfg.missing_weather_frac * cfg.n_probes));
    const std::size_t n_sex =
        static_cast<std::size_t>(std::llround(cfg.unspecified_sex_frac * cfg.n_probes));
    std::vector<std::size_t> order(cfg.n_probes);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.next_below(i)]);
    }
    for (std::size_t k = 0; k < n_weather; ++k) {
        ProbeMetadata& meta = probes[order[k]].meta;
        switch (k % 3) {
        case 0: meta.solar_wm2.reset(); break;
        case 1: meta.wind_ms.reset(); break;
        default: meta.temperature_c.reset(); break;
        }
    }
    for (std::size_t k = n_weather; k < n_weather + n_sex; ++k) {
        probes[order[k]].meta.subject_sex = "unspecified";
    }
    truth.missing_weather_probes = n_weather;
    truth.unspecified_sex_probes = n_sex;

    // Score rows: per probe, per algorithm, one genuine row and
    // impostors_per_probe impostor rows.
    result.table.provenance = {"synthetic(seed=" + std::to_string(cfg.seed) + ")",
                               detail::now_iso8601()};
    result.table.rows.reserve(cfg.n_probes * cfg.algorithms.size() *
                              (1 + cfg.impostors_per_probe));
    for (const auto& draw : probes) {
        for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
            const TailLine tail = cfg.tails[a];
            const std::string& algorithm = cfg.algorithms[a];
            const double alg_coef = a == 0 ? 0.0 : beta_of("Algorithm=" + algorithm);

            ScoreRow genuine;
            genuine.probe = draw.meta;
            genuine.algorithm = algorithm;
            genuine.gallery_subject_id = draw.meta.subject_id;
            genuine.is_genuine = true;
            const double est = intercept + alg_coef + draw.level_sum +
                               truth.group_effects[draw.group].second +
                               rng.normal(0.0, cfg.residual_sd);
            genuine.raw_score = (est - tail.b) / tail.m;
            result.table.rows.push_back(genuine);

            std::vector<std::size_t> picked;
            while (picked.size() < cfg.impostors_per_probe) {
                const std::size_t idx = rng.next_below(cfg.n_gallery_extras);
                bool seen = false;
                for (std::size_t other : picked) seen = seen || other == idx;
                if (!seen) picked.push_back(idx);
            }
            for (std::size_t idx : picked) {
                ScoreRow impostor;
                impostor.probe = draw.meta;
                impostor.algorithm = algorithm;
                impostor.gallery_subject_id = detail::zero_padded("G", idx + 1, 4);
                impostor.is_genuine = false;
                impostor.raw_score = (std::log10(rng.next_double()) - tail.b) / tail.m;
                result.table.rows.push_back(impostor);
            }
        }
    }
    return result;
}

// Design-level generator for exercising the REML fit directly: levels are
// drawn uniformly, y = X beta + u_group + eps.
inline DesignMatrix generate_design(const CovariateSpec& spec, std::size_t n_rows,
                                    std::size_t n_groups, std::span<const double> beta,
                                    double group_sd, double residual_sd, std::uint64_t seed) {
    DesignMatrix design;
    design.spec = spec;
    design.columns = design_columns(spec);
    const std::size_t p = design.columns.size();
    if (beta.size() != p) {
        throw Error::validation("generate_design: beta must have one entry per design column");
    }

    SplitMix64 rng(seed);
    std::vector<double> group_effects(n_groups);
    for (auto& u : group_effects) u = rng.normal(0.0, group_sd);

    std::map<std::size_t, std::size_t> group_map;
    std::vector<std::string> levels(spec.covariates.size());
    design.x.reserve(n_rows * p);
    for (std::size_t i = 0; i < n_rows; ++i) {
        for (std::size_t c = 0; c < spec.covariates.size(); ++c) {
            const auto& cov = spec.covariates[c];
            levels[c] = cov.levels[rng.next_below(cov.levels.size())];
        }
        design.x.resize(design.x.size() + p, 0.0);
        auto row = std::span<double>(design.x).last(p);
        detail::encode_levels(spec, levels, "generate_design", row);

        const std::size_t g = rng.next_below(n_groups);
        auto [it, inserted] = group_map.try_emplace(g, design.group_labels.size());
        if (inserted) design.group_labels.push_back(detail::zero_padded("G", g + 1, 2));
        design.group_index.push_back(it->second);

        double mu = 0.0;
        for (std::size_t j = 0; j < p; ++j) mu += row[j] * beta[j];
        design.y.push_back(mu + group_effects[g] + rng.normal(0.0, residual_sd));
    }
    return design;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const GroundTruth& truth) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& [label, effect] : truth.group_effects) {
        groups.push_back({{"group", label}, {"effect", effect}});
    }
    nlohmann::json tails = nlohmann::json::array();
    for (const auto& [algorithm, tail] : truth.tails) {
        tails.push_back({{"algorithm", algorithm}, {"m", tail.m}, {"b", tail.b}});
    }
    return nlohmann::json{{"seed", truth.seed},
                          {"beta", truth.beta},
                          {"group_sd", truth.group_sd},
                          {"residual_sd", truth.residual_sd},
                          {"group_effects", groups},
                          {"tails", tails},
                          {"missing_weather_probes", truth.missing_weather_probes},
                          {"unspecified_sex_probes", truth.unspecified_sex_probes},
                          {"spec", to_json(truth.spec)}};
}

} // namespace covfar
