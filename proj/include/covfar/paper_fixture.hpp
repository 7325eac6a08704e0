#pragma once

// The published coefficient table, model summary and group-count table,
// embedded verbatim so `predict --paper-coefficients` and report rendering
// work without refitting the restricted source data.

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "covfar/covariates.hpp"
#include "covfar/lmm.hpp"

namespace covfar {

struct ModelSummaryInfo {
    long long n_observations = 0;
    long long n_groups = 0;
    double scale = 0.0;
    double reml_loglik = 0.0;
    bool converged = false;
    long long min_group_size = 0;
    long long max_group_size = 0;
    double mean_group_size = 0.0;
};

struct PaperFixture {
    std::vector<CoefficientStat> coefficients;   // intercept + every level, references zeroed
    LevelCounts counts;                          // Num.Probes per level (as printed)
    double group_variance = 0.0;
    ModelSummaryInfo summary;
    std::vector<std::pair<std::string, long long>> group_counts;   // per sensor x collection
};

namespace detail {

inline CoefficientStat fixture_stat(const char* covariate, const char* level, double coef,
                                    double ci_low, double ci_high, double p) {
    CoefficientStat s;
    s.covariate = covariate;
    s.level = level;
    s.coef = coef;
    s.ci_low = ci_low;
    s.ci_high = ci_high;
    s.p_value = p;
    s.se = (ci_high - ci_low) / (2.0 * 1.959963984540054);
    return s;
}

inline CoefficientStat fixture_reference(const char* covariate, const char* level) {
    CoefficientStat s;
    s.covariate = covariate;
    s.level = level;
    s.is_reference = true;
    s.p_value = std::numeric_limits<double>::quiet_NaN();
    return s;
}

inline PaperFixture build_paper_fixture() {
    using detail::fixture_reference;
    using detail::fixture_stat;
    PaperFixture f;

    f.coefficients = {
        fixture_stat("Intercept", "-", -7.003, -7.340, -6.666, 0.000),
        fixture_reference(covnames::algorithm, "System A"),
        fixture_stat(covnames::algorithm, "System B", 0.273, 0.210, 0.337, 0.000),
        fixture_stat(covnames::algorithm, "System C", 0.447, 0.383, 0.511, 0.000),
        fixture_stat(covnames::algorithm, "System D", 0.692, 0.628, 0.756, 0.000),
        fixture_stat(covnames::algorithm, "System E", 0.407, 0.343, 0.471, 0.000),
        fixture_reference(covnames::has_gait, "False"),
        fixture_stat(covnames::has_gait, "True", -0.283, -0.332, -0.233, 0.000),
        fixture_reference(covnames::has_turbulence, "False"),
        fixture_stat(covnames::has_turbulence, "True", 0.057, -0.012, 0.127, 0.104),
        fixture_reference(covnames::head_height, ">90 Pix"),
        fixture_stat(covnames::head_height, "60-90 Pix", 0.480, 0.384, 0.576, 0.000),
        fixture_stat(covnames::head_height, "50-60 Pix", 0.516, 0.406, 0.625, 0.000),
        fixture_stat(covnames::head_height, "40-50 Pix", 0.673, 0.576, 0.771, 0.000),
        fixture_stat(covnames::head_height, "30-40 Pix", 1.322, 1.216, 1.428, 0.000),
        fixture_stat(covnames::head_height, "<30 Pix", 1.884, 1.730, 2.038, 0.000),
        fixture_stat(covnames::head_height, "Restricted", 2.232, 2.151, 2.313, 0.000),
        fixture_reference(covnames::modality, "Face"),
        fixture_stat(covnames::modality, "Body", 0.742, 0.642, 0.842, 0.000),
        fixture_reference(covnames::camera_location, "Ctrl"),
        fixture_stat(covnames::camera_location, "Short Range", -0.344, -0.489, -0.200, 0.000),
        fixture_stat(covnames::camera_location, "Medium Range", 0.949, 0.792, 1.106, 0.000),
        fixture_stat(covnames::camera_location, "Long Range", 1.952, 1.716, 2.187, 0.000),
        fixture_stat(covnames::camera_location, "Elevated", 0.214, 0.109, 0.318, 0.000),
        fixture_stat(covnames::camera_location, "Uav", 0.999, -0.122, 2.120, 0.081),
        fixture_reference(covnames::solar_loading, "0-300 W/M$^2$"),
        fixture_stat(covnames::solar_loading, "300-600 W/M$^2$", -0.199, -0.266, -0.132, 0.000),
        fixture_stat(covnames::solar_loading, "600-900 W/M$^2$", 0.511, 0.434, 0.588, 0.000),
        fixture_stat(covnames::solar_loading, "Above 900 W/M$^2$", 0.868, 0.791, 0.945, 0.000),
        fixture_reference(covnames::wind_speed, "0-3 M/S"),
        fixture_stat(covnames::wind_speed, "3-6 M/S", -0.156, -0.213, -0.099, 0.000),
        fixture_stat(covnames::wind_speed, "6-9 M/S", -0.043, -0.145, 0.059, 0.412),
        fixture_stat(covnames::wind_speed, "9-12 M/S", 0.265, 0.013, 0.516, 0.039),
        fixture_reference(covnames::temperature, "Below 0 C"),
        fixture_stat(covnames::temperature, "0-10 C", 0.114, 0.031, 0.197, 0.007),
        fixture_stat(covnames::temperature, "10-20 C", 0.333, 0.185, 0.481, 0.000),
        fixture_stat(covnames::temperature, "20-30 C", -0.342, -0.501, -0.183, 0.000),
        fixture_stat(covnames::temperature, "30-40 C", -0.143, -0.329, 0.043, 0.132),
    };

    f.counts.counts = {
        {covnames::algorithm, "System A", 8245},
        {covnames::algorithm, "System B", 8213},
        {covnames::algorithm, "System C", 8230},
        {covnames::algorithm, "System D", 8237},
        {covnames::algorithm, "System E", 8194},
        {covnames::has_gait, "False", 24804},
        {covnames::has_gait, "True", 0},
        {covnames::has_turbulence, "False", 27586},
        {covnames::has_turbulence, "True", 0},
        {covnames::head_height, ">90 Pix", 11388},
        {covnames::head_height, "60-90 Pix", 3473},
        {covnames::head_height, "50-60 Pix", 3293},
        {covnames::head_height, "40-50 Pix", 7253},
        {covnames::head_height, "30-40 Pix", 4581},
        {covnames::head_height, "<30 Pix", 1290},
        {covnames::head_height, "Restricted", 9841},
        {covnames::modality, "Face", 10525},
        {covnames::modality, "Body", 30594},
        {covnames::camera_location, "Ctrl", 7392},
        {covnames::camera_location, "Short Range", 2155},
        {covnames::camera_location, "Medium Range", 10472},
        {covnames::camera_location, "Long Range", 9673},
        {covnames::camera_location, "Elevated", 10510},
        {covnames::camera_location, "Uav", 917},
        {covnames::solar_loading, "0-300 W/M$^2$", 19375},
        {covnames::solar_loading, "300-600 W/M$^2$", 7404},
        {covnames::solar_loading, "600-900 W/M$^2$", 7024},
        {covnames::solar_loading, "Above 900 W/M$^2$", 7316},
        {covnames::wind_speed, "0-3 M/S", 25929},
        {covnames::wind_speed, "3-6 M/S", 12453},
        {covnames::wind_speed, "6-9 M/S", 2432},
        {covnames::wind_speed, "9-12 M/S", 305},
        {covnames::temperature, "Below 0 C", 4059},
        {covnames::temperature, "0-10 C", 8327},
        {covnames::temperature, "10-20 C", 8178},
        {covnames::temperature, "20-30 C", 17684},
        {covnames::temperature, "30-40 C", 2871},
    };

    f.group_variance = 1.157;

    f.summary.n_observations = 41119;
    f.summary.n_groups = 55;
    f.summary.scale = 4.3539;
    f.summary.reml_loglik = -88768.7911;
    f.summary.converged = true;
    f.summary.min_group_size = 30;
    f.summary.max_group_size = 3185;
    f.summary.mean_group_size = 747.6;

    f.group_counts = {
        {"DWC-MPTZ336XW - BGC3", 3185},    {"acA2040-90um - BGC4", 2175},
        {"DWC-MPTZ336XW - BGC1", 2025},    {"HDZP252DI - BGC3", 1875},
        {"acA2040-120uc - BGC2", 1601},    {"XNZ-6320 - BGC3", 1591},
        {"acA2040-120uc - BGC1", 1535},    {"HDZP252DI - BGC1", 1490},
        {"MPT-50 - BGC4", 1465},           {"acA2040-120uc - BGC4", 1429},
        {"Q6215-LE - BGC4", 1427},         {"PNP-9200RH - BGC2", 1315},
        {"HDZP252DI - BGC2", 1303},        {"HDZP252DI - BGC4", 1182},
        {"MPT-90 - BGC2", 1074},           {"acA2040-120um - BGC2", 1060},
        {"PNP-9200RH - BGC3", 1055},       {"DWC-MPTZ336XW - BGC2", 965},
        {"acA2040-120uc - BGC3", 911},     {"acA4112-30um - BGC4", 848},
        {"acA4112-30um - BGC3", 771},      {"XNZ-6320 - BGC4", 733},
        {"XNZ-6320 - BGC2", 721},          {"Q6215-LE - BGC2", 680},
        {"acA2040-90um - BGC2", 644},      {"acA4112-30um - BGC1", 610},
        {"PNP-9200RH - BGC1", 605},        {"Q6215-LE - BGC3", 525},
        {"Q6215-LE - BGC1", 505},          {"QNP-6230H - BGC3", 480},
        {"P5655-E - BGC4", 470},           {"Anafi - BGC1", 465},
        {"QNP-6230H - BGC4", 450},         {"DWC-MPTZ336XW - BGC1.1", 420},
        {"HDZP252DI - BGC1.1", 370},       {"P5655-E - BGC2", 365},
        {"XNZ-6320 - BGC1.1", 284},        {"DWC-MPTZ336XW - BGC4", 275},
        {"Anafi USA - BGC1", 250},         {"acA2040-90uc - BGC1", 245},
        {"MIC-IP-FUSION-9000IV - BGC4", 220}, {"MPT-90 - BGC3", 205},
        {"PNP-9200RH - BGC4", 195},        {"Anafi USA - BGC1.1", 172},
        {"Q6215-LE - BGC1.1", 170},        {"PNP-9200RH - BGC1.1", 165},
        {"acA2040-120um - BGC1.1", 123},   {"MIC-IP-FUSION-9000IV - BGC2", 105},
        {"P5655-E - BGC3", 75},            {"acA2040-120um - BGC3", 75},
        {"P5655-E - BGC1.1", 65},          {"acA2040-120uc - BGC1.1", 55},
        {"acA2040-90uc - BGC1.1", 50},     {"a2A5328-15ucPRO - BGC3", 35},
        {"Mantis i45 EO - BGC1.1", 30},
    };
    return f;
}

} // namespace detail

inline const PaperFixture& paper_fixture() {
    static const PaperFixture fixture = detail::build_paper_fixture();
    return fixture;
}

inline std::vector<CoefficientStat> load_paper_coefficients() {
    return paper_fixture().coefficients;
}

} // namespace covfar
