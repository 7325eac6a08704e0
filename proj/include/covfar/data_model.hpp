#pragma once

// Score/metadata schema, tabular ingest (CSV/JSONL) and the row-drop rules
// applied before modeling: probes with incomplete weather data go first,
// then probes with unspecified subject sex. Every dropped probe is counted
// under exactly one rule.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "covfar/csv.hpp"
#include "covfar/errors.hpp"

namespace covfar {

enum class CameraLocation { ctrl, short_range, medium_range, long_range, elevated, uav };
enum class Modality { face, body };

inline std::string_view to_string(CameraLocation loc) {
    switch (loc) {
    case CameraLocation::ctrl: return "ctrl";
    case CameraLocation::short_range: return "short_range";
    case CameraLocation::medium_range: return "medium_range";
    case CameraLocation::long_range: return "long_range";
    case CameraLocation::elevated: return "elevated";
    case CameraLocation::uav: return "uav";
    }
    return "ctrl";
}

inline std::string_view to_string(Modality m) {
    return m == Modality::face ? "face" : "body";
}

inline CameraLocation camera_location_from_string(std::string_view text,
                                                  const std::string& context) {
    if (text == "ctrl") return CameraLocation::ctrl;
    if (text == "short_range") return CameraLocation::short_range;
    if (text == "medium_range") return CameraLocation::medium_range;
    if (text == "long_range") return CameraLocation::long_range;
    if (text == "elevated") return CameraLocation::elevated;
    if (text == "uav") return CameraLocation::uav;
    throw Error::validation(context + ": unknown camera_location '" + std::string(text) + "'");
}

inline Modality modality_from_string(std::string_view text, const std::string& context) {
    if (text == "face") return Modality::face;
    if (text == "body") return Modality::body;
    throw Error::validation(context + ": unknown modality '" + std::string(text) + "'");
}

struct ProbeMetadata {
    std::string probe_id;
    std::string subject_id;
    std::string collection_id;
    std::string sensor_model;
    CameraLocation camera_location = CameraLocation::ctrl;
    Modality modality = Modality::face;
    std::optional<double> head_height_px;
    bool face_restricted = false;
    bool has_gait = false;
    bool has_turbulence = false;
    std::optional<double> solar_wm2;
    std::optional<double> wind_ms;
    std::optional<double> temperature_c;
    std::string subject_sex;

    bool weather_complete() const {
        return solar_wm2.has_value() && wind_ms.has_value() && temperature_c.has_value();
    }

    bool sex_unspecified() const {
        if (subject_sex.size() != 11) return false;
        static constexpr std::string_view kWord = "unspecified";
        for (std::size_t i = 0; i < kWord.size(); ++i) {
            if (std::tolower(static_cast<unsigned char>(subject_sex[i])) != kWord[i]) return false;
        }
        return true;
    }
};

struct ScoreRow {
    ProbeMetadata probe;
    std::string gallery_subject_id;
    std::string algorithm;
    double raw_score = 0.0;
    bool is_genuine = false;   // always probe.subject_id == gallery_subject_id
};

struct Provenance {
    std::string source;
    std::string ingested_at;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
    Provenance provenance;
};

struct DropLog {
    std::size_t dropped_missing_weather = 0;
    std::size_t dropped_unspecified_sex = 0;
    std::size_t retained = 0;
    std::vector<std::string> missing_weather_probe_ids;
    std::vector<std::string> unspecified_sex_probe_ids;
};

enum class TableFormat { csv, jsonl };

// Exact column set of the tabular interface, in serialization order.
inline const std::vector<std::string>& score_table_columns() {
    static const std::vector<std::string> cols = {
        "probe_id",      "subject_id",   "gallery_subject_id", "algorithm",
        "raw_score",     "collection_id", "sensor_model",      "camera_location",
        "modality",      "head_height_px", "face_restricted",  "has_gait",
        "has_turbulence", "solar_wm2",    "wind_ms",           "temperature_c",
        "subject_sex"};
    return cols;
}

namespace detail {

inline bool parse_bool(std::string_view text, const std::string& context) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw Error::validation(context + ": expected 'true' or 'false', got '" +
                            std::string(text) + "'");
}

inline std::optional<double> parse_optional_double(std::string_view text,
                                                   const std::string& context) {
    if (text.empty()) return std::nullopt;
    return csv::parse_double(text, context);
}

inline void check_non_negative(const std::optional<double>& v, const char* field,
                               const std::string& context) {
    if (v && (!std::isfinite(*v) || *v < 0.0)) {
        throw Error::validation(context + ": " + field + " must be finite and >= 0");
    }
}

inline std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void validate_row(ScoreRow& row, std::optional<bool> genuine_label,
                         const std::string& context) {
    if (!std::isfinite(row.raw_score)) {
        throw Error::validation(context + ": raw_score is not finite");
    }
    detail::check_non_negative(row.probe.head_height_px, "head_height_px", context);
    detail::check_non_negative(row.probe.solar_wm2, "solar_wm2", context);
    detail::check_non_negative(row.probe.wind_ms, "wind_ms", context);
    if (row.probe.temperature_c && !std::isfinite(*row.probe.temperature_c)) {
        throw Error::validation(context + ": temperature_c must be finite");
    }
    row.is_genuine = row.probe.subject_id == row.gallery_subject_id;
    if (genuine_label && *genuine_label != row.is_genuine) {
        throw Error::validation(context +
                                ": is_genuine label contradicts subject/gallery ids");
    }
}

class TripleSet {
public:
    void insert(const ScoreRow& row, const std::string& context) {
        std::string key = row.probe.probe_id;
        key.push_back('\x1f');
        key += row.gallery_subject_id;
        key.push_back('\x1f');
        key += row.algorithm;
        if (!seen_.insert(std::move(key)).second) {
            throw Error::validation(context +
                                    ": duplicate (probe_id, gallery_subject_id, algorithm) triple");
        }
    }

private:
    std::unordered_set<std::string> seen_;
};

} // namespace detail

// `tolerated_extra_columns` lets stage files carry additional columns
// (e.g. est_log_far on a normalized table) past the strict schema check.
inline ScoreTable ingest_scores_csv(std::istream& in, const std::string& source_name,
                                    const std::vector<std::string>& tolerated_extra_columns = {}) {
    csv::Document doc = csv::read(in);
    if (doc.header.empty()) {
        throw Error::validation(source_name + ": empty input, expected a header row");
    }

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < doc.header.size(); ++i) {
        if (!index.emplace(doc.header[i], i).second) {
            throw Error::validation(source_name + ": duplicate column '" + doc.header[i] + "'");
        }
    }
    for (const auto& col : score_table_columns()) {
        if (!index.contains(col)) {
            throw Error::validation(source_name + ": missing column '" + col + "'");
        }
    }
    const bool has_label = index.contains("is_genuine");
    for (const auto& [name, _] : index) {
        if (name == "is_genuine") continue;
        if (std::find(tolerated_extra_columns.begin(), tolerated_extra_columns.end(), name) !=
            tolerated_extra_columns.end()) {
            continue;
        }
        if (std::find(score_table_columns().begin(), score_table_columns().end(), name) ==
            score_table_columns().end()) {
            throw Error::validation(source_name + ": unknown column '" + name + "'");
        }
    }

    ScoreTable table;
    table.provenance = {source_name, detail::now_iso8601()};
    table.rows.reserve(doc.rows.size());
    detail::TripleSet triples;

    for (std::size_t r = 0; r < doc.rows.size(); ++r) {
        const auto& fields = doc.rows[r];
        const std::string context =
            source_name + ", row " + std::to_string(doc.row_lines.empty() ? r + 2 : doc.row_lines[r]);
        if (fields.size() != doc.header.size()) {
            throw Error::validation(context + ": expected " + std::to_string(doc.header.size()) +
                                    " fields, got " + std::to_string(fields.size()));
        }
        auto field = [&](const char* name) -> const std::string& {
            return fields[index.at(name)];
        };

        ScoreRow row;
        row.probe.probe_id = field("probe_id");
        row.probe.subject_id = field("subject_id");
        row.gallery_subject_id = field("gallery_subject_id");
        row.algorithm = field("algorithm");
        row.raw_score = csv::parse_double(field("raw_score"), context + ", column 'raw_score'");
        row.probe.collection_id = field("collection_id");
        row.probe.sensor_model = field("sensor_model");
        row.probe.camera_location = camera_location_from_string(field("camera_location"), context);
        row.probe.modality = modality_from_string(field("modality"), context);
        row.probe.head_height_px =
            detail::parse_optional_double(field("head_height_px"), context + ", column 'head_height_px'");
        row.probe.face_restricted = detail::parse_bool(field("face_restricted"), context);
        row.probe.has_gait = detail::parse_bool(field("has_gait"), context);
        row.probe.has_turbulence = detail::parse_bool(field("has_turbulence"), context);
        row.probe.solar_wm2 =
            detail::parse_optional_double(field("solar_wm2"), context + ", column 'solar_wm2'");
        row.probe.wind_ms =
            detail::parse_optional_double(field("wind_ms"), context + ", column 'wind_ms'");
        row.probe.temperature_c =
            detail::parse_optional_double(field("temperature_c"), context + ", column 'temperature_c'");
        row.probe.subject_sex = field("subject_sex");

        std::optional<bool> label;
        if (has_label) label = detail::parse_bool(fields[index.at("is_genuine")], context);
        detail::validate_row(row, label, context);
        triples.insert(row, context);
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline ScoreTable ingest_scores_jsonl(std::istream& in, const std::string& source_name) {
    ScoreTable table;
    table.provenance = {source_name, detail::now_iso8601()};
    detail::TripleSet triples;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string context = source_name + ", line " + std::to_string(line_no);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error::validation(context + ": invalid JSON (" + e.what() + ")");
        }
        if (!obj.is_object()) throw Error::validation(context + ": expected a JSON object");

        auto require = [&](const char* name) -> const nlohmann::json& {
            auto it = obj.find(name);
            if (it == obj.end()) {
                throw Error::validation(context + ": missing column '" + name + "'");
            }
            return *it;
        };
        auto str = [&](const char* name) -> std::string {
            const auto& v = require(name);
            if (!v.is_string()) throw Error::validation(context + ": '" + name + "' must be a string");
            return v.get<std::string>();
        };
        auto boolean = [&](const char* name) -> bool {
            const auto& v = require(name);
            if (!v.is_boolean()) throw Error::validation(context + ": '" + name + "' must be a boolean");
            return v.get<bool>();
        };
        auto number = [&](const char* name) -> double {
            const auto& v = require(name);
            if (!v.is_number()) throw Error::validation(context + ": '" + name + "' must be a number");
            return v.get<double>();
        };
        auto opt_number = [&](const char* name) -> std::optional<double> {
            auto it = obj.find(name);
            if (it == obj.end() || it->is_null()) return std::nullopt;
            if (!it->is_number()) throw Error::validation(context + ": '" + name + "' must be a number");
            return it->get<double>();
        };

        ScoreRow row;
        row.probe.probe_id = str("probe_id");
        row.probe.subject_id = str("subject_id");
        row.gallery_subject_id = str("gallery_subject_id");
        row.algorithm = str("algorithm");
        row.raw_score = number("raw_score");
        row.probe.collection_id = str("collection_id");
        row.probe.sensor_model = str("sensor_model");
        row.probe.camera_location = camera_location_from_string(str("camera_location"), context);
        row.probe.modality = modality_from_string(str("modality"), context);
        row.probe.head_height_px = opt_number("head_height_px");
        row.probe.face_restricted = boolean("face_restricted");
        row.probe.has_gait = boolean("has_gait");
        row.probe.has_turbulence = boolean("has_turbulence");
        row.probe.solar_wm2 = opt_number("solar_wm2");
        row.probe.wind_ms = opt_number("wind_ms");
        row.probe.temperature_c = opt_number("temperature_c");
        row.probe.subject_sex = str("subject_sex");

        std::optional<bool> label;
        if (auto it = obj.find("is_genuine"); it != obj.end() && !it->is_null()) {
            if (!it->is_boolean()) throw Error::validation(context + ": 'is_genuine' must be a boolean");
            label = it->get<bool>();
        }
        detail::validate_row(row, label, context);
        triples.insert(row, context);
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline ScoreTable ingest_scores(const std::filesystem::path& path, TableFormat format) {
    std::ifstream in(path);
    if (!in) throw Error::validation("cannot open '" + path.string() + "'");
    return format == TableFormat::csv ? ingest_scores_csv(in, path.string())
                                      : ingest_scores_jsonl(in, path.string());
}

inline void write_scores_csv(const ScoreTable& table, std::ostream& out) {
    csv::write_row(out, score_table_columns());
    std::vector<std::string> fields(score_table_columns().size());
    auto opt_str = [](const std::optional<double>& v) {
        return v ? csv::to_string(*v) : std::string();
    };
    for (const auto& row : table.rows) {
        fields[0] = row.probe.probe_id;
        fields[1] = row.probe.subject_id;
        fields[2] = row.gallery_subject_id;
        fields[3] = row.algorithm;
        fields[4] = csv::to_string(row.raw_score);
        fields[5] = row.probe.collection_id;
        fields[6] = row.probe.sensor_model;
        fields[7] = std::string(to_string(row.probe.camera_location));
        fields[8] = std::string(to_string(row.probe.modality));
        fields[9] = opt_str(row.probe.head_height_px);
        fields[10] = row.probe.face_restricted ? "true" : "false";
        fields[11] = row.probe.has_gait ? "true" : "false";
        fields[12] = row.probe.has_turbulence ? "true" : "false";
        fields[13] = opt_str(row.probe.solar_wm2);
        fields[14] = opt_str(row.probe.wind_ms);
        fields[15] = opt_str(row.probe.temperature_c);
        fields[16] = row.probe.subject_sex;
        csv::write_row(out, fields);
    }
}

inline void write_scores_csv(const ScoreTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error::validation("cannot write '" + path.string() + "'");
    write_scores_csv(table, out);
}

// Removes rows for probes with incomplete weather data, then rows for probes
// with unspecified subject sex. A probe matching both rules is attributed to
// the weather rule only, so counts stay disjoint. Probe metadata is taken
// from the probe's first row in table order.
inline std::pair<ScoreTable, DropLog> apply_drop_rules(const ScoreTable& table) {
    enum class Fate { keep, weather, sex };
    std::unordered_map<std::string, Fate> fate;
    DropLog log;

    for (const auto& row : table.rows) {
        if (fate.contains(row.probe.probe_id)) continue;
        Fate f = Fate::keep;
        if (!row.probe.weather_complete()) {
            f = Fate::weather;
            log.missing_weather_probe_ids.push_back(row.probe.probe_id);
        } else if (row.probe.sex_unspecified()) {
            f = Fate::sex;
            log.unspecified_sex_probe_ids.push_back(row.probe.probe_id);
        } else {
            ++log.retained;
        }
        fate.emplace(row.probe.probe_id, f);
    }
    log.dropped_missing_weather = log.missing_weather_probe_ids.size();
    log.dropped_unspecified_sex = log.unspecified_sex_probe_ids.size();

    ScoreTable kept;
    kept.provenance = table.provenance;
    kept.rows.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (fate.at(row.probe.probe_id) == Fate::keep) kept.rows.push_back(row);
    }
    return {std::move(kept), std::move(log)};
}

inline nlohmann::json to_json(const DropLog& log) {
    return nlohmann::json{{"dropped_missing_weather", log.dropped_missing_weather},
                          {"dropped_unspecified_sex", log.dropped_unspecified_sex},
                          {"retained", log.retained},
                          {"missing_weather_probe_ids", log.missing_weather_probe_ids},
                          {"unspecified_sex_probe_ids", log.unspecified_sex_probe_ids}};
}

} // namespace covfar
