#pragma once

// Table and plot-data emission: the coefficient table (text/csv/latex), the
// model summary, forest-plot data as hand-assembled SVG plus a CSV mirror,
// and per-algorithm normalization diagnostics.
//
// Formatting is pinned: coefficients, CIs and p-values print at 3 decimals
// (reference rows as "0.000000 / 0 / 0 / -"), the summary's scale and
// log-likelihood at 4 decimals, mean group size at 1. Coefficients with
// |coef| >= 0.5 are emphasized: \textbf in latex, a trailing " *" in text.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "covfar/covariates.hpp"
#include "covfar/lmm.hpp"
#include "covfar/metrics.hpp"
#include "covfar/normalization.hpp"
#include "covfar/paper_fixture.hpp"

namespace covfar {

enum class DocFormat { text, csv, latex };

struct CoefficientTable {
    std::vector<CoefficientStat> stats;          // table order
    LevelCounts counts;
    std::optional<double> group_variance;        // appended as a "Group Var" row
};

namespace detail {

inline std::string fmt_fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
    return buf;
}

struct TableCells {
    std::string covariate, level, coef, ci_low, ci_high, p, count;
    bool bold = false;
};

inline std::vector<TableCells> coefficient_cells(const CoefficientTable& table) {
    std::vector<TableCells> rows;
    for (const auto& stat : table.stats) {
        TableCells cells;
        cells.covariate = stat.covariate;
        cells.level = stat.level;
        if (stat.is_reference) {
            cells.coef = "0.000000";
            cells.ci_low = "0";
            cells.ci_high = "0";
            cells.p = "-";
        } else {
            cells.coef = fmt_fixed(stat.coef, 3);
            cells.ci_low = fmt_fixed(stat.ci_low, 3);
            cells.ci_high = fmt_fixed(stat.ci_high, 3);
            cells.p = fmt_fixed(stat.p_value, 3);
            cells.bold = std::fabs(stat.coef) >= 0.5;
        }
        const LevelCount* count = table.counts.find(stat.covariate, stat.level);
        cells.count = count ? std::to_string(count->count) : "-";
        rows.push_back(std::move(cells));
    }
    if (table.group_variance) {
        TableCells cells;
        cells.covariate = "Group Var";
        cells.level = "-";
        cells.coef = fmt_fixed(*table.group_variance, 3);
        cells.count = "-";
        cells.bold = false;
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline std::string sanitize_filename(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

} // namespace detail

inline std::string render_coefficient_table(const CoefficientTable& table, DocFormat format) {
    const std::vector<detail::TableCells> rows = detail::coefficient_cells(table);
    std::string out;

    if (format == DocFormat::csv) {
        out = "cov_name,level,coef,ci_low,ci_high,p_value,num_probes\n";
        for (const auto& r : rows) {
            std::vector<std::string> fields = {r.covariate, r.level, r.coef, r.ci_low,
                                               r.ci_high,    r.p,     r.count};
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (i > 0) out.push_back(',');
                out += csv::format_field(fields[i]);
            }
            out.push_back('\n');
        }
        return out;
    }

    if (format == DocFormat::latex) {
        out = "\\begin{tabular}{lllllll}\n\\hline\n"
              "Cov.Name & Level & Coef. & [0.025 & 0.975] & P>|z| & Num.Probes \\\\\n\\hline\n";
        for (const auto& r : rows) {
            const std::string coef = r.bold ? "\\textbf{" + r.coef + "}" : r.coef;
            out += r.covariate + " & " + r.level + " & " + coef + " & " + r.ci_low + " & " +
                   r.ci_high + " & " + r.p + " & " + r.count + " \\\\\n";
        }
        out += "\\hline\n\\end{tabular}\n";
        return out;
    }

    // text: fixed-width columns, '*' marks |coef| >= 0.5
    std::vector<std::vector<std::string>> grid;
    grid.push_back({"Cov.Name", "Level", "Coef.", "[0.025", "0.975]", "P>|z|", "Num.Probes"});
    for (const auto& r : rows) {
        grid.push_back({r.covariate, r.level, r.coef + (r.bold ? " *" : ""), r.ci_low, r.ci_high,
                        r.p, r.count});
    }
    std::vector<std::size_t> widths(grid[0].size(), 0);
    for (const auto& row : grid) {
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    for (const auto& row : grid) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += row[c];
            if (c + 1 < row.size()) out.append(widths[c] - row[c].size() + 2, ' ');
        }
        out.push_back('\n');
    }
    return out;
}

inline ModelSummaryInfo summary_of(const FittedModel& model) {
    ModelSummaryInfo info;
    info.n_observations = static_cast<long long>(model.n_observations);
    info.n_groups = static_cast<long long>(model.n_groups);
    info.scale = model.scale;
    info.reml_loglik = model.reml_loglik;
    info.converged = model.converged;
    info.min_group_size = static_cast<long long>(model.min_group_size);
    info.max_group_size = static_cast<long long>(model.max_group_size);
    info.mean_group_size = model.mean_group_size;
    return info;
}

inline std::string render_model_summary(const ModelSummaryInfo& info, DocFormat format) {
    using detail::fmt_fixed;
    const std::string converged = info.converged ? "Yes" : "No";
    if (format == DocFormat::csv) {
        std::string out = "field,value\n";
        out += "model,MixedLM\n";
        out += "dependent_variable,est far\n";
        out += "no_observations," + std::to_string(info.n_observations) + "\n";
        out += "method,REML\n";
        out += "no_groups," + std::to_string(info.n_groups) + "\n";
        out += "scale," + fmt_fixed(info.scale, 4) + "\n";
        out += "min_group_size," + std::to_string(info.min_group_size) + "\n";
        out += "log_likelihood," + fmt_fixed(info.reml_loglik, 4) + "\n";
        out += "max_group_size," + std::to_string(info.max_group_size) + "\n";
        out += "converged," + converged + "\n";
        out += "mean_group_size," + fmt_fixed(info.mean_group_size, 1) + "\n";
        return out;
    }
    std::vector<std::pair<std::string, std::string>> left = {
        {"Model:", "MixedLM"},
        {"No. Observations:", std::to_string(info.n_observations)},
        {"No. Groups:", std::to_string(info.n_groups)},
        {"Min. group size:", std::to_string(info.min_group_size)},
        {"Max. group size:", std::to_string(info.max_group_size)},
        {"Mean group size:", fmt_fixed(info.mean_group_size, 1)},
    };
    std::vector<std::pair<std::string, std::string>> right = {
        {"Dependent Variable:", "est far"},
        {"Method:", "REML"},
        {"Scale:", fmt_fixed(info.scale, 4)},
        {"Log-Likelihood:", fmt_fixed(info.reml_loglik, 4)},
        {"Converged:", converged},
        {"", ""},
    };
    std::string out;
    for (std::size_t i = 0; i < left.size(); ++i) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-18s %-10s %-20s %s", left[i].first.c_str(),
                      left[i].second.c_str(), right[i].first.c_str(), right[i].second.c_str());
        std::string line(buf);
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line;
        out.push_back('\n');
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forest plot
// ---------------------------------------------------------------------------

struct ForestDocs {
    std::string svg;
    std::string csv;
};

// One row per non-reference level: a point at the coefficient with a whisker
// spanning the CI. The SVG embeds the plotted values in per-row <title>
// elements using the same strings as the CSV mirror.
inline ForestDocs render_forest(const std::vector<CoefficientStat>& stats) {
    if (stats.empty()) {
        throw Error::validation("render_forest: no coefficient stats to plot");
    }
    std::vector<const CoefficientStat*> rows;
    for (const auto& s : stats) {
        if (s.covariate == "Intercept" || s.is_reference) continue;
        rows.push_back(&s);
    }
    if (rows.empty()) {
        throw Error::validation("render_forest: nothing to plot, all rows are reference levels");
    }

    double lo = 0.0, hi = 0.0;
    for (const auto* s : rows) {
        lo = std::min(lo, s->ci_low);
        hi = std::max(hi, s->ci_high);
    }
    double pad = 0.05 * (hi - lo);
    if (pad == 0.0) pad = 0.5;
    lo -= pad;
    hi += pad;

    const double label_w = 250.0;
    const double plot_w = 440.0;
    const double row_h = 22.0;
    const double top = 34.0;
    const double bottom = 30.0;
    const double width = label_w + plot_w + 20.0;
    const double height = top + row_h * static_cast<double>(rows.size()) + bottom;
    auto xof = [&](double v) { return label_w + (v - lo) / (hi - lo) * plot_w; };
    auto num = [](double v) { return detail::fmt_fixed(v, 2); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
           num(height) + "\" font-family=\"monospace\" font-size=\"12\">\n";
    svg += "<line x1=\"" + num(xof(0.0)) + "\" y1=\"" + num(top - 14.0) + "\" x2=\"" +
           num(xof(0.0)) + "\" y2=\"" + num(height - bottom + 8.0) +
           "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        svg += "<text x=\"" + num(xof(v)) + "\" y=\"" + num(height - 10.0) +
               "\" text-anchor=\"middle\" fill=\"#555555\">" + num(v) + "</text>\n";
    }

    std::string csv_doc = "covariate,level,coef,ci_low,ci_high\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const CoefficientStat& s = *rows[i];
        const double cy = top + row_h * (static_cast<double>(i) + 0.5);
        const std::string coef = csv::to_string(s.coef);
        const std::string ci_low = csv::to_string(s.ci_low);
        const std::string ci_high = csv::to_string(s.ci_high);
        csv_doc += csv::format_field(s.covariate) + "," + csv::format_field(s.level) + "," + coef +
                   "," + ci_low + "," + ci_high + "\n";

        svg += "<g>\n";
        svg += "<title>" + s.covariate + " = " + s.level + ": " + coef + " [" + ci_low + ", " +
               ci_high + "]</title>\n";
        svg += "<text x=\"4\" y=\"" + num(cy + 4.0) + "\">" + s.covariate + " = " + s.level +
               "</text>\n";
        svg += "<line x1=\"" + num(xof(s.ci_low)) + "\" y1=\"" + num(cy) + "\" x2=\"" +
               num(xof(s.ci_high)) + "\" y2=\"" + num(cy) +
               "\" stroke=\"#336699\" stroke-width=\"2\"/>\n";
        svg += "<circle cx=\"" + num(xof(s.coef)) + "\" cy=\"" + num(cy) +
               "\" r=\"3.5\" fill=\"#113355\"/>\n";
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return {std::move(svg), std::move(csv_doc)};
}

// ---------------------------------------------------------------------------
// Diagnostic series
// ---------------------------------------------------------------------------

inline std::string render_roc_csv(const std::vector<RocPoint>& points) {
    std::string out = "threshold,far,tar\n";
    for (const auto& p : points) {
        out += csv::to_string(p.threshold) + "," + csv::to_string(p.far) + "," +
               csv::to_string(p.tar) + "\n";
    }
    return out;
}

inline std::string render_normalization_fit(const NormalizationMap& map) {
    std::string out = "algorithm,anchor_far,anchor_score,fitted_log10_far,residual\n";
    for (const auto& a : map.anchors) {
        const double fitted = map.m * a.score + map.b;
        out += csv::format_field(map.algorithm) + "," + csv::to_string(a.far) + "," +
               csv::to_string(a.score) + "," + csv::to_string(fitted) + "," +
               csv::to_string(std::log10(a.far) - fitted) + "\n";
    }
    return out;
}

inline std::string normalization_fit_filename(const std::string& algorithm) {
    return "normalization_fit_" + detail::sanitize_filename(algorithm) + ".csv";
}

// Everything one report emission needs, gathered from a fit (or a fixture).
struct ReportBundle {
    CoefficientTable table;
    ModelSummaryInfo summary;
    std::vector<NormalizationMap> maps;       // optional diagnostics
    std::vector<RocPoint> roc;                // optional diagnostics
};

} // namespace covfar
