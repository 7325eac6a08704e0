// covfar: covariate analysis of biometric verification scores.
//
// Subcommands form a file-based pipeline so each stage is independently
// testable and resumable:
//   simulate -> scores.csv + ground_truth.json
//   normalize -> normalized.csv + normalization_maps.json
//   fit       -> model.json + drop_log.json
//   report    -> coefficients.{txt,csv,tex}, summary.{txt,csv}, forest.{svg,csv}
//   predict   -> stdout (text or json)
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure
// (non-convergence, rank deficiency).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "covfar/covariates.hpp"
#include "covfar/csv.hpp"
#include "covfar/data_model.hpp"
#include "covfar/errors.hpp"
#include "covfar/lmm.hpp"
#include "covfar/normalization.hpp"
#include "covfar/paper_fixture.hpp"
#include "covfar/prediction.hpp"
#include "covfar/report.hpp"
#include "covfar/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& path, const std::string& content, bool force) {
    if (fs::exists(path) && !force) {
        throw covfar::Error::validation("refusing to overwrite '" + path.string() +
                                        "' (pass --force to allow)");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw covfar::Error::validation("cannot write '" + path.string() + "'");
    out << content;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw covfar::Error::validation("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw covfar::Error::validation("'" + path.string() + "': invalid JSON (" + e.what() + ")");
    }
}

fs::path prepare_output_dir(const std::string& dir) {
    fs::path out(dir.empty() ? "." : dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        throw covfar::Error::validation("cannot create output directory '" + out.string() + "'");
    }
    return out;
}

std::vector<double> parse_anchor_list(const std::string& text) {
    std::vector<double> anchors;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        anchors.push_back(covfar::csv::parse_double(item, "--anchors"));
    }
    if (anchors.empty()) throw covfar::Error::validation("--anchors: no values given");
    return anchors;
}

std::vector<std::string> parse_string_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

// ---------------------------------------------------------------------------
// Stage-file formats
// ---------------------------------------------------------------------------

std::string normalized_table_csv(const covfar::NormalizedTable& table) {
    std::ostringstream out;
    std::vector<std::string> header = covfar::score_table_columns();
    header.push_back("est_log_far");
    header.push_back("extrapolated");
    covfar::csv::write_row(out, header);
    for (const auto& row : table.rows) {
        std::ostringstream one;
        covfar::ScoreTable tmp;
        tmp.rows.push_back(row.score);
        covfar::write_scores_csv(tmp, one);
        std::string line = one.str();
        // second line of the two-line document is the data row
        const std::size_t nl = line.find('\n');
        line = line.substr(nl + 1);
        line.pop_back();   // trailing newline
        out << line << ',' << covfar::csv::to_string(row.est_log_far) << ','
            << (row.extrapolated ? "true" : "false") << '\n';
    }
    return out.str();
}

covfar::NormalizedTable read_normalized_csv(const fs::path& path) {
    const std::string text = slurp(path);
    static const std::vector<std::string> extras = {"est_log_far", "extrapolated"};

    std::istringstream scores_in(text);
    covfar::ScoreTable table = covfar::ingest_scores_csv(scores_in, path.string(), extras);

    std::istringstream doc_in(text);
    const covfar::csv::Document doc = covfar::csv::read(doc_in);
    std::size_t est_col = doc.header.size();
    std::size_t flag_col = doc.header.size();
    for (std::size_t i = 0; i < doc.header.size(); ++i) {
        if (doc.header[i] == "est_log_far") est_col = i;
        if (doc.header[i] == "extrapolated") flag_col = i;
    }
    if (est_col == doc.header.size()) {
        throw covfar::Error::validation(path.string() + ": missing column 'est_log_far'");
    }

    covfar::NormalizedTable normalized;
    normalized.rows.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        covfar::NormalizedRow row;
        row.score = table.rows[i];
        row.est_log_far = covfar::csv::parse_double(doc.rows[i][est_col],
                                                    path.string() + ": est_log_far");
        row.extrapolated = flag_col < doc.header.size() && doc.rows[i][flag_col] == "true";
        normalized.rows.push_back(std::move(row));
    }
    return normalized;
}

json maps_to_json(const std::vector<covfar::NormalizationMap>& maps) {
    json arr = json::array();
    for (const auto& m : maps) arr.push_back(covfar::to_json(m));
    return json{{"maps", arr}};
}

std::vector<covfar::NormalizationMap> maps_from_json(const json& j) {
    std::vector<covfar::NormalizationMap> maps;
    for (const auto& m : j.at("maps")) maps.push_back(covfar::normalization_map_from_json(m));
    return maps;
}

json counts_to_json(const covfar::LevelCounts& counts) {
    json arr = json::array();
    for (const auto& c : counts.counts) {
        arr.push_back({{"covariate", c.covariate}, {"level", c.level}, {"count", c.count}});
    }
    return arr;
}

covfar::LevelCounts counts_from_json(const json& j) {
    covfar::LevelCounts counts;
    for (const auto& c : j) {
        counts.counts.push_back({c.at("covariate").get<std::string>(),
                                 c.at("level").get<std::string>(),
                                 c.at("count").get<long long>()});
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct CommonOptions {
    std::string output_dir;
    bool force = false;
};

int cmd_simulate(const covfar::SynthConfig& config, const CommonOptions& common) {
    const fs::path dir = prepare_output_dir(common.output_dir);
    const covfar::SynthResult result = covfar::generate(config);

    std::ostringstream scores;
    covfar::write_scores_csv(result.table, scores);
    write_file(dir / "scores.csv", scores.str(), common.force);
    write_file(dir / "ground_truth.json", covfar::to_json(result.truth).dump(2) + "\n",
               common.force);
    std::cout << "wrote " << (dir / "scores.csv").string() << " ("
              << result.table.rows.size() << " rows) and ground_truth.json\n";
    return 0;
}

int cmd_normalize(const std::string& input, const covfar::NormOptions& options,
                  const CommonOptions& common) {
    const fs::path dir = prepare_output_dir(common.output_dir);
    const covfar::ScoreTable table = covfar::ingest_scores(input, covfar::TableFormat::csv);
    std::vector<std::string> warnings;
    covfar::NormOptions opts = options;
    opts.warnings = &warnings;
    const covfar::NormalizedTable normalized = covfar::normalize_table(table, opts);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    write_file(dir / "normalized.csv", normalized_table_csv(normalized), common.force);
    write_file(dir / "normalization_maps.json", maps_to_json(normalized.maps).dump(2) + "\n",
               common.force);
    std::cout << "wrote " << (dir / "normalized.csv").string() << " and normalization_maps.json\n";
    return 0;
}

int cmd_fit(const std::string& input, const covfar::CovariateSpec& spec,
            const covfar::NormOptions& norm_options, const CommonOptions& common) {
    const fs::path dir = prepare_output_dir(common.output_dir);

    // Accept either a normalized table or raw scores; raw scores are
    // normalized in process and the maps are saved alongside the model.
    covfar::NormalizedTable normalized;
    {
        const std::string text = slurp(input);
        std::istringstream probe(text);
        const covfar::csv::Document doc = covfar::csv::read(probe);
        bool has_est = false;
        for (const auto& h : doc.header) has_est = has_est || h == "est_log_far";
        if (has_est) {
            normalized = read_normalized_csv(input);
        } else {
            const covfar::ScoreTable table = covfar::ingest_scores(input, covfar::TableFormat::csv);
            std::vector<std::string> warnings;
            covfar::NormOptions opts = norm_options;
            opts.warnings = &warnings;
            normalized = covfar::normalize_table(table, opts);
            for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
            write_file(dir / "normalization_maps.json",
                       maps_to_json(normalized.maps).dump(2) + "\n", common.force);
        }
    }

    // Drop rules operate on the score rows; keep est values aligned by key.
    covfar::ScoreTable scores;
    scores.rows.reserve(normalized.rows.size());
    for (const auto& row : normalized.rows) scores.rows.push_back(row.score);
    auto [kept, drop_log] = covfar::apply_drop_rules(scores);

    std::unordered_set<std::string> kept_probes;
    for (const auto& row : kept.rows) kept_probes.insert(row.probe.probe_id);
    covfar::NormalizedTable kept_normalized;
    kept_normalized.maps = normalized.maps;
    for (const auto& row : normalized.rows) {
        if (kept_probes.contains(row.score.probe.probe_id)) kept_normalized.rows.push_back(row);
    }

    const covfar::DesignMatrix design = covfar::build_design(kept_normalized, spec);
    const covfar::LevelCounts counts = covfar::count_levels(kept_normalized, spec);
    const covfar::FittedModel model = covfar::fit_reml(design);
    for (const auto& name : model.dropped_columns) {
        std::cerr << "warning: dropped empty design column '" << name << "'\n";
    }

    json out = json{{"model", covfar::to_json(model)}, {"counts", counts_to_json(counts)}};
    if (model.converged) {
        json stats = json::array();
        for (const auto& s : covfar::wald_stats(model)) stats.push_back(covfar::to_json(s));
        out["stats"] = stats;
    }
    write_file(dir / "model.json", out.dump(2) + "\n", common.force);
    write_file(dir / "drop_log.json", covfar::to_json(drop_log).dump(2) + "\n", common.force);

    std::cout << "fit " << model.n_observations << " genuine rows over " << model.n_groups
              << " groups; scale=" << covfar::csv::to_string(model.scale)
              << " group_var=" << covfar::csv::to_string(model.group_variance)
              << " converged=" << (model.converged ? "yes" : "no") << '\n';
    if (!model.converged) {
        std::cerr << "error: REML fit did not converge\n";
        return 2;
    }
    return 0;
}

int cmd_predict(const std::vector<covfar::CoefficientStat>& stats, const covfar::Scenario& scenario,
                const std::string& format) {
    const covfar::FarEstimate est = covfar::predict_far(stats, scenario);
    if (format == "json") {
        std::cout << covfar::to_json(est).dump(2) << '\n';
        return 0;
    }
    for (const auto& term : est.terms) {
        std::string label = term.covariate == "Intercept" ? std::string("Intercept")
                                                          : term.covariate + " = " + term.level;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-36s %+0.3f\n", label.c_str(), term.coef);
        std::cout << buf;
    }
    std::cout << "S (predicted log10 FAR) = " << covfar::csv::to_string(est.s) << '\n';
    char line[160];
    std::snprintf(line, sizeof(line), "FAR_est = 10^S = %.6g  (1 in %s)\n", est.far,
                  covfar::format_thousands(est.one_in_n).c_str());
    std::cout << line;
    std::cout << "note: estimates assume the TAR is held fixed at 50%.\n";
    return 0;
}

int cmd_report(const covfar::ReportBundle& bundle, const CommonOptions& common) {
    const fs::path dir = prepare_output_dir(common.output_dir);

    // An unconverged model has no coefficient stats; render the summary
    // (Converged: No) and report the failure through the exit code.
    if (!bundle.table.stats.empty()) {
        write_file(dir / "coefficients.txt",
                   covfar::render_coefficient_table(bundle.table, covfar::DocFormat::text),
                   common.force);
        write_file(dir / "coefficients.csv",
                   covfar::render_coefficient_table(bundle.table, covfar::DocFormat::csv),
                   common.force);
        write_file(dir / "coefficients.tex",
                   covfar::render_coefficient_table(bundle.table, covfar::DocFormat::latex),
                   common.force);
        const covfar::ForestDocs forest = covfar::render_forest(bundle.table.stats);
        write_file(dir / "forest.svg", forest.svg, common.force);
        write_file(dir / "forest.csv", forest.csv, common.force);
    }
    write_file(dir / "summary.txt",
               covfar::render_model_summary(bundle.summary, covfar::DocFormat::text), common.force);
    write_file(dir / "summary.csv",
               covfar::render_model_summary(bundle.summary, covfar::DocFormat::csv), common.force);
    for (const auto& map : bundle.maps) {
        write_file(dir / covfar::normalization_fit_filename(map.algorithm),
                   covfar::render_normalization_fit(map), common.force);
    }
    if (!bundle.roc.empty()) {
        write_file(dir / "roc.csv", covfar::render_roc_csv(bundle.roc), common.force);
    }
    std::cout << "wrote report files to " << dir.string() << '\n';
    if (!bundle.summary.converged) {
        std::cerr << "error: model did not converge\n";
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"covariate analysis of biometric verification scores"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic score table");
    covfar::SynthConfig synth = covfar::SynthConfig::defaults();
    std::string algorithms_arg;
    CommonOptions sim_common;
    simulate->add_option("--seed", synth.seed, "random seed");
    simulate->add_option("--probes", synth.n_probes, "number of probes");
    simulate->add_option("--groups", synth.n_groups, "number of sensor x collection groups");
    simulate->add_option("--subjects", synth.n_subjects, "number of probe subjects");
    simulate->add_option("--impostors-per-probe", synth.impostors_per_probe,
                         "impostor comparisons per probe per algorithm");
    simulate->add_option("--missing-weather-frac", synth.missing_weather_frac,
                         "fraction of probes with a missing weather field");
    simulate->add_option("--unspecified-sex-frac", synth.unspecified_sex_frac,
                         "fraction of probes with unspecified subject sex");
    simulate->add_option("--group-sd", synth.group_sd, "group effect standard deviation");
    simulate->add_option("--residual-sd", synth.residual_sd, "residual standard deviation");
    simulate->add_option("--algorithms", algorithms_arg, "comma-separated algorithm tags");
    simulate->add_option("--output-dir", sim_common.output_dir, "output directory")
        ->envname("COVFAR_OUTPUT_DIR");
    simulate->add_flag("--force", sim_common.force, "overwrite existing outputs");

    // normalize
    auto* normalize = app.add_subcommand("normalize", "fit tail maps and normalize raw scores");
    std::string norm_input;
    std::string anchors_arg;
    bool drop_unresolvable = false;
    CommonOptions norm_common;
    normalize->add_option("--input", norm_input, "scores.csv")->required();
    normalize->add_option("--anchors", anchors_arg,
                          "comma-separated anchor FARs (default 1e-6,1e-5,1e-4,1e-3,1e-2)");
    normalize->add_flag("--drop-unresolvable-anchors", drop_unresolvable,
                        "drop anchors the impostor sample cannot resolve (keep at least 3)");
    normalize->add_option("--output-dir", norm_common.output_dir, "output directory")
        ->envname("COVFAR_OUTPUT_DIR");
    normalize->add_flag("--force", norm_common.force, "overwrite existing outputs");

    // fit
    auto* fit = app.add_subcommand("fit", "drop rules, design matrix and REML fit");
    std::string fit_input;
    std::string fit_spec_path;
    std::string fit_anchors_arg;
    bool fit_drop_unresolvable = false;
    CommonOptions fit_common;
    fit->add_option("--input", fit_input, "normalized.csv (or scores.csv, normalized in process)")
        ->required();
    fit->add_option("--spec", fit_spec_path, "covariate spec JSON (default: built-in)");
    fit->add_option("--anchors", fit_anchors_arg, "anchor FARs when normalizing raw scores");
    fit->add_flag("--drop-unresolvable-anchors", fit_drop_unresolvable,
                  "drop anchors the impostor sample cannot resolve (keep at least 3)");
    fit->add_option("--output-dir", fit_common.output_dir, "output directory")
        ->envname("COVFAR_OUTPUT_DIR");
    fit->add_flag("--force", fit_common.force, "overwrite existing outputs");

    // predict
    auto* predict = app.add_subcommand("predict", "additive FAR estimate for a scenario");
    bool use_paper = false;
    std::string predict_model_path;
    std::vector<std::string> set_args;
    std::string predict_format = "text";
    predict->add_flag("--paper-coefficients", use_paper,
                      "use the bundled published coefficient table");
    predict->add_option("--model", predict_model_path, "model.json from 'fit'");
    predict->add_option("--set", set_args, "scenario choice \"Covariate=Level\" (repeatable)");
    predict->add_option("--format", predict_format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));

    // report
    auto* report = app.add_subcommand("report", "render coefficient table, summary and forest plot");
    bool report_paper = false;
    std::string report_model_path;
    std::string report_maps_path;
    CommonOptions report_common;
    report->add_flag("--paper-coefficients", report_paper,
                     "render the bundled published coefficient table");
    report->add_option("--model", report_model_path, "model.json from 'fit'");
    report->add_option("--normalization", report_maps_path, "normalization_maps.json");
    report->add_option("--output-dir", report_common.output_dir, "output directory")
        ->envname("COVFAR_OUTPUT_DIR");
    report->add_flag("--force", report_common.force, "overwrite existing outputs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(simulate)) {
            if (!algorithms_arg.empty()) {
                synth.algorithms = parse_string_list(algorithms_arg);
                synth.tails.clear();
                synth.spec = covfar::CovariateSpec::with_algorithms(synth.algorithms);
                synth.true_beta.clear();
                synth.true_beta["Intercept"] = -7.0;
            }
            return cmd_simulate(synth, sim_common);
        }
        if (app.got_subcommand(normalize)) {
            covfar::NormOptions options;
            if (!anchors_arg.empty()) options.anchor_fars = parse_anchor_list(anchors_arg);
            options.drop_unresolvable = drop_unresolvable;
            return cmd_normalize(norm_input, options, norm_common);
        }
        if (app.got_subcommand(fit)) {
            covfar::CovariateSpec spec = covfar::CovariateSpec::defaults();
            if (!fit_spec_path.empty()) {
                // accepts either a bare spec object or a file that embeds one
                // under a "spec" key (e.g. ground_truth.json from simulate)
                json spec_json = parse_json_file(fit_spec_path);
                if (!spec_json.contains("covariates") && spec_json.contains("spec")) {
                    spec_json = spec_json.at("spec");
                }
                spec = covfar::covariate_spec_from_json(spec_json);
            }
            covfar::NormOptions options;
            if (!fit_anchors_arg.empty()) options.anchor_fars = parse_anchor_list(fit_anchors_arg);
            options.drop_unresolvable = fit_drop_unresolvable;
            return cmd_fit(fit_input, spec, options, fit_common);
        }
        if (app.got_subcommand(predict)) {
            if (use_paper == !predict_model_path.empty()) {
                throw covfar::Error::validation(
                    "predict: pass exactly one of --paper-coefficients or --model");
            }
            std::vector<covfar::CoefficientStat> stats;
            if (use_paper) {
                stats = covfar::load_paper_coefficients();
            } else {
                const json j = parse_json_file(predict_model_path);
                for (const auto& s : j.at("stats")) {
                    stats.push_back(covfar::coefficient_stat_from_json(s));
                }
            }
            covfar::Scenario scenario;
            for (const auto& assignment : set_args) {
                covfar::add_scenario_assignment(scenario, assignment);
            }
            return cmd_predict(stats, scenario, predict_format);
        }
        if (app.got_subcommand(report)) {
            if (report_paper == !report_model_path.empty()) {
                throw covfar::Error::validation(
                    "report: pass exactly one of --paper-coefficients or --model");
            }
            covfar::ReportBundle bundle;
            if (report_paper) {
                const covfar::PaperFixture& fixture = covfar::paper_fixture();
                bundle.table.stats = fixture.coefficients;
                bundle.table.counts = fixture.counts;
                bundle.table.group_variance = fixture.group_variance;
                bundle.summary = fixture.summary;
            } else {
                const json j = parse_json_file(report_model_path);
                const covfar::FittedModel model = covfar::fitted_model_from_json(j.at("model"));
                if (j.contains("stats")) {
                    for (const auto& s : j.at("stats")) {
                        bundle.table.stats.push_back(covfar::coefficient_stat_from_json(s));
                    }
                } else if (model.converged) {
                    bundle.table.stats = covfar::wald_stats(model);
                }
                bundle.table.counts = counts_from_json(j.at("counts"));
                bundle.table.group_variance = model.group_variance;
                bundle.summary = covfar::summary_of(model);
            }
            if (!report_maps_path.empty()) {
                bundle.maps = maps_from_json(parse_json_file(report_maps_path));
            }
            return cmd_report(bundle, report_common);
        }
    } catch (const covfar::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == covfar::ErrorKind::validation ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
