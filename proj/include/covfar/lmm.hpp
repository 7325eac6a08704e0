#pragma once

// Random-intercept linear mixed model fitted by REML:
//
//   y = X beta + Z u + eps,   u ~ N(0, sigma_u^2 I_g),  eps ~ N(0, sigma^2 I_n)
//
// With theta = sigma_u^2 / sigma^2 the covariance is sigma^2 (I + theta Z Z'),
// block diagonal over groups, and each block inverts in closed form:
// (I + theta J)^-1 = I - theta/(1 + n_i theta) J. beta and sigma^2 are
// profiled out by GLS, leaving a one-dimensional restricted likelihood in
// theta that is maximized by bracketing plus Brent (golden section with
// parabolic interpolation) on log(theta). Everything is computed from
// per-group sufficient statistics, so one likelihood evaluation costs
// O(groups * columns^2) after a single O(rows * columns^2) pass.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "covfar/covariates.hpp"
#include "covfar/errors.hpp"
#include "covfar/stats.hpp"

namespace covfar {

struct FittedModel {
    std::vector<DesignColumn> columns;     // retained columns, intercept first
    std::vector<double> coefficients;
    std::vector<double> standard_errors;
    double group_variance = 0.0;           // sigma_u^2
    double scale = 0.0;                    // residual sigma^2
    double theta = 0.0;                    // sigma_u^2 / sigma^2
    double reml_loglik = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    std::size_t n_observations = 0;
    std::size_t n_groups = 0;
    std::size_t min_group_size = 0;
    std::size_t max_group_size = 0;
    double mean_group_size = 0.0;
    std::vector<std::string> dropped_columns;  // all-zero columns removed before the fit
    CovariateSpec spec;

    const DesignColumn* find_column(std::string_view covariate, std::string_view level,
                                    std::size_t* index_out = nullptr) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i].covariate == covariate && columns[i].level == level) {
                if (index_out) *index_out = i;
                return &columns[i];
            }
        }
        return nullptr;
    }
};

struct CoefficientStat {
    std::string covariate;
    std::string level;
    double coef = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = std::numeric_limits<double>::quiet_NaN();   // NaN for reference rows
    bool is_reference = false;
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

struct RemlSolution {
    double loglik = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd gls_information;   // X' H^-1 X at this theta
    double sigma2 = 0.0;
};

// Sufficient statistics of a design after dropping all-zero columns.
class RemlProblem {
public:
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t g = 0;
    Eigen::MatrixXd xtx;
    Eigen::VectorXd xty;
    double yty = 0.0;
    std::vector<Eigen::VectorXd> group_x_sums;
    std::vector<double> group_y_sums;
    std::vector<std::size_t> group_sizes;
    std::vector<DesignColumn> columns;
    std::vector<std::string> dropped;

    static RemlProblem build(const DesignMatrix& design) {
        RemlProblem prob;
        prob.n = design.n_rows();
        prob.g = design.group_labels.size();
        const std::size_t p_all = design.n_cols();
        if (prob.g < 2) {
            throw Error::validation("fit_reml: need at least 2 groups, have " +
                                    std::to_string(prob.g));
        }

        std::vector<std::size_t> keep;
        for (std::size_t j = 0; j < p_all; ++j) {
            bool any = false;
            for (std::size_t i = 0; i < prob.n && !any; ++i) {
                any = design.at(i, j) != 0.0;
            }
            if (any) {
                keep.push_back(j);
                prob.columns.push_back(design.columns[j]);
            } else {
                prob.dropped.push_back(design.columns[j].name);
            }
        }
        prob.p = keep.size();
        if (prob.n <= prob.p) {
            throw Error::validation("fit_reml: need more observations (" + std::to_string(prob.n) +
                                    ") than columns (" + std::to_string(prob.p) + ")");
        }

        prob.xtx = Eigen::MatrixXd::Zero(prob.p, prob.p);
        prob.xty = Eigen::VectorXd::Zero(prob.p);
        prob.group_x_sums.assign(prob.g, Eigen::VectorXd::Zero(prob.p));
        prob.group_y_sums.assign(prob.g, 0.0);
        prob.group_sizes.assign(prob.g, 0);

        Eigen::VectorXd row(prob.p);
        for (std::size_t i = 0; i < prob.n; ++i) {
            for (std::size_t j = 0; j < prob.p; ++j) row[j] = design.at(i, keep[j]);
            const double yi = design.y[i];
            prob.xtx.selfadjointView<Eigen::Lower>().rankUpdate(row, 1.0);
            prob.xty.noalias() += yi * row;
            prob.yty += yi * yi;
            const std::size_t gi = design.group_index[i];
            prob.group_x_sums[gi] += row;
            prob.group_y_sums[gi] += yi;
            ++prob.group_sizes[gi];
        }
        prob.xtx = prob.xtx.selfadjointView<Eigen::Lower>();

        prob.check_rank();
        return prob;
    }

    // Greedy forward selection over the Gram matrix; an exact linear
    // dependence leaves a residual diagonal near zero.
    void check_rank() const {
        const double tol = 1e-10 * xtx.diagonal().maxCoeff();
        std::vector<std::size_t> kept;
        std::vector<std::string> dependent;
        for (std::size_t j = 0; j < p; ++j) {
            double resid = xtx(j, j);
            if (!kept.empty()) {
                Eigen::MatrixXd sub(kept.size(), kept.size());
                Eigen::VectorXd cross(kept.size());
                for (std::size_t a = 0; a < kept.size(); ++a) {
                    cross[a] = xtx(kept[a], j);
                    for (std::size_t b = 0; b < kept.size(); ++b) sub(a, b) = xtx(kept[a], kept[b]);
                }
                resid -= cross.dot(sub.ldlt().solve(cross));
            }
            if (resid > tol) {
                kept.push_back(j);
            } else {
                dependent.push_back(columns[j].name);
            }
        }
        if (!dependent.empty()) {
            std::string msg = "fit_reml: design matrix is rank deficient; dependent columns:";
            for (const auto& name : dependent) msg += " '" + name + "'";
            throw Error::numerical(msg);
        }
    }

    RemlSolution solve(double theta, bool want_information) const {
        Eigen::MatrixXd a = xtx;
        Eigen::VectorXd b = xty;
        double q = yty;
        double logdet_h = 0.0;
        for (std::size_t i = 0; i < g; ++i) {
            const double ni = static_cast<double>(group_sizes[i]);
            const double shrink = theta / (1.0 + ni * theta);
            a.noalias() -= shrink * group_x_sums[i] * group_x_sums[i].transpose();
            b.noalias() -= shrink * group_y_sums[i] * group_x_sums[i];
            q -= shrink * group_y_sums[i] * group_y_sums[i];
            logdet_h += std::log1p(ni * theta);
        }

        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) {
            throw Error::numerical("fit_reml: GLS normal equations are not positive definite at theta=" +
                                   csv::to_string(theta));
        }
        RemlSolution sol;
        sol.beta = llt.solve(b);
        const double resid = q - sol.beta.dot(b);
        const double df = static_cast<double>(n - p);
        if (!(resid > 0.0) || !std::isfinite(resid)) {
            throw Error::numerical("fit_reml: non-positive residual quadratic form at theta=" +
                                   csv::to_string(theta));
        }
        double logdet_a = 0.0;
        for (std::size_t j = 0; j < p; ++j) logdet_a += std::log(llt.matrixLLT()(j, j));
        logdet_a *= 2.0;

        sol.sigma2 = resid / df;
        sol.loglik = -0.5 * (df * (kLog2Pi + 1.0 + std::log(sol.sigma2)) + logdet_h + logdet_a);
        if (!std::isfinite(sol.loglik)) {
            throw Error::numerical("fit_reml: non-finite restricted likelihood at theta=" +
                                   csv::to_string(theta));
        }
        if (want_information) sol.gls_information = a;
        return sol;
    }

    double loglik(double theta) const { return solve(theta, false).loglik; }

    // Analytic derivative of the profiled restricted log-likelihood. With
    // c_i' = (1 + n_i theta)^-2 and group residual sums d_i = t_i - s_i'beta,
    // the residual form differentiates to r' = -sum c_i' d_i^2 and
    // tr(A^-1 A') = -sum c_i' s_i' A^-1 s_i.
    double dloglik(double theta) const {
        Eigen::MatrixXd a = xtx;
        Eigen::VectorXd b = xty;
        double q = yty;
        for (std::size_t i = 0; i < g; ++i) {
            const double ni = static_cast<double>(group_sizes[i]);
            const double shrink = theta / (1.0 + ni * theta);
            a.noalias() -= shrink * group_x_sums[i] * group_x_sums[i].transpose();
            b.noalias() -= shrink * group_y_sums[i] * group_x_sums[i];
            q -= shrink * group_y_sums[i] * group_y_sums[i];
        }
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) {
            throw Error::numerical("fit_reml: GLS normal equations are not positive definite at theta=" +
                                   csv::to_string(theta));
        }
        const Eigen::VectorXd beta = llt.solve(b);
        const double resid = q - beta.dot(b);

        double r_prime = 0.0;
        double trace_term = 0.0;
        double h_term = 0.0;
        for (std::size_t i = 0; i < g; ++i) {
            const double ni = static_cast<double>(group_sizes[i]);
            const double denom = 1.0 + ni * theta;
            const double cp = 1.0 / (denom * denom);
            const double d = group_y_sums[i] - group_x_sums[i].dot(beta);
            r_prime -= cp * d * d;
            trace_term -= cp * group_x_sums[i].dot(llt.solve(group_x_sums[i]));
            h_term += ni / denom;
        }
        const double df = static_cast<double>(n - p);
        return -0.5 * (df * r_prime / resid + h_term + trace_term);
    }
};

struct BrentResult {
    double x = 0.0;
    double fx = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

// Brent's minimizer on [lo, hi]: golden-section fallback with parabolic
// interpolation steps. Stops when the bracket is tight or the best function
// value stops moving by more than value_tol.
template <typename F>
BrentResult brent_minimize(F&& f, double lo, double hi, double x_tol, double value_tol,
                           std::size_t max_iterations) {
    constexpr double kGolden = 0.3819660112501051;
    BrentResult res;
    double a = lo, b = hi;
    double x = a + kGolden * (b - a);
    double w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;

    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        ++res.iterations;
        const double mid = 0.5 * (a + b);
        const double tol1 = x_tol * (std::fabs(x) + 1.0);
        const double tol2 = 2.0 * tol1;
        if (std::fabs(x - mid) <= tol2 - 0.5 * (b - a)) {
            res.converged = true;
            break;
        }
        double u;
        bool parabolic = false;
        if (std::fabs(e) > tol1) {
            const double r = (x - w) * (fx - fv);
            double qd = (x - v) * (fx - fw);
            double num = (x - v) * qd - (x - w) * r;
            qd = 2.0 * (qd - r);
            if (qd > 0.0) num = -num;
            qd = std::fabs(qd);
            const double e_prev = e;
            e = d;
            if (std::fabs(num) < std::fabs(0.5 * qd * e_prev) && num > qd * (a - x) &&
                num < qd * (b - x)) {
                d = num / qd;
                u = x + d;
                if (u - a < tol2 || b - u < tol2) d = mid > x ? tol1 : -tol1;
                parabolic = true;
            }
        }
        if (!parabolic) {
            e = (x < mid ? b : a) - x;
            d = kGolden * e;
        }
        u = std::fabs(d) >= tol1 ? x + d : x + (d > 0.0 ? tol1 : -tol1);
        const double fu = f(u);
        const double prev_best = fx;
        if (fu <= fx) {
            if (u < x) b = x; else a = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
        if (std::fabs(prev_best - fx) < value_tol && b - a < 1e-3 * (std::fabs(x) + 1.0)) {
            res.converged = true;
            break;
        }
    }
    res.x = x;
    res.fx = fx;
    return res;
}

} // namespace detail

// Restricted log-likelihood with beta and sigma^2 profiled out, as a
// function of the variance ratio theta = sigma_u^2 / sigma^2.
inline double profiled_loglik(double theta, const DesignMatrix& design) {
    if (!(theta >= 0.0) || !std::isfinite(theta)) {
        throw Error::validation("profiled_loglik: theta must be finite and >= 0");
    }
    return detail::RemlProblem::build(design).loglik(theta);
}

// GLS coefficients at a fixed variance ratio; theta = 0 reduces to OLS.
inline std::vector<double> gls_coefficients(double theta, const DesignMatrix& design) {
    if (!(theta >= 0.0) || !std::isfinite(theta)) {
        throw Error::validation("gls_coefficients: theta must be finite and >= 0");
    }
    const detail::RemlProblem prob = detail::RemlProblem::build(design);
    const detail::RemlSolution sol = prob.solve(theta, false);
    return std::vector<double>(sol.beta.data(), sol.beta.data() + prob.p);
}

inline FittedModel fit_reml(const DesignMatrix& design) {
    const detail::RemlProblem prob = detail::RemlProblem::build(design);

    // theta = 0 (no group effect) is always a candidate; the optimizer works
    // on t = log(theta) where the likelihood is smooth.
    const double ll_zero = prob.loglik(0.0);

    double t_lo = std::log(1e-9);
    double t_hi = std::log(1e4);
    const double t_step = std::log(10.0) / 3.0;
    std::size_t grid_evals = 0;

    double best_t = t_lo;
    double best_ll = -std::numeric_limits<double>::infinity();
    auto scan = [&](double from, double to) {
        for (double t = from; t <= to + 1e-12; t += t_step) {
            const double ll = prob.loglik(std::exp(t));
            ++grid_evals;
            if (ll > best_ll) {
                best_ll = ll;
                best_t = t;
            }
        }
    };
    scan(t_lo, t_hi);
    while (best_t > t_hi - t_step * 0.5 && t_hi < std::log(1e12)) {
        const double from = t_hi + t_step;
        t_hi = t_hi + std::log(100.0);
        scan(from, t_hi);
    }

    const auto brent = detail::brent_minimize(
        [&](double t) { return -prob.loglik(std::exp(t)); },
        best_t - t_step, best_t + t_step, 1e-11, 1e-10, 200);

    double theta_hat = std::exp(brent.x);
    std::size_t polish_iterations = 0;

    // Bisection on the analytic gradient pins the optimum to machine
    // precision; the Brent result alone moves at ~1e-7 under row
    // permutations because the likelihood is flat near the maximum.
    {
        double lo = theta_hat * 0.25;
        double hi = theta_hat * 4.0;
        double g_lo = prob.dloglik(lo);
        double g_hi = prob.dloglik(hi);
        for (int expand = 0; expand < 8 && g_lo < 0.0 && lo > 1e-14; ++expand) {
            lo *= 0.25;
            g_lo = prob.dloglik(lo);
        }
        for (int expand = 0; expand < 8 && g_hi > 0.0 && hi < 1e13; ++expand) {
            hi *= 4.0;
            g_hi = prob.dloglik(hi);
        }
        if (g_lo > 0.0 && g_hi < 0.0) {
            for (int iter = 0; iter < 80 && hi - lo > 1e-13 * (1.0 + lo); ++iter) {
                ++polish_iterations;
                const double mid = 0.5 * (lo + hi);
                if (prob.dloglik(mid) > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            theta_hat = 0.5 * (lo + hi);
        }
    }

    double ll_hat = prob.loglik(theta_hat);
    bool converged = brent.converged;
    if (ll_zero >= ll_hat) {
        theta_hat = 0.0;
        ll_hat = ll_zero;
        converged = true;   // boundary optimum is a valid REML solution
    }

    const detail::RemlSolution sol = prob.solve(theta_hat, true);

    FittedModel model;
    model.columns = prob.columns;
    model.coefficients.assign(sol.beta.data(), sol.beta.data() + prob.p);
    const Eigen::MatrixXd cov =
        sol.sigma2 * sol.gls_information.llt().solve(Eigen::MatrixXd::Identity(prob.p, prob.p));
    model.standard_errors.resize(prob.p);
    for (std::size_t j = 0; j < prob.p; ++j) model.standard_errors[j] = std::sqrt(cov(j, j));
    model.scale = sol.sigma2;
    model.theta = theta_hat;
    model.group_variance = theta_hat * sol.sigma2;
    model.reml_loglik = ll_hat;
    model.converged = converged;
    model.iterations = grid_evals + brent.iterations + polish_iterations;
    model.n_observations = prob.n;
    model.n_groups = prob.g;
    model.min_group_size = *std::min_element(prob.group_sizes.begin(), prob.group_sizes.end());
    model.max_group_size = *std::max_element(prob.group_sizes.begin(), prob.group_sizes.end());
    model.mean_group_size = static_cast<double>(prob.n) / static_cast<double>(prob.g);
    model.dropped_columns = prob.dropped;
    model.spec = design.spec;
    return model;
}

// Wald inference per coefficient: z = coef/SE, two-sided normal p-value,
// CI = coef +/- z_(1+confidence)/2 * SE. Reference levels are emitted with
// coefficient 0 and no CI or p-value.
inline std::vector<CoefficientStat> wald_stats(const FittedModel& model,
                                               double confidence = 0.95) {
    if (!model.converged) {
        throw Error::numerical("wald_stats: model did not converge");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw Error::validation("wald_stats: confidence must lie in (0,1)");
    }
    const double zq = norm_ppf(0.5 * (1.0 + confidence));

    std::vector<CoefficientStat> stats;
    auto fitted_stat = [&](std::size_t index) {
        const double coef = model.coefficients[index];
        const double se = model.standard_errors[index];
        if (se == 0.0) {
            throw Error::numerical("wald_stats: zero standard error for '" +
                                   model.columns[index].name + "'");
        }
        CoefficientStat s;
        s.covariate = model.columns[index].covariate;
        s.level = model.columns[index].level;
        s.coef = coef;
        s.se = se;
        s.ci_low = coef - zq * se;
        s.ci_high = coef + zq * se;
        s.p_value = wald_p_value(coef / se);
        return s;
    };

    stats.push_back(fitted_stat(0));   // intercept is always column 0
    for (const auto& cov : model.spec.covariates) {
        for (std::size_t i = 0; i < cov.levels.size(); ++i) {
            if (i == 0) {
                CoefficientStat ref;
                ref.covariate = cov.name;
                ref.level = cov.levels[i];
                ref.is_reference = true;
                stats.push_back(ref);
                continue;
            }
            std::size_t index = 0;
            if (model.find_column(cov.name, cov.levels[i], &index) != nullptr) {
                stats.push_back(fitted_stat(index));
            }
            // levels dropped as empty columns have no row to report
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const FittedModel& model) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : model.columns) {
        cols.push_back({{"name", c.name}, {"covariate", c.covariate}, {"level", c.level}});
    }
    return nlohmann::json{{"columns", cols},
                          {"coefficients", model.coefficients},
                          {"standard_errors", model.standard_errors},
                          {"group_variance", model.group_variance},
                          {"scale", model.scale},
                          {"theta", model.theta},
                          {"reml_loglik", model.reml_loglik},
                          {"converged", model.converged},
                          {"iterations", model.iterations},
                          {"n_observations", model.n_observations},
                          {"n_groups", model.n_groups},
                          {"min_group_size", model.min_group_size},
                          {"max_group_size", model.max_group_size},
                          {"mean_group_size", model.mean_group_size},
                          {"dropped_columns", model.dropped_columns},
                          {"spec", to_json(model.spec)}};
}

inline FittedModel fitted_model_from_json(const nlohmann::json& j) {
    FittedModel model;
    for (const auto& c : j.at("columns")) {
        model.columns.push_back({c.at("name").get<std::string>(),
                                 c.at("covariate").get<std::string>(),
                                 c.at("level").get<std::string>()});
    }
    model.coefficients = j.at("coefficients").get<std::vector<double>>();
    model.standard_errors = j.at("standard_errors").get<std::vector<double>>();
    model.group_variance = j.at("group_variance").get<double>();
    model.scale = j.at("scale").get<double>();
    model.theta = j.at("theta").get<double>();
    model.reml_loglik = j.at("reml_loglik").get<double>();
    model.converged = j.at("converged").get<bool>();
    model.iterations = j.at("iterations").get<std::size_t>();
    model.n_observations = j.at("n_observations").get<std::size_t>();
    model.n_groups = j.at("n_groups").get<std::size_t>();
    model.min_group_size = j.at("min_group_size").get<std::size_t>();
    model.max_group_size = j.at("max_group_size").get<std::size_t>();
    model.mean_group_size = j.at("mean_group_size").get<double>();
    model.dropped_columns = j.at("dropped_columns").get<std::vector<std::string>>();
    model.spec = covariate_spec_from_json(j.at("spec"));
    return model;
}

inline nlohmann::json to_json(const CoefficientStat& s) {
    nlohmann::json j{{"covariate", s.covariate}, {"level", s.level},
                     {"coef", s.coef},           {"se", s.se},
                     {"ci_low", s.ci_low},       {"ci_high", s.ci_high},
                     {"is_reference", s.is_reference}};
    if (std::isnan(s.p_value)) {
        j["p_value"] = nullptr;
    } else {
        j["p_value"] = s.p_value;
    }
    return j;
}

inline CoefficientStat coefficient_stat_from_json(const nlohmann::json& j) {
    CoefficientStat s;
    s.covariate = j.at("covariate").get<std::string>();
    s.level = j.at("level").get<std::string>();
    s.coef = j.at("coef").get<double>();
    s.se = j.at("se").get<double>();
    s.ci_low = j.at("ci_low").get<double>();
    s.ci_high = j.at("ci_high").get<double>();
    s.is_reference = j.at("is_reference").get<bool>();
    const auto& p = j.at("p_value");
    s.p_value = p.is_null() ? std::numeric_limits<double>::quiet_NaN() : p.get<double>();
    return s;
}

} // namespace covfar
