#include "ergolab/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/LevenbergMarquardt>

#include "ergolab/csv.hpp"
#include "ergolab/error.hpp"

namespace ergolab {

namespace {

// Weighted residuals (L + c exp(-rate T) - w) / s for parameters (L, c, rate).
struct DecayFunctor : Eigen::DenseFunctor<double> {
    DecayFunctor(const Vec& t, const Vec& w, const Vec& s)
        : Eigen::DenseFunctor<double>(3, static_cast<int>(t.size())), t_(t), w_(w), s_(s) {}

    int operator()(const InputType& p, ValueType& r) const {
        r = ((p[0] + p[1] * (-p[2] * t_.array()).exp()) - w_.array()) / s_.array();
        return 0;
    }

    int df(const InputType& p, JacobianType& j) const {
        const Eigen::ArrayXd e = (-p[2] * t_.array()).exp();
        j.col(0) = (1.0 / s_.array()).matrix();
        j.col(1) = (e / s_.array()).matrix();
        j.col(2) = (-p[1] * t_.array() * e / s_.array()).matrix();
        return 0;
    }

    Vec t_, w_, s_;
};

std::string describe_curve(const std::vector<WPoint>& points) {
    std::ostringstream out;
    out << "curve (T, w, se):";
    for (const auto& p : points)
        out << " (" << format_double(p.T) << ", " << format_double(p.w) << ", " << format_double(p.se) << ")";
    return out.str();
}

double growth_exponent(const DriverSpec& driver, const TerminalSpec& terminal) {
    return std::max(driver.growth_mu, terminal.growth_mu);
}

}  // namespace

WPoint compute_w(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                 const ErgodicSolution& ergodic, double T, const Vec& x, const SolverParams& solver) {
    if (ergodic.dim != model.dim) throw Error(ErrorCode::InvalidArgument, "ergodic solution has the wrong dimension");
    const BsdeSolution sol = solve_bsde(model, driver, terminal, x, solver.config(T));
    WPoint p;
    p.T = T;
    p.y0 = sol.y0;
    p.y0_se = sol.y0_se;
    const Vec state = x.head(model.dim);
    p.w = sol.y0 - ergodic.lambda * T - ergodic_v(ergodic, state);
    const double lambda_se = 0.5 * ergodic.lambda_ci * T;
    const double v_se = ergodic_v_se(ergodic, state);
    p.se = std::sqrt(sol.y0_se * sol.y0_se + lambda_se * lambda_se + v_se * v_se);
    return p;
}

LimitFit fit_limit_and_rate(const std::vector<WPoint>& points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 4) throw Error(ErrorCode::InvalidArgument, "the limit fit needs at least four points");
    std::vector<WPoint> sorted = points;
    std::sort(sorted.begin(), sorted.end(), [](const WPoint& a, const WPoint& b) { return a.T < b.T; });
    Vec t(n), w(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = sorted[static_cast<std::size_t>(i)];
        if (!std::isfinite(p.w) || !std::isfinite(p.se) || p.se < 0.0)
            throw Error(ErrorCode::FitDiverged, "non-finite input; " + describe_curve(sorted));
        t[i] = p.T;
        w[i] = p.w;
        s[i] = p.se;
    }

    LimitFit fit;
    const double mean = w.mean();
    if (((w.array() - mean).abs() <= 3.0 * s.array()).all()) {
        fit.L_hat = mean;
        fit.rate_hat = std::numeric_limits<double>::quiet_NaN();
        fit.residual_rms = std::sqrt((w.array() - mean).square().mean());
        return fit;
    }
    // Exact curves carry zero errors; weight them uniformly.
    const bool exact = (s.array() <= 0.0).any();
    if (exact) s.setOnes();

    const double L0 = w[n - 1];
    double rate0 = 1.0;
    double amp0 = w[0] - L0;
    {
        std::vector<double> tt, ll;
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            const double gap = std::abs(w[i] - L0);
            if (gap > 0.0) {
                tt.push_back(t[i]);
                ll.push_back(std::log(gap));
            }
        }
        if (tt.size() >= 2) {
            const Eigen::Map<const Vec> tv(tt.data(), static_cast<Eigen::Index>(tt.size()));
            const Eigen::Map<const Vec> lv(ll.data(), static_cast<Eigen::Index>(ll.size()));
            const Vec tc = tv.array() - tv.mean();
            const double slope = tc.dot(lv) / tc.squaredNorm();
            if (std::isfinite(slope) && slope < 0.0) {
                rate0 = -slope;
                const double intercept = lv.mean() - slope * tv.mean();
                amp0 = std::copysign(std::exp(intercept), w[0] - L0);
            }
        }
    }

    DecayFunctor functor(t, w, s);
    Eigen::LevenbergMarquardt<DecayFunctor> lm(functor);
    lm.setMaxfev(2000);
    Vec params(3);
    params << L0, amp0, rate0;
    const auto status = lm.minimize(params);
    fit.evaluations = static_cast<int>(lm.nfev());
    const bool failed = status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters ||
                        status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation;
    if (failed || !params.allFinite() || !(params[2] > 0.0))
        throw Error(ErrorCode::FitDiverged, "no decaying fit (L, c, rate) = (" + format_double(params[0]) + ", " +
                                                format_double(params[1]) + ", " + format_double(params[2]) + "); " +
                                                describe_curve(sorted));
    const Vec model_w = (params[0] + params[1] * (-params[2] * t.array()).exp()).matrix();
    fit.residual_rms = std::sqrt((model_w - w).squaredNorm() / static_cast<double>(n));
    // A decaying curve that cannot describe the data is no fit at all.
    const double misfit = std::sqrt(((model_w - w).array() / s.array()).square().mean());
    const double range = w.maxCoeff() - w.minCoeff();
    if (exact ? fit.residual_rms > 1e-3 * range : misfit > 5.0)
        throw Error(ErrorCode::FitDiverged, "decaying model misfits by " + format_double(exact ? fit.residual_rms : misfit) +
                                                "; " + describe_curve(sorted));
    fit.L_hat = params[0];
    fit.amplitude_hat = params[1];
    fit.rate_hat = params[2];
    fit.rate_resolved = true;
    return fit;
}

VEstimate approximate_v_from_finite_horizon(const Model& model, const DriverSpec& driver,
                                            const TerminalSpec& terminal, double T, const Vec& x,
                                            const SolverParams& solver) {
    const BsdeConfig config = solver.config(T);
    const BsdeSolution at_x = solve_bsde(model, driver, terminal, x, config);
    const BsdeSolution at_origin = solve_bsde(model, driver, terminal, Vec::Zero(x.size()), config);
    VEstimate v;
    v.y0_x = at_x.y0;
    v.y0_origin = at_origin.y0;
    v.value = at_x.y0 - at_origin.y0;
    v.std_error = sample_mean(Vec(at_x.pathwise_y0 - at_origin.pathwise_y0)).std_error;
    return v;
}

GrowthSweep x_growth_sweep(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                           const ErgodicSolution& ergodic, double T, const std::vector<Vec>& x_list,
                           const SolverParams& solver) {
    std::vector<Vec> xs = x_list;
    std::sort(xs.begin(), xs.end(), [](const Vec& a, const Vec& b) { return a.norm() < b.norm(); });
    std::vector<double> norms;
    for (const Vec& x : xs) {
        if (x.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "sweep state has the wrong dimension");
        if (x.norm() > 0.0 && (norms.empty() || x.norm() > norms.back())) norms.push_back(x.norm());
    }
    if (norms.size() < 2) throw Error(ErrorCode::InvalidArgument, "x_list needs two distinct nonzero norms");

    GrowthSweep sweep;
    sweep.T = T;
    sweep.mu = growth_exponent(driver, terminal);
    const BsdeConfig config = solver.config(T);
    const BsdeSolution origin = solve_bsde(model, driver, terminal, Vec::Zero(model.dim), config);
    for (const Vec& x : xs) {
        const BsdeSolution sol = solve_bsde(model, driver, terminal, x, config);
        GrowthRow row;
        row.x = x;
        const double v = ergodic_v(ergodic, x);
        const double v_se = ergodic_v_se(ergodic, x);
        row.diff = std::abs(sol.y0 - origin.y0 - v);
        const double paired = sample_mean(Vec(sol.pathwise_y0 - origin.pathwise_y0)).std_error;
        row.se = std::hypot(paired, v_se);
        row.shape = 1.0 + std::pow(x.norm(), 2.0 + sweep.mu);
        row.ratio = row.diff / row.shape;
        sweep.rows.push_back(row);
    }
    sweep.bounded = true;
    double peak = sweep.rows.front().ratio;
    for (std::size_t i = 1; i < sweep.rows.size(); ++i) {
        const auto& r = sweep.rows[i];
        if (r.ratio > peak + 3.0 * r.se / r.shape) sweep.bounded = false;
        peak = std::max(peak, r.ratio);
    }
    return sweep;
}

TelescopeCheck telescoping_check(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal, double T,
                                 double S, const Vec& x, const SolverParams& solver) {
    if (terminal.kind != TerminalKind::State)
        throw Error(ErrorCode::InvalidArgument, "telescoping check needs a Markovian terminal");
    if (!(S > 0.0)) throw Error(ErrorCode::InvalidArgument, "shift S must be positive");
    // Start the long run where the linear flow reaches x at time S, so that x
    // sits in the bulk of the forward law.
    const Vec start = (x.array() * (-model.a_eigenvalues.array() * S).exp()).matrix();
    const BsdeConfig long_config = solver.config(T + S);
    const BsdeSolution long_sol = solve_bsde(model, driver, terminal, start, long_config);
    const int n = std::clamp(static_cast<int>(std::lround(S / long_sol.step_size())), 0, long_sol.steps());
    const FieldValue field = evaluate_fields(long_sol, n, x);
    const BsdeSolution short_sol = solve_bsde(model, driver, terminal, x, solver.config(T));

    TelescopeCheck c;
    c.long_value = field.y;
    c.long_se = field.y_se;
    c.short_value = short_sol.y0;
    c.short_se = short_sol.y0_se;
    c.extrapolated = field.extrapolated;
    c.difference = std::abs(c.long_value - c.short_value);
    c.allowance = 3.0 * std::hypot(c.long_se, c.short_se) + 0.02;
    c.pass = c.difference <= c.allowance;
    return c;
}

AsymptoticsReport analyze_asymptotics(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                                      const ErgodicSolution& ergodic, const Vec& T_grid, const Vec& x,
                                      const SolverParams& solver) {
    for (Eigen::Index i = 1; i < T_grid.size(); ++i)
        if (!(T_grid[i] > T_grid[i - 1])) throw Error(ErrorCode::InvalidArgument, "T_grid must be increasing");
    AsymptoticsReport rep;
    rep.x = x;
    for (Eigen::Index i = 0; i < T_grid.size(); ++i)
        rep.points.push_back(compute_w(model, driver, terminal, ergodic, T_grid[i], x, solver));
    rep.fit = fit_limit_and_rate(rep.points);

    // Distances to the limit, allowing one rise inside the joint noise.
    int within_noise = 0;
    int beyond_noise = 0;
    for (std::size_t i = 1; i < rep.points.size(); ++i) {
        const auto& a = rep.points[i - 1];
        const auto& b = rep.points[i];
        const double rise = std::abs(b.w - rep.fit.L_hat) - std::abs(a.w - rep.fit.L_hat);
        if (rise > 0.0) (rise <= 3.0 * std::hypot(a.se, b.se) ? within_noise : beyond_noise)++;
    }
    rep.bounds.inversions = within_noise + beyond_noise;
    rep.bounds.monotone = beyond_noise == 0 && within_noise <= 1;
    rep.bounds.rate_positive = rep.fit.rate_resolved && rep.fit.rate_hat > 0.0;
    rep.bounds.rate_above_2eta = rep.fit.rate_resolved && rep.fit.rate_hat > 2.0 * model.eta * 1.2;
    return rep;
}

void write_w_csv(const AsymptoticsReport& report, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (const auto& p : report.points) rows.push_back({p.T, p.w, p.se, std::abs(p.w - report.fit.L_hat)});
    write_numeric_table(path, {"T", "w", "se", "abs_w_minus_L"}, rows);
}

void write_growth_csv(const GrowthSweep& sweep, const std::string& path) {
    std::vector<std::string> header;
    const auto dim = sweep.rows.empty() ? 0 : sweep.rows.front().x.size();
    for (Eigen::Index k = 0; k < dim; ++k) header.push_back("x" + std::to_string(k + 1));
    for (const char* name : {"diff", "se", "shape", "ratio"}) header.push_back(name);
    std::vector<std::vector<double>> rows;
    for (const auto& r : sweep.rows) {
        std::vector<double> row(r.x.data(), r.x.data() + r.x.size());
        row.insert(row.end(), {r.diff, r.se, r.shape, r.ratio});
        rows.push_back(std::move(row));
    }
    write_numeric_table(path, header, rows);
}

}  // namespace ergolab
