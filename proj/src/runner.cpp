#include "ergolab/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>

#include "ergolab/asymptotics.hpp"
#include "ergolab/control.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/error.hpp"
#include "ergolab/sde.hpp"

namespace ergolab {

bool RunResult::passed() const {
    for (const Verdict& v : verdicts)
        if (v.hard && !v.pass) return false;
    return true;
}

ResolvedProblem resolve_problem(const ProblemSpec& spec) {
    ResolvedProblem r;
    if (!spec.preset.empty()) {
        Preset p = preset(spec.preset);
        r.model = std::move(p.model);
        r.driver = std::move(p.driver);
        r.terminal = std::move(p.terminal);
        r.closed_form = std::move(p.closed_form);
        return r;
    }
    ModelSpec ms;
    ms.a_eigenvalues = spec.a_eigenvalues;
    ms.g_matrix = spec.g_matrix;
    ms.drift = spec.drift;
    ms.drift_scale = spec.drift_scale;
    r.model = build_model(ms);
    const int d = r.model.dim;
    if (spec.driver == "zero") r.driver = zero_driver();
    else if (spec.driver == "constant") r.driver = constant_driver(spec.driver_c);
    else if (spec.driver == "linear") r.driver = linear_driver(spec.driver_z, spec.driver_x, d);
    else throw Error(ErrorCode::InvalidArgument, "unknown driver '" + spec.driver + "'");
    if (spec.terminal == "zero") r.terminal = constant_terminal(0.0);
    else if (spec.terminal == "constant") r.terminal = constant_terminal(spec.terminal_c);
    else if (spec.terminal == "linear") r.terminal = linear_terminal();
    else if (spec.terminal == "quadratic") r.terminal = quadratic_terminal();
    else if (spec.terminal == "running-max-squared") r.terminal = running_max_squared_terminal();
    else throw Error(ErrorCode::InvalidArgument, "unknown terminal '" + spec.terminal + "'");
    validate_driver(r.driver, d);
    validate_terminal(r.terminal, d);
    return r;
}

namespace {

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string strip_code(const Error& e) {
    const std::string what = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

// Runs one stage, naming it in any error that escapes.
template <typename F>
auto stage(const char* name, std::ostream* log, F&& f) {
    if (log) *log << "[" << name << "]\n" << std::flush;
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.code(), std::string(name) + ": " + strip_code(e));
    }
}

class Run {
public:
    Run(const ExperimentPlan& plan, std::ostream* log) : plan_(plan), log_(log), dir_(plan.output_dir) {}

    std::string path(const std::string& file) {
        result_.files.push_back(file);
        return (dir_ / file).string();
    }

    void verdict(const std::string& name, bool pass, const std::string& detail, bool hard = true) {
        result_.verdicts.push_back({name, pass, hard, detail});
        if (log_) *log_ << "  " << (hard ? (pass ? "PASS " : "FAIL ") : "INFO ") << name << "  " << detail << '\n';
    }

    template <typename F>
    auto step(const char* name, F&& f) {
        return stage(name, log_, std::forward<F>(f));
    }

    RunResult finish() {
        std::ofstream out(path("verdicts.txt"), std::ios::binary);
        for (const Verdict& v : result_.verdicts)
            out << (v.hard ? (v.pass ? "PASS" : "FAIL") : "INFO") << ' ' << v.name << ' ' << v.detail << '\n';
        if (!out) throw Error(ErrorCode::IoError, "cannot write verdicts.txt");
        return result_;
    }

    const ExperimentPlan& plan_;
    std::ostream* log_;
    std::filesystem::path dir_;
    RunResult result_;
};

std::string tag(std::size_t i) { return "_x" + std::to_string(i); }

std::string point(const Vec& x) {
    std::string s = "(";
    for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? "," : "") + fmt(x[i]);
    return s + ")";
}

ErgodicSolution solve_ergodic(Run& run, const ResolvedProblem& pr) {
    const ExperimentPlan& plan = run.plan_;
    return run.step("ergodic", [&] {
        if (plan.ergodic_method == ErgodicMethod::Discounted) {
            ErgodicSolution e = solve_ebsde_discounted(pr.model, pr.driver, plan.discounted, plan.ergodic_solver);
            write_alpha_csv(e, run.path("alpha.csv"));
            return e;
        }
        return solve_ebsde_relative_value(pr.model, pr.driver, plan.relative, plan.ergodic_solver);
    });
}

std::optional<double> expected_lambda(const ExperimentPlan& plan, const ResolvedProblem& pr) {
    if (plan.expect.lambda) return plan.expect.lambda;
    if (pr.closed_form) return pr.closed_form->lambda;
    return std::nullopt;
}

// |a_{k+1}| may exceed |a_k| at most once and then only within two standard errors.
bool decreasing_with_one_inversion(const Vec& value, const Vec& se, int& inversions) {
    inversions = 0;
    for (Eigen::Index i = 1; i < value.size(); ++i) {
        if (value[i] <= value[i - 1]) continue;
        ++inversions;
        if (value[i] - value[i - 1] > 2.0 * std::hypot(se[i], se[i - 1])) return false;
    }
    return inversions <= 1;
}

void lambda_slope(Run& run, const ResolvedProblem& pr) {
    const ExperimentPlan& plan = run.plan_;
    std::vector<SlopeReport> reports;
    for (std::size_t i = 0; i < plan.x_list.size(); ++i) {
        reports.push_back(run.step("slope", [&] {
            return estimate_lambda_slope(pr.model, pr.driver, pr.terminal, plan.T_grid, plan.x_list[i], plan.solver);
        }));
        write_slope_csv(reports.back(), run.path("slope" + tag(i) + ".csv"));
    }
    const SlopeReport& first = reports.front();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const SlopeReport& r = reports[i];
        run.verdict("first_behaviour_bound" + tag(i), r.bounded,
                    "max ratio " + fmt(r.bound_constant) + " shape " + r.bound_shape);
        if (i > 0) {
            const double diff = std::abs(r.lambda_hat - first.lambda_hat);
            run.verdict("x_independent" + tag(i), diff <= r.lambda_ci + first.lambda_ci,
                        "lambda " + fmt(r.lambda_hat) + " vs " + fmt(first.lambda_hat) + " joint ci " +
                            fmt(r.lambda_ci + first.lambda_ci));
        }
    }

    const ErgodicSolution ergodic = solve_ergodic(run, pr);
    save_ergodic(ergodic, run.path("ergodic.txt"));
    const CrossCheck cc = cross_check(ergodic, first);
    run.verdict("discounted_agrees", cc.pass,
                "slope " + fmt(cc.lambda_slope) + " +- " + fmt(cc.ci_slope) + " ergodic " + fmt(cc.lambda_discounted) +
                    " +- " + fmt(cc.ci_discounted));

    const std::optional<double> want = expected_lambda(plan, pr);
    if (want) {
        // A running max adds a sublinear term to Y0(T), which biases the slope;
        // the ergodic estimate does not see the terminal.
        const bool path_dependent = pr.terminal.kind == TerminalKind::RunningMax;
        const double estimate = path_dependent ? ergodic.lambda : first.lambda_hat;
        const double err = std::abs(estimate - *want);
        run.verdict("lambda_expected", err <= plan.expect.lambda_tol,
                    std::string(path_dependent ? "ergodic " : "slope ") + "lambda " + fmt(estimate) + " expected " +
                        fmt(*want) + " tol " + fmt(plan.expect.lambda_tol));
        if (path_dependent)
            run.verdict("slope_bias", true, "slope lambda " + fmt(first.lambda_hat) + " carries the running-max growth", false);
    }

    // |Y0/T - lambda| against the reference constant.
    const double reference = want ? *want : ergodic.lambda;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const SlopeReport& r = reports[i];
        Vec gap(r.horizons.size()), se(r.horizons.size());
        std::vector<std::vector<double>> rows;
        for (Eigen::Index k = 0; k < r.horizons.size(); ++k) {
            gap[k] = std::abs(r.y0[k] / r.horizons[k] - reference);
            se[k] = r.y0_se[k] / r.horizons[k];
            rows.push_back({r.horizons[k], gap[k], se[k]});
        }
        write_numeric_table(run.path("gap" + tag(i) + ".csv"), {"T", "abs_y0_over_T_minus_lambda", "se"}, rows);
        int inversions = 0;
        const bool ok = decreasing_with_one_inversion(gap, se, inversions);
        run.verdict("gap_decreasing" + tag(i), ok,
                    "reference lambda " + fmt(reference) + ", inversions " + std::to_string(inversions));
    }
}

void limit_and_rate(Run& run, const ResolvedProblem& pr) {
    const ExperimentPlan& plan = run.plan_;
    ErgodicSolution ergodic = solve_ergodic(run, pr);
    if (plan.lambda_T_grid.size() >= 3) {
        const SlopeReport slope = run.step("slope", [&] {
            return estimate_lambda_slope(pr.model, pr.driver, pr.terminal, plan.lambda_T_grid, plan.x_list.front(),
                                         plan.ergodic_solver);
        });
        write_slope_csv(slope, run.path("slope.csv"));
        const bool sharper = slope.lambda_ci < ergodic.lambda_ci;
        run.verdict("lambda_source", true,
                    std::string(sharper ? "slope " : "ergodic ") + fmt(sharper ? slope.lambda_hat : ergodic.lambda) +
                        " (slope ci " + fmt(slope.lambda_ci) + ", ergodic ci " + fmt(ergodic.lambda_ci) + ")",
                    false);
        if (sharper) {
            ergodic.lambda = slope.lambda_hat;
            ergodic.lambda_ci = slope.lambda_ci;
            ergodic.method_tags.push_back("slope");
        }
    }
    save_ergodic(ergodic, run.path("ergodic.txt"));

    std::optional<double> want_L = plan.expect.L;
    if (!want_L && pr.closed_form && std::isfinite(pr.closed_form->limit_L)) want_L = pr.closed_form->limit_L;

    for (std::size_t i = 0; i < plan.x_list.size(); ++i) {
        const Vec& x = plan.x_list[i];
        AsymptoticsReport report;
        try {
            report = run.step("asymptotics", [&] {
                return analyze_asymptotics(pr.model, pr.driver, pr.terminal, ergodic, plan.T_grid, x, plan.solver);
            });
        } catch (const Error& e) {
            if (e.code() != ErrorCode::FitDiverged) throw;
            run.verdict("fit" + tag(i), false, e.what());
            continue;
        }
        write_w_csv(report, run.path("w" + tag(i) + ".csv"));
        const LimitFit& fit = report.fit;
        run.verdict("fit" + tag(i), true,
                    "L " + fmt(fit.L_hat) + " rate " + fmt(fit.rate_hat) + " rms " + fmt(fit.residual_rms));
        if (fit.rate_resolved) {
            run.verdict("rate_positive" + tag(i), report.bounds.rate_positive, "rate " + fmt(fit.rate_hat));
            run.verdict("w_monotone" + tag(i), report.bounds.monotone,
                        "inversions " + std::to_string(report.bounds.inversions));
            if (report.bounds.rate_above_2eta)
                run.verdict("rate_above_2eta" + tag(i), true, "rate " + fmt(fit.rate_hat) + " eta " + fmt(pr.model.eta),
                            false);
        } else {
            run.verdict("flat_curve" + tag(i), true, "w within noise of its mean; rate unresolved", false);
        }
        if (want_L) {
            // A flat curve's limit is its mean, as uncertain as its best point.
            double tol = plan.expect.L_tol;
            if (!fit.rate_resolved) {
                double best = std::numeric_limits<double>::infinity();
                for (const WPoint& p : report.points) best = std::min(best, p.se);
                tol += 3.0 * best;
            }
            run.verdict("L_expected" + tag(i), std::abs(fit.L_hat - *want_L) <= tol,
                        "L " + fmt(fit.L_hat) + " expected " + fmt(*want_L) + " tol " + fmt(tol));
            if (!fit.rate_resolved) {
                bool all = true;
                for (const WPoint& p : report.points) all = all && std::abs(p.w - *want_L) <= 3.0 * p.se;
                run.verdict("w_at_L" + tag(i), all, "every w_T within 3 SE of " + fmt(*want_L));
            }
        }
        if (plan.expect.rate) {
            const double rel = std::abs(fit.rate_hat - *plan.expect.rate) / std::abs(*plan.expect.rate);
            run.verdict("rate_expected" + tag(i), fit.rate_resolved && rel <= plan.expect.rate_tol,
                        "rate " + fmt(fit.rate_hat) + " expected " + fmt(*plan.expect.rate) + " rel tol " +
                            fmt(plan.expect.rate_tol));
        }
    }

    std::vector<Vec> nonzero;
    for (const Vec& x : plan.x_list)
        if (x.norm() > 0.0) nonzero.push_back(x);

    if (plan.v_horizon > 0.0 && !nonzero.empty()) {
        const Vec& x = nonzero.front();
        const VEstimate v = run.step("v-approximation", [&] {
            return approximate_v_from_finite_horizon(pr.model, pr.driver, pr.terminal, plan.v_horizon, x, plan.solver);
        });
        std::vector<double> row(x.data(), x.data() + x.size());
        row.insert(row.end(), {plan.v_horizon, v.value, v.std_error});
        std::vector<std::string> header;
        for (Eigen::Index k = 0; k < x.size(); ++k) header.push_back("x" + std::to_string(k + 1));
        header.insert(header.end(), {"T", "v", "se"});
        write_numeric_table(run.path("v_estimate.csv"), header, {row});
        std::optional<double> want_v = plan.expect.v;
        if (!want_v && pr.closed_form) want_v = pr.closed_form->v(x);
        if (want_v)
            run.verdict("v_expected", std::abs(v.value - *want_v) <= plan.expect.v_tol,
                        "v" + point(x) + " " + fmt(v.value) + " expected " + fmt(*want_v) + " tol " +
                            fmt(plan.expect.v_tol));
    }

    bool distinct = false;
    for (const Vec& x : nonzero) distinct = distinct || std::abs(x.norm() - nonzero.front().norm()) > 0.0;
    if (distinct) {
        const GrowthSweep sweep = run.step("growth-sweep", [&] {
            return x_growth_sweep(pr.model, pr.driver, pr.terminal, ergodic, plan.T_grid[plan.T_grid.size() - 1],
                                  nonzero, plan.solver);
        });
        write_growth_csv(sweep, run.path("growth.csv"));
        run.verdict("growth_bounded", sweep.bounded, "shape 1+|x|^(2+mu), mu " + fmt(sweep.mu));
    }
}

void control_expansion(Run& run) {
    const ExperimentPlan& plan = run.plan_;
    const ControlPreset cp = control_preset(plan.problem.control);
    ExpansionParams ep;
    ep.solver = plan.solver;
    ep.ergodic_solver = plan.ergodic_solver;
    ep.discounted = plan.discounted;
    ep.sim_paths = plan.sim_paths;
    ep.long_horizon = plan.long_horizon;
    ep.quadrature = plan.quadrature;
    for (std::size_t i = 0; i < plan.x_list.size(); ++i) {
        const Vec& x = plan.x_list[i];
        const ExpansionReport r =
            run.step("control", [&] { return expansion_report(cp.model, cp.problem, plan.T_grid, x, ep); });
        write_expansion_csv(r, run.path("expansion" + tag(i) + ".csv"));
        const std::string t = tag(i);
        const ExpansionRow& last = r.rows.back();
        run.verdict("weights_normalized" + t, r.weights_normalized, "mean Girsanov weight within 3 SE of 1");
        run.verdict("estimators_agree" + t, r.estimators_agree,
                    "direct " + fmt(last.feedback.J) + " weighted " + fmt(last.feedback_weighted.J) + " at T " +
                        fmt(last.T));
        run.verdict("constant_above_feedback" + t, r.constant_above_feedback, "every constant policy, every T");
        run.verdict("constant_above_value" + t, r.constant_above_value, "every constant policy, every T");
        run.verdict("feedback_matches_value" + t, r.feedback_matches_value,
                    "J " + fmt(last.feedback.J) + " y0 " + fmt(last.y0) + " at T " + fmt(last.T));
        run.verdict("stabilized" + t, r.stabilized,
                    "J - lambda T - v over the last two T: " + fmt(r.rows[r.rows.size() - 2].expansion) + ", " +
                        fmt(last.expansion));
        run.verdict("ergodic_lower_bound" + t, r.ergodic_constant_cost.size() > 0 && r.ergodic_lower_bound,
                    "lambda " + fmt(r.lambda) + " +- " + fmt(r.lambda_ci));
    }

    // Audit trace of the feedback on the shortest horizon.
    const double T = plan.T_grid[0];
    const Vec& x = plan.x_list.front();
    auto sol = std::make_shared<const BsdeSolution>(run.step("control-trace", [&] {
        return solve_bsde(cp.model, hamiltonian_driver(cp.problem, cp.model), control_terminal(cp.problem), x,
                          plan.solver.config(T));
    }));
    ControlledRun cr;
    cr.horizon = T;
    cr.steps = sol->steps();
    cr.paths = 16;
    cr.seed = plan.seed;
    const Policy policy = optimal_policy_from_bsde(sol, cp.problem, cp.model);
    write_trace_csv(trace_policy(cp.model, cp.problem, policy, x, cr, 4), run.path("trace.csv"));
}

void coupling(Run& run, const ResolvedProblem& pr) {
    const ExperimentPlan& plan = run.plan_;
    if (pr.terminal.kind != TerminalKind::State)
        throw Error(ErrorCode::InvalidArgument, "coupling needs a state terminal as the test function");
    const Vec& x = plan.x_list[0];
    const Vec& y = plan.x_list[1];
    const DecayCurve curve = run.step("coupling", [&] {
        return coupling_decay(pr.model, pr.terminal.g, x, y, plan.T_grid, plan.solver.paths, plan.seed,
                              plan.solver.steps_per_unit);
    });
    write_csv(curve, run.path("coupling.csv"));
    if (pr.model.drift.is_zero() && pr.terminal.name == "linear") {
        // Synchronous paths differ by e^{tA}(x - y) exactly.
        double worst = 0.0;
        for (Eigen::Index i = 0; i < curve.t.size(); ++i) {
            const double exact =
                std::abs(((pr.model.a_eigenvalues * curve.t[i]).array().exp() * (x - y).array()).sum());
            worst = std::max(worst, std::abs(curve.value[i] - exact) / std::max(1.0, exact));
        }
        run.verdict("exact_contraction", worst <= 1e-12, "max relative error " + fmt(worst));
    } else {
        const bool fitted = std::isfinite(curve.slope);
        bool ok = fitted && curve.slope < 0.0;
        std::string detail = "log-slope " + fmt(curve.slope) + " over " + std::to_string(curve.fitted_points) + " points";
        if (plan.expect.slope_max) {
            ok = ok && curve.slope <= *plan.expect.slope_max;
            detail += ", required <= " + fmt(*plan.expect.slope_max);
        }
        run.verdict("decaying", ok, detail);
    }
}

void preset_validation(Run& run, const ResolvedProblem& pr) {
    const ExperimentPlan& plan = run.plan_;
    const int d = pr.model.dim;
    run.verdict("model", true, "dissipative with eta " + fmt(pr.model.eta) + ", G invertible");
    try {
        const GrowthReport g = validate_driver(pr.driver, d);
        run.verdict("driver_checks", true, "Lipschitz " + fmt(pr.driver.lipschitz_z) + ", growth constant " + fmt(g.constant));
    } catch (const Error& e) {
        run.verdict("driver_checks", false, e.what());
    }
    try {
        const GrowthReport g = validate_terminal(pr.terminal, d);
        run.verdict("terminal_checks", true, "growth constant " + fmt(g.constant));
    } catch (const Error& e) {
        run.verdict("terminal_checks", false, e.what());
    }

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < plan.x_list.size(); ++i) {
        const Vec& x = plan.x_list[i];
        for (Eigen::Index k = 0; k < plan.T_grid.size(); ++k) {
            const double T = plan.T_grid[k];
            const BsdeConfig config = plan.solver.config(T);
            const BsdeSolution sol =
                run.step("bsde", [&] { return solve_bsde(pr.model, pr.driver, pr.terminal, x, config); });
            double exact = std::numeric_limits<double>::quiet_NaN();
            const std::string where = "_T" + fmt(T) + tag(i);
            if (pr.closed_form && pr.closed_form->u) {
                exact = pr.closed_form->u(T, x);
                const double allowed = 3.0 * sol.y0_se + 0.005;
                run.verdict("closed_form" + where, std::abs(sol.y0 - exact) <= allowed,
                            "y0 " + fmt(sol.y0) + " exact " + fmt(exact) + " allowed " + fmt(allowed));
            }
            if (pr.driver.name == "zero" && pr.terminal.kind == TerminalKind::State) {
                const McEstimate sg = run.step("semigroup", [&] {
                    return semigroup_apply(pr.model, pr.terminal.g, T, x, config.paths, config.seed, config.steps);
                });
                const double diff = std::abs(sol.y0 - sg.value);
                run.verdict("semigroup" + where, diff <= 1e-10, "difference " + fmt(diff));
            }
            std::vector<double> row{T};
            row.insert(row.end(), x.data(), x.data() + x.size());
            row.insert(row.end(), {sol.y0, sol.y0_se, exact});
            rows.push_back(std::move(row));
        }
    }
    std::vector<std::string> header{"T"};
    for (int k = 0; k < d; ++k) header.push_back("x" + std::to_string(k + 1));
    header.insert(header.end(), {"y0", "se", "exact"});
    write_numeric_table(run.path("preset_check.csv"), header, rows);
}

}  // namespace

RunResult run_experiment(const ExperimentPlan& plan, std::ostream* log) {
    std::error_code ec;
    std::filesystem::create_directories(plan.output_dir, ec);
    if (ec || !std::filesystem::is_directory(plan.output_dir))
        throw Error(ErrorCode::IoError, "cannot create output directory '" + plan.output_dir + "'");
    Run run(plan, log);
    {
        std::ofstream manifest(run.path("manifest.txt"), std::ios::binary);
        manifest << format_config(plan);
        if (!manifest) throw Error(ErrorCode::IoError, "cannot write manifest.txt");
    }
    if (log) *log << to_string(plan.experiment) << " -> " << plan.output_dir << '\n';

    if (plan.experiment == Experiment::ControlExpansion) {
        control_expansion(run);
        return run.finish();
    }
    const ResolvedProblem pr = stage("model", log, [&] { return resolve_problem(plan.problem); });
    switch (plan.experiment) {
        case Experiment::LambdaSlope: lambda_slope(run, pr); break;
        case Experiment::LimitAndRate: limit_and_rate(run, pr); break;
        case Experiment::CouplingDecay: coupling(run, pr); break;
        case Experiment::PresetValidation: preset_validation(run, pr); break;
        case Experiment::ControlExpansion: break;
    }
    return run.finish();
}

}  // namespace ergolab
