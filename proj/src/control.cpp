#include "ergolab/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ergolab/asymptotics.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/sde.hpp"
#include "sampling.hpp"

namespace ergolab {

namespace {

// Independent stream for the cost simulations checked against BSDE values.
constexpr std::uint64_t kSimulationSalt = 0x243f6a8885a308d3ull;

std::vector<Vec> action_drifts(const ControlProblem& problem) {
    std::vector<Vec> out;
    out.reserve(problem.actions.size());
    for (const Vec& a : problem.actions) out.push_back(problem.drift_of(a));
    return out;
}

std::vector<Vec> action_gammas(const ControlProblem& problem, const Model& model) {
    std::vector<Vec> out;
    for (const Vec& r : action_drifts(problem)) out.push_back(model.g_inverse * r);
    return out;
}

void require_actions(const ControlProblem& problem) {
    if (problem.actions.empty()) throw Error(ErrorCode::InvalidArgument, "control problem has no actions");
    if (!problem.drift_of || !problem.running_cost || !problem.terminal_cost)
        throw Error(ErrorCode::InvalidArgument, "control problem is missing a function");
}

HamiltonianValue minimize(const ControlProblem& problem, const std::vector<Vec>& gammas, const VecRef& x,
                          const CovecRef& z) {
    HamiltonianValue best;
    best.value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        const double v = problem.running_cost(x, problem.actions[i]) + z.dot(gammas[i].transpose());
        if (v < best.value) {
            best.value = v;
            best.argmin = i;
        }
    }
    return best;
}

}  // namespace

ControlCheck validate_control(const ControlProblem& problem, const Model& model) {
    require_actions(problem);
    for (const Vec& r : action_drifts(problem)) {
        if (r.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "R(a) has the wrong dimension");
        if (!within(r.norm(), problem.drift_bound))
            throw Error(ErrorCode::InvalidArgument, "|R(a)| = " + format_double(r.norm()) + " exceeds the bound " +
                                                        format_double(problem.drift_bound));
    }
    const NoiseSource noise(kCheckSeed, 4);
    ControlCheck check;
    for (int i = 0; i < kCheckSamples; ++i) {
        const Vec x = sample_ball(noise, i, 0, model.dim);
        const double scale = 1.0 + std::pow(x.norm(), problem.growth_mu);
        for (const Vec& a : problem.actions) {
            const double c = problem.running_cost(x, a);
            if (!std::isfinite(c)) throw Error(ErrorCode::GrowthViolation, "running cost is not finite");
            check.running_constant = std::max(check.running_constant, std::abs(c) / scale);
        }
        const double g = problem.terminal_cost(x);
        if (!std::isfinite(g)) throw Error(ErrorCode::GrowthViolation, "terminal cost is not finite");
        check.terminal_constant = std::max(check.terminal_constant, std::abs(g) / scale);
    }
    return check;
}

HamiltonianValue hamiltonian(const ControlProblem& problem, const Model& model, const VecRef& x, const CovecRef& z) {
    require_actions(problem);
    return minimize(problem, action_gammas(problem, model), x, z);
}

DriverSpec hamiltonian_driver(const ControlProblem& problem, const Model& model) {
    require_actions(problem);
    DriverSpec d;
    d.name = "hamiltonian(" + problem.name + ")";
    const auto gammas = action_gammas(problem, model);
    d.f = [problem, gammas](const VecRef& x, const CovecRef& z) { return minimize(problem, gammas, x, z).value; };
    const double g_inv_norm = Eigen::JacobiSVD<Mat>(model.g_inverse).singularValues()(0);
    d.lipschitz_z = problem.drift_bound * g_inv_norm;
    d.growth_mu = problem.growth_mu;
    return d;
}

TerminalSpec control_terminal(const ControlProblem& problem) {
    TerminalSpec t;
    t.name = "terminal-cost(" + problem.name + ")";
    t.g = problem.terminal_cost;
    t.growth_mu = problem.growth_mu;
    return t;
}

Policy constant_policy(std::size_t action) {
    return [action](double, const VecRef&) { return action; };
}

std::string to_string(CostEstimator e) { return e == CostEstimator::Direct ? "direct" : "girsanov"; }
std::string to_string(CostQuadrature q) { return q == CostQuadrature::Trapezoid ? "trapezoid" : "left-endpoint"; }

namespace {

// Shared forward loop: visit(n, x, actions) runs at every grid point.
template <typename Visit>
void controlled_paths(const Model& model, const ControlProblem& problem, const Policy& policy, const Vec& x0,
                      const ControlledRun& run, std::size_t paths, bool controlled, Vec* log_weight, Visit&& visit) {
    const int d = model.dim;
    const double h = run.horizon / run.steps;
    const OuTransition tr = make_transition(model, h);
    const NoiseSource noise(run.seed);
    const auto rows = static_cast<Eigen::Index>(paths);
    const auto drifts = action_drifts(problem);
    std::vector<Vec> gammas;
    if (log_weight) {
        gammas = action_gammas(problem, model);
        log_weight->setZero(rows);
    }
    PathMatrix x = x0.transpose().replicate(rows, 1);
    PathMatrix next, dw, extra;
    if (controlled) extra.resize(rows, d);
    std::vector<std::size_t> acts(paths);
    for (int n = 0; n <= run.steps; ++n) {
        const double t = n * h;
        parallel_chunks(paths, [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t m = begin; m < end; ++m) {
                const auto r = static_cast<Eigen::Index>(m);
                const std::size_t a = policy(t, row_view(x, r));
                if (a >= drifts.size()) throw Error(ErrorCode::InvalidArgument, "policy returned an unknown action");
                acts[m] = a;
                if (controlled && n < run.steps) extra.row(r) = drifts[a].transpose();
            }
        });
        visit(n, x, acts);
        if (n == run.steps) break;
        advance_all(model, tr, noise, static_cast<std::uint64_t>(n), x, next, log_weight ? &dw : nullptr,
                    controlled ? &extra : nullptr);
        if (log_weight) {
            parallel_chunks(paths, [&](std::size_t, std::size_t begin, std::size_t end) {
                for (std::size_t m = begin; m < end; ++m) {
                    const auto r = static_cast<Eigen::Index>(m);
                    const Vec& gamma = gammas[acts[m]];
                    (*log_weight)[r] += dw.row(r).dot(gamma.transpose()) - 0.5 * gamma.squaredNorm() * h;
                }
            });
        }
        x.swap(next);
    }
}

void check_run(const ControlledRun& run, const Vec& x0, const Model& model) {
    if (!(run.horizon > 0.0) || run.steps <= 0 || run.paths < 2)
        throw Error(ErrorCode::InvalidArgument, "controlled run needs a positive horizon, steps and paths >= 2");
    if (x0.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "x0 has the wrong dimension");
}

}  // namespace

CostEstimate simulate_controlled(const Model& model, const ControlProblem& problem, const Policy& policy, const Vec& x0,
                                 const ControlledRun& run) {
    require_actions(problem);
    check_run(run, x0, model);
    const double h = run.horizon / run.steps;
    const auto rows = static_cast<Eigen::Index>(run.paths);
    const bool weighted = run.estimator == CostEstimator::GirsanovWeighted;
    Vec total = Vec::Zero(rows);
    Vec log_weight;
    controlled_paths(model, problem, policy, x0, run, run.paths, !weighted, weighted ? &log_weight : nullptr,
                     [&](int n, const PathMatrix& x, const std::vector<std::size_t>& acts) {
                         double w = h;
                         if (run.quadrature == CostQuadrature::Trapezoid && (n == 0 || n == run.steps)) w = 0.5 * h;
                         if (run.quadrature == CostQuadrature::LeftEndpoint && n == run.steps) w = 0.0;
                         const bool last = n == run.steps;
                         parallel_chunks(run.paths, [&](std::size_t, std::size_t begin, std::size_t end) {
                             for (std::size_t m = begin; m < end; ++m) {
                                 const auto r = static_cast<Eigen::Index>(m);
                                 const auto state = row_view(x, r);
                                 double c = w == 0.0 ? 0.0 : w * problem.running_cost(state, problem.actions[acts[m]]);
                                 if (last) c += problem.terminal_cost(state);
                                 total[r] += c;
                             }
                         });
                     });
    if (!total.allFinite()) throw Error(ErrorCode::NonFiniteY, "controlled cost is not finite");

    CostEstimate est;
    if (!weighted) {
        const McEstimate m = sample_mean(total);
        est.J = m.value;
        est.se = m.std_error;
        est.ess = static_cast<double>(run.paths);
        return est;
    }
    const Vec weight = log_weight.array().exp().matrix();
    const McEstimate m = sample_mean(Vec(weight.cwiseProduct(total)));
    const McEstimate mw = sample_mean(weight);
    est.J = m.value;
    est.se = m.std_error;
    est.mean_weight = mw.value;
    est.weight_se = mw.std_error;
    est.ess = weight.sum() * weight.sum() / weight.squaredNorm();
    est.weight_degenerate = est.ess < 0.01 * static_cast<double>(run.paths);
    return est;
}

Policy optimal_policy_from_bsde(std::shared_ptr<const BsdeSolution> sol, const ControlProblem& problem,
                                const Model& model) {
    require_actions(problem);
    if (!sol || sol->dim != model.dim || sol->terminal_kind != TerminalKind::State)
        throw Error(ErrorCode::InvalidArgument, "feedback needs a Markovian solution on the same model");
    const auto gammas = action_gammas(problem, model);
    return [sol, problem, gammas](double t, const VecRef& state) {
        const int n = std::clamp(static_cast<int>(std::lround(t / sol->step_size())), 0, sol->steps());
        const FieldValue field = evaluate_fields(*sol, n, state);
        return minimize(problem, gammas, state, field.z).argmin;
    };
}

std::vector<TraceRow> trace_policy(const Model& model, const ControlProblem& problem, const Policy& policy,
                                   const Vec& x0, const ControlledRun& run, std::size_t sample_paths) {
    require_actions(problem);
    check_run(run, x0, model);
    const std::size_t paths = std::min(sample_paths, run.paths);
    const double h = run.horizon / run.steps;
    std::vector<TraceRow> trace;
    controlled_paths(model, problem, policy, x0, run, paths, true, nullptr,
                     [&](int n, const PathMatrix& x, const std::vector<std::size_t>& acts) {
                         for (std::size_t m = 0; m < paths; ++m)
                             trace.push_back({n * h, m, Vec(row_view(x, static_cast<Eigen::Index>(m))), acts[m]});
                     });
    return trace;
}

ExpansionReport expansion_report(const Model& model, const ControlProblem& problem, const Vec& T_grid, const Vec& x,
                                 const ExpansionParams& params) {
    validate_control(problem, model);
    if (T_grid.size() < 2) throw Error(ErrorCode::InvalidArgument, "expansion needs at least two horizons");
    for (Eigen::Index i = 1; i < T_grid.size(); ++i)
        if (!(T_grid[i] > T_grid[i - 1])) throw Error(ErrorCode::InvalidArgument, "T_grid must be increasing");
    const DriverSpec driver = hamiltonian_driver(problem, model);
    const TerminalSpec terminal = control_terminal(problem);

    ExpansionReport rep;
    rep.x = x;
    const ErgodicSolution ergodic = solve_ebsde_discounted(model, driver, params.discounted, params.ergodic_solver);
    rep.lambda = ergodic.lambda;
    rep.lambda_ci = ergodic.lambda_ci;
    rep.v = ergodic_v(ergodic, x);
    rep.v_se = ergodic_v_se(ergodic, x);

    const std::uint64_t sim_seed = params.solver.seed ^ kSimulationSalt;
    const std::size_t n_actions = problem.actions.size();
    rep.weights_normalized = true;
    rep.estimators_agree = true;
    rep.constant_above_feedback = true;
    rep.constant_above_value = true;
    rep.feedback_matches_value = true;
    auto normalized = [](const CostEstimate& e) { return std::abs(e.mean_weight - 1.0) <= 3.0 * e.weight_se; };

    for (Eigen::Index i = 0; i < T_grid.size(); ++i) {
        const double T = T_grid[i];
        const auto sol = std::make_shared<const BsdeSolution>(
            solve_bsde(model, driver, terminal, x, params.solver.config(T)));
        ExpansionRow row;
        row.T = T;
        row.y0 = sol->y0;
        row.y0_se = sol->y0_se;
        ControlledRun run{T, sol->steps(), params.sim_paths, sim_seed, CostEstimator::Direct, params.quadrature};
        const Policy feedback = optimal_policy_from_bsde(sol, problem, model);
        row.feedback = simulate_controlled(model, problem, feedback, x, run);
        run.estimator = CostEstimator::GirsanovWeighted;
        row.feedback_weighted = simulate_controlled(model, problem, feedback, x, run);
        rep.weights_normalized = rep.weights_normalized && normalized(row.feedback_weighted);
        rep.estimators_agree = rep.estimators_agree && std::abs(row.feedback.J - row.feedback_weighted.J) <=
                                                           3.0 * std::hypot(row.feedback.se, row.feedback_weighted.se);
        rep.feedback_matches_value = rep.feedback_matches_value &&
                                     std::abs(row.feedback.J - row.y0) <= 3.0 * std::hypot(row.feedback.se, row.y0_se);
        for (std::size_t a = 0; a < n_actions; ++a) {
            run.estimator = CostEstimator::Direct;
            const CostEstimate direct = simulate_controlled(model, problem, constant_policy(a), x, run);
            run.estimator = CostEstimator::GirsanovWeighted;
            const CostEstimate reweighted = simulate_controlled(model, problem, constant_policy(a), x, run);
            rep.weights_normalized = rep.weights_normalized && normalized(reweighted);
            rep.constant_above_feedback = rep.constant_above_feedback &&
                                          direct.J >= row.feedback.J - 3.0 * std::hypot(direct.se, row.feedback.se);
            rep.constant_above_value =
                rep.constant_above_value && direct.J >= row.y0 - 3.0 * std::hypot(direct.se, row.y0_se);
            row.constant.push_back(direct);
        }
        row.expansion = row.feedback.J - rep.lambda * T - rep.v;
        const double lambda_se = 0.5 * rep.lambda_ci * T;
        row.expansion_se = std::sqrt(row.feedback.se * row.feedback.se + lambda_se * lambda_se + rep.v_se * rep.v_se);
        rep.rows.push_back(std::move(row));
    }

    const auto& a = rep.rows[rep.rows.size() - 2];
    const auto& b = rep.rows.back();
    const double lambda_gap = 0.5 * rep.lambda_ci * (b.T - a.T);
    const double joint = std::sqrt(a.feedback.se * a.feedback.se + b.feedback.se * b.feedback.se + lambda_gap * lambda_gap);
    rep.stabilized = std::abs(b.expansion - a.expansion) <= 3.0 * joint;

    rep.L_hat = b.expansion;
    if (rep.rows.size() >= 4) {
        std::vector<WPoint> curve;
        for (const auto& r : rep.rows) curve.push_back({r.T, r.expansion, r.expansion_se, r.feedback.J, r.feedback.se});
        try {
            rep.L_hat = fit_limit_and_rate(curve).L_hat;
            rep.L_fitted = true;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::FitDiverged) throw;
        }
    }

    // Long-run average cost of each constant action against lambda.
    rep.ergodic_lower_bound = true;
    const int long_steps = std::max(1, static_cast<int>(std::lround(params.long_horizon * params.solver.steps_per_unit)));
    for (std::size_t act = 0; act < n_actions; ++act) {
        ControlledRun run{params.long_horizon, long_steps, params.sim_paths, sim_seed, CostEstimator::Direct,
                          params.quadrature};
        const CostEstimate e = simulate_controlled(model, problem, constant_policy(act), x, run);
        const double avg = e.J / params.long_horizon;
        const double se = e.se / params.long_horizon;
        rep.ergodic_constant_cost.push_back(avg);
        rep.ergodic_constant_se.push_back(se);
        const double allowance = 3.0 * std::hypot(se, 0.5 * rep.lambda_ci) + 0.02;
        rep.ergodic_lower_bound = rep.ergodic_lower_bound && avg >= rep.lambda - allowance;
    }
    return rep;
}

void write_expansion_csv(const ExpansionReport& report, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : report.rows) rows.push_back({r.T, r.feedback.J, r.feedback.se, r.expansion});
    write_numeric_table(path, {"T", "J_T", "se", "J_T_minus_lambda_T_minus_v"}, rows);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::vector<std::string> header{"t", "path"};
    const auto dim = trace.empty() ? 0 : trace.front().x.size();
    for (Eigen::Index k = 0; k < dim; ++k) header.push_back("x" + std::to_string(k + 1));
    header.push_back("action");
    std::vector<std::vector<double>> rows;
    for (const auto& r : trace) {
        std::vector<double> row{r.t, static_cast<double>(r.path)};
        row.insert(row.end(), r.x.data(), r.x.data() + r.x.size());
        row.push_back(static_cast<double>(r.action));
        rows.push_back(std::move(row));
    }
    write_numeric_table(path, header, rows);
}

std::vector<std::string> control_preset_names() { return {"bangbang-quadratic", "zero-cost"}; }

ControlPreset control_preset(const std::string& name) {
    ControlPreset p;
    p.name = name;
    p.model = build_model(Vec::Constant(1, -1.0), Mat::Identity(1, 1), Drift::zero());
    ControlProblem& c = p.problem;
    c.name = name;
    c.actions = {Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
    c.drift_of = [](const Vec& a) { return a; };
    c.drift_bound = 1.0;
    c.terminal_cost = [](const VecRef&) { return 0.0; };
    if (name == "bangbang-quadratic") {
        p.description = "d=1, a=-1, G=1, F=0; U={-1,+1}, R(a)=a, running cost x^2, no terminal cost";
        c.running_cost = [](const VecRef& x, const Vec&) { return x.squaredNorm(); };
        c.growth_mu = 2.0;
    } else if (name == "zero-cost") {
        p.description = "d=1, a=-1, G=1, F=0; U={-1,+1}, R(a)=a, zero running and terminal cost";
        c.running_cost = [](const VecRef&, const Vec&) { return 0.0; };
        c.growth_mu = 0.0;
    } else {
        throw Error(ErrorCode::UnknownPreset, "unknown control preset '" + name + "'");
    }
    validate_control(c, p.model);
    return p;
}

}  // namespace ergolab
