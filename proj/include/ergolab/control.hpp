#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ergolab/bsde.hpp"
#include "ergolab/ergodic.hpp"
#include "ergolab/model.hpp"

namespace ergolab {

/// Control problem with a finite, ordered action set. Actions are vectors;
/// R maps an action to a drift in state space.
struct ControlProblem {
    std::string name;
    std::vector<Vec> actions;
    std::function<Vec(const Vec& action)> drift_of;
    double drift_bound = 0.0;  // c with |R(a)| <= c
    std::function<double(const VecRef& x, const Vec& action)> running_cost;
    std::function<double(const VecRef& x)> terminal_cost;
    double growth_mu = 0.0;
};

struct ControlCheck {
    double running_constant = 0.0;
    double terminal_constant = 0.0;
};

/// Exhaustive |R(a)| <= c check and sampled growth checks on both costs.
/// Throws GrowthViolation or InvalidArgument.
ControlCheck validate_control(const ControlProblem& problem, const Model& model);

struct HamiltonianValue {
    double value = 0.0;
    std::size_t argmin = 0;  // first minimizer in declared order
};

HamiltonianValue hamiltonian(const ControlProblem& problem, const Model& model, const VecRef& x, const CovecRef& z);

/// BSDE driver f(x, z) = min_a running_cost(x, a) + z G^{-1} R(a).
DriverSpec hamiltonian_driver(const ControlProblem& problem, const Model& model);
TerminalSpec control_terminal(const ControlProblem& problem);

/// Feedback rule (t, state) -> action index; must be pure.
using Policy = std::function<std::size_t(double t, const VecRef& state)>;

Policy constant_policy(std::size_t action);

enum class CostEstimator { Direct, GirsanovWeighted };
enum class CostQuadrature { Trapezoid, LeftEndpoint };

std::string to_string(CostEstimator e);
std::string to_string(CostQuadrature q);

struct ControlledRun {
    double horizon = 0.0;
    int steps = 0;
    std::size_t paths = 0;
    std::uint64_t seed = 1;
    CostEstimator estimator = CostEstimator::Direct;
    CostQuadrature quadrature = CostQuadrature::Trapezoid;
};

struct CostEstimate {
    double J = 0.0;
    double se = 0.0;
    double mean_weight = 1.0;  // Girsanov density average (1 for Direct)
    double weight_se = 0.0;
    double ess = 0.0;  // effective sample size
    bool weight_degenerate = false;  // ess below 1% of paths
};

/// Finite-horizon cost of the policy from x0. Direct simulates the
/// controlled dynamics; GirsanovWeighted reweights uncontrolled paths.
CostEstimate simulate_controlled(const Model& model, const ControlProblem& problem, const Policy& policy, const Vec& x0,
                                 const ControlledRun& run);

/// (t, x) -> argmin of the Hamiltonian at the solved gradient field.
Policy optimal_policy_from_bsde(std::shared_ptr<const BsdeSolution> sol, const ControlProblem& problem,
                                const Model& model);

/// One row per (time, path) of a policy trace on the first paths.
struct TraceRow {
    double t = 0.0;
    std::size_t path = 0;
    Vec x;
    std::size_t action = 0;
};

std::vector<TraceRow> trace_policy(const Model& model, const ControlProblem& problem, const Policy& policy,
                                   const Vec& x0, const ControlledRun& run, std::size_t sample_paths);

struct ExpansionParams {
    SolverParams solver;          // finite-horizon Hamiltonian solves
    SolverParams ergodic_solver;  // discounted solves for (lambda, v)
    DiscountedParams discounted;
    std::size_t sim_paths = 20000;
    double long_horizon = 50.0;  // constant-policy ergodic averages
    CostQuadrature quadrature = CostQuadrature::Trapezoid;
};

struct ExpansionRow {
    double T = 0.0;
    double y0 = 0.0;  // value of the Hamiltonian BSDE
    double y0_se = 0.0;
    CostEstimate feedback;           // Direct
    CostEstimate feedback_weighted;  // GirsanovWeighted
    std::vector<CostEstimate> constant;  // one per action
    double expansion = 0.0;  // J - lambda T - v(x)
    double expansion_se = 0.0;
};

struct ExpansionReport {
    Vec x;
    double lambda = 0.0;
    double lambda_ci = 0.0;
    double v = 0.0;
    double v_se = 0.0;
    std::vector<ExpansionRow> rows;
    std::vector<double> ergodic_constant_cost;  // long-run average per action
    std::vector<double> ergodic_constant_se;
    double L_hat = 0.0;
    bool L_fitted = false;

    // Verdicts.
    bool weights_normalized = false;
    bool estimators_agree = false;
    bool constant_above_feedback = false;
    bool constant_above_value = false;
    bool feedback_matches_value = false;
    bool stabilized = false;
    bool ergodic_lower_bound = false;
};

ExpansionReport expansion_report(const Model& model, const ControlProblem& problem, const Vec& T_grid, const Vec& x,
                                 const ExpansionParams& params);

/// Rows (T, J_T, se, J_T - lambda T - v(x)).
void write_expansion_csv(const ExpansionReport& report, const std::string& path);
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

struct ControlPreset {
    std::string name;
    std::string description;
    Model model;
    ControlProblem problem;
};

/// "bangbang-quadratic" and "zero-cost". Throws UnknownPreset.
ControlPreset control_preset(const std::string& name);
std::vector<std::string> control_preset_names();

}  // namespace ergolab
