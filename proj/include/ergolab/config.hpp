#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ergolab/bsde.hpp"
#include "ergolab/control.hpp"
#include "ergolab/ergodic.hpp"
#include "ergolab/model.hpp"

namespace ergolab {

enum class Experiment { LambdaSlope, LimitAndRate, ControlExpansion, CouplingDecay, PresetValidation };

std::string to_string(Experiment e);
/// Throws TypeMismatch for an unknown name.
Experiment parse_experiment(const std::string& text);

enum class ErgodicMethod { Discounted, RelativeValue };

std::string to_string(ErgodicMethod m);

/// Either a named preset or an explicit model with driver and terminal.
struct ProblemSpec {
    std::string preset;
    std::string control;  // control preset, for ControlExpansion
    Vec a_eigenvalues;
    Mat g_matrix;
    std::string drift = "zero";
    double drift_scale = 0.0;
    std::string driver = "zero";  // zero | constant | linear
    double driver_z = 0.0;
    double driver_x = 0.0;
    double driver_c = 0.0;
    std::string terminal = "zero";  // zero | constant | linear | quadratic | running-max-squared
    double terminal_c = 0.0;
};

struct Expectations {
    std::optional<double> lambda;
    double lambda_tol = 0.02;
    std::optional<double> L;
    double L_tol = 0.02;
    std::optional<double> rate;
    double rate_tol = 0.2;  // relative
    std::optional<double> v;
    double v_tol = 0.05;
    std::optional<double> slope_max;  // coupling log-slope must not exceed this
};

struct ExperimentPlan {
    Experiment experiment = Experiment::PresetValidation;
    ProblemSpec problem;
    std::uint64_t seed = 1;
    std::string output_dir = "ergolab-out";

    Vec T_grid;
    std::vector<Vec> x_list;
    Vec lambda_T_grid;      // slope horizons that refine lambda in LimitAndRate; empty disables
    double v_horizon = 0.0;  // finite-horizon v estimate in LimitAndRate; 0 disables

    SolverParams solver;
    SolverParams ergodic_solver;
    ErgodicMethod ergodic_method = ErgodicMethod::Discounted;
    DiscountedParams discounted;
    RelativeValueParams relative;

    std::size_t sim_paths = 20000;
    double long_horizon = 50.0;
    CostQuadrature quadrature = CostQuadrature::Trapezoid;

    Expectations expect;
};

/// Parses the flat sectioned key = value format documented in the README.
/// Every key not given takes the default for the chosen experiment.
/// Throws ParseError, UnknownKey, MissingRequired, TypeMismatch (all with
/// line and column) and InvalidArgument for inconsistent grids.
ExperimentPlan parse_config(const std::string& text);
ExperimentPlan load_config(const std::string& path);

/// Fully resolved plan in the same format; parsing it gives the same plan.
std::string format_config(const ExperimentPlan& plan);

}  // namespace ergolab
