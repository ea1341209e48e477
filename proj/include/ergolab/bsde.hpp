#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergolab/basis.hpp"
#include "ergolab/model.hpp"
#include "ergolab/types.hpp"

namespace ergolab {

/// GradientTrapezoid: trapezoidal time stepping of the driver with Z read off
/// the gradient of the fitted value field, Z = grad Y * G. The final step is
/// implicit. IncrementExplicit: Z by regression of the increment-weighted
/// value, Y by an explicit Euler step.
enum class BsdeScheme { GradientTrapezoid, IncrementExplicit };

std::string to_string(BsdeScheme scheme);
/// Throws InvalidArgument.
BsdeScheme parse_scheme(const std::string& text);

struct BsdeConfig {
    double horizon = 1.0;
    int steps = 50;
    BasisSpec basis;
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    int picard_iters = 2;
    BsdeScheme scheme = BsdeScheme::GradientTrapezoid;
    double discount = 0.0;      // solves with driver f(x, z) - discount * y
    int checkpoint_every = 0;   // forward checkpoint spacing; 0 stores all states when they fit the memory budget, else about sqrt(steps)
};

/// Budgets shared by every solve in an experiment; the horizon varies.
struct SolverParams {
    BasisSpec basis;
    double steps_per_unit = 50.0;
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    int picard_iters = 2;
    BsdeScheme scheme = BsdeScheme::GradientTrapezoid;

    /// Config for horizon T with round(T * steps_per_unit) steps (at least one).
    BsdeConfig config(double T, double discount = 0.0) const;
};

struct StepDiagnostics {
    double condition = 1.0;
    bool regularized = false;
    bool gradient_from_increments = false;
    double fit_rms = 0.0;   // rms of pathwise values around their projection
};

/// Per-step regression representation of (Y, Z) on the time grid.
struct BsdeSolution {
    BsdeConfig config;
    Vec times;
    Vec x0;
    int dim = 0;
    TerminalKind terminal_kind = TerminalKind::State;
    std::vector<BasisFrame> frames;     // N + 1
    std::vector<Vec> y_coeffs;          // N + 1
    std::vector<Mat> z_coeffs;          // N, each basis size x dim
    std::vector<Mat> y_cov;             // N + 1, covariance of y_coeffs
    std::vector<Vec> envelope_lo;       // N + 1, per input coordinate
    std::vector<Vec> envelope_hi;
    std::vector<StepDiagnostics> diagnostics;  // N + 1
    double y0 = 0.0;
    double y0_se = 0.0;
    Vec pathwise_y0;  // time-0 values per path, for paired comparisons; not serialized

    int steps() const { return static_cast<int>(times.size()) - 1; }
    double step_size() const { return config.horizon / config.steps; }
    /// Input dimension of the value field: dim, or dim + 1 with a running max.
    int input_dim() const { return terminal_kind == TerminalKind::RunningMax ? dim + 1 : dim; }
};

/// Backward least-squares Monte-Carlo solve from the deterministic start x0.
/// Throws IllConditionedRegression, NonFiniteY, NonFiniteState, InvalidArgument.
BsdeSolution solve_bsde(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal, const Vec& x0,
                        const BsdeConfig& config);

struct FieldValue {
    double y = 0.0;
    Covec z;
    double y_se = 0.0;
    bool extrapolated = false;  // input outside the central 99.5% of the forward sample
};

/// `state` has input_dim() entries. The z field at n = N is the n = N - 1 one.
FieldValue evaluate_fields(const BsdeSolution& sol, int n, const VecRef& state);

struct ResidualReport {
    Vec rms;        // per step
    Vec mean;
    Vec std_error;  // of the mean
    double max_rms = 0.0;
    std::size_t holdout_paths = 0;
};

/// One-step martingale residual Y_n - (Y_{n+1} + h f - Z dW) of the fitted
/// fields on an independent held-out ensemble. holdout_paths == 0 means 10%
/// of the training paths.
ResidualReport residual_diagnostics(const BsdeSolution& sol, const Model& model, const DriverSpec& driver,
                                    const TerminalSpec& terminal, std::size_t holdout_paths = 0);

/// Versioned text artifact. Throws IoError, FormatError.
void save_solution(const BsdeSolution& sol, const std::string& path);
BsdeSolution load_solution(const std::string& path);

}  // namespace ergolab
