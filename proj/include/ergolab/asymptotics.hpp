#pragma once

#include <string>
#include <vector>

#include "ergolab/bsde.hpp"
#include "ergolab/ergodic.hpp"

namespace ergolab {

/// One point of the curve w_T(0, x) = Y0(T, x) - lambda T - v(x).
struct WPoint {
    double T = 0.0;
    double w = 0.0;
    double se = 0.0;
    double y0 = 0.0;
    double y0_se = 0.0;
};

WPoint compute_w(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                 const ErgodicSolution& ergodic, double T, const Vec& x, const SolverParams& solver);

/// Fit of w_T = L + amplitude * exp(-rate T).
struct LimitFit {
    double L_hat = 0.0;
    double rate_hat = 0.0;
    double amplitude_hat = 0.0;
    bool rate_resolved = false;  // false: flat curve, rate_hat is NaN
    double residual_rms = 0.0;
    int evaluations = 0;
};

/// Needs at least four points. Throws FitDiverged with the raw curve in the
/// message when the least-squares iteration does not produce a decaying fit.
LimitFit fit_limit_and_rate(const std::vector<WPoint>& points);

struct VEstimate {
    double value = 0.0;
    double std_error = 0.0;  // from the per-path paired difference
    double y0_x = 0.0;
    double y0_origin = 0.0;
};

/// v(x) ~ Y0(T, x) - Y0(T, 0) with both solves on the same seed.
VEstimate approximate_v_from_finite_horizon(const Model& model, const DriverSpec& driver,
                                            const TerminalSpec& terminal, double T, const Vec& x,
                                            const SolverParams& solver);

struct GrowthRow {
    Vec x;
    double diff = 0.0;  // |w_T(0, x) - w_T(0, 0)|
    double se = 0.0;
    double shape = 0.0;  // 1 + |x|^(2 + mu)
    double ratio = 0.0;
};

struct GrowthSweep {
    double T = 0.0;
    double mu = 0.0;
    std::vector<GrowthRow> rows;  // sorted by |x|
    bool bounded = false;         // ratio never rises beyond three standard errors
};

GrowthSweep x_growth_sweep(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                           const ErgodicSolution& ergodic, double T, const std::vector<Vec>& x_list,
                           const SolverParams& solver);

/// Reads the (T + S)-horizon value field at time S and compares it with the
/// T-horizon Y0 at the same state.
struct TelescopeCheck {
    double long_value = 0.0;
    double long_se = 0.0;
    double short_value = 0.0;
    double short_se = 0.0;
    double difference = 0.0;
    double allowance = 0.0;  // 3 joint standard errors + 0.02
    bool extrapolated = false;
    bool pass = false;
};

TelescopeCheck telescoping_check(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal, double T,
                                 double S, const Vec& x, const SolverParams& solver);

struct BoundCheck {
    bool monotone = false;  // |w_T - L_hat| decreasing up to one inversion within noise
    int inversions = 0;
    bool rate_positive = false;
    bool rate_above_2eta = false;  // flagged, not a failure
};

struct AsymptoticsReport {
    Vec x;
    std::vector<WPoint> points;
    LimitFit fit;
    BoundCheck bounds;
};

/// w on every T of the grid (shared seed), the limit fit and the bound checks.
AsymptoticsReport analyze_asymptotics(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                                      const ErgodicSolution& ergodic, const Vec& T_grid, const Vec& x,
                                      const SolverParams& solver);

/// Rows (T, w, se, |w - L_hat|).
void write_w_csv(const AsymptoticsReport& report, const std::string& path);
/// Rows (x_1..x_d, diff, se, shape, ratio).
void write_growth_csv(const GrowthSweep& sweep, const std::string& path);

}  // namespace ergolab
