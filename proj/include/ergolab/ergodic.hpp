#pragma once

#include <string>
#include <vector>

#include "ergolab/bsde.hpp"
#include "ergolab/sde.hpp"

namespace ergolab {

/// Ergodic pair (lambda, v) with the Z = grad v G field, all represented on
/// one regression frame. v(0) = 0 holds exactly.
struct ErgodicSolution {
    double lambda = 0.0;
    double lambda_ci = 0.0;  // half-width
    int dim = 0;
    BasisFrame frame;
    Vec v_coeffs;
    Mat v_cov;      // covariance of v_coeffs
    Mat z_coeffs;   // basis size x dim
    std::vector<std::string> method_tags;
    // Discounted method: one entry per alpha of the schedule.
    std::vector<double> alphas;
    std::vector<double> lambda_alpha;
};

/// v(x) = V(x) - V(0) on the stored field, so v(0) is exactly zero.
double ergodic_v(const ErgodicSolution& sol, const VecRef& x);
/// Standard error of ergodic_v from the regression covariance.
double ergodic_v_se(const ErgodicSolution& sol, const VecRef& x);
Covec ergodic_z(const ErgodicSolution& sol, const VecRef& x);

struct DiscountedParams {
    std::vector<double> alpha_schedule{0.2, 0.1};
    double horizon_factor = 8.0;  // horizon = burn_in + horizon_factor / alpha
    double burn_in = 2.0;         // time at which the field is read
};

/// Vanishing-discount estimator with linear extrapolation in alpha over the
/// last two schedule entries. Throws NonMonotoneAlpha, DiscountedDiverged.
ErgodicSolution solve_ebsde_discounted(const Model& model, const DriverSpec& driver, const DiscountedParams& params,
                                       const SolverParams& solver);

struct RelativeValueParams {
    double burn_in = 3.0;  // first reading time
    double window = 2.0;   // lambda = (V_{t1}(0) - V_{t1 + window}(0)) / window
    double relax = 3.0;    // horizon left after the second reading
};

/// Undiscounted long-horizon estimator: the value field decreases by lambda
/// per unit time in the stationary regime, and its spatial profile is v.
ErgodicSolution solve_ebsde_relative_value(const Model& model, const DriverSpec& driver,
                                           const RelativeValueParams& params, const SolverParams& solver);

struct SlopeReport {
    double lambda_hat = 0.0;
    double lambda_ci = 0.0;  // two standard errors of the slope
    double intercept = 0.0;
    Vec horizons;
    Vec y0;
    Vec y0_se;
    Vec gap;          // |y0 / T - lambda_hat|
    Vec gap_se;
    Vec bound_ratio;  // gap over the theoretical shape of the bound
    double bound_constant = 0.0;  // max of bound_ratio
    bool bounded = false;         // no growth of gap * T beyond noise
    std::string bound_shape;      // "C(1+|x|^(1+mu))/T" or "C(1+T^(1/2))(1+|x|^(1+mu))/T"
};

/// Fits Y0(T, x) = lambda T + c over T_grid with common random numbers and
/// reports the first-behaviour bound. Requires at least three horizons.
SlopeReport estimate_lambda_slope(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                                  const Vec& T_grid, const Vec& x, const SolverParams& solver);

struct CrossCheck {
    bool pass = false;
    double lambda_discounted = 0.0;
    double ci_discounted = 0.0;
    double lambda_slope = 0.0;
    double ci_slope = 0.0;
    double difference = 0.0;
    double allowance = 0.0;
};

CrossCheck cross_check(const ErgodicSolution& discounted, const SlopeReport& slope);

/// Rows (alpha, lambda_alpha).
void write_alpha_csv(const ErgodicSolution& sol, const std::string& path);
/// Rows (T, y0, se, y0 / T).
void write_slope_csv(const SlopeReport& report, const std::string& path);

/// Text artifact alongside BSDE solutions. Throws IoError, FormatError.
void save_ergodic(const ErgodicSolution& sol, const std::string& path);
ErgodicSolution load_ergodic(const std::string& path);

}  // namespace ergolab
