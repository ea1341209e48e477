#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ergolab/model.hpp"
#include "ergolab/philox.hpp"
#include "ergolab/types.hpp"

namespace ergolab {

/// Exact one-step law of the linear part over a step of length h.
///
/// With d = a, decay = e^{ha} and phi = (e^{ha} - 1)/a, one step reads
///   X' = decay * X + phi * (F(X) + r) + xi,
/// where (dW, xi) is jointly Gaussian. `joint_factor` is a square root of the
/// 2d x 2d covariance of (dW, xi), dW first, so that dW only depends on the
/// first d normals.
struct OuTransition {
    double h = 0.0;
    Vec decay;
    Vec phi;
    Mat noise_cov;     // Q_h
    Mat joint_factor;  // lower triangular when Cholesky succeeds
};

OuTransition make_transition(const Model& model, double h);

/// Advances one path by one step. `normals` must hold 2 * dim standard
/// normals; `dw_out` receives the Brownian increment when non-null.
/// `extra_drift` is an additional drift frozen over the step (controls).
void advance(const Model& model, const OuTransition& tr, const double* normals, const VecRef& x,
             Eigen::Ref<Vec> x_next, double* dw_out, const Vec* extra_drift = nullptr);

/// Advances every row of `x` from step `step` to `step + 1` using noise cell
/// (path, step) of `noise`. Throws NonFiniteState.
void advance_all(const Model& model, const OuTransition& tr, const NoiseSource& noise, std::uint64_t step,
                 const PathMatrix& x, PathMatrix& x_next, PathMatrix* dw_out = nullptr,
                 const PathMatrix* extra_drift = nullptr);

struct PathEnsemble {
    Vec times;
    Vec x0;
    std::vector<PathMatrix> states;       // N + 1 matrices of size paths x dim
    std::vector<PathMatrix> increments;   // N matrices of size paths x dim
    std::optional<std::vector<Vec>> running_max;  // N + 1 vectors of length paths
    std::uint64_t seed = 0;

    std::size_t paths() const { return states.empty() ? 0 : static_cast<std::size_t>(states.front().rows()); }
    std::size_t steps() const { return increments.size(); }
};

/// Upper bound on the number of doubles a stored ensemble may hold.
void set_memory_budget(std::size_t doubles);
std::size_t memory_budget();

/// Throws BudgetExceeded, NonFiniteState, InvalidArgument.
PathEnsemble simulate_paths(const Model& model, const Vec& x0, double T, int steps, std::size_t paths,
                            std::uint64_t seed, bool augment_max);

/// Recomputes path `path` of an ensemble from its noise counters. Returns the
/// (N + 1) x dim trajectory, bit-identical to the stored one.
PathMatrix resimulate_path(const Model& model, const Vec& x0, double T, int steps, std::uint64_t seed,
                           std::size_t path);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Deterministic mean and standard error of a sample.
McEstimate sample_mean(const Vec& values);

using StateFn = std::function<double(const VecRef&)>;

/// Monte-Carlo estimate of E phi(X_t^x) on `steps` exponential-Euler steps.
McEstimate semigroup_apply(const Model& model, const StateFn& phi, double t, const Vec& x, std::size_t paths,
                           std::uint64_t seed, int steps = 1);

struct DecayCurve {
    Vec t;
    Vec value;
    Vec std_error;
    double slope = 0.0;       // NaN when fewer than two points are above noise
    std::size_t fitted_points = 0;
    bool all_noise = false;   // no t with value above 3 standard errors
};

/// |P_t phi(x) - P_t phi(y)| under synchronous coupling on each t in t_grid.
DecayCurve coupling_decay(const Model& model, const StateFn& phi, const Vec& x, const Vec& y, const Vec& t_grid,
                          std::size_t paths, std::uint64_t seed, double steps_per_unit = 50.0);

void write_csv(const DecayCurve& curve, const std::string& path);

}  // namespace ergolab
