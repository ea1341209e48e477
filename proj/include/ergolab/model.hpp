#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ergolab/types.hpp"

namespace ergolab {

/// Bounded Lipschitz perturbation F of the linear drift.
struct Drift {
    std::string name = "zero";
    std::function<Vec(const VecRef&)> fn;  // empty means F == 0
    double bound = 0.0;                    // sup |F|
    double lipschitz = 0.0;

    bool is_zero() const { return !fn; }
    Vec operator()(const VecRef& x) const { return fn ? fn(x) : Vec::Zero(x.size()); }

    static Drift zero();
    /// F(x)_k = scale * tanh(x_k).
    static Drift tanh(double scale, int dim);
};

/// Galerkin truncation of the dissipative Ornstein-Uhlenbeck system
/// dX = (AX + F(X)) dt + G dW with A diagonal in the truncation basis.
struct Model {
    int dim = 0;
    Vec a_eigenvalues;
    Mat g_matrix;
    Mat g_inverse;
    Drift drift;
    double eta = 0.0;  // min_k -a_k
};

struct ModelSpec {
    Vec a_eigenvalues;
    Mat g_matrix;
    std::string drift = "zero";
    double drift_scale = 0.0;
};

/// Validates dissipativity, invertibility of G and the drift certificate.
/// Throws Error{NonDissipative | SingularG | LipschitzViolation | InvalidArgument}.
Model build_model(const ModelSpec& spec);
Model build_model(Vec a_eigenvalues, Mat g_matrix, Drift drift);

using DriverFn = std::function<double(const VecRef& x, const CovecRef& z)>;

struct DriverSpec {
    std::string name;
    DriverFn f;
    double lipschitz_z = 0.0;
    double growth_mu = 0.0;
};

enum class TerminalKind { State, RunningMax };

/// Terminal condition. For RunningMax the argument of g is the augmented
/// state (x, max_{s<=T} |X_s|) of length dim + 1.
struct TerminalSpec {
    std::string name;
    TerminalKind kind = TerminalKind::State;
    std::function<double(const VecRef&)> g;
    double growth_mu = 0.0;
};

/// Outcome of a sampled growth check: the smallest C with
/// |h(x)| <= C (1 + |x|^mu) over the sample.
struct GrowthReport {
    double constant = 0.0;
    std::size_t samples = 0;
};

/// Sampled Lipschitz-in-z and growth checks on f. Throws LipschitzViolation.
GrowthReport validate_driver(const DriverSpec& driver, int dim);
/// Sampled growth check on g. Throws GrowthViolation on non-finite values.
GrowthReport validate_terminal(const TerminalSpec& terminal, int dim);

/// Known ergodic data for presets with a closed form.
struct ClosedForm {
    double lambda = 0.0;
    double limit_L = 0.0;
    std::function<double(const VecRef&)> v;
    std::function<double(double, const VecRef&)> u;  // u(T, x); empty for path functionals
};

struct Preset {
    std::string name;
    std::string description;
    Model model;
    DriverSpec driver;
    TerminalSpec terminal;
    std::optional<ClosedForm> closed_form;
};

std::vector<std::string> preset_names();
/// Throws Error{UnknownPreset}.
Preset preset(const std::string& name);

// Driver and terminal building blocks shared by presets and the config loader.
DriverSpec zero_driver();
DriverSpec constant_driver(double c);
/// f(x, z) = z_coef * sum_k z_k + x_coef * sum_k x_k.
DriverSpec linear_driver(double z_coef, double x_coef, int dim);

TerminalSpec constant_terminal(double c);
/// g(x) = sum_k x_k.
TerminalSpec linear_terminal();
/// g(x) = |x|^2.
TerminalSpec quadratic_terminal();
/// xi = (max_{s<=T} |X_s|)^2 on the augmented state.
TerminalSpec running_max_squared_terminal();

}  // namespace ergolab
