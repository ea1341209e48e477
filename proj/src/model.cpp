#include "ergolab/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ergolab/error.hpp"
#include "ergolab/philox.hpp"
#include "sampling.hpp"

namespace ergolab {

Drift Drift::zero() { return Drift{}; }

Drift Drift::tanh(double scale, int dim) {
    Drift d;
    d.name = "tanh";
    d.fn = [scale](const VecRef& x) -> Vec { return x.array().tanh().matrix() * scale; };
    d.bound = std::abs(scale) * std::sqrt(static_cast<double>(dim));
    d.lipschitz = std::abs(scale);
    return d;
}

Model build_model(Vec a, Mat g, Drift drift) {
    const auto dim = static_cast<int>(a.size());
    if (dim <= 0) throw Error(ErrorCode::InvalidArgument, "model dimension must be positive");
    if (g.rows() != dim || g.cols() != dim)
        throw Error(ErrorCode::InvalidArgument, "g_matrix must be dim x dim");
    for (int k = 0; k < dim; ++k) {
        if (!(a[k] < 0.0))
            throw Error(ErrorCode::NonDissipative,
                        "eigenvalue a[" + std::to_string(k) + "] = " + std::to_string(a[k]) + " is not negative");
    }

    Eigen::JacobiSVD<Mat> svd(g);
    const Vec sv = svd.singularValues();
    const double cond = sv[dim - 1] > 0.0 ? sv[0] / sv[dim - 1] : std::numeric_limits<double>::infinity();
    if (!(cond <= 1e12)) throw Error(ErrorCode::SingularG, "condition number of G is " + std::to_string(cond));

    Model model;
    model.dim = dim;
    model.a_eigenvalues = std::move(a);
    model.g_matrix = std::move(g);
    model.g_inverse = model.g_matrix.partialPivLu().inverse();
    const double id_err = (model.g_matrix * model.g_inverse - Mat::Identity(dim, dim)).cwiseAbs().maxCoeff();
    if (id_err > 1e-10) throw Error(ErrorCode::SingularG, "G * G^-1 deviates from identity by " + std::to_string(id_err));
    model.eta = (-model.a_eigenvalues).minCoeff();

    if (!drift.is_zero()) {
        const NoiseSource noise(kCheckSeed, 1);
        for (int i = 0; i < kCheckSamples; ++i) {
            const Vec x = sample_ball(noise, i, 0, dim);
            const Vec y = sample_ball(noise, i, 1, dim);
            const Vec fx = drift(x);
            const Vec fy = drift(y);
            if (fx.size() != dim) throw Error(ErrorCode::InvalidArgument, "drift returns wrong dimension");
            if (!within((fx - fy).norm(), drift.lipschitz * (x - y).norm()) || !within(fx.norm(), drift.bound))
                throw Error(ErrorCode::LipschitzViolation,
                            "drift '" + drift.name + "' violates its declared bound or Lipschitz constant");
        }
    }
    model.drift = std::move(drift);
    return model;
}

Model build_model(const ModelSpec& spec) {
    const auto dim = static_cast<int>(spec.a_eigenvalues.size());
    Drift drift;
    if (spec.drift == "zero") {
        drift = Drift::zero();
    } else if (spec.drift == "tanh") {
        drift = Drift::tanh(spec.drift_scale, std::max(dim, 1));
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown drift '" + spec.drift + "'");
    }
    return build_model(spec.a_eigenvalues, spec.g_matrix, std::move(drift));
}

GrowthReport validate_driver(const DriverSpec& driver, int dim) {
    if (!driver.f) throw Error(ErrorCode::InvalidArgument, "driver has no function");
    const NoiseSource noise(kCheckSeed, 2);
    GrowthReport report;
    const Covec zero = Covec::Zero(dim);
    for (int i = 0; i < kCheckSamples; ++i) {
        const Vec x = sample_ball(noise, i, 0, dim);
        const Covec z = sample_ball(noise, i, 1, dim).transpose();
        const Covec zp = sample_ball(noise, i, 2, dim).transpose();
        const double diff = std::abs(driver.f(x, z) - driver.f(x, zp));
        if (!within(diff, driver.lipschitz_z * (z - zp).norm()))
            throw Error(ErrorCode::LipschitzViolation, "driver '" + driver.name + "' is not " +
                                                           std::to_string(driver.lipschitz_z) + "-Lipschitz in z");
        const double f0 = driver.f(x, zero);
        if (!std::isfinite(f0)) throw Error(ErrorCode::GrowthViolation, "driver is not finite");
        report.constant = std::max(report.constant, std::abs(f0) / (1.0 + std::pow(x.norm(), driver.growth_mu)));
        ++report.samples;
    }
    return report;
}

GrowthReport validate_terminal(const TerminalSpec& terminal, int dim) {
    if (!terminal.g) throw Error(ErrorCode::InvalidArgument, "terminal has no function");
    const NoiseSource noise(kCheckSeed, 3);
    const int state_dim = terminal.kind == TerminalKind::RunningMax ? dim + 1 : dim;
    GrowthReport report;
    for (int i = 0; i < kCheckSamples; ++i) {
        Vec s = sample_ball(noise, i, 0, state_dim);
        double size = s.norm();
        if (terminal.kind == TerminalKind::RunningMax) {
            // The running max dominates |x|.
            s[dim] = std::max(std::abs(s[dim]), s.head(dim).norm());
            size = s[dim];
        }
        const double value = terminal.g(s);
        if (!std::isfinite(value)) throw Error(ErrorCode::GrowthViolation, "terminal is not finite");
        report.constant = std::max(report.constant, std::abs(value) / (1.0 + std::pow(size, terminal.growth_mu)));
        ++report.samples;
    }
    return report;
}

DriverSpec zero_driver() {
    return {"zero", [](const VecRef&, const CovecRef&) { return 0.0; }, 0.0, 0.0};
}

DriverSpec constant_driver(double c) {
    return {"constant", [c](const VecRef&, const CovecRef&) { return c; }, 0.0, 0.0};
}

DriverSpec linear_driver(double z_coef, double x_coef, int dim) {
    return {"linear",
            [z_coef, x_coef](const VecRef& x, const CovecRef& z) { return z_coef * z.sum() + x_coef * x.sum(); },
            std::abs(z_coef) * std::sqrt(static_cast<double>(dim)), x_coef == 0.0 ? 0.0 : 1.0};
}

TerminalSpec constant_terminal(double c) {
    return {"constant", TerminalKind::State, [c](const VecRef&) { return c; }, 0.0};
}

TerminalSpec linear_terminal() {
    return {"linear", TerminalKind::State, [](const VecRef& x) { return x.sum(); }, 1.0};
}

TerminalSpec quadratic_terminal() {
    return {"quadratic", TerminalKind::State, [](const VecRef& x) { return x.squaredNorm(); }, 2.0};
}

TerminalSpec running_max_squared_terminal() {
    return {"running-max-squared", TerminalKind::RunningMax,
            [](const VecRef& s) {
                const double m = s[s.size() - 1];
                return m * m;
            },
            2.0};
}

namespace {

Model scalar_model(double a, double sigma = 1.0, Drift drift = Drift::zero()) {
    return build_model(Vec::Constant(1, a), Mat::Constant(1, 1, sigma), std::move(drift));
}

// u(T, x) = a(T) x + b(T) for dX = -k X dt + dW, f = z + x, g = x.
ClosedForm affine_closed_form(double k) {
    ClosedForm cf;
    cf.lambda = 1.0 / k;
    // a' = -k a + 1, a(0) = 1  =>  a(T) = 1/k + (1 - 1/k) e^{-kT}
    // b' = a, b(0) = 0         =>  b(T) = T/k + (1 - 1/k)(1 - e^{-kT})/k
    cf.limit_L = (1.0 - 1.0 / k) / k;
    cf.v = [k](const VecRef& x) { return x[0] / k; };
    cf.u = [k](double T, const VecRef& x) {
        const double e = std::exp(-k * T);
        return (1.0 / k + (1.0 - 1.0 / k) * e) * x[0] + T / k + (1.0 - 1.0 / k) * (1.0 - e) / k;
    };
    return cf;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"ou1d-zero",          "ou1d-quadratic",   "ou1d-linear-driver", "ou1d-linear-driver-eta1",
            "ou1d-constant-driver", "ou1d-tanh-drift", "ou1d-running-max",   "ou2d-quadratic"};
}

Preset preset(const std::string& name) {
    Preset p;
    p.name = name;
    if (name == "ou1d-zero") {
        p.description = "a=-1, G=1, F=0; f=0; g=0";
        p.model = scalar_model(-1.0);
        p.driver = zero_driver();
        p.terminal = constant_terminal(0.0);
        p.terminal.name = "zero";
        p.closed_form = ClosedForm{0.0, 0.0, [](const VecRef&) { return 0.0; },
                                   [](double, const VecRef&) { return 0.0; }};
    } else if (name == "ou1d-quadratic") {
        p.description = "a=-1, G=1, F=0; f=0; g(x)=x^2";
        p.model = scalar_model(-1.0);
        p.driver = zero_driver();
        p.terminal = quadratic_terminal();
        p.closed_form = ClosedForm{0.0, 0.5, [](const VecRef&) { return 0.0; }, [](double T, const VecRef& x) {
                                       const double e = std::exp(-2.0 * T);
                                       return e * x[0] * x[0] + 0.5 * (1.0 - e);
                                   }};
    } else if (name == "ou1d-linear-driver" || name == "ou1d-linear-driver-eta1") {
        const double k = name == "ou1d-linear-driver" ? 2.0 : 1.0;
        p.description = "a=-" + std::to_string(static_cast<int>(k)) + ", G=1, F=0; f(x,z)=z+x; g(x)=x";
        p.model = scalar_model(-k);
        p.driver = linear_driver(1.0, 1.0, 1);
        p.terminal = linear_terminal();
        p.closed_form = affine_closed_form(k);
    } else if (name == "ou1d-constant-driver") {
        p.description = "a=-1, G=1, F=0; f=2; g=0";
        p.model = scalar_model(-1.0);
        p.driver = constant_driver(2.0);
        p.terminal = constant_terminal(0.0);
        p.terminal.name = "zero";
        p.closed_form = ClosedForm{2.0, 0.0, [](const VecRef&) { return 0.0; },
                                   [](double T, const VecRef&) { return 2.0 * T; }};
    } else if (name == "ou1d-tanh-drift") {
        p.description = "a=-1, G=1, F=0.5 tanh; f=0; g(x)=x";
        p.model = scalar_model(-1.0, 1.0, Drift::tanh(0.5, 1));
        p.driver = zero_driver();
        p.terminal = linear_terminal();
    } else if (name == "ou1d-running-max") {
        p.description = "a=-2, G=1, F=0; f(x,z)=z+x; xi=(max |X|)^2";
        p.model = scalar_model(-2.0);
        p.driver = linear_driver(1.0, 1.0, 1);
        p.terminal = running_max_squared_terminal();
        ClosedForm cf = affine_closed_form(2.0);
        cf.limit_L = std::numeric_limits<double>::quiet_NaN();
        cf.u = nullptr;
        p.closed_form = cf;
    } else if (name == "ou2d-quadratic") {
        p.description = "a=(-1,-3), G=diag(1,2), F=0; f=0; g(x)=|x|^2";
        Vec a(2);
        a << -1.0, -3.0;
        Mat g = Mat::Zero(2, 2);
        g.diagonal() << 1.0, 2.0;
        p.model = build_model(a, g, Drift::zero());
        p.driver = zero_driver();
        p.terminal = quadratic_terminal();
        ClosedForm cf;
        cf.lambda = 0.0;
        cf.limit_L = 0.5 + 4.0 / 6.0;
        cf.v = [](const VecRef&) { return 0.0; };
        cf.u = [a, g](double T, const VecRef& x) {
            double total = 0.0;
            for (int k = 0; k < 2; ++k) {
                const double e = std::exp(2.0 * a[k] * T);
                total += e * x[k] * x[k] + g(k, k) * g(k, k) * (1.0 - e) / (-2.0 * a[k]);
            }
            return total;
        };
        p.closed_form = cf;
    } else {
        throw Error(ErrorCode::UnknownPreset, "no preset named '" + name + "'");
    }
    return p;
}

}  // namespace ergolab
