#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ergolab/bsde.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/sde.hpp"

using namespace ergolab;

namespace {

BsdeConfig config(double T, int steps, std::size_t paths, std::uint64_t seed = 3) {
    BsdeConfig c;
    c.horizon = T;
    c.steps = steps;
    c.paths = paths;
    c.seed = seed;
    return c;
}

Vec at(double x) { return Vec::Constant(1, x); }

// Closed-form slope of the affine solution of the linear-driver preset (a = -2).
double slope_a(double t) { return 0.5 + 0.5 * std::exp(-2.0 * t); }

}  // namespace

TEST_CASE("constant terminal with zero driver is reproduced exactly") {
    const Preset p = preset("ou1d-zero");
    const BsdeSolution s = solve_bsde(p.model, zero_driver(), constant_terminal(5.0), at(0.3), config(1.0, 20, 5000));
    CHECK(s.y0 == 5.0);
    for (int n : {0, 7, 20}) {
        const FieldValue f = evaluate_fields(s, n, at(0.1));
        CHECK(std::abs(f.y - 5.0) < 1e-8);
        CHECK(std::abs(f.z[0]) < 1e-8);
    }
}

TEST_CASE("constant driver integrates deterministically") {
    const Preset p = preset("ou1d-constant-driver");
    const BsdeSolution s = solve_bsde(p.model, p.driver, p.terminal, at(1.0), config(3.0, 60, 5000));
    CHECK(std::abs(s.y0 - 6.0) < 1e-10);
}

TEST_CASE("linear-driver preset matches the affine closed form") {
    const Preset p = preset("ou1d-linear-driver");
    const double exact = p.closed_form->u(2.0, at(1.0));
    CHECK(exact == doctest::Approx(1.7546).epsilon(1e-4));
    for (BsdeScheme scheme : {BsdeScheme::GradientTrapezoid, BsdeScheme::IncrementExplicit}) {
        CAPTURE(to_string(scheme));
        BsdeConfig c = config(2.0, 100, 100000);
        c.scheme = scheme;
        const BsdeSolution s = solve_bsde(p.model, p.driver, p.terminal, at(1.0), c);
        CHECK(std::abs(s.y0 - exact) < 3.0 * s.y0_se + 0.01);
        if (scheme == BsdeScheme::GradientTrapezoid) {
            // Points within one standard deviation of the forward law; the z
            // field at the last grid point is the one of the step before.
            for (int n : {20, 50, 90, 100}) {
                const double t = s.times[n];
                const double mean = std::exp(-2.0 * t);
                const double sd = std::sqrt((1.0 - std::exp(-4.0 * t)) / 4.0);
                for (double k : {-1.0, 0.0, 1.0}) {
                    const double x = mean + k * sd;
                    const FieldValue f = evaluate_fields(s, n, at(x));
                    CAPTURE(n);
                    CAPTURE(x);
                    CHECK_FALSE(f.extrapolated);
                    CHECK(std::abs(f.z[0] - slope_a(2.0 - s.times[std::min(n, 99)])) < 0.02);
                }
            }
        }
    }
}

TEST_CASE("quadratic preset value at time zero") {
    const Preset p = preset("ou1d-quadratic");
    const BsdeSolution s = solve_bsde(p.model, p.driver, p.terminal, at(1.0), config(2.0, 50, 40000));
    const FieldValue f = evaluate_fields(s, 0, at(1.0));
    CHECK(std::abs(f.y - p.closed_form->u(2.0, at(1.0))) < 3.0 * s.y0_se);
    CHECK(evaluate_fields(s, 20, at(50.0)).extrapolated);
}

TEST_CASE("zero driver agrees with the Kolmogorov semigroup on the same noise") {
    const Preset p = preset("ou1d-quadratic");
    const BsdeSolution s = solve_bsde(p.model, p.driver, p.terminal, at(1.0), config(2.0, 40, 20000, 11));
    const McEstimate sg = semigroup_apply(p.model, p.terminal.g, 2.0, at(1.0), 20000, 11, 40);
    CHECK(std::abs(s.y0 - sg.value) < 1e-10);
    CHECK(s.y0_se == doctest::Approx(sg.std_error).epsilon(1e-3));
}

TEST_CASE("terminal shift moves y0 by the shift and leaves Z alone") {
    const Preset p = preset("ou1d-linear-driver");
    TerminalSpec shifted = p.terminal;
    shifted.g = [](const VecRef& x) { return x[0] + 3.0; };
    const BsdeConfig c = config(1.0, 25, 10000);
    const BsdeSolution a = solve_bsde(p.model, p.driver, p.terminal, at(0.5), c);
    const BsdeSolution b = solve_bsde(p.model, p.driver, shifted, at(0.5), c);
    CHECK(std::abs(b.y0 - a.y0 - 3.0) < 1e-10);
    for (std::size_t n = 0; n < a.z_coeffs.size(); ++n)
        CHECK((a.z_coeffs[n] - b.z_coeffs[n]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("comparison: a larger driver gives a larger value") {
    const Preset p = preset("ou1d-tanh-drift");
    DriverSpec low{"low", [](const VecRef& x, const CovecRef& z) { return -std::abs(z[0]) + 0.1 * x[0]; }, 1.0, 1.0};
    DriverSpec high{"high", [](const VecRef& x, const CovecRef& z) { return std::abs(z[0]) + 0.1 * x[0]; }, 1.0, 1.0};
    const BsdeConfig c = config(1.5, 30, 10000);
    const BsdeSolution a = solve_bsde(p.model, low, p.terminal, at(0.5), c);
    const BsdeSolution b = solve_bsde(p.model, high, p.terminal, at(0.5), c);
    CHECK(a.y0 <= b.y0 + 3.0 * std::hypot(a.y0_se, b.y0_se));
}

TEST_CASE("growth of y0 - lambda T is bounded uniformly in T") {
    const Preset p = preset("ou1d-linear-driver");
    const double mu = std::max(p.driver.growth_mu, p.terminal.growth_mu);
    std::vector<double> ratios;
    for (double T : {2.0, 4.0, 8.0, 16.0}) {
        const BsdeSolution s =
            solve_bsde(p.model, p.driver, p.terminal, at(1.0), config(T, static_cast<int>(T * 20), 10000));
        ratios.push_back(std::abs(s.y0 - 0.5 * T) / (1.0 + std::pow(1.0, 1.0 + mu)));
    }
    const double c = ratios.front();
    for (double r : ratios) CHECK(std::abs(r - c) <= 0.1 * c + 0.02);
}

TEST_CASE("solutions are bit-identical across thread counts and checkpoint spacing") {
    const Preset p = preset("ou1d-linear-driver");
    const BsdeConfig c = config(1.0, 20, 9000);
    set_thread_count(1);
    const BsdeSolution a = solve_bsde(p.model, p.driver, p.terminal, at(0.2), c);
    set_thread_count(4);
    const BsdeSolution b = solve_bsde(p.model, p.driver, p.terminal, at(0.2), c);
    set_thread_count(1);
    BsdeConfig cp = c;
    cp.checkpoint_every = 3;
    const BsdeSolution d = solve_bsde(p.model, p.driver, p.terminal, at(0.2), cp);
    CHECK(a.y0 == b.y0);
    CHECK(a.y0 == d.y0);
    for (std::size_t n = 0; n < a.y_coeffs.size(); ++n) {
        CHECK(a.y_coeffs[n] == b.y_coeffs[n]);
        CHECK(a.y_coeffs[n] == d.y_coeffs[n]);
    }
}

TEST_CASE("running-max terminal uses the augmented state") {
    const Preset p = preset("ou1d-running-max");
    const BsdeSolution s = solve_bsde(p.model, p.driver, p.terminal, at(0.5), config(1.0, 20, 10000));
    CHECK(std::isfinite(s.y0));
    CHECK(s.input_dim() == 2);
    Vec state(2);
    state << 0.1, 0.8;
    const FieldValue f = evaluate_fields(s, 10, state);
    CHECK(f.z.size() == 1);
    CHECK(std::isfinite(f.y));
    CHECK_THROWS_AS(evaluate_fields(s, 10, at(0.1)), Error);
    // The terminal is at least the square of the starting point.
    CHECK(s.y0 > 0.25);
}

TEST_CASE("residual diagnostics") {
    const Preset zero = preset("ou1d-zero");
    const BsdeSolution flat = solve_bsde(zero.model, zero_driver(), constant_terminal(2.0), at(0.0), config(1.0, 10, 4000));
    CHECK(residual_diagnostics(flat, zero.model, zero_driver(), constant_terminal(2.0)).max_rms < 1e-12);

    const Preset q = preset("ou1d-quadratic");
    BsdeConfig c = config(1.0, 20, 20000);
    c.basis = parse_basis("poly:1");
    const BsdeSolution linear = solve_bsde(q.model, q.driver, q.terminal, at(0.5), c);
    c.basis = parse_basis("poly:3");
    const BsdeSolution cubic = solve_bsde(q.model, q.driver, q.terminal, at(0.5), c);
    const ResidualReport r1 = residual_diagnostics(linear, q.model, q.driver, q.terminal);
    const ResidualReport r3 = residual_diagnostics(cubic, q.model, q.driver, q.terminal);
    CHECK(r3.max_rms < r1.max_rms);

    const ResidualReport small = residual_diagnostics(cubic, q.model, q.driver, q.terminal, 2000);
    const ResidualReport large = residual_diagnostics(cubic, q.model, q.driver, q.terminal, 8000);
    const double ratio = large.std_error.mean() / small.std_error.mean();
    CHECK(ratio > 0.25);
    CHECK(ratio < 1.0);
}

TEST_CASE("solution artifact round trip") {
    const Preset p = preset("ou1d-running-max");
    const BsdeSolution s = solve_bsde(p.model, p.driver, p.terminal, at(0.5), config(1.0, 10, 3000));
    const std::string path = "bsde_roundtrip.txt";
    save_solution(s, path);
    const BsdeSolution r = load_solution(path);
    CHECK(r.y0 == s.y0);
    CHECK(r.y0_se == s.y0_se);
    Vec state(2);
    state << 0.2, 0.9;
    for (int n = 0; n <= 10; ++n) {
        const FieldValue a = evaluate_fields(s, n, state);
        const FieldValue b = evaluate_fields(r, n, state);
        CHECK(a.y == b.y);
        CHECK(a.z == b.z);
        CHECK(a.extrapolated == b.extrapolated);
    }
    {
        std::ofstream out(path);
        out << "ergolab-bsde-solution 1\ndim x\n";
    }
    CHECK_THROWS_AS(load_solution(path), Error);
    std::remove(path.c_str());
}
