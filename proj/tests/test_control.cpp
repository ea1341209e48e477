#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>

#include "ergolab/control.hpp"
#include "ergolab/error.hpp"

using namespace ergolab;

namespace {

Vec at(double x) { return Vec::Constant(1, x); }

Covec co(double z) { return Covec::Constant(1, z); }

ControlledRun run(double T, int steps, std::size_t paths, CostEstimator e, std::uint64_t seed = 5) {
    ControlledRun r;
    r.horizon = T;
    r.steps = steps;
    r.paths = paths;
    r.seed = seed;
    r.estimator = e;
    return r;
}

// E int_0^T X_t^2 dt for dX = (-X + 1)dt + dW from 0, by RK4 on the mean and
// variance equations m' = 1 - m, s' = 1 - 2s with the running integral.
double moment_oracle(double T) {
    const int n = 4000;
    const double h = T / n;
    double m = 0.0, s = 0.0, acc = 0.0;
    auto rhs = [](double mm, double ss) { return std::array<double, 3>{1.0 - mm, 1.0 - 2.0 * ss, mm * mm + ss}; };
    for (int i = 0; i < n; ++i) {
        const auto k1 = rhs(m, s);
        const auto k2 = rhs(m + 0.5 * h * k1[0], s + 0.5 * h * k1[1]);
        const auto k3 = rhs(m + 0.5 * h * k2[0], s + 0.5 * h * k2[1]);
        const auto k4 = rhs(m + h * k3[0], s + h * k3[1]);
        m += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        s += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
        acc += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
    }
    return acc;
}

ControlProblem unit_cost_problem() {
    ControlProblem c = control_preset("zero-cost").problem;
    c.drift_of = [](const Vec&) { return Vec(Vec::Zero(1)); };
    c.running_cost = [](const VecRef&, const Vec&) { return 1.0; };
    return c;
}

}  // namespace

TEST_CASE("hamiltonian minimizes over the declared actions") {
    const ControlPreset p = control_preset("bangbang-quadratic");
    const HamiltonianValue a = hamiltonian(p.problem, p.model, at(1.0), co(2.0));
    CHECK(a.value == doctest::Approx(-1.0));
    CHECK(a.argmin == 0);
    const HamiltonianValue tie = hamiltonian(p.problem, p.model, at(0.0), co(0.0));
    CHECK(tie.value == 0.0);
    CHECK(tie.argmin == 0);
    const HamiltonianValue b = hamiltonian(p.problem, p.model, at(2.0), co(-3.0));
    CHECK(b.value == doctest::Approx(1.0));
    CHECK(b.argmin == 1);
}

TEST_CASE("hamiltonian driver is Lipschitz in z with constant c |G^-1|") {
    const ControlPreset p = control_preset("bangbang-quadratic");
    const DriverSpec f = hamiltonian_driver(p.problem, p.model);
    CHECK(f.lipschitz_z == doctest::Approx(1.0));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 3.0);
    for (int i = 0; i < 2000; ++i) {
        const Vec x = at(normal(rng));
        const Covec z1 = co(normal(rng)), z2 = co(normal(rng));
        CHECK(std::abs(f.f(x, z1) - f.f(x, z2)) <= f.lipschitz_z * (z1 - z2).norm() + 1e-12);
    }
}

TEST_CASE("control validation") {
    const ControlPreset p = control_preset("bangbang-quadratic");
    CHECK_NOTHROW(validate_control(p.problem, p.model));
    ControlProblem loose = p.problem;
    loose.drift_bound = 0.5;
    CHECK_THROWS_AS(validate_control(loose, p.model), Error);
    CHECK(validate_control(p.problem, p.model).running_constant <= 1.0);
    ControlProblem steep = p.problem;
    steep.running_cost = [](const VecRef& x, const Vec&) { return std::exp(x.norm()); };
    CHECK(validate_control(steep, p.model).running_constant > 100.0);
    steep.running_cost = [](const VecRef& x, const Vec&) { return x.norm() > 5.0 ? INFINITY : 0.0; };
    try {
        validate_control(steep, p.model);
        FAIL("expected GrowthViolation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::GrowthViolation);
    }
    ControlProblem empty = p.problem;
    empty.actions.clear();
    CHECK_THROWS_AS(validate_control(empty, p.model), Error);
    CHECK_THROWS_AS(control_preset("no-such-problem"), Error);
}

TEST_CASE("unit running cost costs exactly T") {
    const ControlPreset p = control_preset("zero-cost");
    const ControlProblem c = unit_cost_problem();
    for (auto e : {CostEstimator::Direct, CostEstimator::GirsanovWeighted}) {
        const CostEstimate j = simulate_controlled(p.model, c, constant_policy(1), at(0.3), run(2.5, 50, 500, e));
        CHECK(j.J == doctest::Approx(2.5).epsilon(1e-12));
        CHECK(j.se < 1e-10);
    }
}

TEST_CASE("constant push matches the moment oracle and both estimators agree") {
    const ControlPreset p = control_preset("bangbang-quadratic");
    const double oracle = moment_oracle(2.0);
    CHECK(oracle == doctest::Approx(1.51609).epsilon(1e-5));
    const CostEstimate direct =
        simulate_controlled(p.model, p.problem, constant_policy(1), at(0.0), run(2.0, 100, 20000, CostEstimator::Direct));
    const CostEstimate weighted = simulate_controlled(p.model, p.problem, constant_policy(1), at(0.0),
                                                      run(2.0, 100, 20000, CostEstimator::GirsanovWeighted));
    CHECK(std::abs(direct.J - oracle) <= 3.0 * direct.se + 0.01);
    CHECK(std::abs(weighted.J - oracle) <= 3.0 * weighted.se + 0.01);
    CHECK(std::abs(direct.J - weighted.J) <= 3.0 * std::hypot(direct.se, weighted.se));
    CHECK(std::abs(weighted.mean_weight - 1.0) <= 3.0 * weighted.weight_se);
    CHECK_FALSE(weighted.weight_degenerate);
    CHECK(direct.mean_weight == 1.0);

    SUBCASE("left-endpoint quadrature is within the same budget") {
        ControlledRun r = run(2.0, 100, 20000, CostEstimator::Direct);
        r.quadrature = CostQuadrature::LeftEndpoint;
        const CostEstimate left = simulate_controlled(p.model, p.problem, constant_policy(1), at(0.0), r);
        CHECK(std::abs(left.J - oracle) <= 3.0 * left.se + 0.01);
    }
}

TEST_CASE("controlled simulation is deterministic and rejects bad input") {
    const ControlPreset p = control_preset("bangbang-quadratic");
    const ControlledRun r = run(1.0, 20, 1000, CostEstimator::Direct);
    const CostEstimate a = simulate_controlled(p.model, p.problem, constant_policy(0), at(0.5), r);
    const CostEstimate b = simulate_controlled(p.model, p.problem, constant_policy(0), at(0.5), r);
    CHECK(a.J == b.J);
    CHECK(a.se == b.se);
    CHECK_THROWS_AS(simulate_controlled(p.model, p.problem, constant_policy(7), at(0.5), r), Error);
    CHECK_THROWS_AS(simulate_controlled(p.model, p.problem, constant_policy(0), at(0.5), run(0.0, 20, 1000, CostEstimator::Direct)),
                    Error);
    CHECK_THROWS_AS(simulate_controlled(p.model, p.problem, constant_policy(0), Vec::Zero(2), r), Error);
}

TEST_CASE("feedback from the solved field") {
    SUBCASE("bang-bang policy opposes the gradient") {
        const ControlPreset p = control_preset("bangbang-quadratic");
        SolverParams s;
        s.paths = 5000;
        s.steps_per_unit = 20;
        const auto sol = std::make_shared<const BsdeSolution>(solve_bsde(
            p.model, hamiltonian_driver(p.problem, p.model), control_terminal(p.problem), at(1.0), s.config(1.0)));
        const Policy policy = optimal_policy_from_bsde(sol, p.problem, p.model);
        for (double t : {0.1, 0.5, 0.9}) {
            for (double x : {-1.5, -0.7, 0.7, 1.5}) {
                const double z = evaluate_fields(*sol, static_cast<int>(std::lround(t / sol->step_size())), at(x)).z[0];
                const std::size_t expected = z > 0.0 ? 0 : (z < 0.0 ? 1 : 0);
                CHECK(policy(t, at(x)) == expected);
                CHECK(policy(t, at(x)) == policy(t, at(x)));
            }
        }
        // The cost grows away from the origin, so the policy pushes back toward it.
        CHECK(policy(0.5, at(1.5)) == 0);
        CHECK(policy(0.5, at(-1.5)) == 1);
    }
    SUBCASE("zero cost leaves every action optimal and the first is chosen") {
        const ControlPreset p = control_preset("zero-cost");
        SolverParams s;
        s.paths = 2000;
        s.steps_per_unit = 10;
        const auto sol = std::make_shared<const BsdeSolution>(solve_bsde(
            p.model, hamiltonian_driver(p.problem, p.model), control_terminal(p.problem), at(0.0), s.config(1.0)));
        const Policy policy = optimal_policy_from_bsde(sol, p.problem, p.model);
        for (double t : {0.0, 0.5, 0.95})
            for (double x : {-2.0, 0.0, 2.0}) CHECK(policy(t, at(x)) == 0);
    }
}

TEST_CASE("policy trace records actions on sample paths") {
    const ControlPreset p = control_preset("bangbang-quadratic");
    const ControlledRun r = run(1.0, 10, 100, CostEstimator::Direct);
    const std::vector<TraceRow> trace = trace_policy(p.model, p.problem, constant_policy(1), at(0.0), r, 3);
    CHECK(trace.size() == 3 * 11);
    for (const auto& row : trace) CHECK(row.action == 1);
    const std::string path = "ergolab_trace_test.csv";
    write_trace_csv(trace, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("action") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("zero-cost expansion is exact") {
    const ControlPreset p = control_preset("zero-cost");
    ExpansionParams ep;
    ep.solver.paths = 1000;
    ep.solver.steps_per_unit = 10;
    ep.ergodic_solver = ep.solver;
    ep.sim_paths = 1000;
    ep.long_horizon = 5.0;
    Vec T(4);
    T << 1, 2, 3, 4;
    const ExpansionReport r = expansion_report(p.model, p.problem, T, at(0.0), ep);
    CHECK(r.lambda == 0.0);
    CHECK(r.v == 0.0);
    CHECK(r.L_hat == 0.0);
    for (const auto& row : r.rows) {
        CHECK(row.y0 == 0.0);
        CHECK(row.feedback.J == 0.0);
        CHECK(row.expansion == 0.0);
    }
    CHECK(r.stabilized);
    CHECK(r.feedback_matches_value);

    const std::string path = "ergolab_expansion_test.csv";
    write_expansion_csv(r, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "T,J_T,se,J_T_minus_lambda_T_minus_v");
    std::remove(path.c_str());
}

TEST_CASE("bang-bang expansion at a small budget") {
    const ControlPreset p = control_preset("bangbang-quadratic");
    ExpansionParams ep;
    ep.solver.paths = 5000;
    ep.solver.steps_per_unit = 50;
    ep.solver.basis = parse_basis("pwl:16:3");
    ep.solver.scheme = BsdeScheme::IncrementExplicit;
    ep.ergodic_solver = ep.solver;
    ep.ergodic_solver.steps_per_unit = 25;
    ep.sim_paths = 5000;
    ep.long_horizon = 20.0;
    Vec T(2);
    T << 1, 2;
    const ExpansionReport r = expansion_report(p.model, p.problem, T, at(0.0), ep);
    CHECK(r.weights_normalized);
    CHECK(r.estimators_agree);
    CHECK(r.constant_above_feedback);
    CHECK(r.constant_above_value);
    CHECK(r.ergodic_lower_bound);
    CHECK(r.lambda == doctest::Approx(0.1805).epsilon(0.1));
    CHECK_THROWS_AS(expansion_report(p.model, p.problem, Vec::Constant(1, 1.0), at(0.0), ep), Error);
}
