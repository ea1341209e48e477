#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ergolab/ergodic.hpp"
#include "ergolab/error.hpp"

using namespace ergolab;

namespace {

Vec at(double x) { return Vec::Constant(1, x); }

SolverParams budget(std::size_t paths = 5000) {
    SolverParams s;
    s.paths = paths;
    s.steps_per_unit = 20;
    return s;
}

Vec horizons() {
    Vec T(4);
    T << 2, 4, 8, 16;
    return T;
}

}  // namespace

TEST_CASE("discounted solver with zero driver") {
    const Preset p = preset("ou1d-zero");
    const ErgodicSolution e = solve_ebsde_discounted(p.model, p.driver, DiscountedParams{}, budget());
    CHECK(e.lambda == 0.0);
    for (double x : {-1.0, 0.5, 2.0}) CHECK(std::abs(ergodic_v(e, at(x))) < 1e-12);
    CHECK(ergodic_v(e, at(0.0)) == 0.0);
}

TEST_CASE("discounted solver with constant driver") {
    const Preset p = preset("ou1d-zero");
    const ErgodicSolution e = solve_ebsde_discounted(p.model, constant_driver(2.0), DiscountedParams{}, budget());
    CHECK(std::abs(e.lambda - 2.0) < 0.02);
    CHECK(std::abs(e.lambda - 2.0) <= e.lambda_ci);
    for (double x : {-1.0, 1.0}) CHECK(std::abs(ergodic_v(e, at(x))) < 0.02);
    REQUIRE(e.alphas.size() == 2);
    CHECK(e.lambda_alpha[0] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("discounted solver on the linear-driver preset") {
    const Preset p = preset("ou1d-linear-driver");
    const ErgodicSolution e = solve_ebsde_discounted(p.model, p.driver, DiscountedParams{}, budget(10000));
    CHECK(std::abs(e.lambda - 0.5) < 0.02);
    CHECK(std::abs(ergodic_v(e, at(1.0)) - 0.5) < 0.05);
    CHECK(ergodic_v(e, at(0.0)) == 0.0);
    // Discounted values have the closed form 1 / (2 + alpha).
    for (std::size_t i = 0; i < e.alphas.size(); ++i)
        CHECK(std::abs(e.lambda_alpha[i] - 1.0 / (2.0 + e.alphas[i])) < 0.02);
    // Z = v' G = 1/2 on the bulk of the stationary law.
    for (double x : {-0.5, 0.0, 0.5}) CHECK(std::abs(ergodic_z(e, at(x))[0] - 0.5) < 0.05);
}

TEST_CASE("discounted solver rejects bad schedules") {
    const Preset p = preset("ou1d-zero");
    DiscountedParams params;
    params.alpha_schedule = {0.1, 0.2};
    CHECK_THROWS_AS(solve_ebsde_discounted(p.model, p.driver, params, budget(100)), Error);
    params.alpha_schedule = {0.2, 0.0};
    try {
        solve_ebsde_discounted(p.model, p.driver, params, budget(100));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonMonotoneAlpha);
    }
}

TEST_CASE("relative-value solver on the linear-driver preset") {
    const Preset p = preset("ou1d-linear-driver");
    const ErgodicSolution e = solve_ebsde_relative_value(p.model, p.driver, RelativeValueParams{}, budget(10000));
    CHECK(std::abs(e.lambda - 0.5) < 0.03);
    CHECK(std::abs(ergodic_v(e, at(1.0)) - 0.5) < 0.05);
    CHECK(ergodic_v(e, at(0.0)) == 0.0);
}

TEST_CASE("slope with constant driver is exact") {
    const Preset p = preset("ou1d-zero");
    const SlopeReport r = estimate_lambda_slope(p.model, constant_driver(2.0), constant_terminal(0.0), horizons(), at(1.0),
                                                budget(2000));
    CHECK(r.lambda_hat == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.gap.maxCoeff() < 1e-12);
    for (Eigen::Index i = 0; i < r.horizons.size(); ++i) CHECK(r.y0[i] == doctest::Approx(2.0 * r.horizons[i]));
}

TEST_CASE("slope on the quadratic preset") {
    const Preset p = preset("ou1d-quadratic");
    const SlopeReport r = estimate_lambda_slope(p.model, p.driver, p.terminal, horizons(), at(1.0), budget());
    CHECK(std::abs(r.lambda_hat) < 0.02);
    CHECK(r.bounded);
}

TEST_CASE("slope on the linear-driver preset and its bound") {
    const Preset p = preset("ou1d-linear-driver");
    const SlopeReport r = estimate_lambda_slope(p.model, p.driver, p.terminal, horizons(), at(1.0), budget());
    CHECK(std::abs(r.lambda_hat - 0.5) < 0.02);
    CHECK(r.bounded);
    CHECK(r.bound_shape == "C(1+|x|^(1+mu))/T");
    // gap * T stays near b(T) - T/2 + a(T) = 3/4 without trend.
    for (Eigen::Index i = 0; i < r.horizons.size(); ++i) CHECK(std::abs(r.gap[i] * r.horizons[i] - 0.75) < 0.1);
}

TEST_CASE("slope needs three increasing horizons") {
    const Preset p = preset("ou1d-zero");
    Vec two(2);
    two << 1, 2;
    CHECK_THROWS_AS(estimate_lambda_slope(p.model, p.driver, p.terminal, two, at(0.0), budget(100)), Error);
    Vec unordered(3);
    unordered << 1, 3, 2;
    CHECK_THROWS_AS(estimate_lambda_slope(p.model, p.driver, p.terminal, unordered, at(0.0), budget(100)), Error);
}

TEST_CASE("lambda does not depend on the starting point") {
    const Preset p = preset("ou1d-linear-driver");
    const SlopeReport base = estimate_lambda_slope(p.model, p.driver, p.terminal, horizons(), at(0.0), budget());
    for (double x : {1.0, 4.0}) {
        CAPTURE(x);
        const SlopeReport r = estimate_lambda_slope(p.model, p.driver, p.terminal, horizons(), at(x), budget());
        CHECK(std::abs(r.lambda_hat - base.lambda_hat) <= r.lambda_ci + base.lambda_ci);
    }
}

TEST_CASE("lambda does not depend on the terminal") {
    const Preset p = preset("ou1d-linear-driver");
    const SlopeReport lin = estimate_lambda_slope(p.model, p.driver, linear_terminal(), horizons(), at(1.0), budget());
    const SlopeReport quad = estimate_lambda_slope(p.model, p.driver, quadratic_terminal(), horizons(), at(1.0), budget());
    CHECK(std::abs(lin.lambda_hat - quad.lambda_hat) <= lin.lambda_ci + quad.lambda_ci);
}

TEST_CASE("cross check between the two estimators") {
    SUBCASE("zero driver") {
        const Preset p = preset("ou1d-zero");
        const auto e = solve_ebsde_discounted(p.model, p.driver, DiscountedParams{}, budget(2000));
        const auto s = estimate_lambda_slope(p.model, p.driver, p.terminal, horizons(), at(1.0), budget(2000));
        const CrossCheck c = cross_check(e, s);
        CHECK(c.pass);
        CHECK(c.lambda_discounted == 0.0);
        CHECK(c.lambda_slope == doctest::Approx(0.0));
    }
    SUBCASE("constant driver") {
        const Preset p = preset("ou1d-zero");
        const auto e = solve_ebsde_discounted(p.model, constant_driver(2.0), DiscountedParams{}, budget(2000));
        const auto s =
            estimate_lambda_slope(p.model, constant_driver(2.0), p.terminal, horizons(), at(1.0), budget(2000));
        const CrossCheck c = cross_check(e, s);
        CHECK(c.pass);
        CHECK(c.lambda_slope == doctest::Approx(2.0));
    }
    SUBCASE("linear driver") {
        const Preset p = preset("ou1d-linear-driver");
        const auto e = solve_ebsde_discounted(p.model, p.driver, DiscountedParams{}, budget());
        const auto s = estimate_lambda_slope(p.model, p.driver, p.terminal, horizons(), at(1.0), budget());
        const CrossCheck c = cross_check(e, s);
        CHECK(c.pass);
        CHECK(c.allowance == doctest::Approx(2.0 * (e.lambda_ci + s.lambda_ci)));
    }
    SUBCASE("disagreement fails") {
        ErgodicSolution e;
        e.lambda = 1.0;
        e.lambda_ci = 0.01;
        SlopeReport s;
        s.lambda_hat = 0.5;
        s.lambda_ci = 0.01;
        CHECK_FALSE(cross_check(e, s).pass);
    }
}

TEST_CASE("ergodic artifacts round trip") {
    const Preset p = preset("ou1d-linear-driver");
    const ErgodicSolution e = solve_ebsde_discounted(p.model, p.driver, DiscountedParams{}, budget(1000));
    const std::string path = "ergodic_roundtrip.txt";
    save_ergodic(e, path);
    const ErgodicSolution back = load_ergodic(path);
    CHECK(back.lambda == e.lambda);
    CHECK(back.lambda_ci == e.lambda_ci);
    CHECK(back.method_tags == e.method_tags);
    CHECK(back.alphas == e.alphas);
    CHECK(back.lambda_alpha == e.lambda_alpha);
    for (double x : {-1.0, 0.3, 2.0}) {
        CHECK(ergodic_v(back, at(x)) == ergodic_v(e, at(x)));
        CHECK(ergodic_z(back, at(x))[0] == ergodic_z(e, at(x))[0]);
        CHECK(ergodic_v_se(back, at(x)) == ergodic_v_se(e, at(x)));
    }
    std::remove(path.c_str());

    std::ofstream("ergodic_bad.txt") << "ergolab-ergodic-solution 1\ndim x\n";
    CHECK_THROWS_AS(load_ergodic("ergodic_bad.txt"), Error);
    std::remove("ergodic_bad.txt");

    write_alpha_csv(e, "alpha.csv");
    std::ifstream in("alpha.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "alpha,lambda_alpha");
    std::remove("alpha.csv");
}
