#include <doctest.h>

#include <string>

#include "ergolab/config.hpp"
#include "ergolab/error.hpp"

using namespace ergolab;

namespace {

ErrorCode code_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

std::string message_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("minimal preset config resolves with defaults") {
    const ExperimentPlan p = parse_config("experiment = PresetValidation\n[problem]\npreset = \"ou1d-zero\"\n");
    CHECK(p.experiment == Experiment::PresetValidation);
    CHECK(p.problem.preset == "ou1d-zero");
    CHECK(p.seed == 1);
    CHECK(p.T_grid.size() == 2);
    CHECK(p.x_list.size() == 1);
    CHECK(p.solver.paths == 20000);
    CHECK(p.ergodic_solver.paths == p.solver.paths);
    CHECK(p.output_dir == "ergolab-out");
}

TEST_CASE("values of every kind") {
    const std::string text = R"(# leading comment
experiment = LimitAndRate   # trailing comment
seed = 18446744073709551615
output_dir = "out dir/with \"quotes\""

[problem]
a_eigenvalues = [-1, -3.5]
g_matrix = [[1, 0], [0, 2]]
drift = tanh
drift_scale = 0.25
driver = "linear"
driver_z = 1
driver_x = -1e-1
terminal = quadratic

[grids]
T_grid = [0.5, 1, 2, 4]
x_list = [[0, 0], [1, -1]]
lambda_T_grid = []

[budget]
paths = 500
steps_per_unit = 12.5
basis = pwl:8:3
scheme = increment-explicit

[ergodic]
method = relative-value
paths = 300
alpha_schedule = [0.4, 0.2, 0.1]

[expect]
L = 0.5
rate = 2
)";
    const ExperimentPlan p = parse_config(text);
    CHECK(p.seed == 18446744073709551615ull);
    CHECK(p.output_dir == "out dir/with \"quotes\"");
    CHECK(p.problem.a_eigenvalues[1] == -3.5);
    CHECK(p.problem.g_matrix(1, 1) == 2.0);
    CHECK(p.problem.drift == "tanh");
    CHECK(p.problem.driver_x == -0.1);
    CHECK(p.x_list[1][1] == -1.0);
    CHECK(p.lambda_T_grid.size() == 0);
    CHECK(p.solver.steps_per_unit == 12.5);
    CHECK(p.solver.basis.kind == BasisKind::PiecewiseLinear);
    CHECK(p.solver.scheme == BsdeScheme::IncrementExplicit);
    CHECK(p.solver.seed == p.seed);
    CHECK(p.ergodic_method == ErgodicMethod::RelativeValue);
    CHECK(p.ergodic_solver.paths == 300);
    CHECK(p.ergodic_solver.steps_per_unit == 12.5);
    CHECK(p.ergodic_solver.seed == p.seed);
    CHECK(p.discounted.alpha_schedule.size() == 3);
    CHECK(*p.expect.L == 0.5);
    CHECK(*p.expect.rate == 2.0);
    CHECK_FALSE(p.expect.v.has_value());
}

TEST_CASE("unknown key is reported at its location") {
    const std::string text = "experiment = LambdaSlope\n[problem]\npreset = \"ou1d-quadratic\"\n[budget]\n  pathz = 10\n";
    CHECK(code_of(text) == ErrorCode::UnknownKey);
    const std::string msg = message_of(text);
    CHECK(msg.find("line 5, column 3") != std::string::npos);
    CHECK(msg.find("pathz") != std::string::npos);
}

TEST_CASE("non-increasing grid names the grid") {
    const std::string text = "experiment = LambdaSlope\n[problem]\npreset = \"ou1d-quadratic\"\n[grids]\nT_grid = [4, 2]\n";
    CHECK(code_of(text) == ErrorCode::InvalidArgument);
    CHECK(message_of(text).find("T_grid") != std::string::npos);
}

TEST_CASE("missing and mistyped values") {
    CHECK(code_of("[problem]\npreset = \"ou1d-zero\"\n") == ErrorCode::MissingRequired);
    CHECK(code_of("experiment = LambdaSlope\n") == ErrorCode::MissingRequired);
    CHECK(code_of("experiment = ControlExpansion\n") == ErrorCode::MissingRequired);
    CHECK(code_of("experiment = LambdaSlope\n[problem]\na_eigenvalues = [-1]\n") == ErrorCode::MissingRequired);
    CHECK(code_of("experiment = Nonsense\n") == ErrorCode::TypeMismatch);
    const std::string base = "experiment = LambdaSlope\n[problem]\npreset = \"ou1d-zero\"\n";
    CHECK(code_of(base + "[budget]\npaths = 1.5\n") == ErrorCode::TypeMismatch);
    CHECK(code_of(base + "[budget]\npaths = -3\n") == ErrorCode::TypeMismatch);
    CHECK(code_of(base + "[budget]\nsteps_per_unit = \"many\"\n") == ErrorCode::TypeMismatch);
    CHECK(code_of(base + "[budget]\nbasis = \"spline:3\"\n") == ErrorCode::TypeMismatch);
    CHECK(code_of(base + "[grids]\nT_grid = 4\n") == ErrorCode::TypeMismatch);
    CHECK(code_of(base + "[grids]\nx_list = [1, 2]\n") == ErrorCode::TypeMismatch);
    CHECK(message_of(base + "[budget]\npaths = 1.5\n").find("line 5, column 9") != std::string::npos);
}

TEST_CASE("syntax errors carry line and column") {
    const std::string base = "experiment = LambdaSlope\n";
    CHECK(code_of(base + "seed 3\n") == ErrorCode::ParseError);
    CHECK(code_of(base + "seed = \n") == ErrorCode::ParseError);
    CHECK(code_of(base + "output_dir = \"open\n") == ErrorCode::ParseError);
    CHECK(code_of(base + "[grids\n") == ErrorCode::ParseError);
    CHECK(code_of(base + "seed = 1 2\n") == ErrorCode::ParseError);
    CHECK(code_of(base + "seed = 1\nseed = 2\n") == ErrorCode::ParseError);
    CHECK(code_of(base + "[grids]\nT_grid = [1 2]\n") == ErrorCode::ParseError);
    CHECK(code_of(base + "seed = 1x\n") == ErrorCode::ParseError);
    CHECK(message_of(base + "seed = 1 2\n").find("line 2, column 10") != std::string::npos);
}

TEST_CASE("consistency checks") {
    const std::string base = "experiment = LambdaSlope\n[problem]\npreset = \"ou1d-zero\"\n";
    CHECK(code_of(base + "a_eigenvalues = [-1]\n") == ErrorCode::InvalidArgument);
    CHECK(code_of(base + "[grids]\nx_list = [[1, 2]]\n") == ErrorCode::InvalidArgument);
    CHECK(code_of(base + "[ergodic]\nalpha_schedule = [0.1, 0.2]\n") == ErrorCode::InvalidArgument);
    CHECK(code_of(base + "[budget]\npaths = 1\n") == ErrorCode::InvalidArgument);
    CHECK(code_of("experiment = CouplingDecay\n[problem]\npreset = \"ou1d-zero\"\n[grids]\nx_list = [[1]]\n") ==
          ErrorCode::InvalidArgument);
    CHECK(code_of("experiment = LambdaSlope\n[problem]\npreset = \"no-such\"\n") == ErrorCode::UnknownPreset);
}

TEST_CASE("formatted plans parse back to themselves") {
    const std::string texts[] = {
        "experiment = PresetValidation\n[problem]\npreset = \"ou1d-zero\"\n",
        "experiment = ControlExpansion\n[problem]\ncontrol = \"bangbang-quadratic\"\n[expect]\nlambda = 0.18\n",
        "experiment = CouplingDecay\nseed = 9\n[problem]\na_eigenvalues = [-1, -2]\ng_matrix = [[1, 0.5], [0, 1]]\n"
        "drift = tanh\ndrift_scale = 0.5\nterminal = linear\n[grids]\nx_list = [[1, 0], [0, 1]]\n"
        "T_grid = [0.1, 0.30000000000000004]\n[expect]\nslope_max = -0.1\n",
    };
    for (const std::string& text : texts) {
        const std::string once = format_config(parse_config(text));
        const std::string twice = format_config(parse_config(once));
        CHECK(once == twice);
    }
    const ExperimentPlan p = parse_config(format_config(parse_config(texts[2])));
    CHECK(p.T_grid[1] == 0.30000000000000004);
    CHECK(p.problem.g_matrix(0, 1) == 0.5);
    CHECK(*p.expect.slope_max == -0.1);
}

TEST_CASE("experiment defaults differ by pipeline") {
    const ExperimentPlan c = parse_config("experiment = ControlExpansion\n[problem]\ncontrol = \"zero-cost\"\n");
    CHECK(c.solver.scheme == BsdeScheme::IncrementExplicit);
    CHECK(c.ergodic_solver.steps_per_unit == 50.0);
    CHECK(c.T_grid.size() == 4);
    const ExperimentPlan l = parse_config("experiment = LimitAndRate\n[problem]\npreset = \"ou1d-quadratic\"\n");
    CHECK(l.lambda_T_grid.size() == 3);
    CHECK(l.x_list[0][0] == 0.0);
}
