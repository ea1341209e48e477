#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ergolab/config.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/runner.hpp"

using namespace ergolab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("ergolab_runner_" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentPlan plan_in(const std::string& text, const fs::path& dir) {
    ExperimentPlan p = parse_config(text);
    p.output_dir = dir.string();
    return p;
}

bool has_verdict(const RunResult& r, const std::string& name, bool pass) {
    for (const Verdict& v : r.verdicts)
        if (v.name == name) return v.pass == pass;
    return false;
}

const char* kSlope = R"(experiment = LambdaSlope
seed = 4
[problem]
preset = "ou1d-linear-driver"
[grids]
T_grid = [1, 2, 3]
x_list = [[0], [1]]
[budget]
paths = 2000
steps_per_unit = 10
[ergodic]
paths = 1000
steps_per_unit = 10
alpha_schedule = [0.8, 0.4]
horizon_factor = 4
[expect]
lambda_tol = 0.1
)";

}  // namespace

TEST_CASE("preset validation on the zero preset passes") {
    const fs::path dir = scratch("zero");
    const RunResult r = run_experiment(plan_in("experiment = PresetValidation\n[problem]\npreset = \"ou1d-zero\"\n", dir));
    CHECK(r.passed());
    CHECK(r.exit_code() == 0);
    for (const char* f : {"manifest.txt", "verdicts.txt", "preset_check.csv"}) CHECK(fs::exists(dir / f));
    CHECK(slurp(dir / "verdicts.txt").find("FAIL") == std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("failed checks give exit status 1") {
    const fs::path dir = scratch("fail");
    const RunResult r = run_experiment(plan_in(
        "experiment = CouplingDecay\n[problem]\npreset = \"ou1d-tanh-drift\"\n[budget]\npaths = 500\n"
        "[expect]\nslope_max = -100\n",
        dir));
    CHECK_FALSE(r.passed());
    CHECK(r.exit_code() == 1);
    CHECK(has_verdict(r, "decaying", false));
    CHECK(slurp(dir / "verdicts.txt").rfind("FAIL decaying", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("coupling without drift contracts exactly") {
    const fs::path dir = scratch("coupling");
    const RunResult r = run_experiment(plan_in(
        "experiment = CouplingDecay\n[problem]\na_eigenvalues = [-1.5]\ng_matrix = [[1]]\nterminal = linear\n"
        "[grids]\nx_list = [[2], [-1]]\n[budget]\npaths = 200\n",
        dir));
    CHECK(r.passed());
    CHECK(has_verdict(r, "exact_contraction", true));
    fs::remove_all(dir);
}

TEST_CASE("reruns are byte-identical across thread counts and from the manifest") {
    const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    const std::size_t threads = thread_count();
    set_thread_count(1);
    const RunResult ra = run_experiment(plan_in(kSlope, a));
    set_thread_count(3);
    const RunResult rb = run_experiment(plan_in(kSlope, b));
    set_thread_count(threads);
    const RunResult rc = run_experiment(plan_in(slurp(a / "manifest.txt"), c));

    REQUIRE(ra.files == rb.files);
    REQUIRE(ra.files == rc.files);
    CHECK(ra.files.size() >= 7);
    for (const std::string& f : ra.files) {
        CAPTURE(f);
        const std::string ref = slurp(a / f);
        CHECK_FALSE(ref.empty());
        CHECK(ref == slurp(b / f));
        CHECK(ref == slurp(c / f));
    }
    CHECK(has_verdict(ra, "lambda_expected", true));
    for (const fs::path& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("errors name the failing stage") {
    const fs::path dir = scratch("stage");
    ExperimentPlan p = plan_in("experiment = LambdaSlope\n[problem]\npreset = \"ou1d-quadratic\"\n[grids]\nT_grid = [1, 2]\n"
                               "[budget]\npaths = 100\n",
                               dir);
    try {
        run_experiment(p);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
        CHECK(std::string(e.what()).find("slope: ") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("unwritable output directory is an I/O error") {
    const fs::path file = fs::temp_directory_path() / "ergolab_runner_blocker";
    std::ofstream(file) << "x";
    ExperimentPlan p = parse_config("experiment = PresetValidation\n[problem]\npreset = \"ou1d-zero\"\n");
    p.output_dir = (file / "sub").string();
    try {
        run_experiment(p);
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
    fs::remove(file);
}

TEST_CASE("explicit problems resolve to the same pieces as the presets") {
    ProblemSpec s;
    s.a_eigenvalues = Vec::Constant(1, -2.0);
    s.g_matrix = Mat::Identity(1, 1);
    s.driver = "linear";
    s.driver_z = 1.0;
    s.driver_x = 1.0;
    s.terminal = "linear";
    const ResolvedProblem r = resolve_problem(s);
    const Preset p = preset("ou1d-linear-driver");
    const Vec x = Vec::Constant(1, 0.7);
    const Covec z = Covec::Constant(1, -0.3);
    CHECK(r.driver.f(x, z) == p.driver.f(x, z));
    CHECK(r.terminal.g(x) == p.terminal.g(x));
    CHECK(r.model.eta == p.model.eta);
    CHECK_FALSE(r.closed_form.has_value());
    s.driver = "cubic";
    CHECK_THROWS_AS(resolve_problem(s), Error);
}
