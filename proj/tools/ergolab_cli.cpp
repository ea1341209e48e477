#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "ergolab/config.hpp"
#include "ergolab/control.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/runner.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kCheckFailure = 1;
constexpr int kUsage = 2;

const char* kOutputEnv = "ERGOLAB_OUTPUT_DIR";

int load(const std::string& path, ergolab::ExperimentPlan& plan) {
    try {
        plan = ergolab::load_config(path);
        return kPass;
    } catch (const ergolab::Error& e) {
        std::cerr << path << ": " << e.what() << '\n';
        return kUsage;
    }
}

int list_presets() {
    std::cout << "problem presets (problem.preset):\n";
    for (const auto& name : ergolab::preset_names())
        std::cout << "  " << name << "  " << ergolab::preset(name).description << '\n';
    std::cout << "control presets (problem.control):\n";
    for (const auto& name : ergolab::control_preset_names())
        std::cout << "  " << name << "  " << ergolab::control_preset(name).description << '\n';
    return kPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ergolab: large-time behaviour of ergodic BSDEs by least-squares Monte Carlo"};
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware); results do not depend on it");

    std::string config_path, output_dir;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("-o,--output-dir", output_dir, "output directory (overrides $ERGOLAB_OUTPUT_DIR and the config)");
    run->add_flag("-q,--quiet", quiet, "no progress output");

    auto* presets = app.add_subcommand("presets", "list the built-in presets");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "parse a config and print the resolved plan");
    validate->add_option("config", validate_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    if (threads > 0) ergolab::set_thread_count(threads);

    if (presets->parsed()) return list_presets();

    if (validate->parsed()) {
        ergolab::ExperimentPlan plan;
        if (const int rc = load(validate_path, plan); rc != kPass) return rc;
        std::cout << ergolab::format_config(plan);
        return kPass;
    }

    ergolab::ExperimentPlan plan;
    if (const int rc = load(config_path, plan); rc != kPass) return rc;
    if (const char* env = std::getenv(kOutputEnv); env && *env) plan.output_dir = env;
    if (!output_dir.empty()) plan.output_dir = output_dir;
    try {
        const ergolab::RunResult result = ergolab::run_experiment(plan, quiet ? nullptr : &std::cerr);
        std::size_t failed = 0;
        for (const auto& v : result.verdicts) failed += v.hard && !v.pass;
        std::cout << (result.passed() ? "PASS" : "FAIL") << ": " << result.verdicts.size() << " verdicts, " << failed
                  << " failed; outputs in " << plan.output_dir << '\n';
        return result.exit_code();
    } catch (const ergolab::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCheckFailure;
    }
}
