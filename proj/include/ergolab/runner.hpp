#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ergolab/config.hpp"

namespace ergolab {

struct Verdict {
    std::string name;
    bool pass = false;
    bool hard = true;  // informational verdicts never fail a run
    std::string detail;
};

struct RunResult {
    std::vector<Verdict> verdicts;
    std::vector<std::string> files;  // written, relative to the output directory
    bool passed() const;
    int exit_code() const { return passed() ? 0 : 1; }
};

/// Problem resolved from a plan: a preset or the explicit pieces.
struct ResolvedProblem {
    Model model;
    DriverSpec driver;
    TerminalSpec terminal;
    std::optional<ClosedForm> closed_form;
};

ResolvedProblem resolve_problem(const ProblemSpec& spec);

/// Runs the plan and writes manifest.txt, the experiment CSVs and
/// verdicts.txt into plan.output_dir. Progress lines go to log when given.
/// Computation errors are rethrown with the failing stage in the message.
RunResult run_experiment(const ExperimentPlan& plan, std::ostream* log = nullptr);

}  // namespace ergolab
