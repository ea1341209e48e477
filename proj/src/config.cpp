#include "ergolab/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ergolab/error.hpp"

namespace ergolab {

std::string to_string(Experiment e) {
    switch (e) {
        case Experiment::LambdaSlope: return "LambdaSlope";
        case Experiment::LimitAndRate: return "LimitAndRate";
        case Experiment::ControlExpansion: return "ControlExpansion";
        case Experiment::CouplingDecay: return "CouplingDecay";
        case Experiment::PresetValidation: return "PresetValidation";
    }
    return "Unknown";
}

Experiment parse_experiment(const std::string& text) {
    for (Experiment e : {Experiment::LambdaSlope, Experiment::LimitAndRate, Experiment::ControlExpansion,
                         Experiment::CouplingDecay, Experiment::PresetValidation})
        if (text == to_string(e)) return e;
    throw Error(ErrorCode::TypeMismatch, "unknown experiment '" + text + "'");
}

std::string to_string(ErgodicMethod m) { return m == ErgodicMethod::Discounted ? "discounted" : "relative-value"; }

namespace {

struct Value {
    enum class Kind { Number, Text, Bool, List } kind = Kind::Number;
    double number = 0.0;
    bool integer = false;
    std::uint64_t whole = 0;  // exact value of a nonnegative integer token
    std::string text;
    std::vector<Value> items;
    int line = 0;
    int column = 0;
};

struct Entry {
    std::string section;
    std::string key;
    Value value;
    int line = 0;
    int column = 0;
};

std::string where(int line, int column) {
    return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

[[noreturn]] void fail(ErrorCode code, int line, int column, const std::string& what) {
    throw Error(code, where(line, column) + ": " + what);
}

bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':' || c == '+';
}

class LineParser {
public:
    LineParser(const std::string& text, int line) : s_(text), line_(line) {}

    void skip() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool done() {
        skip();
        return pos_ >= s_.size() || s_[pos_] == '#';
    }
    int column() const { return static_cast<int>(pos_) + 1; }
    char peek() {
        skip();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }
    void expect(char c) {
        if (peek() != c) fail(ErrorCode::ParseError, line_, column(), std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string name() {
        skip();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (pos_ == start) fail(ErrorCode::ParseError, line_, column(), "expected a name");
        return s_.substr(start, pos_ - start);
    }

    Value value() {
        skip();
        Value v;
        v.line = line_;
        v.column = column();
        if (pos_ >= s_.size()) fail(ErrorCode::ParseError, line_, column(), "missing value");
        const char c = s_[pos_];
        if (c == '[') {
            ++pos_;
            v.kind = Value::Kind::List;
            if (peek() == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(value());
                const char next = peek();
                ++pos_;
                if (next == ']') break;
                if (next != ',') fail(ErrorCode::ParseError, line_, column() - 1, "expected ',' or ']' in list");
            }
            return v;
        }
        if (c == '"') {
            ++pos_;
            v.kind = Value::Kind::Text;
            while (true) {
                if (pos_ >= s_.size()) fail(ErrorCode::ParseError, v.line, v.column, "unterminated string");
                const char ch = s_[pos_++];
                if (ch == '"') break;
                if (ch == '\\') {
                    if (pos_ >= s_.size()) fail(ErrorCode::ParseError, line_, column(), "dangling escape");
                    v.text += s_[pos_++];
                } else {
                    v.text += ch;
                }
            }
            return v;
        }
        const std::size_t start = pos_;
        while (pos_ < s_.size() && word_char(s_[pos_])) ++pos_;
        const std::string token = s_.substr(start, pos_ - start);
        if (token.empty()) fail(ErrorCode::ParseError, line_, v.column, std::string("unexpected '") + c + "'");
        const char first = token[0];
        if (std::isdigit(static_cast<unsigned char>(first)) || first == '-' || first == '+' || first == '.') {
            const char* b = token.data() + (first == '+' ? 1 : 0);
            const char* e = token.data() + token.size();
            const auto [ptr, ec] = std::from_chars(b, e, v.number);
            if (ec != std::errc() || ptr != e) fail(ErrorCode::ParseError, line_, v.column, "bad number '" + token + "'");
            v.integer = token.find_first_of(".eE") == std::string::npos;
            if (v.integer && first != '-') {
                const auto [wp, wec] = std::from_chars(b, e, v.whole);
                if (wec != std::errc() || wp != e) fail(ErrorCode::ParseError, line_, v.column, "integer out of range");
            }
            return v;
        }
        if (token == "true" || token == "false") {
            v.kind = Value::Kind::Bool;
            v.number = token == "true" ? 1.0 : 0.0;
            return v;
        }
        v.kind = Value::Kind::Text;
        v.text = token;
        return v;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
    int line_;
};

std::vector<Entry> tokenize(const std::string& text) {
    std::vector<Entry> entries;
    std::map<std::string, int> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        LineParser p(raw, line);
        if (p.done()) continue;
        if (p.peek() == '[') {
            p.expect('[');
            section = p.name();
            p.expect(']');
            if (!p.done()) fail(ErrorCode::ParseError, line, p.column(), "trailing text after section header");
            continue;
        }
        Entry e;
        e.section = section;
        e.column = p.column();
        e.line = line;
        e.key = p.name();
        p.expect('=');
        e.value = p.value();
        if (!p.done()) fail(ErrorCode::ParseError, line, p.column(), "trailing text after value");
        const std::string full = section.empty() ? e.key : section + "." + e.key;
        if (const auto it = seen.find(full); it != seen.end())
            fail(ErrorCode::ParseError, line, e.column, "'" + full + "' already set on line " + std::to_string(it->second));
        seen[full] = line;
        entries.push_back(std::move(e));
    }
    return entries;
}

// Typed readers; each reports the value's own position on mismatch.
double real(const Value& v) {
    if (v.kind != Value::Kind::Number) fail(ErrorCode::TypeMismatch, v.line, v.column, "expected a number");
    return v.number;
}

std::uint64_t count(const Value& v) {
    if (v.kind != Value::Kind::Number || !v.integer || v.number < 0.0)
        fail(ErrorCode::TypeMismatch, v.line, v.column, "expected a nonnegative integer");
    return v.whole;
}

std::string text(const Value& v) {
    if (v.kind != Value::Kind::Text) fail(ErrorCode::TypeMismatch, v.line, v.column, "expected a string");
    return v.text;
}

Vec real_list(const Value& v) {
    if (v.kind != Value::Kind::List) fail(ErrorCode::TypeMismatch, v.line, v.column, "expected a list of numbers");
    Vec out(static_cast<Eigen::Index>(v.items.size()));
    for (std::size_t i = 0; i < v.items.size(); ++i) out[static_cast<Eigen::Index>(i)] = real(v.items[i]);
    return out;
}

std::vector<Vec> point_list(const Value& v) {
    if (v.kind != Value::Kind::List) fail(ErrorCode::TypeMismatch, v.line, v.column, "expected a list of points");
    std::vector<Vec> out;
    for (const Value& item : v.items) out.push_back(real_list(item));
    return out;
}

Mat matrix(const Value& v) {
    const std::vector<Vec> rows = point_list(v);
    if (rows.empty()) fail(ErrorCode::TypeMismatch, v.line, v.column, "expected a nonempty matrix");
    Mat m(static_cast<Eigen::Index>(rows.size()), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols()) fail(ErrorCode::TypeMismatch, v.line, v.column, "matrix rows differ in length");
        m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    return m;
}

template <typename F>
auto converted(const Value& v, F&& f) {
    try {
        return f(text(v));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::TypeMismatch && std::string(e.what()).find("line ") != std::string::npos) throw;
        fail(ErrorCode::TypeMismatch, v.line, v.column, e.what());
    }
}

Vec points(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

void apply_defaults(ExperimentPlan& plan) {
    SolverParams& s = plan.solver;
    switch (plan.experiment) {
        case Experiment::PresetValidation:
            plan.T_grid = points({1, 2});
            plan.x_list = {points({1})};
            s.paths = 20000;
            s.steps_per_unit = 25;
            break;
        case Experiment::LambdaSlope:
            plan.T_grid = points({2, 4, 8, 16});
            plan.x_list = {points({1})};
            s.paths = 10000;
            s.steps_per_unit = 20;
            break;
        case Experiment::LimitAndRate:
            plan.T_grid = points({0.25, 0.5, 1, 1.5, 2, 3});
            plan.x_list = {points({0})};
            plan.lambda_T_grid = points({4, 8, 16});
            s.paths = 20000;
            s.steps_per_unit = 50;
            break;
        case Experiment::ControlExpansion:
            plan.T_grid = points({1, 2, 3, 4});
            plan.x_list = {points({0})};
            s.paths = 20000;
            s.steps_per_unit = 100;
            s.basis = parse_basis("pwl:16:3");
            s.scheme = BsdeScheme::IncrementExplicit;
            break;
        case Experiment::CouplingDecay:
            plan.T_grid = points({0.5, 1, 1.5, 2, 2.5, 3});
            plan.x_list = {points({1}), points({-1})};
            s.paths = 10000;
            s.steps_per_unit = 50;
            break;
    }
}

struct ErgodicOverrides {
    std::optional<std::size_t> paths;
    std::optional<double> steps_per_unit;
    std::optional<BasisSpec> basis;
    std::optional<BsdeScheme> scheme;
    std::optional<int> picard_iters;
};

using Setter = std::function<void(ExperimentPlan&, ErgodicOverrides&, const Value&)>;

const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> table = {
        {"experiment", [](ExperimentPlan&, ErgodicOverrides&, const Value&) {}},
        {"seed", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.seed = count(v); }},
        {"output_dir", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.output_dir = text(v); }},

        {"problem.preset", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.preset = text(v); }},
        {"problem.control", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.control = text(v); }},
        {"problem.a_eigenvalues",
         [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.a_eigenvalues = real_list(v); }},
        {"problem.g_matrix", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.g_matrix = matrix(v); }},
        {"problem.drift", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.drift = text(v); }},
        {"problem.drift_scale", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.drift_scale = real(v); }},
        {"problem.driver", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.driver = text(v); }},
        {"problem.driver_z", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.driver_z = real(v); }},
        {"problem.driver_x", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.driver_x = real(v); }},
        {"problem.driver_c", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.driver_c = real(v); }},
        {"problem.terminal", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.terminal = text(v); }},
        {"problem.terminal_c", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.problem.terminal_c = real(v); }},

        {"grids.T_grid", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.T_grid = real_list(v); }},
        {"grids.x_list", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.x_list = point_list(v); }},
        {"grids.lambda_T_grid", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.lambda_T_grid = real_list(v); }},
        {"grids.v_horizon", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.v_horizon = real(v); }},

        {"budget.paths", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.solver.paths = count(v); }},
        {"budget.steps_per_unit", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.solver.steps_per_unit = real(v); }},
        {"budget.basis",
         [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.solver.basis = converted(v, parse_basis); }},
        {"budget.scheme",
         [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.solver.scheme = converted(v, parse_scheme); }},
        {"budget.picard_iters",
         [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.solver.picard_iters = static_cast<int>(count(v)); }},

        {"ergodic.method", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) {
             const std::string m = text(v);
             if (m == "discounted") p.ergodic_method = ErgodicMethod::Discounted;
             else if (m == "relative-value") p.ergodic_method = ErgodicMethod::RelativeValue;
             else fail(ErrorCode::TypeMismatch, v.line, v.column, "method is discounted or relative-value");
         }},
        {"ergodic.paths", [](ExperimentPlan&, ErgodicOverrides& o, const Value& v) { o.paths = count(v); }},
        {"ergodic.steps_per_unit", [](ExperimentPlan&, ErgodicOverrides& o, const Value& v) { o.steps_per_unit = real(v); }},
        {"ergodic.basis", [](ExperimentPlan&, ErgodicOverrides& o, const Value& v) { o.basis = converted(v, parse_basis); }},
        {"ergodic.scheme", [](ExperimentPlan&, ErgodicOverrides& o, const Value& v) { o.scheme = converted(v, parse_scheme); }},
        {"ergodic.picard_iters",
         [](ExperimentPlan&, ErgodicOverrides& o, const Value& v) { o.picard_iters = static_cast<int>(count(v)); }},
        {"ergodic.alpha_schedule", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) {
             const Vec a = real_list(v);
             p.discounted.alpha_schedule.assign(a.data(), a.data() + a.size());
         }},
        {"ergodic.horizon_factor",
         [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.discounted.horizon_factor = real(v); }},
        {"ergodic.burn_in", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.discounted.burn_in = real(v); }},
        {"ergodic.rv_burn_in", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.relative.burn_in = real(v); }},
        {"ergodic.rv_window", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.relative.window = real(v); }},
        {"ergodic.rv_relax", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.relative.relax = real(v); }},

        {"control.sim_paths", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.sim_paths = count(v); }},
        {"control.long_horizon", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.long_horizon = real(v); }},
        {"control.quadrature", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) {
             const std::string q = text(v);
             if (q == "trapezoid") p.quadrature = CostQuadrature::Trapezoid;
             else if (q == "left-endpoint") p.quadrature = CostQuadrature::LeftEndpoint;
             else fail(ErrorCode::TypeMismatch, v.line, v.column, "quadrature is trapezoid or left-endpoint");
         }},

        {"expect.lambda", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.lambda = real(v); }},
        {"expect.lambda_tol", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.lambda_tol = real(v); }},
        {"expect.L", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.L = real(v); }},
        {"expect.L_tol", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.L_tol = real(v); }},
        {"expect.rate", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.rate = real(v); }},
        {"expect.rate_tol", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.rate_tol = real(v); }},
        {"expect.v", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.v = real(v); }},
        {"expect.v_tol", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.v_tol = real(v); }},
        {"expect.slope_max", [](ExperimentPlan& p, ErgodicOverrides&, const Value& v) { p.expect.slope_max = real(v); }},
    };
    return table;
}

void check_grid(const Vec& grid, const char* name, bool allow_empty) {
    if (grid.size() == 0) {
        if (allow_empty) return;
        throw Error(ErrorCode::InvalidArgument, std::string(name) + " is empty");
    }
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || !std::isfinite(grid[i]))
            throw Error(ErrorCode::InvalidArgument, std::string(name) + " entries must be positive");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be strictly increasing");
    }
}

int state_dim(const ExperimentPlan& plan) {
    if (plan.experiment == Experiment::ControlExpansion) return control_preset(plan.problem.control).model.dim;
    if (!plan.problem.preset.empty()) return preset(plan.problem.preset).model.dim;
    return static_cast<int>(plan.problem.a_eigenvalues.size());
}

void validate(const ExperimentPlan& plan, const std::map<std::string, Entry>& given) {
    const ProblemSpec& pr = plan.problem;
    auto at = [&](const std::string& key) {
        const auto it = given.find(key);
        return it == given.end() ? std::string() : " (" + where(it->second.line, it->second.column) + ")";
    };
    const bool explicit_model = given.count("problem.a_eigenvalues") || given.count("problem.g_matrix");
    if (plan.experiment == Experiment::ControlExpansion) {
        if (pr.control.empty()) throw Error(ErrorCode::MissingRequired, "ControlExpansion needs problem.control");
    } else {
        if (!pr.preset.empty() && explicit_model)
            throw Error(ErrorCode::InvalidArgument, "problem.preset and an explicit model are both given" + at("problem.preset"));
        if (pr.preset.empty()) {
            if (!given.count("problem.a_eigenvalues"))
                throw Error(ErrorCode::MissingRequired, "problem.preset or problem.a_eigenvalues is required");
            if (!given.count("problem.g_matrix")) throw Error(ErrorCode::MissingRequired, "problem.g_matrix is required");
        }
    }
    try {
        check_grid(plan.T_grid, "T_grid", false);
    } catch (const Error& e) {
        throw Error(e.code(), std::string(e.what()).substr(std::string(to_string(e.code())).size() + 2) + at("grids.T_grid"));
    }
    check_grid(plan.lambda_T_grid, "lambda_T_grid", true);
    if (plan.v_horizon < 0.0) throw Error(ErrorCode::InvalidArgument, "v_horizon must be nonnegative");
    if (plan.solver.paths < 2 || plan.ergodic_solver.paths < 2)
        throw Error(ErrorCode::InvalidArgument, "paths must be at least 2");
    if (!(plan.solver.steps_per_unit > 0.0) || !(plan.ergodic_solver.steps_per_unit > 0.0))
        throw Error(ErrorCode::InvalidArgument, "steps_per_unit must be positive");
    const auto& alphas = plan.discounted.alpha_schedule;
    if (alphas.empty()) throw Error(ErrorCode::InvalidArgument, "alpha_schedule is empty");
    for (std::size_t i = 0; i < alphas.size(); ++i)
        if (!(alphas[i] > 0.0) || (i > 0 && !(alphas[i] < alphas[i - 1])))
            throw Error(ErrorCode::InvalidArgument, "alpha_schedule must be positive and strictly decreasing" +
                                                        at("ergodic.alpha_schedule"));
    if (plan.x_list.empty()) throw Error(ErrorCode::InvalidArgument, "x_list is empty");
    const int dim = state_dim(plan);
    for (const Vec& x : plan.x_list)
        if (x.size() != dim)
            throw Error(ErrorCode::InvalidArgument,
                        "x_list points must have dimension " + std::to_string(dim) + at("grids.x_list"));
    if (plan.experiment == Experiment::CouplingDecay && plan.x_list.size() < 2)
        throw Error(ErrorCode::InvalidArgument, "CouplingDecay needs two points in x_list");
    if (plan.sim_paths < 2) throw Error(ErrorCode::InvalidArgument, "sim_paths must be at least 2");
}

// Shortest decimal that reads back to the same double.
std::string number(double x) {
    char buf[40];
    const int digits = std::abs(x) >= 1.0 && std::abs(x) < 1e15 ? static_cast<int>(std::log10(std::abs(x))) + 1 : 1;
    for (int precision = digits; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, x);
        double back = 0.0;
        std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
        if (back == x) break;
    }
    return buf;
}

std::string list(const Vec& v) {
    std::string out = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + number(v[i]);
    return out + "]";
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

}  // namespace

ExperimentPlan parse_config(const std::string& text_in) {
    const std::vector<Entry> entries = tokenize(text_in);
    std::map<std::string, Entry> given;
    for (const Entry& e : entries) {
        const std::string full = e.section.empty() ? e.key : e.section + "." + e.key;
        if (!schema().count(full)) fail(ErrorCode::UnknownKey, e.line, e.column, "unknown key '" + full + "'");
        given.emplace(full, e);
    }
    const auto exp = given.find("experiment");
    if (exp == given.end()) throw Error(ErrorCode::MissingRequired, "experiment is required");

    ExperimentPlan plan;
    plan.experiment = converted(exp->second.value, parse_experiment);
    apply_defaults(plan);
    ErgodicOverrides overrides;
    for (const Entry& e : entries) {
        const std::string full = e.section.empty() ? e.key : e.section + "." + e.key;
        schema().at(full)(plan, overrides, e.value);
    }
    plan.solver.seed = plan.seed;
    plan.ergodic_solver = plan.solver;
    if (plan.experiment == Experiment::ControlExpansion) plan.ergodic_solver.steps_per_unit = 50;
    if (overrides.paths) plan.ergodic_solver.paths = *overrides.paths;
    if (overrides.steps_per_unit) plan.ergodic_solver.steps_per_unit = *overrides.steps_per_unit;
    if (overrides.basis) plan.ergodic_solver.basis = *overrides.basis;
    if (overrides.scheme) plan.ergodic_solver.scheme = *overrides.scheme;
    if (overrides.picard_iters) plan.ergodic_solver.picard_iters = *overrides.picard_iters;
    validate(plan, given);
    return plan;
}

ExperimentPlan load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string format_config(const ExperimentPlan& plan) {
    std::ostringstream out;
    const ProblemSpec& pr = plan.problem;
    out << "experiment = " << to_string(plan.experiment) << '\n';
    out << "seed = " << plan.seed << '\n';

    out << "\n[problem]\n";
    if (plan.experiment == Experiment::ControlExpansion) {
        out << "control = " << quoted(pr.control) << '\n';
    } else if (!pr.preset.empty()) {
        out << "preset = " << quoted(pr.preset) << '\n';
    } else {
        out << "a_eigenvalues = " << list(pr.a_eigenvalues) << '\n';
        out << "g_matrix = [";
        for (Eigen::Index i = 0; i < pr.g_matrix.rows(); ++i)
            out << (i ? ", " : "") << list(pr.g_matrix.row(i).transpose());
        out << "]\n";
        out << "drift = " << quoted(pr.drift) << '\n';
        out << "drift_scale = " << number(pr.drift_scale) << '\n';
        out << "driver = " << quoted(pr.driver) << '\n';
        out << "driver_z = " << number(pr.driver_z) << '\n';
        out << "driver_x = " << number(pr.driver_x) << '\n';
        out << "driver_c = " << number(pr.driver_c) << '\n';
        out << "terminal = " << quoted(pr.terminal) << '\n';
        out << "terminal_c = " << number(pr.terminal_c) << '\n';
    }

    out << "\n[grids]\n";
    out << "T_grid = " << list(plan.T_grid) << '\n';
    out << "x_list = [";
    for (std::size_t i = 0; i < plan.x_list.size(); ++i) out << (i ? ", " : "") << list(plan.x_list[i]);
    out << "]\n";
    out << "lambda_T_grid = " << list(plan.lambda_T_grid) << '\n';
    out << "v_horizon = " << number(plan.v_horizon) << '\n';

    auto budget = [&](const SolverParams& s) {
        out << "paths = " << s.paths << '\n';
        out << "steps_per_unit = " << number(s.steps_per_unit) << '\n';
        out << "basis = " << quoted(to_string(s.basis)) << '\n';
        out << "scheme = " << quoted(to_string(s.scheme)) << '\n';
        out << "picard_iters = " << s.picard_iters << '\n';
    };
    out << "\n[budget]\n";
    budget(plan.solver);

    out << "\n[ergodic]\n";
    out << "method = " << quoted(to_string(plan.ergodic_method)) << '\n';
    budget(plan.ergodic_solver);
    out << "alpha_schedule = "
        << list(Eigen::Map<const Vec>(plan.discounted.alpha_schedule.data(),
                                      static_cast<Eigen::Index>(plan.discounted.alpha_schedule.size())))
        << '\n';
    out << "horizon_factor = " << number(plan.discounted.horizon_factor) << '\n';
    out << "burn_in = " << number(plan.discounted.burn_in) << '\n';
    out << "rv_burn_in = " << number(plan.relative.burn_in) << '\n';
    out << "rv_window = " << number(plan.relative.window) << '\n';
    out << "rv_relax = " << number(plan.relative.relax) << '\n';

    out << "\n[control]\n";
    out << "sim_paths = " << plan.sim_paths << '\n';
    out << "long_horizon = " << number(plan.long_horizon) << '\n';
    out << "quadrature = " << quoted(to_string(plan.quadrature)) << '\n';

    const Expectations& ex = plan.expect;
    out << "\n[expect]\n";
    if (ex.lambda) out << "lambda = " << number(*ex.lambda) << '\n';
    out << "lambda_tol = " << number(ex.lambda_tol) << '\n';
    if (ex.L) out << "L = " << number(*ex.L) << '\n';
    out << "L_tol = " << number(ex.L_tol) << '\n';
    if (ex.rate) out << "rate = " << number(*ex.rate) << '\n';
    out << "rate_tol = " << number(ex.rate_tol) << '\n';
    if (ex.v) out << "v = " << number(*ex.v) << '\n';
    out << "v_tol = " << number(ex.v_tol) << '\n';
    if (ex.slope_max) out << "slope_max = " << number(*ex.slope_max) << '\n';
    return out.str();
}

}  // namespace ergolab
