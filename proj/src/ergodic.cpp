#include "ergolab/ergodic.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ergolab/csv.hpp"
#include "ergolab/error.hpp"
#include "text_io.hpp"

namespace ergolab {

namespace {

constexpr double kDivergenceBound = 1e8;

int step_index(double t, double steps_per_unit, int steps) {
    return std::clamp(static_cast<int>(std::lround(t * steps_per_unit)), 0, steps);
}

// Field of one solve read at one time index.
struct FieldSnapshot {
    BasisFrame frame;
    Vec y_coeffs;
    Mat y_cov;
    Mat z_coeffs;
    double value_at_zero = 0.0;
    double se_at_zero = 0.0;
};

FieldSnapshot snapshot(const BsdeSolution& sol, int n) {
    const auto k = static_cast<std::size_t>(n);
    FieldSnapshot s;
    s.frame = sol.frames[k];
    s.y_coeffs = sol.y_coeffs[k];
    s.y_cov = sol.y_cov[k];
    s.z_coeffs = sol.z_coeffs[std::min(k, sol.z_coeffs.size() - 1)];
    const FieldValue f = evaluate_fields(sol, n, Vec::Zero(sol.dim));
    s.value_at_zero = f.y;
    s.se_at_zero = f.y_se;
    return s;
}

std::string tag(const std::string& key, double value) { return key + "=" + format_double(value); }

}  // namespace

double ergodic_v(const ErgodicSolution& sol, const VecRef& x) {
    return sol.frame.evaluate(x).dot(sol.v_coeffs) - sol.frame.evaluate(Vec::Zero(x.size())).dot(sol.v_coeffs);
}

double ergodic_v_se(const ErgodicSolution& sol, const VecRef& x) {
    const Covec diff = sol.frame.evaluate(x) - sol.frame.evaluate(Vec::Zero(x.size()));
    return std::sqrt(std::max(0.0, (diff * sol.v_cov).dot(diff)));
}

Covec ergodic_z(const ErgodicSolution& sol, const VecRef& x) { return sol.frame.evaluate(x) * sol.z_coeffs; }

ErgodicSolution solve_ebsde_discounted(const Model& model, const DriverSpec& driver, const DiscountedParams& params,
                                       const SolverParams& solver) {
    const auto& alphas = params.alpha_schedule;
    if (alphas.empty()) throw Error(ErrorCode::NonMonotoneAlpha, "alpha schedule is empty");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0.0)) throw Error(ErrorCode::NonMonotoneAlpha, "alpha values must be positive");
        if (i > 0 && !(alphas[i] < alphas[i - 1]))
            throw Error(ErrorCode::NonMonotoneAlpha, "alpha schedule must be strictly decreasing");
    }
    if (!(params.horizon_factor > 0.0) || !(params.burn_in >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "horizon_factor must be positive and burn_in nonnegative");

    const TerminalSpec zero_terminal = constant_terminal(0.0);
    const Vec origin = Vec::Zero(model.dim);

    ErgodicSolution out;
    out.dim = model.dim;
    std::vector<FieldSnapshot> fields;
    for (double alpha : alphas) {
        const BsdeConfig cfg = solver.config(params.burn_in + params.horizon_factor / alpha, alpha);
        const BsdeSolution sol = solve_bsde(model, driver, zero_terminal, origin, cfg);
        const int n = step_index(params.burn_in, solver.steps_per_unit, cfg.steps);
        FieldSnapshot f = snapshot(sol, n);
        const double lambda_alpha = alpha * f.value_at_zero;
        if (!std::isfinite(lambda_alpha) || std::abs(f.value_at_zero) > kDivergenceBound)
            throw Error(ErrorCode::DiscountedDiverged,
                        "discounted value at alpha=" + format_double(alpha) + " is " + format_double(f.value_at_zero));
        out.alphas.push_back(alpha);
        out.lambda_alpha.push_back(lambda_alpha);
        fields.push_back(std::move(f));
    }

    const std::size_t last = alphas.size() - 1;
    // Cutting the discounted horizon at horizon_factor / alpha keeps only the
    // fraction 1 - exp(-horizon_factor) of each lambda_alpha.
    double truncation = 0.0;
    for (double l : out.lambda_alpha) truncation = std::max(truncation, std::abs(l) / std::expm1(params.horizon_factor));
    const FieldSnapshot& f2 = fields[last];
    out.frame = f2.frame;
    out.method_tags = {"method=discounted", tag("horizon_factor", params.horizon_factor), tag("burn_in", params.burn_in)};
    for (double a : alphas) out.method_tags.push_back(tag("alpha", a));
    if (alphas.size() == 1) {
        out.lambda = out.lambda_alpha[last];
        out.lambda_ci = 2.0 * alphas[last] * f2.se_at_zero + truncation;
        out.v_coeffs = f2.y_coeffs;
        out.v_cov = f2.y_cov;
        out.z_coeffs = f2.z_coeffs;
        out.method_tags.push_back("extrapolation=none");
        return out;
    }

    // lambda_alpha = lambda + c alpha + O(alpha^2): eliminate the linear term.
    const FieldSnapshot& f1 = fields[last - 1];
    const double a1 = alphas[last - 1];
    const double a2 = alphas[last];
    const double w1 = -a2 / (a1 - a2);
    const double w2 = a1 / (a1 - a2);
    out.lambda = w1 * out.lambda_alpha[last - 1] + w2 * out.lambda_alpha[last];
    const double se = std::hypot(w1 * a1 * f1.se_at_zero, w2 * a2 * f2.se_at_zero);
    out.lambda_ci = std::abs(out.lambda - out.lambda_alpha[last]) + 2.0 * se + (std::abs(w1) + std::abs(w2)) * truncation;
    if (f1.y_coeffs.size() == f2.y_coeffs.size()) {
        out.v_coeffs = w1 * f1.y_coeffs + w2 * f2.y_coeffs;
        out.v_cov = w1 * w1 * f1.y_cov + w2 * w2 * f2.y_cov;
        out.z_coeffs = w1 * f1.z_coeffs + w2 * f2.z_coeffs;
        out.method_tags.push_back("extrapolation=linear-in-alpha");
    } else {
        out.v_coeffs = f2.y_coeffs;
        out.v_cov = f2.y_cov;
        out.z_coeffs = f2.z_coeffs;
        out.method_tags.push_back("extrapolation=lambda-only");
    }
    return out;
}

ErgodicSolution solve_ebsde_relative_value(const Model& model, const DriverSpec& driver,
                                           const RelativeValueParams& params, const SolverParams& solver) {
    if (!(params.burn_in > 0.0) || !(params.window > 0.0) || !(params.relax >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "burn_in and window must be positive, relax nonnegative");
    const BsdeConfig cfg = solver.config(params.burn_in + params.window + params.relax);
    const BsdeSolution sol = solve_bsde(model, driver, constant_terminal(0.0), Vec::Zero(model.dim), cfg);
    const int n1 = step_index(params.burn_in, solver.steps_per_unit, cfg.steps);
    const int n2 = step_index(params.burn_in + params.window, solver.steps_per_unit, cfg.steps);
    if (n2 <= n1) throw Error(ErrorCode::InvalidArgument, "window is shorter than one step");
    const FieldSnapshot first = snapshot(sol, n1);
    const FieldSnapshot second = snapshot(sol, n2);
    const double window = sol.times[n2] - sol.times[n1];

    ErgodicSolution out;
    out.dim = model.dim;
    out.lambda = (first.value_at_zero - second.value_at_zero) / window;
    out.lambda_ci = 2.0 * (first.se_at_zero + second.se_at_zero) / window;
    out.frame = first.frame;
    out.v_coeffs = first.y_coeffs;
    out.v_cov = first.y_cov;
    out.z_coeffs = first.z_coeffs;
    out.method_tags = {"method=relative-value", tag("burn_in", params.burn_in), tag("window", window),
                       tag("relax", params.relax)};
    return out;
}

SlopeReport estimate_lambda_slope(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal,
                                  const Vec& T_grid, const Vec& x, const SolverParams& solver) {
    const auto k = T_grid.size();
    if (k < 3) throw Error(ErrorCode::InvalidArgument, "slope estimation needs at least three horizons");
    for (Eigen::Index i = 1; i < k; ++i)
        if (!(T_grid[i] > T_grid[i - 1])) throw Error(ErrorCode::InvalidArgument, "T_grid must be increasing");

    SlopeReport rep;
    rep.horizons = T_grid;
    rep.y0.resize(k);
    rep.y0_se.resize(k);
    const auto rows = static_cast<Eigen::Index>(solver.paths);
    Mat pathwise(rows, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const BsdeSolution sol = solve_bsde(model, driver, terminal, x, solver.config(T_grid[i]));
        rep.y0[i] = sol.y0;
        rep.y0_se[i] = sol.y0_se;
        pathwise.col(i) = sol.pathwise_y0;
    }

    // Least-squares slope as a fixed linear combination of the y0 values, so
    // its standard error can be read off the per-path combination.
    const double mean_t = T_grid.mean();
    const Vec centered = T_grid.array() - mean_t;
    const Vec weights = centered / centered.squaredNorm();
    rep.lambda_hat = weights.dot(rep.y0);
    rep.intercept = rep.y0.mean() - rep.lambda_hat * mean_t;
    const Vec per_path_slope = pathwise * weights;
    rep.lambda_ci = 2.0 * sample_mean(per_path_slope).std_error;

    const double mu = std::max(driver.growth_mu, terminal.growth_mu);
    const double spatial = 1.0 + std::pow(x.norm(), 1.0 + mu);
    const bool path_dependent = terminal.kind == TerminalKind::RunningMax;
    rep.bound_shape = path_dependent ? "C(1+T^(1/2))(1+|x|^(1+mu))/T" : "C(1+|x|^(1+mu))/T";
    rep.gap.resize(k);
    rep.gap_se.resize(k);
    rep.bound_ratio.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double T = T_grid[i];
        rep.gap[i] = std::abs(rep.y0[i] / T - rep.lambda_hat);
        const Vec per_path_gap = (pathwise.col(i) - T * per_path_slope) / T;
        rep.gap_se[i] = sample_mean(per_path_gap).std_error;
        const double shape = path_dependent ? (1.0 + std::sqrt(T)) * spatial / T : spatial / T;
        rep.bound_ratio[i] = rep.gap[i] / shape;
    }
    rep.bound_constant = rep.bound_ratio.maxCoeff();
    const double last_shape =
        path_dependent ? (1.0 + std::sqrt(T_grid[k - 1])) * spatial / T_grid[k - 1] : spatial / T_grid[k - 1];
    rep.bounded = rep.bound_ratio[k - 1] <= rep.bound_ratio.head(k - 1).maxCoeff() + 3.0 * rep.gap_se[k - 1] / last_shape;
    return rep;
}

CrossCheck cross_check(const ErgodicSolution& discounted, const SlopeReport& slope) {
    CrossCheck c;
    c.lambda_discounted = discounted.lambda;
    c.ci_discounted = discounted.lambda_ci;
    c.lambda_slope = slope.lambda_hat;
    c.ci_slope = slope.lambda_ci;
    c.difference = std::abs(c.lambda_discounted - c.lambda_slope);
    c.allowance = 2.0 * (c.ci_discounted + c.ci_slope);
    c.pass = c.difference <= c.allowance;
    return c;
}

void write_alpha_csv(const ErgodicSolution& sol, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < sol.alphas.size(); ++i) rows.push_back({sol.alphas[i], sol.lambda_alpha[i]});
    write_numeric_table(path, {"alpha", "lambda_alpha"}, rows);
}

void write_slope_csv(const SlopeReport& report, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < report.horizons.size(); ++i)
        rows.push_back({report.horizons[i], report.y0[i], report.y0_se[i], report.y0[i] / report.horizons[i]});
    write_numeric_table(path, {"T", "y0", "se", "y0_over_T"}, rows);
}

namespace {
constexpr const char* kErgodicMagic = "ergolab-ergodic-solution";
constexpr int kErgodicVersion = 1;
}  // namespace

void save_ergodic(const ErgodicSolution& sol, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    out << kErgodicMagic << ' ' << kErgodicVersion << '\n';
    out << "dim " << sol.dim << '\n';
    out << "basis " << to_string(sol.frame.spec()) << '\n';
    out << "lambda " << format_double(sol.lambda) << ' ' << format_double(sol.lambda_ci) << '\n';
    out << "tags " << sol.method_tags.size();
    for (const auto& t : sol.method_tags) out << ' ' << t;
    out << '\n';
    put(out, "alphas", Vec(Eigen::Map<const Vec>(sol.alphas.data(), static_cast<Eigen::Index>(sol.alphas.size()))));
    put(out, "lambda_alpha",
        Vec(Eigen::Map<const Vec>(sol.lambda_alpha.data(), static_cast<Eigen::Index>(sol.lambda_alpha.size()))));
    put_frame(out, sol.frame);
    put(out, "v_coeffs", sol.v_coeffs);
    put(out, "v_cov", sol.v_cov);
    put(out, "z_coeffs", sol.z_coeffs);
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

ErgodicSolution load_ergodic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    TextReader r(in);
    if (r.scalar<int>(kErgodicMagic) != kErgodicVersion) r.fail("unsupported version");
    ErgodicSolution sol;
    sol.dim = r.scalar<int>("dim");
    if (sol.dim <= 0) r.fail("dim must be positive");
    BasisSpec spec;
    try {
        spec = parse_basis(r.scalar<std::string>("basis"));
    } catch (const Error& e) {
        r.fail(e.what());
    }
    {
        auto tokens = r.line("lambda");
        sol.lambda = r.real(tokens, "lambda");
        sol.lambda_ci = r.real(tokens, "lambda");
    }
    {
        auto tokens = r.line("tags");
        std::size_t n = 0;
        if (!(tokens >> n)) r.fail("bad tag count");
        for (std::size_t i = 0; i < n; ++i) {
            std::string t;
            if (!(tokens >> t)) r.fail("missing tag");
            sol.method_tags.push_back(t);
        }
    }
    const Vec alphas = r.vec("alphas");
    const Vec lambda_alpha = r.vec("lambda_alpha");
    if (alphas.size() != lambda_alpha.size()) r.fail("alpha table is ragged");
    sol.alphas.assign(alphas.data(), alphas.data() + alphas.size());
    sol.lambda_alpha.assign(lambda_alpha.data(), lambda_alpha.data() + lambda_alpha.size());
    sol.frame = read_frame(r, spec, sol.dim);
    sol.v_coeffs = r.vec("v_coeffs");
    sol.v_cov = r.mat("v_cov");
    sol.z_coeffs = r.mat("z_coeffs");
    const auto b = sol.frame.size();
    if (sol.v_coeffs.size() != b || sol.v_cov.rows() != b || sol.z_coeffs.rows() != b || sol.z_coeffs.cols() != sol.dim)
        r.fail("coefficient arrays do not match the basis");
    return sol;
}

}  // namespace ergolab
