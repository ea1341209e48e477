#include "ergolab/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ergolab/csv.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/philox.hpp"
#include "ergolab/sde.hpp"
#include "text_io.hpp"

namespace ergolab {

namespace {

constexpr double kEnvelopeTail = 0.0025;
constexpr std::uint64_t kHoldoutSalt = 0x9e3779b97f4a7c15ull;

void validate_config(const Model& model, const Vec& x0, const BsdeConfig& c) {
    if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (c.steps <= 0) throw Error(ErrorCode::InvalidArgument, "steps must be positive");
    if (c.paths < 2) throw Error(ErrorCode::InvalidArgument, "at least two paths are required");
    if (c.picard_iters < 0) throw Error(ErrorCode::InvalidArgument, "picard_iters must be nonnegative");
    if (!(c.discount >= 0.0)) throw Error(ErrorCode::InvalidArgument, "discount must be nonnegative");
    if (x0.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "x0 has wrong dimension");
}

PathMatrix input_state(const PathMatrix& x, const Vec* running_max) {
    if (!running_max) return x;
    PathMatrix s(x.rows(), x.cols() + 1);
    s.leftCols(x.cols()) = x;
    s.col(x.cols()) = *running_max;
    return s;
}

Vec driver_values(const DriverSpec& driver, const PathMatrix& x, const PathMatrix& z) {
    Vec out(x.rows());
    const auto d = z.cols();
    parallel_chunks(static_cast<std::size_t>(x.rows()), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            const auto r = static_cast<Eigen::Index>(m);
            out[r] = driver.f(row_view(x, r), Eigen::Map<const Covec>(z.row(r).data(), d));
        }
    });
    return out;
}

// Pathwise sensitivity of the driver to each coordinate of z, by forward differences.
Mat driver_z_sensitivity(const DriverSpec& driver, const PathMatrix& x, const PathMatrix& z, const Vec& base) {
    const auto d = z.cols();
    Mat out(x.rows(), d);
    parallel_chunks(static_cast<std::size_t>(x.rows()), [&](std::size_t, std::size_t begin, std::size_t end) {
        Covec bumped(d);
        for (std::size_t m = begin; m < end; ++m) {
            const auto r = static_cast<Eigen::Index>(m);
            for (Eigen::Index j = 0; j < d; ++j) {
                bumped = z.row(r);
                const double step = 1e-6 * (1.0 + std::abs(bumped[j]));
                bumped[j] += step;
                out(r, j) = (driver.f(row_view(x, r), bumped) - base[r]) / step;
            }
        }
    });
    return out;
}

Vec terminal_values(const TerminalSpec& terminal, const PathMatrix& state) {
    Vec out(state.rows());
    parallel_chunks(static_cast<std::size_t>(state.rows()), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) out[static_cast<Eigen::Index>(m)] = terminal.g(row_view(state, static_cast<Eigen::Index>(m)));
    });
    return out;
}

void envelope(const PathMatrix& state, Vec& lo, Vec& hi) {
    const auto m = static_cast<std::size_t>(state.rows());
    lo.resize(state.cols());
    hi.resize(state.cols());
    std::vector<double> column(m);
    const auto lo_rank = static_cast<std::size_t>(std::floor(kEnvelopeTail * static_cast<double>(m - 1)));
    const auto hi_rank = static_cast<std::size_t>(std::ceil((1.0 - kEnvelopeTail) * static_cast<double>(m - 1)));
    for (Eigen::Index k = 0; k < state.cols(); ++k) {
        for (std::size_t i = 0; i < m; ++i) column[i] = state(static_cast<Eigen::Index>(i), k);
        std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(lo_rank), column.end());
        lo[k] = column[lo_rank];
        std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(hi_rank), column.end());
        hi[k] = column[hi_rank];
    }
}

void check_finite(const Vec& values, int n) {
    if (!values.allFinite()) throw Error(ErrorCode::NonFiniteY, "non-finite value at step " + std::to_string(n));
}

// Replays the forward pass from checkpoints so that only one segment of
// states is held in memory during the backward sweep.
class ForwardReplay {
public:
    ForwardReplay(const Model& model, const Vec& x0, const BsdeConfig& config, bool augment)
        : model_(model), tr_(make_transition(model, config.horizon / config.steps)), noise_(config.seed),
          steps_(config.steps), augment_(augment) {
        every_ = config.checkpoint_every;
        if (every_ <= 0) {
            // Keep every state when the whole pass fits the memory budget.
            const double full = static_cast<double>(config.paths) * (config.steps + 1) * (2.0 * model.dim + 1.0);
            every_ = full <= static_cast<double>(memory_budget()) / 4
                         ? config.steps
                         : std::max(1, static_cast<int>(std::ceil(std::sqrt(config.steps))));
        }
        const auto rows = static_cast<Eigen::Index>(config.paths);
        PathMatrix x = x0.transpose().replicate(rows, 1);
        Vec runmax = Vec::Constant(rows, x0.norm());
        PathMatrix next;
        const int last_checkpoint = ((steps_ - 1) / every_) * every_;
        for (int n = 0; n <= last_checkpoint; ++n) {
            if (n % every_ == 0) {
                checkpoints_.push_back(x);
                if (augment_) checkpoint_max_.push_back(runmax);
            }
            if (n == last_checkpoint) break;
            advance_all(model_, tr_, noise_, static_cast<std::uint64_t>(n), x, next);
            x.swap(next);
            if (augment_) runmax = runmax.cwiseMax(x.rowwise().norm());
        }
    }

    int segments() const { return static_cast<int>(checkpoints_.size()); }
    int segment_start(int j) const { return j * every_; }
    int segment_end(int j) const { return std::min(steps_, (j + 1) * every_); }

    // States at steps start..end, increments at start..end-1.
    void replay(int j, std::vector<PathMatrix>& x, std::vector<PathMatrix>& dw, std::vector<Vec>& runmax) const {
        const int start = segment_start(j);
        const int len = segment_end(j) - start;
        x.assign(static_cast<std::size_t>(len + 1), PathMatrix());
        dw.assign(static_cast<std::size_t>(len), PathMatrix());
        runmax.clear();
        x[0] = checkpoints_[static_cast<std::size_t>(j)];
        if (augment_) runmax.push_back(checkpoint_max_[static_cast<std::size_t>(j)]);
        for (int i = 0; i < len; ++i) {
            const auto k = static_cast<std::size_t>(i);
            advance_all(model_, tr_, noise_, static_cast<std::uint64_t>(start + i), x[k], x[k + 1], &dw[k]);
            if (augment_) runmax.push_back(runmax.back().cwiseMax(x[k + 1].rowwise().norm()));
        }
    }

private:
    const Model& model_;
    OuTransition tr_;
    NoiseSource noise_;
    int steps_;
    bool augment_;
    int every_ = 1;
    std::vector<PathMatrix> checkpoints_;
    std::vector<Vec> checkpoint_max_;
};

}  // namespace

std::string to_string(BsdeScheme scheme) {
    return scheme == BsdeScheme::GradientTrapezoid ? "gradient-trapezoid" : "increment-explicit";
}

BsdeScheme parse_scheme(const std::string& text) {
    if (text == "gradient-trapezoid") return BsdeScheme::GradientTrapezoid;
    if (text == "increment-explicit") return BsdeScheme::IncrementExplicit;
    throw Error(ErrorCode::InvalidArgument, "unknown scheme '" + text + "'");
}

BsdeConfig SolverParams::config(double T, double discount) const {
    BsdeConfig c;
    c.horizon = T;
    c.steps = std::max(1, static_cast<int>(std::lround(T * steps_per_unit)));
    c.basis = basis;
    c.paths = paths;
    c.seed = seed;
    c.picard_iters = picard_iters;
    c.scheme = scheme;
    c.discount = discount;
    return c;
}

BsdeSolution solve_bsde(const Model& model, const DriverSpec& driver, const TerminalSpec& terminal, const Vec& x0,
                        const BsdeConfig& config) {
    validate_config(model, x0, config);
    if (!driver.f || !terminal.g) throw Error(ErrorCode::InvalidArgument, "driver and terminal must be set");
    const int n_steps = config.steps;
    const int d = model.dim;
    const double h = config.horizon / n_steps;
    const double alpha = config.discount;
    const bool augment = terminal.kind == TerminalKind::RunningMax;
    const auto rows = static_cast<Eigen::Index>(config.paths);

    BsdeSolution sol;
    sol.config = config;
    sol.times = Vec::LinSpaced(n_steps + 1, 0.0, config.horizon);
    sol.x0 = x0;
    sol.dim = d;
    sol.terminal_kind = terminal.kind;
    const auto slots = static_cast<std::size_t>(n_steps + 1);
    sol.frames.resize(slots);
    sol.y_coeffs.resize(slots);
    sol.z_coeffs.resize(slots - 1);
    sol.y_cov.resize(slots);
    sol.envelope_lo.resize(slots);
    sol.envelope_hi.resize(slots);
    sol.diagnostics.resize(slots);

    const ForwardReplay forward(model, x0, config, augment);

    Vec values(rows);       // pathwise Y at the current step
    Vec fitted_next(rows);  // regressed Y at the step after the current one
    Vec driver_next(rows);  // pathwise f at the step after the current one

    // Field covariance: one-step regression noise plus the covariance of the
    // next field carried through the linearized step, including the response
    // of the driver to errors in the fitted Z.
    Mat design_next;
    Mat sens_next;  // d f_next / d(next coefficients), pathwise
    auto record_field = [&](int n, const Mat& design, const Projection& proj, const Vec& target, const Vec& coeffs,
                            const Mat& transfer, const Mat& implicit, const Mat& extra_noise) {
        const auto k = static_cast<std::size_t>(n);
        sol.y_coeffs[k] = coeffs;
        const Vec resid = target - design * coeffs;
        const double dof = std::max(1.0, static_cast<double>(rows - design.cols()));
        Mat cov = (resid.squaredNorm() / dof) * proj.gram_inverse();
        if (extra_noise.size() > 0) cov += extra_noise;
        if (n + 1 < n_steps && transfer.size() > 0) cov += transfer * sol.y_cov[k + 1] * transfer.transpose();
        if (implicit.size() > 0) {
            const Mat solve = (Mat::Identity(implicit.rows(), implicit.cols()) - implicit).inverse();
            cov = solve * cov * solve.transpose();
        }
        sol.y_cov[k] = cov;
        sol.diagnostics[k].condition = proj.condition();
        sol.diagnostics[k].regularized = proj.regularized();
        sol.diagnostics[k].fit_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(rows));
        fitted_next = design * coeffs;
        design_next = design;
    };

    std::vector<PathMatrix> seg_x, seg_dw;
    std::vector<Vec> seg_max;
    for (int j = forward.segments() - 1; j >= 0; --j) {
        forward.replay(j, seg_x, seg_dw, seg_max);
        const int start = forward.segment_start(j);
        const int end = forward.segment_end(j);

        if (end == n_steps) {
            const auto last = static_cast<std::size_t>(end - start);
            const PathMatrix state = input_state(seg_x[last], augment ? &seg_max[last] : nullptr);
            values = terminal_values(terminal, state);
            check_finite(values, n_steps);
            const auto k = static_cast<std::size_t>(n_steps);
            sol.frames[k] = BasisFrame::fit(config.basis, state);
            const Mat design = sol.frames[k].design(state);
            const Projection proj(design);
            record_field(n_steps, design, proj, values, proj.solve(values), Mat(), Mat(), Mat());
            sol.y_cov[k].setZero();
            sens_next = Mat::Zero(rows, design.cols());
            fitted_next = values;
            envelope(state, sol.envelope_lo[k], sol.envelope_hi[k]);
        }

        for (int n = end - 1; n >= start; --n) {
            const auto local = static_cast<std::size_t>(n - start);
            const auto k = static_cast<std::size_t>(n);
            const PathMatrix& x = seg_x[local];
            const PathMatrix state = input_state(x, augment ? &seg_max[local] : nullptr);

            const bool trapezoid = config.scheme == BsdeScheme::GradientTrapezoid && n != n_steps - 1;
            const double theta = trapezoid ? 0.5 : 1.0;
            const double keep = 1.0 - (1.0 - theta) * h * alpha;
            const Vec target = fitted_next * keep + ((1.0 - theta) * h) * driver_next;
            const double denom = 1.0 + theta * h * alpha;

            sol.frames[k] = BasisFrame::fit(config.basis, state);
            const BasisFrame& frame = sol.frames[k];
            const Mat design = frame.design(state);
            const Projection proj(design);
            const Vec cont = proj.solve(target);

            const bool from_increments = config.scheme == BsdeScheme::IncrementExplicit || !frame.all_active(d);
            sol.diagnostics[k].gradient_from_increments = from_increments;
            PathMatrix z(rows, d);
            std::vector<Mat> grads;
            auto z_from_field = [&](const Vec& coeffs) {
                Mat g(rows, d);
                for (int c = 0; c < d; ++c) g.col(c) = grads[static_cast<std::size_t>(c)] * coeffs;
                z = g * model.g_matrix;
            };
            if (from_increments) {
                const Vec surprise = target - design * cont;
                const Mat weighted = surprise.asDiagonal() * Mat(seg_dw[local]);
                z = design * (proj.solve(weighted) / h);
            } else {
                grads = frame.gradient_design(state, d);
                z_from_field(cont);
                for (int it = 0; it < config.picard_iters; ++it) {
                    const Vec trial = (target + (theta * h) * driver_values(driver, x, z)) / denom;
                    z_from_field(proj.solve(trial));
                }
            }
            const Vec driver_here = driver_values(driver, x, z);
            values = (values * keep + ((1.0 - theta) * h) * driver_next + (theta * h) * driver_here) / denom;
            check_finite(values, n);
            const Vec field_target = (target + (theta * h) * driver_here) / denom;
            driver_next = driver_here;

            const Mat dfdz = driver_z_sensitivity(driver, x, z, driver_here);
            const Mat target_sens = design_next * keep + ((1.0 - theta) * h) * sens_next;
            Mat step_sens = target_sens;
            Mat implicit, extra_noise;
            Mat sens_here = Mat::Zero(rows, design.cols());
            if (from_increments) {
                // Z is regressed from the surprise, so it responds to the next field
                // and carries its own regression noise.
                const Mat resid_sens = target_sens - design * proj.solve(target_sens);
                const Vec surprise = target - design * cont;
                const double dof = std::max(1.0, static_cast<double>(rows - design.cols()));
                extra_noise = Mat::Zero(design.cols(), design.cols());
                for (int c = 0; c < d; ++c) {
                    const Vec dw = seg_dw[local].col(c);
                    const Mat zsens = proj.solve(Mat(dw.asDiagonal() * resid_sens)) / h;
                    const Vec zc = proj.solve(Vec(surprise.cwiseProduct(dw))) / h;
                    const Vec zres = surprise.cwiseProduct(dw) / h - design * zc;
                    const Mat zcov = (zres.squaredNorm() / dof) * proj.gram_inverse();
                    for (int j = 0; j < dfdz.cols(); ++j) {
                        const double weight = model.g_matrix(c, j);
                        if (weight == 0.0) continue;
                        const Mat through = dfdz.col(j).asDiagonal() * design * weight;
                        step_sens += (theta * h) * through * zsens;
                        const Mat lift = proj.solve(through) * (theta * h / denom);
                        extra_noise += lift * zcov * lift.transpose();
                    }
                }
            } else {
                for (int c = 0; c < d; ++c)
                    for (int j = 0; j < dfdz.cols(); ++j)
                        sens_here += dfdz.col(j).asDiagonal() * grads[static_cast<std::size_t>(c)] * model.g_matrix(c, j);
                implicit = proj.solve(sens_here) * (theta * h / denom);
            }
            const Mat transfer = n + 1 < n_steps ? Mat(proj.solve(step_sens) / denom) : Mat();

            record_field(n, design, proj, field_target, proj.solve(field_target), transfer, implicit, extra_noise);
            sens_next = std::move(sens_here);
            sol.z_coeffs[k] = proj.solve(Mat(z));
            envelope(state, sol.envelope_lo[k], sol.envelope_hi[k]);
        }
    }

    const McEstimate est = sample_mean(values);
    sol.y0 = est.value;
    // Every path starts at x0, so the first design row is the basis at the start.
    const Covec start = design_next.row(0);
    const double field_var = start * sol.y_cov[0] * start.transpose();
    sol.y0_se = std::max(est.std_error, std::sqrt(std::max(0.0, field_var)));
    sol.pathwise_y0 = std::move(values);
    return sol;
}

FieldValue evaluate_fields(const BsdeSolution& sol, int n, const VecRef& state) {
    const int n_steps = sol.steps();
    if (n < 0 || n > n_steps) throw Error(ErrorCode::InvalidArgument, "time index out of range");
    if (state.size() != sol.input_dim()) throw Error(ErrorCode::InvalidArgument, "state has wrong dimension");
    const auto k = static_cast<std::size_t>(n);
    const Covec phi = sol.frames[k].evaluate(state);
    FieldValue out;
    out.y = phi.dot(sol.y_coeffs[k].transpose());
    out.y_se = std::sqrt(std::max(0.0, (phi * sol.y_cov[k]).dot(phi)));
    const auto zk = static_cast<std::size_t>(std::min(n, n_steps - 1));
    out.z = (zk == k ? phi : sol.frames[zk].evaluate(state)) * sol.z_coeffs[zk];
    for (Eigen::Index c = 0; c < state.size(); ++c)
        if (state[c] < sol.envelope_lo[k][c] || state[c] > sol.envelope_hi[k][c]) out.extrapolated = true;
    return out;
}

ResidualReport residual_diagnostics(const BsdeSolution& sol, const Model& model, const DriverSpec& driver,
                                    const TerminalSpec& terminal, std::size_t holdout_paths) {
    const int n_steps = sol.steps();
    const double h = sol.step_size();
    const double alpha = sol.config.discount;
    const std::size_t paths = holdout_paths ? holdout_paths : std::max<std::size_t>(2, sol.config.paths / 10);
    const auto rows = static_cast<Eigen::Index>(paths);
    const bool augment = sol.terminal_kind == TerminalKind::RunningMax;
    const OuTransition tr = make_transition(model, h);
    const NoiseSource noise(sol.config.seed ^ kHoldoutSalt);

    ResidualReport report;
    report.holdout_paths = paths;
    report.rms.resize(n_steps);
    report.mean.resize(n_steps);
    report.std_error.resize(n_steps);

    PathMatrix x = sol.x0.transpose().replicate(rows, 1);
    Vec runmax = Vec::Constant(rows, sol.x0.norm());
    PathMatrix next, dw;
    Vec resid(rows);
    for (int n = 0; n < n_steps; ++n) {
        advance_all(model, tr, noise, static_cast<std::uint64_t>(n), x, next, &dw);
        Vec next_max = augment ? Vec(runmax.cwiseMax(next.rowwise().norm())) : Vec();
        const PathMatrix state = input_state(x, augment ? &runmax : nullptr);
        const PathMatrix state_next = input_state(next, augment ? &next_max : nullptr);
        parallel_chunks(paths, [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t m = begin; m < end; ++m) {
                const auto r = static_cast<Eigen::Index>(m);
                const FieldValue here = evaluate_fields(sol, n, row_view(state, r));
                const double ahead = n + 1 == n_steps ? terminal.g(row_view(state_next, r))
                                                      : evaluate_fields(sol, n + 1, row_view(state_next, r)).y;
                const double noise_term = here.z.dot(dw.row(r));
                resid[r] = here.y - (ahead + h * (driver.f(row_view(x, r), here.z) - alpha * here.y) - noise_term);
            }
        });
        const McEstimate est = sample_mean(resid);
        report.mean[n] = est.value;
        report.std_error[n] = est.std_error;
        report.rms[n] = std::sqrt(resid.squaredNorm() / static_cast<double>(rows));
        x.swap(next);
        if (augment) runmax = next_max;
    }
    report.max_rms = n_steps ? report.rms.maxCoeff() : 0.0;
    return report;
}

namespace {

constexpr const char* kMagic = "ergolab-bsde-solution";
constexpr int kVersion = 1;

}  // namespace

void save_solution(const BsdeSolution& sol, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    const auto& c = sol.config;
    out << kMagic << ' ' << kVersion << '\n';
    out << "dim " << sol.dim << '\n';
    out << "terminal_kind " << (sol.terminal_kind == TerminalKind::RunningMax ? "running-max" : "state") << '\n';
    out << "basis " << to_string(c.basis) << '\n';
    out << "horizon " << format_double(c.horizon) << '\n';
    out << "steps " << c.steps << '\n';
    out << "paths " << c.paths << '\n';
    out << "seed " << c.seed << '\n';
    out << "picard_iters " << c.picard_iters << '\n';
    out << "scheme " << to_string(c.scheme) << '\n';
    out << "discount " << format_double(c.discount) << '\n';
    out << "checkpoint_every " << c.checkpoint_every << '\n';
    put(out, "x0", sol.x0);
    out << "y0 " << format_double(sol.y0) << ' ' << format_double(sol.y0_se) << '\n';
    for (int n = 0; n <= sol.steps(); ++n) {
        const auto k = static_cast<std::size_t>(n);
        const BasisFrame& f = sol.frames[k];
        out << "step " << n << '\n';
        put_frame(out, f);
        put(out, "y_coeffs", sol.y_coeffs[k]);
        put(out, "z_coeffs", n < sol.steps() ? sol.z_coeffs[k] : Mat(0, 0));
        put(out, "y_cov", sol.y_cov[k]);
        put(out, "envelope_lo", sol.envelope_lo[k]);
        put(out, "envelope_hi", sol.envelope_hi[k]);
        const auto& dg = sol.diagnostics[k];
        out << "diagnostics " << format_double(dg.condition) << ' ' << dg.regularized << ' '
            << dg.gradient_from_increments << ' ' << format_double(dg.fit_rms) << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

BsdeSolution load_solution(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    TextReader r(in);
    if (r.scalar<int>(kMagic) != kVersion) r.fail("unsupported version");

    BsdeSolution sol;
    sol.dim = r.scalar<int>("dim");
    const auto kind = r.scalar<std::string>("terminal_kind");
    if (kind != "state" && kind != "running-max") r.fail("unknown terminal kind '" + kind + "'");
    sol.terminal_kind = kind == "state" ? TerminalKind::State : TerminalKind::RunningMax;
    auto& c = sol.config;
    try {
        c.basis = parse_basis(r.scalar<std::string>("basis"));
        c.horizon = r.scalar<double>("horizon");
        c.steps = r.scalar<int>("steps");
        c.paths = r.scalar<std::size_t>("paths");
        c.seed = r.scalar<std::uint64_t>("seed");
        c.picard_iters = r.scalar<int>("picard_iters");
        c.scheme = parse_scheme(r.scalar<std::string>("scheme"));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::FormatError) throw;
        r.fail(e.what());
    }
    c.discount = r.scalar<double>("discount");
    c.checkpoint_every = r.scalar<int>("checkpoint_every");
    if (c.steps <= 0 || sol.dim <= 0) r.fail("steps and dim must be positive");
    sol.x0 = r.vec("x0");
    {
        auto tokens = r.line("y0");
        sol.y0 = r.real(tokens, "y0");
        sol.y0_se = r.real(tokens, "y0");
    }
    sol.times = Vec::LinSpaced(c.steps + 1, 0.0, c.horizon);
    const auto slots = static_cast<std::size_t>(c.steps + 1);
    sol.frames.resize(slots);
    sol.y_coeffs.resize(slots);
    sol.z_coeffs.resize(slots - 1);
    sol.y_cov.resize(slots);
    sol.envelope_lo.resize(slots);
    sol.envelope_hi.resize(slots);
    sol.diagnostics.resize(slots);
    for (int n = 0; n <= c.steps; ++n) {
        const auto k = static_cast<std::size_t>(n);
        if (r.scalar<int>("step") != n) r.fail("steps out of order");
        sol.frames[k] = read_frame(r, c.basis, sol.input_dim());
        sol.y_coeffs[k] = r.vec("y_coeffs");
        Mat z = r.mat("z_coeffs");
        if (n < c.steps) sol.z_coeffs[k] = std::move(z);
        sol.y_cov[k] = r.mat("y_cov");
        sol.envelope_lo[k] = r.vec("envelope_lo");
        sol.envelope_hi[k] = r.vec("envelope_hi");
        const auto basis_size = sol.frames[k].size();
        if (sol.y_coeffs[k].size() != basis_size || sol.y_cov[k].rows() != basis_size ||
            (n < c.steps && (sol.z_coeffs[k].rows() != basis_size || sol.z_coeffs[k].cols() != sol.dim)))
            r.fail("coefficient arrays do not match the basis at step " + std::to_string(n));
        auto tokens = r.line("diagnostics");
        auto& dg = sol.diagnostics[k];
        dg.condition = r.real(tokens, "diagnostics");
        int reg = 0, inc = 0;
        if (!(tokens >> reg >> inc)) r.fail("bad diagnostics");
        dg.regularized = reg != 0;
        dg.gradient_from_increments = inc != 0;
        dg.fit_rms = r.real(tokens, "diagnostics");
    }
    return sol;
}

}  // namespace ergolab
