#include "ergolab/sde.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "ergolab/csv.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"

namespace ergolab {

namespace {

std::atomic<std::size_t> g_budget{250'000'000};

Mat symmetric_sqrt(const Mat& cov) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    const Vec root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

void check_horizon(double T, int steps) {
    if (!(T > 0.0) || !std::isfinite(T)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (steps <= 0) throw Error(ErrorCode::InvalidArgument, "steps must be positive");
}

}  // namespace

OuTransition make_transition(const Model& model, double h) {
    if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
    const int d = model.dim;
    const Vec& a = model.a_eigenvalues;
    OuTransition tr;
    tr.h = h;
    tr.decay = (a * h).array().exp();
    tr.phi = (a * h).unaryExpr([](double v) { return std::expm1(v); }).cwiseQuotient(a);

    const Mat ggt = model.g_matrix * model.g_matrix.transpose();
    tr.noise_cov.resize(d, d);
    for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
            const double s = a[j] + a[k];
            tr.noise_cov(j, k) = ggt(j, k) * std::expm1(s * h) / s;
        }

    Mat joint(2 * d, 2 * d);
    joint.topLeftCorner(d, d) = h * Mat::Identity(d, d);
    joint.bottomLeftCorner(d, d) = tr.phi.asDiagonal() * model.g_matrix;
    joint.topRightCorner(d, d) = joint.bottomLeftCorner(d, d).transpose();
    joint.bottomRightCorner(d, d) = tr.noise_cov;

    Eigen::LLT<Mat> llt(joint);
    if (llt.info() == Eigen::Success) {
        tr.joint_factor = llt.matrixL();
    } else {
        tr.joint_factor = symmetric_sqrt(joint);
    }
    return tr;
}

void advance(const Model& model, const OuTransition& tr, const double* normals, const VecRef& x,
             Eigen::Ref<Vec> x_next, double* dw_out, const Vec* extra_drift) {
    const int d = model.dim;
    const int n = 2 * d;
    constexpr int kStack = 32;
    double stack[kStack];
    std::vector<double> heap;
    double* joint = stack;
    if (n > kStack) {
        heap.resize(static_cast<std::size_t>(n));
        joint = heap.data();
    }
    // joint = L z with L lower triangular unless the eigen fallback was used.
    const Mat& factor = tr.joint_factor;
    for (int i = 0; i < n; ++i) joint[i] = 0.0;
    for (int j = 0; j < n; ++j) {
        const double zj = normals[j];
        const double* col = factor.data() + static_cast<std::ptrdiff_t>(j) * n;
        for (int i = 0; i < n; ++i) joint[i] += col[i] * zj;
    }
    if (model.drift.is_zero() && !extra_drift) {
        for (int k = 0; k < d; ++k) x_next[k] = tr.decay[k] * x[k] + joint[d + k];
    } else {
        Vec forcing = model.drift(x);
        if (extra_drift) forcing += *extra_drift;
        for (int k = 0; k < d; ++k) x_next[k] = tr.decay[k] * x[k] + tr.phi[k] * forcing[k] + joint[d + k];
    }
    if (dw_out)
        for (int k = 0; k < d; ++k) dw_out[k] = joint[k];
}

void advance_all(const Model& model, const OuTransition& tr, const NoiseSource& noise, std::uint64_t step,
                 const PathMatrix& x, PathMatrix& x_next, PathMatrix* dw_out, const PathMatrix* extra_drift) {
    const int d = model.dim;
    const auto paths = static_cast<std::size_t>(x.rows());
    x_next.resize(x.rows(), d);
    if (dw_out) dw_out->resize(x.rows(), d);
    parallel_chunks(paths, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> z(2 * d);
        Vec next(d);
        Vec drift_row(d);
        for (std::size_t m = begin; m < end; ++m) {
            const auto row = static_cast<Eigen::Index>(m);
            noise.normals(m, step, z);
            const Vec* extra = nullptr;
            if (extra_drift) {
                drift_row = extra_drift->row(row).transpose();
                extra = &drift_row;
            }
            advance(model, tr, z.data(), row_view(x, row), next, dw_out ? dw_out->row(row).data() : nullptr, extra);
            if (!next.allFinite())
                throw Error(ErrorCode::NonFiniteState,
                            "path " + std::to_string(m) + " left the finite range at step " + std::to_string(step));
            x_next.row(row) = next.transpose();
        }
    });
}

void set_memory_budget(std::size_t doubles) { g_budget = doubles; }
std::size_t memory_budget() { return g_budget; }

PathEnsemble simulate_paths(const Model& model, const Vec& x0, double T, int steps, std::size_t paths,
                            std::uint64_t seed, bool augment_max) {
    check_horizon(T, steps);
    if (paths == 0) throw Error(ErrorCode::InvalidArgument, "paths must be positive");
    if (x0.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "x0 has wrong dimension");
    const auto n = static_cast<std::size_t>(steps);
    const std::size_t d = static_cast<std::size_t>(model.dim);
    const double need = static_cast<double>(paths) *
                        (static_cast<double>((2 * n + 1) * d) + (augment_max ? static_cast<double>(n + 1) : 0.0));
    if (need > static_cast<double>(memory_budget()))
        throw Error(ErrorCode::BudgetExceeded, "ensemble needs " + std::to_string(need) + " doubles, budget is " +
                                                   std::to_string(memory_budget()));

    const double h = T / steps;
    const OuTransition tr = make_transition(model, h);
    const NoiseSource noise(seed);

    PathEnsemble ens;
    ens.seed = seed;
    ens.x0 = x0;
    ens.times = Vec::LinSpaced(steps + 1, 0.0, T);
    ens.states.resize(n + 1);
    ens.increments.resize(n);
    ens.states[0] = x0.transpose().replicate(static_cast<Eigen::Index>(paths), 1);
    for (std::size_t k = 0; k < n; ++k) advance_all(model, tr, noise, k, ens.states[k], ens.states[k + 1], &ens.increments[k]);

    if (augment_max) {
        std::vector<Vec> running(n + 1);
        running[0] = ens.states[0].rowwise().norm();
        for (std::size_t k = 0; k < n; ++k) running[k + 1] = running[k].cwiseMax(ens.states[k + 1].rowwise().norm());
        ens.running_max = std::move(running);
    }
    return ens;
}

PathMatrix resimulate_path(const Model& model, const Vec& x0, double T, int steps, std::uint64_t seed,
                           std::size_t path) {
    check_horizon(T, steps);
    const OuTransition tr = make_transition(model, T / steps);
    const NoiseSource noise(seed);
    const int d = model.dim;
    PathMatrix out(steps + 1, d);
    out.row(0) = x0.transpose();
    std::vector<double> z(2 * d);
    Vec next(d);
    for (int k = 0; k < steps; ++k) {
        noise.normals(path, static_cast<std::uint64_t>(k), z);
        advance(model, tr, z.data(), row_view(out, k), next, nullptr);
        out.row(k + 1) = next.transpose();
    }
    return out;
}

McEstimate sample_mean(const Vec& values) {
    const auto m = values.size();
    if (m == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) sum += values[i];
    const double mean = sum / static_cast<double>(m);
    if (m < 2) return {mean, 0.0};
    double ss = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) ss += (values[i] - mean) * (values[i] - mean);
    return {mean, std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m))};
}

McEstimate semigroup_apply(const Model& model, const StateFn& phi, double t, const Vec& x, std::size_t paths,
                           std::uint64_t seed, int steps) {
    check_horizon(t, steps);
    if (paths == 0) throw Error(ErrorCode::InvalidArgument, "paths must be positive");
    const OuTransition tr = make_transition(model, t / steps);
    const NoiseSource noise(seed);
    PathMatrix cur = x.transpose().replicate(static_cast<Eigen::Index>(paths), 1);
    PathMatrix next;
    for (int k = 0; k < steps; ++k) {
        advance_all(model, tr, noise, static_cast<std::uint64_t>(k), cur, next);
        cur.swap(next);
    }
    Vec values(static_cast<Eigen::Index>(paths));
    parallel_chunks(paths, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m)
            values[static_cast<Eigen::Index>(m)] = phi(row_view(cur, static_cast<Eigen::Index>(m)));
    });
    return sample_mean(values);
}

DecayCurve coupling_decay(const Model& model, const StateFn& phi, const Vec& x, const Vec& y, const Vec& t_grid,
                          std::size_t paths, std::uint64_t seed, double steps_per_unit) {
    if (x.size() != model.dim || y.size() != model.dim)
        throw Error(ErrorCode::InvalidArgument, "starting points have wrong dimension");
    if (x == y) throw Error(ErrorCode::InvalidArgument, "coupling needs two distinct starting points");
    if (paths < 2) throw Error(ErrorCode::InvalidArgument, "coupling needs at least two paths");
    for (Eigen::Index i = 0; i < t_grid.size(); ++i)
        if (!(t_grid[i] >= 0.0) || (i > 0 && !(t_grid[i] > t_grid[i - 1])))
            throw Error(ErrorCode::InvalidArgument, "t_grid must be nonnegative and strictly increasing");

    const NoiseSource noise(seed);
    const auto rows = static_cast<Eigen::Index>(paths);
    PathMatrix px = x.transpose().replicate(rows, 1);
    PathMatrix py = y.transpose().replicate(rows, 1);
    PathMatrix next;

    DecayCurve curve;
    curve.t = t_grid;
    curve.value.resize(t_grid.size());
    curve.std_error.resize(t_grid.size());

    double now = 0.0;
    std::uint64_t step = 0;
    Vec diffs(rows);
    for (Eigen::Index i = 0; i < t_grid.size(); ++i) {
        const double span = t_grid[i] - now;
        if (span > 0.0) {
            const int n = std::max(1, static_cast<int>(std::ceil(span * steps_per_unit - 1e-9)));
            const OuTransition tr = make_transition(model, span / n);
            for (int k = 0; k < n; ++k, ++step) {
                advance_all(model, tr, noise, step, px, next);
                px.swap(next);
                advance_all(model, tr, noise, step, py, next);
                py.swap(next);
            }
            now = t_grid[i];
        }
        parallel_chunks(paths, [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t m = begin; m < end; ++m) {
                const auto r = static_cast<Eigen::Index>(m);
                diffs[r] = phi(row_view(px, r)) - phi(row_view(py, r));
            }
        });
        const McEstimate est = sample_mean(diffs);
        curve.value[i] = std::abs(est.value);
        curve.std_error[i] = est.std_error;
    }

    std::vector<double> ts, logs;
    for (Eigen::Index i = 0; i < t_grid.size(); ++i) {
        if (curve.value[i] > 3.0 * curve.std_error[i] && curve.value[i] > 0.0) {
            ts.push_back(t_grid[i]);
            logs.push_back(std::log(curve.value[i]));
        }
    }
    curve.fitted_points = ts.size();
    curve.all_noise = ts.empty();
    curve.slope = std::numeric_limits<double>::quiet_NaN();
    if (ts.size() >= 2) {
        double mt = 0.0, ml = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            mt += ts[i];
            ml += logs[i];
        }
        mt /= static_cast<double>(ts.size());
        ml /= static_cast<double>(ts.size());
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            sxy += (ts[i] - mt) * (logs[i] - ml);
            sxx += (ts[i] - mt) * (ts[i] - mt);
        }
        curve.slope = sxy / sxx;
    }
    return curve;
}

void write_csv(const DecayCurve& curve, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < curve.t.size(); ++i) rows.push_back({curve.t[i], curve.value[i], curve.std_error[i]});
    write_numeric_table(path, {"t", "value", "std_error"}, rows);
}

}  // namespace ergolab
