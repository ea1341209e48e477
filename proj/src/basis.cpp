#include "ergolab/basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"

namespace ergolab {

namespace {

void exponent_vectors(const std::vector<int>& coords, int total, std::size_t pos, std::vector<int>& current,
                      std::vector<std::vector<int>>& out) {
    if (pos == coords.size()) {
        if (total == 0) out.push_back(current);
        return;
    }
    for (int e = total; e >= 0; --e) {
        current[coords[pos]] = e;
        exponent_vectors(coords, total - e, pos + 1, current, out);
    }
    current[coords[pos]] = 0;
}

void knot_vectors(const std::vector<int>& coords, int cells, std::size_t pos, std::vector<int>& current,
                  std::vector<std::vector<int>>& out) {
    if (pos == coords.size()) {
        out.push_back(current);
        return;
    }
    for (int j = 0; j <= cells; ++j) {
        current[coords[pos]] = j;
        knot_vectors(coords, cells, pos + 1, current, out);
    }
}

}  // namespace

BasisSpec parse_basis(const std::string& text) {
    std::stringstream in(text);
    std::string kind, first, second;
    std::getline(in, kind, ':');
    std::getline(in, first, ':');
    std::getline(in, second, ':');
    BasisSpec spec;
    try {
        if (kind == "poly") {
            spec.kind = BasisKind::Polynomial;
            if (!first.empty()) spec.degree = std::stoi(first);
            if (!second.empty()) throw Error(ErrorCode::InvalidArgument, "poly takes one parameter");
        } else if (kind == "pwl") {
            spec.kind = BasisKind::PiecewiseLinear;
            if (!first.empty()) spec.cells = std::stoi(first);
            if (!second.empty()) spec.box = std::stod(second);
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown basis kind '" + kind + "'");
        }
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidArgument, "malformed basis '" + text + "'");
    }
    if (spec.degree < 0 || spec.cells < 1 || !(spec.box > 0.0))
        throw Error(ErrorCode::InvalidArgument, "basis parameters out of range in '" + text + "'");
    return spec;
}

std::string to_string(const BasisSpec& spec) {
    if (spec.kind == BasisKind::Polynomial) return "poly:" + std::to_string(spec.degree);
    std::ostringstream out;
    out << "pwl:" << spec.cells << ':' << spec.box;
    return out.str();
}

BasisFrame::BasisFrame(const BasisSpec& spec, Vec center, Vec scale, std::vector<bool> active)
    : spec_(spec), center_(std::move(center)), scale_(std::move(scale)), active_(std::move(active)) {
    const int d = dim_in();
    std::vector<int> coords;
    for (int k = 0; k < d; ++k)
        if (active_[k]) coords.push_back(k);

    if (spec_.kind == BasisKind::Polynomial) {
        std::vector<int> current(d, 0);
        for (int total = 0; total <= spec_.degree; ++total) exponent_vectors(coords, total, 0, current, terms_);
    } else {
        std::vector<int> current(d, -1);
        terms_.push_back(current);
        std::vector<std::vector<int>> hats;
        knot_vectors(coords, spec_.cells, 0, current, hats);
        // The hats sum to one, so the all-first-knot hat is replaced by the constant.
        for (std::size_t i = 1; i < hats.size(); ++i) terms_.push_back(hats[i]);
    }
}

BasisFrame BasisFrame::fit(const BasisSpec& spec, const PathMatrix& samples) {
    const auto d = samples.cols();
    const auto m = static_cast<double>(samples.rows());
    Vec center = samples.colwise().mean().transpose();
    Vec scale(d);
    std::vector<bool> active(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k) {
        const double var = (samples.col(k).array() - center[k]).square().sum() / m;
        const double sd = std::sqrt(var);
        active[static_cast<std::size_t>(k)] = sd > 1e-10 * (1.0 + std::abs(center[k]));
        scale[k] = active[static_cast<std::size_t>(k)] ? sd : 1.0;
    }
    return BasisFrame(spec, std::move(center), std::move(scale), std::move(active));
}

bool BasisFrame::all_active(int first_coords) const {
    for (int k = 0; k < first_coords; ++k)
        if (!active_[k]) return false;
    return true;
}

double BasisFrame::hat(int knot, double u) const {
    const double width = 2.0 * spec_.box / spec_.cells;
    const double clamped = std::clamp(u, -spec_.box, spec_.box);
    const double t = -spec_.box + knot * width;
    return std::max(0.0, 1.0 - std::abs(clamped - t) / width);
}

double BasisFrame::hat_slope(int knot, double u) const {
    if (u < -spec_.box || u > spec_.box) return 0.0;
    const double width = 2.0 * spec_.box / spec_.cells;
    const double t = -spec_.box + knot * width;
    const double offset = u - t;
    if (std::abs(offset) >= width) return 0.0;
    return offset >= 0.0 ? -1.0 / width : 1.0 / width;
}

void BasisFrame::fill_powers(const VecRef& x, double* table) const {
    const int d = dim_in();
    const int p = spec_.degree;
    for (int k = 0; k < d; ++k) {
        double* row = table + k * (p + 1);
        const double u = active_[k] ? unit(k, x[k]) : 0.0;
        row[0] = 1.0;
        for (int e = 1; e <= p; ++e) row[e] = row[e - 1] * u;
    }
}

void BasisFrame::evaluate(const VecRef& x, Eigen::Ref<Covec> out) const {
    const int d = dim_in();
    if (spec_.kind == BasisKind::Polynomial) {
        const int stride = spec_.degree + 1;
        const auto cells = static_cast<std::size_t>(d * stride);
        double local[64];
        std::vector<double> heap;
        double* table = local;
        if (cells > 64) {
            heap.resize(cells);
            table = heap.data();
        }
        fill_powers(x, table);
        for (std::size_t b = 0; b < terms_.size(); ++b) {
            double v = 1.0;
            for (int k = 0; k < d; ++k)
                if (terms_[b][k]) v *= table[static_cast<std::size_t>(k * stride + terms_[b][k])];
            out[static_cast<Eigen::Index>(b)] = v;
        }
    } else {
        for (std::size_t b = 0; b < terms_.size(); ++b) {
            double v = 1.0;
            for (int k = 0; k < d; ++k)
                if (terms_[b][k] >= 0) v *= hat(terms_[b][k], unit(k, x[k]));
            out[static_cast<Eigen::Index>(b)] = v;
        }
    }
}

Covec BasisFrame::evaluate(const VecRef& x) const {
    Covec out(size());
    evaluate(x, out);
    return out;
}

void BasisFrame::gradient_into(const VecRef& x, const double* table, Mat& grad) const {
    const int d = dim_in();
    grad.setZero(size(), d);
    if (spec_.kind == BasisKind::Polynomial) {
        const int stride = spec_.degree + 1;
        for (std::size_t b = 0; b < terms_.size(); ++b) {
            const auto& ex = terms_[b];
            for (int j = 0; j < d; ++j) {
                if (ex[j] == 0) continue;
                double v = ex[j] * table[j * stride + ex[j] - 1] / scale_[j];
                for (int k = 0; k < d; ++k)
                    if (k != j && ex[k]) v *= table[k * stride + ex[k]];
                grad(static_cast<Eigen::Index>(b), j) = v;
            }
        }
    } else {
        for (std::size_t b = 0; b < terms_.size(); ++b) {
            const auto& knots = terms_[b];
            for (int j = 0; j < d; ++j) {
                if (knots[j] < 0) continue;
                double v = hat_slope(knots[j], unit(j, x[j])) / scale_[j];
                for (int k = 0; k < d && v != 0.0; ++k)
                    if (k != j && knots[k] >= 0) v *= hat(knots[k], unit(k, x[k]));
                grad(static_cast<Eigen::Index>(b), j) = v;
            }
        }
    }
}

Mat BasisFrame::gradient(const VecRef& x) const {
    std::vector<double> table(static_cast<std::size_t>(dim_in() * (spec_.degree + 1)));
    if (spec_.kind == BasisKind::Polynomial) fill_powers(x, table.data());
    Mat grad;
    gradient_into(x, table.data(), grad);
    return grad;
}

std::vector<Mat> BasisFrame::gradient_design(const PathMatrix& samples, int coords) const {
    std::vector<Mat> out(static_cast<std::size_t>(coords), Mat(samples.rows(), size()));
    parallel_chunks(static_cast<std::size_t>(samples.rows()), [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> table(static_cast<std::size_t>(dim_in() * (spec_.degree + 1)));
        Mat grad;
        for (std::size_t m = begin; m < end; ++m) {
            const auto r = static_cast<Eigen::Index>(m);
            const auto x = row_view(samples, r);
            if (spec_.kind == BasisKind::Polynomial) fill_powers(x, table.data());
            gradient_into(x, table.data(), grad);
            for (int k = 0; k < coords; ++k) out[static_cast<std::size_t>(k)].row(r) = grad.col(k).transpose();
        }
    });
    return out;
}

Mat BasisFrame::design(const PathMatrix& samples) const {
    Mat phi(samples.rows(), size());
    parallel_chunks(static_cast<std::size_t>(samples.rows()), [&](std::size_t, std::size_t begin, std::size_t end) {
        Covec row(size());
        for (std::size_t m = begin; m < end; ++m) {
            const auto r = static_cast<Eigen::Index>(m);
            evaluate(row_view(samples, r), row);
            phi.row(r) = row;
        }
    });
    return phi;
}

namespace {

// A^T B summed chunk by chunk in a fixed order.
Mat chunked_cross(const Mat& a, const Mat& b) {
    const auto n = static_cast<std::size_t>(a.rows());
    const std::size_t chunks = chunk_count(n);
    std::vector<Mat> partial(chunks);
    parallel_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
        const auto len = static_cast<Eigen::Index>(end - begin);
        const auto first = static_cast<Eigen::Index>(begin);
        partial[c].noalias() = a.middleRows(first, len).transpose() * b.middleRows(first, len);
    });
    Mat total = Mat::Zero(a.cols(), b.cols());
    for (const auto& p : partial) total += p;
    return total;
}

double condition_of(const Mat& gram) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace

Projection::Projection(Mat design) : design_(std::move(design)) {
    if (design_.rows() == 0) throw Error(ErrorCode::InvalidArgument, "regression on an empty sample");
    full_size_ = design_.cols();
    for (Eigen::Index b = 0; b < design_.cols(); ++b)
        if (design_.col(b).squaredNorm() > 0.0) kept_.push_back(b);

    Mat kept(design_.rows(), static_cast<Eigen::Index>(kept_.size()));
    for (std::size_t i = 0; i < kept_.size(); ++i) kept.col(static_cast<Eigen::Index>(i)) = design_.col(kept_[i]);
    design_ = std::move(kept);

    Mat gram = chunked_cross(design_, design_);
    condition_ = condition_of(gram);
    if (condition_ > kMaxCondition) {
        const Eigen::Index b = gram.rows();
        const double penalty = 1e-8 * gram.trace() / static_cast<double>(b);
        // The constant column stays unpenalized so the projection keeps sample means.
        for (Eigen::Index i = 1; i < b; ++i) gram(i, i) += penalty;
        regularized_ = true;
        condition_ = condition_of(gram);
        if (condition_ > kMaxCondition)
            throw Error(ErrorCode::IllConditionedRegression,
                        "Gram condition number " + std::to_string(condition_) + " after regularization");
    }
    ldlt_.compute(gram);
}

Mat Projection::solve(const Mat& targets) const {
    const Mat rhs = chunked_cross(design_, targets);
    const Mat local = ldlt_.solve(rhs);
    Mat coeffs = Mat::Zero(full_size_, targets.cols());
    for (std::size_t i = 0; i < kept_.size(); ++i) coeffs.row(kept_[i]) = local.row(static_cast<Eigen::Index>(i));
    return coeffs;
}

Vec Projection::solve(const Vec& target) const {
    const Mat coeffs = solve(Mat(target));
    return coeffs.col(0);
}

Mat Projection::gram_inverse() const {
    const auto k = static_cast<Eigen::Index>(kept_.size());
    const Mat local = ldlt_.solve(Mat::Identity(k, k));
    Mat full = Mat::Zero(full_size_, full_size_);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) full(kept_[static_cast<std::size_t>(i)], kept_[static_cast<std::size_t>(j)]) = local(i, j);
    return full;
}

}  // namespace ergolab
