#pragma once

#include <string>
#include <vector>

#include "ergolab/types.hpp"

namespace ergolab {

enum class BasisKind { Polynomial, PiecewiseLinear };

struct BasisSpec {
    BasisKind kind = BasisKind::Polynomial;
    int degree = 3;     // Polynomial: total degree
    int cells = 8;      // PiecewiseLinear: cells per coordinate
    double box = 4.0;   // PiecewiseLinear: half-width of the box, in standardized units
};

/// "poly:3" or "pwl:8" or "pwl:8:4.0". Throws InvalidArgument.
BasisSpec parse_basis(const std::string& text);
std::string to_string(const BasisSpec& spec);

/// A regression basis frozen on one sample: coordinates are standardized by
/// the sample mean and standard deviation, and coordinates without spread
/// are dropped. Column 0 is always the constant function.
class BasisFrame {
public:
    BasisFrame() = default;
    BasisFrame(const BasisSpec& spec, Vec center, Vec scale, std::vector<bool> active);

    /// Standardization fitted on the rows of `samples`.
    static BasisFrame fit(const BasisSpec& spec, const PathMatrix& samples);

    const BasisSpec& spec() const { return spec_; }
    int dim_in() const { return static_cast<int>(center_.size()); }
    Eigen::Index size() const { return static_cast<Eigen::Index>(terms_.size()); }
    const Vec& center() const { return center_; }
    const Vec& scale() const { return scale_; }
    const std::vector<bool>& active() const { return active_; }
    bool all_active(int first_coords) const;

    void evaluate(const VecRef& x, Eigen::Ref<Covec> out) const;
    Covec evaluate(const VecRef& x) const;
    /// size() x dim_in matrix of partial derivatives.
    Mat gradient(const VecRef& x) const;

    /// paths x size() design matrix.
    Mat design(const PathMatrix& samples) const;
    /// One paths x size() matrix per coordinate k < coords holding the
    /// partial derivatives along k.
    std::vector<Mat> gradient_design(const PathMatrix& samples, int coords) const;

private:
    double unit(int k, double x) const { return (x - center_[k]) / scale_[k]; }
    double hat(int knot, double u) const;
    double hat_slope(int knot, double u) const;
    void fill_powers(const VecRef& x, double* table) const;
    void gradient_into(const VecRef& x, const double* table, Mat& grad) const;

    BasisSpec spec_;
    Vec center_;
    Vec scale_;
    std::vector<bool> active_;
    // Polynomial: exponents per coordinate. PiecewiseLinear: knot per
    // coordinate, -1 meaning "constant in that coordinate".
    std::vector<std::vector<int>> terms_;
};

/// Least-squares projection onto a design matrix, factored once and reused
/// for many right-hand sides. Gram assembly is chunked and reduced in a fixed
/// order so results do not depend on the thread count.
class Projection {
public:
    /// Throws IllConditionedRegression.
    explicit Projection(Mat design);

    /// Coefficients for each column of `targets` (paths x k) -> size x k.
    Mat solve(const Mat& targets) const;
    Vec solve(const Vec& target) const;

    /// Design restricted to the columns that are not identically zero.
    const Mat& design() const { return design_; }
    double condition() const { return condition_; }
    bool regularized() const { return regularized_; }
    /// (Phi^T Phi + penalty)^{-1}, zero on dropped columns.
    Mat gram_inverse() const;

private:
    Mat design_;
    std::vector<Eigen::Index> kept_;
    Eigen::Index full_size_ = 0;
    Eigen::LDLT<Mat> ldlt_;
    double condition_ = 1.0;
    bool regularized_ = false;
};

inline constexpr double kMaxCondition = 1e10;

}  // namespace ergolab
