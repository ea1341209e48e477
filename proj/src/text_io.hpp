#pragma once

// Line-oriented text artifacts: "name value..." per line, numbers in %.17g.

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ergolab/basis.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/error.hpp"
#include "ergolab/types.hpp"

namespace ergolab {

inline void put(std::ostream& out, const char* name, const Vec& v) {
    out << name << ' ' << v.size();
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v[i]);
    out << '\n';
}

inline void put(std::ostream& out, const char* name, const Mat& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << ' ' << format_double(m(i, j));
    out << '\n';
}

class TextReader {
public:
    explicit TextReader(std::istream& in) : in_(in) {}

    std::istringstream line(const std::string& name) {
        std::string text;
        if (!std::getline(in_, text)) fail("unexpected end of file, expected '" + name + "'");
        ++line_no_;
        std::istringstream tokens(text);
        std::string head;
        tokens >> head;
        if (head != name) fail("expected '" + name + "', found '" + head + "'");
        return tokens;
    }

    template <typename T>
    T scalar(const std::string& name) {
        auto tokens = line(name);
        T v{};
        if (!(tokens >> v)) fail("bad value for '" + name + "'");
        return v;
    }

    double real(std::istringstream& tokens, const std::string& what) {
        std::string t;
        if (!(tokens >> t)) fail("missing number in '" + what + "'");
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (const std::logic_error&) {
            // stod rejects "inf"/"nan" spellings produced by %g on some platforms.
            if (t == "inf") return INFINITY;
            if (t == "-inf") return -INFINITY;
            if (t == "nan" || t == "-nan") return NAN;
            fail("bad number '" + t + "' in '" + what + "'");
        }
        return 0.0;
    }

    Vec vec(const std::string& name) {
        auto tokens = line(name);
        Eigen::Index n = -1;
        if (!(tokens >> n) || n < 0) fail("bad length for '" + name + "'");
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = real(tokens, name);
        return v;
    }

    Mat mat(const std::string& name) {
        auto tokens = line(name);
        Eigen::Index r = -1, c = -1;
        if (!(tokens >> r >> c) || r < 0 || c < 0) fail("bad shape for '" + name + "'");
        Mat m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = real(tokens, name);
        return m;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no_) + ": " + what);
    }

private:
    std::istream& in_;
    int line_no_ = 0;
};


inline void put_frame(std::ostream& out, const BasisFrame& f) {
    put(out, "center", f.center());
    put(out, "scale", f.scale());
    Vec active(f.dim_in());
    for (int i = 0; i < f.dim_in(); ++i) active[i] = f.active()[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    put(out, "active", active);
}

inline BasisFrame read_frame(TextReader& r, const BasisSpec& spec, int dim_in) {
    Vec center = r.vec("center");
    Vec scale = r.vec("scale");
    const Vec active = r.vec("active");
    if (center.size() != dim_in || scale.size() != dim_in || active.size() != dim_in)
        r.fail("frame has wrong dimension");
    std::vector<bool> flags;
    for (Eigen::Index i = 0; i < active.size(); ++i) flags.push_back(active[i] != 0.0);
    return BasisFrame(spec, std::move(center), std::move(scale), std::move(flags));
}

}  // namespace ergolab
