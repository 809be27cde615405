#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsep {

using Point = std::array<double, 3>;

inline constexpr int kMaxDim = 3;

/// Thrown when an operation is asked for finer resolution than the grid has.
struct ResolutionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown on invalid numeric parameters (exponent ranges, admissibility).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Axis-aligned cube, half-open product [c_i - r, c_i + r) in each coordinate.
struct Cube {
    int dim = 1;
    Point center{0, 0, 0};
    double half_side = 0.5;

    Cube() = default;
    Cube(int n, Point c, double r) : dim(n), center(c), half_side(r) {
        if (n < 1 || n > kMaxDim) throw ParameterError("Cube: dim must be 1, 2, or 3");
        if (!(r > 0)) throw ParameterError("Cube: half side must be positive");
    }

    double side() const { return 2.0 * half_side; }
    double lo(int axis) const { return center[axis] - half_side; }
    double hi(int axis) const { return center[axis] + half_side; }
    double volume() const { return std::pow(side(), dim); }

    /// NQ: same center, half side scaled by N.
    Cube dilated(double factor) const { return Cube(dim, center, factor * half_side); }

    bool contains(const Point& x) const {
        for (int a = 0; a < dim; ++a)
            if (x[a] < lo(a) || x[a] >= hi(a)) return false;
        return true;
    }

    bool contains_cube(const Cube& q, double tol = 1e-12) const {
        for (int a = 0; a < dim; ++a)
            if (q.lo(a) < lo(a) - tol || q.hi(a) > hi(a) + tol) return false;
        return true;
    }

    bool operator==(const Cube& o) const {
        if (dim != o.dim || half_side != o.half_side) return false;
        for (int a = 0; a < dim; ++a)
            if (center[a] != o.center[a]) return false;
        return true;
    }
};

/// Euclidean distance between two axis-aligned boxes (0 when they touch).
inline double box_distance(int dim, const double* alo, const double* ahi, const double* blo,
                           const double* bhi) {
    double s = 0;
    for (int a = 0; a < dim; ++a) {
        double gap = std::max({0.0, blo[a] - ahi[a], alo[a] - bhi[a]});
        s += gap * gap;
    }
    return std::sqrt(s);
}

/// A dyadic subcube of a root cube, identified by its path of child indices.
/// Child index k selects, on axis a, the lower half when bit a of k is 0 and
/// the upper half when it is 1. Cubes of one root are nested or disjoint.
class DyadicCube {
  public:
    DyadicCube() = default;
    explicit DyadicCube(const Cube& root) : root_(root) {}
    DyadicCube(const Cube& root, std::vector<std::uint8_t> path)
        : root_(root), path_(std::move(path)) {
        for (auto k : path_)
            if (k >= (1u << root.dim)) throw ParameterError("DyadicCube: child index out of range");
    }

    const Cube& root() const { return root_; }
    int dim() const { return root_.dim; }
    int depth() const { return static_cast<int>(path_.size()); }
    const std::vector<std::uint8_t>& path() const { return path_; }
    bool is_root() const { return path_.empty(); }

    double side() const { return root_.side() * std::ldexp(1.0, -depth()); }
    double volume() const { return std::pow(side(), dim()); }

    /// Integer position of this cube at its own depth, per axis.
    std::array<std::int64_t, kMaxDim> index() const {
        std::array<std::int64_t, kMaxDim> iv{0, 0, 0};
        for (auto k : path_)
            for (int a = 0; a < dim(); ++a) iv[a] = (iv[a] << 1) | ((k >> a) & 1);
        return iv;
    }

    Cube cube() const {
        auto iv = index();
        double h = root_.half_side * std::ldexp(1.0, -depth());
        Point c{0, 0, 0};
        for (int a = 0; a < dim(); ++a) c[a] = root_.lo(a) + (2 * iv[a] + 1) * h;
        return Cube(dim(), c, h);
    }

    DyadicCube parent() const {
        if (is_root()) throw ParameterError("DyadicCube: root has no parent");
        auto p = path_;
        p.pop_back();
        return DyadicCube(root_, std::move(p));
    }

    DyadicCube child(int k) const {
        auto p = path_;
        p.push_back(static_cast<std::uint8_t>(k));
        return DyadicCube(root_, std::move(p));
    }

    int num_children() const { return 1 << dim(); }

    bool contains(const DyadicCube& other) const {
        if (other.depth() < depth()) return false;
        for (int d = 0; d < depth(); ++d)
            if (path_[d] != other.path_[d]) return false;
        return true;
    }

    bool operator==(const DyadicCube& o) const { return root_ == o.root_ && path_ == o.path_; }

    std::string path_string() const {
        std::string s;
        for (auto k : path_) s += static_cast<char>('0' + k);
        return s;
    }

  private:
    Cube root_;
    std::vector<std::uint8_t> path_;
};

}  // namespace sparsep
