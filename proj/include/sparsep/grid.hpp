#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "sparsep/geometry.hpp"

namespace sparsep {

/// n-dimensional inclusive prefix-sum table (summed-area table) over an
/// M^n array, built with compensated summation so that box sums agree with
/// direct summation to ~1e-15 relative even at 2^24 cells.
class PrefixSum {
  public:
    PrefixSum(int dim, std::int64_t cells_per_axis, const std::vector<double>& data)
        : dim_(dim), m_(cells_per_axis) {
        std::int64_t t = 1;
        for (int a = 0; a < dim_; ++a) t *= (m_ + 1);
        table_.assign(static_cast<std::size_t>(t), 0.0);
        // copy data into the (1..M)^n block
        std::array<std::int64_t, kMaxDim> iv{0, 0, 0};
        for (std::size_t idx = 0; idx < data.size(); ++idx) {
            table_[tindex(iv, 1)] = data[idx];
            for (int a = 0; a < dim_; ++a) {
                if (++iv[a] < m_) break;
                iv[a] = 0;
            }
        }
        // running sums along each axis in turn, Kahan-compensated
        for (int axis = 0; axis < dim_; ++axis) accumulate_axis(axis);
    }

    /// Sum of data over the half-open index box [lo, hi) per axis.
    double box_sum(const std::array<std::int64_t, kMaxDim>& lo,
                   const std::array<std::int64_t, kMaxDim>& hi) const {
        double s = 0;
        for (int corner = 0; corner < (1 << dim_); ++corner) {
            std::array<std::int64_t, kMaxDim> iv{0, 0, 0};
            int sign = 1;
            for (int a = 0; a < dim_; ++a) {
                if (corner & (1 << a)) {
                    iv[a] = hi[a];
                } else {
                    iv[a] = lo[a];
                    sign = -sign;
                }
            }
            s += sign * table_[tindex(iv, 0)];
        }
        return s;
    }

  private:
    std::size_t tindex(const std::array<std::int64_t, kMaxDim>& iv, int offset) const {
        std::size_t idx = 0;
        for (int a = dim_ - 1; a >= 0; --a) idx = idx * (m_ + 1) + (iv[a] + offset);
        return idx;
    }

    void accumulate_axis(int axis) {
        std::int64_t stride = 1;
        for (int a = 0; a < axis; ++a) stride *= (m_ + 1);
        std::int64_t outer = static_cast<std::int64_t>(table_.size()) / ((m_ + 1) * stride);
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t inner = 0; inner < stride; ++inner) {
                double* base = table_.data() + o * (m_ + 1) * stride + inner;
                double sum = 0, comp = 0;
                for (std::int64_t i = 0; i <= m_; ++i) {
                    double y = base[i * stride] - comp;
                    double t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                    base[i * stride] = sum;
                }
            }
        }
    }

    int dim_;
    std::int64_t m_;
    std::vector<double> table_;
};

/// Piecewise-constant function on the 2^{nL} dyadic cells of a root cube.
/// One sample per finest-level cell; the function IS its piecewise-constant
/// interpolant, so integrals over dyadic cubes of depth <= L are exact sums.
class GridFunction {
  public:
    GridFunction(const Cube& root, int level, std::vector<double> samples)
        : root_(root), level_(level), samples_(std::move(samples)) {
        validate_level(root.dim, level);
        if (samples_.size() != static_cast<std::size_t>(cell_count()))
            throw ParameterError("GridFunction: sample count does not match 2^{nL}");
        for (std::size_t i = 0; i < samples_.size(); ++i)
            if (!std::isfinite(samples_[i]))
                throw ParameterError("GridFunction: non-finite sample at cell " +
                                     std::to_string(i));
    }

    static void validate_level(int dim, int level) {
        if (level < 0) throw ParameterError("GridFunction: level must be nonnegative");
        static constexpr int kMaxLevel[kMaxDim + 1] = {0, 12, 10, 6};
        if (level > kMaxLevel[dim])
            throw ParameterError("GridFunction: level " + std::to_string(level) +
                                 " exceeds the cap for dimension " + std::to_string(dim));
    }

    const Cube& root() const { return root_; }
    int dim() const { return root_.dim; }
    int level() const { return level_; }
    std::int64_t cells_per_axis() const { return std::int64_t{1} << level_; }
    std::int64_t cell_count() const {
        std::int64_t c = 1;
        for (int a = 0; a < dim(); ++a) c <<= level_;
        return c;
    }
    double cell_side() const { return root_.side() * std::ldexp(1.0, -level_); }
    double cell_volume() const { return std::pow(cell_side(), dim()); }

    const std::vector<double>& samples() const { return samples_; }
    double operator[](std::int64_t idx) const { return samples_[static_cast<std::size_t>(idx)]; }

    std::int64_t flat_index(const std::array<std::int64_t, kMaxDim>& iv) const {
        std::int64_t idx = 0;
        for (int a = dim() - 1; a >= 0; --a) idx = idx * cells_per_axis() + iv[a];
        return idx;
    }

    std::array<std::int64_t, kMaxDim> cell_index(std::int64_t flat) const {
        std::array<std::int64_t, kMaxDim> iv{0, 0, 0};
        for (int a = 0; a < dim(); ++a) {
            iv[a] = flat % cells_per_axis();
            flat /= cells_per_axis();
        }
        return iv;
    }

    Point cell_center(std::int64_t flat) const {
        auto iv = cell_index(flat);
        Point p{0, 0, 0};
        double h = cell_side();
        for (int a = 0; a < dim(); ++a) p[a] = root_.lo(a) + (iv[a] + 0.5) * h;
        return p;
    }

    /// Half-open index box [lo, hi) of the cells covered by a dyadic cube.
    void cell_range(const DyadicCube& q, std::array<std::int64_t, kMaxDim>& lo,
                    std::array<std::int64_t, kMaxDim>& hi) const {
        if (q.depth() > level_)
            throw ResolutionError("dyadic cube at depth " + std::to_string(q.depth()) +
                                  " is finer than grid level " + std::to_string(level_));
        auto iv = q.index();
        std::int64_t w = std::int64_t{1} << (level_ - q.depth());
        for (int a = 0; a < dim(); ++a) {
            lo[a] = iv[a] * w;
            hi[a] = lo[a] + w;
        }
        for (int a = dim(); a < kMaxDim; ++a) {
            lo[a] = 0;
            hi[a] = 1;
        }
    }

    const PrefixSum& prefix() const {
        if (!prefix_)
            prefix_ = std::make_shared<PrefixSum>(dim(), cells_per_axis(), samples_);
        return *prefix_;
    }

    GridFunction map(const std::function<double(double)>& fn) const {
        std::vector<double> out(samples_.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(samples_[i]);
        return GridFunction(root_, level_, std::move(out));
    }

    GridFunction abs() const {
        return map([](double v) { return std::fabs(v); });
    }

    GridFunction multiply(const GridFunction& other) const {
        require_compatible(other);
        std::vector<double> out(samples_.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = samples_[i] * other.samples_[i];
        return GridFunction(root_, level_, std::move(out));
    }

    void require_compatible(const GridFunction& other) const {
        if (!(root_ == other.root_) || level_ != other.level_)
            throw ParameterError("GridFunction: incompatible root or level");
    }

  private:
    Cube root_;
    int level_;
    std::vector<double> samples_;
    mutable std::shared_ptr<PrefixSum> prefix_;
};

/// Bitset over the 2^{nL} cells of a grid; models measurable subsets at cell
/// granularity. |E| = cell volume times popcount.
class CellMask {
  public:
    CellMask(const Cube& root, int level)
        : root_(root), level_(level) {
        GridFunction::validate_level(root.dim, level);
        std::int64_t c = cell_count();
        bits_.assign(static_cast<std::size_t>((c + 63) / 64), 0);
    }

    const Cube& root() const { return root_; }
    int dim() const { return root_.dim; }
    int level() const { return level_; }
    std::int64_t cells_per_axis() const { return std::int64_t{1} << level_; }
    std::int64_t cell_count() const {
        std::int64_t c = 1;
        for (int a = 0; a < dim(); ++a) c <<= level_;
        return c;
    }
    double cell_volume() const {
        return std::pow(root_.side() * std::ldexp(1.0, -level_), dim());
    }

    bool test(std::int64_t i) const { return (bits_[i >> 6] >> (i & 63)) & 1; }
    void set(std::int64_t i, bool v = true) {
        if (v)
            bits_[i >> 6] |= (std::uint64_t{1} << (i & 63));
        else
            bits_[i >> 6] &= ~(std::uint64_t{1} << (i & 63));
    }

    void set_all() {
        std::int64_t c = cell_count();
        for (std::int64_t i = 0; i < c; ++i) set(i);
    }

    /// Marks all cells of a dyadic cube.
    void set_cube(const DyadicCube& q, const GridFunction& ref, bool v = true) {
        std::array<std::int64_t, kMaxDim> lo, hi;
        ref.cell_range(q, lo, hi);
        for_box(ref, lo, hi, [&](std::int64_t idx) { set(idx, v); });
    }

    std::int64_t popcount() const {
        std::int64_t c = 0;
        for (auto w : bits_) c += std::popcount(w);
        return c;
    }

    double measure() const { return cell_volume() * popcount(); }
    bool empty() const { return popcount() == 0; }

    bool intersects(const CellMask& other) const {
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (bits_[i] & other.bits_[i]) return true;
        return false;
    }

    bool subset_of(const CellMask& other) const {
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (bits_[i] & ~other.bits_[i]) return false;
        return true;
    }

    CellMask& operator|=(const CellMask& other) {
        for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
        return *this;
    }

    bool operator==(const CellMask& other) const {
        return root_ == other.root_ && level_ == other.level_ && bits_ == other.bits_;
    }

    const std::vector<std::uint64_t>& words() const { return bits_; }

    template <typename Fn>
    static void for_box(const GridFunction& ref, const std::array<std::int64_t, kMaxDim>& lo,
                        const std::array<std::int64_t, kMaxDim>& hi, Fn&& fn) {
        std::array<std::int64_t, kMaxDim> iv = lo;
        while (true) {
            fn(ref.flat_index(iv));
            int a = 0;
            for (; a < ref.dim(); ++a) {
                if (++iv[a] < hi[a]) break;
                iv[a] = lo[a];
            }
            if (a == ref.dim()) break;
        }
    }

  private:
    Cube root_;
    int level_;
    std::vector<std::uint64_t> bits_;
};

// ---------------------------------------------------------------------------
// grid operations

/// Samples a pointwise function at cell centers (midpoint-on-cells rule).
inline GridFunction build_grid_function(const Cube& root, int level,
                                        const std::function<double(const Point&)>& sampler) {
    GridFunction::validate_level(root.dim, level);
    std::int64_t count = 1;
    for (int a = 0; a < root.dim; ++a) count <<= level;
    std::vector<double> samples(static_cast<std::size_t>(count));
    std::int64_t m = std::int64_t{1} << level;
    double h = root.side() / static_cast<double>(m);
    std::array<std::int64_t, kMaxDim> iv{0, 0, 0};
    for (std::int64_t idx = 0; idx < count; ++idx) {
        Point p{0, 0, 0};
        for (int a = 0; a < root.dim; ++a) p[a] = root.lo(a) + (iv[a] + 0.5) * h;
        double v = sampler(p);
        if (!std::isfinite(v))
            throw ParameterError("build_grid_function: sampler returned non-finite value at cell " +
                                 std::to_string(idx));
        samples[static_cast<std::size_t>(idx)] = v;
        for (int a = 0; a < root.dim; ++a) {
            if (++iv[a] < m) break;
            iv[a] = 0;
        }
    }
    return GridFunction(root, level, std::move(samples));
}

/// Exact integral of f over a dyadic cube (depth <= L).
inline double integral(const GridFunction& f, const DyadicCube& q) {
    std::array<std::int64_t, kMaxDim> lo, hi;
    f.cell_range(q, lo, hi);
    return f.prefix().box_sum(lo, hi) * f.cell_volume();
}

/// f_Q, the integral average over a dyadic cube.
inline double average(const GridFunction& f, const DyadicCube& q) {
    std::array<std::int64_t, kMaxDim> lo, hi;
    f.cell_range(q, lo, hi);
    std::int64_t count = 1;
    for (int a = 0; a < f.dim(); ++a) count *= (hi[a] - lo[a]);
    return f.prefix().box_sum(lo, hi) / static_cast<double>(count);
}

struct DegenerateWeightError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// f_{w;Q} = (1/w(Q)) \int_Q f w.
inline double weighted_average(const GridFunction& f, const GridFunction& w,
                               const DyadicCube& q) {
    f.require_compatible(w);
    std::array<std::int64_t, kMaxDim> lo, hi;
    f.cell_range(q, lo, hi);
    double wsum = 0, fwsum = 0, cw = 0, cf = 0;
    CellMask::for_box(f, lo, hi, [&](std::int64_t idx) {
        double wv = w[idx];
        double y = wv - cw, t = wsum + y;
        cw = (t - wsum) - y;
        wsum = t;
        double fy = f[idx] * wv - cf, ft = fwsum + fy;
        cf = (ft - fwsum) - fy;
        fwsum = ft;
    });
    if (!(wsum > 0)) throw DegenerateWeightError("weighted_average: w(Q) = 0");
    return fwsum / wsum;
}

/// Mean oscillation over a dyadic cube: avg_Q |f - f_Q|, exact.
inline double oscillation(const GridFunction& f, const DyadicCube& q) {
    double mean = average(f, q);
    std::array<std::int64_t, kMaxDim> lo, hi;
    f.cell_range(q, lo, hi);
    double sum = 0, comp = 0;
    std::int64_t count = 0;
    CellMask::for_box(f, lo, hi, [&](std::int64_t idx) {
        double y = std::fabs(f[idx] - mean) - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        ++count;
    });
    return sum / static_cast<double>(count);
}

/// Mean of |f - c| over a dyadic cube for a caller-supplied reference value.
inline double mean_deviation(const GridFunction& f, const DyadicCube& q, double c) {
    std::array<std::int64_t, kMaxDim> lo, hi;
    f.cell_range(q, lo, hi);
    double sum = 0, comp = 0;
    std::int64_t count = 0;
    CellMask::for_box(f, lo, hi, [&](std::int64_t idx) {
        double y = std::fabs(f[idx] - c) - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        ++count;
    });
    return sum / static_cast<double>(count);
}

/// w(E) for a cell mask: exact sum of w * cell volume over masked cells.
inline double weighted_measure(const GridFunction& w, const CellMask& mask) {
    if (!(w.root() == mask.root()) || w.level() != mask.level())
        throw ParameterError("weighted_measure: incompatible root or level");
    double sum = 0, comp = 0;
    std::int64_t c = w.cell_count();
    for (std::int64_t i = 0; i < c; ++i) {
        if (!mask.test(i)) continue;
        double y = w[i] - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum * w.cell_volume();
}

/// w-measure of a dyadic cube.
inline double cube_weight(const GridFunction& w, const DyadicCube& q) { return integral(w, q); }

}  // namespace sparsep
