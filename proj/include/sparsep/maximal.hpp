#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sparsep/io.hpp"
#include "sparsep/weights.hpp"

namespace sparsep {

/// Result of a maximal-operator evaluation: a nonnegative grid function that
/// is exact for the dyadic operators (the sup is a max over the L+1 ancestors
/// of each cell) and a documented lower bound for the non-centered one.
struct MaximalField {
    enum class Kind { Fractional, Weighted, Sharp, Noncentered };
    Kind kind;
    double alpha = 0;  // Fractional only
    GridFunction field;
    nlohmann::ordered_json provenance;
};

namespace detail {

/// One top-down pass: each cell receives the max of `term` over its ancestor
/// chain. `term(q)` must be nonnegative.
template <typename Term>
GridFunction ancestor_max(const GridFunction& ref, const DyadicCube& q0, Term&& term) {
    std::vector<double> out(static_cast<std::size_t>(ref.cell_count()), 0.0);
    struct Frame {
        DyadicCube q;
        double running;
    };
    std::vector<Frame> stack{{q0, 0.0}};
    while (!stack.empty()) {
        Frame fr = stack.back();
        stack.pop_back();
        double running = std::max(fr.running, term(fr.q));
        if (fr.q.depth() == ref.level()) {
            std::array<std::int64_t, kMaxDim> lo, hi;
            ref.cell_range(fr.q, lo, hi);
            out[static_cast<std::size_t>(ref.flat_index(lo))] = running;
        } else {
            for (int c = (1 << ref.dim()) - 1; c >= 0; --c)
                stack.push_back({fr.q.child(c), running});
        }
    }
    return GridFunction(ref.root(), ref.level(), std::move(out));
}

}  // namespace detail

/// M f(x) = max over dyadic Q containing x of |Q|^{alpha/n - 1} * int_Q |f|.
inline MaximalField fractional_maximal(const GridFunction& f, double alpha, const DyadicCube& q0) {
    const int n = f.dim();
    if (!(alpha >= 0 && alpha <= n))
        throw ParameterError("fractional_maximal: need 0 <= alpha <= n");
    GridFunction fa = f.abs();
    auto field = detail::ancestor_max(f, q0, [&](const DyadicCube& q) {
        return std::pow(q.volume(), alpha / n - 1.0) * integral(fa, q);
    });
    return MaximalField{MaximalField::Kind::Fractional, alpha, std::move(field),
                        {{"operator", "fractional"}, {"alpha", alpha}}};
}

/// M f(x) = max over dyadic Q containing x of (1/w(Q)) * int_Q |f| w.
inline MaximalField weighted_maximal(const GridFunction& f, const GridFunction& w,
                                     const DyadicCube& q0) {
    f.require_compatible(w);
    GridFunction g = f.abs().multiply(w);
    auto field = detail::ancestor_max(f, q0, [&](const DyadicCube& q) {
        return integral(g, q) / cube_weight(w, q);
    });
    return MaximalField{MaximalField::Kind::Weighted, 0, std::move(field),
                        {{"operator", "weighted"}}};
}

/// M f(x) = max over dyadic Q containing x of the mean oscillation of f on Q.
inline MaximalField sharp_maximal(const GridFunction& f, const DyadicCube& q0) {
    auto field = detail::ancestor_max(
        f, q0, [&](const DyadicCube& q) { return oscillation(f, q); });
    return MaximalField{MaximalField::Kind::Sharp, 0, std::move(field), {{"operator", "sharp"}}};
}

/// Finite family of grid-aligned trial cubes for the non-centered operator.
struct CubeEnumerationPolicy {
    std::vector<Cube> cubes;

    /// All cubes with dyadic side lengths root.side * 2^{-k} (k = 0..level)
    /// and centers on the half-cell lattice, kept inside the root box,
    /// enumerated coarse-to-fine and truncated at `cap`.
    static CubeEnumerationPolicy grid_aligned(const Cube& root, int level, std::size_t cap) {
        CubeEnumerationPolicy policy;
        const int n = root.dim;
        const double h = root.side() * std::ldexp(1.0, -level);
        for (int k = 0; k <= level && policy.cubes.size() < cap; ++k) {
            const double side = root.side() * std::ldexp(1.0, -k);
            // centers at root.lo + side/2 + j*(h/2), cube inside the root
            const std::int64_t steps =
                static_cast<std::int64_t>(std::llround((root.side() - side) / (h / 2))) + 1;
            std::array<std::int64_t, kMaxDim> jv{0, 0, 0};
            std::int64_t count = 1;
            for (int a = 0; a < n; ++a) count *= steps;
            for (std::int64_t i = 0; i < count && policy.cubes.size() < cap; ++i) {
                Point c{0, 0, 0};
                for (int a = 0; a < n; ++a) c[a] = root.lo(a) + side / 2 + jv[a] * (h / 2);
                policy.cubes.push_back(Cube(n, c, side / 2));
                for (int a = 0; a < n; ++a) {
                    if (++jv[a] < steps) break;
                    jv[a] = 0;
                }
            }
        }
        return policy;
    }

    /// All dyadic subcubes of a root, depth 0..level.
    static CubeEnumerationPolicy dyadic(const Cube& root, int level) {
        CubeEnumerationPolicy policy;
        std::vector<DyadicCube> stack{DyadicCube(root)};
        while (!stack.empty()) {
            DyadicCube q = stack.back();
            stack.pop_back();
            policy.cubes.push_back(q.cube());
            if (q.depth() < level)
                for (int c = 0; c < (1 << root.dim); ++c) stack.push_back(q.child(c));
        }
        return policy;
    }
};

/// Non-centered weighted maximal function over a domain, evaluated on the
/// given trial cubes only. Each cube contributes its weighted average over
/// Omega ∩ Q to the cells FULLY contained in Q; the result is therefore a
/// pointwise lower bound of the analytic supremum over all cubes.
inline MaximalField noncentered_maximal(const GridFunction& f, const GridFunction& w,
                                        const DomainRaster& dom,
                                        const CubeEnumerationPolicy& policy) {
    if (policy.cubes.empty())
        throw ParameterError("noncentered_maximal: empty cube enumeration");
    f.require_compatible(w);
    GridFunction g = f.abs().multiply(w);
    const int n = f.dim();
    const std::int64_t m = f.cells_per_axis();
    const double h = f.cell_side();
    std::vector<double> out(static_cast<std::size_t>(f.cell_count()), 0.0);
    std::size_t used = 0;
    for (const auto& q : policy.cubes) {
        if (!dom.contains(q.center)) continue;
        double wq = detail::domain_restricted_integral(w, dom, q);
        if (!(wq > 0)) continue;
        double val = detail::domain_restricted_integral(g, dom, q) / wq;
        ++used;
        // cells whose closed cell box sits inside q
        std::array<std::int64_t, kMaxDim> lo{0, 0, 0}, hi{0, 0, 0};
        bool any = true;
        for (int a = 0; a < n; ++a) {
            lo[a] = static_cast<std::int64_t>(std::ceil((q.lo(a) - f.root().lo(a)) / h - 1e-9));
            hi[a] = static_cast<std::int64_t>(std::floor((q.hi(a) - f.root().lo(a)) / h + 1e-9));
            lo[a] = std::max(lo[a], std::int64_t{0});
            hi[a] = std::min(hi[a], m);
            if (lo[a] >= hi[a]) any = false;
        }
        if (!any) continue;
        CellMask::for_box(f, lo, hi, [&](std::int64_t idx) {
            auto& v = out[static_cast<std::size_t>(idx)];
            v = std::max(v, val);
        });
    }
    MaximalField mf{MaximalField::Kind::Noncentered, 0,
                    GridFunction(f.root(), f.level(), std::move(out)),
                    {{"operator", "noncentered"},
                     {"trial_cubes", policy.cubes.size()},
                     {"cubes_used", used},
                     {"note", "lower bound of the supremum over all cubes"}}};
    return mf;
}

// ---------------------------------------------------------------------------
// norm helpers used by the maximal-function inequalities
// ---------------------------------------------------------------------------

/// int_{Q0} |f|^p w over the whole grid.
inline double weighted_p_norm_pow(const GridFunction& f, const GridFunction& w, double p) {
    f.require_compatible(w);
    double sum = 0, comp = 0;
    for (std::int64_t i = 0; i < f.cell_count(); ++i) {
        double y = std::pow(std::fabs(f[i]), p) * w[i] * f.cell_volume() - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

/// w({x : g(x) > t}) for a piecewise-constant field g.
inline double weighted_superlevel_measure(const GridFunction& g, const GridFunction& w, double t,
                                          bool strict = true) {
    g.require_compatible(w);
    double sum = 0;
    for (std::int64_t i = 0; i < g.cell_count(); ++i)
        if (strict ? (g[i] > t) : (g[i] >= t)) sum += w[i] * g.cell_volume();
    return sum;
}

inline nlohmann::ordered_json maximal_field_to_json(const MaximalField& mf) {
    nlohmann::ordered_json j;
    const char* kinds[] = {"fractional", "weighted", "sharp", "noncentered"};
    j["kind"] = kinds[static_cast<int>(mf.kind)];
    j["alpha"] = mf.alpha;
    j["provenance"] = mf.provenance;
    j["field"] = gridfunction_to_json(mf.field);
    return j;
}

}  // namespace sparsep
