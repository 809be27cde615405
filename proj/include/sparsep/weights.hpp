#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sparsep/domain_spec.hpp"
#include "sparsep/grid.hpp"

#include <json.hpp>

namespace sparsep {

/// A grid function with strictly positive samples.
class Weight {
  public:
    explicit Weight(GridFunction w) : fn_(std::move(w)) {
        const auto& s = fn_.samples();
        for (std::size_t i = 0; i < s.size(); ++i)
            if (!(s[i] > 0))
                throw DegenerateWeightError("weight is not positive at cell " + std::to_string(i));
    }

    const GridFunction& fn() const { return fn_; }
    operator const GridFunction&() const { return fn_; }

  private:
    GridFunction fn_;
};

// ---------------------------------------------------------------------------
// dyadic A-infinity estimation
//
// C is the least constant such that w(E) <= C (|E|/|Q|)^delta w(Q) for every
// dyadic cube Q in the subtree and every union of cells E inside Q. For a
// fixed number of cells m, the extremal E collects the m heaviest cells of Q,
// so scanning sorted prefixes over all cubes gives the exact optimum.
// ---------------------------------------------------------------------------

struct AInftyEstimate {
    double C = 1;
    double delta = 1;
    DyadicCube witness;
    std::int64_t witness_cells = 0;
    CellMask witness_mask;
};

namespace detail {

struct AInftyScan {
    const GridFunction& w;
    double delta;
    double best = 0;
    DyadicCube best_cube;
    std::int64_t best_m = 0;

    void visit(const DyadicCube& q) {
        std::array<std::int64_t, kMaxDim> lo, hi;
        w.cell_range(q, lo, hi);
        std::vector<double> vals;
        CellMask::for_box(w, lo, hi, [&](std::int64_t idx) { vals.push_back(w[idx]); });
        std::sort(vals.begin(), vals.end(), std::greater<>());
        const double total = std::accumulate(vals.begin(), vals.end(), 0.0);
        const auto k = static_cast<std::int64_t>(vals.size());
        double prefix = 0;
        for (std::int64_t m = 1; m <= k; ++m) {
            prefix += vals[static_cast<std::size_t>(m - 1)];
            double ratio = (prefix / total) /
                           std::pow(static_cast<double>(m) / static_cast<double>(k), delta);
            if (ratio > best) {
                best = ratio;
                best_cube = q;
                best_m = m;
            }
        }
        if (q.depth() < w.level())
            for (int c = 0; c < (1 << w.dim()); ++c) visit(q.child(c));
    }
};

}  // namespace detail

inline AInftyEstimate estimate_ainfty(const GridFunction& w, const DyadicCube& q0, double delta) {
    if (!(delta > 0 && delta <= 1))
        throw ParameterError("estimate_ainfty: delta must lie in (0, 1]");
    detail::AInftyScan scan{w, delta};
    scan.visit(q0);

    AInftyEstimate est{scan.best, delta, scan.best_cube, scan.best_m,
                       CellMask(w.root(), w.level())};
    // rebuild the extremal cell set of the winning cube
    std::array<std::int64_t, kMaxDim> lo, hi;
    w.cell_range(scan.best_cube, lo, hi);
    std::vector<std::int64_t> cells;
    CellMask::for_box(w, lo, hi, [&](std::int64_t idx) { cells.push_back(idx); });
    std::stable_sort(cells.begin(), cells.end(),
                     [&](std::int64_t a, std::int64_t b) { return w[a] > w[b]; });
    for (std::int64_t m = 0; m < scan.best_m; ++m)
        est.witness_mask.set(cells[static_cast<std::size_t>(m)]);
    return est;
}

/// Convenience overload scanning the full tree of w's root cube.
inline AInftyEstimate estimate_ainfty(const GridFunction& w, double delta) {
    return estimate_ainfty(w, DyadicCube(w.root()), delta);
}

// ---------------------------------------------------------------------------
// two-weight testing constant for the fractional maximal operator
// ---------------------------------------------------------------------------

struct TwoWeightReport {
    double K = 0;
    double p = 0, q = 0, alpha = 0;
    DyadicCube cube;  // where the supremum is attained
};

inline TwoWeightReport two_weight_constant(const GridFunction& w, const GridFunction& sigma,
                                           double p, double q, double alpha,
                                           const DyadicCube& q0) {
    const int n = w.dim();
    if (!(p > 1 && q >= p)) throw ParameterError("two_weight_constant: need 1 < p <= q");
    if (!(alpha >= 0 && alpha <= n))
        throw ParameterError("two_weight_constant: need 0 <= alpha <= n");
    w.require_compatible(sigma);

    TwoWeightReport rep;
    rep.p = p;
    rep.q = q;
    rep.alpha = alpha;
    rep.K = -1;
    std::vector<DyadicCube> stack{q0};
    while (!stack.empty()) {
        DyadicCube cur = stack.back();
        stack.pop_back();
        double vol = cur.volume();
        double val = std::pow(vol, -(1.0 - alpha / n) * p) *
                     std::pow(cube_weight(w, cur), p / q) *
                     std::pow(cube_weight(sigma, cur), p - 1);
        if (val > rep.K) {
            rep.K = val;
            rep.cube = cur;
        }
        if (cur.depth() < w.level())
            for (int c = (1 << n) - 1; c >= 0; --c) stack.push_back(cur.child(c));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// condition reports: doubling, Aikawa, reverse Holder, half-Harnack,
// supersolution sign check
// ---------------------------------------------------------------------------

struct ConditionReport {
    std::string kind;
    double constant = 0;
    double parameter = 0;  // exponent or scale parameter, meaning depends on kind
    nlohmann::ordered_json witness;
    std::vector<std::string> flagged;  // degenerate or skipped trial descriptions
};

namespace detail {

/// Exact integral of a piecewise-constant grid function over an arbitrary box,
/// optionally restricted to cells accepted by `keep`.
inline double box_overlap_integral(const GridFunction& f, const Point& blo, const Point& bhi,
                                   const std::function<bool(std::int64_t)>& keep = {}) {
    const int n = f.dim();
    const std::int64_t m = std::int64_t{1} << f.level();
    const double h = f.root().side() * std::ldexp(1.0, -f.level());
    std::array<std::int64_t, kMaxDim> lo{0, 0, 0}, hi{1, 1, 1};
    for (int a = 0; a < n; ++a) {
        lo[a] = std::clamp(static_cast<std::int64_t>(std::floor((blo[a] - f.root().lo(a)) / h)),
                           std::int64_t{0}, m);
        hi[a] = std::clamp(static_cast<std::int64_t>(std::ceil((bhi[a] - f.root().lo(a)) / h)),
                           lo[a], m);
        if (lo[a] == hi[a]) return 0;
    }
    double sum = 0, comp = 0;
    std::array<std::int64_t, kMaxDim> iv = lo;
    while (true) {
        double vol = 1;
        std::int64_t idx = 0;
        for (int a = n - 1; a >= 0; --a) idx = idx * m + iv[a];
        for (int a = 0; a < n; ++a) {
            double clo = f.root().lo(a) + iv[a] * h;
            vol *= std::max(0.0, std::min(clo + h, bhi[a]) - std::max(clo, blo[a]));
        }
        if (vol > 0 && (!keep || keep(idx))) {
            double y = f[idx] * vol - comp;
            double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        int a = 0;
        for (; a < n; ++a) {
            if (++iv[a] < hi[a]) break;
            iv[a] = lo[a];
        }
        if (a == n) break;
    }
    return sum;
}

inline double domain_restricted_integral(const GridFunction& w, const DomainRaster& dom,
                                         const Cube& q) {
    Point blo{0, 0, 0}, bhi{0, 0, 0};
    for (int a = 0; a < w.dim(); ++a) {
        blo[a] = q.lo(a);
        bhi[a] = q.hi(a);
    }
    return box_overlap_integral(w, blo, bhi,
                                [&](std::int64_t idx) { return dom.contains(w.cell_center(idx)); });
}

inline nlohmann::ordered_json cube_json(const Cube& q) {
    nlohmann::ordered_json j;
    j["center"] = std::vector<double>(q.center.begin(), q.center.begin() + q.dim);
    j["side"] = q.side();
    return j;
}

}  // namespace detail

/// Least D with w(Omega ∩ 2Q) <= D w(Omega ∩ Q) over the supplied trial
/// cubes. Trials whose inner intersection carries no mass are flagged and
/// skipped rather than folded into the maximum.
inline ConditionReport doubling_constant(const GridFunction& w, const DomainRaster& dom,
                                         const std::vector<Cube>& trials) {
    ConditionReport rep;
    rep.kind = "doubling";
    rep.constant = 0;
    for (const auto& q : trials) {
        double inner = detail::domain_restricted_integral(w, dom, q);
        if (!(inner > 0)) {
            rep.flagged.push_back("no mass in " + detail::cube_json(q).dump());
            continue;
        }
        double outer = detail::domain_restricted_integral(w, dom, q.dilated(2.0));
        double ratio = outer / inner;
        if (ratio > rep.constant) {
            rep.constant = ratio;
            rep.witness = detail::cube_json(q);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// distance weights
// ---------------------------------------------------------------------------

struct DistanceTarget {
    enum class Kind { Points, Hyperplane, Boundary } kind = Kind::Points;
    std::vector<Point> points;
    int axis = 0;
    double offset = 0;
    const DomainRaster* domain = nullptr;  // required for Kind::Boundary
    int dim = 1;

    double distance(const Point& x) const {
        switch (kind) {
            case Kind::Points: {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& p : points) {
                    double s = 0;
                    for (int a = 0; a < dim; ++a) s += (x[a] - p[a]) * (x[a] - p[a]);
                    best = std::min(best, std::sqrt(s));
                }
                return best;
            }
            case Kind::Hyperplane:
                return std::fabs(x[axis] - offset);
            case Kind::Boundary:
                if (!domain) throw ParameterError("distance target: boundary without a domain");
                return domain->boundary_distance(x);
        }
        return 0;
    }
};

/// Sampler for d(x, E)^gamma. Sampling a point of E with gamma < 0 throws.
inline std::function<double(const Point&)> distance_weight(DistanceTarget target, double gamma) {
    return [target = std::move(target), gamma](const Point& x) {
        double d = target.distance(x);
        if (d == 0 && gamma < 0)
            throw DegenerateWeightError("distance weight: singular sample point");
        if (d == 0 && gamma == 0) return 1.0;
        return std::pow(d, gamma);
    };
}

/// C1 = sup over cubes R(x, r), with x running over the base points and r over
/// the radii, of avg_R d(.,E)^gamma / r^gamma, averages by midpoint quadrature
/// on 2^level points per axis. Requires -n < gamma <= 0 so the averages are
/// finite.
namespace detail {

/// Graded midpoint rule for a cell [lo, lo+h)^n: cells sitting close to the
/// singular set (relative to their own size) are subdivided further, so the
/// quadrature converges at the smooth-cell rate despite the singularity.
inline double graded_cell_mean(const DistanceTarget& target, double gamma, int dim,
                               const Point& lo, double h, int extra, bool& singular) {
    Point c{0, 0, 0};
    for (int a = 0; a < dim; ++a) c[a] = lo[a] + 0.5 * h;
    double d = target.distance(c);
    if (d == 0 && gamma < 0) {
        singular = true;
        return 0;
    }
    if (extra == 0 || d > std::sqrt(static_cast<double>(dim)) * h) return std::pow(d, gamma);
    double sum = 0;
    for (int child = 0; child < (1 << dim); ++child) {
        Point clo = lo;
        for (int a = 0; a < dim; ++a)
            if (child & (1 << a)) clo[a] += 0.5 * h;
        sum += graded_cell_mean(target, gamma, dim, clo, 0.5 * h, extra - 1, singular);
        if (singular) return 0;
    }
    return sum / static_cast<double>(1 << dim);
}

}  // namespace detail

inline ConditionReport aikawa_check(const DistanceTarget& target, double gamma,
                                    const std::vector<double>& radii,
                                    const std::vector<Point>& base_points, int dim, int level) {
    if (!(gamma > -dim && gamma <= 0))
        throw ParameterError("aikawa_check: need -n < gamma <= 0");
    std::vector<Cube> trials;
    for (const auto& x : base_points)
        for (double r : radii) trials.push_back(Cube{dim, x, r});
    ConditionReport rep;
    rep.kind = "aikawa";
    rep.parameter = gamma;
    rep.constant = 0;
    const std::int64_t m = std::int64_t{1} << level;
    for (const auto& q : trials) {
        double h = q.side() / static_cast<double>(m);
        double sum = 0, comp = 0;
        std::array<std::int64_t, kMaxDim> iv{0, 0, 0};
        std::int64_t count = 1;
        for (int a = 0; a < dim; ++a) count *= m;
        bool singular = false;
        for (std::int64_t i = 0; i < count && !singular; ++i) {
            Point x{0, 0, 0};
            for (int a = 0; a < dim; ++a) x[a] = q.lo(a) + iv[a] * h;
            double mean = detail::graded_cell_mean(target, gamma, dim, x, h, 16, singular);
            if (singular) break;
            double y = mean - comp;
            double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            for (int a = 0; a < dim; ++a) {
                if (++iv[a] < m) break;
                iv[a] = 0;
            }
        }
        if (singular) {
            rep.flagged.push_back("quadrature node on E in " + detail::cube_json(q).dump());
            continue;
        }
        double avg = sum / static_cast<double>(count);
        double r = q.half_side;
        double ratio = avg / std::pow(r, gamma);
        if (ratio > rep.constant) {
            rep.constant = ratio;
            rep.witness = detail::cube_json(q);
        }
    }
    return rep;
}

/// (avg of w^beta over Q)^(1/beta) divided by the minimum cell value on Q
/// (the discrete essential infimum).
inline ConditionReport reverse_holder_check(const GridFunction& w, const DyadicCube& q,
                                            double beta) {
    if (!(beta >= 1)) throw ParameterError("reverse_holder_check: need beta >= 1");
    GridFunction wb = w.map([beta](double v) { return std::pow(v, beta); });
    double inf = std::numeric_limits<double>::infinity();
    std::array<std::int64_t, kMaxDim> lo, hi;
    w.cell_range(q, lo, hi);
    CellMask::for_box(w, lo, hi, [&](std::int64_t idx) { inf = std::min(inf, w[idx]); });
    ConditionReport rep;
    rep.kind = "reverse_holder";
    rep.parameter = beta;
    rep.constant = std::pow(average(wb, q), 1.0 / beta) / inf;
    rep.witness = detail::cube_json(q.cube());
    return rep;
}

/// sup over trial cubes Q with 4Q inside the domain of
/// (avg_Q w^beta)^(1/beta) / essinf_Q w. Cubes failing 4Q ⊂ Omega are
/// rejected, not skipped: admissibility is part of the hypothesis.
inline ConditionReport half_harnack_check(const GridFunction& w, const DomainRaster& dom,
                                          double beta, double p, const std::vector<Cube>& trials) {
    const int n = w.dim();
    if (!(beta > 0 && beta * (n - p) < n * (p - 1)))
        throw ParameterError("half_harnack_check: need beta > 0 and beta(n-p) < n(p-1)");
    ConditionReport rep;
    rep.kind = "half_harnack";
    rep.parameter = beta;
    rep.constant = 0;
    GridFunction wb = w.map([beta](double v) { return std::pow(v, beta); });
    for (const auto& q : trials) {
        if (!dom.contains_cube(q.dilated(4.0)))
            throw ParameterError("half_harnack_check: 4Q escapes the domain for Q at " +
                                 detail::cube_json(q).dump());
        Point blo{0, 0, 0}, bhi{0, 0, 0};
        for (int a = 0; a < n; ++a) {
            blo[a] = q.lo(a);
            bhi[a] = q.hi(a);
        }
        double avg = detail::box_overlap_integral(wb, blo, bhi) / q.volume();
        // essinf over the overlapped cells
        double inf = std::numeric_limits<double>::infinity();
        const std::int64_t m = std::int64_t{1} << w.level();
        const double h = w.root().side() * std::ldexp(1.0, -w.level());
        std::array<std::int64_t, kMaxDim> lo{0, 0, 0}, hi{1, 1, 1};
        for (int a = 0; a < n; ++a) {
            lo[a] = std::clamp(
                static_cast<std::int64_t>(std::floor((blo[a] - w.root().lo(a)) / h + 1e-12)),
                std::int64_t{0}, m - 1);
            hi[a] = std::clamp(
                static_cast<std::int64_t>(std::ceil((bhi[a] - w.root().lo(a)) / h - 1e-12)),
                lo[a] + 1, m);
        }
        CellMask::for_box(w, lo, hi, [&](std::int64_t idx) { inf = std::min(inf, w[idx]); });
        double ratio = std::pow(avg, 1.0 / beta) / inf;
        if (ratio > rep.constant) {
            rep.constant = ratio;
            rep.witness = detail::cube_json(q);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// supersolution sign check
// ---------------------------------------------------------------------------

/// A nonnegative compactly supported test function with an analytic gradient.
struct TestBump {
    Cube support;
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> gradient;
    std::string label;
};

struct SupportError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Midpoint-quadrature value of the weak p-Laplace form
/// \int |grad u|^{p-2} grad u . grad eta over the bump's support.
/// A nonnegative value for every admissible bump is consistent with u being a
/// supersolution.
inline ConditionReport supersolution_check(const std::function<Point(const Point&)>& grad_u,
                                           double p, const DomainRaster& dom, int level,
                                           const std::vector<TestBump>& bumps) {
    if (!(p > 1)) throw ParameterError("supersolution_check: need p > 1");
    ConditionReport rep;
    rep.kind = "supersolution";
    rep.parameter = p;
    rep.constant = std::numeric_limits<double>::infinity();  // min of the form values
    const int n = dom.root.dim;
    const std::int64_t m = std::int64_t{1} << level;
    for (const auto& b : bumps) {
        if (!dom.contains_cube(b.support))
            throw SupportError("supersolution_check: bump '" + b.label +
                               "' is not supported inside the domain");
        double h = b.support.side() / static_cast<double>(m);
        double vol = std::pow(h, n);
        double sum = 0, comp = 0;
        std::array<std::int64_t, kMaxDim> iv{0, 0, 0};
        std::int64_t count = 1;
        for (int a = 0; a < n; ++a) count *= m;
        for (std::int64_t i = 0; i < count; ++i) {
            Point x{0, 0, 0};
            for (int a = 0; a < n; ++a) x[a] = b.support.lo(a) + (iv[a] + 0.5) * h;
            Point gu = grad_u(x), ge = b.gradient(x);
            double norm2 = 0, dot = 0;
            for (int a = 0; a < n; ++a) {
                norm2 += gu[a] * gu[a];
                dot += gu[a] * ge[a];
            }
            double term = (norm2 > 0 ? std::pow(norm2, (p - 2) / 2) * dot : 0.0) * vol;
            double y = term - comp;
            double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            for (int a = 0; a < n; ++a) {
                if (++iv[a] < m) break;
                iv[a] = 0;
            }
        }
        if (sum < rep.constant) {
            rep.constant = sum;
            rep.witness = nlohmann::ordered_json{{"bump", b.label}, {"value", sum}};
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// weight family spec strings
// ---------------------------------------------------------------------------

/// A weight described by a short round-trippable string:
///   const:<v>
///   dist:point(<coords>):gamma=<g>
///   dist:hyperplane(<axis>,<offset>):gamma=<g>
///   dist:boundary:gamma=<g>            (needs a domain)
///   parabola:p=<p>:c=<c>               (w = c - |x|^2, gradient -2x)
///   fundamental:p=<p>:c=<c>:M=<M>      (w = min(c |x|^((p-n)/(p-1)), M))
struct WeightSpec {
    std::string text;  // canonical form
    std::function<double(const Point&)> sampler;
    std::function<Point(const Point&)> gradient;  // empty if not differentiable
};

namespace detail {

inline std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double kv_value(const std::string& part, const std::string& key) {
    if (part.rfind(key + "=", 0) != 0)
        throw ParameterError("weight spec: expected '" + key + "=...', got '" + part + "'");
    return std::stod(part.substr(key.size() + 1));
}

}  // namespace detail

inline WeightSpec parse_weight_spec(const std::string& text, int dim,
                                    const DomainRaster* domain = nullptr) {
    auto parts = detail::split(text, ':');
    WeightSpec spec;
    if (parts.empty()) throw ParameterError("weight spec: empty");
    const std::string& head = parts[0];

    if (head == "const") {
        if (parts.size() != 2) throw ParameterError("weight spec: const:<value>");
        double v = std::stod(parts[1]);
        if (!(v > 0)) throw ParameterError("weight spec: const value must be positive");
        spec.text = "const:" + detail::fmt_num(v);
        spec.sampler = [v](const Point&) { return v; };
        spec.gradient = [](const Point&) { return Point{0, 0, 0}; };
        return spec;
    }

    if (head == "dist") {
        if (parts.size() != 3) throw ParameterError("weight spec: dist:<target>:gamma=<g>");
        double gamma = detail::kv_value(parts[2], "gamma");
        DistanceTarget target;
        target.dim = dim;
        std::string canon;
        if (parts[1] == "boundary") {
            if (!domain) throw ParameterError("weight spec: dist:boundary needs a domain");
            target.kind = DistanceTarget::Kind::Boundary;
            target.domain = domain;
            canon = "boundary";
        } else if (parts[1].rfind("point(", 0) == 0 && parts[1].back() == ')') {
            target.kind = DistanceTarget::Kind::Points;
            auto coords =
                detail::parse_number_list(parts[1].substr(6, parts[1].size() - 7));
            if (static_cast<int>(coords.size()) != dim)
                throw ParameterError("weight spec: point needs n coordinates");
            Point p{0, 0, 0};
            canon = "point(";
            for (int a = 0; a < dim; ++a) {
                p[a] = coords[static_cast<std::size_t>(a)];
                canon += detail::fmt_num(p[a]);
                canon += (a + 1 < dim ? "," : ")");
            }
            target.points.push_back(p);
        } else if (parts[1].rfind("hyperplane(", 0) == 0 && parts[1].back() == ')') {
            target.kind = DistanceTarget::Kind::Hyperplane;
            auto args =
                detail::parse_number_list(parts[1].substr(11, parts[1].size() - 12));
            if (args.size() != 2) throw ParameterError("weight spec: hyperplane(axis,offset)");
            target.axis = static_cast<int>(args[0]);
            if (target.axis < 0 || target.axis >= dim)
                throw ParameterError("weight spec: hyperplane axis out of range");
            target.offset = args[1];
            canon = "hyperplane(" + std::to_string(target.axis) + "," +
                    detail::fmt_num(target.offset) + ")";
        } else {
            throw ParameterError("weight spec: unknown distance target '" + parts[1] + "'");
        }
        spec.text = "dist:" + canon + ":gamma=" + detail::fmt_num(gamma);
        spec.sampler = distance_weight(target, gamma);
        return spec;
    }

    if (head == "parabola") {
        if (parts.size() != 3) throw ParameterError("weight spec: parabola:p=<p>:c=<c>");
        double p = detail::kv_value(parts[1], "p");
        double c = detail::kv_value(parts[2], "c");
        spec.text = "parabola:p=" + detail::fmt_num(p) + ":c=" + detail::fmt_num(c);
        spec.sampler = [c, dim](const Point& x) {
            double s = 0;
            for (int a = 0; a < dim; ++a) s += x[a] * x[a];
            return c - s;
        };
        spec.gradient = [dim](const Point& x) {
            Point g{0, 0, 0};
            for (int a = 0; a < dim; ++a) g[a] = -2 * x[a];
            return g;
        };
        return spec;
    }

    if (head == "fundamental") {
        if (parts.size() != 4)
            throw ParameterError("weight spec: fundamental:p=<p>:c=<c>:M=<M>");
        double p = detail::kv_value(parts[1], "p");
        double c = detail::kv_value(parts[2], "c");
        double cap = detail::kv_value(parts[3], "M");
        if (p == dim)
            throw ParameterError("weight spec: fundamental requires p != n");
        double k = (p - dim) / (p - 1);
        spec.text = "fundamental:p=" + detail::fmt_num(p) + ":c=" + detail::fmt_num(c) +
                    ":M=" + detail::fmt_num(cap);
        spec.sampler = [c, cap, k, dim](const Point& x) {
            double s = 0;
            for (int a = 0; a < dim; ++a) s += x[a] * x[a];
            double r = std::sqrt(s);
            if (r == 0) return k > 0 ? std::min(0.0, cap) : cap;
            return std::min(c * std::pow(r, k), cap);
        };
        spec.gradient = [c, cap, k, dim](const Point& x) {
            Point g{0, 0, 0};
            double s = 0;
            for (int a = 0; a < dim; ++a) s += x[a] * x[a];
            double r = std::sqrt(s);
            if (r == 0 || c * std::pow(r, k) >= cap) return g;  // capped: gradient 0
            double f = c * k * std::pow(r, k - 2);
            for (int a = 0; a < dim; ++a) g[a] = f * x[a];
            return g;
        };
        return spec;
    }

    throw ParameterError("weight spec: unknown family '" + head + "'");
}

inline std::string format_weight_spec(const WeightSpec& spec) { return spec.text; }

}  // namespace sparsep
