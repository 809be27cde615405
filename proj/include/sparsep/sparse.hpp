#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sparsep/maximal.hpp"
#include "sparsep/report.hpp"

namespace sparsep {

/// Raised by carve_disjoint_sets when w(E_S) < eta * w(S) for some S: the
/// (rho, C_w, delta_w) admissibility contract was broken upstream.
struct SparsityViolation : std::runtime_error {
    std::string cube_path;
    SparsityViolation(std::string path, const std::string& what)
        : std::runtime_error(what), cube_path(std::move(path)) {}
};

struct SparseNode {
    DyadicCube cube;
    int parent = -1;   // index into the family's node list, -1 for the root
    double kappa = 0;  // oscillation variant: mean deviation of f from f_S on S
    int level_k = 0;   // level-set variant: the level k of this cube
    double avg = 0;    // level-set variant: |Q|^{alpha/n-1} int_Q |f|
    CellMask e_mask;   // carved pairwise-disjoint subset of the cube
};

struct SparseFamily {
    enum class Variant { Oscillation, LevelSet };
    Variant variant = Variant::Oscillation;
    Cube root;
    int grid_level = 0;
    std::vector<SparseNode> nodes;  // nodes[0] is the root cube
    double rho = 0;    // oscillation build parameter
    double a = 0;      // level-set build parameter
    double alpha = 0;  // level-set fractional order
    int k0 = 0;        // level-set base level
    double eta = 0;    // set by carve_disjoint_sets
    bool carved = false;

    std::vector<int> children_of(int idx) const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
            if (nodes[static_cast<std::size_t>(i)].parent == idx) out.push_back(i);
        return out;
    }
};

// ---------------------------------------------------------------------------
// oscillation (stopping-time) construction
// ---------------------------------------------------------------------------

inline SparseFamily build_sparse_oscillation(const GridFunction& f, const DyadicCube& q0,
                                             double rho) {
    if (!(rho > 1)) throw ParameterError("build_sparse_oscillation: need rho > 1");
    SparseFamily fam;
    fam.variant = SparseFamily::Variant::Oscillation;
    fam.root = f.root();
    fam.grid_level = f.level();
    fam.rho = rho;

    // process(S): record kappa(S), then add the maximal dyadic Q strictly
    // inside S with mean deviation from f_S exceeding rho * kappa(S)
    struct Pending {
        DyadicCube cube;
        int parent;
    };
    std::vector<Pending> queue{{q0, -1}};
    while (!queue.empty()) {
        Pending cur = queue.front();
        queue.erase(queue.begin());
        int self = static_cast<int>(fam.nodes.size());
        double fS = average(f, cur.cube);
        double kappa = mean_deviation(f, cur.cube, fS);
        fam.nodes.push_back(
            SparseNode{cur.cube, cur.parent, kappa, 0, 0, CellMask(f.root(), f.level())});
        if (kappa == 0 || cur.cube.depth() == f.level()) continue;
        double threshold = rho * kappa;
        // maximal stopping cubes: strict ">" per the stopping rule, ties pass
        std::vector<DyadicCube> stack;
        for (int c = (1 << f.dim()) - 1; c >= 0; --c) stack.push_back(cur.cube.child(c));
        std::vector<DyadicCube> hits;
        while (!stack.empty()) {
            DyadicCube q = stack.back();
            stack.pop_back();
            if (mean_deviation(f, q, fS) > threshold) {
                hits.push_back(q);
            } else if (q.depth() < f.level()) {
                for (int c = (1 << f.dim()) - 1; c >= 0; --c) stack.push_back(q.child(c));
            }
        }
        // canonical order: DFS preorder is already deterministic; enqueue
        // breadth-first so node indices group by generation
        for (auto& h : hits) queue.push_back({h, self});
    }
    return fam;
}

// ---------------------------------------------------------------------------
// level-set construction
// ---------------------------------------------------------------------------

inline SparseFamily build_sparse_levelset(const GridFunction& f, double alpha,
                                          const DyadicCube& q0, double a, double C_sigma,
                                          double delta_sigma) {
    const int n = f.dim();
    if (!(a > std::pow(2.0, n)))
        throw ParameterError("build_sparse_levelset: need a > 2^n");
    if (!(C_sigma * std::pow(std::pow(2.0, n) / a, delta_sigma) < 1))
        throw ParameterError("build_sparse_levelset: need C_sigma (2^n/a)^delta < 1");
    if (!(alpha >= 0 && alpha <= n))
        throw ParameterError("build_sparse_levelset: need 0 <= alpha <= n");

    GridFunction fa = f.abs();
    auto phi = [&](const DyadicCube& q) {
        return std::pow(q.volume(), alpha / n - 1.0) * integral(fa, q);
    };

    SparseFamily fam;
    fam.variant = SparseFamily::Variant::LevelSet;
    fam.root = f.root();
    fam.grid_level = f.level();
    fam.a = a;
    fam.alpha = alpha;

    double phi0 = phi(q0);
    if (phi0 == 0) {
        fam.k0 = 0;
        fam.nodes.push_back(SparseNode{q0, -1, 0, 0, 0, CellMask(f.root(), f.level())});
        return fam;
    }

    // k0: smallest integer with phi(Q0) <= a^{k0}
    int k0 = static_cast<int>(std::ceil(std::log(phi0) / std::log(a)));
    while (std::pow(a, k0) < phi0) ++k0;
    while (k0 > std::numeric_limits<int>::min() && std::pow(a, k0 - 1) >= phi0) --k0;
    fam.k0 = k0;
    fam.nodes.push_back(SparseNode{q0, -1, 0, k0, phi0, CellMask(f.root(), f.level())});

    std::vector<int> frontier{0};
    for (int k = k0 + 1; !frontier.empty(); ++k) {
        double threshold = std::pow(a, k);
        std::vector<int> next;
        for (int pidx : frontier) {
            const DyadicCube parent_cube = fam.nodes[static_cast<std::size_t>(pidx)].cube;
            // maximal dyadic Q inside (or equal to) the parent with phi > a^k;
            // equality with the parent is impossible because a > 2^n
            std::vector<DyadicCube> stack{parent_cube};
            while (!stack.empty()) {
                DyadicCube q = stack.back();
                stack.pop_back();
                double v = phi(q);
                if (v > threshold) {
                    // the parent itself re-qualifying at the next level would
                    // break the disjointness argument; a > 2^n rules it out
                    if (q.path_string() == parent_cube.path_string())
                        throw ParameterError(
                            "build_sparse_levelset: duplicate cube across levels");
                    int self = static_cast<int>(fam.nodes.size());
                    fam.nodes.push_back(
                        SparseNode{q, pidx, 0, k, v, CellMask(f.root(), f.level())});
                    next.push_back(self);
                } else if (q.depth() < f.level()) {
                    for (int c = (1 << n) - 1; c >= 0; --c) stack.push_back(q.child(c));
                }
            }
        }
        frontier = std::move(next);
    }
    return fam;
}

// ---------------------------------------------------------------------------
// carving and verification
// ---------------------------------------------------------------------------

/// Installs E_S = S minus the union of its family children and checks
/// w(E_S) >= eta * w(S) with eta = 1 - C_w * rho_eff^{-delta_w}, where
/// rho_eff is the build's rho (oscillation) or a * 2^{-n} (level set).
inline SparseFamily carve_disjoint_sets(SparseFamily fam, const GridFunction& w, double C_w,
                                        double delta_w) {
    if (!(w.root() == fam.root) || w.level() != fam.grid_level)
        throw ParameterError("carve_disjoint_sets: weight grid does not match the family");
    double rho_eff = fam.variant == SparseFamily::Variant::Oscillation
                         ? fam.rho
                         : fam.a * std::ldexp(1.0, -w.dim());
    double eta = 1.0 - C_w * std::pow(rho_eff, -delta_w);
    if (!(eta > 0))
        throw ParameterError("carve_disjoint_sets: C rho^{-delta} >= 1, no sparsity margin");
    fam.eta = eta;

    for (int i = 0; i < static_cast<int>(fam.nodes.size()); ++i) {
        auto& node = fam.nodes[static_cast<std::size_t>(i)];
        CellMask e(fam.root, fam.grid_level);
        e.set_cube(node.cube, w, true);
        for (int c : fam.children_of(i))
            e.set_cube(fam.nodes[static_cast<std::size_t>(c)].cube, w, false);
        double we = weighted_measure(w, e);
        double wq = cube_weight(w, node.cube);
        if (we + 1e-15 * wq < eta * wq)
            throw SparsityViolation(node.cube.path_string(),
                                    "carve_disjoint_sets: w(E_S) < eta w(S) at cube '" +
                                        node.cube.path_string() + "'");
        node.e_mask = std::move(e);
    }
    // pairwise disjointness
    for (std::size_t i = 0; i < fam.nodes.size(); ++i)
        for (std::size_t j = i + 1; j < fam.nodes.size(); ++j)
            if (fam.nodes[i].e_mask.intersects(fam.nodes[j].e_mask))
                throw SparsityViolation(fam.nodes[i].cube.path_string(),
                                        "carve_disjoint_sets: E-masks overlap");
    fam.carved = true;
    return fam;
}

/// Sum over family cubes containing each cell of kappa(S).
inline GridFunction sparse_operator(const SparseFamily& fam, const GridFunction& f) {
    if (!(f.root() == fam.root) || f.level() != fam.grid_level)
        throw ParameterError("sparse_operator: grid does not match the family");
    std::vector<double> out(static_cast<std::size_t>(f.cell_count()), 0.0);
    for (const auto& node : fam.nodes) {
        std::array<std::int64_t, kMaxDim> lo, hi;
        f.cell_range(node.cube, lo, hi);
        CellMask::for_box(f, lo, hi,
                          [&](std::int64_t idx) { out[static_cast<std::size_t>(idx)] += node.kappa; });
    }
    return GridFunction(f.root(), f.level(), std::move(out));
}

/// |f - f_{Q0}| <= rho 2^n * (sparse operator of the oscillation family),
/// checked at every cell.
inline VerificationReport verify_pointwise_domination(const GridFunction& f, const GridFunction& w,
                                                      double C_w, double delta_w, double rho) {
    if (!(C_w * std::pow(rho, -delta_w) < 1))
        throw ParameterError("verify_pointwise_domination: C rho^{-delta} must be < 1");
    auto fam = carve_disjoint_sets(build_sparse_oscillation(f, DyadicCube(f.root()), rho), w, C_w,
                                   delta_w);
    auto field = sparse_operator(fam, f);
    double f0 = average(f, DyadicCube(f.root()));
    double factor = rho * std::ldexp(1.0, f.dim());

    VerificationReport rep;
    rep.theorem = "SPARSE1";
    double worst = std::numeric_limits<double>::infinity();
    std::int64_t worst_cell = 0;
    for (std::int64_t i = 0; i < f.cell_count(); ++i) {
        double slack = factor * field[i] - std::fabs(f[i] - f0);
        if (slack < worst) {
            worst = slack;
            worst_cell = i;
        }
    }
    VerificationInstance inst;
    inst.label = "pointwise";
    inst.lhs = std::fabs(f[worst_cell] - f0);
    inst.rhs = factor * field[worst_cell];
    inst.pass = worst >= -1e-12;
    if (!inst.pass) inst.witness = json{{"cell", worst_cell}};
    rep.measured_constant = worst;  // worst slack; nonnegative means verified
    rep.metadata = json{{"rho", rho}, {"eta", fam.eta}, {"cubes", fam.nodes.size()}};
    rep.add(std::move(inst));
    return rep;
}

/// (M^d_alpha f)^p <= a^{2p} * sum over family cubes of chi_Q avg_Q^p,
/// checked at every cell.
inline VerificationReport verify_maximal_domination(const GridFunction& f, double alpha, double p,
                                                    double a, const GridFunction& sigma,
                                                    double C_sigma, double delta_sigma) {
    if (!(p >= 1)) throw ParameterError("verify_maximal_domination: need p >= 1");
    auto fam = build_sparse_levelset(f, alpha, DyadicCube(f.root()), a, C_sigma, delta_sigma);
    auto m = fractional_maximal(f, alpha, DyadicCube(f.root()));

    std::vector<double> rhs(static_cast<std::size_t>(f.cell_count()), 0.0);
    for (const auto& node : fam.nodes) {
        double term = std::pow(node.avg, p);
        std::array<std::int64_t, kMaxDim> lo, hi;
        f.cell_range(node.cube, lo, hi);
        CellMask::for_box(f, lo, hi,
                          [&](std::int64_t idx) { rhs[static_cast<std::size_t>(idx)] += term; });
    }
    double factor = std::pow(a, 2 * p);

    VerificationReport rep;
    rep.theorem = "SPARSE2";
    double worst = std::numeric_limits<double>::infinity();
    std::int64_t worst_cell = 0;
    for (std::int64_t i = 0; i < f.cell_count(); ++i) {
        double lhs = std::pow(m.field[i], p);
        double slack = factor * rhs[static_cast<std::size_t>(i)] - lhs;
        if (slack < worst) {
            worst = slack;
            worst_cell = i;
        }
    }
    VerificationInstance inst;
    inst.label = "maximal";
    inst.lhs = std::pow(m.field[worst_cell], p);
    inst.rhs = factor * rhs[static_cast<std::size_t>(worst_cell)];
    inst.pass = worst >= -1e-12 * std::max(1.0, inst.lhs);
    if (!inst.pass) inst.witness = json{{"cell", worst_cell}};
    rep.measured_constant = worst;
    rep.metadata = json{{"a", a}, {"alpha", alpha}, {"p", p}, {"k0", fam.k0},
                        {"cubes", fam.nodes.size()}};
    rep.add(std::move(inst));
    return rep;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

inline json sparse_family_to_json(const SparseFamily& fam) {
    json j;
    j["variant"] = fam.variant == SparseFamily::Variant::Oscillation ? "oscillation" : "levelset";
    j["root_center"] = std::vector<double>(fam.root.center.begin(),
                                           fam.root.center.begin() + fam.root.dim);
    j["root_half_side"] = fam.root.half_side;
    j["n"] = fam.root.dim;
    j["L"] = fam.grid_level;
    j["rho"] = fam.rho;
    j["a"] = fam.a;
    j["alpha"] = fam.alpha;
    j["k0"] = fam.k0;
    j["eta"] = fam.eta;
    j["carved"] = fam.carved;
    j["nodes"] = json::array();
    for (const auto& node : fam.nodes) {
        json nj;
        std::vector<int> path;
        for (char c : node.cube.path_string()) path.push_back(c - '0');
        nj["path"] = path;
        nj["parent"] = node.parent;
        nj["kappa"] = node.kappa;
        nj["k"] = node.level_k;
        nj["avg"] = node.avg;
        if (fam.carved) nj["e_mask"] = mask_to_json(node.e_mask);
        j["nodes"].push_back(std::move(nj));
    }
    return j;
}

inline SparseFamily sparse_family_from_json(const json& j) {
    SparseFamily fam;
    fam.variant = j.at("variant") == "oscillation" ? SparseFamily::Variant::Oscillation
                                                   : SparseFamily::Variant::LevelSet;
    int n = j.at("n").get<int>();
    Point c{0, 0, 0};
    auto cc = j.at("root_center").get<std::vector<double>>();
    for (int a = 0; a < n; ++a) c[a] = cc[static_cast<std::size_t>(a)];
    fam.root = Cube(n, c, j.at("root_half_side").get<double>());
    fam.grid_level = j.at("L").get<int>();
    fam.rho = j.at("rho").get<double>();
    fam.a = j.at("a").get<double>();
    fam.alpha = j.at("alpha").get<double>();
    fam.k0 = j.at("k0").get<int>();
    fam.eta = j.at("eta").get<double>();
    fam.carved = j.at("carved").get<bool>();
    for (const auto& nj : j.at("nodes")) {
        DyadicCube q(fam.root);
        for (int step : nj.at("path").get<std::vector<int>>()) q = q.child(step);
        SparseNode node{q,
                        nj.at("parent").get<int>(),
                        nj.at("kappa").get<double>(),
                        nj.at("k").get<int>(),
                        nj.at("avg").get<double>(),
                        fam.carved ? mask_from_json(fam.root, fam.grid_level, nj.at("e_mask"))
                                   : CellMask(fam.root, fam.grid_level)};
        fam.nodes.push_back(std::move(node));
    }
    return fam;
}

}  // namespace sparsep
