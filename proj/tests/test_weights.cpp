#include <doctest.h>

#include <random>

#include "sparsep/weights.hpp"

using namespace sparsep;

namespace {

Cube unit_root(int n) {
    Point c{0, 0, 0};
    for (int a = 0; a < n; ++a) c[a] = 0.5;
    return Cube(n, c, 0.5);
}

GridFunction grid1d(std::vector<double> vals, int level) {
    return GridFunction(unit_root(1), level, std::move(vals));
}

GridFunction random_weight(int n, int level, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.05, 5.0);
    Cube root = unit_root(n);
    std::int64_t count = 1;
    for (int a = 0; a < n; ++a) count <<= level;
    std::vector<double> vals(static_cast<std::size_t>(count));
    for (auto& v : vals) v = dist(rng);
    return GridFunction(root, n == 1 ? level : level, std::move(vals));
}

// exhaustive oracle: max over dyadic cubes and ALL nonempty cell subsets
double brute_force_ainfty(const GridFunction& w, double delta) {
    double best = 0;
    std::vector<DyadicCube> stack{DyadicCube(w.root())};
    while (!stack.empty()) {
        DyadicCube q = stack.back();
        stack.pop_back();
        std::array<std::int64_t, kMaxDim> lo, hi;
        w.cell_range(q, lo, hi);
        std::vector<double> vals;
        CellMask::for_box(w, lo, hi, [&](std::int64_t idx) { vals.push_back(w[idx]); });
        const int k = static_cast<int>(vals.size());
        double total = 0;
        for (double v : vals) total += v;
        for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
            double we = 0;
            int cnt = 0;
            for (int i = 0; i < k; ++i)
                if (mask & (1u << i)) {
                    we += vals[static_cast<std::size_t>(i)];
                    ++cnt;
                }
            best = std::max(best, (we / total) / std::pow(double(cnt) / k, delta));
        }
        if (q.depth() < w.level())
            for (int c = 0; c < (1 << w.dim()); ++c) stack.push_back(q.child(c));
    }
    return best;
}

}  // namespace

TEST_CASE("weight positivity gate") {
    CHECK_NOTHROW(Weight(grid1d({1, 2}, 1)));
    CHECK_THROWS_AS(Weight(grid1d({1, 0}, 1)), DegenerateWeightError);
    CHECK_THROWS_WITH_AS(Weight(grid1d({1, -1}, 1)), "weight is not positive at cell 1",
                         DegenerateWeightError);
}

TEST_CASE("ainfty estimate: hand values") {
    // constant weight: every ratio is (m/K)/(m/K)^delta <= 1, attained at m=K
    auto one = grid1d({1, 1, 1, 1}, 2);
    CHECK(estimate_ainfty(one, 1.0).C == doctest::Approx(1.0).epsilon(1e-14));

    // scaled constant weight stays at 1
    auto scaled = one.map([](double v) { return 17.25 * v; });
    CHECK(estimate_ainfty(scaled, 1.0).C == doctest::Approx(1.0).epsilon(1e-14));

    // (1,3): extremal set is the heavy right cell of the root
    auto w = grid1d({1, 3}, 1);
    auto est = estimate_ainfty(w, 1.0);
    CHECK(est.C == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(est.witness.depth() == 0);
    CHECK(est.witness_cells == 1);
    CHECK(est.witness_mask.popcount() == 1);
    CHECK(est.witness_mask.test(1));

    CHECK_THROWS_AS(estimate_ainfty(w, 0.0), ParameterError);
    CHECK_THROWS_AS(estimate_ainfty(w, 1.5), ParameterError);
    CHECK_THROWS_AS(estimate_ainfty(w, -0.5), ParameterError);
}

TEST_CASE("ainfty estimate matches exhaustive subset enumeration") {
    for (int level : {1, 2, 3}) {
        for (std::uint64_t seed : {11u, 12u, 13u, 14u}) {
            auto w = random_weight(1, level, seed);
            for (double delta : {1.0, 0.5, 0.25}) {
                double brute = brute_force_ainfty(w, delta);
                auto est = estimate_ainfty(w, delta);
                CHECK(est.C == doctest::Approx(brute).epsilon(1e-12));
                // the witness attains the reported constant
                double wq = cube_weight(w, est.witness);
                double we = 0;
                for (std::int64_t i = 0; i < w.cell_count(); ++i)
                    if (est.witness_mask.test(i)) we += w[i] * w.cell_volume();
                double frac = est.witness_mask.measure() / est.witness.volume();
                CHECK((we / wq) / std::pow(frac, delta) ==
                      doctest::Approx(est.C).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("ainfty estimate: scale invariance and delta monotonicity") {
    auto w = random_weight(2, 3, 99);
    auto scaled = w.map([](double v) { return 7.3 * v; });
    for (double delta : {1.0, 0.5, 0.25}) {
        auto a = estimate_ainfty(w, delta);
        auto b = estimate_ainfty(scaled, delta);
        CHECK(a.C == doctest::Approx(b.C).epsilon(1e-12));
        CHECK(a.witness.path_string() == b.witness.path_string());
        CHECK(a.witness_cells == b.witness_cells);
    }
    CHECK(estimate_ainfty(w, 0.25).C <= estimate_ainfty(w, 0.5).C);
    CHECK(estimate_ainfty(w, 0.5).C <= estimate_ainfty(w, 1.0).C);
}

TEST_CASE("two-weight testing constant") {
    // n=1, w=sigma=1, p=q=2, alpha=1: per-cube value is |Q|^2, max 1 at the root
    auto one = grid1d({1, 1, 1, 1}, 2);
    auto rep = two_weight_constant(one, one, 2, 2, 1.0, DyadicCube(one.root()));
    CHECK(rep.K == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(rep.cube.depth() == 0);

    // alpha=0, p=q=2: value = |Q|^{-2} |Q| |Q| = 1 for every cube -> K = 1
    auto rep0 = two_weight_constant(one, one, 2, 2, 0.0, DyadicCube(one.root()));
    CHECK(rep0.K == doctest::Approx(1.0).epsilon(1e-14));

    CHECK_THROWS_AS(two_weight_constant(one, one, 1.0, 2, 0, DyadicCube(one.root())),
                    ParameterError);
    CHECK_THROWS_AS(two_weight_constant(one, one, 3, 2, 0, DyadicCube(one.root())),
                    ParameterError);
    CHECK_THROWS_AS(two_weight_constant(one, one, 2, 2, 1.5, DyadicCube(one.root())),
                    ParameterError);
    CHECK_THROWS_AS(two_weight_constant(one, one, 2, 2, -0.1, DyadicCube(one.root())),
                    ParameterError);
}

TEST_CASE("two-weight constant: independent scan oracle, scaling, subtree monotonicity") {
    auto w = random_weight(1, 4, 21);
    auto sigma = random_weight(1, 4, 22);
    double p = 2.5, q = 3.0, alpha = 0.25;
    auto rep = two_weight_constant(w, sigma, p, q, alpha, DyadicCube(w.root()));

    // direct-summation oracle over every dyadic cube
    double best = 0;
    std::vector<DyadicCube> stack{DyadicCube(w.root())};
    while (!stack.empty()) {
        DyadicCube cur = stack.back();
        stack.pop_back();
        std::array<std::int64_t, kMaxDim> lo, hi;
        w.cell_range(cur, lo, hi);
        double ws = 0, ss = 0;
        CellMask::for_box(w, lo, hi, [&](std::int64_t i) {
            ws += w[i] * w.cell_volume();
            ss += sigma[i] * sigma.cell_volume();
        });
        best = std::max(best, std::pow(cur.volume(), -(1 - alpha / 1.0) * p) *
                                  std::pow(ws, p / q) * std::pow(ss, p - 1));
        if (cur.depth() < w.level())
            for (int c = 0; c < 2; ++c) stack.push_back(cur.child(c));
    }
    CHECK(rep.K == doctest::Approx(best).epsilon(1e-12));

    // scaling w by c scales K by c^{p/q}
    auto w3 = w.map([](double v) { return 3.0 * v; });
    auto rep3 = two_weight_constant(w3, sigma, p, q, alpha, DyadicCube(w.root()));
    CHECK(rep3.K == doctest::Approx(rep.K * std::pow(3.0, p / q)).epsilon(1e-12));

    // restricting the scan to a subtree never increases K
    for (int c = 0; c < 2; ++c) {
        auto sub = two_weight_constant(w, sigma, p, q, alpha, DyadicCube(w.root()).child(c));
        CHECK(sub.K <= rep.K * (1 + 1e-14));
    }
}

TEST_CASE("doubling constant over a domain") {
    // n=1, Omega=(0,1), w=(1,3), Q=[0.25,0.75): masses 1.0 and 2.0, ratio 2
    auto w = grid1d({1, 3}, 1);
    auto dom = DomainRaster::rasterize(DomainSpec::parse("box(0,1)", 1), unit_root(1), 2);
    auto rep = doubling_constant(w, dom, {Cube(1, Point{0.5, 0, 0}, 0.25)});
    CHECK(rep.constant == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(rep.flagged.empty());

    // w = 1, Q well inside with 2Q inside: volume ratio 2^n
    Cube root2 = unit_root(2);
    GridFunction one2(root2, 4, std::vector<double>(256, 1.0));
    auto dom2 = DomainRaster::rasterize(DomainSpec::parse("box(0,0,1,1)", 2), root2, 4);
    auto rep2 = doubling_constant(one2, dom2, {Cube(2, Point{0.5, 0.5, 0}, 0.1)});
    CHECK(rep2.constant == doctest::Approx(4.0).epsilon(1e-12));

    // huge cube swallowing the whole domain: ratio exactly 1
    auto rep3 = doubling_constant(one2, dom2, {Cube(2, Point{0.5, 0.5, 0}, 2.0)});
    CHECK(rep3.constant == doctest::Approx(1.0).epsilon(1e-14));

    // degenerate trial (no overlap with the root grid) is flagged and skipped
    auto rep4 = doubling_constant(w, dom,
                                  {Cube(1, Point{5.0, 0, 0}, 0.1), Cube(1, Point{0.5, 0, 0}, 0.25)});
    CHECK(rep4.flagged.size() == 1);
    CHECK(rep4.constant == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("distance weight samplers") {
    DistanceTarget origin1;
    origin1.kind = DistanceTarget::Kind::Points;
    origin1.dim = 1;
    origin1.points = {Point{0, 0, 0}};

    CHECK(distance_weight(origin1, 0.0)(Point{0.7, 0, 0}) == 1.0);
    CHECK(distance_weight(origin1, 1.0)(Point{0.375, 0, 0}) == doctest::Approx(0.375));
    CHECK_THROWS_AS(distance_weight(origin1, -1.0)(Point{0, 0, 0}), DegenerateWeightError);

    DistanceTarget xaxis;
    xaxis.kind = DistanceTarget::Kind::Hyperplane;
    xaxis.dim = 2;
    xaxis.axis = 1;
    xaxis.offset = 0;
    CHECK(distance_weight(xaxis, -0.5)(Point{0.3, 0.25, 0}) == doctest::Approx(2.0).epsilon(1e-14));

    auto dom = DomainRaster::rasterize(DomainSpec::parse("box(0,1)", 1), unit_root(1), 2);
    DistanceTarget bdry;
    bdry.kind = DistanceTarget::Kind::Boundary;
    bdry.dim = 1;
    bdry.domain = &dom;
    CHECK(distance_weight(bdry, 1.0)(Point{0.3, 0, 0}) == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("aikawa condition: closed-form oracles") {
    DistanceTarget origin1;
    origin1.kind = DistanceTarget::Kind::Points;
    origin1.dim = 1;
    origin1.points = {Point{0, 0, 0}};

    // gamma = 0: both sides are 1
    auto flat = aikawa_check(origin1, 0.0, {0.5, 0.25}, {Point{0, 0, 0}}, 1, 6);
    CHECK(flat.constant == doctest::Approx(1.0).epsilon(1e-14));

    // n=1, E={0}, gamma=-1/2: exact average over (-r,r) is 2 r^{-1/2}
    auto a1 = aikawa_check(origin1, -0.5, {1.0, 0.5, 0.25}, {Point{0, 0, 0}}, 1, 10);
    CHECK(a1.constant == doctest::Approx(2.0).epsilon(0.01));
    CHECK(a1.constant < 2.0);  // midpoint quadrature underestimates the singular mass

    // n=2, E={origin}, gamma=-1: exact ratio is 2 ln(1+sqrt 2)
    DistanceTarget origin2 = origin1;
    origin2.dim = 2;
    auto a2 = aikawa_check(origin2, -1.0, {0.5}, {Point{0, 0, 0}}, 2, 10);
    CHECK(a2.constant == doctest::Approx(2.0 * std::log(1.0 + std::sqrt(2.0))).epsilon(0.02));

    // quadrature node landing exactly on E is flagged, not folded in
    auto sing = aikawa_check(origin1, -0.5, {0.25}, {Point{0, 0, 0}}, 1, 0);
    CHECK(sing.flagged.size() == 1);
    CHECK(sing.constant == 0.0);

    CHECK_THROWS_AS(aikawa_check(origin1, -1.0, {0.5}, {Point{0, 0, 0}}, 1, 4), ParameterError);
    CHECK_THROWS_AS(aikawa_check(origin1, 0.5, {0.5}, {Point{0, 0, 0}}, 1, 4), ParameterError);
}

TEST_CASE("reverse Holder ratio") {
    auto c = grid1d({2, 2, 2, 2}, 2);
    for (double beta : {1.0, 2.0, 5.0})
        CHECK(reverse_holder_check(c, DyadicCube(c.root()), beta).constant ==
              doctest::Approx(1.0).epsilon(1e-14));

    auto w = grid1d({1, 3}, 1);
    CHECK(reverse_holder_check(w, DyadicCube(w.root()), 1.0).constant ==
          doctest::Approx(2.0).epsilon(1e-14));
    CHECK(reverse_holder_check(w, DyadicCube(w.root()), 2.0).constant ==
          doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
    CHECK_THROWS_AS(reverse_holder_check(w, DyadicCube(w.root()), 0.5), ParameterError);
}

TEST_CASE("half-Harnack ratios") {
    Cube root(2, Point{0, 0, 0}, 1.0);  // (-1,1)^2
    auto dom = DomainRaster::rasterize(DomainSpec::parse("box(-1,-1,1,1)", 2), root, 6);

    GridFunction one(root, 6, std::vector<double>(4096, 1.0));
    auto repc = half_harnack_check(one, dom, 2.0, 2.0, {Cube(2, Point{0, 0, 0}, 0.1)});
    CHECK(repc.constant == doctest::Approx(1.0).epsilon(1e-12));
    auto repc4 = half_harnack_check(one, dom, 4.0, 2.0, {Cube(2, Point{0, 0, 0}, 0.1)});
    CHECK(repc4.constant == doctest::Approx(1.0).epsilon(1e-12));

    // parabolic supersolution weight: ratio near 1, comfortably under 1.5
    auto w = build_grid_function(root, 6, [](const Point& x) {
        return 3.0 - x[0] * x[0] - x[1] * x[1];
    });
    auto repw = half_harnack_check(w, dom, 2.0, 2.0,
                                   {Cube(2, Point{0, 0, 0}, 0.1), Cube(2, Point{0.2, -0.1, 0}, 0.15)});
    CHECK(repw.constant > 1.0);
    CHECK(repw.constant < 1.5);

    // 4Q escaping the domain is an admissibility error
    CHECK_THROWS_AS(half_harnack_check(one, dom, 2.0, 2.0, {Cube(2, Point{0.8, 0, 0}, 0.1)}),
                    ParameterError);
    // exponent constraint beta(n-p) < n(p-1)
    CHECK_THROWS_AS(half_harnack_check(one, dom, 3.0, 1.2, {Cube(2, Point{0, 0, 0}, 0.1)}),
                    ParameterError);
}

namespace {

TestBump tensor_bump(const Cube& support, const std::string& label) {
    // eta = prod (1 - t_a^2)^2 with t = (x - c)/h, C^1 and zero on the boundary
    int n = support.dim;
    auto t_of = [support, n](const Point& x, int a) {
        return (x[a] - support.center[a]) / support.half_side;
    };
    TestBump b;
    b.support = support;
    b.label = label;
    b.value = [t_of, n](const Point& x) {
        double v = 1;
        for (int a = 0; a < n; ++a) {
            double t = t_of(x, a);
            double f = 1 - t * t;
            v *= f * f;
        }
        return v;
    };
    b.gradient = [t_of, n, support](const Point& x) {
        Point g{0, 0, 0};
        for (int a = 0; a < n; ++a) {
            double part = 1;
            for (int bax = 0; bax < n; ++bax) {
                double t = t_of(x, bax);
                double f = 1 - t * t;
                part *= (bax == a) ? (-4 * t * f / support.half_side) : f * f;
            }
            g[a] = part;
        }
        return g;
    };
    return b;
}

}  // namespace

TEST_CASE("supersolution quadrature check") {
    Cube root(2, Point{0, 0, 0}, 1.0);
    auto dom = DomainRaster::rasterize(DomainSpec::parse("box(-1,-1,1,1)", 2), root, 4);
    auto bump = tensor_bump(Cube(2, Point{0.1, -0.2, 0}, 0.3), "b0");

    // constant u: the form vanishes identically
    auto zero = supersolution_check([](const Point&) { return Point{0, 0, 0}; }, 2.0, dom, 6,
                                    {bump});
    CHECK(zero.constant == 0.0);

    // u = 3 - |x|^2, p = 2: integral of grad u . grad eta equals 4 * integral of eta
    auto rep = supersolution_check([](const Point& x) { return Point{-2 * x[0], -2 * x[1], 0}; },
                                   2.0, dom, 8, {bump});
    // midpoint-quadrature value of 4 * integral of eta over the support
    double h = bump.support.side() / 256.0, ref = 0;
    for (int i = 0; i < 256; ++i)
        for (int j = 0; j < 256; ++j) {
            Point x{bump.support.lo(0) + (i + 0.5) * h, bump.support.lo(1) + (j + 0.5) * h, 0};
            ref += 4 * bump.value(x) * h * h;
        }
    CHECK(rep.constant > 0);
    CHECK(rep.constant == doctest::Approx(ref).epsilon(0.01));

    // support escaping the domain
    auto outside = tensor_bump(Cube(2, Point{0.9, 0, 0}, 0.3), "out");
    CHECK_THROWS_AS(supersolution_check([](const Point&) { return Point{0, 0, 0}; }, 2.0, dom, 4,
                                        {outside}),
                    SupportError);
}

TEST_CASE("weight spec strings: parse, evaluate, round trip") {
    auto c = parse_weight_spec("const:1.0", 2);
    CHECK(c.sampler(Point{0.3, 0.9, 0}) == 1.0);
    CHECK(parse_weight_spec(c.text, 2).text == c.text);

    auto dp = parse_weight_spec("dist:point(0,0):gamma=-1.0", 2);
    CHECK(dp.sampler(Point{0.3, 0.4, 0}) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(parse_weight_spec(dp.text, 2).text == dp.text);

    auto dh = parse_weight_spec("dist:hyperplane(1,0):gamma=-0.5", 2);
    CHECK(dh.sampler(Point{0.3, 0.25, 0}) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(parse_weight_spec(dh.text, 2).text == dh.text);

    auto dom = DomainRaster::rasterize(DomainSpec::parse("box(0,1)", 1), unit_root(1), 2);
    auto db = parse_weight_spec("dist:boundary:gamma=-0.5", 1, &dom);
    CHECK(db.sampler(Point{0.25, 0, 0}) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(parse_weight_spec(db.text, 1, &dom).text == db.text);

    auto par = parse_weight_spec("parabola:p=2:c=3.0", 2);
    CHECK(par.sampler(Point{0.5, 0.5, 0}) == doctest::Approx(2.5).epsilon(1e-14));
    auto g = par.gradient(Point{0.5, 0.5, 0});
    CHECK(g[0] == doctest::Approx(-1.0));
    CHECK(g[1] == doctest::Approx(-1.0));
    CHECK(parse_weight_spec(par.text, 2).text == par.text);

    auto fund = parse_weight_spec("fundamental:p=1.5:c=1:M=2", 2);
    CHECK(fund.sampler(Point{0.25, 0, 0}) == doctest::Approx(2.0));   // capped
    CHECK(fund.sampler(Point{2.0, 0, 0}) == doctest::Approx(0.5));    // c r^{-1}
    auto gf = fund.gradient(Point{2.0, 0, 0});
    CHECK(gf[0] == doctest::Approx(-0.25));
    CHECK(gf[1] == doctest::Approx(0.0));
    CHECK(fund.gradient(Point{0.25, 0, 0})[0] == 0.0);  // flat where capped
    CHECK(parse_weight_spec(fund.text, 2).text == fund.text);

    CHECK_THROWS_AS(parse_weight_spec("const:-1", 1), ParameterError);
    CHECK_THROWS_AS(parse_weight_spec("bogus:1", 1), ParameterError);
    CHECK_THROWS_AS(parse_weight_spec("dist:boundary:gamma=-1", 1), ParameterError);
    CHECK_THROWS_AS(parse_weight_spec("dist:point(0):gamma=1", 2), ParameterError);
    CHECK_THROWS_AS(parse_weight_spec("fundamental:p=2:c=1:M=2", 2), ParameterError);
}
