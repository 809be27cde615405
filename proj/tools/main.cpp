#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "sparsep/verify.hpp"

using namespace sparsep;

namespace {

int write_output(const std::string& out, const std::string& text) {
    if (out.empty()) {
        std::cout << text << "\n";
        return 0;
    }
    std::ofstream os(out);
    if (!os) {
        std::cerr << "cannot open output file: " << out << "\n";
        return 2;
    }
    os << text << "\n";
    return 0;
}

json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dyadic sparse-family and weighted Poincare inequality verifier"};
    app.require_subcommand(1);

    // verify
    std::string cfg_path, out_path, format = "json";
    std::uint64_t seed_override = 0;
    int level_override = 0;
    bool have_seed = false;
    auto* verify = app.add_subcommand("verify", "run a theorem verification suite");
    verify->add_option("--config", cfg_path, "experiment config JSON")->required();
    verify->add_option("--out", out_path, "write the report here instead of stdout");
    verify->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { have_seed = true; });
    verify->add_option("--level", level_override, "override the grid level");
    verify->add_option("--format", format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));

    // sparse
    std::string fn_path, dump_path;
    double rho = 2;
    auto* sparse = app.add_subcommand("sparse", "build an oscillation sparse family");
    sparse->add_option("--function", fn_path, "grid function JSON")->required();
    sparse->add_option("--rho", rho, "stopping threshold > 1");
    sparse->add_option("--dump", dump_path, "write the family JSON here");

    // whitney
    std::string dom_spec, wout;
    int wn = 2, wl = 5;
    double c_adj = 1.0 / 16.0;
    auto* whitney = app.add_subcommand("whitney", "decompose a domain and build chains");
    whitney->add_option("--domain", dom_spec, "domain spec text")->required();
    whitney->add_option("--n", wn, "dimension");
    whitney->add_option("--level", wl, "raster level");
    whitney->add_option("--c-adj", c_adj, "chain adjacency threshold");
    whitney->add_option("--out", wout, "output path");

    // weights
    std::string wspec_text, wop = "ainfty", wwout;
    int ww_n = 1, ww_l = 6;
    double ww_delta = 1, ww_beta = 2;
    auto* weights = app.add_subcommand("weights", "estimate weight-class constants");
    weights->add_option("--spec", wspec_text, "weight spec text")->required();
    weights->add_option("--op", wop, "ainfty or reverse-holder")
        ->check(CLI::IsMember({"ainfty", "reverse-holder"}));
    weights->add_option("--n", ww_n, "dimension");
    weights->add_option("--level", ww_l, "grid level");
    weights->add_option("--delta", ww_delta, "A-infinity exponent");
    weights->add_option("--beta", ww_beta, "reverse-Holder exponent");
    weights->add_option("--out", wwout, "output path");

    // report
    std::string rin, rformat = "csv", rout;
    auto* report = app.add_subcommand("report", "convert a report between formats");
    report->add_option("--in", rin, "report JSON path")->required();
    report->add_option("--format", rformat, "target format")->check(CLI::IsMember({"csv"}));
    report->add_option("--out", rout, "output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) {
            ExperimentConfig cfg = ExperimentConfig::from_json(load_json(cfg_path));
            if (have_seed) cfg.seed = seed_override;
            if (level_override > 0) cfg.L = level_override;
            cfg.validate();
            VerificationReport rep = run_experiment(cfg);
            int rc = write_output(out_path,
                                  format == "csv" ? rep.to_csv() : rep.to_json().dump(2));
            if (rc != 0) return rc;
            if (!rep.passed()) {
                std::cerr << rep.theorem << ": " << rep.status;
                for (const auto& inst : rep.instances)
                    if (!inst.pass) {
                        std::cerr << " [" << inst.label << " lhs=" << inst.lhs
                                  << " rhs=" << inst.rhs << "]";
                        break;
                    }
                std::cerr << "\n";
                return 1;
            }
            return 0;
        }
        if (sparse->parsed()) {
            GridFunction f = gridfunction_from_json(load_json(fn_path));
            SparseFamily fam = build_sparse_oscillation(f, DyadicCube(f.root()), rho);
            return write_output(dump_path, sparse_family_to_json(fam).dump(2));
        }
        if (whitney->parsed()) {
            Point c{0.5, 0.5, 0.5};
            Cube root(wn, c, 0.5);
            DomainRaster dom = DomainRaster::rasterize(DomainSpec::parse(dom_spec, wn), root, wl);
            auto wd = whitney_decompose(dom);
            auto cd = build_chains(wd, c_adj);
            json j;
            j["whitney"] = whitney_to_json(wd);
            j["chains"] = chains_to_json(cd);
            j["boman_N"] = boman_constant(cd);
            return write_output(wout, j.dump(2));
        }
        if (weights->parsed()) {
            Point c{0.5, 0.5, 0.5};
            Cube root(ww_n, c, 0.5);
            auto spec = parse_weight_spec(wspec_text, ww_n, nullptr);
            GridFunction w = build_grid_function(root, ww_l, spec.sampler);
            json j;
            j["spec"] = spec.text;
            if (wop == "ainfty") {
                auto est = estimate_ainfty(w, ww_delta);
                j["C"] = est.C;
                j["delta"] = est.delta;
                j["witness"] = est.witness.path_string();
            } else {
                auto r = reverse_holder_check(w, DyadicCube(root), ww_beta);
                j["C"] = r.constant;
                j["beta"] = ww_beta;
            }
            return write_output(wwout, j.dump(2));
        }
        if (report->parsed()) {
            json j = load_json(rin);
            if (!j.contains("schema") || j.at("schema") != 1 || !j.contains("instances"))
                throw ConfigError("not a schema-1 report: " + rin);
            std::string csv = "theorem,label,lhs,rhs,pass\n";
            for (const auto& inst : j.at("instances")) {
                char line[256];
                std::snprintf(line, sizeof line, "%s,%s,%.17g,%.17g,%d\n",
                              j.at("theorem").get<std::string>().c_str(),
                              inst.at("label").get<std::string>().c_str(),
                              inst.at("lhs").get<double>(), inst.at("rhs").get<double>(),
                              inst.at("pass").get<bool>() ? 1 : 0);
                csv += line;
            }
            if (!csv.empty() && csv.back() == '\n') csv.pop_back();
            return write_output(rout, csv);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParameterError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
