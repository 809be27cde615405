#pragma once

#include <string>
#include <vector>

#include "sparsep/io.hpp"

namespace sparsep {

struct VerificationInstance {
    std::string label;
    double lhs = 0;
    double rhs = 0;
    bool pass = true;
    json witness;  // empty unless the instance failed or carries a location
};

/// Machine-readable outcome of one theorem-verification run.
struct VerificationReport {
    std::string theorem;
    std::string status = "pass";  // pass | fail | inconclusive
    double theoretical_constant = 0;
    bool has_theoretical = false;
    double measured_constant = 0;
    std::vector<VerificationInstance> instances;
    json metadata;

    bool passed() const { return status == "pass"; }

    void add(VerificationInstance inst) {
        if (!inst.pass) status = "fail";
        instances.push_back(std::move(inst));
    }

    json to_json() const {
        json j;
        j["schema"] = 1;
        j["theorem"] = theorem;
        j["status"] = status;
        if (has_theoretical) j["theoretical_constant"] = theoretical_constant;
        j["measured_constant"] = measured_constant;
        j["instances"] = json::array();
        for (const auto& i : instances) {
            json ji;
            ji["label"] = i.label;
            ji["lhs"] = i.lhs;
            ji["rhs"] = i.rhs;
            ji["pass"] = i.pass;
            if (!i.witness.is_null()) ji["witness"] = i.witness;
            j["instances"].push_back(std::move(ji));
        }
        if (!metadata.is_null()) j["metadata"] = metadata;
        return j;
    }

    /// Flat table: theorem,label,lhs,rhs,pass
    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "theorem,label,lhs,rhs,pass\n";
        for (const auto& i : instances)
            os << theorem << "," << i.label << "," << i.lhs << "," << i.rhs << ","
               << (i.pass ? 1 : 0) << "\n";
        return os.str();
    }
};

}  // namespace sparsep
