#pragma once

// The ten acceptance criteria as library calls, shared by `qfc verify` and
// the acceptance test binary.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qfc/config.hpp"
#include "qfc/scenario.hpp"

namespace qfc {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0;
};

struct AcceptanceOptions {
    unsigned threads = 0;
    std::uint64_t seed = 20240601;
    std::vector<int> only;  // empty: all criteria
};

inline constexpr int kCriterionCount = 10;

const char* criterion_name(int id);
CriterionResult run_criterion(int id, const Calibration& cal, const AcceptanceOptions& opt = {});
std::vector<CriterionResult> run_acceptance(const Calibration& cal, const AcceptanceOptions& opt = {},
                                            const std::function<void(const CriterionResult&)>& on_result = {});

// "[PASS] 3 efficiency calibration (0.0 s): ..."
std::string format_result(const CriterionResult& r);

// Scenario definitions behind the simulation-level criteria; the bundled manifest
// carries the same blocks.
std::vector<Scenario> reference_scenarios();
const Scenario& reference_scenario(const std::string& name);

}  // namespace qfc
