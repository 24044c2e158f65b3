#pragma once
//! \file acceptance.hpp
//! The eleven acceptance criteria with their tolerances and runtime limits.

#include <cstdint>
#include <string>
#include <vector>

namespace critdiff {

struct Check {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation;  //!< "<=", ">=", "==" or "in" (then threshold is the low end, upper the high end)
    double upper = 0.0;
    bool pass = false;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    std::vector<Check> checks;
    double seconds = 0.0;
    double time_limit = 0.0;
    std::string error;  //!< set when the criterion threw

    bool numeric_pass() const;
    bool within_time() const { return seconds < time_limit; }
    bool pass() const { return error.empty() && numeric_pass() && within_time(); }
};

struct AcceptanceConfig {
    std::uint64_t seed = 20240917;
    unsigned threads = 0;
    std::vector<int> only;  //!< empty runs every criterion
};

inline constexpr int kNumCriteria = 11;

const char* criterion_name(int id);
//! Runs one criterion; exceptions are captured in CriterionResult::error.
CriterionResult run_criterion(int id, const AcceptanceConfig& cfg);
std::vector<CriterionResult> run_acceptance(const AcceptanceConfig& cfg);

//! "PASS|FAIL  [id] name  (seconds / limit)  check=value rel threshold; ..."
std::string format_line(const CriterionResult& r);

}  // namespace critdiff
