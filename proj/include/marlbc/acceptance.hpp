#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "marlbc/runner.hpp"

namespace marlbc {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

/// "ACCEPTANCE <id> PASS|FAIL <name>: <detail>"
std::string format_result(const CriterionResult& r);

struct AcceptanceOptions {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::string work_dir = "acceptance_runs";
    bool reuse = true;  // load finished runs with identical config instead of retraining
    int jobs = 1;
    std::string unit_test_command;  // run by criterion 10 when set; must exit 0
    std::function<void(const std::string&)> log;
};

/// Criteria 1-12. Trained runs are shared between criteria and cached on disk.
class AcceptanceSuite {
public:
    explicit AcceptanceSuite(AcceptanceOptions options);

    CriterionResult evaluate(int id);
    std::vector<CriterionResult> evaluate(const std::vector<int>& ids);

    /// The scenario a criterion trains, with the suite's seeds applied.
    ScenarioConfig scenario(const std::string& preset_id) const;
    const RunResult& trained(const std::string& preset_id);

private:
    CriterionResult textbook_recovery();
    CriterionResult partial_vs_vfi();
    CriterionResult oracle_consistency();
    CriterionResult irf_agreement();
    CriterionResult ks_law_of_motion();
    CriterionResult ks_inequality();
    CriterionResult ks_mpc_shape();
    CriterionResult hetero_gini_ordering();
    CriterionResult hand_to_mouth();
    CriterionResult unit_suite();
    CriterionResult determinism();
    CriterionResult scalability();

    AcceptanceOptions options_;
    std::map<std::string, RunResult> runs_;
};

/// Criterion ids behind a figure id (fig3-left ... fig5-right, units,
/// determinism, all). Throws ConfigError for an unknown id.
std::vector<int> criteria_for_figure(const std::string& figure_id);
std::vector<std::string> figure_ids();

}  // namespace marlbc
