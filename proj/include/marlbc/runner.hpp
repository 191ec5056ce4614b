#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "marlbc/agents.hpp"
#include "marlbc/config.hpp"
#include "marlbc/metrics.hpp"
#include "marlbc/oracle.hpp"

namespace marlbc {

/// Policy-vs-oracle comparison for single-household scenarios.
struct OracleReport {
    std::string kind;  // "analytic" (delta = 1) or "vfi"
    double k_star = 0.0;
    PolicyPoint rl_steady{};      // learned policy at (k*, z = 0)
    PolicyPoint oracle_steady{};  // oracle policy at (k*, z = 0)
    PolicyPoint rl_eval_mean{};   // mean learned actions over the final evaluation
    double path_gap_c_hat = 0.0;  // mean |gap| along a common oracle-driven path
    double path_gap_l = 0.0;
    std::vector<double> irf_rl;  // consumption IRF
    std::vector<double> irf_oracle;
    std::optional<double> euler_residual;

    double gap_c_hat() const;
    double gap_l() const;
    double irf_supgap() const;
};

/// The fixed-schema summary written to metrics.json.
struct SummaryMetrics {
    std::string scenario;
    std::vector<std::uint64_t> seeds;
    double gini_wealth = 0.0;
    double gini_capital = 0.0;
    OlsFit lom;
    std::optional<double> policy_gap_chat;
    std::optional<double> policy_gap_l;
    std::optional<double> irf_supgap;
    double best_eval_reward = 0.0;
    long steps = 0;

    /// Canonical JSON text (sorted keys, two-space indent, trailing newline).
    std::string to_json_text() const;
};

/// Extra statistics used by the acceptance suite; written to diagnostics.json.
struct Diagnostics {
    double mean_c_hat = 0.0;
    double mean_l = 0.0;
    double gini_wealth_initial = 0.0;
    std::map<std::string, double> group_mean_c_hat;
    std::vector<double> agent_mean_c_hat;
    std::vector<double> agent_mean_l;
    double agent_action_spread = 0.0;  // max pairwise gap of per-agent mean actions
    double mpc_spearman = 0.0;
    TercileSpread mpc_terciles;
    double mpc_flatness_high_wealth = 0.0;  // bins with mean wealth above 20
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::string dir;
    bool diverged = false;
    std::string error;
    long gradient_updates = 0;
    LearningCurve curve;
    EvalReport final_eval;
    EvalReport initial_eval;
    std::optional<OracleReport> oracle;
    SummaryMetrics metrics;
    Diagnostics diagnostics;
    MpcCurve mpc;
    std::shared_ptr<SharedPolicy> policy;  // kept only when requested
};

struct RunResult {
    ScenarioConfig config;
    std::string config_text;
    std::string config_hash;
    std::string dir;
    std::vector<SeedResult> seeds;
    std::optional<CurveBand> band;
    SummaryMetrics aggregate;  // mean over non-diverged seeds
};

struct RunOptions {
    std::string out_dir;  // empty: config.out_dir / config.id
    bool write = true;
    bool keep_policies = false;
    int jobs = 1;
    std::function<void(const std::string&)> log;
};

/// Group label of household i: "k<kappa>_l<lambda>".
std::string group_label(const EconomyParams& params, int i);

/// Summary metrics from evaluation streams. `oracle` may be null.
SummaryMetrics compute_metrics(const ScenarioConfig& config, std::uint64_t seed, const EvalReport& final_eval,
                               const LearningCurve& curve, const OracleReport* oracle);
Diagnostics compute_diagnostics(const ScenarioConfig& config, const EvalReport& final_eval,
                                const EvalReport& initial_eval, MpcCurve* mpc_out = nullptr);

/// VFI solution for the single-household economy, memoised per parameter set.
std::shared_ptr<const ValueFunction> solve_oracle(const EconomyParams& params, const Ar1Params& ar1);

/// Compares a policy with the analytic (delta = 1) or VFI oracle.
OracleReport compare_to_oracle(const ScenarioConfig& config, const PolicyFn& policy, const EvalReport& final_eval,
                               std::uint64_t seed);

/// Trains and evaluates every seed, then writes artifacts.
RunResult run(const ScenarioConfig& config, const RunOptions& options = {});

/// Rebuilds a RunResult from a finished run directory when its config.txt
/// matches `config` and every seed completed; no policies are loaded.
std::optional<RunResult> load_run(const std::string& dir, const ScenarioConfig& config);

/// Re-derives metrics.json for one seed directory from its stored streams.
SummaryMetrics recompute_seed_metrics(const std::string& seed_dir);

struct RecomputeReport {
    std::vector<std::string> checked;     // metrics.json files compared
    std::vector<std::string> mismatched;  // files whose recomputed text differs
};

/// Recomputes every seed_* directory (or a single seed directory) and
/// compares with the stored metrics.json byte for byte. Rewrites the files
/// when `rewrite` is set.
RecomputeReport recompute_metrics(const std::string& run_dir, bool rewrite = false);

/// Evaluation streams stored under a seed directory.
EvalReport read_timeseries(const std::string& dir);
void write_timeseries(const std::string& dir, const EconomyParams& params, const EvalReport& report);

}  // namespace marlbc
