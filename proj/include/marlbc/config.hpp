#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "marlbc/agents.hpp"
#include "marlbc/economy.hpp"
#include "marlbc/shocks.hpp"

namespace marlbc {

enum class ShockProcess { Ar1, Ks };

struct EvaluationSpec {
    int episodes = 5;
    int burn_in = 100;
    int mpc_bins = 10;
    int irf_horizon = 40;
    double irf_shock = 0.01;  // impact on log technology
    bool oracle = true;       // single-household runs only
};

struct ScenarioConfig {
    std::string id = "custom";
    EconomyParams economy;
    ShockProcess process = ShockProcess::Ar1;
    Ar1Params ar1;
    KsParams ks;
    ObservationMask mask;
    AgentConfig agent;
    TrainSchedule schedule;
    std::vector<std::uint64_t> seeds{0};
    EvaluationSpec evaluation;
    std::string out_dir = "runs";

    ShockSpec shock_spec() const;
    long total_steps() const { return static_cast<long>(economy.n) * schedule.per_agent_steps; }
    /// Throws ConfigError on any violated invariant.
    void validate() const;
};

/// Keeps general agent settings and resets the algorithm-specific ones
/// (learning rates, critic count, policy delay, target noise).
AgentConfig with_algorithm(const AgentConfig& base, Algorithm algorithm);

/// Built-in scenarios. `rbc_grid_scale(m)` (or `rbc_grid_scale_m`) builds an
/// m x m productivity grid.
ScenarioConfig preset(const std::string& id);
std::vector<std::string> preset_ids();
bool is_preset(const std::string& id);

/// Parses the sectioned key/value format. `source` names the document in
/// error messages, which carry line numbers.
ScenarioConfig parse_config(std::string_view text, const std::string& source = "<config>");

/// A preset id or a path to a config file.
ScenarioConfig load_config(const std::string& path_or_preset);

/// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const ScenarioConfig& config);

/// Hex SHA-1 of "blob <size>\0<text>", as git hashes file contents.
std::string git_blob_hash(std::string_view text);

}  // namespace marlbc
