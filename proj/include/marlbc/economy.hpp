#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marlbc/rng.hpp"
#include "marlbc/shocks.hpp"

namespace marlbc {

enum class LabourMode { Chosen, ExogenousEmployment };

/// Floor applied to effective labour before pricing (all-unemployed corner).
inline constexpr double kLabourFloor = 1e-9;
/// Floor applied to consumption inside the log reward.
inline constexpr double kConsumptionFloor = 1e-10;

struct EconomyParams {
    int n = 1;
    int horizon = 500;
    double alpha = 0.36;
    double delta = 1.0;
    double beta = 0.95;
    double leisure_weight = 5.0;
    std::vector<double> kappa{1.0};
    std::vector<double> lambda{1.0};
    double action_floor = 0.01;
    double action_ceil = 0.99;
    LabourMode labour_mode = LabourMode::Chosen;
    double employed_labour = 1.11;  // l_bar, used under ExogenousEmployment
    double initial_capital = 1.0;
    double initial_labour = 0.3;

    /// Throws ConfigError on any violated invariant.
    void validate() const;
    int action_dim() const { return labour_mode == LabourMode::Chosen ? 2 : 1; }
};

/// Which entries of (k, K, l_prev, L_prev, A, kappa, lambda) an agent sees,
/// always emitted in that order.
struct ObservationMask {
    bool own_capital = true;
    bool aggregate_capital = false;
    bool own_prev_labour = false;
    bool aggregate_prev_labour = false;
    bool technology = true;
    bool capital_productivity = false;
    bool labour_productivity = false;

    int size() const;
    std::string to_string() const;
    /// Parses a comma list of k, K, l_prev, L_prev, A, kappa, lambda.
    static ObservationMask parse(const std::string& text);
    bool operator==(const ObservationMask&) const = default;
};

struct EconomyState {
    std::vector<double> capital;
    std::vector<double> prev_labour;
    double prev_aggregate_labour = 0.0;
    double technology = 1.0;
    ShockState shocks;
    int t = 0;
};

struct HouseholdAction {
    double consumption_fraction = 0.5;
    double labour = 0.5;
};

using Observation = std::vector<double>;

struct StepOutcome {
    std::vector<Observation> observations;  // next-state observations
    std::vector<double> rewards;
    // Per-household diagnostics for the period just played.
    std::vector<double> consumption_fraction;
    std::vector<double> labour;
    std::vector<double> consumption;
    std::vector<double> wealth;
    std::vector<double> wage;
    std::vector<double> interest;
    std::vector<double> capital;       // k_t
    std::vector<double> next_capital;  // k_{t+1}
    std::vector<std::uint8_t> employed;
    double aggregate_capital = 0.0;
    double aggregate_labour = 0.0;
    double output = 0.0;
    double technology = 1.0;
    int t = 0;  // period index of the diagnostics
    bool truncated = false;
};

struct Aggregates {
    double capital;
    double labour;  // floored at kLabourFloor
};

struct FactorPrices {
    std::vector<double> interest;
    std::vector<double> wage;
};

struct Split {
    double consumption;
    double next_capital;
};

// Pure building blocks of one period. All are reentrant.
Aggregates aggregate_inputs(const EconomyParams& params, std::span<const double> capital,
                            std::span<const double> labour);
double produce(const EconomyParams& params, double technology, double aggregate_capital,
               double aggregate_labour);
FactorPrices factor_prices(const EconomyParams& params, double output, double aggregate_capital,
                           double aggregate_labour);
double wealth(const EconomyParams& params, double wage, double labour, double interest, double capital);
Split split_consumption_investment(double wealth, double consumption_fraction);
double reward(const EconomyParams& params, double consumption, double labour);
HouseholdAction clip_action(const EconomyParams& params, HouseholdAction action);

/// The heterogeneous-household environment. Owns its state and random stream;
/// a single caller steps it at a time.
class Economy {
public:
    Economy(EconomyParams params, ShockSpec shocks, ObservationMask mask);

    /// Starts a new episode. Equal seeds give identical states.
    std::vector<Observation> reset(std::uint64_t seed);
    /// Starts a new episode from an explicit state (used by the oracles).
    std::vector<Observation> reset_to(EconomyState state);

    StepOutcome step(std::span<const HouseholdAction> actions);

    const EconomyParams& params() const { return params_; }
    const ShockSpec& shock_spec() const { return shocks_; }
    const ObservationMask& mask() const { return mask_; }
    const EconomyState& state() const { return state_; }
    int observation_dim() const { return mask_.size(); }
    bool done() const { return state_.t >= params_.horizon; }

    std::vector<Observation> observe() const;

private:
    std::vector<double> labour_supply(std::span<const HouseholdAction> actions) const;

    EconomyParams params_;
    ShockSpec shocks_;
    ObservationMask mask_;
    EconomyState state_;
    Rng rng_;
};

}  // namespace marlbc
