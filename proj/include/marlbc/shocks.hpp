#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "marlbc/rng.hpp"

namespace marlbc {

/// Log technology z follows z' = rho z + sigma eps, A = exp(z).
struct Ar1Params {
    double rho = 0.9;
    double sigma = 0.01;

    void validate() const;
};

enum class Regime : std::uint8_t { Bad = 0, Good = 1 };

/// Row-stochastic 4x4 matrix over (bad,u), (bad,e), (good,u), (good,e).
using KsMatrix = std::array<std::array<double, 4>, 4>;

/// Returns the standard Krusell-Smith joint transition matrix after checking
/// row sums, the 0.875 regime stay probability and the 4%/10% unemployment
/// flow balance. Throws SolverError if any identity fails beyond 1e-4.
KsMatrix build_ks_matrix();

/// Throws SolverError unless `m` satisfies the identities above.
void validate_ks_matrix(const KsMatrix& m, double unemployment_good, double unemployment_bad,
                        double tolerance = 1e-4);

struct KsParams {
    double a_good = 1.02;
    double a_bad = 0.98;
    double employed_labour = 1.11;
    double unemployment_good = 0.04;
    double unemployment_bad = 0.10;
    KsMatrix joint_transition = build_ks_matrix();

    void validate() const;

    /// P(s' | s); the same for both employment states by construction.
    double regime_transition(Regime from, Regime to) const;
    /// P(employed' | employed, s, s').
    double employment_transition(bool employed, Regime from, Regime to, bool employed_next) const;
    double unemployment_rate(Regime s) const {
        return s == Regime::Good ? unemployment_good : unemployment_bad;
    }
    double technology(Regime s) const { return s == Regime::Good ? a_good : a_bad; }
};

struct Ar1State {
    double z = 0.0;
};

struct KsState {
    Regime aggregate = Regime::Good;
    std::vector<std::uint8_t> employed;  // one flag per household
};

using ShockState = std::variant<Ar1State, KsState>;
using ShockSpec = std::variant<Ar1Params, KsParams>;

/// Technology level A implied by a shock state.
double technology(const ShockSpec& spec, const ShockState& state);

/// Latent log technology: z for AR(1), log A for the two-state chain.
double log_technology(const ShockSpec& spec, const ShockState& state);

struct Ar1Draw {
    double z;
    double technology;
};

Ar1Draw ar1_step(const Ar1Params& params, double z, Rng& rng);

/// One joint step: a single aggregate draw shared by all households, then
/// independent employment draws conditional on (s, s').
KsState ks_step(const KsParams& params, const KsState& state, Rng& rng);

/// AR(1) starts at z = 0. The two-state chain starts at a uniformly drawn
/// regime (or `forced_regime`) with flags drawn at that regime's stationary
/// unemployment rate.
ShockState initial_shock_state(const ShockSpec& spec, int n_households, Rng& rng,
                               std::optional<Regime> forced_regime = std::nullopt);

ShockState advance_shocks(const ShockSpec& spec, const ShockState& state, Rng& rng);

}  // namespace marlbc
