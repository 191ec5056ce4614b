#include "marlbc/shocks.hpp"

#include <cmath>
#include <sstream>

#include "marlbc/error.hpp"

namespace marlbc {

namespace {

constexpr int state_index(Regime s, bool employed) {
    return 2 * static_cast<int>(s) + (employed ? 1 : 0);
}

void check(bool ok, double tolerance, const std::string& what, double got, double want) {
    if (!ok) {
        std::ostringstream msg;
        msg << "KS transition matrix violates " << what << ": got " << got << ", expected " << want
            << " (tolerance " << tolerance << ")";
        throw SolverError(msg.str());
    }
}

}  // namespace

void Ar1Params::validate() const {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("ar1 rho must lie in [0, 1)");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("ar1 sigma must be >= 0");
}

void validate_ks_matrix(const KsMatrix& m, double u_good, double u_bad, double tolerance) {
    for (int i = 0; i < 4; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (m[i][j] < 0.0) throw SolverError("KS transition matrix has a negative entry");
            sum += m[i][j];
        }
        check(std::abs(sum - 1.0) <= 1e-12, 1e-12, "row sum", sum, 1.0);
    }
    // Marginal regime chain: stay probability 0.875 from every state.
    for (int i = 0; i < 4; ++i) {
        const int from = i / 2;
        const double stay = m[i][2 * from] + m[i][2 * from + 1];
        check(std::abs(stay - 0.875) <= tolerance, tolerance, "regime stay probability", stay, 0.875);
    }
    // Flow balance: u_s P(u->u | s,s') + (1-u_s) P(e->u | s,s') = u_{s'}.
    const double u[2] = {u_bad, u_good};
    for (int s = 0; s < 2; ++s) {
        for (int sp = 0; sp < 2; ++sp) {
            const int iu = 2 * s;
            const int ie = 2 * s + 1;
            const double pu = m[iu][2 * sp] / (m[iu][2 * sp] + m[iu][2 * sp + 1]);
            const double pe = m[ie][2 * sp] / (m[ie][2 * sp] + m[ie][2 * sp + 1]);
            const double next = u[s] * pu + (1.0 - u[s]) * pe;
            check(std::abs(next - u[sp]) <= tolerance, tolerance, "unemployment flow balance", next, u[sp]);
        }
    }
}

KsMatrix build_ks_matrix() {
    // Rows/cols: (bad,u), (bad,e), (good,u), (good,e).
    const KsMatrix m{{
        {0.525000, 0.350000, 0.031250, 0.093750},
        {0.038889, 0.836111, 0.002083, 0.122917},
        {0.093750, 0.031250, 0.291667, 0.583333},
        {0.009115, 0.115885, 0.024306, 0.850694},
    }};
    validate_ks_matrix(m, 0.04, 0.10);
    return m;
}

void KsParams::validate() const {
    if (!(a_good > 0.0 && a_bad > 0.0)) throw ConfigError("ks technology levels must be positive");
    if (!(employed_labour > 0.0)) throw ConfigError("ks employed labour must be positive");
    try {
        validate_ks_matrix(joint_transition, unemployment_good, unemployment_bad);
    } catch (const SolverError& e) {
        throw ConfigError(e.what());
    }
}

double KsParams::regime_transition(Regime from, Regime to) const {
    const auto& row = joint_transition[state_index(from, true)];
    return row[state_index(to, false)] + row[state_index(to, true)];
}

double KsParams::employment_transition(bool employed, Regime from, Regime to, bool employed_next) const {
    const auto& row = joint_transition[state_index(from, employed)];
    const double to_u = row[state_index(to, false)];
    const double to_e = row[state_index(to, true)];
    const double mass = to_u + to_e;
    if (mass <= 0.0) return employed_next == employed ? 1.0 : 0.0;
    return (employed_next ? to_e : to_u) / mass;
}

double technology(const ShockSpec& spec, const ShockState& state) {
    if (const auto* ks = std::get_if<KsParams>(&spec)) {
        return ks->technology(std::get<KsState>(state).aggregate);
    }
    return std::exp(std::get<Ar1State>(state).z);
}

double log_technology(const ShockSpec& spec, const ShockState& state) {
    if (std::holds_alternative<Ar1Params>(spec)) return std::get<Ar1State>(state).z;
    return std::log(technology(spec, state));
}

Ar1Draw ar1_step(const Ar1Params& params, double z, Rng& rng) {
    const double eps = params.sigma > 0.0 ? rng.normal() : 0.0;
    const double next = params.rho * z + params.sigma * eps;
    return {next, std::exp(next)};
}

KsState ks_step(const KsParams& params, const KsState& state, Rng& rng) {
    const Regime from = state.aggregate;
    const double p_good = params.regime_transition(from, Regime::Good);
    KsState next;
    next.aggregate = rng.uniform() < p_good ? Regime::Good : Regime::Bad;
    next.employed.resize(state.employed.size());
    for (std::size_t i = 0; i < state.employed.size(); ++i) {
        const bool employed = state.employed[i] != 0;
        const double p_emp = params.employment_transition(employed, from, next.aggregate, true);
        next.employed[i] = rng.uniform() < p_emp ? 1 : 0;
    }
    return next;
}

ShockState initial_shock_state(const ShockSpec& spec, int n_households, Rng& rng,
                               std::optional<Regime> forced_regime) {
    if (std::holds_alternative<Ar1Params>(spec)) return Ar1State{0.0};
    const auto& ks = std::get<KsParams>(spec);
    KsState s;
    s.aggregate = forced_regime ? *forced_regime : (rng.uniform() < 0.5 ? Regime::Good : Regime::Bad);
    const double u = ks.unemployment_rate(s.aggregate);
    s.employed.resize(static_cast<std::size_t>(n_households));
    for (auto& flag : s.employed) flag = rng.uniform() < u ? 0 : 1;
    return s;
}

ShockState advance_shocks(const ShockSpec& spec, const ShockState& state, Rng& rng) {
    if (const auto* ar1 = std::get_if<Ar1Params>(&spec)) {
        return Ar1State{ar1_step(*ar1, std::get<Ar1State>(state).z, rng).z};
    }
    return ks_step(std::get<KsParams>(spec), std::get<KsState>(state), rng);
}

}  // namespace marlbc
