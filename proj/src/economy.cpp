#include "marlbc/economy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "marlbc/error.hpp"

namespace marlbc {

void EconomyParams::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("economy: " + msg); };
    if (n <= 0) fail("n must be positive");
    if (horizon <= 0) fail("horizon must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
    if (!(delta > 0.0 && delta <= 1.0)) fail("delta must lie in (0, 1]");
    if (!(beta > 0.0 && beta < 1.0)) fail("beta must lie in (0, 1)");
    if (!(leisure_weight >= 0.0)) fail("leisure_weight must be >= 0");
    if (kappa.size() != static_cast<std::size_t>(n) || lambda.size() != static_cast<std::size_t>(n)) {
        fail("kappa and lambda must have n entries");
    }
    bool any_kappa = false;
    bool any_lambda = false;
    for (int i = 0; i < n; ++i) {
        if (!(kappa[i] >= 0.0) || !(lambda[i] >= 0.0)) fail("productivities must be >= 0");
        any_kappa |= kappa[i] > 0.0;
        any_lambda |= lambda[i] > 0.0;
    }
    if (!any_kappa || !any_lambda) fail("at least one positive capital and labour productivity required");
    if (!(action_floor > 0.0 && action_floor < action_ceil && action_ceil < 1.0)) {
        fail("action bounds must satisfy 0 < floor < ceil < 1");
    }
    if (!(initial_capital > 0.0)) fail("initial_capital must be positive");
    if (!(initial_labour >= 0.0 && initial_labour < 1.0)) fail("initial_labour must lie in [0, 1)");
    if (labour_mode == LabourMode::ExogenousEmployment) {
        if (!(employed_labour > 0.0)) fail("employed_labour must be positive");
        if (leisure_weight > 0.0 && employed_labour >= 1.0) {
            fail("leisure_weight must be 0 when employed labour is >= 1");
        }
    }
}

int ObservationMask::size() const {
    return int(own_capital) + int(aggregate_capital) + int(own_prev_labour) + int(aggregate_prev_labour) +
           int(technology) + int(capital_productivity) + int(labour_productivity);
}

std::string ObservationMask::to_string() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ",";
        out += name;
    };
    add(own_capital, "k");
    add(aggregate_capital, "K");
    add(own_prev_labour, "l_prev");
    add(aggregate_prev_labour, "L_prev");
    add(technology, "A");
    add(capital_productivity, "kappa");
    add(labour_productivity, "lambda");
    return out;
}

ObservationMask ObservationMask::parse(const std::string& text) {
    ObservationMask m{false, false, false, false, false, false, false};
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item == "k") m.own_capital = true;
        else if (item == "K") m.aggregate_capital = true;
        else if (item == "l_prev") m.own_prev_labour = true;
        else if (item == "L_prev") m.aggregate_prev_labour = true;
        else if (item == "A") m.technology = true;
        else if (item == "kappa") m.capital_productivity = true;
        else if (item == "lambda") m.labour_productivity = true;
        else throw ConfigError("unknown observation entry '" + item + "'");
    }
    if (m.size() == 0) throw ConfigError("observation mask is empty");
    return m;
}

Aggregates aggregate_inputs(const EconomyParams& params, std::span<const double> capital,
                            std::span<const double> labour) {
    const auto n = static_cast<std::size_t>(params.n);
    if (capital.size() != n || labour.size() != n) {
        throw ConfigError("aggregate_inputs: vectors must have n entries");
    }
    double k_sum = 0.0;
    double l_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        k_sum += params.kappa[i] * capital[i];
        l_sum += params.lambda[i] * labour[i];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return {k_sum * inv_n, std::max(l_sum * inv_n, kLabourFloor)};
}

double produce(const EconomyParams& params, double technology, double aggregate_capital,
               double aggregate_labour) {
    if (!(aggregate_labour > 0.0)) throw ConfigError("produce: labour must be positive");
    if (aggregate_capital < 0.0) throw ConfigError("produce: capital must be non-negative");
    return technology * std::pow(aggregate_capital, params.alpha) *
           std::pow(aggregate_labour, 1.0 - params.alpha);
}

FactorPrices factor_prices(const EconomyParams& params, double output, double aggregate_capital,
                           double aggregate_labour) {
    if (!(aggregate_capital > 0.0)) {
        throw DegenerateEconomyError("factor_prices: effective aggregate capital is zero");
    }
    if (!(aggregate_labour > 0.0)) throw ConfigError("factor_prices: labour must be positive");
    const double rent = params.alpha * output / aggregate_capital;
    const double pay = (1.0 - params.alpha) * output / aggregate_labour;
    FactorPrices prices;
    prices.interest.resize(params.kappa.size());
    prices.wage.resize(params.lambda.size());
    for (std::size_t i = 0; i < params.kappa.size(); ++i) prices.interest[i] = rent * params.kappa[i];
    for (std::size_t i = 0; i < params.lambda.size(); ++i) prices.wage[i] = pay * params.lambda[i];
    return prices;
}

double wealth(const EconomyParams& params, double wage, double labour, double interest, double capital) {
    return wage * labour + interest * capital + (1.0 - params.delta) * capital;
}

Split split_consumption_investment(double wealth, double consumption_fraction) {
    const double c = consumption_fraction * wealth;
    // k' = a - c keeps the budget identity exact in floating point.
    return {c, wealth - c};
}

double reward(const EconomyParams& params, double consumption, double labour) {
    const double utility = std::log(std::max(consumption, kConsumptionFloor));
    if (params.leisure_weight == 0.0) return utility;
    return utility + params.leisure_weight * std::log(1.0 - labour);
}

HouseholdAction clip_action(const EconomyParams& params, HouseholdAction action) {
    auto clip = [&](double v) {
        if (std::isnan(v)) return 0.5 * (params.action_floor + params.action_ceil);
        return std::clamp(v, params.action_floor, params.action_ceil);
    };
    return {clip(action.consumption_fraction), clip(action.labour)};
}

Economy::Economy(EconomyParams params, ShockSpec shocks, ObservationMask mask)
    : params_(std::move(params)), shocks_(std::move(shocks)), mask_(mask) {
    params_.validate();
    std::visit([](const auto& s) { s.validate(); }, shocks_);
    const bool ks = std::holds_alternative<KsParams>(shocks_);
    if (ks != (params_.labour_mode == LabourMode::ExogenousEmployment)) {
        throw ConfigError("economy: two-state shocks require exogenous employment and vice versa");
    }
    if (mask_.size() == 0) throw ConfigError("economy: observation mask is empty");
    reset(0);
}

std::vector<Observation> Economy::reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    const auto n = static_cast<std::size_t>(params_.n);
    EconomyState s;
    s.capital.assign(n, params_.initial_capital);
    s.prev_labour.assign(n, params_.initial_labour);
    double l_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) l_sum += params_.lambda[i] * params_.initial_labour;
    s.prev_aggregate_labour = l_sum / static_cast<double>(n);
    s.shocks = initial_shock_state(shocks_, params_.n, rng_);
    s.technology = technology(shocks_, s.shocks);
    s.t = 0;
    state_ = std::move(s);
    return observe();
}

std::vector<Observation> Economy::reset_to(EconomyState state) {
    if (state.capital.size() != static_cast<std::size_t>(params_.n) ||
        state.prev_labour.size() != static_cast<std::size_t>(params_.n)) {
        throw ConfigError("reset_to: state vectors must have n entries");
    }
    state.technology = technology(shocks_, state.shocks);
    state_ = std::move(state);
    return observe();
}

std::vector<Observation> Economy::observe() const {
    const auto n = static_cast<std::size_t>(params_.n);
    double k_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) k_sum += params_.kappa[i] * state_.capital[i];
    const double agg_k = k_sum / static_cast<double>(n);
    const double log_a = log_technology(shocks_, state_.shocks);

    std::vector<Observation> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& o = out[i];
        o.reserve(static_cast<std::size_t>(mask_.size()));
        if (mask_.own_capital) o.push_back(std::log1p(state_.capital[i]));
        if (mask_.aggregate_capital) o.push_back(std::log1p(agg_k));
        if (mask_.own_prev_labour) o.push_back(state_.prev_labour[i]);
        if (mask_.aggregate_prev_labour) o.push_back(state_.prev_aggregate_labour);
        if (mask_.technology) o.push_back(log_a);
        if (mask_.capital_productivity) o.push_back(params_.kappa[i]);
        if (mask_.labour_productivity) o.push_back(params_.lambda[i]);
    }
    return out;
}

std::vector<double> Economy::labour_supply(std::span<const HouseholdAction> actions) const {
    const auto n = static_cast<std::size_t>(params_.n);
    std::vector<double> labour(n);
    if (params_.labour_mode == LabourMode::Chosen) {
        for (std::size_t i = 0; i < n; ++i) labour[i] = actions[i].labour;
    } else {
        const auto& flags = std::get<KsState>(state_.shocks).employed;
        for (std::size_t i = 0; i < n; ++i) labour[i] = flags[i] ? params_.employed_labour : 0.0;
    }
    return labour;
}

StepOutcome Economy::step(std::span<const HouseholdAction> raw_actions) {
    if (done()) throw ProtocolError("step: episode horizon reached, call reset");
    const auto n = static_cast<std::size_t>(params_.n);
    if (raw_actions.size() != n) throw ConfigError("step: expected one action per household");

    // (a) clip
    std::vector<HouseholdAction> actions(n);
    for (std::size_t i = 0; i < n; ++i) actions[i] = clip_action(params_, raw_actions[i]);
    // (b) labour
    const std::vector<double> labour = labour_supply(actions);
    // (c)-(e) aggregate, produce, price
    const Aggregates agg = aggregate_inputs(params_, state_.capital, labour);
    const double output = produce(params_, state_.technology, agg.capital, agg.labour);
    const FactorPrices prices = factor_prices(params_, output, agg.capital, agg.labour);

    StepOutcome out;
    out.t = state_.t;
    out.aggregate_capital = agg.capital;
    out.aggregate_labour = agg.labour;
    out.output = output;
    out.technology = state_.technology;
    out.capital = state_.capital;
    out.labour = labour;
    out.interest = prices.interest;
    out.wage = prices.wage;
    out.consumption_fraction.resize(n);
    out.consumption.resize(n);
    out.wealth.resize(n);
    out.next_capital.resize(n);
    out.rewards.resize(n);
    if (const auto* ks = std::get_if<KsState>(&state_.shocks)) {
        out.employed = ks->employed;
    } else {
        out.employed.assign(n, 1);
    }

    for (std::size_t i = 0; i < n; ++i) {
        // (f) wealth, (g) split, (h) reward
        const double a = wealth(params_, prices.wage[i], labour[i], prices.interest[i], state_.capital[i]);
        const Split split = split_consumption_investment(a, actions[i].consumption_fraction);
        out.consumption_fraction[i] = actions[i].consumption_fraction;
        out.wealth[i] = a;
        out.consumption[i] = split.consumption;
        out.next_capital[i] = split.next_capital;
        out.rewards[i] = reward(params_, split.consumption, labour[i]);
    }

    // (i) shocks, (j) time
    state_.shocks = advance_shocks(shocks_, state_.shocks, rng_);
    state_.technology = technology(shocks_, state_.shocks);
    state_.capital = out.next_capital;
    state_.prev_labour = labour;
    double l_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) l_sum += params_.lambda[i] * labour[i];
    state_.prev_aggregate_labour = l_sum / static_cast<double>(n);
    state_.t += 1;
    out.truncated = state_.t == params_.horizon;
    out.observations = observe();
    return out;
}

}  // namespace marlbc
