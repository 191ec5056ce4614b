#include "marlbc/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <sstream>

#include "marlbc/error.hpp"

namespace marlbc {

namespace {

enum class Type { Int, Real, Bool, String, RealList, IntList };

const char* type_name(Type t) {
    switch (t) {
        case Type::Int: return "int";
        case Type::Real: return "real";
        case Type::Bool: return "bool";
        case Type::String: return "string";
        case Type::RealList: return "list<real>";
        case Type::IntList: return "list<int>";
    }
    return "?";
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::optional<double> parse_real(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<long long> parse_int(const std::string& s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

struct Value {
    long long i = 0;
    double r = 0.0;
    bool b = false;
    std::string s;
    std::vector<double> reals;
    std::vector<long long> ints;
};

// Lists accept run-length items such as "0.8*3".
template <class T, class P>
std::optional<std::vector<T>> parse_list(const std::string& text, P&& parse_item) {
    std::vector<T> out;
    if (trim(text).empty()) return out;
    for (const auto& item : split(text, ',')) {
        std::string head = item;
        long long repeat = 1;
        if (const auto star = item.find('*'); star != std::string::npos) {
            head = trim(item.substr(0, star));
            const auto r = parse_int(trim(item.substr(star + 1)));
            if (!r || *r < 1) return std::nullopt;
            repeat = *r;
        }
        const auto v = parse_item(head);
        if (!v) return std::nullopt;
        for (long long k = 0; k < repeat; ++k) out.push_back(static_cast<T>(*v));
    }
    return out;
}

template <class T, class F>
std::string format_list(const std::vector<T>& v, F&& fmt) {
    std::string out;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
        if (!out.empty()) out += ", ";
        out += fmt(v[i]);
        if (j > i) out += "*" + std::to_string(j - i + 1);
        i = j + 1;
    }
    return out;
}

std::optional<Value> parse_value(Type t, const std::string& raw) {
    Value v;
    switch (t) {
        case Type::Int: {
            const auto x = parse_int(raw);
            if (!x) return std::nullopt;
            v.i = *x;
            break;
        }
        case Type::Real: {
            const auto x = parse_real(raw);
            if (!x) return std::nullopt;
            v.r = *x;
            break;
        }
        case Type::Bool:
            if (raw == "true") v.b = true;
            else if (raw == "false") v.b = false;
            else return std::nullopt;
            break;
        case Type::String:
            if (raw.empty()) return std::nullopt;
            v.s = raw;
            break;
        case Type::RealList: {
            auto x = parse_list<double>(raw, parse_real);
            if (!x) return std::nullopt;
            v.reals = std::move(*x);
            break;
        }
        case Type::IntList: {
            auto x = parse_list<long long>(raw, parse_int);
            if (!x) return std::nullopt;
            v.ints = std::move(*x);
            break;
        }
    }
    return v;
}

struct Field {
    std::string section;
    std::string key;
    Type type;
    std::function<void(ScenarioConfig&, const Value&)> set;
    // Empty optional when the key does not apply to this configuration.
    std::function<std::optional<std::string>(const ScenarioConfig&)> get;
};

std::string fmt_int(long long v) { return std::to_string(v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

int to_int(const Value& v, const std::string& name) {
    if (v.i < std::numeric_limits<int>::min() || v.i > std::numeric_limits<int>::max()) {
        throw ConfigError(name + ": integer out of range");
    }
    return static_cast<int>(v.i);
}

std::size_t to_size(const Value& v, const std::string& name) {
    if (v.i < 0) throw ConfigError(name + ": must be non-negative");
    return static_cast<std::size_t>(v.i);
}

#define REAL_FIELD(sec, name, member)                                                          \
    Field {                                                                                    \
        sec, name, Type::Real, [](ScenarioConfig& c, const Value& v) { c.member = v.r; },     \
            [](const ScenarioConfig& c) -> std::optional<std::string> { return format_real(c.member); } \
    }
#define INT_FIELD(sec, name, member)                                                                  \
    Field {                                                                                           \
        sec, name, Type::Int, [](ScenarioConfig& c, const Value& v) { c.member = to_int(v, name); }, \
            [](const ScenarioConfig& c) -> std::optional<std::string> { return fmt_int(c.member); }  \
    }

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        // scenario
        f.push_back({"scenario", "id", Type::String, [](ScenarioConfig& c, const Value& v) { c.id = v.s; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> { return c.id; }});
        f.push_back({"scenario", "out_dir", Type::String, [](ScenarioConfig& c, const Value& v) { c.out_dir = v.s; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> { return c.out_dir; }});
        // economy
        f.push_back(INT_FIELD("economy", "n", economy.n));
        f.push_back(INT_FIELD("economy", "horizon", economy.horizon));
        f.push_back(REAL_FIELD("economy", "alpha", economy.alpha));
        f.push_back(REAL_FIELD("economy", "delta", economy.delta));
        f.push_back(REAL_FIELD("economy", "beta", economy.beta));
        f.push_back(REAL_FIELD("economy", "leisure_weight", economy.leisure_weight));
        f.push_back({"economy", "kappa", Type::RealList,
                     [](ScenarioConfig& c, const Value& v) { c.economy.kappa = v.reals; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return format_list(c.economy.kappa, format_real);
                     }});
        f.push_back({"economy", "lambda", Type::RealList,
                     [](ScenarioConfig& c, const Value& v) { c.economy.lambda = v.reals; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return format_list(c.economy.lambda, format_real);
                     }});
        f.push_back(REAL_FIELD("economy", "action_floor", economy.action_floor));
        f.push_back(REAL_FIELD("economy", "action_ceil", economy.action_ceil));
        f.push_back({"economy", "labour_mode", Type::String,
                     [](ScenarioConfig& c, const Value& v) {
                         if (v.s == "chosen") c.economy.labour_mode = LabourMode::Chosen;
                         else if (v.s == "exogenous") c.economy.labour_mode = LabourMode::ExogenousEmployment;
                         else throw ConfigError("economy.labour_mode: expected chosen or exogenous, got '" + v.s + "'");
                     },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return c.economy.labour_mode == LabourMode::Chosen ? "chosen" : "exogenous";
                     }});
        f.push_back({"economy", "employed_labour", Type::Real,
                     [](ScenarioConfig& c, const Value& v) { c.economy.employed_labour = v.r; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         if (c.economy.labour_mode == LabourMode::Chosen) return std::nullopt;
                         return format_real(c.economy.employed_labour);
                     }});
        f.push_back(REAL_FIELD("economy", "initial_capital", economy.initial_capital));
        f.push_back(REAL_FIELD("economy", "initial_labour", economy.initial_labour));
        // shocks
        f.push_back({"shocks", "process", Type::String,
                     [](ScenarioConfig& c, const Value& v) {
                         if (v.s == "ar1") c.process = ShockProcess::Ar1;
                         else if (v.s == "ks") c.process = ShockProcess::Ks;
                         else throw ConfigError("shocks.process: expected ar1 or ks, got '" + v.s + "'");
                     },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return c.process == ShockProcess::Ar1 ? "ar1" : "ks";
                     }});
        auto ar1_only = [](auto getter) {
            return [getter](const ScenarioConfig& c) -> std::optional<std::string> {
                if (c.process != ShockProcess::Ar1) return std::nullopt;
                return format_real(getter(c));
            };
        };
        auto ks_only = [](auto getter) {
            return [getter](const ScenarioConfig& c) -> std::optional<std::string> {
                if (c.process != ShockProcess::Ks) return std::nullopt;
                return format_real(getter(c));
            };
        };
        f.push_back({"shocks", "rho", Type::Real, [](ScenarioConfig& c, const Value& v) { c.ar1.rho = v.r; },
                     ar1_only([](const ScenarioConfig& c) { return c.ar1.rho; })});
        f.push_back({"shocks", "sigma", Type::Real, [](ScenarioConfig& c, const Value& v) { c.ar1.sigma = v.r; },
                     ar1_only([](const ScenarioConfig& c) { return c.ar1.sigma; })});
        f.push_back({"shocks", "a_good", Type::Real, [](ScenarioConfig& c, const Value& v) { c.ks.a_good = v.r; },
                     ks_only([](const ScenarioConfig& c) { return c.ks.a_good; })});
        f.push_back({"shocks", "a_bad", Type::Real, [](ScenarioConfig& c, const Value& v) { c.ks.a_bad = v.r; },
                     ks_only([](const ScenarioConfig& c) { return c.ks.a_bad; })});
        // observation
        f.push_back({"observation", "mask", Type::String,
                     [](ScenarioConfig& c, const Value& v) { c.mask = ObservationMask::parse(v.s); },
                     [](const ScenarioConfig& c) -> std::optional<std::string> { return c.mask.to_string(); }});
        // agent
        f.push_back({"agent", "algorithm", Type::String,
                     [](ScenarioConfig& c, const Value& v) { c.agent.algorithm = algorithm_from_string(v.s); },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return std::string(to_string(c.agent.algorithm));
                     }});
        f.push_back(INT_FIELD("agent", "batch_size", agent.batch_size));
        f.push_back(REAL_FIELD("agent", "lr_actor", agent.lr_actor));
        f.push_back(REAL_FIELD("agent", "lr_critic", agent.lr_critic));
        f.push_back(REAL_FIELD("agent", "tau", agent.tau));
        f.push_back(INT_FIELD("agent", "policy_delay", agent.policy_delay));
        f.push_back(REAL_FIELD("agent", "target_policy_noise", agent.target_policy_noise));
        f.push_back(REAL_FIELD("agent", "target_noise_clip", agent.target_noise_clip));
        f.push_back(INT_FIELD("agent", "n_critics", agent.n_critics));
        f.push_back(REAL_FIELD("agent", "exploration_noise", agent.exploration_noise));
        f.push_back({"agent", "target_entropy", Type::Real,
                     [](ScenarioConfig& c, const Value& v) { c.agent.target_entropy = v.r; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         if (!c.agent.target_entropy) return std::nullopt;
                         return format_real(*c.agent.target_entropy);
                     }});
        f.push_back(REAL_FIELD("agent", "initial_entropy_coef", agent.initial_entropy_coef));
        f.push_back({"agent", "hidden", Type::IntList,
                     [](ScenarioConfig& c, const Value& v) {
                         c.agent.hidden.clear();
                         for (long long h : v.ints) {
                             if (h <= 0 || h > 1 << 20) throw ConfigError("agent.hidden: sizes must be positive");
                             c.agent.hidden.push_back(static_cast<int>(h));
                         }
                     },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return format_list(c.agent.hidden, [](int h) { return std::to_string(h); });
                     }});
        f.push_back({"agent", "activation", Type::String,
                     [](ScenarioConfig& c, const Value& v) {
                         if (v.s == "relu") c.agent.activation = nn::Activation::Relu;
                         else if (v.s == "tanh") c.agent.activation = nn::Activation::Tanh;
                         else throw ConfigError("agent.activation: expected relu or tanh, got '" + v.s + "'");
                     },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return c.agent.activation == nn::Activation::Relu ? "relu" : "tanh";
                     }});
        f.push_back({"agent", "buffer_capacity", Type::Int,
                     [](ScenarioConfig& c, const Value& v) { c.agent.buffer_capacity = to_size(v, "agent.buffer_capacity"); },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return fmt_int(static_cast<long long>(c.agent.buffer_capacity));
                     }});
        f.push_back({"agent", "learning_starts", Type::Int,
                     [](ScenarioConfig& c, const Value& v) { c.agent.learning_starts = to_size(v, "agent.learning_starts"); },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return fmt_int(static_cast<long long>(c.agent.learning_starts));
                     }});
        f.push_back(INT_FIELD("agent", "gradient_steps", agent.gradient_steps));
        // schedule
        f.push_back({"schedule", "per_agent_steps", Type::Int,
                     [](ScenarioConfig& c, const Value& v) { c.schedule.per_agent_steps = v.i; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> { return fmt_int(c.schedule.per_agent_steps); }});
        f.push_back({"schedule", "eval_interval", Type::Int,
                     [](ScenarioConfig& c, const Value& v) { c.schedule.eval_interval = v.i; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> { return fmt_int(c.schedule.eval_interval); }});
        f.push_back(INT_FIELD("schedule", "eval_episodes", schedule.eval_episodes));
        f.push_back({"schedule", "seeds", Type::IntList,
                     [](ScenarioConfig& c, const Value& v) {
                         c.seeds.clear();
                         for (long long s : v.ints) {
                             if (s < 0) throw ConfigError("schedule.seeds: seeds must be non-negative");
                             c.seeds.push_back(static_cast<std::uint64_t>(s));
                         }
                     },
                     [](const ScenarioConfig& c) -> std::optional<std::string> {
                         return format_list(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
                     }});
        // evaluation
        f.push_back(INT_FIELD("evaluation", "episodes", evaluation.episodes));
        f.push_back(INT_FIELD("evaluation", "burn_in", evaluation.burn_in));
        f.push_back(INT_FIELD("evaluation", "mpc_bins", evaluation.mpc_bins));
        f.push_back(INT_FIELD("evaluation", "irf_horizon", evaluation.irf_horizon));
        f.push_back(REAL_FIELD("evaluation", "irf_shock", evaluation.irf_shock));
        f.push_back({"evaluation", "oracle", Type::Bool,
                     [](ScenarioConfig& c, const Value& v) { c.evaluation.oracle = v.b; },
                     [](const ScenarioConfig& c) -> std::optional<std::string> { return fmt_bool(c.evaluation.oracle); }});
        return f;
    }();
    return fields;
}

#undef REAL_FIELD
#undef INT_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : schema()) {
        if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
}

const std::vector<std::string>& section_order() {
    static const std::vector<std::string> s{"scenario", "economy", "shocks", "observation", "agent", "schedule", "evaluation"};
    return s;
}

ScenarioConfig base_scenario() {
    ScenarioConfig c;
    c.seeds = {0, 1, 2, 3, 4, 5, 6, 7};
    c.agent.gamma = c.economy.beta;
    return c;
}

std::vector<double> equispaced(double lo, double hi, int m) {
    std::vector<double> v(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) v[static_cast<std::size_t>(i)] = m == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (m - 1);
    return v;
}

ScenarioConfig grid_scenario(const std::string& id, const std::vector<double>& values) {
    ScenarioConfig c = base_scenario();
    c.id = id;
    const auto m = values.size();
    c.economy.n = static_cast<int>(m * m);
    c.economy.delta = 0.025;
    c.economy.kappa.clear();
    c.economy.lambda.clear();
    for (double kap : values) {
        for (double lam : values) {
            c.economy.kappa.push_back(kap);
            c.economy.lambda.push_back(lam);
        }
    }
    c.mask = ObservationMask::parse("k,K,l_prev,L_prev,A,kappa,lambda");
    c.agent = with_algorithm(c.agent, Algorithm::Sac);
    c.schedule.per_agent_steps = 20000;
    c.evaluation.oracle = false;
    return c;
}

ScenarioConfig ks_scenario(const std::string& id, const std::vector<double>& kappa) {
    ScenarioConfig c = base_scenario();
    c.id = id;
    c.economy.n = 20;
    c.economy.delta = 0.025;
    c.economy.leisure_weight = 0.0;
    c.economy.labour_mode = LabourMode::ExogenousEmployment;
    c.economy.employed_labour = 1.11;
    c.economy.kappa = kappa;
    c.economy.lambda.assign(20, 1.0);
    c.process = ShockProcess::Ks;
    c.mask = ObservationMask::parse(kappa == std::vector<double>(20, 1.0) ? "k,l_prev,K,A" : "k,l_prev,K,A,kappa");
    c.agent = with_algorithm(c.agent, Algorithm::Sac);
    c.schedule.per_agent_steps = 100000;
    c.evaluation.oracle = false;
    return c;
}

std::vector<double> three_groups(double low, double mid, double high) {
    std::vector<double> v(3, low);
    v.insert(v.end(), 14, mid);
    v.insert(v.end(), 3, high);
    return v;
}

}  // namespace

ShockSpec ScenarioConfig::shock_spec() const {
    if (process == ShockProcess::Ar1) return ar1;
    KsParams p = ks;
    p.employed_labour = economy.employed_labour;
    return p;
}

void ScenarioConfig::validate() const {
    if (id.empty()) throw ConfigError("scenario.id must be non-empty");
    economy.validate();
    agent.validate();
    if (process == ShockProcess::Ar1) ar1.validate();
    else ks.validate();
    if ((process == ShockProcess::Ks) != (economy.labour_mode == LabourMode::ExogenousEmployment)) {
        throw ConfigError("exogenous labour requires the ks shock process and vice versa");
    }
    if (mask.size() == 0) throw ConfigError("observation.mask must select at least one entry");
    if (schedule.per_agent_steps < 0) throw ConfigError("schedule.per_agent_steps must be >= 0");
    if (schedule.eval_interval <= 0) throw ConfigError("schedule.eval_interval must be positive");
    if (schedule.eval_episodes <= 0) throw ConfigError("schedule.eval_episodes must be positive");
    if (seeds.empty()) throw ConfigError("schedule.seeds must be non-empty");
    if (evaluation.episodes <= 0) throw ConfigError("evaluation.episodes must be positive");
    if (evaluation.burn_in < 0 || evaluation.burn_in + 2 > economy.horizon) {
        throw ConfigError("evaluation.burn_in must be >= 0 and leave at least two periods");
    }
    if (evaluation.mpc_bins < 1) throw ConfigError("evaluation.mpc_bins must be positive");
    if (evaluation.irf_horizon <= 0) throw ConfigError("evaluation.irf_horizon must be positive");
    if (std::abs(agent.gamma - economy.beta) > 0.0) throw ConfigError("agent discount must equal economy.beta");
}

AgentConfig with_algorithm(const AgentConfig& base, Algorithm algorithm) {
    AgentConfig d = AgentConfig::defaults_for(algorithm);
    AgentConfig c = base;
    c.algorithm = algorithm;
    c.lr_actor = d.lr_actor;
    c.lr_critic = d.lr_critic;
    c.n_critics = d.n_critics;
    c.policy_delay = d.policy_delay;
    c.target_policy_noise = d.target_policy_noise;
    c.target_noise_clip = d.target_noise_clip;
    return c;
}

std::vector<std::string> preset_ids() {
    return {"rbc_textbook", "rbc_partial", "ks", "ks_hetero_mild", "ks_hetero_marked", "rbc_grid", "rbc_grid_scale(m)"};
}

namespace {

std::optional<int> grid_scale_size(const std::string& id) {
    static const std::regex pattern(R"(rbc_grid_scale(?:\((\d+)\)|_(\d+)))");
    std::smatch m;
    if (!std::regex_match(id, m, pattern)) return std::nullopt;
    const std::string digits = m[1].matched ? m[1].str() : m[2].str();
    if (digits.size() > 4) return std::nullopt;
    return std::stoi(digits);
}

}  // namespace

bool is_preset(const std::string& id) {
    static const std::vector<std::string> fixed{"rbc_textbook", "rbc_partial", "ks", "ks_hetero_mild", "ks_hetero_marked",
                                                "rbc_grid"};
    return std::find(fixed.begin(), fixed.end(), id) != fixed.end() || grid_scale_size(id).has_value();
}

ScenarioConfig preset(const std::string& id) {
    if (id == "rbc_textbook" || id == "rbc_partial") {
        ScenarioConfig c = base_scenario();
        c.id = id;
        c.economy.delta = id == "rbc_textbook" ? 1.0 : 0.025;
        c.mask = ObservationMask::parse("k,A");
        c.agent = with_algorithm(c.agent, Algorithm::Ddpg);
        c.schedule.per_agent_steps = 100000;
        return c;
    }
    if (id == "ks") return ks_scenario(id, std::vector<double>(20, 1.0));
    if (id == "ks_hetero_mild") return ks_scenario(id, three_groups(0.8, 1.0, 1.2));
    if (id == "ks_hetero_marked") return ks_scenario(id, three_groups(0.0, 1.0, 1.2));
    if (id == "rbc_grid") return grid_scenario(id, {0.8, 1.0, 1.2});
    if (const auto m = grid_scale_size(id)) {
        if (*m < 1 || *m > 64) throw ConfigError("rbc_grid_scale: m must lie in [1, 64]");
        return grid_scenario("rbc_grid_scale_" + std::to_string(*m), equispaced(0.98, 1.02, *m));
    }
    throw ConfigError("unknown preset '" + id + "'");
}

ScenarioConfig parse_config(std::string_view text, const std::string& source) {
    struct Entry {
        std::string section;
        std::string key;
        std::string type;
        std::string value;
        int line;
    };
    std::vector<Entry> entries;
    std::string section;
    std::map<std::string, int> seen;
    int line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    auto fail = [&](int line, const std::string& msg) -> void {
        throw ConfigError(source + ":" + std::to_string(line) + ": " + msg);
    };
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (std::find(section_order().begin(), section_order().end(), section) == section_order().end()) {
                fail(line_no, "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        if (section.empty()) fail(line_no, "key outside of any section");
        std::string key = trim(line.substr(0, eq));
        std::string type;
        if (const auto colon = key.find(':'); colon != std::string::npos) {
            type = trim(key.substr(colon + 1));
            key = trim(key.substr(0, colon));
        }
        const std::string value = trim(line.substr(eq + 1));
        const std::string full = section + "." + key;
        const bool is_base = section == "scenario" && key == "base";
        if (!is_base && !find_field(section, key)) fail(line_no, "unknown key '" + full + "'");
        if (auto it = seen.find(full); it != seen.end()) {
            fail(line_no, "duplicate key '" + full + "' (first set on line " + std::to_string(it->second) + ")");
        }
        seen[full] = line_no;
        entries.push_back({section, key, type, value, line_no});
    }

    ScenarioConfig config = base_scenario();
    for (const auto& e : entries) {
        if (e.section == "scenario" && e.key == "base") {
            if (!e.type.empty() && e.type != "string") fail(e.line, "key 'scenario.base' has type string, not " + e.type);
            try {
                config = preset(e.value);
            } catch (const ConfigError& err) {
                fail(e.line, std::string("scenario.base: ") + err.what());
            }
        }
    }
    // The algorithm resets its own defaults before any explicit agent key is applied.
    auto apply = [&](const Entry& e) {
        const Field* f = find_field(e.section, e.key);
        const std::string full = e.section + "." + e.key;
        if (!e.type.empty() && e.type != type_name(f->type)) {
            fail(e.line, "key '" + full + "' has type " + type_name(f->type) + ", not " + e.type);
        }
        const auto v = parse_value(f->type, e.value);
        if (!v) fail(e.line, "key '" + full + "': expected " + type_name(f->type) + ", got '" + e.value + "'");
        try {
            if (full == "agent.algorithm") {
                config.agent = with_algorithm(config.agent, algorithm_from_string(v->s));
            } else {
                f->set(config, *v);
            }
        } catch (const ConfigError& err) {
            fail(e.line, err.what());
        } catch (const std::exception& err) {
            fail(e.line, "key '" + full + "': " + err.what());
        }
    };
    for (const auto& e : entries) {
        if (e.section == "agent" && e.key == "algorithm") apply(e);
    }
    for (const auto& e : entries) {
        if ((e.section == "scenario" && e.key == "base") || (e.section == "agent" && e.key == "algorithm")) continue;
        apply(e);
    }
    config.agent.gamma = config.economy.beta;
    try {
        config.validate();
    } catch (const ConfigError& err) {
        throw ConfigError(source + ": " + err.what());
    }
    return config;
}

ScenarioConfig load_config(const std::string& path_or_preset) {
    if (is_preset(path_or_preset)) {
        ScenarioConfig c = preset(path_or_preset);
        c.validate();
        return c;
    }
    std::ifstream in(path_or_preset, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path_or_preset + "' (and it is not a preset)");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path_or_preset);
}

std::string to_config_text(const ScenarioConfig& config) {
    std::ostringstream out;
    bool first = true;
    for (const auto& sec : section_order()) {
        if (!first) out << '\n';
        first = false;
        out << '[' << sec << "]\n";
        for (const auto& f : schema()) {
            if (f.section != sec) continue;
            const auto v = f.get(config);
            if (!v) continue;
            out << f.key << ':' << type_name(f.type) << " = " << *v << '\n';
        }
    }
    return out.str();
}

std::string git_blob_hash(std::string_view text) {
    std::string blob = "blob " + std::to_string(text.size());
    blob += '\0';
    blob += text;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
        throw std::runtime_error("sha1 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[digest[i] >> 4];
        s += hex[digest[i] & 0xF];
    }
    return s;
}

}  // namespace marlbc
