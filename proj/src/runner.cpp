#include "marlbc/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "marlbc/error.hpp"

namespace marlbc {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_num(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(where + ": malformed number '" + s + "'");
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
}

const char* kTimeseriesHeader = "t,agent_id,k,l,c_hat,c,a,w,r,K,L,Y,A,reward,employed,group";

// Cross-sectional statistics per (episode, t) after burn-in.
template <class F>
double mean_cross_section(const EvalReport& report, int n, int burn_in, F&& stat) {
    double total = 0.0;
    long count = 0;
    std::size_t i = 0;
    std::vector<double> row(static_cast<std::size_t>(n));
    while (i < report.records.size()) {
        const auto& first = report.records[i];
        if (i + static_cast<std::size_t>(n) > report.records.size()) throw ConfigError("timeseries: truncated period");
        for (int a = 0; a < n; ++a) {
            const auto& r = report.records[i + static_cast<std::size_t>(a)];
            if (r.t != first.t || r.episode != first.episode || r.agent != a) {
                throw ConfigError("timeseries: rows not ordered by (episode, t, agent)");
            }
        }
        if (first.t >= burn_in) {
            total += stat(std::span<const EvalRecord>(report.records.data() + i, static_cast<std::size_t>(n)), row);
            ++count;
        }
        i += static_cast<std::size_t>(n);
    }
    if (count == 0) throw ConfigError("metrics: no periods after burn-in");
    return total / static_cast<double>(count);
}

double gini_of(std::span<const EvalRecord> period, std::vector<double>& row, bool capital) {
    for (std::size_t a = 0; a < period.size(); ++a) row[a] = capital ? period[a].k : period[a].a;
    return gini(row);
}

std::vector<std::vector<double>> capital_paths(const EvalReport& report) {
    std::map<int, std::vector<double>> by_episode;
    for (const auto& r : report.records) {
        if (r.agent == 0) by_episode[r.episode].push_back(r.K);
    }
    std::vector<std::vector<double>> out;
    for (auto& [e, v] : by_episode) out.push_back(std::move(v));
    return out;
}

ordered_json point_json(const PolicyPoint& p) { return {{"c_hat", p.consumption_fraction}, {"l", p.labour}}; }
PolicyPoint point_from(const nlohmann::json& j) { return {j.at("c_hat").get<double>(), j.at("l").get<double>()}; }

std::string curve_csv(const LearningCurve& c) {
    std::string out = "step,mean_reward,std_reward\n";
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
        out += std::to_string(c.steps[i]) + "," + num(c.mean_reward[i]) + "," + num(c.std_reward[i]) + "\n";
    }
    return out;
}

LearningCurve read_curve(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::string line;
    std::getline(in, line);
    LearningCurve c;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 3) throw ConfigError(p.string() + ": expected 3 columns");
        c.steps.push_back(static_cast<long>(parse_num(f[0], p.string())));
        c.mean_reward.push_back(parse_num(f[1], p.string()));
        c.std_reward.push_back(parse_num(f[2], p.string()));
    }
    return c;
}

ordered_json oracle_json(const OracleReport& r) {
    ordered_json j;
    j["kind"] = r.kind;
    j["k_star"] = r.k_star;
    j["rl_steady"] = point_json(r.rl_steady);
    j["oracle_steady"] = point_json(r.oracle_steady);
    j["rl_eval_mean"] = point_json(r.rl_eval_mean);
    j["path_gap_c_hat"] = r.path_gap_c_hat;
    j["path_gap_l"] = r.path_gap_l;
    j["euler_residual"] = r.euler_residual ? ordered_json(*r.euler_residual) : ordered_json(nullptr);
    return j;
}

std::string irf_csv(const OracleReport& r) {
    std::string out = "t,rl,oracle\n";
    for (std::size_t t = 0; t < r.irf_rl.size(); ++t) {
        out += std::to_string(t) + "," + num(r.irf_rl[t]) + "," + num(r.irf_oracle[t]) + "\n";
    }
    return out;
}

OracleReport read_oracle(const fs::path& dir) {
    const auto j = nlohmann::json::parse(read_file(dir / "oracle.json"));
    OracleReport r;
    r.kind = j.at("kind").get<std::string>();
    r.k_star = j.at("k_star").get<double>();
    r.rl_steady = point_from(j.at("rl_steady"));
    r.oracle_steady = point_from(j.at("oracle_steady"));
    r.rl_eval_mean = point_from(j.at("rl_eval_mean"));
    r.path_gap_c_hat = j.at("path_gap_c_hat").get<double>();
    r.path_gap_l = j.at("path_gap_l").get<double>();
    if (!j.at("euler_residual").is_null()) r.euler_residual = j.at("euler_residual").get<double>();
    std::istringstream in(read_file(dir / "irf.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 3) throw ConfigError("irf.csv: expected 3 columns");
        r.irf_rl.push_back(parse_num(f[1], "irf.csv"));
        r.irf_oracle.push_back(parse_num(f[2], "irf.csv"));
    }
    return r;
}

std::string diagnostics_json(const Diagnostics& d) {
    ordered_json j;
    j["mean_c_hat"] = d.mean_c_hat;
    j["mean_l"] = d.mean_l;
    j["gini_wealth_initial"] = d.gini_wealth_initial;
    j["group_mean_c_hat"] = ordered_json::object();
    for (const auto& [g, v] : d.group_mean_c_hat) j["group_mean_c_hat"][g] = v;
    j["agent_mean_c_hat"] = d.agent_mean_c_hat;
    j["agent_mean_l"] = d.agent_mean_l;
    j["agent_action_spread"] = d.agent_action_spread;
    j["mpc_spearman"] = d.mpc_spearman;
    j["mpc_tercile_spread_bottom"] = d.mpc_terciles.bottom;
    j["mpc_tercile_spread_top"] = d.mpc_terciles.top;
    j["mpc_flatness_high_wealth"] = d.mpc_flatness_high_wealth;
    return j.dump(2) + "\n";
}

std::string manifest_json(const ScenarioConfig& config, const std::string& hash, std::uint64_t seed,
                          const SeedResult* result) {
    ordered_json j;
    j["scenario"] = config.id;
    j["seed"] = seed;
    j["config_hash"] = hash;
    j["config_file"] = "config.txt";
    j["n"] = config.economy.n;
    j["per_agent_steps"] = config.schedule.per_agent_steps;
    j["total_steps"] = config.total_steps();
    j["algorithm"] = to_string(config.agent.algorithm);
    if (result) {
        j["gradient_updates"] = result->gradient_updates;
        j["status"] = result->diverged ? "diverged" : "ok";
        if (result->diverged) j["error"] = result->error;
    }
    return j.dump(2) + "\n";
}

std::string mpc_csv(const MpcCurve& mpc, std::uint64_t seed) {
    std::vector<TidyRow> rows;
    for (const auto& b : mpc.bins) {
        const std::string run = "seed_" + std::to_string(seed);
        rows.push_back({run, static_cast<double>(b.bin), b.group, "mean_wealth", b.mean_wealth});
        rows.push_back({run, static_cast<double>(b.bin), b.group, "mean_c_hat", b.mean_c_hat});
        rows.push_back({run, static_cast<double>(b.bin), b.group, "count", static_cast<double>(b.count)});
    }
    std::ostringstream out;
    write_tidy_csv(out, rows);
    return out.str();
}

std::string lorenz_csv(const ScenarioConfig& config, const EvalReport& report, std::uint64_t seed) {
    // Wealth in the last period of the first evaluation episode.
    std::vector<double> last;
    int last_t = -1;
    for (const auto& r : report.records) {
        if (r.episode != 0) continue;
        if (r.t > last_t) {
            last_t = r.t;
            last.clear();
        }
        if (r.t == last_t) last.push_back(r.a);
    }
    std::vector<TidyRow> rows;
    if (!last.empty() && std::any_of(last.begin(), last.end(), [](double x) { return x > 0.0; })) {
        const LorenzCurve c = lorenz(last);
        const std::string run = "seed_" + std::to_string(seed);
        for (std::size_t i = 0; i < c.population.size(); ++i) {
            rows.push_back({run, c.population[i], config.id, "wealth_share", c.wealth[i]});
        }
        rows.push_back({run, 1.0, config.id, "gini_trapezoid", c.gini});
    }
    std::ostringstream out;
    write_tidy_csv(out, rows);
    return out.str();
}

void log_line(const RunOptions& o, const std::string& s) {
    if (o.log) o.log(s);
}

}  // namespace

double OracleReport::gap_c_hat() const {
    // The analytic oracle is a constant policy, compared with the mean evaluated action.
    if (kind == "analytic") return std::abs(rl_eval_mean.consumption_fraction - oracle_steady.consumption_fraction);
    return std::abs(rl_steady.consumption_fraction - oracle_steady.consumption_fraction);
}

double OracleReport::gap_l() const {
    if (kind == "analytic") return std::abs(rl_eval_mean.labour - oracle_steady.labour);
    return std::abs(rl_steady.labour - oracle_steady.labour);
}

double OracleReport::irf_supgap() const {
    double s = 0.0;
    for (std::size_t t = 0; t < irf_rl.size(); ++t) s = std::max(s, std::abs(irf_rl[t] - irf_oracle[t]));
    return s;
}

std::string SummaryMetrics::to_json_text() const {
    nlohmann::json j;  // std::map ordering gives sorted keys
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    j["scenario"] = scenario;
    j["seeds"] = seeds;
    j["gini_wealth"] = gini_wealth;
    j["gini_capital"] = gini_capital;
    j["lom_slope"] = lom.slope;
    j["lom_intercept"] = lom.intercept;
    j["lom_r2"] = lom.r_squared;
    j["policy_gap_chat"] = opt(policy_gap_chat);
    j["policy_gap_l"] = opt(policy_gap_l);
    j["irf_supgap"] = opt(irf_supgap);
    j["best_eval_reward"] = best_eval_reward;
    j["steps"] = steps;
    return j.dump(2) + "\n";
}

std::string group_label(const EconomyParams& params, int i) {
    const auto ui = static_cast<std::size_t>(i);
    return "k" + num(params.kappa[ui]) + "_l" + num(params.lambda[ui]);
}

SummaryMetrics compute_metrics(const ScenarioConfig& config, std::uint64_t seed, const EvalReport& final_eval,
                               const LearningCurve& curve, const OracleReport* oracle) {
    SummaryMetrics m;
    m.scenario = config.id;
    m.seeds = {seed};
    const int n = config.economy.n;
    const int burn = config.evaluation.burn_in;
    m.gini_wealth = mean_cross_section(final_eval, n, burn, [](auto p, auto& row) { return gini_of(p, row, false); });
    m.gini_capital = mean_cross_section(final_eval, n, burn, [](auto p, auto& row) { return gini_of(p, row, true); });
    const auto paths = capital_paths(final_eval);
    try {
        m.lom = law_of_motion_check(paths, burn);
    } catch (const std::invalid_argument&) {
        m.lom = OlsFit{};  // constant aggregate capital: no regression
    }
    if (oracle) {
        m.policy_gap_chat = oracle->gap_c_hat();
        m.policy_gap_l = config.economy.labour_mode == LabourMode::Chosen ? std::optional(oracle->gap_l()) : std::nullopt;
        m.irf_supgap = oracle->irf_supgap();
    }
    // Runs shorter than one eval interval fall back to the final evaluation.
    m.best_eval_reward = curve.mean_reward.empty() ? final_eval.mean_reward : *std::max_element(curve.mean_reward.begin(), curve.mean_reward.end());
    m.steps = config.total_steps();
    return m;
}

Diagnostics compute_diagnostics(const ScenarioConfig& config, const EvalReport& final_eval,
                                const EvalReport& initial_eval, MpcCurve* mpc_out) {
    Diagnostics d;
    const int n = config.economy.n;
    const int burn = config.evaluation.burn_in;
    d.gini_wealth_initial =
        mean_cross_section(initial_eval, n, burn, [](auto p, auto& row) { return gini_of(p, row, false); });
    std::map<std::string, std::pair<double, long>> groups;
    std::vector<double> agent_c(static_cast<std::size_t>(n), 0.0);
    std::vector<double> agent_l(static_cast<std::size_t>(n), 0.0);
    std::vector<long> agent_count(static_cast<std::size_t>(n), 0);
    std::vector<MpcPoint> points;
    double sum_c = 0.0;
    double sum_l = 0.0;
    long count = 0;
    for (const auto& r : final_eval.records) {
        if (r.t < burn) continue;
        const auto a = static_cast<std::size_t>(r.agent);
        const std::string g = group_label(config.economy, r.agent);
        groups[g].first += r.c_hat;
        groups[g].second += 1;
        agent_c[a] += r.c_hat;
        agent_l[a] += r.l;
        agent_count[a] += 1;
        sum_c += r.c_hat;
        sum_l += r.l;
        ++count;
        points.push_back({r.a, r.c_hat, g});
    }
    if (count == 0) throw ConfigError("diagnostics: no periods after burn-in");
    d.mean_c_hat = sum_c / static_cast<double>(count);
    d.mean_l = sum_l / static_cast<double>(count);
    for (const auto& [g, v] : groups) d.group_mean_c_hat[g] = v.first / static_cast<double>(v.second);
    for (std::size_t a = 0; a < agent_c.size(); ++a) {
        d.agent_mean_c_hat.push_back(agent_c[a] / static_cast<double>(agent_count[a]));
        d.agent_mean_l.push_back(agent_l[a] / static_cast<double>(agent_count[a]));
    }
    for (std::size_t a = 0; a < agent_c.size(); ++a) {
        for (std::size_t b = a + 1; b < agent_c.size(); ++b) {
            d.agent_action_spread = std::max({d.agent_action_spread, std::abs(d.agent_mean_c_hat[a] - d.agent_mean_c_hat[b]),
                                              std::abs(d.agent_mean_l[a] - d.agent_mean_l[b])});
        }
    }
    MpcCurve pooled = mpc_curve(points, config.evaluation.mpc_bins, false);
    const auto bins = pooled.group_bins("all");
    if (bins.size() >= 2) {
        std::vector<double> w;
        std::vector<double> c;
        for (const auto& b : bins) {
            w.push_back(b.mean_wealth);
            c.push_back(b.mean_c_hat);
        }
        d.mpc_spearman = spearman(w, c);
    }
    if (bins.size() >= 3) d.mpc_terciles = mpc_tercile_spread(bins);
    d.mpc_flatness_high_wealth = mpc_flatness(bins, 20.0);
    if (mpc_out) {
        MpcCurve grouped = mpc_curve(points, config.evaluation.mpc_bins, true);
        if (grouped.groups.size() > 1) {
            for (auto& b : grouped.bins) pooled.bins.push_back(b);
            for (auto& g : grouped.groups) pooled.groups.push_back(g);
        }
        *mpc_out = std::move(pooled);
    }
    return d;
}

std::shared_ptr<const ValueFunction> solve_oracle(const EconomyParams& params, const Ar1Params& ar1) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const ValueFunction>> cache;
    std::ostringstream key;
    key << num(params.alpha) << '/' << num(params.beta) << '/' << num(params.delta) << '/' << num(params.leisure_weight)
        << '/' << num(params.action_floor) << '/' << num(params.action_ceil) << '/' << static_cast<int>(params.labour_mode)
        << '/' << num(params.employed_labour) << '/' << num(ar1.rho) << '/' << num(ar1.sigma);
    std::lock_guard lock(mu);
    auto& slot = cache[key.str()];
    if (!slot) slot = std::make_shared<const ValueFunction>(value_function_iteration(params, ar1));
    return slot;
}

OracleReport compare_to_oracle(const ScenarioConfig& config, const PolicyFn& policy, const EvalReport& final_eval,
                               std::uint64_t seed) {
    if (config.economy.n != 1 || config.process != ShockProcess::Ar1) {
        throw ConfigError("compare_to_oracle: single-household AR(1) scenarios only");
    }
    const EconomyParams& p = config.economy;
    OracleReport r;
    PolicyFn oracle_policy;
    std::shared_ptr<const ValueFunction> vf;
    const SteadyState ss = deterministic_steady_state(p);
    r.k_star = ss.k_star;
    if (p.delta == 1.0 && p.labour_mode == LabourMode::Chosen) {
        r.kind = "analytic";
        r.oracle_steady = analytic_textbook_policy(p.alpha, p.beta, p.leisure_weight);
        oracle_policy = constant_policy(r.oracle_steady);
    } else {
        r.kind = "vfi";
        vf = solve_oracle(p, config.ar1);
        r.oracle_steady = vf->policy(ss.k_star, 0.0);
        r.euler_residual = max_euler_residual(p, *vf);
        oracle_policy = vfi_policy(*vf);
    }

    // Learned policy at the deterministic steady state.
    {
        Economy env(p, Ar1Params{config.ar1.rho, 0.0}, config.mask);
        EconomyState st;
        st.capital = {ss.k_star};
        st.prev_labour = {ss.l_star};
        st.prev_aggregate_labour = ss.l_star;
        st.shocks = Ar1State{0.0};
        const auto obs = env.reset_to(st);
        const auto a = policy(obs, env);
        r.rl_steady = {a[0].consumption_fraction, a[0].labour};
    }
    // Mean evaluated actions.
    double c = 0.0;
    double l = 0.0;
    for (const auto& rec : final_eval.records) {
        c += rec.c_hat;
        l += rec.l;
    }
    if (!final_eval.records.empty()) {
        r.rl_eval_mean = {c / static_cast<double>(final_eval.records.size()), l / static_cast<double>(final_eval.records.size())};
    }
    // Common path driven by the oracle policy.
    {
        double gc = 0.0;
        double gl = 0.0;
        long count = 0;
        PolicyFn both = [&](const std::vector<Observation>& obs, const Economy& env) {
            const auto o = oracle_policy(obs, env);
            const auto l_act = policy(obs, env);
            gc += std::abs(o[0].consumption_fraction - l_act[0].consumption_fraction);
            gl += std::abs(o[0].labour - l_act[0].labour);
            ++count;
            return o;
        };
        EconomyParams pp = p;
        pp.initial_capital = ss.k_star;
        evaluate_fn(both, pp, config.ar1, config.mask, EvalOptions{1, derive_seed(seed, 5), false});
        r.path_gap_c_hat = gc / static_cast<double>(count);
        r.path_gap_l = gl / static_cast<double>(count);
    }
    const int h = config.evaluation.irf_horizon;
    const double shock = config.evaluation.irf_shock;
    r.irf_rl = oracle_irf(p, config.ar1, config.mask, policy, shock, h, ss.k_star).consumption;
    r.irf_oracle = oracle_irf(p, config.ar1, config.mask, oracle_policy, shock, h, ss.k_star).consumption;
    return r;
}

void write_timeseries(const std::string& dir, const EconomyParams& params, const EvalReport& report) {
    fs::create_directories(dir);
    std::map<int, std::string> files;
    for (const auto& r : report.records) {
        std::string& s = files[r.episode];
        if (s.empty()) s = std::string(kTimeseriesHeader) + "\n";
        s += std::to_string(r.t) + "," + std::to_string(r.agent) + "," + num(r.k) + "," + num(r.l) + "," + num(r.c_hat) +
             "," + num(r.c) + "," + num(r.a) + "," + num(r.w) + "," + num(r.r) + "," + num(r.K) + "," + num(r.L) + "," +
             num(r.Y) + "," + num(r.A) + "," + num(r.reward) + "," + (r.employed ? "1" : "0") + "," +
             group_label(params, r.agent) + "\n";
    }
    for (const auto& [e, s] : files) write_file(fs::path(dir) / ("episode_" + std::to_string(e) + ".csv"), s);
}

EvalReport read_timeseries(const std::string& dir) {
    std::vector<std::pair<int, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("episode_", 0) == 0 && entry.path().extension() == ".csv") {
            files.emplace_back(std::stoi(name.substr(8)), entry.path());
        }
    }
    if (files.empty()) throw ConfigError(dir + ": no episode_*.csv streams");
    std::sort(files.begin(), files.end());
    EvalReport report;
    report.episodes = static_cast<int>(files.size());
    double total = 0.0;
    long count = 0;
    for (const auto& [e, path] : files) {
        std::istringstream in(read_file(path));
        std::string line;
        std::getline(in, line);
        double ep_total = 0.0;
        long ep_count = 0;
        if (line != kTimeseriesHeader) throw ConfigError(path.string() + ": unexpected header");
        int line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto f = split_csv(line);
            const std::string where = path.string() + ":" + std::to_string(line_no);
            if (f.size() != 16) throw ConfigError(where + ": expected 16 columns");
            EvalRecord r{};
            r.episode = e;
            r.t = static_cast<int>(parse_num(f[0], where));
            r.agent = static_cast<int>(parse_num(f[1], where));
            double* fields[] = {&r.k, &r.l, &r.c_hat, &r.c, &r.a, &r.w, &r.r, &r.K, &r.L, &r.Y, &r.A, &r.reward};
            for (std::size_t k = 0; k < 12; ++k) *fields[k] = parse_num(f[k + 2], where);
            r.employed = f[14] == "1";
            report.records.push_back(r);
            ep_total += r.reward;
            ++ep_count;
        }
        if (ep_count > 0) report.episode_mean_reward.push_back(ep_total / static_cast<double>(ep_count));
        total += ep_total;
        count += ep_count;
    }
    if (count > 0) report.mean_reward = total / static_cast<double>(count);
    return report;
}

RunResult run(const ScenarioConfig& input, const RunOptions& options) {
    ScenarioConfig config = input;
    config.agent.gamma = config.economy.beta;
    config.validate();
    RunResult result;
    result.config = config;
    result.config_text = to_config_text(config);
    result.config_hash = git_blob_hash(result.config_text);
    result.dir = options.out_dir.empty() ? (fs::path(config.out_dir) / config.id).string() : options.out_dir;
    if (options.write) {
        fs::create_directories(result.dir);
        write_file(fs::path(result.dir) / "config.txt", result.config_text);
    }
    const bool want_oracle = config.evaluation.oracle && config.economy.n == 1 && config.process == ShockProcess::Ar1;
    if (want_oracle && config.economy.delta < 1.0) {
        log_line(options, "solving VFI oracle");
        solve_oracle(config.economy, config.ar1);
    }

    result.seeds.resize(config.seeds.size());
    auto run_seed = [&](std::size_t idx) {
        SeedResult& s = result.seeds[idx];
        s.seed = config.seeds[idx];
        s.dir = (fs::path(result.dir) / ("seed_" + std::to_string(s.seed))).string();
        const fs::path dir(s.dir);
        if (options.write) {
            fs::create_directories(dir);
            write_file(dir / "config.txt", result.config_text);
            write_file(dir / "manifest.json", manifest_json(config, result.config_hash, s.seed, nullptr));
        }
        log_line(options, config.id + " seed " + std::to_string(s.seed) + ": training");
        std::optional<TrainResult> trained;
        try {
            trained.emplace(train(config.economy, config.shock_spec(), config.mask, config.agent, config.schedule, s.seed,
                                  [&](long step, double mean, double sd) {
                                      if (step == 0) return;
                                      s.curve.steps.push_back(step);
                                      s.curve.mean_reward.push_back(mean);
                                      s.curve.std_reward.push_back(sd);
                                  }));
        } catch (const TrainingDivergedError& e) {
            s.diverged = true;
            s.error = e.what();
            log_line(options, config.id + " seed " + std::to_string(s.seed) + ": diverged: " + e.what());
            if (options.write) {
                write_file(dir / "learning_curve.csv", curve_csv(s.curve));
                write_file(dir / "manifest.json", manifest_json(config, result.config_hash, s.seed, &s));
            }
            return;
        }
        s.gradient_updates = trained->gradient_updates;
        s.initial_eval = std::move(trained->initial_eval);
        s.final_eval = evaluate(trained->policy, config.economy, config.shock_spec(), config.mask,
                                EvalOptions{config.evaluation.episodes, derive_seed(s.seed, 6), true});
        if (want_oracle) {
            s.oracle = compare_to_oracle(config, learned_policy(trained->policy), s.final_eval, s.seed);
        }
        s.metrics = compute_metrics(config, s.seed, s.final_eval, s.curve, s.oracle ? &*s.oracle : nullptr);
        s.diagnostics = compute_diagnostics(config, s.final_eval, s.initial_eval, &s.mpc);
        if (options.write) {
            write_file(dir / "manifest.json", manifest_json(config, result.config_hash, s.seed, &s));
            write_file(dir / "learning_curve.csv", curve_csv(s.curve));
            write_timeseries((dir / "timeseries").string(), config.economy, s.final_eval);
            write_timeseries((dir / "timeseries_initial").string(), config.economy, s.initial_eval);
            if (s.oracle) {
                write_file(dir / "oracle.json", oracle_json(*s.oracle).dump(2) + "\n");
                write_file(dir / "irf.csv", irf_csv(*s.oracle));
            }
            write_file(dir / "metrics.json", s.metrics.to_json_text());
            write_file(dir / "diagnostics.json", diagnostics_json(s.diagnostics));
            write_file(dir / "mpc.csv", mpc_csv(s.mpc, s.seed));
            write_file(dir / "lorenz.csv", lorenz_csv(config, s.final_eval, s.seed));
            trained->policy.save((dir / "checkpoints").string(), result.config_hash);
        }
        if (options.keep_policies) s.policy = std::make_shared<SharedPolicy>(std::move(trained->policy));
        log_line(options, config.id + " seed " + std::to_string(s.seed) + ": done");
    };

    const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(config.seeds.size())));
    if (jobs == 1) {
        for (std::size_t i = 0; i < config.seeds.size(); ++i) run_seed(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) {
            pool.emplace_back([&, j] {
                try {
                    for (std::size_t i = next++; i < config.seeds.size(); i = next++) run_seed(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(j)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    // Aggregate over seeds that finished.
    std::vector<const SeedResult*> ok;
    for (const auto& s : result.seeds) {
        if (!s.diverged) ok.push_back(&s);
    }
    SummaryMetrics& agg = result.aggregate;
    agg.scenario = config.id;
    agg.seeds = config.seeds;
    agg.steps = config.total_steps();
    if (!ok.empty()) {
        const double k = static_cast<double>(ok.size());
        auto mean_opt = [&](auto getter) -> std::optional<double> {
            double total = 0.0;
            for (const auto* s : ok) {
                const std::optional<double> v = getter(s->metrics);
                if (!v) return std::nullopt;
                total += *v;
            }
            return total / k;
        };
        agg.gini_wealth = *mean_opt([](const SummaryMetrics& m) { return std::optional(m.gini_wealth); });
        agg.gini_capital = *mean_opt([](const SummaryMetrics& m) { return std::optional(m.gini_capital); });
        agg.lom.slope = *mean_opt([](const SummaryMetrics& m) { return std::optional(m.lom.slope); });
        agg.lom.intercept = *mean_opt([](const SummaryMetrics& m) { return std::optional(m.lom.intercept); });
        agg.lom.r_squared = *mean_opt([](const SummaryMetrics& m) { return std::optional(m.lom.r_squared); });
        agg.policy_gap_chat = mean_opt([](const SummaryMetrics& m) { return m.policy_gap_chat; });
        agg.policy_gap_l = mean_opt([](const SummaryMetrics& m) { return m.policy_gap_l; });
        agg.irf_supgap = mean_opt([](const SummaryMetrics& m) { return m.irf_supgap; });
        agg.best_eval_reward = *mean_opt([](const SummaryMetrics& m) { return std::optional(m.best_eval_reward); });
        std::vector<LearningCurve> curves;
        for (const auto* s : ok) curves.push_back(s->curve);
        result.band = aggregate_learning_curves(curves);
    }
    if (options.write) {
        write_file(fs::path(result.dir) / "metrics.json", agg.to_json_text());
        if (result.band) {
            std::vector<TidyRow> rows;
            for (std::size_t i = 0; i < result.band->steps.size(); ++i) {
                const double x = static_cast<double>(result.band->steps[i]);
                rows.push_back({config.id, x, "all", "median", result.band->median[i]});
                rows.push_back({config.id, x, "all", "p25", result.band->p25[i]});
                rows.push_back({config.id, x, "all", "p75", result.band->p75[i]});
            }
            std::ofstream out(fs::path(result.dir) / "learning_curve_band.csv", std::ios::binary);
            write_tidy_csv(out, rows);
        }
    }
    std::vector<std::string> diverged;
    for (const auto& s : result.seeds) {
        if (s.diverged) diverged.push_back(std::to_string(s.seed));
    }
    if (!diverged.empty()) {
        std::string list;
        for (const auto& d : diverged) list += (list.empty() ? "" : ",") + d;
        throw TrainingDivergedError("training diverged for seed(s) " + list + "; partial artifacts kept in " + result.dir);
    }
    return result;
}

std::optional<RunResult> load_run(const std::string& dir, const ScenarioConfig& input) {
    ScenarioConfig config = input;
    config.agent.gamma = config.economy.beta;
    RunResult result;
    result.config = config;
    result.config_text = to_config_text(config);
    result.config_hash = git_blob_hash(result.config_text);
    result.dir = dir;
    const fs::path root(dir);
    if (!fs::exists(root / "config.txt") || read_file(root / "config.txt") != result.config_text) return std::nullopt;
    if (!fs::exists(root / "metrics.json")) return std::nullopt;
    std::vector<LearningCurve> curves;
    for (std::uint64_t seed : config.seeds) {
        SeedResult s;
        s.seed = seed;
        const fs::path sd = root / ("seed_" + std::to_string(seed));
        s.dir = sd.string();
        if (!fs::exists(sd / "metrics.json") || !fs::exists(sd / "timeseries_initial")) return std::nullopt;
        const auto manifest = nlohmann::json::parse(read_file(sd / "manifest.json"));
        if (manifest.value("status", "") != "ok" || manifest.at("config_hash").get<std::string>() != result.config_hash) {
            return std::nullopt;
        }
        s.gradient_updates = manifest.at("gradient_updates").get<long>();
        s.curve = read_curve(sd / "learning_curve.csv");
        s.final_eval = read_timeseries((sd / "timeseries").string());
        s.initial_eval = read_timeseries((sd / "timeseries_initial").string());
        if (fs::exists(sd / "oracle.json")) s.oracle = read_oracle(sd);
        s.metrics = compute_metrics(config, seed, s.final_eval, s.curve, s.oracle ? &*s.oracle : nullptr);
        s.diagnostics = compute_diagnostics(config, s.final_eval, s.initial_eval, &s.mpc);
        curves.push_back(s.curve);
        result.seeds.push_back(std::move(s));
    }
    result.band = aggregate_learning_curves(curves);
    const auto agg = nlohmann::json::parse(read_file(root / "metrics.json"));
    result.aggregate.scenario = config.id;
    result.aggregate.seeds = config.seeds;
    result.aggregate.gini_wealth = agg.at("gini_wealth").get<double>();
    result.aggregate.gini_capital = agg.at("gini_capital").get<double>();
    result.aggregate.lom = {agg.at("lom_slope").get<double>(), agg.at("lom_intercept").get<double>(),
                            agg.at("lom_r2").get<double>(), 0};
    auto opt = [&](const char* k) -> std::optional<double> {
        return agg.at(k).is_null() ? std::nullopt : std::optional(agg.at(k).get<double>());
    };
    result.aggregate.policy_gap_chat = opt("policy_gap_chat");
    result.aggregate.policy_gap_l = opt("policy_gap_l");
    result.aggregate.irf_supgap = opt("irf_supgap");
    result.aggregate.best_eval_reward = agg.at("best_eval_reward").get<double>();
    result.aggregate.steps = agg.at("steps").get<long>();
    return result;
}

SummaryMetrics recompute_seed_metrics(const std::string& seed_dir) {
    const fs::path dir(seed_dir);
    const std::string text = read_file(dir / "config.txt");
    const ScenarioConfig config = parse_config(text, (dir / "config.txt").string());
    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    if (manifest.at("config_hash").get<std::string>() != git_blob_hash(text)) {
        throw ConfigError(seed_dir + ": config.txt does not match the manifest hash");
    }
    const auto seed = manifest.at("seed").get<std::uint64_t>();
    const EvalReport final_eval = read_timeseries((dir / "timeseries").string());
    const LearningCurve curve = read_curve(dir / "learning_curve.csv");
    std::optional<OracleReport> oracle;
    if (fs::exists(dir / "oracle.json")) oracle = read_oracle(dir);
    return compute_metrics(config, seed, final_eval, curve, oracle ? &*oracle : nullptr);
}

RecomputeReport recompute_metrics(const std::string& run_dir, bool rewrite) {
    RecomputeReport report;
    std::vector<fs::path> seeds;
    const fs::path root(run_dir);
    if (!fs::is_directory(root)) throw ConfigError(run_dir + ": not a directory");
    if (fs::exists(root / "timeseries")) {
        seeds.push_back(root);
    } else {
        for (const auto& e : fs::directory_iterator(root)) {
            if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0) seeds.push_back(e.path());
        }
        std::sort(seeds.begin(), seeds.end());
    }
    if (seeds.empty()) throw ConfigError(run_dir + ": no seed directories with stored streams");
    for (const auto& d : seeds) {
        if (!fs::exists(d / "timeseries")) continue;  // diverged seed
        const std::string text = recompute_seed_metrics(d.string()).to_json_text();
        const fs::path target = d / "metrics.json";
        report.checked.push_back(target.string());
        if (!fs::exists(target) || read_file(target) != text) report.mismatched.push_back(target.string());
        if (rewrite) write_file(target, text);
    }
    return report;
}

}  // namespace marlbc
