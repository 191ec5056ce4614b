#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cli.hpp"
#include "marlbc/acceptance.hpp"
#include "marlbc/config.hpp"
#include "marlbc/error.hpp"
#include "marlbc/runner.hpp"

using namespace marlbc;
namespace fs = std::filesystem;
using doctest::Approx;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("marlbc_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli_main(args, out, err);
    return {code, out.str(), err.str()};
}

ScenarioConfig tiny(const std::string& id) {
    ScenarioConfig c = preset(id);
    c.seeds = {0};
    c.economy.horizon = 40;
    c.schedule.per_agent_steps = 200;
    c.schedule.eval_interval = 100;
    c.schedule.eval_episodes = 1;
    c.evaluation.episodes = 2;
    c.evaluation.burn_in = 10;
    c.agent.hidden = {8, 8};
    c.agent.batch_size = 16;
    return c;
}

std::vector<std::string> concrete_presets() {
    std::vector<std::string> ids = preset_ids();
    for (auto& id : ids) {
        if (id == "rbc_grid_scale(m)") id = "rbc_grid_scale(3)";
    }
    return ids;
}

}  // namespace

TEST_CASE("presets") {
    const ScenarioConfig ks = preset("ks");
    CHECK(ks.economy.n == 20);
    CHECK(ks.economy.leisure_weight == 0.0);
    CHECK(ks.economy.labour_mode == LabourMode::ExogenousEmployment);
    CHECK(ks.economy.employed_labour == 1.11);
    CHECK(ks.mask == ObservationMask::parse("k,l_prev,K,A"));

    const ScenarioConfig mild = preset("ks_hetero_mild");
    CHECK(std::count(mild.economy.kappa.begin(), mild.economy.kappa.end(), 0.8) == 3);
    CHECK(std::count(mild.economy.kappa.begin(), mild.economy.kappa.end(), 1.0) == 14);
    CHECK(std::count(mild.economy.kappa.begin(), mild.economy.kappa.end(), 1.2) == 3);
    const ScenarioConfig marked = preset("ks_hetero_marked");
    CHECK(std::count(marked.economy.kappa.begin(), marked.economy.kappa.end(), 0.0) == 3);

    const ScenarioConfig tb = preset("rbc_textbook");
    CHECK(tb.economy.n == 1);
    CHECK(tb.economy.delta == 1.0);
    CHECK(tb.economy.leisure_weight == 5.0);
    CHECK(tb.agent.algorithm == Algorithm::Ddpg);
    CHECK(preset("rbc_partial").economy.delta == 0.025);
    CHECK(preset("rbc_grid").economy.n == 9);
    CHECK(preset("rbc_grid_scale(23)").economy.n == 529);
    CHECK(preset("rbc_grid_scale_3").id == "rbc_grid_scale_3");
    CHECK_THROWS_AS(preset("nope"), ConfigError);
    for (const auto& id : concrete_presets()) {
        const ScenarioConfig c = preset(id);
        CHECK_NOTHROW(c.validate());
        CHECK(c.total_steps() == c.economy.n * c.schedule.per_agent_steps);
        CHECK(!c.seeds.empty());
    }
}

TEST_CASE("config text round trip") {
    for (const auto& id : concrete_presets()) {
        const std::string text = to_config_text(preset(id));
        CHECK(to_config_text(parse_config(text)) == text);
    }
}

TEST_CASE("config base key and overrides") {
    const ScenarioConfig c = parse_config(
        "[scenario]\nbase = rbc_partial\nid = custom_partial\n\n[agent]\nalgorithm = td3\nhidden:list<int> = 32*2\n"
        "[schedule]\nseeds = 4, 5\nper_agent_steps = 5000 # short\n");
    CHECK(c.id == "custom_partial");
    CHECK(c.economy.delta == 0.025);
    CHECK(c.agent.algorithm == Algorithm::Td3);
    CHECK(c.agent.n_critics == 2);
    CHECK(c.agent.hidden == std::vector<int>{32, 32});
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(c.schedule.per_agent_steps == 5000);
}

TEST_CASE("config errors carry the line and key") {
    auto message = [](const std::string& text) {
        try {
            parse_config(text, "cfg");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const std::string bad_num = message("[economy]\n\nalpha = 0.3x\n");
    CHECK(bad_num.find("cfg:3") != std::string::npos);
    CHECK(bad_num.find("economy.alpha") != std::string::npos);
    CHECK(message("[economy]\nbogus = 1\n").find("unknown key 'economy.bogus'") != std::string::npos);
    CHECK(message("[economy]\nalpha = 0.3\nalpha = 0.3\n").find("cfg:3: duplicate") != std::string::npos);
    CHECK(message("[economy]\nalpha:int = 1\n").find("has type real") != std::string::npos);
    CHECK(message("[nope]\n").find("unknown section") != std::string::npos);
    CHECK(message("alpha = 1\n").find("outside of any section") != std::string::npos);
    CHECK(message("[scenario]\nbase = missing\n").find("unknown preset") != std::string::npos);
    CHECK(message("[schedule]\nseeds:list<int> = \n").find("seeds") != std::string::npos);
    CHECK(message("[economy]\nlabour_mode = exogenous\nleisure_weight = 0\n").find("ks shock process") != std::string::npos);
}

TEST_CASE("config hash is the git blob hash") {
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("compare_to_oracle on the oracle itself gives zero gaps") {
    ScenarioConfig c = preset("rbc_textbook");
    const PolicyPoint eq12 = analytic_textbook_policy(0.36, 0.95, 5.0);
    const PolicyFn fn = constant_policy(eq12);
    const EvalReport eval = evaluate_fn(fn, c.economy, c.shock_spec(), c.mask, EvalOptions{2, 1, true});
    const OracleReport r = compare_to_oracle(c, fn, eval, 0);
    CHECK(r.kind == "analytic");
    CHECK(r.gap_c_hat() < 1e-12);
    CHECK(r.gap_l() < 1e-12);
    CHECK(r.irf_supgap() == 0.0);
    CHECK(r.path_gap_c_hat == 0.0);
}

TEST_CASE("partial depreciation dispatches to VFI") {
    ScenarioConfig c = preset("rbc_partial");
    const auto vf = solve_oracle(c.economy, c.ar1);
    const PolicyFn fn = vfi_policy(*vf);
    const EvalReport eval = evaluate_fn(fn, c.economy, c.shock_spec(), c.mask, EvalOptions{1, 1, true});
    const OracleReport r = compare_to_oracle(c, fn, eval, 0);
    CHECK(r.kind == "vfi");
    CHECK(r.gap_c_hat() == 0.0);
    CHECK(r.gap_l() == 0.0);
    CHECK(r.irf_supgap() == 0.0);
    CHECK(r.euler_residual.has_value());
}

TEST_CASE("run writes artifacts and is reproducible") {
    const ScenarioConfig c = tiny("rbc_textbook");
    const fs::path a = scratch("run_a");
    const fs::path b = scratch("run_b");
    RunOptions oa;
    oa.out_dir = a.string();
    RunOptions ob;
    ob.out_dir = b.string();
    const RunResult ra = run(c, oa);
    run(c, ob);
    CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));
    CHECK(slurp(a / "seed_0" / "metrics.json") == slurp(b / "seed_0" / "metrics.json"));
    CHECK(slurp(a / "seed_0" / "timeseries" / "episode_0.csv") == slurp(b / "seed_0" / "timeseries" / "episode_0.csv"));

    const auto m = nlohmann::json::parse(slurp(a / "seed_0" / "metrics.json"));
    for (const char* key : {"scenario", "seeds", "gini_wealth", "gini_capital", "lom_slope", "lom_intercept", "lom_r2",
                            "policy_gap_chat", "policy_gap_l", "irf_supgap", "best_eval_reward", "steps"}) {
        CHECK(m.contains(key));
    }
    CHECK(m.size() == 12);
    CHECK(m.at("steps").get<long>() == 200);
    const PolicyPoint eq12 = analytic_textbook_policy(0.36, 0.95, 5.0);
    CHECK(m.at("policy_gap_chat").get<double>() ==
          Approx(std::abs(ra.seeds[0].oracle->rl_eval_mean.consumption_fraction - eq12.consumption_fraction)));

    const std::string header = slurp(a / "seed_0" / "timeseries" / "episode_0.csv").substr(0, 80);
    CHECK(header.rfind("t,agent_id,k,l,c_hat,c,a,w,r,K,L,Y,A,reward,employed,group\n", 0) == 0);
    const auto manifest = nlohmann::json::parse(slurp(a / "seed_0" / "manifest.json"));
    CHECK(manifest.at("config_hash").get<std::string>() == git_blob_hash(slurp(a / "seed_0" / "config.txt")));
    CHECK(fs::exists(a / "seed_0" / "learning_curve.csv"));
    CHECK(fs::exists(a / "seed_0" / "checkpoints"));

    const RecomputeReport rec = recompute_metrics(a.string());
    CHECK(rec.checked.size() == 1);
    CHECK(rec.mismatched.empty());

    const auto loaded = load_run(a.string(), c);
    REQUIRE(loaded.has_value());
    CHECK(loaded->seeds[0].metrics.to_json_text() == ra.seeds[0].metrics.to_json_text());
    ScenarioConfig other = c;
    other.schedule.per_agent_steps = 300;
    CHECK_FALSE(load_run(a.string(), other).has_value());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("KS run reports the law of motion and inequality") {
    ScenarioConfig c = tiny("ks");
    c.economy.horizon = 60;
    const fs::path d = scratch("run_ks");
    RunOptions o;
    o.out_dir = d.string();
    const RunResult r = run(c, o);
    const auto m = nlohmann::json::parse(slurp(d / "seed_0" / "metrics.json"));
    CHECK(m.at("lom_r2").is_number());
    CHECK(m.at("gini_wealth").get<double>() >= 0.0);
    CHECK(m.at("policy_gap_chat").is_null());
    CHECK(m.at("steps").get<long>() == 20 * 200);
    CHECK(r.seeds[0].diagnostics.group_mean_c_hat.size() == 1);
    fs::remove_all(d);
}

TEST_CASE("cli: oracle, validate-config and errors") {
    CliResult r = cli({"oracle", "rbc_textbook"});
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("c_hat_star").get<double>() == Approx(0.658).epsilon(1e-12));
    CHECK(j.at("l_star").get<double>() == Approx(0.155172).epsilon(1e-6));

    r = cli({"validate-config", "ks"});
    CHECK(r.code == 0);
    for (const auto& e : fs::directory_iterator(MARLBC_CONFIG_DIR)) {
        r = cli({"validate-config", e.path().string()});
        CHECK_MESSAGE(r.code == 0, e.path().string() << ": " << r.err);
    }

    r = cli({"frobnicate"});
    CHECK(r.code != 0);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(nlohmann::json::parse(r.err.substr(0, r.err.find('\n'))).at("error").at("type") == "UsageError");

    r = cli({});
    CHECK(r.code != 0);
    r = cli({"run", "missing_preset_or_file"});
    CHECK(r.code != 0);
    CHECK(nlohmann::json::parse(r.err).at("error").at("type") == "ConfigError");
    r = cli({"run", "ks", "--algo", "ppo"});
    CHECK(r.code != 0);
    r = cli({"run", "ks", "--seeds", "1,x"});
    CHECK(r.code != 0);
    r = cli({"reproduce", "fig9"});
    CHECK(r.code != 0);
    r = cli({"metrics", "/nonexistent/dir"});
    CHECK(r.code != 0);
}

TEST_CASE("cli: run and metrics") {
    const fs::path d = scratch("cli_run");
    const fs::path cfg = scratch("cli_cfg.txt");
    {
        std::ofstream f(cfg);
        f << "[scenario]\nbase = rbc_partial\nid = cli_small\n[economy]\nhorizon = 30\n[agent]\nhidden = 8*2\n"
             "batch_size = 16\n[schedule]\neval_interval = 50\neval_episodes = 1\n[evaluation]\nepisodes = 1\nburn_in = 5\n";
    }
    CliResult r = cli({"run", cfg.string(), "--seeds", "3", "--steps", "100", "--algo", "td3", "--out", d.string(), "--quiet"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("metrics").at("steps").get<long>() == 100);
    CHECK(fs::exists(d / "seed_3" / "metrics.json"));
    CHECK(slurp(d / "seed_3" / "config.txt").find("algorithm:string = td3") != std::string::npos);

    r = cli({"metrics", d.string(), "--check"});
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).at("mismatched").empty());
    {
        std::ofstream f(d / "seed_3" / "metrics.json", std::ios::app);
        f << " ";
    }
    r = cli({"metrics", d.string(), "--check"});
    CHECK(r.code != 0);
    r = cli({"metrics", d.string(), "--write"});
    CHECK(r.code == 0);
    r = cli({"metrics", d.string(), "--check"});
    CHECK(r.code == 0);
    fs::remove_all(d);
    fs::remove(cfg);
}

TEST_CASE("figure ids map onto criteria") {
    CHECK(criteria_for_figure("fig3-left") == std::vector<int>{1});
    CHECK(criteria_for_figure("all").size() == 12);
    for (const auto& f : figure_ids()) CHECK_NOTHROW(criteria_for_figure(f));
    CHECK_THROWS_AS(criteria_for_figure("fig7"), ConfigError);
}
