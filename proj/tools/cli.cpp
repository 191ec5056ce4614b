#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "marlbc/acceptance.hpp"
#include "marlbc/config.hpp"
#include "marlbc/error.hpp"
#include "marlbc/oracle.hpp"
#include "marlbc/runner.hpp"

namespace marlbc {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

class AcceptanceFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string error_type(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
    if (dynamic_cast<const ProtocolError*>(&e)) return "ProtocolError";
    if (dynamic_cast<const DegenerateEconomyError*>(&e)) return "DegenerateEconomyError";
    if (dynamic_cast<const TrainingDivergedError*>(&e)) return "TrainingDivergedError";
    if (dynamic_cast<const SolverError*>(&e)) return "SolverError";
    if (dynamic_cast<const AcceptanceFailure*>(&e)) return "AcceptanceFailure";
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return "FilesystemError";
    return "Error";
}

void report_error(std::ostream& err, const std::string& command, const std::string& type, const std::string& message) {
    ordered_json j;
    j["error"] = {{"command", command}, {"type", type}, {"message", message}};
    err << j.dump() << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
            throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
        }
        seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw ConfigError("--seeds: empty list");
    return seeds;
}

ordered_json point(const PolicyPoint& p) { return {{"c_hat", p.consumption_fraction}, {"l", p.labour}}; }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << text;
}

struct RunArgs {
    std::string config;
    std::string seeds;
    long steps = 0;
    std::string algo;
    std::string out;
    int jobs = 1;
    bool quiet = false;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
    ScenarioConfig c = load_config(a.config);
    if (!a.algo.empty()) c.agent = with_algorithm(c.agent, algorithm_from_string(a.algo));
    if (!a.seeds.empty()) c.seeds = parse_seeds(a.seeds);
    if (a.steps > 0) c.schedule.per_agent_steps = a.steps;
    c.validate();
    RunOptions o;
    o.out_dir = a.out;
    o.jobs = std::max(1, a.jobs);
    if (!a.quiet) o.log = [&err](const std::string& s) { err << s << "\n"; };
    const RunResult r = run(c, o);
    ordered_json j;
    j["run_dir"] = r.dir;
    j["config_hash"] = r.config_hash;
    j["metrics"] = nlohmann::ordered_json::parse(r.aggregate.to_json_text());
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_oracle(const std::string& id, bool force_vfi, const std::string& out_dir, std::ostream& out) {
    const ScenarioConfig c = load_config(id);
    const EconomyParams& e = c.economy;
    ordered_json j;
    j["scenario"] = c.id;
    const SteadyState ss = deterministic_steady_state(e);
    const bool single = e.n == 1 && c.process == ShockProcess::Ar1;
    if (e.delta == 1.0) {
        const PolicyPoint a = analytic_textbook_policy(e.alpha, e.beta, e.leisure_weight);
        j["oracle_kind"] = "analytic";
        j["c_hat_star"] = a.consumption_fraction;
        j["l_star"] = a.labour;
        j["exact_optimum"] = point(full_depreciation_optimum(e.alpha, e.beta, e.leisure_weight));
    } else {
        j["oracle_kind"] = single ? "vfi" : "steady_state";
        j["c_hat_star"] = ss.c_hat_star;
        j["l_star"] = ss.l_star;
    }
    j["steady_state"] = {{"k", ss.k_star}, {"l", ss.l_star},   {"c", ss.c_star}, {"a", ss.a_star},
                         {"c_hat", ss.c_hat_star}, {"y", ss.y_star}, {"r", ss.r_star}, {"w", ss.w_star}};
    j["steady_state"]["fixed_point_error"] = steady_state_fixed_point_error(e, ss);
    if (c.process == ShockProcess::Ks) {
        const KsMatrix m = c.ks.joint_transition;
        validate_ks_matrix(m, c.ks.unemployment_good, c.ks.unemployment_bad);
        ordered_json rows = ordered_json::array();
        for (const auto& row : m) rows.push_back(ordered_json(std::vector<double>(row.begin(), row.end())));
        j["ks_transition"] = {{"states", {"bad_u", "bad_e", "good_u", "good_e"}}, {"matrix", rows}, {"identities", "ok"}};
    }
    std::shared_ptr<const ValueFunction> vf;
    if (single && (e.delta < 1.0 || force_vfi)) {
        vf = solve_oracle(e, c.ar1);
        j["vfi"] = {{"iterations", vf->iterations},
                    {"sup_norm", vf->sup_norm_history.empty() ? 0.0 : vf->sup_norm_history.back()},
                    {"euler_residual", max_euler_residual(e, *vf)},
                    {"n_k", vf->n_k()},
                    {"n_z", vf->n_z()},
                    {"at_steady_state", point(vf->policy(ss.k_star, 0.0))}};
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(fs::path(out_dir) / "oracle.json", j.dump(2) + "\n");
        if (vf) {
            std::ostringstream csv;
            csv << std::setprecision(17) << "k,z,c_hat,l,v\n";
            for (int ik = 0; ik < vf->n_k(); ++ik) {
                for (int iz = 0; iz < vf->n_z(); ++iz) {
                    csv << vf->k_grid[static_cast<std::size_t>(ik)] << "," << vf->z_chain.grid[static_cast<std::size_t>(iz)]
                        << "," << vf->c_hat(ik, iz) << "," << vf->l(ik, iz) << "," << vf->v(ik, iz) << "\n";
                }
            }
            write_text(fs::path(out_dir) / "vfi_policy.csv", csv.str());
        }
    }
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_metrics(const std::string& dir, bool write, bool check, std::ostream& out) {
    const RecomputeReport r = recompute_metrics(dir, write);
    ordered_json j;
    j["run_dir"] = dir;
    ordered_json seeds = ordered_json::object();
    for (const auto& p : r.checked) {
        const fs::path seed_dir = fs::path(p).parent_path();
        seeds[seed_dir.filename().string()] = ordered_json::parse(recompute_seed_metrics(seed_dir.string()).to_json_text());
    }
    j["metrics"] = seeds;
    j["checked"] = r.checked.size();
    j["mismatched"] = r.mismatched;
    j["rewritten"] = write;
    out << j.dump(2) << "\n";
    if (check && !r.mismatched.empty()) {
        throw AcceptanceFailure(std::to_string(r.mismatched.size()) + " stored metrics.json file(s) differ from the recomputed metrics");
    }
    return 0;
}

int cmd_validate(const std::string& path, std::ostream& out) {
    const ScenarioConfig c = load_config(path);
    c.validate();
    const std::string text = to_config_text(c);
    ordered_json j;
    j["valid"] = true;
    j["scenario"] = c.id;
    j["n"] = c.economy.n;
    j["algorithm"] = to_string(c.agent.algorithm);
    j["total_steps"] = c.total_steps();
    j["config_hash"] = git_blob_hash(text);
    out << j.dump(2) << "\n";
    return 0;
}

struct ReproduceArgs {
    std::string figure;
    std::string seeds = "0,1,2";
    std::string work_dir = "acceptance_runs";
    int jobs = 1;
    bool fresh = false;
    bool quiet = false;
    std::string unit_tests;
};

int cmd_reproduce(const ReproduceArgs& a, std::ostream& out, std::ostream& err) {
    const std::vector<int> ids = criteria_for_figure(a.figure);
    AcceptanceOptions o;
    o.seeds = parse_seeds(a.seeds);
    o.work_dir = a.work_dir;
    o.reuse = !a.fresh;
    o.jobs = std::max(1, a.jobs);
    o.unit_test_command = a.unit_tests;
    if (!a.quiet) o.log = [&err](const std::string& s) { err << s << "\n"; };
    AcceptanceSuite suite(o);
    int failed = 0;
    for (int id : ids) {
        const CriterionResult r = suite.evaluate(id);
        out << format_result(r) << std::endl;
        failed += r.pass ? 0 : 1;
    }
    if (failed > 0) {
        throw AcceptanceFailure(std::to_string(failed) + " of " + std::to_string(ids.size()) + " criteria failed for " + a.figure);
    }
    return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-agent RL business-cycle simulator", "marlbc"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Train and evaluate a preset or config file");
    run_cmd->add_option("config", run_args.config, "Preset id or config path")->required();
    run_cmd->add_option("--seeds", run_args.seeds, "Comma-separated seeds");
    run_cmd->add_option("--steps", run_args.steps, "Per-agent training steps")->check(CLI::PositiveNumber);
    run_cmd->add_option("--algo", run_args.algo, "ddpg, td3 or sac")->check(CLI::IsMember({"ddpg", "td3", "sac"}));
    run_cmd->add_option("--out", run_args.out, "Run directory (default <out_dir>/<id>)");
    run_cmd->add_option("--jobs", run_args.jobs, "Seeds trained in parallel")->check(CLI::PositiveNumber);
    run_cmd->add_flag("--quiet", run_args.quiet, "No progress output");

    std::string oracle_id;
    std::string oracle_out;
    bool oracle_vfi = false;
    auto* oracle_cmd = app.add_subcommand("oracle", "Solve and emit oracle artifacts");
    oracle_cmd->add_option("preset", oracle_id, "Preset id or config path")->required();
    oracle_cmd->add_option("--out", oracle_out, "Directory for oracle.json and VFI tables");
    oracle_cmd->add_flag("--vfi", oracle_vfi, "Also run VFI when the closed form applies");

    std::string metrics_dir;
    bool metrics_write = false;
    bool metrics_check = false;
    auto* metrics_cmd = app.add_subcommand("metrics", "Recompute metrics from stored streams");
    metrics_cmd->add_option("run-dir", metrics_dir, "Run or seed directory")->required();
    metrics_cmd->add_flag("--write", metrics_write, "Rewrite metrics.json files");
    metrics_cmd->add_flag("--check", metrics_check, "Fail when stored metrics differ");

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate-config", "Parse and validate a config");
    validate_cmd->add_option("path", validate_path, "Config path or preset id")->required();

    ReproduceArgs rep;
    auto* reproduce_cmd = app.add_subcommand("reproduce", "Run the acceptance criteria behind a figure");
    reproduce_cmd->add_option("figure-id", rep.figure, "One of: " + [] {
        std::string s;
        for (const auto& f : figure_ids()) s += (s.empty() ? "" : ", ") + f;
        return s;
    }())->required();
    reproduce_cmd->add_option("--seeds", rep.seeds, "Comma-separated seeds");
    reproduce_cmd->add_option("--work-dir", rep.work_dir, "Directory for trained runs");
    reproduce_cmd->add_option("--jobs", rep.jobs, "Seeds trained in parallel")->check(CLI::PositiveNumber);
    reproduce_cmd->add_option("--unit-tests", rep.unit_tests, "Command run for the unit-suite criterion");
    reproduce_cmd->add_flag("--fresh", rep.fresh, "Retrain instead of reusing finished runs");
    reproduce_cmd->add_flag("--quiet", rep.quiet, "No progress output");

    if (!args.empty() && !args.front().empty() && args.front()[0] != '-') {
        const auto subs = app.get_subcommands([](CLI::App*) { return true; });
        const bool known = std::any_of(subs.begin(), subs.end(), [&](CLI::App* s) { return s->get_name() == args.front(); });
        if (!known) {
            report_error(err, args.front(), "UsageError", "unknown subcommand '" + args.front() + "'");
            err << app.help();
            return kExitUsage;
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        const auto subs = app.get_subcommands();
        report_error(err, subs.empty() ? "" : subs.front()->get_name(), "UsageError", e.what());
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (*run_cmd) return cmd_run(run_args, out, err);
        if (*oracle_cmd) return cmd_oracle(oracle_id, oracle_vfi, oracle_out, out);
        if (*metrics_cmd) return cmd_metrics(metrics_dir, metrics_write, metrics_check, out);
        if (*validate_cmd) return cmd_validate(validate_path, out);
        if (*reproduce_cmd) return cmd_reproduce(rep, out, err);
    } catch (const ConfigError& e) {
        report_error(err, command, error_type(e), e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        report_error(err, command, error_type(e), e.what());
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace marlbc
