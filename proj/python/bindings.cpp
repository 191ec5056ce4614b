#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "marlbc/config.hpp"
#include "marlbc/economy.hpp"
#include "marlbc/error.hpp"
#include "marlbc/metrics.hpp"
#include "marlbc/oracle.hpp"
#include "marlbc/runner.hpp"

namespace py = pybind11;
using namespace marlbc;

namespace {

py::object json_to_py(const std::string& text) {
    return py::module_::import("json").attr("loads")(text);
}

py::dict outcome_dict(const StepOutcome& o) {
    py::dict d;
    d["t"] = o.t;
    d["observations"] = o.observations;
    d["rewards"] = o.rewards;
    d["consumption_fraction"] = o.consumption_fraction;
    d["labour"] = o.labour;
    d["consumption"] = o.consumption;
    d["wealth"] = o.wealth;
    d["capital"] = o.capital;
    d["next_capital"] = o.next_capital;
    d["employed"] = std::vector<int>(o.employed.begin(), o.employed.end());
    d["aggregate_capital"] = o.aggregate_capital;
    d["aggregate_labour"] = o.aggregate_labour;
    d["output"] = o.output;
    d["technology"] = o.technology;
    d["truncated"] = o.truncated;
    return d;
}

py::dict ols_dict(const OlsFit& f) {
    py::dict d;
    d["slope"] = f.slope;
    d["intercept"] = f.intercept;
    d["r_squared"] = f.r_squared;
    d["n"] = f.n;
    return d;
}

class PyEconomy {
public:
    explicit PyEconomy(const std::string& config)
        : config_(load_config(config)), economy_(config_.economy, config_.shock_spec(), config_.mask) {}

    std::vector<Observation> reset(std::uint64_t seed) { return economy_.reset(seed); }

    py::dict step(const std::vector<std::pair<double, double>>& actions) {
        std::vector<HouseholdAction> a;
        a.reserve(actions.size());
        for (const auto& [c, l] : actions) a.push_back({c, l});
        return outcome_dict(economy_.step(a));
    }

    int n() const { return economy_.params().n; }
    int t() const { return economy_.state().t; }
    bool done() const { return economy_.done(); }
    int observation_dim() const { return economy_.observation_dim(); }
    std::vector<double> capital() const { return economy_.state().capital; }
    double technology() const { return economy_.state().technology; }
    std::vector<Observation> observe() const { return economy_.observe(); }

private:
    ScenarioConfig config_;
    Economy economy_;
};

}  // namespace

PYBIND11_MODULE(_marlbc, m) {
    m.doc() = "Multi-agent RL business-cycle economies, oracles and metrics";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);
    py::register_exception<DegenerateEconomyError>(m, "DegenerateEconomyError", PyExc_ArithmeticError);
    py::register_exception<TrainingDivergedError>(m, "TrainingDivergedError", PyExc_RuntimeError);
    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

    m.def("preset_ids", &preset_ids);
    m.def("preset_config", [](const std::string& id) { return to_config_text(preset(id)); },
          "Canonical config text of a built-in preset");
    m.def("canonical_config", [](const std::string& path_or_preset) { return to_config_text(load_config(path_or_preset)); });
    m.def("parse_config", [](const std::string& text) { return to_config_text(parse_config(text)); },
          "Parse and validate config text; returns the canonical form");
    m.def("config_hash", &git_blob_hash, py::arg("text"));

    py::class_<PyEconomy>(m, "Economy")
        .def(py::init<const std::string&>(), py::arg("config"))
        .def("reset", &PyEconomy::reset, py::arg("seed"))
        .def("step", &PyEconomy::step, py::arg("actions"),
             "actions: one (consumption_fraction, labour) pair per household")
        .def("observe", &PyEconomy::observe)
        .def_property_readonly("n", &PyEconomy::n)
        .def_property_readonly("t", &PyEconomy::t)
        .def_property_readonly("done", &PyEconomy::done)
        .def_property_readonly("observation_dim", &PyEconomy::observation_dim)
        .def_property_readonly("capital", &PyEconomy::capital)
        .def_property_readonly("technology", &PyEconomy::technology);

    m.def("gini", [](const std::vector<double>& w) { return gini(w); }, py::arg("wealth"));
    m.def("lorenz", [](const std::vector<double>& w) {
        const LorenzCurve c = lorenz(w);
        return py::make_tuple(c.population, c.wealth, c.gini);
    });
    m.def("ols_fit", [](const std::vector<double>& x, const std::vector<double>& y) { return ols_dict(ols_fit(x, y)); });
    m.def("law_of_motion", [](const std::vector<double>& k, int burn_in) {
        return ols_dict(law_of_motion_check(std::span<const double>(k), burn_in));
    }, py::arg("capital"), py::arg("burn_in") = 100);

    m.def("analytic_textbook_policy", [](double alpha, double beta, double b) {
        const PolicyPoint p = analytic_textbook_policy(alpha, beta, b);
        return py::make_tuple(p.consumption_fraction, p.labour);
    }, py::arg("alpha") = 0.36, py::arg("beta") = 0.95, py::arg("leisure_weight") = 5.0);
    m.def("full_depreciation_optimum", [](double alpha, double beta, double b) {
        const PolicyPoint p = full_depreciation_optimum(alpha, beta, b);
        return py::make_tuple(p.consumption_fraction, p.labour);
    }, py::arg("alpha") = 0.36, py::arg("beta") = 0.95, py::arg("leisure_weight") = 5.0);
    m.def("steady_state", [](const std::string& config) {
        const ScenarioConfig c = load_config(config);
        const SteadyState s = deterministic_steady_state(c.economy);
        py::dict d;
        d["k_star"] = s.k_star;
        d["l_star"] = s.l_star;
        d["c_star"] = s.c_star;
        d["c_hat_star"] = s.c_hat_star;
        d["y_star"] = s.y_star;
        d["r_star"] = s.r_star;
        d["w_star"] = s.w_star;
        d["fixed_point_error"] = steady_state_fixed_point_error(c.economy, s);
        return d;
    }, py::arg("config"));

    m.def("run", [](const std::string& config, std::optional<std::vector<std::uint64_t>> seeds,
                    std::optional<long> steps, std::optional<std::string> algo, std::string out) {
        ScenarioConfig c = load_config(config);
        if (algo) c.agent = with_algorithm(c.agent, algorithm_from_string(*algo));
        if (seeds) c.seeds = *seeds;
        if (steps) c.schedule.per_agent_steps = *steps;
        c.validate();
        RunOptions o;
        o.out_dir = out;
        RunResult r;
        {
            py::gil_scoped_release release;
            r = marlbc::run(c, o);
        }
        py::dict d;
        d["run_dir"] = r.dir;
        d["config_hash"] = r.config_hash;
        d["metrics"] = json_to_py(r.aggregate.to_json_text());
        return d;
    }, py::arg("config"), py::arg("seeds") = py::none(), py::arg("steps") = py::none(), py::arg("algo") = py::none(),
       py::arg("out") = "");

    m.def("cli", [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = cli_main(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Run a marlbc subcommand; returns (exit_code, stdout, stderr)");
}
