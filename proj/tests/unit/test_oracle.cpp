#include <doctest.h>

#include <cmath>

#include "marlbc/config.hpp"
#include "marlbc/error.hpp"
#include "marlbc/oracle.hpp"

using namespace marlbc;
using doctest::Approx;

namespace {

const ValueFunction& partial_vfi() {
    static const ValueFunction vf = [] {
        const ScenarioConfig c = preset("rbc_partial");
        return value_function_iteration(c.economy, c.ar1);
    }();
    return vf;
}

const ValueFunction& textbook_vfi() {
    static const ValueFunction vf = [] {
        const ScenarioConfig c = preset("rbc_textbook");
        GridSpec g;
        g.n_capital = 80;
        return value_function_iteration(c.economy, c.ar1, g);
    }();
    return vf;
}

}  // namespace

TEST_CASE("analytic textbook policy") {
    const PolicyPoint p = analytic_textbook_policy(0.36, 0.95, 5.0);
    CHECK(p.consumption_fraction == Approx(0.658).epsilon(1e-14));
    CHECK(p.labour == Approx(0.36 / 2.32).epsilon(1e-14));
    CHECK(p.labour == Approx(0.155172).epsilon(1e-6));
    CHECK(analytic_textbook_policy(0.36, 0.95, 0.0).labour == Approx(1.0).epsilon(1e-15));
    CHECK(analytic_textbook_policy(0.36, 1e-12, 5.0).consumption_fraction == Approx(1.0).epsilon(1e-10));
}

TEST_CASE("exact full-depreciation optimum") {
    const PolicyPoint p = full_depreciation_optimum(0.36, 0.95, 5.0);
    CHECK(p.consumption_fraction == Approx(0.658).epsilon(1e-14));
    CHECK(p.labour == Approx(0.64 / (0.64 + 5.0 * 0.658)).epsilon(1e-14));
}

TEST_CASE("deterministic steady state with partial depreciation") {
    const EconomyParams p = preset("rbc_partial").economy;
    const SteadyState ss = deterministic_steady_state(p);
    // Independent evaluation of the same chain.
    const double r = 1.0 / 0.95 - 1.0 + 0.025;
    const double kl = std::pow(0.36 / r, 1.0 / 0.64);
    const double w = 0.64 * std::pow(kl, 0.36);
    const double cl = std::pow(kl, 0.36) - 0.025 * kl;
    const double l = w / (w + 5.0 * cl);
    CHECK(ss.r_star == Approx(r).epsilon(1e-14));
    CHECK(ss.l_star == Approx(l).epsilon(1e-12));
    CHECK(ss.k_star == Approx(kl * l).epsilon(1e-12));
    CHECK(ss.c_star == Approx(cl * l).epsilon(1e-12));
    CHECK(ss.k_star == Approx(1.39007).epsilon(1e-5));
    CHECK(ss.l_star == Approx(0.126474).epsilon(1e-5));
    CHECK(ss.c_hat_star == Approx(ss.c_star / ss.a_star).epsilon(1e-14));
    CHECK(steady_state_fixed_point_error(p, ss) <= 1e-8);
}

TEST_CASE("steady state with full depreciation agrees with the closed form") {
    const EconomyParams p = preset("rbc_textbook").economy;
    const SteadyState ss = deterministic_steady_state(p);
    CHECK(ss.c_hat_star == Approx(0.658).epsilon(1e-12));
    CHECK(ss.l_star == Approx(full_depreciation_optimum(0.36, 0.95, 5.0).labour).epsilon(1e-12));
    CHECK(steady_state_fixed_point_error(p, ss) <= 1e-8);
}

TEST_CASE("steady state with exogenous labour") {
    const EconomyParams p = preset("ks").economy;
    const SteadyState ss = deterministic_steady_state(p);
    CHECK(ss.l_star == 1.11);
    EconomyParams chosen = p;
    chosen.labour_mode = LabourMode::Chosen;
    chosen.leisure_weight = 5.0;
    const SteadyState s2 = deterministic_steady_state(chosen);
    CHECK(ss.r_star == Approx(s2.r_star).epsilon(1e-14));
    CHECK(ss.k_star / ss.l_star == Approx(s2.k_star / s2.l_star).epsilon(1e-12));
    CHECK(steady_state_fixed_point_error(p, ss) <= 1e-8);
}

TEST_CASE("Rouwenhorst chain") {
    const MarkovChain iid = discretize_ar1(0.0, 0.01, 5);
    for (std::size_t i = 1; i < iid.transition.size(); ++i) {
        for (std::size_t j = 0; j < iid.transition.size(); ++j) {
            CHECK(iid.transition[i][j] == Approx(iid.transition[0][j]).epsilon(1e-14));
        }
    }
    const MarkovChain m = discretize_ar1(0.9, 0.01, 7);
    for (const auto& row : m.transition) {
        double s = 0.0;
        for (double v : row) s += v;
        CHECK(s == Approx(1.0).epsilon(1e-14));
    }
    const auto pi = m.stationary();
    double mean = 0.0;
    double var = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) mean += pi[i] * m.grid[i];
    for (std::size_t i = 0; i < pi.size(); ++i) var += pi[i] * (m.grid[i] - mean) * (m.grid[i] - mean);
    CHECK(std::abs(mean) < 1e-14);
    CHECK(var == Approx(0.01 * 0.01 / 0.19).epsilon(0.01));

    // Monte Carlo on the chain.
    Rng rng(3);
    std::size_t s = 3;
    double sum2 = 0.0;
    const int n = 400000;
    for (int t = 0; t < n; ++t) {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t next = m.transition[s].size() - 1;
        for (std::size_t j = 0; j < m.transition[s].size(); ++j) {
            acc += m.transition[s][j];
            if (u < acc) {
                next = j;
                break;
            }
        }
        s = next;
        sum2 += m.grid[s] * m.grid[s];
    }
    CHECK(sum2 / n == Approx(0.01 * 0.01 / 0.19).epsilon(0.05));
    CHECK_THROWS_AS(discretize_ar1(1.0, 0.01, 7), ConfigError);
}

TEST_CASE("monotone cubic interpolant") {
    const MonotoneCubic f({0.0, 1.0, 2.0, 3.0}, {0.0, 1.0, 1.0, 4.0});
    CHECK(f(1.0) == 1.0);
    CHECK(f(1.5) == Approx(1.0).epsilon(1e-14));
    double prev = f(0.0);
    for (double x = 0.01; x <= 3.0; x += 0.01) {
        CHECK(f(x) >= prev - 1e-15);
        prev = f(x);
    }
    // Linear extrapolation with the end slope.
    const double end_slope = (f(3.0) - f(3.0 - 1e-7)) / 1e-7;
    CHECK(f(4.0) - f(3.0) == Approx(end_slope).epsilon(1e-5));
    CHECK_THROWS_AS(MonotoneCubic({0.0, 1.0, 2.0}, {0.0, 2.0, 1.0}), SolverError);
}

TEST_CASE("VFI with full depreciation: constant policy") {
    const ValueFunction& vf = textbook_vfi();
    const PolicyPoint exact = full_depreciation_optimum(0.36, 0.95, 5.0);
    double dev_c = 0.0;
    double dev_l = 0.0;
    for (int ik = 0; ik < vf.n_k(); ++ik) {
        for (int iz = 0; iz < vf.n_z(); ++iz) {
            dev_c = std::max(dev_c, std::abs(vf.c_hat(ik, iz) - 0.658));
            dev_l = std::max(dev_l, std::abs(vf.l(ik, iz) - exact.labour));
        }
    }
    CHECK(dev_c < 5e-3);
    CHECK(dev_l < 5e-3);
    // The reference labour closed form sits 7.7e-3 below the optimum.
    CHECK(std::abs(exact.labour - analytic_textbook_policy(0.36, 0.95, 5.0).labour) == Approx(7.678e-3).epsilon(1e-3));
}

TEST_CASE("VFI sup-norm contracts at rate beta") {
    const ValueFunction& vf = textbook_vfi();
    const auto& h = vf.sup_norm_history;
    REQUIRE(h.size() > 30);
    for (std::size_t i = 20; i + 1 < h.size(); ++i) {
        if (h[i] < 1e-8) break;
        CHECK(h[i + 1] / h[i] <= 0.95 + 1e-3);
    }
}

TEST_CASE("VFI with partial depreciation: Euler residual and steady state") {
    const ValueFunction& vf = partial_vfi();
    CHECK(max_euler_residual(preset("rbc_partial").economy, vf) < 1e-3);
    const SteadyState ss = deterministic_steady_state(preset("rbc_partial").economy);
    const PolicyPoint p = vf.policy(ss.k_star, 0.0);
    CHECK(p.consumption_fraction == Approx(ss.c_hat_star).epsilon(5e-3 / ss.c_hat_star));
    CHECK(std::abs(p.labour - ss.l_star) < 5e-3);
}

TEST_CASE("IRFs") {
    const ScenarioConfig c = preset("rbc_partial");
    const ValueFunction& vf = partial_vfi();
    const double k0 = deterministic_steady_state(c.economy).k_star;
    const IrfSeries zero = oracle_irf(c.economy, c.ar1, c.mask, vfi_policy(vf), 0.0, 40, k0);
    for (double v : zero.consumption) CHECK(v == 0.0);

    const IrfSeries irf = oracle_irf(c.economy, c.ar1, c.mask, vfi_policy(vf), 0.01, 40, k0);
    REQUIRE(irf.technology.size() == 40);
    for (int t = 0; t < 40; ++t) CHECK(irf.technology[static_cast<std::size_t>(t)] == Approx(0.01 * std::pow(0.9, t)).epsilon(1e-12));
    CHECK(irf.consumption[0] > 0.0);
    const auto peak = std::max_element(irf.consumption.begin(), irf.consumption.end());
    for (auto it = peak; it + 1 != irf.consumption.end(); ++it) CHECK(*(it + 1) <= *it + 1e-12);
    CHECK(irf.consumption.back() < *peak);
    CHECK(irf.consumption.back() > 0.0);
}

TEST_CASE("irf band uses the sample standard deviation") {
    const IrfBand b = irf_band({{1.0, 2.0}, {3.0, 2.0}});
    CHECK(b.mean[0] == 2.0);
    CHECK(b.sd[0] == Approx(std::sqrt(2.0)));
    CHECK(b.sd[1] == 0.0);
}
