#pragma once

#include <vector>

#include "marlbc/agents.hpp"
#include "marlbc/economy.hpp"
#include "marlbc/shocks.hpp"

namespace marlbc {

struct PolicyPoint {
    double consumption_fraction;
    double labour;
};

/// Reference closed form for the full-depreciation model:
/// c_hat = 1 - alpha beta, l = alpha / (b (1 - (1 - alpha) beta) + alpha).
PolicyPoint analytic_textbook_policy(double alpha, double beta, double leisure_weight);

/// Exact optimum of the full-depreciation single-household economy with
/// Y = A K^alpha L^(1-alpha): c_hat = 1 - alpha beta,
/// l = (1 - alpha) / ((1 - alpha) + b (1 - alpha beta)). Obtained by
/// guess-and-verify with V = E + F log k + G z.
PolicyPoint full_depreciation_optimum(double alpha, double beta, double leisure_weight);

struct SteadyState {
    double k_star;
    double l_star;
    double c_star;
    double a_star;
    double c_hat_star;
    double y_star;
    double r_star;
    double w_star;
};

/// Shock-free representative-household steady state (A = 1, kappa = lambda = 1).
/// Under exogenous employment the labour input is fixed at employed_labour.
SteadyState deterministic_steady_state(const EconomyParams& params);

/// |k' - k*| after stepping the single-household environment once from the
/// steady state with the steady-state actions and no shocks.
double steady_state_fixed_point_error(const EconomyParams& params, const SteadyState& ss);

struct MarkovChain {
    std::vector<double> grid;
    std::vector<std::vector<double>> transition;  // row-stochastic

    std::vector<double> stationary() const;
};

/// Rouwenhorst discretisation of z' = rho z + sigma eps on n_z points.
MarkovChain discretize_ar1(double rho, double sigma, int n_z);

struct GridSpec {
    int n_capital = 200;
    double k_low = 0.1;   // multiple of k*
    double k_high = 3.0;  // multiple of k*
    int n_z = 7;
    double search_tolerance = 1e-6;
    double tolerance = 1e-9;
    int max_iterations = 5000;
};

/// Shape-preserving (Fritsch-Carlson) cubic interpolant; linear beyond the ends.
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    /// Throws SolverError if `y` is not monotone in `x`.
    MonotoneCubic(std::vector<double> x, std::vector<double> y);
    double operator()(double x) const;

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> slope_;
};

struct ValueFunction {
    std::vector<double> k_grid;
    MarkovChain z_chain;
    // Tables indexed [k_idx * n_z + z_idx].
    std::vector<double> value;
    std::vector<double> consumption_fraction;
    std::vector<double> labour;
    std::vector<double> sup_norm_history;
    int iterations = 0;
    double k_star = 0.0;

    int n_k() const { return static_cast<int>(k_grid.size()); }
    int n_z() const { return static_cast<int>(z_chain.grid.size()); }
    double v(int ik, int iz) const { return value[static_cast<std::size_t>(ik * n_z() + iz)]; }
    double c_hat(int ik, int iz) const { return consumption_fraction[static_cast<std::size_t>(ik * n_z() + iz)]; }
    double l(int ik, int iz) const { return labour[static_cast<std::size_t>(ik * n_z() + iz)]; }
    /// Policy at an arbitrary (k, z): bilinear in (k, z), z clamped to the grid.
    PolicyPoint policy(double k, double z) const;
};

/// Bellman iteration for the single-household economy on a log-spaced capital
/// grid and a Rouwenhorst technology chain. Inner maximisation by nested
/// golden-section search over labour, then consumption fraction.
ValueFunction value_function_iteration(const EconomyParams& params, const Ar1Params& ar1, const GridSpec& grid = {});

/// max over interior cells of |1 - beta E[(c / c') (1 + r' - delta)]|, where
/// interior means k in [lo * k*, hi * k*] and both actions strictly inside the box.
double max_euler_residual(const EconomyParams& params, const ValueFunction& vf, double lo = 0.5, double hi = 2.0);

struct IrfSeries {
    std::vector<double> consumption;
    std::vector<double> capital;
    std::vector<double> output;
    std::vector<double> labour;
    std::vector<double> technology;  // log technology deviation
};

/// Response of the single-household economy to a one-time log-technology
/// shock with all later innovations zero. Each series is the shocked path
/// minus the unshocked path from the same starting capital.
IrfSeries oracle_irf(const EconomyParams& params, const Ar1Params& ar1, const ObservationMask& mask,
                     const PolicyFn& policy, double shock_size, int horizon, double k_start);

/// Policy function reading (k, z) from the environment and querying the VFI tables.
PolicyFn vfi_policy(const ValueFunction& vf);
/// Constant-action policy.
PolicyFn constant_policy(PolicyPoint action);
/// Deterministic policy of a trained learner.
PolicyFn learned_policy(const SharedPolicy& policy);

struct IrfBand {
    std::vector<double> mean;
    std::vector<double> sd;  // across seeds (sample, n - 1)
};

IrfBand irf_band(const std::vector<std::vector<double>>& series);

}  // namespace marlbc
