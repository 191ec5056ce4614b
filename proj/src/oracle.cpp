#include "marlbc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "marlbc/error.hpp"

namespace marlbc {

namespace {

constexpr double kGolden = 0.6180339887498949;

// Maximises a unimodal f on [lo, hi]; returns the argmax.
template <class F>
double golden_max(F&& f, double lo, double hi, double tol) {
    double a = lo;
    double b = hi;
    double x1 = b - kGolden * (b - a);
    double x2 = a + kGolden * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kGolden * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kGolden * (b - a);
            f1 = f(x1);
        }
    }
    // Compare the interior estimate with the endpoints so corner optima are found.
    const double mid = 0.5 * (a + b);
    double best = mid;
    double best_f = f(mid);
    for (double edge : {lo, hi}) {
        const double fe = f(edge);
        if (fe > best_f) {
            best_f = fe;
            best = edge;
        }
    }
    return best;
}

// Linear interpolation weight of x within a sorted grid.
std::pair<std::size_t, double> bracket(const std::vector<double>& grid, double x) {
    if (grid.size() == 1 || x <= grid.front()) return {0, 0.0};
    if (x >= grid.back()) return {grid.size() - 2, 1.0};
    const auto it = std::upper_bound(grid.begin(), grid.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
    const std::size_t lo = hi - 1;
    return {lo, (x - grid[lo]) / (grid[hi] - grid[lo])};
}

double output(double alpha, double a_tech, double k, double l) {
    return a_tech * std::pow(k, alpha) * std::pow(l, 1.0 - alpha);
}

}  // namespace

PolicyPoint analytic_textbook_policy(double alpha, double beta, double b) {
    return {1.0 - alpha * beta, alpha / (b * (1.0 - (1.0 - alpha) * beta) + alpha)};
}

PolicyPoint full_depreciation_optimum(double alpha, double beta, double b) {
    return {1.0 - alpha * beta, (1.0 - alpha) / ((1.0 - alpha) + b * (1.0 - alpha * beta))};
}

SteadyState deterministic_steady_state(const EconomyParams& p) {
    if (!(p.alpha > 0.0 && p.alpha < 1.0 && p.beta > 0.0 && p.beta < 1.0 && p.delta > 0.0 && p.delta <= 1.0)) {
        throw ConfigError("steady state: parameters out of range");
    }
    SteadyState s{};
    s.r_star = 1.0 / p.beta - (1.0 - p.delta);
    const double ratio = std::pow(p.alpha / s.r_star, 1.0 / (1.0 - p.alpha));  // k / l
    const double ratio_a = std::pow(ratio, p.alpha);
    if (p.labour_mode == LabourMode::ExogenousEmployment) {
        s.l_star = p.employed_labour;
    } else {
        s.l_star = (1.0 - p.alpha) * ratio_a /
                   (p.leisure_weight * (ratio_a - p.delta * ratio) + (1.0 - p.alpha) * ratio_a);
    }
    s.k_star = ratio * s.l_star;
    s.y_star = output(p.alpha, 1.0, s.k_star, s.l_star);
    s.w_star = (1.0 - p.alpha) * s.y_star / s.l_star;
    s.c_star = s.y_star - p.delta * s.k_star;
    s.a_star = s.w_star * s.l_star + s.r_star * s.k_star + (1.0 - p.delta) * s.k_star;
    s.c_hat_star = s.c_star / s.a_star;
    if (!(s.k_star > 0.0 && s.c_star > 0.0 && s.l_star > 0.0)) {
        throw SolverError("steady state: non-positive solution");
    }
    return s;
}

double steady_state_fixed_point_error(const EconomyParams& params, const SteadyState& ss) {
    EconomyParams p = params;
    p.n = 1;
    p.kappa = {1.0};
    p.lambda = {1.0};
    p.labour_mode = LabourMode::Chosen;
    p.leisure_weight = params.labour_mode == LabourMode::Chosen ? params.leisure_weight : 0.0;
    p.action_floor = std::min(params.action_floor, ss.c_hat_star * 0.5);
    p.action_ceil = std::max(params.action_ceil, std::min(0.999999, std::max(ss.c_hat_star, ss.l_star)));
    if (ss.l_star >= 1.0) {
        // Exogenous labour above one unit: evaluate the identity directly.
        const double a = ss.w_star * ss.l_star + ss.r_star * ss.k_star + (1.0 - p.delta) * ss.k_star;
        return std::abs((1.0 - ss.c_hat_star) * a - ss.k_star);
    }
    Economy env(p, Ar1Params{0.0, 0.0}, ObservationMask{});
    EconomyState st;
    st.capital = {ss.k_star};
    st.prev_labour = {ss.l_star};
    st.prev_aggregate_labour = ss.l_star;
    st.shocks = Ar1State{0.0};
    env.reset_to(st);
    const HouseholdAction act{ss.c_hat_star, ss.l_star};
    const StepOutcome out = env.step(std::span<const HouseholdAction>(&act, 1));
    return std::abs(out.next_capital[0] - ss.k_star);
}

std::vector<double> MarkovChain::stationary() const {
    const std::size_t n = grid.size();
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 100000; ++it) {
        std::vector<double> next(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * transition[i][j];
        }
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) diff = std::max(diff, std::abs(next[j] - pi[j]));
        pi = std::move(next);
        if (diff < 1e-15) break;
    }
    return pi;
}

MarkovChain discretize_ar1(double rho, double sigma, int n_z) {
    if (n_z < 1) throw ConfigError("discretize_ar1: need at least one point");
    if (!(rho >= 0.0 && rho < 1.0) || sigma < 0.0) throw ConfigError("discretize_ar1: bad AR(1) parameters");
    MarkovChain chain;
    const auto n = static_cast<std::size_t>(n_z);
    if (n == 1) {
        chain.grid = {0.0};
        chain.transition = {{1.0}};
        return chain;
    }
    const double p = 0.5 * (1.0 + rho);
    std::vector<std::vector<double>> theta{{p, 1.0 - p}, {1.0 - p, p}};
    for (std::size_t m = 3; m <= n; ++m) {
        std::vector<std::vector<double>> next(m, std::vector<double>(m, 0.0));
        for (std::size_t i = 0; i + 1 < m; ++i) {
            for (std::size_t j = 0; j + 1 < m; ++j) {
                const double t = theta[i][j];
                next[i][j] += p * t;
                next[i][j + 1] += (1.0 - p) * t;
                next[i + 1][j] += (1.0 - p) * t;
                next[i + 1][j + 1] += p * t;
            }
        }
        for (std::size_t i = 1; i + 1 < m; ++i) {
            for (double& v : next[i]) v *= 0.5;
        }
        theta = std::move(next);
    }
    const double sd = sigma / std::sqrt(1.0 - rho * rho);
    const double psi = sd * std::sqrt(static_cast<double>(n - 1));
    chain.grid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        chain.grid[i] = -psi + 2.0 * psi * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    chain.transition = std::move(theta);
    return chain;
}

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw SolverError("monotone cubic: need matching x/y of length >= 2");
    bool up = true;
    bool down = true;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(x_[i + 1] > x_[i])) throw SolverError("monotone cubic: x must be strictly increasing");
        up = up && y_[i + 1] >= y_[i];
        down = down && y_[i + 1] <= y_[i];
    }
    if (!up && !down) throw SolverError("monotone cubic: data are not monotone");
    std::vector<double> h(n - 1);
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        d[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    slope_.assign(n, 0.0);
    if (n == 2) {
        slope_[0] = slope_[1] = d[0];
        return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] * d[i] <= 0.0) {
            slope_[i] = 0.0;
        } else {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            slope_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
        double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (s * d0 <= 0.0) s = 0.0;
        else if (d0 * d1 <= 0.0 && std::abs(s) > std::abs(3.0 * d0)) s = 3.0 * d0;
        return s;
    };
    slope_[0] = end_slope(h[0], h[1], d[0], d[1]);
    slope_[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
}

double MonotoneCubic::operator()(double x) const {
    const std::size_t n = x_.size();
    if (x <= x_.front()) return y_.front() + slope_.front() * (x - x_.front());
    if (x >= x_.back()) return y_.back() + slope_.back() * (x - x_.back());
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    (void)n;
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * slope_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
           (t3 - t2) * h * slope_[i + 1];
}

PolicyPoint ValueFunction::policy(double k, double z) const {
    const auto [ik, wk] = bracket(k_grid, k);
    const auto [iz, wz] = bracket(z_chain.grid, z);
    auto lerp2 = [&](const std::vector<double>& table) {
        const int nz = n_z();
        auto at = [&](std::size_t a, std::size_t b) {
            return table[a * static_cast<std::size_t>(nz) + b];
        };
        const std::size_t k1 = std::min(ik + 1, k_grid.size() - 1);
        const std::size_t z1 = std::min(iz + 1, z_chain.grid.size() - 1);
        const double lo = (1 - wz) * at(ik, iz) + wz * at(ik, z1);
        const double hi = (1 - wz) * at(k1, iz) + wz * at(k1, z1);
        return (1 - wk) * lo + wk * hi;
    };
    return {lerp2(consumption_fraction), lerp2(labour)};
}

ValueFunction value_function_iteration(const EconomyParams& params, const Ar1Params& ar1, const GridSpec& grid) {
    if (grid.n_capital < 4 || grid.n_z < 1) throw ConfigError("vfi: grid too small");
    if (!(grid.k_low > 0.0 && grid.k_high > 1.0 && grid.k_low < 1.0)) {
        throw ConfigError("vfi: steady state must be interior to the capital grid");
    }
    const SteadyState ss = deterministic_steady_state(params);
    const double alpha = params.alpha;
    const double beta = params.beta;
    const double delta = params.delta;
    const double b = params.leisure_weight;
    const double lo_box = params.action_floor;
    const double hi_box = params.action_ceil;
    const bool chosen = params.labour_mode == LabourMode::Chosen;

    ValueFunction vf;
    vf.k_star = ss.k_star;
    vf.z_chain = discretize_ar1(ar1.rho, ar1.sigma, grid.n_z);
    const int nk = grid.n_capital;
    const int nz = grid.n_z;
    const double log_lo = std::log(grid.k_low * ss.k_star);
    const double log_hi = std::log(grid.k_high * ss.k_star);
    vf.k_grid.resize(static_cast<std::size_t>(nk));
    for (int i = 0; i < nk; ++i) vf.k_grid[static_cast<std::size_t>(i)] = std::exp(log_lo + (log_hi - log_lo) * i / (nk - 1));
    const double k_min = vf.k_grid.front();
    const double k_max = vf.k_grid.back();

    const std::size_t cells = static_cast<std::size_t>(nk * nz);
    const double u_star = std::log(ss.c_star) + (chosen && b > 0.0 ? b * std::log(1.0 - ss.l_star) : 0.0);
    vf.value.assign(cells, u_star / (1.0 - beta));
    vf.consumption_fraction.assign(cells, ss.c_hat_star);
    vf.labour.assign(cells, chosen ? ss.l_star : params.employed_labour);

    std::vector<double> next(cells);
    std::vector<MonotoneCubic> expected(static_cast<std::size_t>(nz));
    for (int it = 0; it < grid.max_iterations; ++it) {
        // E_z V(k', z') as a function of k' for every current z.
        for (int iz = 0; iz < nz; ++iz) {
            std::vector<double> ev(static_cast<std::size_t>(nk), 0.0);
            for (int ik = 0; ik < nk; ++ik) {
                double s = 0.0;
                for (int jz = 0; jz < nz; ++jz) {
                    s += vf.z_chain.transition[static_cast<std::size_t>(iz)][static_cast<std::size_t>(jz)] * vf.v(ik, jz);
                }
                ev[static_cast<std::size_t>(ik)] = s;
            }
            try {
                expected[static_cast<std::size_t>(iz)] = MonotoneCubic(vf.k_grid, std::move(ev));
            } catch (const SolverError& e) {
                std::ostringstream msg;
                msg << "vfi: continuation value rejected at iteration " << it << ": " << e.what();
                throw SolverError(msg.str());
            }
        }

        double sup = 0.0;
        for (int ik = 0; ik < nk; ++ik) {
            const double k = vf.k_grid[static_cast<std::size_t>(ik)];
            for (int iz = 0; iz < nz; ++iz) {
                const double a_tech = std::exp(vf.z_chain.grid[static_cast<std::size_t>(iz)]);
                const MonotoneCubic& ev = expected[static_cast<std::size_t>(iz)];
                double best_c_hat = 0.0;
                auto consumption_value = [&](double wealth, double& arg) {
                    // Keep k' = (1 - c_hat) a on the grid whenever the box allows it.
                    double c_lo = std::max(lo_box, 1.0 - k_max / wealth);
                    double c_hi = std::min(hi_box, 1.0 - k_min / wealth);
                    if (c_lo > c_hi) c_lo = c_hi = std::clamp(1.0 - k_min / wealth, lo_box, hi_box);
                    auto f = [&](double c_hat) {
                        const double c = std::max(c_hat * wealth, kConsumptionFloor);
                        return std::log(c) + beta * ev((1.0 - c_hat) * wealth);
                    };
                    arg = c_lo == c_hi ? c_lo : golden_max(f, c_lo, c_hi, grid.search_tolerance);
                    return f(arg);
                };
                auto labour_value = [&](double l) {
                    const double wealth = output(alpha, a_tech, k, l) + (1.0 - delta) * k;
                    double arg = 0.0;
                    const double v = consumption_value(wealth, arg);
                    best_c_hat = arg;
                    return v + (b > 0.0 ? b * std::log(1.0 - l) : 0.0);
                };
                double l_opt;
                if (chosen) {
                    l_opt = golden_max(labour_value, lo_box, hi_box, grid.search_tolerance);
                } else {
                    l_opt = params.employed_labour;
                }
                const double v_new = labour_value(l_opt);  // also sets best_c_hat
                const std::size_t idx = static_cast<std::size_t>(ik * nz + iz);
                next[idx] = v_new;
                vf.consumption_fraction[idx] = best_c_hat;
                vf.labour[idx] = l_opt;
                sup = std::max(sup, std::abs(v_new - vf.value[idx]));
            }
        }
        vf.value.swap(next);
        vf.sup_norm_history.push_back(sup);
        vf.iterations = it + 1;
        if (!std::isfinite(sup)) throw SolverError("vfi: value function became non-finite");
        if (sup < grid.tolerance) return vf;
    }
    throw SolverError("vfi: no convergence within max_iterations");
}

double max_euler_residual(const EconomyParams& params, const ValueFunction& vf, double lo, double hi) {
    const double alpha = params.alpha;
    const double beta = params.beta;
    const double delta = params.delta;
    const double margin = 1e-4;
    double worst = 0.0;
    for (int ik = 0; ik < vf.n_k(); ++ik) {
        const double k = vf.k_grid[static_cast<std::size_t>(ik)];
        if (k < lo * vf.k_star || k > hi * vf.k_star) continue;
        for (int iz = 0; iz < vf.n_z(); ++iz) {
            const double c_hat = vf.c_hat(ik, iz);
            const double l = vf.l(ik, iz);
            if (c_hat <= params.action_floor + margin || c_hat >= params.action_ceil - margin) continue;
            const double a_tech = std::exp(vf.z_chain.grid[static_cast<std::size_t>(iz)]);
            const double wealth = output(alpha, a_tech, k, l) + (1.0 - delta) * k;
            const double c = c_hat * wealth;
            const double k_next = wealth - c;
            double expectation = 0.0;
            for (int jz = 0; jz < vf.n_z(); ++jz) {
                const double z_next = vf.z_chain.grid[static_cast<std::size_t>(jz)];
                const PolicyPoint pn = vf.policy(k_next, z_next);
                const double a_next_tech = std::exp(z_next);
                const double wealth_next = output(alpha, a_next_tech, k_next, pn.labour) + (1.0 - delta) * k_next;
                const double c_next = pn.consumption_fraction * wealth_next;
                const double r_next = alpha * a_next_tech * std::pow(k_next, alpha - 1.0) * std::pow(pn.labour, 1.0 - alpha);
                expectation += vf.z_chain.transition[static_cast<std::size_t>(iz)][static_cast<std::size_t>(jz)] *
                               (c / c_next) * (1.0 + r_next - delta);
            }
            worst = std::max(worst, std::abs(1.0 - beta * expectation));
        }
    }
    return worst;
}

PolicyFn vfi_policy(const ValueFunction& vf) {
    return [&vf](const std::vector<Observation>&, const Economy& env) {
        const auto& st = env.state();
        const double z = log_technology(env.shock_spec(), st.shocks);
        std::vector<HouseholdAction> out;
        out.reserve(st.capital.size());
        for (double k : st.capital) {
            const PolicyPoint p = vf.policy(k, z);
            out.push_back({p.consumption_fraction, p.labour});
        }
        return out;
    };
}

PolicyFn constant_policy(PolicyPoint action) {
    return [action](const std::vector<Observation>& obs, const Economy&) {
        return std::vector<HouseholdAction>(obs.size(), HouseholdAction{action.consumption_fraction, action.labour});
    };
}

PolicyFn learned_policy(const SharedPolicy& policy) {
    return [&policy](const std::vector<Observation>& obs, const Economy&) {
        Rng unused(0);
        return policy.act(obs, false, unused);
    };
}

IrfSeries oracle_irf(const EconomyParams& params, const Ar1Params& ar1, const ObservationMask& mask,
                     const PolicyFn& policy, double shock_size, int horizon, double k_start) {
    if (horizon <= 0) throw ConfigError("irf: horizon must be positive");
    EconomyParams p = params;
    p.n = 1;
    p.kappa = {1.0};
    p.lambda = {1.0};
    p.horizon = std::max(p.horizon, horizon);
    const Ar1Params silent{ar1.rho, 0.0};

    auto simulate = [&](double z0) {
        Economy env(p, silent, mask);
        EconomyState st;
        st.capital = {k_start};
        st.prev_labour = {p.initial_labour};
        st.prev_aggregate_labour = p.initial_labour;
        st.shocks = Ar1State{z0};
        auto obs = env.reset_to(st);
        IrfSeries path;
        for (int t = 0; t < horizon; ++t) {
            const double z = std::get<Ar1State>(env.state().shocks).z;
            const auto actions = policy(obs, env);
            const StepOutcome out = env.step(actions);
            path.consumption.push_back(out.consumption[0]);
            path.capital.push_back(out.capital[0]);
            path.output.push_back(out.output);
            path.labour.push_back(out.labour[0]);
            path.technology.push_back(z);
            obs = out.observations;
        }
        return path;
    };
    const IrfSeries shocked = simulate(shock_size);
    const IrfSeries base = simulate(0.0);
    IrfSeries irf;
    auto diff = [](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
        return d;
    };
    irf.consumption = diff(shocked.consumption, base.consumption);
    irf.capital = diff(shocked.capital, base.capital);
    irf.output = diff(shocked.output, base.output);
    irf.labour = diff(shocked.labour, base.labour);
    irf.technology = diff(shocked.technology, base.technology);
    return irf;
}

IrfBand irf_band(const std::vector<std::vector<double>>& series) {
    if (series.empty()) throw ConfigError("irf_band: no series");
    const std::size_t len = series.front().size();
    IrfBand band;
    band.mean.assign(len, 0.0);
    band.sd.assign(len, 0.0);
    for (const auto& s : series) {
        if (s.size() != len) throw ConfigError("irf_band: series lengths differ");
        for (std::size_t t = 0; t < len; ++t) band.mean[t] += s[t];
    }
    const double n = static_cast<double>(series.size());
    for (double& m : band.mean) m /= n;
    if (series.size() > 1) {
        for (const auto& s : series) {
            for (std::size_t t = 0; t < len; ++t) band.sd[t] += (s[t] - band.mean[t]) * (s[t] - band.mean[t]);
        }
        for (double& v : band.sd) v = std::sqrt(v / (n - 1.0));
    }
    return band;
}

}  // namespace marlbc
