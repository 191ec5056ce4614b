#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "marlbc/agents.hpp"

namespace marlbc {

/// Pairwise mean-difference Gini: sum_ij |x_i - x_j| / (2 n^2 mean).
/// Throws std::invalid_argument on empty, negative or all-zero input.
double gini(std::span<const double> wealth);

struct LorenzCurve {
    std::vector<double> population;  // n + 1 points, 0 .. 1
    std::vector<double> wealth;      // n + 1 points, 0 .. 1
    double gini = 0.0;               // trapezoid rule on the curve
};

LorenzCurve lorenz(std::span<const double> wealth);

struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;  // 0 when y is constant
    std::size_t n = 0;
};

/// Least squares of y on x. Throws if fewer than two points or x is constant.
OlsFit ols_fit(std::span<const double> x, std::span<const double> y);

/// Regresses K_{t+1} on K_t pooled over episodes after dropping the first
/// `burn_in` periods of each. Rejects burn_in >= any episode length - 1.
OlsFit law_of_motion_check(const std::vector<std::vector<double>>& episodes, int burn_in);
OlsFit law_of_motion_check(std::span<const double> series, int burn_in);

struct MpcPoint {
    double wealth;
    double c_hat;
    std::string group;
};

struct MpcBin {
    std::string group;
    int bin = 0;
    double wealth_low = 0.0;
    double wealth_high = 0.0;
    double mean_wealth = 0.0;
    double mean_c_hat = 0.0;
    std::size_t count = 0;
};

struct MpcCurve {
    std::vector<MpcBin> bins;  // grouped by `group`, bins in increasing wealth
    std::vector<std::string> groups;

    std::vector<MpcBin> group_bins(const std::string& group) const;
};

/// Quantile-bins wealth within each group and reports bin means of c_hat.
/// Pass `grouped = false` to pool every point into the group "all".
MpcCurve mpc_curve(const std::vector<MpcPoint>& points, int n_bins, bool grouped = true);

/// max - min of bin-mean c_hat over bins whose mean wealth exceeds `wealth_above`.
/// Returns 0 if fewer than two bins qualify.
double mpc_flatness(const std::vector<MpcBin>& bins, double wealth_above);

/// Spread (max - min of bin means) of the bottom and top thirds of the bins.
struct TercileSpread {
    double bottom = 0.0;
    double top = 0.0;
};
TercileSpread mpc_tercile_spread(const std::vector<MpcBin>& bins);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// Percentile with linear interpolation between order statistics, q in [0, 1].
double percentile(std::vector<double> values, double q);

struct CurveBand {
    std::vector<long> steps;
    std::vector<double> median;
    std::vector<double> p25;
    std::vector<double> p75;
};

/// Pointwise median and interquartile band. All runs must share a step grid.
CurveBand aggregate_learning_curves(const std::vector<LearningCurve>& runs);

/// One row of a tidy statistics table.
struct TidyRow {
    std::string run;
    double x;
    std::string group;
    std::string statistic;
    double value;
};

void write_tidy_csv(std::ostream& out, const std::vector<TidyRow>& rows);

}  // namespace marlbc
