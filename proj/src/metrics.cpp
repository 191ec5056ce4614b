#include "marlbc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace marlbc {

double gini(std::span<const double> wealth) {
    if (wealth.empty()) throw std::invalid_argument("gini: empty input");
    double total = 0.0;
    for (double x : wealth) {
        if (!(x >= 0.0)) throw std::invalid_argument("gini: negative or NaN entry");
        total += x;
    }
    if (total <= 0.0) throw std::invalid_argument("gini: all-zero input");
    double diff = 0.0;
    for (double xi : wealth) {
        for (double xj : wealth) diff += std::abs(xi - xj);
    }
    const double n = static_cast<double>(wealth.size());
    return diff / (2.0 * n * total);
}

LorenzCurve lorenz(std::span<const double> wealth) {
    if (wealth.empty()) throw std::invalid_argument("lorenz: empty input");
    std::vector<double> sorted(wealth.begin(), wealth.end());
    for (double x : sorted) {
        if (!(x >= 0.0)) throw std::invalid_argument("lorenz: negative or NaN entry");
    }
    std::sort(sorted.begin(), sorted.end());
    const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    if (total <= 0.0) throw std::invalid_argument("lorenz: all-zero input");
    const std::size_t n = sorted.size();
    LorenzCurve c;
    c.population.resize(n + 1);
    c.wealth.resize(n + 1);
    c.population[0] = 0.0;
    c.wealth[0] = 0.0;
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cum += sorted[i];
        c.population[i + 1] = static_cast<double>(i + 1) / static_cast<double>(n);
        c.wealth[i + 1] = cum / total;
    }
    c.population[n] = 1.0;
    c.wealth[n] = 1.0;
    double area = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        area += (c.population[i] - c.population[i - 1]) * (c.wealth[i] + c.wealth[i - 1]);
    }
    c.gini = 1.0 - area;
    return c;
}

OlsFit ols_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("ols_fit: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("ols_fit: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) throw std::invalid_argument("ols_fit: constant regressor");
    OlsFit fit;
    fit.n = x.size();
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy > 0.0) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e = y[i] - fit.intercept - fit.slope * x[i];
            ssr += e * e;
        }
        fit.r_squared = std::clamp(1.0 - ssr / syy, 0.0, 1.0);
    }
    return fit;
}

OlsFit law_of_motion_check(const std::vector<std::vector<double>>& episodes, int burn_in) {
    if (burn_in < 0) throw std::invalid_argument("law_of_motion_check: negative burn-in");
    if (episodes.empty()) throw std::invalid_argument("law_of_motion_check: no episodes");
    std::vector<double> now;
    std::vector<double> next;
    const auto skip = static_cast<std::size_t>(burn_in);
    for (const auto& series : episodes) {
        if (skip + 1 >= series.size()) {
            throw std::invalid_argument("law_of_motion_check: burn-in leaves fewer than two points");
        }
        for (std::size_t t = skip; t + 1 < series.size(); ++t) {
            now.push_back(series[t]);
            next.push_back(series[t + 1]);
        }
    }
    return ols_fit(now, next);
}

OlsFit law_of_motion_check(std::span<const double> series, int burn_in) {
    return law_of_motion_check(std::vector<std::vector<double>>{{series.begin(), series.end()}}, burn_in);
}

std::vector<MpcBin> MpcCurve::group_bins(const std::string& group) const {
    std::vector<MpcBin> out;
    for (const auto& b : bins) {
        if (b.group == group) out.push_back(b);
    }
    return out;
}

MpcCurve mpc_curve(const std::vector<MpcPoint>& points, int n_bins, bool grouped) {
    if (n_bins < 1) throw std::invalid_argument("mpc_curve: need at least one bin");
    std::map<std::string, std::vector<std::pair<double, double>>> by_group;
    for (const auto& p : points) by_group[grouped ? p.group : "all"].emplace_back(p.wealth, p.c_hat);
    MpcCurve curve;
    for (auto& [group, pts] : by_group) {
        curve.groups.push_back(group);
        std::sort(pts.begin(), pts.end());
        const std::size_t n = pts.size();
        const int bins = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n_bins), n));
        for (int b = 0; b < bins; ++b) {
            const std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(bins);
            const std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(bins);
            MpcBin bin;
            bin.group = group;
            bin.bin = b;
            bin.wealth_low = pts[lo].first;
            bin.wealth_high = pts[hi - 1].first;
            for (std::size_t i = lo; i < hi; ++i) {
                bin.mean_wealth += pts[i].first;
                bin.mean_c_hat += pts[i].second;
            }
            bin.count = hi - lo;
            bin.mean_wealth /= static_cast<double>(bin.count);
            bin.mean_c_hat /= static_cast<double>(bin.count);
            curve.bins.push_back(bin);
        }
    }
    return curve;
}

double mpc_flatness(const std::vector<MpcBin>& bins, double wealth_above) {
    double lo = INFINITY;
    double hi = -INFINITY;
    int count = 0;
    for (const auto& b : bins) {
        if (b.mean_wealth <= wealth_above) continue;
        lo = std::min(lo, b.mean_c_hat);
        hi = std::max(hi, b.mean_c_hat);
        ++count;
    }
    return count < 2 ? 0.0 : hi - lo;
}

TercileSpread mpc_tercile_spread(const std::vector<MpcBin>& bins) {
    if (bins.size() < 3) throw std::invalid_argument("mpc_tercile_spread: need at least three bins");
    const std::size_t third = bins.size() / 3;
    auto spread = [&](std::size_t from, std::size_t to) {
        double lo = INFINITY;
        double hi = -INFINITY;
        for (std::size_t i = from; i < to; ++i) {
            lo = std::min(lo, bins[i].mean_c_hat);
            hi = std::max(hi, bins[i].mean_c_hat);
        }
        return hi - lo;
    };
    return {spread(0, third), spread(bins.size() - third, bins.size())};
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile: q outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

CurveBand aggregate_learning_curves(const std::vector<LearningCurve>& runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate_learning_curves: no runs");
    CurveBand band;
    band.steps = runs.front().steps;
    for (const auto& r : runs) {
        if (r.steps != band.steps || r.mean_reward.size() != r.steps.size()) {
            throw std::invalid_argument("aggregate_learning_curves: step grids differ");
        }
    }
    for (std::size_t i = 0; i < band.steps.size(); ++i) {
        std::vector<double> col;
        col.reserve(runs.size());
        for (const auto& r : runs) col.push_back(r.mean_reward[i]);
        band.median.push_back(percentile(col, 0.5));
        band.p25.push_back(percentile(col, 0.25));
        band.p75.push_back(percentile(col, 0.75));
    }
    return band;
}

void write_tidy_csv(std::ostream& out, const std::vector<TidyRow>& rows) {
    const auto old_precision = out.precision(17);
    out << "run,x,group,statistic,value\n";
    for (const auto& r : rows) out << r.run << ',' << r.x << ',' << r.group << ',' << r.statistic << ',' << r.value << '\n';
    out.precision(old_precision);
}

}  // namespace marlbc
