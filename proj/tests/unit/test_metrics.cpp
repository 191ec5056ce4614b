#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "marlbc/config.hpp"
#include "marlbc/metrics.hpp"
#include "marlbc/oracle.hpp"

using namespace marlbc;
using doctest::Approx;

namespace {

double brute_gini(const std::vector<double>& v) {
    double num = 0.0;
    for (double a : v) {
        for (double b : v) num += std::abs(a - b);
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return num / (2.0 * static_cast<double>(v.size() * v.size()) * mean);
}

}  // namespace

TEST_CASE("gini") {
    CHECK(gini(std::vector<double>{1, 1, 1, 1}) == 0.0);
    CHECK(gini(std::vector<double>{0, 0, 0, 1}) == Approx(0.75).epsilon(1e-15));
    CHECK(gini(std::vector<double>{1, 2, 3, 4}) == Approx(brute_gini({1, 2, 3, 4})).epsilon(1e-15));
    CHECK(gini(std::vector<double>{1, 2, 3, 4}) == Approx(0.25).epsilon(1e-15));
    CHECK_THROWS_AS(gini(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(gini(std::vector<double>{1, -1}), std::invalid_argument);
    CHECK_THROWS_AS(gini(std::vector<double>{0, 0}), std::invalid_argument);
}

TEST_CASE("lorenz curve") {
    const LorenzCurve eq = lorenz(std::vector<double>{2, 2, 2, 2});
    for (std::size_t i = 0; i < eq.population.size(); ++i) CHECK(eq.wealth[i] == Approx(eq.population[i]).epsilon(1e-15));
    const LorenzCurve one = lorenz(std::vector<double>{0, 0, 0, 1});
    for (std::size_t i = 0; i <= 3; ++i) CHECK(one.wealth[i] == 0.0);
    CHECK(one.population[3] == 0.75);
    CHECK(one.wealth[4] == 1.0);
}

TEST_CASE("trapezoid and pairwise Gini agree on 1000 random vectors") {
    Rng rng(1);
    int bad = 0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> v(1 + rng.index(60));
        for (double& x : v) x = rng.bernoulli(0.1) ? 0.0 : std::exp(1.5 * rng.normal());
        if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
        const double pairwise = gini(v);
        if (std::abs(lorenz(v).gini - pairwise) > 1e-10) ++bad;
        if (std::abs(brute_gini(v) - pairwise) > 1e-12) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("ols_fit") {
    std::vector<double> x{0, 1, 2, 3, 4};
    std::vector<double> y{1, 3, 5, 7, 9};
    OlsFit f = ols_fit(x, y);
    CHECK(f.slope == Approx(2.0).epsilon(1e-15));
    CHECK(f.intercept == Approx(1.0).epsilon(1e-15));
    CHECK(f.r_squared == Approx(1.0).epsilon(1e-15));
    f = ols_fit(x, std::vector<double>(5, 3.0));
    CHECK(f.r_squared == 0.0);
    CHECK(f.slope == 0.0);
    CHECK_THROWS(ols_fit(std::vector<double>(5, 1.0), y));
    CHECK_THROWS(ols_fit(std::vector<double>{1.0}, std::vector<double>{1.0}));
}

TEST_CASE("ols_fit matches a two-pass computation") {
    Rng rng(2);
    std::vector<double> x(500);
    std::vector<double> y(500);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(0.0, 10.0);
        y[i] = 0.7 * x[i] - 2.0 + rng.normal();
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / 500.0;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / 500.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sse += std::pow(y[i] - intercept - slope * x[i], 2);
    const OlsFit f = ols_fit(x, y);
    CHECK(std::abs(f.slope - slope) <= 1e-12);
    CHECK(std::abs(f.intercept - intercept) <= 1e-12);
    CHECK(std::abs(f.r_squared - (1.0 - sse / syy)) <= 1e-12);
}

TEST_CASE("law of motion of a constant-consumption-share economy") {
    ScenarioConfig c = preset("rbc_partial");
    c.ar1.sigma = 0.0;
    c.economy.initial_capital = 0.3;
    Economy e(c.economy, c.shock_spec(), c.mask);
    e.reset(0);
    std::vector<double> K;
    const HouseholdAction a{0.2, 0.3};
    while (!e.done()) K.push_back(e.step(std::span<const HouseholdAction>(&a, 1)).aggregate_capital);
    const OlsFit tail = law_of_motion_check(K, 300);
    CHECK(tail.r_squared == Approx(1.0).epsilon(1e-6));
    const OlsFit whole = law_of_motion_check(K, 0);
    CHECK(whole.r_squared > 0.99);

    Rng rng(3);
    std::vector<double> shuffled = K;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    CHECK(law_of_motion_check(shuffled, 0).r_squared < whole.r_squared);
    CHECK_THROWS(law_of_motion_check(K, static_cast<int>(K.size())));
}

TEST_CASE("pooled law of motion skips episode boundaries") {
    const std::vector<std::vector<double>> eps{{1, 2, 3, 4}, {10, 20, 30, 40}};
    const OlsFit f = law_of_motion_check(eps, 1);
    CHECK(f.n == 4);
}

TEST_CASE("mpc curve") {
    std::vector<MpcPoint> pts;
    Rng rng(4);
    for (int i = 0; i < 300; ++i) pts.push_back({rng.uniform(0.0, 50.0), 0.99, i % 2 ? "a" : "b"});
    const MpcCurve flat = mpc_curve(pts, 10);
    for (const auto& b : flat.bins) CHECK(b.mean_c_hat == Approx(0.99).epsilon(1e-15));
    CHECK(mpc_flatness(flat.group_bins("a"), 20.0) == Approx(0.0).epsilon(1e-12));

    std::vector<MpcPoint> same = pts;
    for (auto& p : same) {
        p.group = "x";
        p.c_hat = 1.0 / (1.0 + p.wealth);
    }
    const MpcCurve grouped = mpc_curve(same, 8, true);
    const MpcCurve pooled = mpc_curve(same, 8, false);
    REQUIRE(grouped.bins.size() == pooled.bins.size());
    for (std::size_t i = 0; i < grouped.bins.size(); ++i) {
        CHECK(grouped.bins[i].mean_c_hat == pooled.bins[i].mean_c_hat);
        CHECK(grouped.bins[i].mean_wealth == pooled.bins[i].mean_wealth);
    }
    std::vector<double> w, ch;
    for (const auto& b : pooled.bins) {
        w.push_back(b.mean_wealth);
        ch.push_back(b.mean_c_hat);
    }
    CHECK(spearman(w, ch) == Approx(-1.0));
    const TercileSpread t = mpc_tercile_spread(pooled.bins);
    CHECK(t.top < t.bottom);
}

TEST_CASE("spearman with ties") {
    CHECK(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 2}) == Approx(std::sqrt(3.0) / 2.0));
}

TEST_CASE("percentile convention") {
    CHECK(percentile({1, 2, 3}, 0.25) == 1.5);
    CHECK(percentile({1, 2, 3}, 0.5) == 2.0);
    CHECK(percentile({4}, 0.9) == 4.0);
}

TEST_CASE("aggregate_learning_curves") {
    const LearningCurve c1{{10, 20}, {1, 1}, {0, 0}};
    const LearningCurve c2{{10, 20}, {2, 2}, {0, 0}};
    const LearningCurve c3{{10, 20}, {3, 3}, {0, 0}};
    const CurveBand b = aggregate_learning_curves({c1, c2, c3});
    CHECK(b.median == std::vector<double>{2, 2});
    CHECK(b.p25 == std::vector<double>{1.5, 1.5});
    CHECK(b.p75 == std::vector<double>{2.5, 2.5});
    const CurveBand same = aggregate_learning_curves({c2, c2, c2});
    CHECK(same.p25 == same.median);
    CHECK(same.p75 == same.median);
    const LearningCurve off{{10, 30}, {1, 1}, {0, 0}};
    CHECK_THROWS(aggregate_learning_curves({c1, off}));
}

TEST_CASE("tidy csv") {
    std::ostringstream out;
    write_tidy_csv(out, {{"r", 1.0, "all", "gini", 0.25}});
    CHECK(out.str().rfind("run,x,group,statistic,value\n", 0) == 0);
    CHECK(out.str().find("r,1,all,gini,0.25") != std::string::npos);
}
