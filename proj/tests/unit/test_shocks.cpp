#include <doctest.h>

#include <cmath>

#include "marlbc/error.hpp"
#include "marlbc/shocks.hpp"

using namespace marlbc;
using doctest::Approx;

TEST_CASE("ar1_step without noise") {
    Rng rng(1);
    const Ar1Params p{0.9, 0.0};
    const Ar1Draw d = ar1_step(p, 0.1, rng);
    CHECK(d.z == Approx(0.09).epsilon(1e-15));
    CHECK(d.technology == Approx(std::exp(0.09)).epsilon(1e-15));
    double z = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Ar1Draw e = ar1_step(p, z, rng);
        CHECK(e.z == 0.0);
        CHECK(e.technology == 1.0);
        z = e.z;
    }
}

TEST_CASE("ar1 long-run variance") {
    Rng rng(42);
    const Ar1Params p{0.9, 0.01};
    double z = 0.0;
    double sum = 0.0;
    double sum2 = 0.0;
    const int n = 1000000;
    for (int t = 0; t < 1000; ++t) z = ar1_step(p, z, rng).z;
    for (int t = 0; t < n; ++t) {
        z = ar1_step(p, z, rng).z;
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(var == Approx(0.01 * 0.01 / 0.19).epsilon(0.05));
}

TEST_CASE("ar1 parameters are validated") {
    CHECK_THROWS_AS((Ar1Params{1.0, 0.01}.validate()), ConfigError);
    CHECK_THROWS_AS((Ar1Params{0.9, -0.01}.validate()), ConfigError);
}

TEST_CASE("build_ks_matrix identities") {
    const KsMatrix m = build_ks_matrix();
    for (const auto& row : m) {
        double s = 0.0;
        for (double v : row) s += v;
        CHECK(s == Approx(1.0).epsilon(1e-12));
    }
    CHECK(m[2][2] / 0.875 == Approx(1.0 / 3.0).epsilon(1e-4));
    CHECK(std::abs(0.04 * (1.0 / 3.0) + 0.96 * (m[3][2] / 0.875) - 0.04) <= 1e-4);
    CHECK(m[3][2] == Approx(0.024306).epsilon(1e-9));
}

TEST_CASE("validate_ks_matrix rejects broken matrices") {
    KsMatrix m = build_ks_matrix();
    m[0][0] += 0.01;
    CHECK_THROWS_AS(validate_ks_matrix(m, 0.04, 0.10), SolverError);
    m = build_ks_matrix();
    CHECK_THROWS_AS(validate_ks_matrix(m, 0.05, 0.10), SolverError);
}

TEST_CASE("absorbing KS chain keeps regime and flags") {
    KsParams p;
    KsMatrix m{};
    for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
    p.joint_transition = m;
    Rng rng(3);
    KsState s{Regime::Bad, {1, 0, 1, 1, 0}};
    for (int t = 0; t < 1000; ++t) {
        const KsState next = ks_step(p, s, rng);
        CHECK(next.aggregate == Regime::Bad);
        CHECK(next.employed == s.employed);
        s = next;
    }
}

TEST_CASE("aggregate chain spends half the time in the good regime") {
    KsParams p;
    Rng rng(17);
    KsState s{Regime::Good, {1}};
    long good = 0;
    const long n = 1000000;
    for (long t = 0; t < n; ++t) {
        s = ks_step(p, s, rng);
        good += s.aggregate == Regime::Good ? 1 : 0;
    }
    CHECK(static_cast<double>(good) / n == Approx(0.5).epsilon(0.02));
}

TEST_CASE("employment flows preserve the regime unemployment rate") {
    KsParams p;
    Rng rng(8);
    KsState s{Regime::Good, std::vector<std::uint8_t>(20000, 1)};
    for (std::size_t i = 0; i < 800; ++i) s.employed[i] = 0;  // 4%
    p.joint_transition = build_ks_matrix();
    const KsState next = ks_step(p, s, rng);
    double u = 0.0;
    for (auto f : next.employed) u += f ? 0.0 : 1.0;
    const double expected = next.aggregate == Regime::Good ? 0.04 : 0.10;
    CHECK(u / 20000.0 == Approx(expected).epsilon(0.15));
}

TEST_CASE("initial_shock_state") {
    Rng rng(1);
    const ShockState a = initial_shock_state(ShockSpec{Ar1Params{}}, 1, rng);
    CHECK(technology(ShockSpec{Ar1Params{}}, a) == 1.0);

    const ShockSpec ks{KsParams{}};
    double unemployed = 0.0;
    const int trials = 5000;
    for (int t = 0; t < trials; ++t) {
        const auto s = std::get<KsState>(initial_shock_state(ks, 20, rng, Regime::Good));
        for (auto f : s.employed) unemployed += f ? 0.0 : 1.0;
    }
    CHECK(unemployed / trials == Approx(0.04 * 20).epsilon(0.05));

    Rng r1(99);
    Rng r2(99);
    CHECK(std::get<KsState>(initial_shock_state(ks, 20, r1)).employed ==
          std::get<KsState>(initial_shock_state(ks, 20, r2)).employed);
}

TEST_CASE("technology levels") {
    const ShockSpec ks{KsParams{}};
    CHECK(technology(ks, KsState{Regime::Good, {}}) == 1.02);
    CHECK(technology(ks, KsState{Regime::Bad, {}}) == 0.98);
    CHECK(log_technology(ks, KsState{Regime::Good, {}}) == Approx(std::log(1.02)));
    CHECK(log_technology(ShockSpec{Ar1Params{}}, Ar1State{0.03}) == 0.03);
}
