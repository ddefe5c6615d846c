#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "spadchar/model.hpp"

using namespace spadchar;

namespace {

std::vector<TrapSpecies> single(double lifetime_us) { return {{lifetime_us, 1.0}}; }

// RK4 integration of dN/dt = -N/tau, independent of the closed form.
double integrate_decay(double n0, double tau_ns, double elapsed_ns, int steps) {
    const double h = elapsed_ns / steps;
    double n = n0;
    auto f = [&](double v) { return -v / tau_ns; };
    for (int i = 0; i < steps; ++i) {
        const double k1 = f(n), k2 = f(n + h * k1 / 2), k3 = f(n + h * k2 / 2), k4 = f(n + h * k3);
        n += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6;
    }
    return n;
}

} // namespace

TEST(TrapStep, ZeroElapsedZeroCaptureIsIdentity) {
    const auto sp = single(1.0);
    const TrapState s{{10.0}, 0.0};
    EXPECT_EQ(trap_step(s, sp, 0.0, 0.0), s);
}

TEST(TrapStep, DecayMatchesNumericalIntegration) {
    const auto sp = single(1.0);
    const auto next = trap_step({{10.0}, 0.0}, sp, 1000.0, 0.0);
    const double oracle = integrate_decay(10.0, 1000.0, 1000.0, 10000);
    EXPECT_NEAR(next.populations[0], oracle, 1e-9);
    EXPECT_NEAR(next.populations[0], 3.6788, 1e-4);
    EXPECT_DOUBLE_EQ(next.last_update_ns, 1000.0);
}

TEST(TrapStep, CaptureSplitsByWeight) {
    const std::vector<TrapSpecies> sp{{1.0, 0.7}, {5.0, 0.3}};
    const auto next = trap_step(TrapState::empty(2), sp, 0.0, 100.0);
    EXPECT_DOUBLE_EQ(next.populations[0], 70.0);
    EXPECT_DOUBLE_EQ(next.populations[1], 30.0);
}

TEST(TrapStep, RejectsNegativeArguments) {
    const auto sp = single(1.0);
    EXPECT_THROW(trap_step({{1.0}, 0.0}, sp, -1.0, 0.0), ArgumentError);
    EXPECT_THROW(trap_step({{1.0}, 0.0}, sp, 1.0, -1.0), ArgumentError);
}

TEST(ExpectedRelease, EmptyTrapsReleaseNothing) {
    const auto sp = single(1.0);
    for (double w : {0.1, 4.0, 1e6}) EXPECT_EQ(expected_release({{0.0}, 0.0}, sp, w), 0.0);
}

TEST(ExpectedRelease, MatchesMonteCarloReleaseSampling) {
    const auto sp = single(1.0);
    const double analytic = expected_release({{100.0}, 0.0}, sp, 1000.0);
    EXPECT_NEAR(analytic, 100.0 * (1.0 - std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(analytic, 63.21, 5e-3);

    // 100 carriers, each released at an Exp(tau) time; count those inside the window.
    std::mt19937_64 rng(2024);
    std::exponential_distribution<double> release(1.0 / 1000.0);
    const int trials = 20000;
    double total = 0.0;
    for (int t = 0; t < trials; ++t)
        for (int c = 0; c < 100; ++c) total += release(rng) < 1000.0 ? 1.0 : 0.0;
    const double mc = total / trials;
    const double se = std::sqrt(100.0 * 0.632 * 0.368 / trials);
    EXPECT_NEAR(mc, analytic, 4.0 * se);
}

TEST(ExpectedRelease, LongWindowReleasesEverything) {
    const std::vector<TrapSpecies> sp{{0.5, 0.5}, {8.0, 0.5}};
    const TrapState s{{40.0, 60.0}, 0.0};
    EXPECT_NEAR(expected_release(s, sp, 1e9), 100.0, 100.0 * 1e-6);
}

TEST(AvalancheCharge, BoundaryAndLinearGrowth) {
    DetectorParams p;
    p.buildup_time_ps = 300.0;
    p.avalanche_rate_e_per_ns = 10.0;
    p.min_avalanche_charge_e = 50.0;
    EXPECT_DOUBLE_EQ(avalanche_charge(0.0, p), 50.0);
    EXPECT_DOUBLE_EQ(avalanche_charge(1300.0, p), 60.0);
    EXPECT_DOUBLE_EQ(avalanche_charge(200.0, p), 50.0);
}

TEST(DetectionEfficiency, Examples) {
    DetectorParams p;
    p.efficiency_scale = 0.25;
    p.efficiency_knee_v = 2.0;
    EXPECT_EQ(detection_efficiency(0.0, p), 0.0);
    EXPECT_NEAR(detection_efficiency(2.5, p), 0.25 * (1.0 - std::exp(-1.25)), 1e-15);
    EXPECT_NEAR(detection_efficiency(2.5, p), 0.1784, 5e-5);
    EXPECT_NEAR(detection_efficiency(1e4, p), 0.25, 1e-9);
    EXPECT_THROW(detection_efficiency(-0.1, p), ArgumentError);
}

TEST(DarkRate, LinearInExcessBias) {
    DetectorParams p;
    p.dark_rate_per_ns = 1e-5;
    p.dark_reference_bias_v = 2.5;
    EXPECT_DOUBLE_EQ(dark_rate_at(2.5, p), 1e-5);
    EXPECT_DOUBLE_EQ(dark_rate_at(5.0, p), 2e-5);
    EXPECT_EQ(dark_rate_at(0.0, p), 0.0);
}

TEST(DefaultMixture, TracksPowerLawOverOneToHundredMicroseconds) {
    const auto mix = default_trap_mixture();
    validate(mix);
    // Surviving fraction after t versus c * t^-0.916, with c the log-mean ratio.
    std::vector<double> t, ratio;
    for (int i = 0; i <= 80; ++i) {
        const double ti = std::pow(10.0, 2.0 * i / 80.0);
        double surviving = 0.0;
        for (const auto& s : mix) surviving += s.weight * std::exp(-ti / s.lifetime_us);
        t.push_back(ti);
        ratio.push_back(surviving / std::pow(ti, -0.916));
    }
    double log_mean = 0.0;
    for (double r : ratio) log_mean += std::log(r);
    const double c = std::exp(log_mean / ratio.size());
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(ratio[i] / c, 1.0, 0.035) << "t = " << t[i];
}

TEST(Validation, RejectsBrokenParameters) {
    DetectorParams p;
    EXPECT_NO_THROW(validate(p));
    auto bad = p;
    bad.bias.reverse_bias_v = 50.0;
    EXPECT_THROW(validate(bad), InvariantError);
    bad = p;
    bad.trap_species = {{1.0, 0.6}, {2.0, 0.3}};
    try {
        validate(bad);
        FAIL();
    } catch (const InvariantError& e) {
        EXPECT_EQ(e.key(), "trap_weights");
    }
    bad = p;
    bad.trigger_efficiency = 1.5;
    EXPECT_THROW(validate(bad), InvariantError);
    bad = p;
    bad.trap_species = {{0.0, 1.0}};
    EXPECT_THROW(validate(bad), InvariantError);
}

// ---- properties ----

class TrapProperties : public ::testing::TestWithParam<int> {};

TEST_P(TrapProperties, PopulationsStayNonNegative) {
    std::mt19937_64 rng(GetParam());
    std::uniform_real_distribution<double> elapsed(0.0, 5000.0), capture(0.0, 50.0);
    const auto sp = default_trap_mixture();
    auto s = TrapState::empty(sp.size());
    for (int i = 0; i < 200; ++i) {
        s = trap_step(s, sp, elapsed(rng), capture(rng));
        for (double n : s.populations) ASSERT_GE(n, 0.0);
    }
}

TEST_P(TrapProperties, HalvingTimeIsLifetimeTimesLn2) {
    std::mt19937_64 rng(GetParam());
    const double tau_us = std::uniform_real_distribution<double>(0.1, 100.0)(rng);
    const double n0 = std::uniform_real_distribution<double>(1.0, 1e6)(rng);
    const auto sp = single(tau_us);
    const auto half = trap_step({{n0}, 0.0}, sp, tau_us * 1000.0 * std::log(2.0), 0.0);
    EXPECT_NEAR(half.populations[0] / n0, 0.5, 0.5e-9);
}

TEST_P(TrapProperties, TotalNonIncreasingWithoutCapture) {
    std::mt19937_64 rng(GetParam());
    std::uniform_real_distribution<double> elapsed(0.0, 3000.0);
    const auto sp = default_trap_mixture();
    TrapState s{{5.0, 4.0, 3.0, 2.0, 1.0}, 0.0};
    for (int i = 0; i < 100; ++i) {
        const auto next = trap_step(s, sp, elapsed(rng), 0.0);
        ASSERT_LE(next.total(), s.total());
        s = next;
    }
}

TEST_P(TrapProperties, ReleaseIsAdditiveOverAdjacentWindows) {
    std::mt19937_64 rng(GetParam());
    std::uniform_real_distribution<double> pop(0.0, 1e4), win(0.01, 20000.0);
    const auto sp = default_trap_mixture();
    TrapState s{{pop(rng), pop(rng), pop(rng), pop(rng), pop(rng)}, 0.0};
    const double w1 = win(rng), w2 = win(rng);
    const double split = expected_release(s, sp, w1) + expected_release(trap_step(s, sp, w1, 0.0), sp, w2);
    const double whole = expected_release(s, sp, w1 + w2);
    EXPECT_NEAR(split, whole, 1e-9 * whole);
}

TEST_P(TrapProperties, ChargeAndEfficiencyAreMonotone) {
    std::mt19937_64 rng(GetParam());
    std::uniform_real_distribution<double> q(0.0, 10000.0), v(0.0, 20.0);
    DetectorParams p;
    for (int i = 0; i < 500; ++i) {
        double a = q(rng), b = q(rng);
        if (a > b) std::swap(a, b);
        ASSERT_LE(avalanche_charge(a, p), avalanche_charge(b, p));
        double x = v(rng), y = v(rng);
        if (x > y) std::swap(x, y);
        ASSERT_LE(detection_efficiency(x, p), detection_efficiency(y, p));
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, TrapProperties, ::testing::Range(1, 21));
