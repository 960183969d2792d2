#include <gtest/gtest.h>

#include <random>

#include "wdn/components.hpp"

using namespace wdn;

namespace {

Tank tank(double area) {
    Tank t;
    t.elevation = 100.0;
    t.min_level = 0.0;
    t.init_level = 5.0;
    t.max_level = 10.0;
    t.area = area;
    return t;
}

Pump pump() {
    Pump p;
    p.shutoff_head = 200.0;
    p.alpha = 8.0;
    p.nu = 2.0;
    return p;
}

} // namespace

TEST(TankStep, ZeroInflow) {
    const auto r = tank_step(tank(1000.0), 105.0, 0.0, 100.0);
    EXPECT_EQ(r.head, 105.0);
    EXPECT_EQ(r.overflow, 0.0);
}

TEST(TankStep, HandEvaluation) {
    EXPECT_DOUBLE_EQ(tank_step(tank(1000.0), 105.0, 10.0, 100.0).head, 106.0);
}

TEST(TankStep, ClampsAndReports) {
    const auto up = tank_step(tank(1000.0), 109.5, 10.0, 100.0);
    EXPECT_DOUBLE_EQ(up.head, 110.0);
    EXPECT_DOUBLE_EQ(up.overflow, 500.0);
    const auto down = tank_step(tank(1000.0), 100.5, -10.0, 100.0);
    EXPECT_DOUBLE_EQ(down.head, 100.0);
    EXPECT_DOUBLE_EQ(down.deficit, 500.0);
    EXPECT_THROW(tank_step(tank(1.0), 0.0, 0.0, 0.0), Error);
}

TEST(PipeHeadloss, Values) {
    EXPECT_EQ(pipe_headloss(2.0, 0.0), 0.0);
    EXPECT_NEAR(pipe_headloss(2.0, 3.0), 15.2988419986805526920025156585, 1e-12);
    for (double q : {0.01, 0.7, 3.0, 41.0}) EXPECT_EQ(pipe_headloss(1.3, q), -pipe_headloss(1.3, -q));
}

TEST(PumpHeadgain, ShutoffAndMonotone) {
    const Pump p = pump();
    EXPECT_DOUBLE_EQ(pump_headgain(p, 0.0, 1.0), 200.0);
    double prev = kInf;
    for (double q = 0.0; q < 5.0; q += 0.25) {
        const double g = pump_headgain(p, q, 1.0);
        EXPECT_LT(g, prev);
        prev = g;
    }
    EXPECT_THROW(pump_headgain(p, 1.0, 0.0), Error);
}

TEST(PumpHeadgain, AffinityLaw) {
    Pump p = pump();
    p.nu = 1.7;
    const double qref = 3.1;
    EXPECT_NEAR(pump_headgain(p, 0.5 * qref, 0.5), 0.25 * pump_headgain(p, qref, 1.0), 1e-12);
}

TEST(ValveHeadloss, Values) {
    Valve v;
    v.minor_loss = 0.5;
    EXPECT_EQ(valve_headloss(v, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(valve_headloss(v, 4.0), 8.0);
    EXPECT_DOUBLE_EQ(valve_headloss(v, -4.0), -8.0);
}

TEST(LinearizePipe, SingleChord) {
    Pipe p;
    p.resistance = 1.7;
    const auto c = linearize_pipe(p, 0.0, 4.0, 1);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_DOUBLE_EQ(c(0.0), 0.0);
    EXPECT_NEAR(c(4.0), 1.7 * std::pow(4.0, 1.852), 1e-12);
}

TEST(LinearizePipe, KnotsExactAndContiguous) {
    Pipe p;
    p.resistance = 0.9;
    p.diameter = 12.0;
    const auto c = linearize_pipe(p, 5);
    ASSERT_EQ(c.size(), 5u);
    for (std::size_t n = 0; n < c.size(); ++n) {
        const auto& s = c.segments[n];
        EXPECT_NEAR(s.slope * s.q_min + s.intercept, pipe_headloss(p, s.q_min), 1e-12 * (1 + std::abs(pipe_headloss(p, s.q_min))));
        EXPECT_NEAR(s.slope * s.q_max + s.intercept, pipe_headloss(p, s.q_max), 1e-12 * (1 + std::abs(pipe_headloss(p, s.q_max))));
        if (n > 0) {
            EXPECT_EQ(s.q_min, c.segments[n - 1].q_max);
        }
    }
    EXPECT_NEAR(c.segments.front().q_min, -pipe_flow_cap(p), 1e-12);
}

TEST(LinearizePipe, KnotTieGoesToLowerSegment) {
    Pipe p;
    p.resistance = 1.0;
    const auto c = linearize_pipe(p, 0.0, 2.0, 2);
    EXPECT_EQ(c.segment_index(1.0), 0u);
    EXPECT_EQ(c.segment_index(1.0 + 1e-12), 1u);
}

TEST(LinearizePipe, ErrorShrinksWithSegments) {
    Pipe p;
    p.resistance = 2.3;
    auto max_err = [&](int n) {
        const auto c = linearize_pipe(p, 0.0, 3.0, n);
        double e = 0.0;
        for (int i = 0; i <= 30000; ++i) {
            const double q = 3.0 * i / 30000.0;
            e = std::max(e, std::abs(c(q) - pipe_headloss(p, q)));
        }
        return e;
    };
    double prev = max_err(1);
    for (int n : {2, 4, 8, 16}) {
        const double e = max_err(n);
        EXPECT_LT(e, prev);
        prev = e;
    }
    EXPECT_THROW(linearize_pipe(p, 1.0, 1.0, 2), Error);
}

TEST(FitPumpQuadratic, RecoversExactQuadratic) {
    const std::array<double, 4> b{3.5, 0.25, 180.0, 4.0};
    std::vector<PumpSample> s;
    for (double sp : {0.6, 0.8, 1.0})
        for (double q : {0.0, 1.0, 2.0, 3.0}) s.push_back({q, sp, b[0] * q * q + b[1] * q - b[2] * sp * sp - b[3]});
    const auto f = fit_pump_quadratic(s);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(f[i], b[i], 1e-9);
}

TEST(FitPumpQuadratic, MatchesUnconstrainedWhenInactive) {
    Pump p = pump();
    const auto s = pump_samples(p);
    const auto f = fit_pump_quadratic(s);
    Eigen::MatrixXd a(static_cast<Eigen::Index>(s.size()), 4);
    Eigen::VectorXd y(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
        a.row(static_cast<Eigen::Index>(i)) << s[i].q * s[i].q, s[i].q, -s[i].s * s[i].s, -1.0;
        y(static_cast<Eigen::Index>(i)) = s[i].dh;
    }
    const Eigen::VectorXd u = (a.transpose() * a).ldlt().solve(a.transpose() * y);
    const Eigen::Vector4d fv(f[0], f[1], f[2], f[3]);
    const double rms_c = std::sqrt((a * fv - y).squaredNorm() / static_cast<double>(s.size()));
    const double rms_u = std::sqrt((a * u - y).squaredNorm() / static_cast<double>(s.size()));
    EXPECT_LE(rms_c, rms_u + 1e-12);
    EXPECT_NEAR(f[0], p.alpha, 1e-9);
    EXPECT_NEAR(f[2], p.shutoff_head, 1e-9);
}

TEST(FitPumpQuadratic, ConstraintBindsOnConcaveData) {
    std::vector<PumpSample> s;
    for (double sp : {0.6, 0.8, 1.0})
        for (double q : {0.0, 1.0, 2.0, 3.0}) s.push_back({q, sp, -1.5 * q * q + q - 50.0 * sp * sp});
    const auto f = fit_pump_quadratic(s);
    EXPECT_GE(f[0], 0.0);
    EXPECT_GE(f[2], 0.0);
}

TEST(FitPumpQuadratic, IdenticalSamplesRankDeficient) {
    std::vector<PumpSample> s(6, PumpSample{1.0, 1.0, -5.0});
    EXPECT_THROW(fit_pump_quadratic(s), Error);
}
