#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wdn/estimation.hpp"
#include "wdn/inp.hpp"

using namespace wdn;
using oracle::scalar_system;

namespace {

NetworkModel net1() { return load_inp(std::string(WDN_DATA_DIR) + "/networks/Net1.inp"); }

SensorConfig net1_layout() {
    SensorConfig c;
    for (const char* id : {"10", "22", "110", "112", "9"}) c.flow_sensors.push_back({id, 0.05});
    c.head_sensors.push_back({"12", 0.1});
    c.demand_meters.push_back({"10", 0.05});
    c.level_sensors.push_back({"2", 0.1});
    return c;
}

std::vector<double> flows_of(const NetworkModel& m, const HydraulicState& s) { return s.link_flows(m); }

} // namespace

TEST(Rng, DeterministicAndIndependent) {
    const Stream a(7, "flow:10", "noise"), b(7, "flow:10", "noise"), c(7, "flow:11", "noise");
    EXPECT_EQ(a.normal(3), b.normal(3));
    EXPECT_NE(a.normal(3), c.normal(3));
    double sum = 0.0, sq = 0.0;
    for (std::uint64_t i = 0; i < 20000; ++i) {
        const double z = a.normal(i);
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / 20000.0, 0.0, 0.03);
    EXPECT_NEAR(sq / 20000.0, 1.0, 0.03);
}

TEST(Measurement, NoiselessReadsState) {
    const auto m = net1();
    const auto cfg = net1_layout();
    cfg.check(m);
    const auto run = simulate(m, constant_schedule(m, default_controls(m)), {});
    const auto f = measure(m, cfg, run[3], 1, true);
    EXPECT_EQ(f.k, 3);
    EXPECT_DOUBLE_EQ(f.values[0], cfs_to_gpm(run[3].flow(m, m.link("10"))));
    EXPECT_DOUBLE_EQ(f.values[7], run[3].tank_heads[0] - m.tanks()[0].elevation);
    const auto g = measure(m, cfg, run[3], 1, false);
    EXPECT_NE(f.values[0], g.values[0]);
    EXPECT_EQ(g.values, measure(m, cfg, run[3], 1, false).values);
}

TEST(Estimation, NoiselessRecoveryWithKnotsAtTrueFlows) {
    const auto m = net1();
    const auto cfg = net1_layout();
    const auto run = simulate(m, constant_schedule(m, default_controls(m)), {});
    for (int k : {0, 5, 12}) {
        const auto& s = run[static_cast<std::size_t>(k)];
        const auto f = measure(m, cfg, s, 1, true);
        SystemOptions opt;
        opt.tank_heads = s.tank_heads;
        const auto sys = build_system(m, cfg, f, local_linearization(m, flows_of(m, s)), opt);
        const auto e = estimate(sys);
        for (int l = 0; l < m.n_links(); ++l) EXPECT_NEAR(e.flow(l), s.flow(m, l), 1e-6) << m.link_id(l);
        for (int j = 0; j < m.n_junctions(); ++j) EXPECT_NEAR(e.x(m.n_links() + j), s.junction_heads[static_cast<std::size_t>(j)], 1e-5);
        EXPECT_LT(e.residuals.cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_GT(e.condition_indicator, 1.0);
    }
}

TEST(Estimation, UnobservableReportsWitness) {
    const auto m = net1();
    SensorConfig cfg;
    cfg.demand_meters.push_back({"10", 0.05});
    const auto run = simulate(m, constant_schedule(m, default_controls(m)), {});
    const auto f = measure(m, cfg, run[0], 1, true);
    try {
        build_system(m, cfg, f, local_linearization(m, flows_of(m, run[0])));
        FAIL() << "expected ObservabilityError";
    } catch (const ObservabilityError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("null-space witness"), std::string::npos);
        EXPECT_NE(msg.find("q[9]"), std::string::npos);
    }
}

TEST(Estimation, SensitivityMatchesFiniteDifference) {
    const auto m = net1();
    const auto cfg = net1_layout();
    const auto run = simulate(m, constant_schedule(m, default_controls(m)), {});
    const auto f = measure(m, cfg, run[4], 3, false);
    const auto lin = local_linearization(m, flows_of(m, run[4]));
    const auto base = estimate(build_system(m, cfg, f, lin));
    const auto sens = sensitivity(build_system(m, cfg, f, lin));
    for (int i = 0; i < cfg.size(); ++i) {
        auto g = f;
        g.values[static_cast<std::size_t>(i)] += 1.0;
        const auto e = estimate(build_system(m, cfg, g, lin));
        for (Eigen::Index c = 0; c < e.x.size(); ++c) EXPECT_NEAR(e.x(c) - base.x(c), sens.state(c, i), 1e-6);
        for (Eigen::Index r = 0; r < e.residuals.size(); ++r)
            EXPECT_NEAR(e.residuals(r) - base.residuals(r), sens.residual(r, i), 1e-6);
    }
}

TEST(Estimation, EqualWeightsAverage) {
    EXPECT_NEAR(estimate(scalar_system({1.0, 3.0}, {1.0, 1.0})).x(0), 2.0, 1e-12);
}

TEST(Estimation, WeightedAverageHandValue) {
    const auto e = estimate(scalar_system({1.0, 3.0}, {3.0, 1.0}));
    EXPECT_NEAR(e.x(0), 1.5, 1e-12);
    EXPECT_NEAR(e.residuals(0), -0.5, 1e-12);
    EXPECT_NEAR(e.residuals(1), 1.5, 1e-12);
}

TEST(Estimation, IdentityLayout) {
    auto s = scalar_system({4.0}, {1.0});
    EXPECT_EQ(s.H(0, 0), 1.0);
    EXPECT_EQ(estimate(s).x(0), 4.0);
}

TEST(Estimation, WeightedResidualOrthogonality) {
    const auto m = net1();
    const auto cfg = net1_layout();
    const auto run = simulate(m, constant_schedule(m, default_controls(m)), {});
    for (int k = 0; k < 24; k += 3) {
        const auto f = measure(m, cfg, run[static_cast<std::size_t>(k)], 11, false);
        const auto sys = build_system(m, cfg, f, local_linearization(m, run[static_cast<std::size_t>(k)].link_flows(m)));
        const auto e = estimate(sys);
        const Eigen::VectorXd g = sys.H.transpose() * (sys.z - sys.H * e.x);
        EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-6) << k;
    }
}

TEST(Estimation, SigmaScalingKeepsConsistentEstimate) {
    const auto m = net1();
    auto cfg = net1_layout();
    const auto run = simulate(m, constant_schedule(m, default_controls(m)), {});
    const auto& s = run[7];
    SystemOptions opt;
    opt.tank_heads = s.tank_heads;
    const auto lin = local_linearization(m, s.link_flows(m));
    const auto a = estimate(build_system(m, cfg, measure(m, cfg, s, 1, true), lin, opt));
    cfg.flow_sensors[1].sigma *= 4.0;
    cfg.head_sensors[0].sigma *= 0.25;
    const auto f = measure(m, cfg, s, 1, true);
    const auto sys = build_system(m, cfg, f, lin, opt);
    EXPECT_DOUBLE_EQ(sys.H(1, m.link("22")), 1.0 / (4.0 * 0.05));
    const auto b = estimate(sys);
    EXPECT_LT((a.x - b.x).cwiseAbs().maxCoeff(), 1e-6);
}
