#include <gtest/gtest.h>

#include <chrono>

#include "wdn/hydraulics.hpp"
#include "wdn/inp.hpp"

using namespace wdn;

namespace {

const std::string kData = WDN_DATA_DIR;

StepControls pumps_on(const NetworkModel& m) {
    auto c = default_controls(m);
    for (auto& s : c.pump_speeds) s = 1.0;
    return c;
}

} // namespace

TEST(Simulate, QuiescentNetwork) {
    const auto m = parse_inp("[JUNCTIONS]\nJ1 10 0\nJ2 5 0\n[RESERVOIRS]\nR 80\n[TANKS]\nT 60 10 0 20 30\n"
                             "[PIPES]\nP1 J1 J2 500 8 100\nP2 J2 T 500 8 100\n[PUMPS]\nU R J1 HEAD C\n[CURVES]\nC 500 100\n");
    auto c = default_controls(m);
    c.pump_speeds[0] = 0.0;
    const auto out = simulate(m, constant_schedule(m, c));
    for (const auto& s : out) {
        for (double q : s.pipe_flows) EXPECT_NEAR(q, 0.0, 1e-12);
        EXPECT_DOUBLE_EQ(s.tank_heads_end[0], 70.0);
    }
}

TEST(Simulate, GravityPairCarriesDemand) {
    const auto m = parse_inp("[JUNCTIONS]\nJ 10 250\n[RESERVOIRS]\nR 200\n[PIPES]\nP R J 3000 10 110\n");
    const auto out = simulate(m, constant_schedule(m, default_controls(m)));
    EXPECT_NEAR(out[0].pipe_flows[0], gpm_to_cfs(250.0), 1e-12);
    EXPECT_NEAR(out[0].junction_heads[0], 200.0 - pipe_headloss(m.pipes()[0], gpm_to_cfs(250.0)), 1e-8);
}

TEST(Simulate, ClosedValveDecouples) {
    const auto m = parse_inp("[JUNCTIONS]\nJ1 10 50\nJ2 10 0\n[RESERVOIRS]\nR 100\n[PIPES]\nP R J1 100 6 100\n"
                             "[VALVES]\nV J1 J2 6 TCV 0 1\n[STATUS]\nV Closed\n");
    const auto out = simulate(m, constant_schedule(m, default_controls(m)));
    EXPECT_EQ(out[0].valve_flows[0], 0.0);
    EXPECT_EQ(out[0].junction_heads[1], 10.0);
}

TEST(Simulate, UnservableDemandReportsStep) {
    const auto m = parse_inp("[JUNCTIONS]\nJ1 10 50\nJ2 10 5\n[RESERVOIRS]\nR 100\n[PIPES]\nP R J1 100 6 100\n"
                             "[VALVES]\nV J1 J2 6 TCV 0 1\n[STATUS]\nV Closed\n");
    try {
        simulate(m, constant_schedule(m, default_controls(m)));
        FAIL();
    } catch (const InfeasibleError& e) {
        EXPECT_EQ(e.step(), 0);
    }
}

class Benchmarks : public ::testing::TestWithParam<std::string> {};

TEST_P(Benchmarks, ConservationAndEnergy) {
    const auto m = load_inp(kData + "/networks/" + GetParam());
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = simulate(m, constant_schedule(m, pumps_on(m)));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LT(secs, 10.0);
    ASSERT_EQ(static_cast<int>(out.size()), m.steps());
    for (const auto& s : out) {
        EXPECT_LE(max_mass_residual(m, s), 1e-6) << "step " << s.k;
        EXPECT_LE(max_energy_residual(m, s), 1e-4) << "step " << s.k;
        for (int t = 0; t < m.n_tanks(); ++t) {
            EXPECT_GE(s.tank_heads[static_cast<std::size_t>(t)], m.tanks()[static_cast<std::size_t>(t)].min_head() - 1e-12);
            EXPECT_LE(s.tank_heads[static_cast<std::size_t>(t)], m.tanks()[static_cast<std::size_t>(t)].max_head() + 1e-12);
        }
    }
}

TEST_P(Benchmarks, TankVolumeBookkeeping) {
    const auto m = load_inp(kData + "/networks/" + GetParam());
    const auto out = simulate(m, constant_schedule(m, pumps_on(m)));
    for (int t = 0; t < m.n_tanks(); ++t) {
        const auto& tk = m.tanks()[static_cast<std::size_t>(t)];
        const int n = m.tank_node(t);
        double inflow = 0.0, clamped = 0.0;
        for (const auto& s : out) {
            for (int l : m.incident(n)) inflow += m.direction(l, n) * s.flow(m, l) * m.dt();
            clamped += s.tank_clamped[static_cast<std::size_t>(t)];
        }
        const double dv = (out.back().tank_heads_end[static_cast<std::size_t>(t)] - out.front().tank_heads[static_cast<std::size_t>(t)]) * tk.area;
        EXPECT_NEAR(dv, inflow - clamped, 1e-6);
    }
}

TEST_P(Benchmarks, EnergyAlongPaths) {
    const auto m = load_inp(kData + "/networks/" + GetParam());
    const auto out = simulate(m, constant_schedule(m, pumps_on(m)));
    const auto& s = out[7];
    // Walk a spanning tree from the first fixed-head node and compare summed losses with head drops.
    const int root = m.n_junctions();
    std::vector<double> drop(static_cast<std::size_t>(m.n_nodes()), std::nan(""));
    drop[static_cast<std::size_t>(root)] = 0.0;
    std::vector<int> stack{root};
    int checked = 0;
    while (!stack.empty()) {
        const int n = stack.back();
        stack.pop_back();
        for (int l : m.incident(n)) {
            const int o = m.other_end(l, n);
            if (!std::isnan(drop[static_cast<std::size_t>(o)])) continue;
            double loss = 0.0;
            const double q = s.flow(m, l);
            if (m.link_kind(l) == LinkKind::pipe) {
                if (m.pipes()[static_cast<std::size_t>(l)].status == LinkStatus::closed) continue;
                loss = pipe_headloss(m.pipes()[static_cast<std::size_t>(l)], q);
            } else if (m.link_kind(l) == LinkKind::pump) {
                loss = -pump_headgain(m.pumps()[static_cast<std::size_t>(m.pump_of(l))], q, s.pump_speeds[static_cast<std::size_t>(m.pump_of(l))]);
            } else {
                continue;
            }
            const double along = m.link_from(l) == n ? loss : -loss;
            drop[static_cast<std::size_t>(o)] = drop[static_cast<std::size_t>(n)] + along;
            if (m.node_kind(o) == NodeKind::junction) {
                EXPECT_NEAR(s.head(m, root) - drop[static_cast<std::size_t>(o)], s.head(m, o), 1e-4);
                ++checked;
            }
            stack.push_back(o);
        }
    }
    EXPECT_GT(checked, 5);
}

INSTANTIATE_TEST_SUITE_P(Networks, Benchmarks, ::testing::Values("Net1.inp", "Net3.inp"));
