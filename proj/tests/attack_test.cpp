#include <gtest/gtest.h>

#include <chrono>

#include "oracles.hpp"
#include "wdn/attack.hpp"
#include "wdn/inp.hpp"

using namespace wdn;
using namespace wdn::oracle;

namespace {

NetworkModel net1() { return load_inp(std::string(WDN_DATA_DIR) + "/networks/Net1.inp"); }

SensorConfig net1_layout() {
    SensorConfig c;
    for (const char* id : {"10", "22", "110", "112", "9"}) c.flow_sensors.push_back({id, 0.05});
    c.head_sensors.push_back({"12", 0.1});
    for (const char* id : {"11", "12", "13", "21", "22", "23", "31", "32"}) c.demand_meters.push_back({id, 0.05});
    c.level_sensors.push_back({"2", 0.1});
    return c;
}

struct Net1Run {
    NetworkModel m = net1();
    SensorConfig cfg = net1_layout();
    std::vector<HydraulicState> run;
    std::vector<MeasurementFrame> frames;
    std::vector<EstimationSystem> systems;
    std::vector<Estimate> estimates;

    Net1Run() {
        run = simulate(m, constant_schedule(m, default_controls(m)), {});
        for (const auto& s : run) {
            frames.push_back(measure(m, cfg, s, 11, false));
            SystemOptions opt;
            opt.tank_heads = s.tank_heads;
            systems.push_back(build_system(m, cfg, frames.back(), local_linearization(m, s.link_flows(m)), opt));
            estimates.push_back(estimate(systems.back()));
        }
    }
};

} // namespace

TEST(AttackBasics, CapsUseClassInfinityNorm) {
    SensorConfig cfg;
    cfg.flow_sensors = {{"a"}, {"b"}};
    cfg.head_sensors = {{"c"}};
    MeasurementFrame f{0, {100.0, -300.0, 50.0}, {}};
    const auto caps = attack_caps(cfg, {{0, 2}, 0, 0}, f, {0.2, 0.1, 0.0});
    EXPECT_DOUBLE_EQ(caps[0], 30.0);
    EXPECT_DOUBLE_EQ(caps[1], 10.0);
}

TEST(AttackBasics, ZeroBoundsGiveZeroAttack) {
    Toy toy;
    const TargetSet t{{0, 1, 2, 3}, 0, 0};
    const auto a = fs_fdi_step(toy.context(t, 0.0), toy.f);
    EXPECT_TRUE(a.zero());
    EXPECT_TRUE(ha_fdi_step(toy.context(t, 0.0), toy.f).zero());
}

TEST(AttackBasics, OutsideWindowIsZero) {
    Toy toy;
    const TargetSet t{{0, 1, 2, 3}, 5, 8};
    EXPECT_TRUE(fs_fdi_step(toy.context(t, 0.1), toy.f).zero());
}

TEST(FsFdi, ToyMatchesGridSearch) {
    const auto start = std::chrono::steady_clock::now();
    Toy toy;
    const TargetSet t{{0, 1, 2, 3}, 0, 0};
    for (double alpha : {0.02, 0.1}) {
        const auto ctx = toy.context(t, alpha);
        const auto a = fs_fdi_step(ctx, toy.f);
        ASSERT_TRUE(a.feasible) << a.note;
        const auto caps = attack_caps(toy.cfg, t, toy.f, ctx.bounds);
        const double grid = toy_grid_search(toy, caps, ctx.detector_margin);
        EXPECT_NEAR(a.objective, grid, 1e-4) << "alpha " << alpha;
        EXPECT_GT(a.objective, 0.0);
        EXPECT_TRUE(validate_frame(toy.m, toy.cfg, apply_attack(toy.f, t, a)).pass);
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
}

TEST(FsFdi, DetectorBindsWhenRoomIsSmall) {
    Toy toy;
    toy.det.tau.setConstant(0.02);
    toy.det.b.setConstant(0.0);
    toy.det.c.setZero();
    const TargetSet t{{0, 1, 2, 3}, 0, 0};
    const auto ctx = toy.context(t, 0.1);
    const auto a = fs_fdi_step(ctx, toy.f);
    const auto caps = attack_caps(toy.cfg, t, toy.f, ctx.bounds);
    EXPECT_NEAR(a.objective, toy_grid_search(toy, caps, ctx.detector_margin), 1e-4);
}

TEST(HaFdi, RelaxationNeverBelowFullKnowledge) {
    Toy toy;
    const TargetSet t{{0, 1, 2, 3}, 0, 0};
    toy.det.tau.setConstant(0.02);
    toy.det.b.setConstant(0.0);
    const auto ctx = toy.context(t, 0.1);
    const auto fs = fs_fdi_step(ctx, toy.f), ha = ha_fdi_step(ctx, toy.f);
    EXPECT_GE(ha.objective, fs.objective - 1e-9);
    EXPECT_TRUE(validate_frame(toy.m, toy.cfg, apply_attack(toy.f, t, ha)).pass);
}

TEST(HuFdi, OptimizedIgnoresPhysics) {
    Toy toy;
    toy.det.tau.setConstant(100.0);
    const TargetSet t{{0, 3}, 0, 0};
    const auto ctx = toy.context(t, 0.1);
    const auto hu = hu_fdi_optimized(ctx, toy.f);
    const auto caps = attack_caps(toy.cfg, t, toy.f, ctx.bounds);
    EXPECT_NEAR(std::abs(hu.values[0]), caps[0], 1e-7);
    EXPECT_NEAR(std::abs(hu.values[1]), caps[1], 1e-7);
}

TEST(FsFdi, ProgramStaysLocal) {
    const Net1Run r;
    const TargetSet t{{0, r.cfg.index(Channel::demand, "11")}, 0, 0};
    AttackContext c;
    c.model = &r.m;
    c.cfg = &r.cfg;
    c.targets = t;
    c.bounds = {0.1, 0.1, 0.1};
    c.reference_flows.assign(static_cast<std::size_t>(r.m.n_links()), 100.0);
    const auto ap = build_attack_program(c, r.frames[0], {true, false});
    const auto local = local_subnetwork(r.m, r.cfg, t.sensors);
    std::set<std::string> ids;
    for (int l : local.links) ids.insert(r.m.link_id(l));
    for (int n : local.nodes) ids.insert(r.m.node_id(n));
    for (const auto& name : ap.lp.names) {
        const auto open = name.find('['), close = name.find_first_of(",]");
        const auto id = name.substr(open + 1, close - open - 1);
        if (name.rfind("dq", 0) == 0 || name.rfind("dh", 0) == 0) {
            EXPECT_TRUE(ids.count(id)) << name;
        }
    }
    // One mass row per local junction, nothing for the rest of the network.
    int mass = 0;
    for (const auto& con : ap.lp.constraints) mass += con.name.rfind("mass[", 0) == 0;
    EXPECT_EQ(mass, static_cast<int>(local.junctions.size()));
    EXPECT_LT(local.junctions.size(), static_cast<std::size_t>(r.m.n_junctions()));
}

TEST(HuFdi, ClosedFormKeepsCusumConstant) {
    const Net1Run r;
    const int ks = 10, ke = 20;
    std::vector<Eigen::VectorXd> hist;
    for (const auto& e : r.estimates) hist.push_back(e.residuals);
    const auto cal = calibrate_cusum(hist);
    auto det = make_vectorized_cusum(cal.tau, cal.b);
    const TargetSet t{{0, 5}, ks, ke};
    const auto rows = std::vector<int>{0, 5};
    std::vector<double> c_after;
    for (int k = 0; k < static_cast<int>(r.frames.size()); ++k) {
        const auto& sys = r.systems[static_cast<std::size_t>(k)];
        ClosedFormParams p;
        p.tau = det.tau;
        p.b = det.b;
        p.c = det.c;
        p.margin = 1e-9;
        const auto a = hu_closed_form_step(r.cfg, t, sys, r.estimates[static_cast<std::size_t>(k)], p, k);
        auto attacked = sys;
        const auto g = apply_attack(r.frames[static_cast<std::size_t>(k)], t, a);
        attacked.z = sys.z + sys.dz * (Eigen::Map<const Eigen::VectorXd>(g.values.data(), r.cfg.size()) -
                                          Eigen::Map<const Eigen::VectorXd>(r.frames[static_cast<std::size_t>(k)].values.data(), r.cfg.size()));
        const auto e = estimate(attacked);
        const auto alarms = cusum_step(det, e.residuals, k);
        if (t.active(k)) {
            EXPECT_FALSE(a.zero());
            for (const auto& al : alarms)
                for (int row : rows) EXPECT_NE(al.sensor, row) << "alarm at k " << k;
            for (int row : rows) c_after.push_back(det.c(row));
        }
    }
    ASSERT_EQ(c_after.size(), 2u * (ke - ks + 1));
    for (std::size_t i = 2; i < c_after.size(); ++i) EXPECT_NEAR(c_after[i], c_after[i % 2], 1e-10);
    for (int row : rows) EXPECT_NEAR(c_after[static_cast<std::size_t>(row == 0 ? 0 : 1)], det.tau(row) - 1e-9, 1e-10);
}

TEST(HuFdi, ChiSquaredRidesThreshold) {
    const Net1Run r;
    std::vector<Eigen::VectorXd> hist;
    for (const auto& e : r.estimates) hist.push_back(e.residuals);
    const Eigen::MatrixXd sigma = residual_covariance(hist);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    ChiSquaredDetector det;
    det.n_y = static_cast<int>(sigma.rows());
    det.gamma = 24.0;
    det.alpha = calibrate_chi2(det.n_y, det.gamma);
    det.sigma_inv = es.operatorInverseSqrt() * es.operatorInverseSqrt();
    ClosedFormParams p;
    p.kind = DetectorKind::chi2;
    p.alpha = det.alpha;
    p.sigma = sigma;
    p.margin = 1e-9;
    for (int k = 13; k <= 17; ++k) {
        const auto& res = r.estimates[static_cast<std::size_t>(k)].residuals;
        for (const std::vector<int>& sel : {std::vector<int>{0}, std::vector<int>{1, 4}}) {
            const auto a = hu_fdi_closed_form(p, res, k, 13, sel);
            ASSERT_TRUE(a.has_value());
            EXPECT_NEAR(quadratic_form(det.sigma_inv, res + *a), det.alpha, 1e-8);
            EXPECT_FALSE(chi2_step(det, res + *a, k));
        }
    }
}

TEST(HuFdi, ScalarCusumInfeasibleAboveThreshold) {
    ClosedFormParams p;
    p.kind = DetectorKind::cusum_scalar;
    p.tau_s = 1.0;
    p.b_s = 0.5;
    p.c_s = 2.0;
    p.sigma = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_FALSE(hu_fdi_closed_form(p, Eigen::VectorXd::Zero(2), 3, 3, {0}).has_value());
    p.c_s = 0.5;
    const auto a = hu_fdi_closed_form(p, Eigen::VectorXd::Ones(2), 3, 3, {0});
    ASSERT_TRUE(a.has_value());
    EXPECT_NEAR((*a)(0), 0.0, 1e-12);
    EXPECT_NEAR((*a)(1), -1.0, 1e-12);
}

TEST(RFdi, DeterministicClippedAndWindowed) {
    SensorConfig cfg;
    cfg.flow_sensors = {{"a"}, {"b"}};
    MeasurementFrame f{0, {100.0, 50.0}, {0.05, 0.05}};
    RfdiParams p{2.0, 0.5, 0.2, 0.3, 0.5, 0.1, 99};
    const TargetSet t{{0, 1}, 2, 30};
    std::vector<double> d1, d2;
    int clipped = 0;
    for (int k = 0; k < 40; ++k) {
        f.k = k;
        const auto a = r_fdi_step(p, f, cfg, t, k, d1), b = r_fdi_step(p, f, cfg, t, k, d2);
        EXPECT_EQ(a.values, b.values);
        if (!t.active(k)) {
            EXPECT_TRUE(a.zero());
        }
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_LE(std::abs(a.values[i]), 0.1 * f.values[i] + 1e-12);
            clipped += a.clipped[i];
        }
    }
    EXPECT_GT(clipped, 0);
    p.seed = 100;
    std::vector<double> d3;
    f.k = 5;
    EXPECT_NE(r_fdi_step(p, f, cfg, t, 5, d3).values, r_fdi_step(RfdiParams{2.0, 0.5, 0.2, 0.3, 0.5, 0.1, 99}, f, cfg, t, 5, d1).values);
    EXPECT_THROW((RfdiParams{0, 0, 0, 0, 1.5, 0.1, 0}.check()), Error);
}

TEST(Dispatch, KnowledgeAndConnectivity) {
    const auto m = net1();
    const auto cfg = net1_layout();
    const TargetSet near{{0, cfg.index(Channel::demand, "11")}, 0, 1};
    const TargetSet far{{0, cfg.index(Channel::demand, "32")}, 0, 1};
    const KnowledgeInventory full{true, true, true, true};
    EXPECT_TRUE(dispatch(AttackKind::fs_fdi, full, m, cfg, near).accepted);
    const auto rej = dispatch(AttackKind::fs_fdi, full, m, cfg, far);
    EXPECT_FALSE(rej.accepted);
    EXPECT_EQ(rej.message, "Selected sensors cannot satisfy physical constraints");
    ASSERT_FALSE(rej.suggestions.empty());
    for (const auto& g : rej.suggestions) {
        EXPECT_EQ(g.size(), 2u);
        EXPECT_TRUE(targets_connected(m, cfg, g));
    }
    EXPECT_FALSE(dispatch(AttackKind::fs_fdi, {true, false, true, true}, m, cfg, near).accepted);
    EXPECT_FALSE(dispatch(AttackKind::ha_fdi, {true, false, false, false}, m, cfg, near).accepted);
    EXPECT_TRUE(dispatch(AttackKind::ha_fdi, {true, false, false, true}, m, cfg, near).accepted);
    EXPECT_TRUE(dispatch(AttackKind::hu_fdi, {true, true, true, false}, m, cfg, far).accepted);
    EXPECT_TRUE(dispatch(AttackKind::r_fdi, {true, false, false, false}, m, cfg, far).accepted);
    EXPECT_FALSE(dispatch(AttackKind::r_fdi, {false, false, false, false}, m, cfg, far).accepted);
}
