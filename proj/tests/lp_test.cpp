#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "oracles.hpp"
#include "wdn/lp.hpp"

using namespace wdn;
using namespace wdn::oracle;

TEST(SolveLp, SingleUpperBound) {
    LinearProgram p;
    p.sense = Sense::maximize;
    const int x = p.add_var("x", -kInf, kInf, 1.0);
    p.add({{x, 1.0}}, Relation::le, 5.0);
    const auto s = solve_lp(p);
    ASSERT_EQ(s.status, SolveStatus::optimal);
    EXPECT_DOUBLE_EQ(s.values[0], 5.0);
    EXPECT_DOUBLE_EQ(s.objective_value, 5.0);
}

TEST(SolveLp, SymmetricCover) {
    LinearProgram p;
    const int x = p.add_var("x", 0.0, kInf, 1.0), y = p.add_var("y", 0.0, kInf, 1.0);
    p.add({{x, 1.0}, {y, 1.0}}, Relation::ge, 2.0);
    const auto s = solve_lp(p);
    ASSERT_EQ(s.status, SolveStatus::optimal);
    EXPECT_NEAR(s.objective_value, 2.0, 1e-12);
}

TEST(SolveLp, InfeasibleAndUnbounded) {
    LinearProgram p;
    const int x = p.add_var("x", 0.0, kInf, 1.0);
    p.add({{x, 1.0}}, Relation::le, -1.0);
    EXPECT_EQ(solve_lp(p).status, SolveStatus::infeasible);
    LinearProgram q;
    q.sense = Sense::maximize;
    const int y = q.add_var("y", 0.0, kInf, 1.0);
    q.add({{y, -1.0}}, Relation::le, 3.0);
    EXPECT_EQ(solve_lp(q).status, SolveStatus::unbounded);
}

TEST(SolveLp, DimensionMismatch) {
    LinearProgram p;
    p.add_var("x", 0.0, 1.0);
    p.add({{3, 1.0}}, Relation::le, 1.0);
    EXPECT_THROW(solve_lp(p), Error);
}


TEST(SolveLp, MatchesVertexEnumeration) {
    std::mt19937_64 rng(7);
    int compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto [d, p] = random_lp(rng, trial);
        const auto s = solve_lp(p);
        bool found = false;
        const double oracle = vertex_oracle(d, 0.0, 10.0, found);
        ASSERT_TRUE(found);
        ASSERT_EQ(s.status, SolveStatus::optimal) << "trial " << trial;
        EXPECT_NEAR(s.objective_value, oracle, 1e-7) << "trial " << trial;
        EXPECT_LE(max_violation(p, s.values), 1e-7);
        ++compared;
    }
    EXPECT_EQ(compared, 50);
}

TEST(SolveLp, Deterministic) {
    LinearProgram p;
    p.sense = Sense::maximize;
    const int x = p.add_var("x", 0.0, kInf, 1.0), y = p.add_var("y", 0.0, kInf, 1.0);
    p.add({{x, 1.0}, {y, 1.0}}, Relation::le, 4.0);
    const auto a = solve_lp(p), b = solve_lp(p);
    EXPECT_EQ(a.values, b.values);
}

TEST(SolveMilp, FixedBinariesEqualLp) {
    LinearProgram p;
    p.sense = Sense::maximize;
    const int w = p.add_var("w", 1.0, 1.0, 0.0, true);
    const int x = p.add_var("x", 0.0, kInf, 1.0);
    p.add({{x, 1.0}, {w, 2.0}}, Relation::le, 7.0);
    const auto a = solve_milp(p), b = solve_lp(p);
    ASSERT_EQ(a.status, SolveStatus::optimal);
    EXPECT_DOUBLE_EQ(a.objective_value, b.objective_value);
}

TEST(SolveMilp, InfeasibleBinaries) {
    LinearProgram p;
    const int a = p.add_binary("w1"), b = p.add_binary("w2");
    p.add({{a, 1.0}, {b, 1.0}}, Relation::eq, 1.0);
    p.add({{a, 1.0}}, Relation::ge, 1.0);
    p.add({{b, 1.0}}, Relation::ge, 1.0);
    EXPECT_EQ(solve_milp(p).status, SolveStatus::infeasible);
}

TEST(SolveMilp, Knapsack) {
    const std::vector<double> v{10, 13, 7, 8, 4, 9}, w{5, 7, 4, 5, 2, 6};
    LinearProgram p;
    p.sense = Sense::maximize;
    std::vector<Term> cap;
    for (std::size_t i = 0; i < v.size(); ++i) cap.push_back({p.add_binary("b" + std::to_string(i), v[i]), w[i]});
    p.add(cap, Relation::le, 15.0);
    double best = 0.0;
    for (int mask = 0; mask < 64; ++mask) {
        double val = 0.0, wt = 0.0;
        for (int i = 0; i < 6; ++i)
            if (mask & (1 << i)) {
                val += v[static_cast<std::size_t>(i)];
                wt += w[static_cast<std::size_t>(i)];
            }
        if (wt <= 15.0) best = std::max(best, val);
    }
    const auto s = solve_milp(p);
    ASSERT_EQ(s.status, SolveStatus::optimal);
    EXPECT_DOUBLE_EQ(s.objective_value, best);
}

TEST(SolveMilp, MatchesExhaustiveEnumeration) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const auto q = random_milp(rng, trial);
        const auto best = enumerate_milp(q);
        const auto s = solve_milp(q.p);
        if (!best) {
            EXPECT_EQ(s.status, SolveStatus::infeasible) << "trial " << trial;
            continue;
        }
        ASSERT_EQ(s.status, SolveStatus::optimal) << "trial " << trial;
        EXPECT_EQ(s.objective_value, *best) << "trial " << trial;
        const auto r = solve_lp(q.p);
        if (q.p.sense == Sense::maximize) EXPECT_LE(s.objective_value, r.objective_value + 1e-9);
        else EXPECT_GE(s.objective_value, r.objective_value - 1e-9);
    }
}

TEST(DumpLp, ListsSections) {
    LinearProgram p;
    const int x = p.add_var("x", 0.0, 4.0, 1.0);
    const int w = p.add_binary("w");
    p.add({{x, 1.0}, {w, -2.0}}, Relation::ge, 1.0, "link");
    const auto s = dump_lp(p);
    for (const char* k : {"Minimize", "Subject To", "link:", "Bounds", "Binaries", "End"}) EXPECT_NE(s.find(k), std::string::npos);
}
