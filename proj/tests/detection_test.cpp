#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>

#include "wdn/detection.hpp"
#include "wdn/rng.hpp"

using namespace wdn;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

std::vector<Eigen::VectorXd> gaussian_series(int steps, int n, std::uint64_t seed, const char* tag) {
    std::vector<Eigen::VectorXd> out;
    for (int k = 0; k < steps; ++k) {
        Eigen::VectorXd r(n);
        for (int i = 0; i < n; ++i) r(i) = Stream(seed, "r" + std::to_string(i), tag).normal(static_cast<std::uint64_t>(k));
        out.push_back(r);
    }
    return out;
}

} // namespace

TEST(Cusum, BiasMatchedInputStaysAtZero) {
    auto d = make_vectorized_cusum(vec({5.0}), vec({1.0}));
    for (int k = 0; k < 50; ++k) EXPECT_TRUE(cusum_step(d, vec({1.0}), k).empty());
    EXPECT_EQ(d.c(0), 0.0);
    for (int k = 0; k < 50; ++k) cusum_step(d, vec({0.0}), k);
    EXPECT_EQ(d.c(0), 0.0);
}

TEST(Cusum, HandEvaluationAtThreshold) {
    auto d = make_vectorized_cusum(vec({5.0}), vec({1.0}));
    d.c(0) = 2.0;
    EXPECT_TRUE(cusum_step(d, vec({4.0}), 1).empty());
    EXPECT_DOUBLE_EQ(d.c(0), 5.0);
    EXPECT_TRUE(cusum_step(d, vec({1.5}), 2).empty());
    EXPECT_DOUBLE_EQ(d.c(0), 5.5);
    const auto a = cusum_step(d, vec({0.0}), 3);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].k, 2);
    EXPECT_EQ(a[0].sensor, 0);
    EXPECT_EQ(d.c(0), 0.0);
}

TEST(Cusum, VectorizedResetIsPerSensor) {
    auto d = make_vectorized_cusum(vec({1.0, 1.0}), vec({0.0, 0.0}));
    cusum_step(d, vec({2.0, 0.5}), 0);
    const auto a = cusum_step(d, vec({0.0, 0.25}), 1);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].sensor, 0);
    EXPECT_EQ(d.c(0), 0.0);
    EXPECT_DOUBLE_EQ(d.c(1), 0.75);
}

TEST(Cusum, ScalarModeUsesQuadraticForm) {
    auto d = make_scalar_cusum(100.0, 1.0, Eigen::MatrixXd::Identity(2, 2));
    cusum_step(d, vec({3.0, 4.0}), 0);
    EXPECT_DOUBLE_EQ(d.c(0), 24.0);
    EXPECT_THROW(cusum_step(d, vec({1.0}), 1), Error);
}

TEST(Cusum, AccumulatorNonNegativeAndAlarmsJustified) {
    auto d = make_vectorized_cusum(vec({3.0, 2.0, 4.0}), vec({0.8, 1.0, 0.5}));
    const auto series = gaussian_series(2000, 3, 5, "cusum");
    Eigen::VectorXd prev = d.c;
    for (int k = 0; k < 2000; ++k) {
        const auto alarms = cusum_step(d, 1.5 * series[static_cast<std::size_t>(k)], k);
        EXPECT_GE(d.c.minCoeff(), 0.0);
        for (const auto& a : alarms) EXPECT_GT(prev(a.sensor), d.tau(a.sensor));
        prev = d.c;
    }
}

TEST(Cusum, FalseAlarmRateBelowTwoPercent) {
    const int n = 4;
    const auto cal = calibrate_cusum(gaussian_series(2000, n, 9, "history"));
    ASSERT_FALSE(cal.degenerate);
    auto d = make_vectorized_cusum(cal.tau, cal.b);
    const auto live = gaussian_series(10000, n, 9, "live");
    for (int k = 0; k < 10000; ++k) cusum_step(d, live[static_cast<std::size_t>(k)], k);
    std::vector<int> per(n, 0);
    for (const auto& a : d.alarm_log) ++per[static_cast<std::size_t>(a.sensor)];
    for (int c : per) EXPECT_LT(c, 200);
}

TEST(CalibrateCusum, HandStatistics) {
    std::vector<Eigen::VectorXd> h;
    for (int k = 0; k < 24; ++k) h.push_back(vec({k % 2 == 0 ? 0.0 : 2.0, 3.0}));
    const auto cal = calibrate_cusum(h);
    EXPECT_DOUBLE_EQ(cal.tau(0), 4.0);
    EXPECT_DOUBLE_EQ(cal.b(0), 1.5);
    EXPECT_DOUBLE_EQ(cal.tau(1), 3.0);
    EXPECT_DOUBLE_EQ(cal.b(1), 3.0);
    EXPECT_FALSE(cal.degenerate);
}

TEST(CalibrateCusum, NegativeResidualsUseMagnitude) {
    std::vector<Eigen::VectorXd> h;
    for (int k = 0; k < 30; ++k) h.push_back(vec({k % 2 == 0 ? -2.0 : 0.0}));
    EXPECT_DOUBLE_EQ(calibrate_cusum(h).tau(0), 4.0);
}

TEST(CalibrateCusum, DegenerateAndShortHistory) {
    std::vector<Eigen::VectorXd> h(24, vec({0.0}));
    EXPECT_TRUE(calibrate_cusum(h).degenerate);
    h.pop_back();
    EXPECT_THROW(calibrate_cusum(h), Error);
}

TEST(Chi2, HandArithmetic) {
    ChiSquaredDetector d{Eigen::MatrixXd::Identity(2, 2), 10.0, 2, 100.0, {}};
    EXPECT_FALSE(chi2_step(d, vec({0.0, 0.0}), 0));
    EXPECT_TRUE(chi2_step(d, vec({3.0, 4.0}), 1));
    ASSERT_EQ(d.alarm_log.size(), 1u);
    EXPECT_EQ(d.alarm_log[0].statistic, 25.0);
}

TEST(Chi2, BoundaryAtSquareRootRatio) {
    ChiSquaredDetector d{Eigen::MatrixXd::Identity(2, 2), 10.0, 2, 100.0, {}};
    const Eigen::VectorXd r = vec({3.0, 4.0});
    const double t = std::sqrt(10.0 / 25.0);
    EXPECT_FALSE(chi2_step(d, (t * (1.0 - 1e-9)) * r, 0));
    EXPECT_TRUE(chi2_step(d, (t * (1.0 + 1e-9)) * r, 1));
}

TEST(Chi2, OrthogonalInvariance) {
    Eigen::MatrixXd a(3, 3);
    a << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5;
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(3, 3)).householderQ();
    const Eigen::VectorXd r = vec({0.7, -1.1, 2.0});
    EXPECT_NEAR(quadratic_form(a, r), quadratic_form(q * a * q.transpose(), q * r), 1e-12);
}

TEST(CalibrateChi2, TwoDegreesClosedForm) {
    for (double g : {2.0, 10.0, 100.0, 1e4}) EXPECT_NEAR(calibrate_chi2(2, g), -2.0 * std::log(1.0 / g), 1e-8);
}

TEST(CalibrateChi2, MatchesBoostOracle) {
    for (int n : {1, 2, 3, 5, 8, 13, 40})
        for (double g : {1.5, 24.0, 100.0, 1e5}) {
            const double expected = 2.0 * boost::math::gamma_p_inv(0.5 * n, 1.0 - 1.0 / g);
            EXPECT_NEAR(calibrate_chi2(n, g), expected, 1e-8 * std::max(1.0, expected)) << n << " " << g;
        }
    EXPECT_NEAR(calibrate_chi2(1, 100.0), 6.6348966010212145, 1e-8);
    EXPECT_NEAR(calibrate_chi2(8, 24.0), 16.050238261192018, 1e-8);
}

TEST(CalibrateChi2, MonotoneAndErrors) {
    double prev = 0.0;
    for (double g : {1.1, 2.0, 5.0, 50.0, 500.0}) {
        const double a = calibrate_chi2(4, g);
        EXPECT_GT(a, prev);
        prev = a;
    }
    EXPECT_THROW(calibrate_chi2(3, 1.0), Error);
    EXPECT_THROW(calibrate_chi2(0, 10.0), Error);
}

TEST(Covariance, RegularizedSample) {
    std::vector<Eigen::VectorXd> h{vec({1.0, 0.0}), vec({-1.0, 0.0})};
    const auto s = residual_covariance(h);
    EXPECT_DOUBLE_EQ(s(0, 0), 2.0 + 1e-8);
    EXPECT_DOUBLE_EQ(s(1, 1), 1e-8);
    EXPECT_EQ(s(0, 1), 0.0);
}
