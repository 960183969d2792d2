#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <limits>
#include <vector>

#include "types.hpp"

namespace wdn {

struct Alarm {
    int k = 0;        // timestep the accumulator exceeded its threshold
    int sensor = -1;  // residual index, -1 for a global statistic
    double statistic = 0.0;
    double threshold = 0.0;
};

enum class CusumMode { scalar, vectorized };

/**
 * CUSUM over residuals. Vectorized mode keeps one accumulator per residual
 * with z = |r_i|; scalar mode keeps one accumulator over z = r' inv(S) r.
 */
struct CusumDetector {
    CusumMode mode = CusumMode::vectorized;
    Eigen::VectorXd c, b, tau; // length n (vectorized) or 1 (scalar)
    Eigen::MatrixXd sigma_inv; // scalar mode only
    std::vector<Alarm> alarm_log;

    int size() const { return static_cast<int>(c.size()); }
};

inline CusumDetector make_vectorized_cusum(const Eigen::VectorXd& tau, const Eigen::VectorXd& b) {
    if (tau.size() != b.size()) throw Error("cusum: tau and bias sizes differ");
    CusumDetector d;
    d.mode = CusumMode::vectorized;
    d.tau = tau;
    d.b = b;
    d.c = Eigen::VectorXd::Zero(tau.size());
    return d;
}

inline CusumDetector make_scalar_cusum(double tau, double b, const Eigen::MatrixXd& sigma_inv) {
    CusumDetector d;
    d.mode = CusumMode::scalar;
    d.tau = Eigen::VectorXd::Constant(1, tau);
    d.b = Eigen::VectorXd::Constant(1, b);
    d.c = Eigen::VectorXd::Zero(1);
    d.sigma_inv = sigma_inv;
    return d;
}

inline double quadratic_form(const Eigen::MatrixXd& sigma_inv, const Eigen::VectorXd& r) {
    if (sigma_inv.rows() != r.size() || sigma_inv.cols() != r.size()) throw Error("detector: residual dimension mismatch");
    return r.dot(sigma_inv * r);
}

/// Distance measure fed to the accumulators.
inline Eigen::VectorXd cusum_input(const CusumDetector& d, const Eigen::VectorXd& r) {
    if (d.mode == CusumMode::vectorized) {
        if (r.size() != d.c.size()) throw Error("cusum: residual dimension mismatch");
        return r.cwiseAbs();
    }
    return Eigen::VectorXd::Constant(1, quadratic_form(d.sigma_inv, r));
}

/// One CUSUM update. An accumulator above tau raises an alarm dated k - 1 and resets.
inline std::vector<Alarm> cusum_step(CusumDetector& d, const Eigen::VectorXd& r, int k) {
    const Eigen::VectorXd z = cusum_input(d, r);
    std::vector<Alarm> out;
    for (Eigen::Index i = 0; i < d.c.size(); ++i) {
        if (d.c(i) > d.tau(i)) {
            out.push_back({k - 1, d.mode == CusumMode::vectorized ? static_cast<int>(i) : -1, d.c(i), d.tau(i)});
            d.c(i) = 0.0;
        } else {
            d.c(i) = std::max(0.0, d.c(i) + z(i) - d.b(i));
        }
    }
    d.alarm_log.insert(d.alarm_log.end(), out.begin(), out.end());
    return out;
}

/// Logs accumulators still above threshold after the last step (dated k).
inline std::vector<Alarm> cusum_flush(CusumDetector& d, int k) {
    std::vector<Alarm> out;
    for (Eigen::Index i = 0; i < d.c.size(); ++i)
        if (d.c(i) > d.tau(i)) out.push_back({k, d.mode == CusumMode::vectorized ? static_cast<int>(i) : -1, d.c(i), d.tau(i)});
    d.alarm_log.insert(d.alarm_log.end(), out.begin(), out.end());
    return out;
}

struct ChiSquaredDetector {
    Eigen::MatrixXd sigma_inv;
    double alpha = 0.0;
    int n_y = 0;
    double gamma = 0.0;
    std::vector<Alarm> alarm_log;
};

/// Stateless chi-squared test; returns true on alarm.
inline bool chi2_step(ChiSquaredDetector& d, const Eigen::VectorXd& r, int k) {
    const double z = quadratic_form(d.sigma_inv, r);
    if (z <= d.alpha) return false;
    d.alarm_log.push_back({k, -1, z, d.alpha});
    return true;
}

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw Error("gamma_p: invalid arguments");
    if (x == 0.0) return 0.0;
    const double lead = std::exp(a * std::log(x) - x - std::lgamma(a));
    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term;
        for (int n = 1; n < 1000; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-17) break;
        }
        return sum * lead;
    }
    // Continued fraction for Q(a, x), modified Lentz.
    const double tiny = 1e-300;
    double bq = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / bq, h = d;
    for (int n = 1; n < 1000; ++n) {
        const double an = -n * (n - a);
        bq += 2.0;
        d = an * d + bq;
        if (std::abs(d) < tiny) d = tiny;
        c = bq + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-17) break;
    }
    return 1.0 - lead * h;
}

/// x with P(a, x) = p, by bisection to 1e-10.
inline double gamma_p_inverse(double a, double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error("gamma_p_inverse: probability outside (0, 1)");
    double lo = 0.0, hi = std::max(1.0, a);
    while (gamma_p(a, hi) < p) hi *= 2.0;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (gamma_p(a, mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Threshold alpha = 2 P^-1(n_y / 2, 1 - 1 / gamma).
inline double calibrate_chi2(int n_y, double gamma) {
    if (n_y < 1) throw Error("calibrate_chi2: n_y must be at least 1");
    if (!(gamma > 1.0)) throw Error("calibrate_chi2: gamma must exceed 1");
    return 2.0 * gamma_p_inverse(0.5 * n_y, 1.0 - 1.0 / gamma);
}

struct CusumCalibration {
    Eigen::VectorXd tau, b;
    bool degenerate = false;
};

/// tau = mean + 3 std and b = mean + 0.5 std of each series (population std).
inline CusumCalibration calibrate_from_series(const std::vector<Eigen::VectorXd>& z) {
    if (z.size() < 24) throw Error("cusum calibration needs at least 24 steps of history");
    const auto n = z.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n), sq = Eigen::VectorXd::Zero(n);
    for (const auto& v : z) {
        if (v.size() != n) throw Error("cusum calibration: inconsistent residual lengths");
        mean += v;
    }
    mean /= static_cast<double>(z.size());
    for (const auto& v : z) sq += (v - mean).cwiseAbs2();
    const Eigen::VectorXd sd = (sq / static_cast<double>(z.size())).cwiseSqrt();
    CusumCalibration cal;
    cal.tau = mean + 3.0 * sd;
    cal.b = mean + 0.5 * sd;
    cal.degenerate = (cal.tau.array() <= 0.0).any() || (cal.b.array() <= 0.0).any();
    return cal;
}

inline CusumCalibration calibrate_cusum(const std::vector<Eigen::VectorXd>& history) {
    std::vector<Eigen::VectorXd> z;
    z.reserve(history.size());
    for (const auto& r : history) z.push_back(r.cwiseAbs());
    return calibrate_from_series(z);
}

/// Calibration over the scalar statistic r' inv(S) r.
inline CusumCalibration calibrate_scalar_cusum(const std::vector<Eigen::VectorXd>& history, const Eigen::MatrixXd& sigma_inv) {
    std::vector<Eigen::VectorXd> z;
    z.reserve(history.size());
    for (const auto& r : history) z.push_back(Eigen::VectorXd::Constant(1, quadratic_form(sigma_inv, r)));
    return calibrate_from_series(z);
}

/// Sample covariance of the residual history plus 1e-8 I.
inline Eigen::MatrixXd residual_covariance(const std::vector<Eigen::VectorXd>& history) {
    if (history.size() < 2) throw Error("covariance needs at least two residual vectors");
    const auto n = history.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (const auto& r : history) mean += r;
    mean /= static_cast<double>(history.size());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (const auto& r : history) s += (r - mean) * (r - mean).transpose();
    s /= static_cast<double>(history.size() - 1);
    s.diagonal().array() += 1e-8;
    return s;
}

/// Range [lo, hi] of a scalar injection a along residual direction s that keeps every
/// vectorized CUSUM accumulator at or below its threshold; empty (lo > hi) if none does.
inline std::pair<double, double> cusum_undetected_range(const CusumDetector& d, const Eigen::VectorXd& r0, const Eigen::VectorXd& s) {
    if (d.mode != CusumMode::vectorized) throw Error("cusum_undetected_range: vectorized detector required");
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < r0.size(); ++i) {
        const double room = d.tau(i) + d.b(i) - d.c(i); // |r0 + s a| <= room
        if (room < 0.0) return {1.0, -1.0};
        if (s(i) == 0.0) {
            if (std::abs(r0(i)) > room) return {1.0, -1.0};
            continue;
        }
        double a1 = (-room - r0(i)) / s(i), a2 = (room - r0(i)) / s(i);
        if (a1 > a2) std::swap(a1, a2);
        lo = std::max(lo, a1);
        hi = std::min(hi, a2);
    }
    return {lo, hi};
}

/// Range [lo, hi] of a scalar injection a along s with (r0 + s a)' P (r0 + s a) <= alpha.
inline std::pair<double, double> chi2_undetected_range(const ChiSquaredDetector& d, const Eigen::VectorXd& r0, const Eigen::VectorXd& s) {
    const double qa = s.dot(d.sigma_inv * s), qb = s.dot(d.sigma_inv * r0), qc = quadratic_form(d.sigma_inv, r0) - d.alpha;
    if (qa <= 0.0) {
        if (qc > 0.0) return {1.0, -1.0};
        return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    }
    const double disc = qb * qb - qa * qc;
    if (disc < 0.0) return {1.0, -1.0};
    const double root = std::sqrt(disc);
    return {(-qb - root) / qa, (-qb + root) / qa};
}

/// Largest |a| inside a range, 0 when the range is empty.
inline double largest_magnitude(const std::pair<double, double>& range) {
    if (range.first > range.second) return 0.0;
    return std::max(std::abs(range.first), std::abs(range.second));
}

} // namespace wdn
