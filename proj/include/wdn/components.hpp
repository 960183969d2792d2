#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "types.hpp"

namespace wdn {

/// Hazen-Williams resistance, L and D in ft.
inline double pipe_resistance(double length, double roughness, double diameter_ft) {
    if (length < 0.0 || roughness <= 0.0 || diameter_ft <= 0.0)
        throw Error("pipe_resistance: non-positive input");
    return 4.727 * length / (std::pow(roughness, kHazenExponent) * std::pow(diameter_ft, 4.8704));
}

inline double pipe_headloss(double resistance, double q) {
    return resistance * q * std::pow(std::abs(q), kHazenExponent - 1.0);
}

inline double pipe_headloss(const Pipe& p, double q) { return pipe_headloss(p.resistance, q); }

/// Flow carried at 10 ft/s, the default linearization span.
inline double pipe_flow_cap(const Pipe& p) {
    const double d = p.diameter / 12.0;
    return 10.0 * std::numbers::pi * d * d / 4.0;
}

/// Head added by a pump running at relative speed s with flow q >= 0.
inline double pump_headgain(const Pump& p, double q, double s) {
    if (s <= 0.0) {
        if (q > 0.0) throw Error("pump_headgain: zero speed with positive flow");
        return 0.0;
    }
    return s * s * (p.shutoff_head - p.alpha * std::pow(q / s, p.nu));
}

inline double valve_headloss(const Valve& v, double q) { return v.minor_loss * q * std::abs(q); }

/// Minor-loss coefficient in ft/cfs^2 for a dimensionless K and diameter in inches.
inline double minor_loss_coeff(double k, double diameter_in) {
    const double d = diameter_in / 12.0;
    return 0.02517 * k / (d * d * d * d);
}

struct TankStep {
    double head = 0.0;
    double overflow = 0.0; // ft^3 discarded above max level
    double deficit = 0.0;  // ft^3 missing below min level
};

inline TankStep tank_step(const Tank& t, double head, double net_inflow, double dt) {
    if (dt <= 0.0) throw Error("tank_step: non-positive time step");
    TankStep r;
    r.head = head + dt / t.area * net_inflow;
    if (r.head > t.max_head()) {
        r.overflow = (r.head - t.max_head()) * t.area;
        r.head = t.max_head();
    } else if (r.head < t.min_head()) {
        r.deficit = (t.min_head() - r.head) * t.area;
        r.head = t.min_head();
    }
    return r;
}

struct Segment {
    double slope = 0.0;
    double intercept = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
};

/// Contiguous chord approximation of a scalar curve.
struct PiecewiseCurve {
    std::vector<Segment> segments;

    std::size_t size() const { return segments.size(); }

    /// Segment containing q; a knot belongs to the lower segment, outside values clamp to the ends.
    std::size_t segment_index(double q) const {
        for (std::size_t n = 0; n < segments.size(); ++n)
            if (q <= segments[n].q_max) return n;
        return segments.size() - 1;
    }

    double operator()(double q) const {
        const Segment& s = segments[segment_index(q)];
        return s.slope * q + s.intercept;
    }
};

inline PiecewiseCurve linearize(const std::function<double(double)>& f, double lo, double hi, int n) {
    if (!(hi > lo)) throw Error("linearize: empty range");
    if (n < 1) throw Error("linearize: segment count must be positive");
    PiecewiseCurve c;
    double q0 = lo, f0 = f(lo);
    for (int i = 1; i <= n; ++i) {
        const double q1 = i == n ? hi : lo + (hi - lo) * i / n;
        const double f1 = f(q1);
        const double m = (f1 - f0) / (q1 - q0);
        c.segments.push_back({m, f0 - m * q0, q0, q1});
        q0 = q1;
        f0 = f1;
    }
    return c;
}

inline PiecewiseCurve linearize_pipe(const Pipe& p, double lo, double hi, int n = 5) {
    const double r = p.resistance;
    return linearize([r](double q) { return pipe_headloss(r, q); }, lo, hi, n);
}

inline PiecewiseCurve linearize_pipe(const Pipe& p, int n = 5) {
    const double cap = pipe_flow_cap(p);
    return linearize_pipe(p, -cap, cap, n);
}

struct PumpSample {
    double q = 0.0;
    double s = 0.0;
    double dh = 0.0; // head change suction to discharge, negative when adding head
};

/// Least squares of dh ~ b1 q^2 + b2 q - b3 s^2 - b4 subject to b1, b3 >= 0.
inline std::array<double, 4> fit_pump_quadratic(const std::vector<PumpSample>& samples) {
    const auto m = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd a(m, 4);
    Eigen::VectorXd y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        a.row(i) << s.q * s.q, s.q, -s.s * s.s, -1.0;
        y(i) = s.dh;
    }
    if (m < 4 || Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(a).rank() < 4)
        throw Error("fit_pump_quadratic: rank-deficient sample set");

    std::array<double, 4> best{};
    double best_sse = kInf;
    // The optimum lies on one face of the nonnegative orthant in (b1, b3).
    for (int mask = 0; mask < 4; ++mask) {
        std::vector<int> cols;
        for (int j = 0; j < 4; ++j) {
            if (j == 0 && (mask & 1)) continue;
            if (j == 2 && (mask & 2)) continue;
            cols.push_back(j);
        }
        Eigen::MatrixXd sub(m, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(cols[c]);
        const Eigen::VectorXd x = sub.colPivHouseholderQr().solve(y);
        std::array<double, 4> beta{};
        for (std::size_t c = 0; c < cols.size(); ++c) beta[static_cast<std::size_t>(cols[c])] = x(static_cast<Eigen::Index>(c));
        if (beta[0] < 0.0 || beta[2] < 0.0) continue;
        const double sse = (sub * x - y).squaredNorm();
        if (sse < best_sse) {
            best_sse = sse;
            best = beta;
        }
    }
    return best;
}

/// Fitted gain; the q^2 term keeps the sign of q so reverse flow is penalized like the exact curve.
inline double quad_headgain(const std::array<double, 4>& b, double q, double s) {
    return -(b[0] * q * std::abs(q) + b[1] * q - b[2] * s * s - b[3]);
}

/// Samples of the exact curve over the operating envelope.
inline std::vector<PumpSample> pump_samples(const Pump& p, int speeds = 6, int flows = 11) {
    std::vector<PumpSample> out;
    for (int i = 0; i < speeds; ++i) {
        const double s = p.max_speed * (0.5 + 0.5 * i / std::max(1, speeds - 1));
        const double qmax = p.max_flow(s);
        for (int j = 0; j < flows; ++j) {
            const double q = qmax * j / (flows - 1);
            out.push_back({q, s, -pump_headgain(p, q, s)});
        }
    }
    return out;
}

/// Curve (h0, alpha, nu) from EPANET one- or three-point head curves given in (cfs, ft).
inline void set_pump_curve(Pump& p, const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() == 1) {
        const auto [q, h] = pts[0];
        p.shutoff_head = 1.33 * h;
        p.nu = 2.0;
        p.alpha = (p.shutoff_head - h) / (q * q);
    } else if (pts.size() == 3 && pts[0].first == 0.0) {
        const double h0 = pts[0].second, q1 = pts[1].first, h1 = pts[1].second;
        const double q2 = pts[2].first, h2 = pts[2].second;
        if (!(h0 > h1 && h1 > h2 && q2 > q1 && q1 > 0.0)) throw Error("pump " + p.id + ": curve not decreasing");
        p.shutoff_head = h0;
        p.nu = std::log((h0 - h2) / (h0 - h1)) / std::log(q2 / q1);
        p.alpha = (h0 - h1) / std::pow(q1, p.nu);
    } else {
        throw Error("pump " + p.id + ": unsupported head curve shape");
    }
    p.quad_fit = fit_pump_quadratic(pump_samples(p));
}

} // namespace wdn
