#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "network.hpp"

namespace wdn {

struct HydraulicState {
    int k = 0;
    std::vector<double> junction_heads; // ft
    std::vector<double> tank_heads;     // ft at the start of the step
    std::vector<double> pipe_flows;     // cfs
    std::vector<double> pump_flows;     // cfs
    std::vector<double> pump_speeds;
    std::vector<double> valve_flows;    // cfs
    std::vector<double> demands;        // cfs per junction
    std::vector<double> tank_heads_end; // ft after integrating this step
    std::vector<double> tank_clamped;   // ft^3 per tank, overflow positive, deficit negative

    /// Flow of link l in the model's dense link numbering.
    double flow(const NetworkModel& m, int l) const {
        switch (m.link_kind(l)) {
        case LinkKind::pipe: return pipe_flows[static_cast<std::size_t>(l)];
        case LinkKind::pump: return pump_flows[static_cast<std::size_t>(m.pump_of(l))];
        default: return valve_flows[static_cast<std::size_t>(m.valve_of(l))];
        }
    }

    double head(const NetworkModel& m, int n) const {
        switch (m.node_kind(n)) {
        case NodeKind::junction: return junction_heads[static_cast<std::size_t>(n)];
        case NodeKind::tank: return tank_heads[static_cast<std::size_t>(m.tank_of(n))];
        default: return m.reservoirs()[static_cast<std::size_t>(m.reservoir_of(n))].head;
        }
    }

    std::vector<double> link_flows(const NetworkModel& m) const {
        std::vector<double> q(static_cast<std::size_t>(m.n_links()));
        for (int l = 0; l < m.n_links(); ++l) q[static_cast<std::size_t>(l)] = flow(m, l);
        return q;
    }
};

struct StepControls {
    std::vector<double> pump_speeds;
    std::vector<LinkStatus> valve_status;
};

using ControlSchedule = std::vector<StepControls>;

inline StepControls default_controls(const NetworkModel& m) {
    StepControls c;
    for (const auto& p : m.pumps()) c.pump_speeds.push_back(p.status == LinkStatus::open ? p.init_speed : 0.0);
    for (const auto& v : m.valves()) c.valve_status.push_back(v.status);
    return c;
}

inline ControlSchedule constant_schedule(const NetworkModel& m, const StepControls& c) {
    return ControlSchedule(static_cast<std::size_t>(m.steps()), c);
}

enum class PumpCurve { exact, quadratic };

struct SolveOptions {
    PumpCurve pump_curve = PumpCurve::exact;
    int max_iterations = 50;
    double flow_tol = 1e-10;   // cfs
    double energy_tol = 1e-8;  // ft
};

/// Solution of one steady-state network balance.
struct NetworkSolution {
    std::vector<double> flows;          // per link, cfs
    std::vector<double> junction_heads; // ft
    std::vector<double> speeds;         // effective pump speeds after status checks
    int iterations = 0;
};

namespace hyd_detail {

inline double pump_gain(const Pump& p, double q, double s, PumpCurve c) {
    if (c == PumpCurve::quadratic) return quad_headgain(p.quad_fit, q, s);
    const double aq = std::abs(q);
    return s * s * p.shutoff_head - p.alpha * std::pow(s, 2.0 - p.nu) * std::pow(aq, p.nu - 1.0) * q;
}

inline double pump_gain_slope(const Pump& p, double q, double s, PumpCurve c) {
    if (c == PumpCurve::quadratic) return 2.0 * p.quad_fit[0] * std::abs(q) + p.quad_fit[1];
    return p.alpha * p.nu * std::pow(s, 2.0 - p.nu) * std::pow(std::abs(q), p.nu - 1.0);
}

} // namespace hyd_detail

/**
 * Newton (global gradient) solve of one step: link flows and junction heads for
 * fixed tank heads, demands (cfs) and controls. Pumps that cannot deliver
 * positive flow are shut and the step is re-solved.
 */
inline NetworkSolution solve_network(const NetworkModel& m, const std::vector<double>& tank_heads,
    const std::vector<double>& demands, const StepControls& ctl, const SolveOptions& opt = {},
    const std::vector<double>* warm = nullptr, int step = 0) {
    using hyd_detail::pump_gain;
    using hyd_detail::pump_gain_slope;
    const int nj = m.n_junctions(), nl = m.n_links();
    std::vector<double> speed = ctl.pump_speeds;
    if (static_cast<int>(speed.size()) != m.n_pumps()) throw Error("controls: pump speed count mismatch");
    if (static_cast<int>(ctl.valve_status.size()) != m.n_valves()) throw Error("controls: valve status count mismatch");
    for (int p = 0; p < m.n_pumps(); ++p) {
        const double s = speed[static_cast<std::size_t>(p)];
        if (s < 0.0 || s > m.pumps()[static_cast<std::size_t>(p)].max_speed + 1e-12)
            throw Error("controls: pump speed out of range");
    }

    auto fixed_head = [&](int n) {
        return m.node_kind(n) == NodeKind::tank ? tank_heads[static_cast<std::size_t>(m.tank_of(n))] : m.elevation(n);
    };

    for (int attempt = 0; attempt <= m.n_pumps(); ++attempt) {
        auto active = [&](int l) {
            switch (m.link_kind(l)) {
            case LinkKind::pipe: return m.pipes()[static_cast<std::size_t>(l)].status == LinkStatus::open;
            case LinkKind::pump: return speed[static_cast<std::size_t>(m.pump_of(l))] > 0.0;
            default: return ctl.valve_status[static_cast<std::size_t>(m.valve_of(l))] == LinkStatus::open;
            }
        };

        // Junction groups without any fixed-head node keep their elevation and must carry no demand.
        const auto comp = m.components(active);
        std::vector<char> grounded(static_cast<std::size_t>(m.n_nodes()), 0);
        for (int n = nj; n < m.n_nodes(); ++n) grounded[static_cast<std::size_t>(comp[static_cast<std::size_t>(n)])] = 1;
        std::vector<char> floating(static_cast<std::size_t>(nj), 0);
        for (int j = 0; j < nj; ++j) {
            if (grounded[static_cast<std::size_t>(comp[static_cast<std::size_t>(j)])]) continue;
            floating[static_cast<std::size_t>(j)] = 1;
            if (demands[static_cast<std::size_t>(j)] != 0.0)
                throw InfeasibleError(step, "junction '" + m.node_id(j) + "' has demand but no path to a source");
        }

        std::vector<double> q(static_cast<std::size_t>(nl), 0.0);
        for (int l = 0; l < nl; ++l) {
            if (!active(l)) continue;
            if (warm && std::abs((*warm)[static_cast<std::size_t>(l)]) > 0.0) {
                q[static_cast<std::size_t>(l)] = (*warm)[static_cast<std::size_t>(l)];
            } else if (m.link_kind(l) == LinkKind::pump) {
                const auto& pp = m.pumps()[static_cast<std::size_t>(m.pump_of(l))];
                q[static_cast<std::size_t>(l)] = 0.5 * pp.max_flow(speed[static_cast<std::size_t>(m.pump_of(l))]);
            } else if (m.link_kind(l) == LinkKind::pipe) {
                q[static_cast<std::size_t>(l)] = 0.1 * pipe_flow_cap(m.pipes()[static_cast<std::size_t>(l)]);
            } else {
                q[static_cast<std::size_t>(l)] = 0.1;
            }
        }
        if (warm)
            for (int p = 0; p < m.n_pumps(); ++p)
                if (active(m.pump_link(p)) && q[static_cast<std::size_t>(m.pump_link(p))] <= 0.0)
                    q[static_cast<std::size_t>(m.pump_link(p))] = 0.5 * m.pumps()[static_cast<std::size_t>(p)].max_flow(speed[static_cast<std::size_t>(p)]);

        std::vector<double> h(static_cast<std::size_t>(nj));
        for (int j = 0; j < nj; ++j) h[static_cast<std::size_t>(j)] = m.elevation(j);

        auto headloss = [&](int l, double x, double& slope) {
            constexpr double gmin = 1e-4;
            double f = 0.0;
            switch (m.link_kind(l)) {
            case LinkKind::pipe: {
                const double r = m.pipes()[static_cast<std::size_t>(l)].resistance;
                f = pipe_headloss(r, x);
                slope = kHazenExponent * r * std::pow(std::abs(x), kHazenExponent - 1.0);
                break;
            }
            case LinkKind::pump: {
                const auto& pp = m.pumps()[static_cast<std::size_t>(m.pump_of(l))];
                const double s = speed[static_cast<std::size_t>(m.pump_of(l))];
                f = -pump_gain(pp, x, s, opt.pump_curve);
                slope = pump_gain_slope(pp, x, s, opt.pump_curve);
                break;
            }
            default: {
                const double mv = m.valves()[static_cast<std::size_t>(m.valve_of(l))].minor_loss;
                f = mv * x * std::abs(x);
                slope = 2.0 * mv * std::abs(x);
            }
            }
            slope = std::max(slope, gmin);
            return f;
        };

        auto node_head = [&](int n) { return n < nj ? h[static_cast<std::size_t>(n)] : fixed_head(n); };

        Eigen::MatrixXd a(nj, nj);
        Eigen::VectorXd rhs(nj);
        std::vector<double> p(static_cast<std::size_t>(nl)), y(static_cast<std::size_t>(nl));
        int it = 0;
        bool converged = false;
        for (; it < opt.max_iterations && !converged; ++it) {
            a.setZero();
            rhs.setZero();
            for (int j = 0; j < nj; ++j) rhs(j) = -demands[static_cast<std::size_t>(j)];
            for (int l = 0; l < nl; ++l) {
                if (!active(l)) continue;
                double g = 0.0;
                const double f = headloss(l, q[static_cast<std::size_t>(l)], g);
                p[static_cast<std::size_t>(l)] = 1.0 / g;
                y[static_cast<std::size_t>(l)] = f / g;
                const double c = q[static_cast<std::size_t>(l)] - y[static_cast<std::size_t>(l)];
                const int i = m.link_from(l), k = m.link_to(l);
                const double pl = p[static_cast<std::size_t>(l)];
                // Flow leaving i is c + p (h_i - h_k).
                if (i < nj) {
                    a(i, i) += pl;
                    rhs(i) -= c;
                    if (k < nj) a(i, k) -= pl; else rhs(i) += pl * fixed_head(k);
                }
                if (k < nj) {
                    a(k, k) += pl;
                    rhs(k) += c;
                    if (i < nj) a(k, i) -= pl; else rhs(k) += pl * fixed_head(i);
                }
            }
            for (int j = 0; j < nj; ++j)
                if (floating[static_cast<std::size_t>(j)]) {
                    a.row(j).setZero();
                    a.col(j).setZero();
                    a(j, j) = 1.0;
                    rhs(j) = m.elevation(j);
                }
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
            if (ldlt.info() != Eigen::Success) throw InfeasibleError(step, "singular network matrix");
            const Eigen::VectorXd hx = ldlt.solve(rhs);
            for (int j = 0; j < nj; ++j) h[static_cast<std::size_t>(j)] = hx(j);

            double dq = 0.0;
            for (int l = 0; l < nl; ++l) {
                if (!active(l)) continue;
                const double dh = node_head(m.link_from(l)) - node_head(m.link_to(l));
                const double qn = q[static_cast<std::size_t>(l)] - y[static_cast<std::size_t>(l)] + p[static_cast<std::size_t>(l)] * dh;
                dq = std::max(dq, std::abs(qn - q[static_cast<std::size_t>(l)]));
                q[static_cast<std::size_t>(l)] = qn;
            }
            double de = 0.0;
            for (int l = 0; l < nl; ++l) {
                if (!active(l)) continue;
                double g = 0.0;
                const double f = headloss(l, q[static_cast<std::size_t>(l)], g);
                de = std::max(de, std::abs(node_head(m.link_from(l)) - node_head(m.link_to(l)) - f));
            }
            converged = dq <= opt.flow_tol || de <= opt.energy_tol;
        }
        if (!converged) throw InfeasibleError(step, "hydraulic solve did not converge");

        bool reclosed = false;
        for (int pm = 0; pm < m.n_pumps(); ++pm)
            if (speed[static_cast<std::size_t>(pm)] > 0.0 && q[static_cast<std::size_t>(m.pump_link(pm))] < 0.0) {
                speed[static_cast<std::size_t>(pm)] = 0.0;
                reclosed = true;
            }
        if (reclosed) continue;
        return {q, h, speed, it};
    }
    throw InfeasibleError(step, "pump status checks did not settle");
}

struct StepResult {
    HydraulicState state;
    std::vector<double> flows; // per link, for warm starts
};

/// Solves step k from tank heads and demands in cfs, then integrates the tanks.
inline StepResult solve_step(const NetworkModel& m, int k, const std::vector<double>& tank_heads,
    const std::vector<double>& demands, const StepControls& ctl, const SolveOptions& opt = {},
    const std::vector<double>* warm = nullptr) {
    const auto sol = solve_network(m, tank_heads, demands, ctl, opt, warm, k);
    StepResult r;
    auto& s = r.state;
    s.k = k;
    s.junction_heads = sol.junction_heads;
    s.tank_heads = tank_heads;
    s.demands = demands;
    s.pump_speeds = sol.speeds;
    for (int l = 0; l < m.n_links(); ++l) {
        const double x = sol.flows[static_cast<std::size_t>(l)];
        switch (m.link_kind(l)) {
        case LinkKind::pipe: s.pipe_flows.push_back(x); break;
        case LinkKind::pump: s.pump_flows.push_back(x); break;
        default: s.valve_flows.push_back(x);
        }
    }
    for (int t = 0; t < m.n_tanks(); ++t) {
        const int n = m.tank_node(t);
        double net = 0.0;
        for (int l : m.incident(n)) net += m.direction(l, n) * sol.flows[static_cast<std::size_t>(l)];
        const auto ts = tank_step(m.tanks()[static_cast<std::size_t>(t)], tank_heads[static_cast<std::size_t>(t)], net, m.dt());
        s.tank_heads_end.push_back(ts.head);
        s.tank_clamped.push_back(ts.overflow - ts.deficit);
    }
    r.flows = sol.flows;
    return r;
}

inline std::vector<double> initial_tank_heads(const NetworkModel& m) {
    std::vector<double> h;
    for (const auto& t : m.tanks()) h.push_back(t.elevation + t.init_level);
    return h;
}

inline std::vector<double> demands_cfs(const NetworkModel& m, int k) {
    auto d = m.demands_gpm(k);
    for (double& x : d) x = gpm_to_cfs(x);
    return d;
}

/// Extended-period simulation with pattern demands.
inline std::vector<HydraulicState> simulate(const NetworkModel& m, const ControlSchedule& controls,
    const SolveOptions& opt = {}) {
    const int n = m.steps();
    if (static_cast<int>(controls.size()) < n) throw Error("controls do not cover every step");
    std::vector<HydraulicState> out;
    auto tanks = initial_tank_heads(m);
    std::vector<double> warm;
    for (int k = 0; k < n; ++k) {
        auto r = solve_step(m, k, tanks, demands_cfs(m, k), controls[static_cast<std::size_t>(k)], opt,
            warm.empty() ? nullptr : &warm);
        tanks = r.state.tank_heads_end;
        warm = std::move(r.flows);
        out.push_back(std::move(r.state));
    }
    return out;
}

/// Largest junction mass-balance residual of a state, in cfs.
inline double max_mass_residual(const NetworkModel& m, const HydraulicState& s) {
    double worst = 0.0;
    for (int j = 0; j < m.n_junctions(); ++j) {
        double r = -s.demands[static_cast<std::size_t>(j)];
        for (int l : m.incident(j)) r += m.direction(l, j) * s.flow(m, l);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

/// Largest energy residual over open links, in ft.
inline double max_energy_residual(const NetworkModel& m, const HydraulicState& s) {
    double worst = 0.0;
    for (int l = 0; l < m.n_links(); ++l) {
        const double q = s.flow(m, l);
        const double dh = s.head(m, m.link_from(l)) - s.head(m, m.link_to(l));
        double f = 0.0;
        switch (m.link_kind(l)) {
        case LinkKind::pipe:
            if (m.pipes()[static_cast<std::size_t>(l)].status == LinkStatus::closed) continue;
            f = pipe_headloss(m.pipes()[static_cast<std::size_t>(l)], q);
            break;
        case LinkKind::pump: {
            const double sp = s.pump_speeds[static_cast<std::size_t>(m.pump_of(l))];
            if (sp <= 0.0) continue;
            f = -pump_headgain(m.pumps()[static_cast<std::size_t>(m.pump_of(l))], q, sp);
            break;
        }
        default:
            if (q == 0.0) continue;
            f = valve_headloss(m.valves()[static_cast<std::size_t>(m.valve_of(l))], q);
        }
        worst = std::max(worst, std::abs(dh - f));
    }
    return worst;
}

} // namespace wdn
