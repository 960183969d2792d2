#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hydraulics.hpp"
#include "lp.hpp"

namespace wdn {

inline constexpr double kWaterWeight = 62.4;          // lb/ft^3
inline constexpr double kFtLbfPerSecToKw = 1.3558179483314e-3;

struct OperatorConfig {
    double price = 0.175;     // $/kWh
    double efficiency = 0.75;
    int speed_levels = 11;    // grid over [s_min, s_max], 0 always included
    double s_min = 0.0;       // lowest nonzero speed
    PumpCurve curve = PumpCurve::quadratic;
};

/// Energy cost in $ of a pump lifting q cfs by dh ft for dt seconds.
inline double pump_cost(double q, double dh, double dt, const OperatorConfig& c) {
    if (q <= 0.0 || dh <= 0.0) return 0.0;
    const double kw = kWaterWeight * q * dh * kFtLbfPerSecToKw / c.efficiency;
    return c.price * kw * dt / 3600.0;
}

/// Cost of every pump in a solved state.
inline std::vector<double> pump_costs(const NetworkModel& m, const HydraulicState& s, const OperatorConfig& c) {
    std::vector<double> out;
    for (int p = 0; p < m.n_pumps(); ++p) {
        const int l = m.pump_link(p);
        const double dh = s.head(m, m.link_to(l)) - s.head(m, m.link_from(l));
        out.push_back(pump_cost(s.pump_flows[static_cast<std::size_t>(p)], dh, m.dt(), c));
    }
    return out;
}

inline double state_cost(const NetworkModel& m, const HydraulicState& s, const OperatorConfig& c) {
    const auto v = pump_costs(m, s, c);
    return std::accumulate(v.begin(), v.end(), 0.0);
}

/// Speed levels offered to the scheduler for pump p.
inline std::vector<double> speed_grid(const Pump& p, const OperatorConfig& c) {
    std::vector<double> g{0.0};
    const int n = std::max(2, c.speed_levels);
    const double lo = c.s_min, hi = p.max_speed;
    for (int i = 1; i < n; ++i) {
        const double s = c.s_min > 0.0 ? lo + (hi - lo) * (i - 1) / (n - 2) : hi * i / (n - 1);
        g.push_back(s);
    }
    return g;
}

struct StepSchedule {
    int k = 0;
    std::vector<double> speeds;
    std::vector<double> flows;          // pump flows, GPM
    std::vector<double> link_flows;     // operator model flows per link, cfs
    std::vector<double> tank_heads_end; // believed, unclamped
    double cost = 0.0;                  // believed, $
    bool feasible = true;
};

namespace ops_detail {

struct Option {
    std::vector<double> speeds;
    std::optional<StepResult> result;
    double cost = 0.0;
    std::vector<double> end; // unclamped tank heads
    double violation = 0.0;  // ft outside the tank bounds
};

inline std::vector<std::vector<double>> combinations(const NetworkModel& m, const OperatorConfig& c) {
    std::vector<std::vector<double>> out{{}};
    for (const auto& p : m.pumps()) {
        std::vector<std::vector<double>> next;
        for (const auto& base : out)
            for (double s : speed_grid(p, c)) {
                auto v = base;
                v.push_back(s);
                next.push_back(std::move(v));
            }
        out = std::move(next);
    }
    return out;
}

} // namespace ops_detail

/**
 * Cheapest pump speeds for one step under the operator's model: each grid
 * combination is solved with the fitted pump curve, and a binary per
 * combination selects the cheapest one keeping every tank within bounds at
 * the end of the step. Without a feasible combination the least-violating one
 * is returned and the step is flagged.
 */
inline StepSchedule schedule_step(const NetworkModel& m, int k, const std::vector<double>& tank_heads,
    const std::vector<double>& demands_cfs, const OperatorConfig& c, std::string* lp_dump = nullptr) {
    SolveOptions opt;
    opt.pump_curve = c.curve;
    std::vector<ops_detail::Option> opts;
    for (auto& sp : ops_detail::combinations(m, c)) {
        ops_detail::Option o;
        o.speeds = sp;
        StepControls ctl;
        ctl.pump_speeds = sp;
        for (const auto& v : m.valves()) ctl.valve_status.push_back(v.status);
        try {
            o.result = solve_step(m, k, tank_heads, demands_cfs, ctl, opt);
        } catch (const InfeasibleError&) {
            continue;
        }
        o.cost = state_cost(m, o.result->state, c);
        for (int t = 0; t < m.n_tanks(); ++t) {
            const auto& tk = m.tanks()[static_cast<std::size_t>(t)];
            const double h = o.result->state.tank_heads_end[static_cast<std::size_t>(t)] +
                             o.result->state.tank_clamped[static_cast<std::size_t>(t)] / tk.area;
            o.end.push_back(h);
            o.violation += std::max(0.0, tk.min_head() - h) + std::max(0.0, h - tk.max_head());
        }
        opts.push_back(std::move(o));
    }
    if (opts.empty()) throw InfeasibleError(k, "no pump setting gives a hydraulic solution");

    LinearProgram lp;
    std::vector<Term> one;
    std::vector<std::vector<Term>> lo(static_cast<std::size_t>(m.n_tanks())), hi(lo);
    for (std::size_t j = 0; j < opts.size(); ++j) {
        // Tiny speed penalty makes ties (zero-flow settings) resolve to the slowest setting.
        const double tie = 1e-9 * std::accumulate(opts[j].speeds.begin(), opts[j].speeds.end(), 0.0);
        std::string name = "w[";
        for (std::size_t p = 0; p < opts[j].speeds.size(); ++p) name += (p ? "," : "") + std::to_string(opts[j].speeds[p]).substr(0, 4);
        const int v = lp.add_binary(name + "]");
        lp.objective[static_cast<std::size_t>(v)] = opts[j].cost + tie;
        one.push_back({v, 1.0});
        for (int t = 0; t < m.n_tanks(); ++t) {
            lo[static_cast<std::size_t>(t)].push_back({v, opts[j].end[static_cast<std::size_t>(t)]});
            hi[static_cast<std::size_t>(t)].push_back({v, opts[j].end[static_cast<std::size_t>(t)]});
        }
    }
    lp.add(one, Relation::eq, 1.0, "one_setting");
    for (int t = 0; t < m.n_tanks(); ++t) {
        const auto& tk = m.tanks()[static_cast<std::size_t>(t)];
        lp.add(lo[static_cast<std::size_t>(t)], Relation::ge, tk.min_head(), "tank_min[" + tk.id + "]");
        lp.add(hi[static_cast<std::size_t>(t)], Relation::le, tk.max_head(), "tank_max[" + tk.id + "]");
    }
    if (lp_dump) *lp_dump += dump_lp(lp);
    const auto sol = solve_milp(lp);
    std::size_t pick = 0;
    bool feasible = sol.status == SolveStatus::optimal;
    if (feasible) {
        for (std::size_t j = 0; j < opts.size(); ++j)
            if (sol.values[j] > 0.5) pick = j;
    } else {
        for (std::size_t j = 1; j < opts.size(); ++j) {
            const auto& a = opts[j];
            const auto& b = opts[pick];
            if (a.violation < b.violation - 1e-12 || (std::abs(a.violation - b.violation) <= 1e-12 && a.cost < b.cost)) pick = j;
        }
    }
    const auto& o = opts[pick];
    StepSchedule s;
    s.k = k;
    s.speeds = o.speeds;
    for (double q : o.result->state.pump_flows) s.flows.push_back(cfs_to_gpm(q));
    s.link_flows = o.result->flows;
    s.tank_heads_end = o.end;
    s.cost = o.cost;
    s.feasible = feasible;
    return s;
}

struct ScheduleResult {
    std::vector<StepSchedule> steps;
    double total_cost = 0.0;
    bool feasible = true;
};

/// Open-loop schedule over a horizon from per-step demand forecasts (cfs), carrying tank levels forward.
inline ScheduleResult schedule_pumps(const NetworkModel& m, const std::vector<std::vector<double>>& demands,
    const OperatorConfig& c, std::vector<double> tank_heads = {}) {
    if (tank_heads.empty()) tank_heads = initial_tank_heads(m);
    ScheduleResult r;
    for (std::size_t k = 0; k < demands.size(); ++k) {
        auto s = schedule_step(m, static_cast<int>(k), tank_heads, demands[k], c);
        for (int t = 0; t < m.n_tanks(); ++t) {
            const auto& tk = m.tanks()[static_cast<std::size_t>(t)];
            tank_heads[static_cast<std::size_t>(t)] = std::clamp(s.tank_heads_end[static_cast<std::size_t>(t)], tk.min_head(), tk.max_head());
        }
        r.total_cost += s.cost;
        r.feasible = r.feasible && s.feasible;
        r.steps.push_back(std::move(s));
    }
    return r;
}

/// Why a demand/control pair has no acceptable hydraulic point.
struct FeasibilityResult {
    std::optional<HydraulicState> state;
    std::string reason;

    bool feasible() const { return state.has_value(); }
};

/**
 * Any hydraulic point meeting the demands under fixed controls, with pump
 * flows inside [0, max flow] and tanks within bounds after the step.
 */
inline FeasibilityResult water_flow_feasibility(const NetworkModel& m, int k, const std::vector<double>& tank_heads,
    const std::vector<double>& demands_cfs, const StepControls& ctl, const SolveOptions& opt = {}) {
    FeasibilityResult r;
    StepResult s;
    try {
        s = solve_step(m, k, tank_heads, demands_cfs, ctl, opt);
    } catch (const InfeasibleError& e) {
        r.reason = e.what();
        return r;
    }
    for (int p = 0; p < m.n_pumps(); ++p) {
        const auto& pump = m.pumps()[static_cast<std::size_t>(p)];
        const double q = s.state.pump_flows[static_cast<std::size_t>(p)];
        const double sp = s.state.pump_speeds[static_cast<std::size_t>(p)];
        if (sp > 0.0 && q > pump.max_flow(sp) * (1.0 + 1e-9)) {
            r.reason = "pump " + pump.id + " beyond its maximum flow";
            return r;
        }
    }
    for (int t = 0; t < m.n_tanks(); ++t) {
        if (s.state.tank_clamped[static_cast<std::size_t>(t)] != 0.0) {
            r.reason = "tank " + m.tanks()[static_cast<std::size_t>(t)].id + " leaves its level bounds";
            return r;
        }
    }
    r.state = std::move(s.state);
    return r;
}

/// Costs and tank trajectory of one operated run.
struct RunTotals {
    std::vector<double> step_cost;   // $
    std::vector<double> tank_volume; // ft^3 summed over tanks, end of each step
    int alarms = 0;
    int validation_failures = 0;

    double total_cost() const { return std::accumulate(step_cost.begin(), step_cost.end(), 0.0); }
};

inline double tank_volume(const NetworkModel& m, const std::vector<double>& heads) {
    double v = 0.0;
    for (int t = 0; t < m.n_tanks(); ++t) {
        const auto& tk = m.tanks()[static_cast<std::size_t>(t)];
        v += (heads[static_cast<std::size_t>(t)] - tk.elevation) * tk.area;
    }
    return v;
}

struct ImpactSummary {
    double baseline_cost = 0.0;
    double attacked_cost = 0.0;
    double cost_increase_pct = 0.0;
    double tank_volume_delta = 0.0; // attacked minus baseline at the end, ft^3
    double max_drawdown = 0.0;      // largest baseline minus attacked volume over the run, ft^3
    int baseline_alarms = 0, attacked_alarms = 0;
    int baseline_validation_failures = 0, attacked_validation_failures = 0;
};

inline ImpactSummary summarize_impact(const RunTotals& base, const RunTotals& atk) {
    if (base.step_cost.size() != atk.step_cost.size() || base.tank_volume.size() != atk.tank_volume.size())
        throw Error("impact: baseline and attacked horizons differ");
    ImpactSummary s;
    s.baseline_cost = base.total_cost();
    s.attacked_cost = atk.total_cost();
    s.cost_increase_pct = s.baseline_cost > 0.0 ? 100.0 * (s.attacked_cost - s.baseline_cost) / s.baseline_cost : 0.0;
    if (!base.tank_volume.empty()) s.tank_volume_delta = atk.tank_volume.back() - base.tank_volume.back();
    for (std::size_t k = 0; k < base.tank_volume.size(); ++k) s.max_drawdown = std::max(s.max_drawdown, base.tank_volume[k] - atk.tank_volume[k]);
    s.baseline_alarms = base.alarms;
    s.attacked_alarms = atk.alarms;
    s.baseline_validation_failures = base.validation_failures;
    s.attacked_validation_failures = atk.validation_failures;
    return s;
}

} // namespace wdn
