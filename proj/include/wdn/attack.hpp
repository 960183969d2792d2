#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "detection.hpp"
#include "estimation.hpp"
#include "lp.hpp"
#include "rng.hpp"
#include "validation.hpp"

namespace wdn {

enum class AttackKind { none, fs_fdi, ha_fdi, hu_fdi, hu_closed_form, r_fdi };

inline const char* to_string(AttackKind k) {
    switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::fs_fdi: return "fs-fdi";
    case AttackKind::ha_fdi: return "ha-fdi";
    case AttackKind::hu_fdi: return "hu-fdi";
    case AttackKind::hu_closed_form: return "hu-closed-form";
    default: return "r-fdi";
    }
}

inline AttackKind parse_attack_kind(const std::string& s) {
    for (auto k : {AttackKind::none, AttackKind::fs_fdi, AttackKind::ha_fdi, AttackKind::hu_fdi, AttackKind::hu_closed_form, AttackKind::r_fdi})
        if (s == to_string(k)) return k;
    throw Error("unknown attack kind '" + s + "'");
}

enum class Direction { any, increase, decrease };

/// Targeted sensors (indices into the SensorConfig order) and the attack window.
struct TargetSet {
    std::vector<int> sensors;
    int k_start = 0;
    int k_end = 0;

    bool active(int k) const { return k >= k_start && k <= k_end; }
    int size() const { return static_cast<int>(sensors.size()); }
};

struct AttackBounds {
    double alpha_h = 0.0;
    double alpha_f = 0.0;
    double alpha_d = 0.0;
};

struct AttackVector {
    int k = 0;
    std::vector<double> values;  // per target, I/O units
    std::vector<char> clipped;   // per target, R-FDI only
    bool feasible = true;
    double objective = 0.0;
    std::string note;

    bool zero() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
    }
};

inline AttackVector zero_attack(const TargetSet& t, int k, std::string note = {}) {
    AttackVector a;
    a.k = k;
    a.values.assign(t.sensors.size(), 0.0);
    a.clipped.assign(t.sensors.size(), 0);
    a.note = std::move(note);
    return a;
}

inline MeasurementFrame apply_attack(MeasurementFrame f, const TargetSet& t, const AttackVector& a) {
    for (std::size_t i = 0; i < t.sensors.size(); ++i) f.values[static_cast<std::size_t>(t.sensors[i])] += a.values[i];
    return f;
}

inline void check_targets(const SensorConfig& cfg, const TargetSet& t, int horizon) {
    std::set<int> seen;
    for (int s : t.sensors) {
        if (s < 0 || s >= cfg.size()) throw Error("attack target outside the sensor configuration");
        if (!seen.insert(s).second) throw Error("attack target " + cfg.name(s) + " listed twice");
    }
    if (t.k_start < 0 || t.k_end < t.k_start || t.k_end >= horizon) throw Error("attack window outside the horizon");
}

/// Per-target magnitude caps alpha * max |y| over all readings of the target's class.
inline std::vector<double> attack_caps(const SensorConfig& cfg, const TargetSet& t, const MeasurementFrame& f, const AttackBounds& b) {
    double nh = 0.0, nf = 0.0, nd = 0.0;
    for (int s = 0; s < cfg.size(); ++s) {
        const double v = std::abs(f.values[static_cast<std::size_t>(s)]);
        switch (cfg.channel(s)) {
        case Channel::head: nh = std::max(nh, v); break;
        case Channel::flow: nf = std::max(nf, v); break;
        case Channel::demand: nd = std::max(nd, v); break;
        default: break;
        }
    }
    std::vector<double> caps;
    for (int s : t.sensors) {
        switch (cfg.channel(s)) {
        case Channel::head: caps.push_back(b.alpha_h * nh); break;
        case Channel::flow: caps.push_back(b.alpha_f * nf); break;
        case Channel::demand: caps.push_back(b.alpha_d * nd); break;
        default: caps.push_back(0.0);
        }
    }
    return caps;
}

/// Network element a sensor observes: a link for flows, a node otherwise.
struct SensorSite {
    bool is_link = false;
    int index = -1;
};

inline SensorSite sensor_site(const NetworkModel& m, const SensorConfig& cfg, int s) {
    const auto& id = cfg.sensor(s).id;
    switch (cfg.channel(s)) {
    case Channel::flow: return {true, m.link(id)};
    case Channel::level: return {false, m.tank_node(m.tank(id))};
    default: return {false, m.junction(id)};
    }
}

/// Nodes touched by a sensor's element.
inline std::vector<int> sensor_nodes(const NetworkModel& m, const SensorConfig& cfg, int s) {
    const auto site = sensor_site(m, cfg, s);
    if (site.is_link) return {m.link_from(site.index), m.link_to(site.index)};
    return {site.index};
}

/// True when the targeted elements form one connected group through shared nodes.
inline bool targets_connected(const NetworkModel& m, const SensorConfig& cfg, const std::vector<int>& sensors) {
    if (sensors.size() <= 1) return true;
    std::vector<std::vector<int>> nodes;
    for (int s : sensors) nodes.push_back(sensor_nodes(m, cfg, s));
    std::vector<char> seen(sensors.size(), 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        const auto i = stack.back();
        stack.pop_back();
        for (std::size_t j = 0; j < sensors.size(); ++j) {
            if (seen[j]) continue;
            const bool touch = std::any_of(nodes[i].begin(), nodes[i].end(),
                [&](int n) { return std::find(nodes[j].begin(), nodes[j].end(), n) != nodes[j].end(); });
            if (touch) {
                seen[j] = 1;
                stack.push_back(j);
            }
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

/// Junctions around the targets, their incident links and every endpoint of those links.
struct LocalSubnetwork {
    std::vector<int> junctions;
    std::vector<int> links;
    std::vector<int> nodes;

    bool has_junction(int j) const { return std::find(junctions.begin(), junctions.end(), j) != junctions.end(); }
    bool has_link(int l) const { return std::find(links.begin(), links.end(), l) != links.end(); }
};

inline LocalSubnetwork local_subnetwork(const NetworkModel& m, const SensorConfig& cfg, const std::vector<int>& sensors) {
    std::set<int> js, ls, ns;
    for (int s : sensors)
        for (int n : sensor_nodes(m, cfg, s))
            if (m.node_kind(n) == NodeKind::junction) js.insert(n);
    for (int j : js)
        for (int l : m.incident(j)) ls.insert(l);
    for (int l : ls) {
        ns.insert(m.link_from(l));
        ns.insert(m.link_to(l));
    }
    return {{js.begin(), js.end()}, {ls.begin(), ls.end()}, {ns.begin(), ns.end()}};
}

/// Connected sensor groups of the given size drawn from configured flow, head and demand sensors near the subnetwork.
inline std::vector<std::vector<int>> suggest_groups(const NetworkModel& m, const SensorConfig& cfg, const std::vector<int>& sensors,
    std::size_t limit = 20) {
    const auto local = local_subnetwork(m, cfg, sensors);
    std::vector<int> pool;
    for (int s = 0; s < cfg.size(); ++s) {
        if (cfg.channel(s) == Channel::level) continue;
        const auto ns = sensor_nodes(m, cfg, s);
        if (std::any_of(ns.begin(), ns.end(), [&](int n) { return std::find(local.nodes.begin(), local.nodes.end(), n) != local.nodes.end(); }))
            pool.push_back(s);
    }
    std::vector<std::vector<int>> out;
    const std::size_t r = sensors.size();
    if (r == 0 || r > pool.size()) return out;
    std::vector<std::size_t> idx(r);
    for (std::size_t i = 0; i < r; ++i) idx[i] = i;
    while (out.size() < limit) {
        std::vector<int> g;
        for (auto i : idx) g.push_back(pool[i]);
        if (targets_connected(m, cfg, g)) out.push_back(g);
        std::size_t i = r;
        while (i > 0 && idx[i - 1] == pool.size() - r + i - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (std::size_t j = i; j < r; ++j) idx[j] = idx[j - 1] + 1;
    }
    return out;
}

/// Detector parameters visible to the attacker; residual indices follow the estimator's measurement rows.
struct DetectorKnowledge {
    const CusumDetector* cusum = nullptr;
    const ChiSquaredDetector* chi2 = nullptr;
};

/// Everything an optimization-based attacker may use at one step.
struct AttackContext {
    const NetworkModel* model = nullptr;
    const SensorConfig* cfg = nullptr;
    TargetSet targets;
    AttackBounds bounds;
    Direction direction = Direction::any;
    std::vector<double> pump_speeds;     // current controls, known to the attacker
    std::vector<double> reference_flows; // GPM per link, operating point for the chords
    int pwl_segments = 2;
    // State-estimation knowledge.
    const EstimationSystem* se = nullptr;
    const Estimate* estimate = nullptr;
    std::vector<double> x_ref, eps; // per state column, empty disables the deviation bound
    DetectorKnowledge detector;
    bool guard_all_residuals = false;
    double detector_margin = 1e-6;
    bool minimize = false; // objective sense for sum |a|; maximize is the attack setting
};

namespace atk_detail {

inline std::vector<double> pwl_points(double center, double width, int n) {
    std::vector<double> p;
    for (int i = 0; i <= n; ++i) p.push_back(center - width + 2.0 * width * i / n);
    return p;
}

inline double link_loss(const NetworkModel& m, int l, double q_gpm) {
    const double q = gpm_to_cfs(q_gpm);
    if (m.link_kind(l) == LinkKind::pipe) return pipe_headloss(m.pipes()[static_cast<std::size_t>(l)], q);
    return valve_headloss(m.valves()[static_cast<std::size_t>(m.valve_of(l))], q);
}

inline bool link_open(const NetworkModel& m, const AttackContext& ctx, int l) {
    switch (m.link_kind(l)) {
    case LinkKind::pipe: return m.pipes()[static_cast<std::size_t>(l)].status == LinkStatus::open;
    case LinkKind::pump: {
        const int p = m.pump_of(l);
        return ctx.pump_speeds.empty() || ctx.pump_speeds[static_cast<std::size_t>(p)] > 0.0;
    }
    default: return m.valves()[static_cast<std::size_t>(m.valve_of(l))].status == LinkStatus::open;
    }
}

/// Row of each sensor in the estimator's residual vector, -1 when it has none.
inline std::vector<int> residual_rows(const EstimationSystem& se, int n_sensors) {
    std::vector<int> row(static_cast<std::size_t>(n_sensors), -1);
    for (int i = 0; i < se.n_meas(); ++i) row[static_cast<std::size_t>(se.meas_sensor[static_cast<std::size_t>(i)])] = i;
    return row;
}

} // namespace atk_detail

/// Which constraint groups of the stealth program are active.
struct AttackModel {
    bool physics = true;
    bool estimation = true; // SE response, detector bypass and deviation bound
};

/// Stealth program and bookkeeping to read the attack back.
struct AttackProgram {
    LinearProgram lp;
    std::vector<int> a_plus, a_minus; // per target
    std::vector<double> caps;
};

/**
 * Builds the attack program in perturbation form: attack a = a+ - a-, local
 * mass balance and chord head loss around the current operating point, the
 * operator's linear estimator response x = x0 + K a, r = r0 + S a, detector
 * bypass on the residuals and the deviation bound on local states.
 */
inline AttackProgram build_attack_program(const AttackContext& ctx, const MeasurementFrame& f, const AttackModel& model) {
    const auto& m = *ctx.model;
    const auto& cfg = *ctx.cfg;
    const auto& tg = ctx.targets.sensors;
    const int nt = static_cast<int>(tg.size());
    AttackProgram ap;
    auto& lp = ap.lp;
    lp.sense = ctx.minimize ? Sense::minimize : Sense::maximize;
    ap.caps = attack_caps(cfg, ctx.targets, f, ctx.bounds);
    std::vector<std::vector<Term>> a_terms(static_cast<std::size_t>(nt)); // a_t as a term list
    for (int t = 0; t < nt; ++t) {
        const double cap = ap.caps[static_cast<std::size_t>(t)];
        const auto name = cfg.name(tg[static_cast<std::size_t>(t)]);
        const double up = ctx.direction == Direction::decrease ? 0.0 : cap;
        const double dn = ctx.direction == Direction::increase ? 0.0 : cap;
        const int p = lp.add_var("ap[" + name + "]", 0.0, up, 1.0);
        const int q = lp.add_var("am[" + name + "]", 0.0, dn, 1.0);
        ap.a_plus.push_back(p);
        ap.a_minus.push_back(q);
        a_terms[static_cast<std::size_t>(t)] = {{p, 1.0}, {q, -1.0}};
        if (up > 0.0 && dn > 0.0) {
            const int z = lp.add_binary("sign[" + name + "]");
            lp.add({{p, 1.0}, {z, -cap}}, Relation::le, 0.0, "sign_up[" + name + "]");
            lp.add({{q, 1.0}, {z, cap}}, Relation::le, cap, "sign_dn[" + name + "]");
        }
    }
    auto target_of = [&](Channel c, const std::string& id) {
        for (int t = 0; t < nt; ++t)
            if (cfg.channel(tg[static_cast<std::size_t>(t)]) == c && cfg.sensor(tg[static_cast<std::size_t>(t)]).id == id) return t;
        return -1;
    };

    if (model.physics) {
        const auto local = local_subnetwork(m, cfg, tg);
        double width = 0.0;
        for (double c : ap.caps) width = std::max(width, c);
        std::vector<int> dq(static_cast<std::size_t>(m.n_links()), -1), dh(static_cast<std::size_t>(m.n_nodes()), -1);
        auto pin = [&](int var, int t) {
            std::vector<Term> row{{var, 1.0}};
            for (const auto& tm : a_terms[static_cast<std::size_t>(t)]) row.push_back({tm.var, -tm.coef});
            lp.add(std::move(row), Relation::eq, 0.0, "pin[" + lp.names[static_cast<std::size_t>(var)] + "]");
        };
        for (int l : local.links) {
            const auto& id = m.link_id(l);
            const int t = target_of(Channel::flow, id);
            const bool metered = cfg.index(Channel::flow, id) >= 0;
            double w = width;
            if (!atk_detail::link_open(m, ctx, l) || (metered && t < 0)) w = 0.0;
            dq[static_cast<std::size_t>(l)] = lp.add_var("dq[" + id + "]", -w, w);
            if (t >= 0) pin(dq[static_cast<std::size_t>(l)], t);
        }
        for (int n : local.nodes) {
            if (m.node_kind(n) != NodeKind::junction) continue;
            const auto& id = m.node_id(n);
            const int t = target_of(Channel::head, id);
            const bool metered = cfg.index(Channel::head, id) >= 0;
            const double w = (metered && t < 0) ? 0.0 : 1e3;
            dh[static_cast<std::size_t>(n)] = lp.add_var("dh[" + id + "]", -w, w);
            if (t >= 0) pin(dh[static_cast<std::size_t>(n)], t);
        }
        for (int j : local.junctions) {
            std::vector<Term> row;
            for (int l : m.incident(j)) row.push_back({dq[static_cast<std::size_t>(l)], static_cast<double>(m.direction(l, j))});
            const int t = target_of(Channel::demand, m.node_id(j));
            if (t >= 0)
                for (const auto& tm : a_terms[static_cast<std::size_t>(t)]) row.push_back({tm.var, -tm.coef});
            lp.add(std::move(row), Relation::eq, 0.0, "mass[" + m.node_id(j) + "]");
        }
        const int ns = std::max(1, ctx.pwl_segments);
        for (int l : local.links) {
            if (m.link_kind(l) == LinkKind::pump || !atk_detail::link_open(m, ctx, l)) continue;
            const auto& id = m.link_id(l);
            const double q0 = ctx.reference_flows[static_cast<std::size_t>(l)];
            const double w = std::max(lp.hi[static_cast<std::size_t>(dq[static_cast<std::size_t>(l)])], 1e-9);
            const auto pts = atk_detail::pwl_points(q0, w, ns);
            const double f0 = atk_detail::link_loss(m, l, q0);
            std::vector<int> lam, bin;
            std::vector<Term> conv, flow{{dq[static_cast<std::size_t>(l)], -1.0}}, energy;
            for (int i = 0; i <= ns; ++i) {
                lam.push_back(lp.add_var("lam[" + id + "," + std::to_string(i) + "]", 0.0, 1.0));
                conv.push_back({lam.back(), 1.0});
                flow.push_back({lam.back(), pts[static_cast<std::size_t>(i)] - q0});
                energy.push_back({lam.back(), -(atk_detail::link_loss(m, l, pts[static_cast<std::size_t>(i)]) - f0)});
            }
            lp.add(std::move(conv), Relation::eq, 1.0, "conv[" + id + "]");
            lp.add(std::move(flow), Relation::eq, 0.0, "chord_q[" + id + "]");
            for (int end : {m.link_from(l), m.link_to(l)}) {
                const int v = dh[static_cast<std::size_t>(end)];
                if (v >= 0) energy.push_back({v, end == m.link_from(l) ? 1.0 : -1.0});
            }
            lp.add(std::move(energy), Relation::eq, 0.0, "energy[" + id + "]");
            if (ns > 1) {
                std::vector<Term> one;
                for (int s = 0; s < ns; ++s) {
                    bin.push_back(lp.add_binary("seg[" + id + "," + std::to_string(s) + "]"));
                    one.push_back({bin.back(), 1.0});
                }
                lp.add(std::move(one), Relation::eq, 1.0, "seg_one[" + id + "]");
                for (int i = 0; i <= ns; ++i) {
                    std::vector<Term> row{{lam[static_cast<std::size_t>(i)], 1.0}};
                    if (i > 0) row.push_back({bin[static_cast<std::size_t>(i - 1)], -1.0});
                    if (i < ns) row.push_back({bin[static_cast<std::size_t>(i)], -1.0});
                    lp.add(std::move(row), Relation::le, 0.0, "sos[" + id + "," + std::to_string(i) + "]");
                }
            }
        }
    }

    if (model.estimation) {
        if (!ctx.se || !ctx.estimate) throw Error("attack: estimator knowledge required");
        const auto& se = *ctx.se;
        const auto& est = *ctx.estimate;
        const auto sens = sensitivity(se);
        const auto rows = atk_detail::residual_rows(se, cfg.size());
        // r_i(a) = r0_i + sum_t S(i, t) a_t as a term list plus constant.
        auto residual_terms = [&](int i) {
            std::vector<Term> row;
            for (int t = 0; t < nt; ++t) {
                const double s = sens.residual(i, tg[static_cast<std::size_t>(t)]);
                if (s == 0.0) continue;
                for (const auto& tm : a_terms[static_cast<std::size_t>(t)]) row.push_back({tm.var, s * tm.coef});
            }
            return row;
        };
        if (ctx.detector.cusum && ctx.detector.cusum->mode == CusumMode::vectorized) {
            const auto& d = *ctx.detector.cusum;
            std::vector<int> guard;
            if (ctx.guard_all_residuals) {
                for (int i = 0; i < se.n_meas(); ++i) guard.push_back(i);
            } else {
                for (int s : tg)
                    if (rows[static_cast<std::size_t>(s)] >= 0) guard.push_back(rows[static_cast<std::size_t>(s)]);
            }
            for (int i : guard) {
                const double room = d.tau(i) + d.b(i) - d.c(i) - ctx.detector_margin;
                const auto row = residual_terms(i);
                lp.add(row, Relation::le, room - est.residuals(i), "cusum_hi[" + std::to_string(i) + "]");
                lp.add(row, Relation::ge, -room - est.residuals(i), "cusum_lo[" + std::to_string(i) + "]");
            }
        }
        std::optional<double> beta;
        Eigen::MatrixXd sigma_inv;
        if (ctx.detector.cusum && ctx.detector.cusum->mode == CusumMode::scalar) {
            const auto& d = *ctx.detector.cusum;
            beta = d.tau(0) + d.b(0) - d.c(0);
            sigma_inv = d.sigma_inv;
        } else if (ctx.detector.chi2) {
            beta = ctx.detector.chi2->alpha;
            sigma_inv = ctx.detector.chi2->sigma_inv;
        }
        if (beta) {
            // Octagons inscribed in the circles of u = L' r, L L' = inv(S), radius sqrt(beta / pairs).
            const int n = se.n_meas();
            const Eigen::MatrixXd lt = Eigen::LLT<Eigen::MatrixXd>(sigma_inv).matrixU();
            const Eigen::VectorXd u0 = lt * est.residuals;
            const int pairs = (n + 1) / 2;
            const double radius = *beta - ctx.detector_margin > 0.0 ? std::sqrt((*beta - ctx.detector_margin) / pairs) : 0.0;
            auto u_terms = [&](int k) {
                std::map<int, double> acc;
                for (int i = 0; i < n; ++i) {
                    if (lt(k, i) == 0.0) continue;
                    for (const auto& tm : residual_terms(i)) acc[tm.var] += lt(k, i) * tm.coef;
                }
                std::vector<Term> row;
                for (const auto& [v, c] : acc) row.push_back({v, c});
                return row;
            };
            for (int p = 0; p < pairs; ++p) {
                const int i = 2 * p, j = 2 * p + 1;
                const auto ui = u_terms(i);
                if (j >= n) {
                    lp.add(ui, Relation::le, radius - u0(i), "quad_hi[" + std::to_string(i) + "]");
                    lp.add(ui, Relation::ge, -radius - u0(i), "quad_lo[" + std::to_string(i) + "]");
                    continue;
                }
                const auto uj = u_terms(j);
                const double face = radius * std::cos(std::numbers::pi / 8.0);
                for (int h = 0; h < 4; ++h) {
                    const double th = h * std::numbers::pi / 4.0, c = std::cos(th), s = std::sin(th);
                    std::map<int, double> acc;
                    for (const auto& tm : ui) acc[tm.var] += c * tm.coef;
                    for (const auto& tm : uj) acc[tm.var] += s * tm.coef;
                    std::vector<Term> row;
                    for (const auto& [v, cf] : acc) row.push_back({v, cf});
                    const double off = c * u0(i) + s * u0(j);
                    const auto tag = std::to_string(p) + "," + std::to_string(h);
                    lp.add(row, Relation::le, face - off, "oct_hi[" + tag + "]");
                    lp.add(row, Relation::ge, -face - off, "oct_lo[" + tag + "]");
                }
            }
        }
        if (!ctx.x_ref.empty()) {
            std::vector<int> cols;
            const auto local = local_subnetwork(m, cfg, tg);
            for (int l : local.links) cols.push_back(l);
            for (int j : local.junctions) cols.push_back(m.n_links() + j);
            for (int c : cols) {
                std::vector<Term> row;
                for (int t = 0; t < nt; ++t) {
                    const double k = sens.state(c, tg[static_cast<std::size_t>(t)]);
                    if (k == 0.0) continue;
                    for (const auto& tm : a_terms[static_cast<std::size_t>(t)]) row.push_back({tm.var, k * tm.coef});
                }
                if (row.empty()) continue;
                const double off = est.x(c) - ctx.x_ref[static_cast<std::size_t>(c)];
                const double e = ctx.eps[static_cast<std::size_t>(c)];
                lp.add(row, Relation::le, e - off, "dev_hi[" + state_name(m, c) + "]");
                lp.add(row, Relation::ge, -e - off, "dev_lo[" + state_name(m, c) + "]");
            }
        }
    }
    return ap;
}

inline AttackVector solve_attack_program(const AttackProgram& ap, const TargetSet& t, int k, std::string* lp_dump = nullptr) {
    if (lp_dump) *lp_dump += dump_lp(ap.lp);
    const auto sol = solve_milp(ap.lp);
    if (sol.status != SolveStatus::optimal) return zero_attack(t, k, std::string("no feasible attack (") + to_string(sol.status) + ")");
    AttackVector a = zero_attack(t, k);
    for (std::size_t i = 0; i < t.sensors.size(); ++i) {
        double v = sol.values[static_cast<std::size_t>(ap.a_plus[i])] - sol.values[static_cast<std::size_t>(ap.a_minus[i])];
        if (std::abs(v) < 1e-9) v = 0.0;
        a.values[i] = std::clamp(v, -ap.caps[i], ap.caps[i]);
    }
    a.objective = sol.objective_value;
    return a;
}

inline AttackVector fs_fdi_step(const AttackContext& ctx, const MeasurementFrame& f, std::string* lp_dump = nullptr) {
    if (!ctx.targets.active(f.k)) return zero_attack(ctx.targets, f.k);
    return solve_attack_program(build_attack_program(ctx, f, {true, true}), ctx.targets, f.k, lp_dump);
}

inline AttackVector ha_fdi_step(const AttackContext& ctx, const MeasurementFrame& f, std::string* lp_dump = nullptr) {
    if (!ctx.targets.active(f.k)) return zero_attack(ctx.targets, f.k);
    return solve_attack_program(build_attack_program(ctx, f, {true, false}), ctx.targets, f.k, lp_dump);
}

inline AttackVector hu_fdi_optimized(const AttackContext& ctx, const MeasurementFrame& f, std::string* lp_dump = nullptr) {
    if (!ctx.targets.active(f.k)) return zero_attack(ctx.targets, f.k);
    return solve_attack_program(build_attack_program(ctx, f, {false, true}), ctx.targets, f.k, lp_dump);
}

enum class DetectorKind { cusum_vectorized, cusum_scalar, chi2 };

inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& s) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).operatorSqrt();
}

/// Parameters a closed-form attacker needs; vectors are indexed by residual.
struct ClosedFormParams {
    DetectorKind kind = DetectorKind::cusum_vectorized;
    Eigen::VectorXd tau, b, c; // vectorized CUSUM
    double tau_s = 0.0, b_s = 0.0, c_s = 0.0; // scalar CUSUM
    double alpha = 0.0;        // chi-squared
    Eigen::MatrixXd sigma;     // residual covariance for scalar forms
    double sign = 1.0;
    double margin = 0.0;       // kept below the threshold at the first step
};

/**
 * Residual-space attack that rides the detector threshold. Returns the full
 * residual perturbation; only targeted entries (selection) are nonzero for the
 * vectorized form. Empty optional when the scalar form has no real root.
 */
inline std::optional<Eigen::VectorXd> hu_fdi_closed_form(const ClosedFormParams& p, const Eigen::VectorXd& r, int k, int k_start,
    const std::vector<int>& selection) {
    const auto n = r.size();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    if (p.kind == DetectorKind::cusum_vectorized) {
        for (int i : selection) {
            a(i) = k == k_start ? p.sign * (p.tau(i) + p.b(i) - p.c(i) - p.margin) - r(i) : p.b(i) - r(i);
        }
        return a;
    }
    if (p.sigma.rows() != n) throw Error("closed-form attack: residual covariance required");
    double level = 0.0;
    if (p.kind == DetectorKind::chi2) {
        level = p.alpha;
    } else {
        level = k == k_start ? p.tau_s + p.b_s - p.c_s : p.b_s;
    }
    level -= p.margin;
    if (level < 0.0) return std::nullopt;
    const double each = std::sqrt(level / static_cast<double>(selection.size()));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int i : selection) v(i) = each;
    return Eigen::VectorXd(sqrt_psd(p.sigma) * v - r);
}

/**
 * Measurement-space injection producing the closed-form residuals on the
 * targeted rows: solves S_TT a = delta_r_T through the estimator response.
 */
inline AttackVector hu_closed_form_step(const SensorConfig& cfg, const TargetSet& t, const EstimationSystem& se, const Estimate& est,
    const ClosedFormParams& p, int k) {
    if (!t.active(k)) return zero_attack(t, k);
    const auto rows = atk_detail::residual_rows(se, cfg.size());
    std::vector<int> sel, tsel;
    for (int i = 0; i < t.size(); ++i) {
        const int r = rows[static_cast<std::size_t>(t.sensors[static_cast<std::size_t>(i)])];
        if (r >= 0) {
            sel.push_back(r);
            tsel.push_back(i);
        }
    }
    auto out = zero_attack(t, k);
    if (sel.empty()) {
        out.note = "no targeted residuals";
        return out;
    }
    const auto dr = hu_fdi_closed_form(p, est.residuals, k, t.k_start, sel);
    if (!dr) {
        out.feasible = false;
        out.note = "threshold already exceeded";
        return out;
    }
    const auto sens = sensitivity(se);
    const auto ns = static_cast<Eigen::Index>(sel.size());
    Eigen::MatrixXd stt(ns, ns);
    Eigen::VectorXd rhs(ns);
    for (Eigen::Index i = 0; i < ns; ++i) {
        rhs(i) = (*dr)(sel[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < ns; ++j)
            stt(i, j) = sens.residual(sel[static_cast<std::size_t>(i)], t.sensors[static_cast<std::size_t>(tsel[static_cast<std::size_t>(j)])]);
    }
    const Eigen::VectorXd a = stt.fullPivLu().solve(rhs);
    for (Eigen::Index j = 0; j < ns; ++j) out.values[static_cast<std::size_t>(tsel[static_cast<std::size_t>(j)])] = a(j);
    return out;
}

struct RfdiParams {
    double sigma_d = 0.0;
    double sigma_n = 0.0;
    double alpha_n = 0.0;
    double alpha_s = 0.0;
    double p_s = 0.0;
    double alpha_max = 0.1;
    std::uint64_t seed = 0;

    void check() const {
        if (p_s < 0.0 || p_s > 1.0) throw Error("r-fdi: spike probability outside [0, 1]");
        if (!(alpha_max > 0.0)) throw Error("r-fdi: alpha_max must be positive");
        if (sigma_d < 0.0 || sigma_n < 0.0) throw Error("r-fdi: negative standard deviation");
    }
};

/// Drift random walk plus proportional noise and occasional spikes, clipped to alpha_max |y|.
inline AttackVector r_fdi_step(const RfdiParams& p, const MeasurementFrame& f, const SensorConfig& cfg, const TargetSet& t, int k,
    std::vector<double>& drift) {
    drift.resize(t.sensors.size(), 0.0);
    auto out = zero_attack(t, k);
    if (!t.active(k)) return out;
    const auto ck = static_cast<std::uint64_t>(k);
    for (std::size_t i = 0; i < t.sensors.size(); ++i) {
        const int s = t.sensors[i];
        const auto name = cfg.name(s);
        const double y = f.values[static_cast<std::size_t>(s)];
        drift[i] += p.sigma_d * Stream(p.seed, name, "drift").normal(ck);
        const double noise = p.sigma_n * Stream(p.seed, name, "noise-scale").normal(ck) * p.alpha_n * y;
        double spike = 0.0;
        if (Stream(p.seed, name, "spike-draw").uniform(ck) <= p.p_s) spike = (2.0 * Stream(p.seed, name, "spike-size").uniform(ck) - 1.0) * p.alpha_s * y;
        const double a = drift[i] + noise + spike, cap = p.alpha_max * std::abs(y);
        out.values[i] = std::clamp(a, -cap, cap);
        out.clipped[i] = out.values[i] != a;
    }
    return out;
}

/// Knowledge the attacker holds.
struct KnowledgeInventory {
    bool measurements = true;
    bool se_config = false;
    bool id_params = false;
    bool local_topology = false;
};

struct DispatchResult {
    bool accepted = true;
    std::string message;
    std::vector<std::vector<int>> suggestions;
};

/// Checks knowledge prerequisites and target connectivity for an attack kind.
inline DispatchResult dispatch(AttackKind kind, const KnowledgeInventory& inv, const NetworkModel& m, const SensorConfig& cfg,
    const TargetSet& t) {
    DispatchResult r;
    auto reject = [&](std::string msg) {
        r.accepted = false;
        r.message = std::move(msg);
        return r;
    };
    if (kind == AttackKind::none) return r;
    if (!inv.measurements) return reject("missing knowledge: measurement access");
    const bool needs_se = kind == AttackKind::fs_fdi || kind == AttackKind::hu_fdi || kind == AttackKind::hu_closed_form;
    const bool needs_topology = kind == AttackKind::fs_fdi || kind == AttackKind::ha_fdi;
    if (needs_se && !inv.se_config) return reject("missing knowledge: SE configuration");
    if (needs_se && !inv.id_params) return reject("missing knowledge: ID parameters");
    if (needs_topology && !inv.local_topology) return reject("missing knowledge: local topology");
    if (needs_topology) {
        for (int s : t.sensors)
            if (cfg.channel(s) == Channel::level) return reject("tank level sensors cannot be targeted by " + std::string(to_string(kind)));
        if (!targets_connected(m, cfg, t.sensors)) {
            r.suggestions = suggest_groups(m, cfg, t.sensors);
            return reject("Selected sensors cannot satisfy physical constraints");
        }
    }
    return r;
}

} // namespace wdn
