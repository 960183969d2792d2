#pragma once

#include <toml.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attack.hpp"
#include "detection.hpp"
#include "estimation.hpp"
#include "inp.hpp"
#include "operations.hpp"
#include "validation.hpp"

namespace wdn {

/// Malformed or inconsistent scenario file.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Attack setup the dispatcher refused.
class DispatchError : public Error {
public:
    DispatchError(const std::string& what, std::vector<std::vector<std::string>> suggestions)
        : Error(what), suggestions_(std::move(suggestions)) {}
    const std::vector<std::vector<std::string>>& suggestions() const { return suggestions_; }

private:
    std::vector<std::vector<std::string>> suggestions_;
};

inline constexpr int kRunSchemaVersion = 1;

enum class DetectorMode { cusum, cusum_scalar, chi2 };

struct DetectorSettings {
    DetectorMode mode = DetectorMode::cusum;
    double gamma = 24.0; // chi-squared mean time between false alarms, steps
};

struct AttackSettings {
    AttackKind kind = AttackKind::none;
    std::vector<std::string> targets; // sensor names such as "flow:9"
    int k_start = 0;
    int k_end = 0;
    AttackBounds bounds;
    Direction direction = Direction::any;
    RfdiParams rfdi;
    KnowledgeInventory knowledge{true, true, true, true};
    bool guard_all_residuals = false;
    int pwl_segments = 2;
    double sign = 1.0;
    bool minimize = false;
};

struct ScenarioConfig {
    std::string name;
    std::string network;
    std::uint64_t seed = 1;
    int horizon = 0; // steps; 0 keeps the network's duration
    bool noiseless = false;
    std::map<std::string, double> initial_levels;
    SensorConfig sensors;
    DetectorSettings detector;
    AttackSettings attack;
    OperatorConfig op;
    double tol_mass_gpm = kDefaultTolMassGpm;
    double tol_energy_ft = kDefaultTolEnergyFt;
    std::string output_dir;
};

namespace scn_detail {

inline void check_keys(const toml::table& t, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [k, v] : t)
        if (!allowed.count(std::string(k.str()))) throw ConfigError("unknown field '" + std::string(k.str()) + "' in " + where);
}

template <class T>
T get(const toml::table& t, const char* key, T fallback) {
    const auto* node = t.get(key);
    if (!node) return fallback;
    if constexpr (std::is_same_v<T, double>) {
        if (auto v = node->value<double>()) return *v;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (auto v = node->value<bool>()) return *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = node->value<std::string>()) return *v;
    } else {
        if (auto v = node->value<std::int64_t>()) return static_cast<T>(*v);
    }
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
}

inline const toml::table& table(const toml::table& t, const char* key) {
    static const toml::table empty;
    const auto* node = t.get(key);
    if (!node) return empty;
    if (const auto* tt = node->as_table()) return *tt;
    throw ConfigError(std::string("'") + key + "' must be a table");
}

inline std::vector<SensorSpec> sensor_list(const toml::table& t, const char* key, double sigma) {
    std::vector<SensorSpec> out;
    const auto* node = t.get(key);
    if (!node) return out;
    const auto* arr = node->as_array();
    if (!arr) throw ConfigError(std::string("sensors.") + key + " must be an array");
    for (const auto& e : *arr) {
        if (auto s = e.value<std::string>()) {
            out.push_back({*s, sigma});
        } else if (const auto* tt = e.as_table()) {
            check_keys(*tt, {"id", "sigma"}, std::string("sensors.") + key);
            out.push_back({get<std::string>(*tt, "id", ""), get<double>(*tt, "sigma", sigma)});
        } else {
            throw ConfigError(std::string("sensors.") + key + " entries must be ids or {id, sigma} tables");
        }
    }
    return out;
}

inline Direction parse_direction(const std::string& s) {
    if (s == "any") return Direction::any;
    if (s == "increase") return Direction::increase;
    if (s == "decrease") return Direction::decrease;
    throw ConfigError("unknown attack direction '" + s + "'");
}

inline DetectorMode parse_detector(const std::string& s) {
    if (s == "cusum") return DetectorMode::cusum;
    if (s == "cusum-scalar") return DetectorMode::cusum_scalar;
    if (s == "chi2") return DetectorMode::chi2;
    throw ConfigError("unknown detector kind '" + s + "'");
}

} // namespace scn_detail

/// Parses scenario text; relative paths resolve against base_dir.
inline ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {}) {
    using namespace scn_detail;
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        throw ConfigError(std::string("scenario: ") + std::string(e.description()));
    }
    check_keys(root, {"name", "network", "seed", "horizon", "noiseless", "initial_levels", "sensors", "detector", "attack",
                         "operator", "tolerances", "output"},
        "scenario");
    ScenarioConfig c;
    c.name = get<std::string>(root, "name", "scenario");
    const auto net = get<std::string>(root, "network", "");
    if (net.empty()) throw ConfigError("scenario: 'network' is required");
    c.network = std::filesystem::path(net).is_absolute() ? net : (base_dir / net).lexically_normal().string();
    c.seed = get<std::uint64_t>(root, "seed", 1);
    c.horizon = get<int>(root, "horizon", 0);
    c.noiseless = get<bool>(root, "noiseless", false);
    for (const auto& [k, v] : table(root, "initial_levels")) {
        const auto lv = v.value<double>();
        if (!lv) throw ConfigError("initial_levels values must be numbers");
        c.initial_levels[std::string(k.str())] = *lv;
    }

    const auto& sn = table(root, "sensors");
    check_keys(sn, {"sigma", "flow", "head", "demand", "level"}, "sensors");
    const double sigma = get<double>(sn, "sigma", 0.05);
    c.sensors.flow_sensors = sensor_list(sn, "flow", sigma);
    c.sensors.head_sensors = sensor_list(sn, "head", sigma);
    c.sensors.demand_meters = sensor_list(sn, "demand", sigma);
    c.sensors.level_sensors = sensor_list(sn, "level", sigma);

    const auto& dt = table(root, "detector");
    check_keys(dt, {"kind", "gamma"}, "detector");
    c.detector.mode = parse_detector(get<std::string>(dt, "kind", "cusum"));
    c.detector.gamma = get<double>(dt, "gamma", 24.0);

    const auto& at = table(root, "attack");
    check_keys(at, {"kind", "targets", "window", "alpha_h", "alpha_f", "alpha_d", "direction", "guard_all_residuals",
                       "segments", "sign", "objective", "rfdi", "knowledge"},
        "attack");
    auto& a = c.attack;
    try {
        a.kind = parse_attack_kind(get<std::string>(at, "kind", "none"));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (const auto* tg = at.get("targets")) {
        const auto* arr = tg->as_array();
        if (!arr) throw ConfigError("attack.targets must be an array of sensor names");
        for (const auto& e : *arr) {
            const auto s = e.value<std::string>();
            if (!s) throw ConfigError("attack.targets must be an array of sensor names");
            a.targets.push_back(*s);
        }
    }
    if (const auto* w = at.get("window")) {
        const auto* arr = w->as_array();
        if (!arr || arr->size() != 2) throw ConfigError("attack.window must be [start, end]");
        a.k_start = static_cast<int>((*arr)[0].value<std::int64_t>().value_or(-1));
        a.k_end = static_cast<int>((*arr)[1].value<std::int64_t>().value_or(-1));
    }
    a.bounds = {get<double>(at, "alpha_h", 0.0), get<double>(at, "alpha_f", 0.0), get<double>(at, "alpha_d", 0.0)};
    a.direction = parse_direction(get<std::string>(at, "direction", "any"));
    a.guard_all_residuals = get<bool>(at, "guard_all_residuals", false);
    a.pwl_segments = get<int>(at, "segments", 2);
    a.sign = get<double>(at, "sign", 1.0);
    const auto objective = get<std::string>(at, "objective", "maximize");
    if (objective != "maximize" && objective != "minimize") throw ConfigError("attack.objective must be maximize or minimize");
    a.minimize = objective == "minimize";
    const auto& rf = table(at, "rfdi");
    check_keys(rf, {"sigma_d", "sigma_n", "alpha_n", "alpha_s", "p_s", "alpha_max"}, "attack.rfdi");
    a.rfdi = {get<double>(rf, "sigma_d", 0.0), get<double>(rf, "sigma_n", 0.0), get<double>(rf, "alpha_n", 0.0),
        get<double>(rf, "alpha_s", 0.0), get<double>(rf, "p_s", 0.0), get<double>(rf, "alpha_max", 0.1), c.seed};
    const auto& kn = table(at, "knowledge");
    check_keys(kn, {"measurements", "se_config", "id_params", "local_topology"}, "attack.knowledge");
    a.knowledge = {get<bool>(kn, "measurements", true), get<bool>(kn, "se_config", true), get<bool>(kn, "id_params", true),
        get<bool>(kn, "local_topology", true)};

    const auto& op = table(root, "operator");
    check_keys(op, {"price", "efficiency", "speed_levels", "min_speed"}, "operator");
    c.op.price = get<double>(op, "price", 0.175);
    c.op.efficiency = get<double>(op, "efficiency", 0.75);
    c.op.speed_levels = get<int>(op, "speed_levels", 11);
    c.op.s_min = get<double>(op, "min_speed", 0.0);

    const auto& tl = table(root, "tolerances");
    check_keys(tl, {"mass_gpm", "energy_ft"}, "tolerances");
    c.tol_mass_gpm = get<double>(tl, "mass_gpm", kDefaultTolMassGpm);
    c.tol_energy_ft = get<double>(tl, "energy_ft", kDefaultTolEnergyFt);

    const auto& out = table(root, "output");
    check_keys(out, {"dir"}, "output");
    c.output_dir = get<std::string>(out, "dir", "");
    return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), std::filesystem::path(path).parent_path());
}

/// Network with the scenario's horizon and initial tank levels applied.
inline NetworkModel scenario_network(const ScenarioConfig& c) {
    const auto base = load_inp(c.network);
    auto d = base.data();
    if (c.horizon > 0) d.time.duration = c.horizon * d.time.hydraulic_step / 3600.0;
    for (const auto& [id, lv] : c.initial_levels) {
        const int t = base.tank(id);
        auto& tk = d.tanks[static_cast<std::size_t>(t)];
        if (lv < tk.min_level || lv > tk.max_level) throw ConfigError("initial level of tank '" + id + "' outside its bounds");
        tk.init_level = lv;
    }
    return NetworkModel(d, base.warnings());
}

/// Resolves target names against the sensor layout and validates the window.
inline TargetSet resolve_targets(const ScenarioConfig& c, const NetworkModel& m) {
    TargetSet t;
    t.k_start = c.attack.k_start;
    t.k_end = c.attack.k_end;
    if (c.attack.kind == AttackKind::none) return t;
    for (const auto& name : c.attack.targets) {
        int idx = -1;
        for (int i = 0; i < c.sensors.size(); ++i)
            if (c.sensors.name(i) == name) idx = i;
        if (idx < 0) throw ConfigError("attack target '" + name + "' is not a configured sensor");
        t.sensors.push_back(idx);
    }
    if (t.sensors.empty()) throw ConfigError("attack has no targets");
    try {
        check_targets(c.sensors, t, m.steps());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return t;
}

/// Detector parameters calibrated from an attack-free history run.
struct DetectorSetup {
    DetectorMode mode = DetectorMode::cusum;
    Eigen::VectorXd tau, b;  // vectorized CUSUM, per residual row
    double tau_s = 0.0, b_s = 0.0;
    double alpha = 0.0;
    Eigen::MatrixXd sigma, sigma_inv;
    bool degenerate = false;
    std::vector<double> x_ref, eps; // reference states and deviation bounds
    std::vector<std::string> residual_names;
};

/// One closed-loop step.
struct StepRecord {
    int k = 0;
    std::vector<double> speeds;
    bool schedule_feasible = true;
    double cost = 0.0; // true energy cost, $
    HydraulicState truth;
    MeasurementFrame measured, attacked;
    AttackVector attack;
    std::vector<double> believed_tanks; // ft, operator belief at the start of the step
    std::vector<double> forecast;       // GPM per junction
    std::vector<double> lin_reference;  // cfs per link
    Eigen::VectorXd x, residuals;
    std::vector<double> statistic; // accumulators after the update, or the chi-squared statistic
    int alarms = 0;
    ValidationReport validation;
    double tank_volume = 0.0; // true, end of step
};

struct RunRecord {
    std::vector<StepRecord> steps;
    std::vector<Alarm> alarms;
    std::vector<std::string> notes;
    std::vector<std::string> residual_names; // sensor name of each residual row
    RunTotals totals;
};

namespace scn_detail {

inline std::vector<double> forecast_next(const NetworkModel& m, const SensorConfig& cfg, const MeasurementFrame& f, int k) {
    const auto now = m.demands_gpm(k), next = m.demands_gpm(k + 1 < m.steps() ? k + 1 : k);
    auto out = next;
    for (int i = 0; i < cfg.size(); ++i) {
        if (cfg.channel(i) != Channel::demand) continue;
        const auto j = static_cast<std::size_t>(m.junction(cfg.sensor(i).id));
        out[j] = now[j] > 0.0 ? f.values[static_cast<std::size_t>(i)] * next[j] / now[j] : next[j];
    }
    return out;
}

inline std::vector<double> to_cfs(std::vector<double> v) {
    for (double& x : v) x = gpm_to_cfs(x);
    return v;
}

inline SystemOptions system_options(const NetworkModel& m, const StepRecord& r) {
    SystemOptions o;
    o.pump_speeds = r.speeds;
    for (const auto& v : m.valves()) o.valve_status.push_back(v.status);
    o.demand_forecast = r.forecast;
    o.tank_heads = r.believed_tanks;
    return o;
}

} // namespace scn_detail

/// Operator-side estimation system of a recorded step, built on its clean measurements.
inline EstimationSystem step_system(const NetworkModel& m, const SensorConfig& cfg, const StepRecord& r) {
    return build_system(m, cfg, r.measured, local_linearization(m, r.lin_reference), scn_detail::system_options(m, r));
}

/// Detector statistics for one residual vector; returns the alarms raised.
struct DetectorState {
    CusumDetector cusum;
    ChiSquaredDetector chi2;
    DetectorMode mode = DetectorMode::cusum;

    explicit DetectorState(const DetectorSetup* s = nullptr) {
        if (!s) return;
        mode = s->mode;
        if (mode == DetectorMode::cusum) cusum = make_vectorized_cusum(s->tau, s->b);
        if (mode == DetectorMode::cusum_scalar) cusum = make_scalar_cusum(s->tau_s, s->b_s, s->sigma_inv);
        if (mode == DetectorMode::chi2) {
            chi2.sigma_inv = s->sigma_inv;
            chi2.alpha = s->alpha;
            chi2.n_y = static_cast<int>(s->sigma.rows());
        }
    }

    std::vector<Alarm> step(const Eigen::VectorXd& r, int k, std::vector<double>& stat) {
        std::vector<Alarm> out;
        if (mode == DetectorMode::chi2) {
            const double z = quadratic_form(chi2.sigma_inv, r);
            if (chi2_step(chi2, r, k)) out.push_back(chi2.alarm_log.back());
            stat = {z};
        } else {
            out = cusum_step(cusum, r, k);
            stat.assign(cusum.c.data(), cusum.c.data() + cusum.c.size());
        }
        return out;
    }
};

/**
 * Closed loop over the horizon: the operator schedules pumps from its belief,
 * the true network runs, sensors are read, the attacker injects, the frame is
 * validated and estimated, the detector updates and the operator's belief
 * advances. Without a detector setup no detection runs (history runs).
 */
inline RunRecord run_loop(const NetworkModel& m, const ScenarioConfig& c, const TargetSet& targets, const DetectorSetup* det,
    bool attack, std::uint64_t seed, std::string* lp_dump = nullptr) {
    using namespace scn_detail;
    const auto& cfg = c.sensors;
    RunRecord rec;
    DetectorState ds(det);
    std::vector<double> drift;
    auto true_tanks = initial_tank_heads(m);
    auto believed = true_tanks;
    auto forecast = m.demands_gpm(0);
    std::vector<double> warm;
    const auto valves = default_controls(m).valve_status;
    auto kind = attack ? c.attack.kind : AttackKind::none;

    for (int k = 0; k < m.steps(); ++k) {
        StepRecord r;
        r.k = k;
        r.believed_tanks = believed;
        r.forecast = forecast;
        const auto plan = schedule_step(m, k, believed, to_cfs(forecast), c.op, lp_dump);
        r.speeds = plan.speeds;
        r.schedule_feasible = plan.feasible;
        r.lin_reference = plan.link_flows;

        StepControls ctl{plan.speeds, valves};
        auto res = solve_step(m, k, true_tanks, demands_cfs(m, k), ctl, {}, warm.empty() ? nullptr : &warm);
        warm = res.flows;
        r.truth = res.state;
        r.cost = state_cost(m, r.truth, c.op);
        true_tanks = r.truth.tank_heads_end;
        r.tank_volume = tank_volume(m, true_tanks);

        r.measured = measure(m, cfg, r.truth, seed, c.noiseless);
        const auto lin = local_linearization(m, r.lin_reference);
        const auto opts = system_options(m, r);
        const auto clean_sys = build_system(m, cfg, r.measured, lin, opts);
        if (rec.residual_names.empty())
            for (int s : clean_sys.meas_sensor) rec.residual_names.push_back(cfg.name(s));
        r.attack = zero_attack(targets, k);
        if (kind != AttackKind::none && targets.active(k)) {
            const auto clean_est = estimate(clean_sys);
            AttackContext ctx;
            ctx.model = &m;
            ctx.cfg = &cfg;
            ctx.targets = targets;
            ctx.bounds = c.attack.bounds;
            ctx.direction = c.attack.direction;
            ctx.pump_speeds = r.speeds;
            ctx.pwl_segments = c.attack.pwl_segments;
            ctx.reference_flows.assign(static_cast<std::size_t>(m.n_links()), 0.0);
            for (int l = 0; l < m.n_links(); ++l) {
                const int s = cfg.index(Channel::flow, m.link_id(l));
                ctx.reference_flows[static_cast<std::size_t>(l)] = s >= 0 ? r.measured.values[static_cast<std::size_t>(s)] : clean_est.x(l);
            }
            ctx.se = &clean_sys;
            ctx.estimate = &clean_est;
            ctx.guard_all_residuals = c.attack.guard_all_residuals;
            ctx.minimize = c.attack.minimize;
            if (det) {
                ctx.x_ref = det->x_ref;
                ctx.eps = det->eps;
                if (ds.mode == DetectorMode::chi2) ctx.detector.chi2 = &ds.chi2;
                else ctx.detector.cusum = &ds.cusum;
            }
            switch (kind) {
            case AttackKind::fs_fdi: r.attack = fs_fdi_step(ctx, r.measured, lp_dump); break;
            case AttackKind::ha_fdi: r.attack = ha_fdi_step(ctx, r.measured, lp_dump); break;
            case AttackKind::hu_fdi: r.attack = hu_fdi_optimized(ctx, r.measured, lp_dump); break;
            case AttackKind::hu_closed_form: {
                if (!det) break;
                ClosedFormParams p;
                p.sign = c.attack.sign;
                p.margin = 1e-9;
                if (ds.mode == DetectorMode::cusum) {
                    p.kind = DetectorKind::cusum_vectorized;
                    p.tau = ds.cusum.tau;
                    p.b = ds.cusum.b;
                    p.c = ds.cusum.c;
                } else if (ds.mode == DetectorMode::cusum_scalar) {
                    p.kind = DetectorKind::cusum_scalar;
                    p.tau_s = ds.cusum.tau(0);
                    p.b_s = ds.cusum.b(0);
                    p.c_s = ds.cusum.c(0);
                    p.sigma = det->sigma;
                } else {
                    p.kind = DetectorKind::chi2;
                    p.alpha = ds.chi2.alpha;
                    p.sigma = det->sigma;
                }
                r.attack = hu_closed_form_step(cfg, targets, clean_sys, clean_est, p, k);
                break;
            }
            case AttackKind::r_fdi: r.attack = r_fdi_step(c.attack.rfdi, r.measured, cfg, targets, k, drift); break;
            default: break;
            }
            if (!r.attack.note.empty()) rec.notes.push_back("k=" + std::to_string(k) + ": " + r.attack.note);
        }
        r.attacked = apply_attack(r.measured, targets, r.attack);
        r.validation = validate_frame(m, cfg, r.attacked, gpm_to_cfs(c.tol_mass_gpm), c.tol_energy_ft);

        auto sys = clean_sys;
        Eigen::VectorXd dy(cfg.size());
        for (int i = 0; i < cfg.size(); ++i)
            dy(i) = r.attacked.values[static_cast<std::size_t>(i)] - r.measured.values[static_cast<std::size_t>(i)];
        sys.z += sys.dz * dy;
        const auto est = estimate(sys);
        r.x = est.x;
        r.residuals = est.residuals;
        if (det) {
            const auto alarms = ds.step(est.residuals, k, r.statistic);
            r.alarms = static_cast<int>(alarms.size());
            rec.alarms.insert(rec.alarms.end(), alarms.begin(), alarms.end());
        }

        // Operator belief for the next step: tank levels advanced by the estimated inflows, demand forecasts.
        for (int t = 0; t < m.n_tanks(); ++t) {
            const auto& tk = m.tanks()[static_cast<std::size_t>(t)];
            const int n = m.tank_node(t);
            double inflow = 0.0;
            for (int l : m.incident(n)) inflow += m.direction(l, n) * gpm_to_cfs(est.x(l));
            const int s = cfg.index(Channel::level, tk.id);
            const double start = s >= 0 ? tk.elevation + r.attacked.values[static_cast<std::size_t>(s)] : believed[static_cast<std::size_t>(t)];
            believed[static_cast<std::size_t>(t)] = std::clamp(start + m.dt() / tk.area * inflow, tk.min_head(), tk.max_head());
        }
        forecast = forecast_next(m, cfg, r.attacked, k);

        rec.totals.step_cost.push_back(r.cost);
        rec.totals.tank_volume.push_back(r.tank_volume);
        rec.totals.alarms += r.alarms;
        rec.totals.validation_failures += r.validation.pass ? 0 : 1;
        rec.steps.push_back(std::move(r));
    }
    if (det && ds.mode != DetectorMode::chi2) {
        const auto tail = cusum_flush(ds.cusum, m.steps() - 1);
        rec.alarms.insert(rec.alarms.end(), tail.begin(), tail.end());
        rec.totals.alarms += static_cast<int>(tail.size());
    }
    return rec;
}

/// Seed of the attack-free history run used for calibration.
inline std::uint64_t history_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x68697374ULL); }

/// Calibrates the configured detector and the deviation bounds from an attack-free history run.
inline DetectorSetup calibrate_detector(const NetworkModel& m, const ScenarioConfig& c) {
    const auto hist = run_loop(m, c, TargetSet{}, nullptr, false, history_seed(c.seed));
    std::vector<Eigen::VectorXd> res;
    for (const auto& s : hist.steps) res.push_back(s.residuals);
    DetectorSetup d;
    d.mode = c.detector.mode;
    d.sigma = residual_covariance(res);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.sigma);
    d.sigma_inv = es.operatorInverseSqrt() * es.operatorInverseSqrt();
    if (d.mode == DetectorMode::cusum) {
        const auto cal = calibrate_cusum(res);
        d.tau = cal.tau;
        d.b = cal.b;
        d.degenerate = cal.degenerate;
    } else if (d.mode == DetectorMode::cusum_scalar) {
        const auto cal = calibrate_scalar_cusum(res, d.sigma_inv);
        d.tau_s = cal.tau(0);
        d.b_s = cal.b(0);
        d.degenerate = cal.degenerate;
    }
    d.alpha = calibrate_chi2(static_cast<int>(d.sigma.rows()), c.detector.gamma);
    const auto n = static_cast<std::size_t>(hist.steps.front().x.size());
    d.x_ref.assign(n, 0.0);
    d.eps.assign(n, 0.0);
    for (const auto& s : hist.steps)
        for (std::size_t i = 0; i < n; ++i) d.x_ref[i] += s.x(static_cast<Eigen::Index>(i)) / static_cast<double>(hist.steps.size());
    for (const auto& s : hist.steps)
        for (std::size_t i = 0; i < n; ++i) d.eps[i] = std::max(d.eps[i], 3.0 * std::abs(s.x(static_cast<Eigen::Index>(i)) - d.x_ref[i]));
    d.residual_names = hist.residual_names;
    return d;
}

struct ScenarioResult {
    NetworkModel model;
    TargetSet targets;
    DetectorSetup detector;
    RunRecord baseline, attacked;
    ImpactSummary impact;
};

/// Full scenario: dispatch check, calibration, baseline twin and attacked run.
inline ScenarioResult run_scenario(const ScenarioConfig& c, std::string* lp_dump = nullptr) {
    ScenarioResult out;
    out.model = scenario_network(c);
    const auto& m = out.model;
    c.sensors.check(m);
    out.targets = resolve_targets(c, m);
    const auto d = dispatch(c.attack.kind, c.attack.knowledge, m, c.sensors, out.targets);
    if (!d.accepted) {
        std::vector<std::vector<std::string>> names;
        for (const auto& g : d.suggestions) {
            names.emplace_back();
            for (int s : g) names.back().push_back(c.sensors.name(s));
        }
        throw DispatchError(d.message, names);
    }
    if (c.attack.kind == AttackKind::r_fdi) c.attack.rfdi.check();
    out.detector = calibrate_detector(m, c);
    out.baseline = run_loop(m, c, out.targets, &out.detector, false, c.seed);
    out.attacked = run_loop(m, c, out.targets, &out.detector, true, c.seed, lp_dump);
    out.impact = summarize_impact(out.baseline.totals, out.attacked.totals);
    return out;
}

// CSV export ----------------------------------------------------------------

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Wide per-step table of one run.
inline void write_run_csv(std::ostream& os, const NetworkModel& m, const ScenarioConfig& c, const DetectorSetup& det, const RunRecord& r) {
    const auto& cfg = c.sensors;
    os << "# wdn-run schema " << kRunSchemaVersion << "\n";
    os << "k";
    for (const auto& p : m.pumps()) os << ",ctl_speed:" << p.id;
    os << ",cost,schedule_feasible,valid,mass_max_gpm,energy_max_ft,alarms,tank_volume";
    for (int i = 0; i < cfg.size(); ++i) os << ",true_" << cfg.name(i);
    for (int i = 0; i < cfg.size(); ++i) os << ",meas_" << cfg.name(i);
    for (int i = 0; i < cfg.size(); ++i) os << ",atk_" << cfg.name(i);
    for (const auto& t : m.tanks()) os << ",bel_tank:" << t.id;
    for (const auto& j : m.junctions()) os << ",fc_demand:" << j.id;
    for (int l = 0; l < m.n_links(); ++l) os << ",lin_flow:" << m.link_id(l);
    for (int x = 0; x < m.n_links() + m.n_junctions(); ++x) os << ",est_" << state_name(m, x);
    for (const auto& n : det.residual_names) os << ",res_" << n;
    const std::size_t nstat = r.steps.empty() ? 0 : r.steps.front().statistic.size();
    for (std::size_t i = 0; i < nstat; ++i) os << ",stat_" << (nstat == det.residual_names.size() ? det.residual_names[i] : std::to_string(i));
    os << "\n";
    for (const auto& s : r.steps) {
        os << s.k;
        for (double v : s.speeds) os << ',' << fmt(v);
        os << ',' << fmt(s.cost) << ',' << s.schedule_feasible << ',' << s.validation.pass << ',' << fmt(cfs_to_gpm(s.validation.max_mass()))
           << ',' << fmt(s.validation.max_energy()) << ',' << s.alarms << ',' << fmt(s.tank_volume);
        for (int i = 0; i < cfg.size(); ++i) os << ',' << fmt(read_sensor(m, cfg, s.truth, i));
        for (double v : s.measured.values) os << ',' << fmt(v);
        for (double v : s.attacked.values) os << ',' << fmt(v);
        for (double v : s.believed_tanks) os << ',' << fmt(v);
        for (double v : s.forecast) os << ',' << fmt(v);
        for (double v : s.lin_reference) os << ',' << fmt(v);
        for (Eigen::Index i = 0; i < s.x.size(); ++i) os << ',' << fmt(s.x(i));
        for (Eigen::Index i = 0; i < s.residuals.size(); ++i) os << ',' << fmt(s.residuals(i));
        for (double v : s.statistic) os << ',' << fmt(v);
        os << "\n";
    }
}

inline void write_attack_csv(std::ostream& os, const ScenarioConfig& c, const TargetSet& t, const RunRecord& r) {
    os << "# wdn-attack schema " << kRunSchemaVersion << "\n";
    os << "k,sensor,kind,value,clipped\n";
    for (const auto& s : r.steps) {
        if (!t.active(s.k)) continue;
        for (std::size_t i = 0; i < t.sensors.size(); ++i)
            os << s.k << ',' << c.sensors.name(t.sensors[i]) << ',' << to_string(c.attack.kind) << ',' << fmt(s.attack.values[i]) << ','
               << int(s.attack.clipped[i]) << "\n";
    }
}

inline void write_alarm_csv(std::ostream& os, const DetectorSetup& d, const std::vector<Alarm>& alarms) {
    os << "# wdn-alarm schema " << kRunSchemaVersion << "\n";
    os << "k,sensor,statistic,threshold\n";
    for (const auto& a : alarms)
        os << a.k << ',' << (a.sensor < 0 ? std::string("global") : d.residual_names[static_cast<std::size_t>(a.sensor)]) << ',' << fmt(a.statistic)
           << ',' << fmt(a.threshold) << "\n";
}

inline void write_summary_csv(std::ostream& os, const ScenarioResult& r) {
    const auto& s = r.impact;
    os << "# wdn-summary schema " << kRunSchemaVersion << "\n";
    os << "metric,value\n";
    os << "baseline_cost," << fmt(s.baseline_cost) << "\n";
    os << "attacked_cost," << fmt(s.attacked_cost) << "\n";
    os << "cost_increase_pct," << fmt(s.cost_increase_pct) << "\n";
    os << "tank_volume_delta_ft3," << fmt(s.tank_volume_delta) << "\n";
    os << "max_drawdown_ft3," << fmt(s.max_drawdown) << "\n";
    os << "baseline_alarms," << s.baseline_alarms << "\n";
    os << "attacked_alarms," << s.attacked_alarms << "\n";
    os << "baseline_validation_failures," << s.baseline_validation_failures << "\n";
    os << "attacked_validation_failures," << s.attacked_validation_failures << "\n";
}

inline void write_calibration_csv(std::ostream& os, const DetectorSetup& d) {
    os << "# wdn-calibration schema " << kRunSchemaVersion << "\n";
    if (d.mode == DetectorMode::cusum) {
        os << "sensor,tau,b\n";
        for (std::size_t i = 0; i < d.residual_names.size(); ++i)
            os << d.residual_names[i] << ',' << fmt(d.tau(static_cast<Eigen::Index>(i))) << ',' << fmt(d.b(static_cast<Eigen::Index>(i))) << "\n";
    } else if (d.mode == DetectorMode::cusum_scalar) {
        os << "sensor,tau,b\nglobal," << fmt(d.tau_s) << ',' << fmt(d.b_s) << "\n";
    } else {
        os << "sensor,alpha,n_y\nglobal," << fmt(d.alpha) << ',' << d.sigma.rows() << "\n";
    }
}

/// Writes every CSV of a scenario under dir (baseline/, attacked/, summary.csv).
inline void write_outputs(const std::filesystem::path& dir, const ScenarioConfig& c, const ScenarioResult& r) {
    namespace fs = std::filesystem;
    for (const char* leg : {"baseline", "attacked"}) {
        const auto& run = std::string(leg) == "baseline" ? r.baseline : r.attacked;
        fs::create_directories(dir / leg);
        std::ofstream run_csv(dir / leg / "run.csv"), atk(dir / leg / "attack.csv"), al(dir / leg / "alarms.csv");
        write_run_csv(run_csv, r.model, c, r.detector, run);
        write_attack_csv(atk, c, r.targets, run);
        write_alarm_csv(al, r.detector, run.alarms);
    }
    std::ofstream sum(dir / "summary.csv"), cal(dir / "calibration.csv");
    write_summary_csv(sum, r);
    write_calibration_csv(cal, r.detector);
}

// Replay ----------------------------------------------------------------------

/// Columns of a run CSV by header name.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw Error("csv: missing column '" + name + "'");
    }
    double number(std::size_t row, const std::string& name) const {
        return std::stod(rows[row][static_cast<std::size_t>(column(name))]);
    }
};

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

inline CsvTable read_run_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line) || line != "# wdn-run schema " + std::to_string(kRunSchemaVersion))
        throw Error("csv: not a run table of schema " + std::to_string(kRunSchemaVersion));
    if (!std::getline(in, line)) throw Error("csv: missing header");
    t.header = split_csv(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split_csv(line));
    return t;
}

/// Re-runs estimation and detection over recorded attacked measurements.
inline std::vector<Alarm> replay_detection(const NetworkModel& m, const ScenarioConfig& c, const DetectorSetup& det, const CsvTable& t) {
    const auto& cfg = c.sensors;
    DetectorState ds(&det);
    std::vector<Alarm> out;
    for (std::size_t row = 0; row < t.rows.size(); ++row) {
        StepRecord r;
        r.k = static_cast<int>(t.number(row, "k"));
        for (const auto& p : m.pumps()) r.speeds.push_back(t.number(row, "ctl_speed:" + p.id));
        for (const auto& tk : m.tanks()) r.believed_tanks.push_back(t.number(row, "bel_tank:" + tk.id));
        for (const auto& j : m.junctions()) r.forecast.push_back(t.number(row, "fc_demand:" + j.id));
        for (int l = 0; l < m.n_links(); ++l) r.lin_reference.push_back(t.number(row, "lin_flow:" + m.link_id(l)));
        MeasurementFrame meas, atk;
        meas.k = atk.k = r.k;
        for (int i = 0; i < cfg.size(); ++i) {
            meas.values.push_back(t.number(row, "meas_" + cfg.name(i)));
            atk.values.push_back(t.number(row, "atk_" + cfg.name(i)));
            meas.sigma.push_back(cfg.sensor(i).sigma);
        }
        auto sys = build_system(m, cfg, meas, local_linearization(m, r.lin_reference), scn_detail::system_options(m, r));
        Eigen::VectorXd dy(cfg.size());
        for (int i = 0; i < cfg.size(); ++i) dy(i) = atk.values[static_cast<std::size_t>(i)] - meas.values[static_cast<std::size_t>(i)];
        sys.z += sys.dz * dy;
        std::vector<double> stat;
        const auto a = ds.step(estimate(sys).residuals, r.k, stat);
        out.insert(out.end(), a.begin(), a.end());
    }
    if (ds.mode != DetectorMode::chi2 && !t.rows.empty()) {
        const auto tail = cusum_flush(ds.cusum, static_cast<int>(t.number(t.rows.size() - 1, "k")));
        out.insert(out.end(), tail.begin(), tail.end());
    }
    return out;
}

// Detector comparison --------------------------------------------------------

struct ComparisonStep {
    int k = 0;
    double cusum = 0.0; // largest undetected |a| under vectorized CUSUM
    double chi2 = 0.0;  // largest undetected |a| under chi-squared
};

struct DetectorComparison {
    std::string sensor;
    std::vector<ComparisonStep> steps;
    double cusum_max = 0.0, chi2_max = 0.0;
};

/**
 * Largest manipulation of one sensor that raises no alarm, per step of the
 * attack window, under vectorized CUSUM and chi-squared detectors calibrated
 * on the same attack-free history. The CUSUM accumulators carry the largest
 * undetected injection forward from step to step.
 */
inline DetectorComparison compare_detectors(const ScenarioConfig& c) {
    const auto m = scenario_network(c);
    c.sensors.check(m);
    auto cfg_c = c;
    cfg_c.attack.kind = AttackKind::fs_fdi; // resolve targets even for a none fixture
    const auto t = resolve_targets(cfg_c, m);
    if (t.size() != 1) throw ConfigError("detector comparison needs exactly one target");
    const int sensor = t.sensors.front();
    auto cal_cfg = c;
    cal_cfg.detector.mode = DetectorMode::cusum;
    const auto det = calibrate_detector(m, cal_cfg);
    const auto run = run_loop(m, c, TargetSet{}, nullptr, false, c.seed);

    CusumDetector cusum = make_vectorized_cusum(det.tau, det.b);
    ChiSquaredDetector chi2;
    chi2.sigma_inv = det.sigma_inv;
    chi2.alpha = det.alpha;
    chi2.n_y = static_cast<int>(det.sigma.rows());

    DetectorComparison out;
    out.sensor = c.sensors.name(sensor);
    for (const auto& r : run.steps) {
        if (r.k > t.k_end) break;
        if (!t.active(r.k)) {
            cusum_step(cusum, r.residuals, r.k);
            continue;
        }
        const Eigen::VectorXd s = sensitivity(step_system(m, c.sensors, r)).residual.col(sensor);
        ComparisonStep cs;
        cs.k = r.k;
        const auto range = cusum_undetected_range(cusum, r.residuals, s);
        cs.cusum = largest_magnitude(range);
        cs.chi2 = largest_magnitude(chi2_undetected_range(chi2, r.residuals, s));
        double a = 0.0;
        if (range.first <= range.second) a = std::abs(range.first) > std::abs(range.second) ? range.first : range.second;
        cusum_step(cusum, r.residuals + s * a, r.k);
        out.cusum_max = std::max(out.cusum_max, cs.cusum);
        out.chi2_max = std::max(out.chi2_max, cs.chi2);
        out.steps.push_back(cs);
    }
    return out;
}

} // namespace wdn
