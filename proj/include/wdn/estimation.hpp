#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "measurement.hpp"

namespace wdn {

enum class RowKind { measurement, mass, energy };

/// Active chord per link used by the energy rows; pumps carry no curve.
struct Linearization {
    std::vector<PiecewiseCurve> curves; // per link, cfs -> ft
    std::vector<double> reference;      // per link flow (cfs) picking the segment

    Segment active(int l) const {
        const auto& c = curves[static_cast<std::size_t>(l)];
        return c.segments[c.segment_index(reference[static_cast<std::size_t>(l)])];
    }
};

inline PiecewiseCurve valve_curve(const Valve& v, double lo, double hi, int n) {
    const double mv = v.minor_loss;
    return linearize([mv](double q) { return mv * q * std::abs(q); }, lo, hi, n);
}

/// Equally spaced chords over +-10 ft/s for every pipe and valve.
inline Linearization global_linearization(const NetworkModel& m, const std::vector<double>& reference, int n_pw = 5) {
    Linearization lin;
    lin.reference = reference;
    for (int l = 0; l < m.n_links(); ++l) {
        if (m.link_kind(l) == LinkKind::pipe) {
            lin.curves.push_back(linearize_pipe(m.pipes()[static_cast<std::size_t>(l)], n_pw));
        } else if (m.link_kind(l) == LinkKind::valve) {
            const auto& v = m.valves()[static_cast<std::size_t>(m.valve_of(l))];
            const double d = v.diameter / 12.0, cap = 10.0 * std::numbers::pi * d * d / 4.0;
            lin.curves.push_back(valve_curve(v, -cap, cap, n_pw));
        } else {
            lin.curves.emplace_back();
        }
    }
    return lin;
}

/**
 * Two chords meeting at each reference flow, so the active segment is exact
 * at the reference and is the secant over [q - w, q].
 */
inline Linearization local_linearization(const NetworkModel& m, const std::vector<double>& reference, double rel_width = 0.05) {
    Linearization lin;
    lin.reference = reference;
    for (int l = 0; l < m.n_links(); ++l) {
        const double q = reference[static_cast<std::size_t>(l)];
        if (m.link_kind(l) == LinkKind::pump) {
            lin.curves.emplace_back();
            continue;
        }
        double w = std::max(rel_width * std::abs(q), 1e-3);
        if (m.link_kind(l) == LinkKind::pipe) {
            w = std::max(w, 1e-3 * pipe_flow_cap(m.pipes()[static_cast<std::size_t>(l)]));
            lin.curves.push_back(linearize_pipe(m.pipes()[static_cast<std::size_t>(l)], q - w, q + w, 2));
        } else {
            lin.curves.push_back(valve_curve(m.valves()[static_cast<std::size_t>(m.valve_of(l))], q - w, q + w, 2));
        }
    }
    return lin;
}

struct SystemOptions {
    std::vector<double> pump_speeds;     // empty: all pumps running
    std::vector<LinkStatus> valve_status; // empty: model status
    std::vector<double> demand_forecast; // GPM per junction for unmetered demands; empty: pattern demand
    std::vector<double> tank_heads;      // ft for tanks without a level sensor; empty: initial heads
};

/// Stacked WLS system over x = [q (GPM) per link; h (ft) per junction].
struct EstimationSystem {
    Eigen::MatrixXd H;
    Eigen::VectorXd z;
    std::vector<RowKind> row_kinds;
    std::vector<int> meas_sensor;   // sensor index of each measurement row
    std::vector<int> meas_column;   // state column of each measurement row
    Eigen::MatrixXd dz;             // d z / d y per sensor (rows x sensors)
    int n_links = 0, n_junctions = 0;

    int n_meas() const { return static_cast<int>(meas_sensor.size()); }
    int cols() const { return static_cast<int>(H.cols()); }
};

class ObservabilityError : public Error {
public:
    using Error::Error;
};

inline std::string state_name(const NetworkModel& m, int col) {
    return col < m.n_links() ? "q[" + m.link_id(col) + "]" : "h[" + m.node_id(col - m.n_links()) + "]";
}

inline void check_observable(const NetworkModel& m, const Eigen::MatrixXd& h) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
    lu.setThreshold(1e-10);
    if (lu.rank() == h.cols()) return;
    const Eigen::VectorXd w = lu.kernel().col(0);
    std::ostringstream msg;
    msg << "state not observable (rank " << lu.rank() << " of " << h.cols() << "); null-space witness:";
    for (Eigen::Index j = 0; j < w.size(); ++j)
        if (std::abs(w(j)) > 1e-8 * w.cwiseAbs().maxCoeff()) msg << ' ' << state_name(m, static_cast<int>(j));
    throw ObservabilityError(msg.str());
}

inline EstimationSystem build_system(const NetworkModel& m, const SensorConfig& cfg, const MeasurementFrame& f,
    const Linearization& lin, const SystemOptions& opt = {}, bool check_rank = true) {
    if (static_cast<int>(f.values.size()) != cfg.size()) throw Error("frame does not cover the sensor configuration");
    const int nl = m.n_links(), nj = m.n_junctions(), ns = cfg.size();
    EstimationSystem s;
    s.n_links = nl;
    s.n_junctions = nj;

    std::vector<int> metered_demand(static_cast<std::size_t>(nj), -1), metered_level(static_cast<std::size_t>(m.n_tanks()), -1);
    for (int i = 0; i < ns; ++i) {
        if (cfg.channel(i) == Channel::demand) metered_demand[static_cast<std::size_t>(m.junction(cfg.sensor(i).id))] = i;
        if (cfg.channel(i) == Channel::level) metered_level[static_cast<std::size_t>(m.tank(cfg.sensor(i).id))] = i;
    }
    auto running = [&](int l) {
        switch (m.link_kind(l)) {
        case LinkKind::pipe: return m.pipes()[static_cast<std::size_t>(l)].status == LinkStatus::open;
        case LinkKind::pump: return opt.pump_speeds.empty() || opt.pump_speeds[static_cast<std::size_t>(m.pump_of(l))] > 0.0;
        default: {
            const int v = m.valve_of(l);
            const auto st = opt.valve_status.empty() ? m.valves()[static_cast<std::size_t>(v)].status : opt.valve_status[static_cast<std::size_t>(v)];
            return st == LinkStatus::open;
        }
        }
    };

    struct Row {
        std::vector<std::pair<int, double>> a;
        double z;
        RowKind kind;
        std::vector<std::pair<int, double>> dz;
    };
    std::vector<Row> rows;
    for (int i = 0; i < ns; ++i) {
        const auto c = cfg.channel(i);
        if (c != Channel::flow && c != Channel::head) continue;
        const double w = 1.0 / f.sigma[static_cast<std::size_t>(i)];
        const int col = c == Channel::flow ? m.link(cfg.sensor(i).id) : nl + m.junction(cfg.sensor(i).id);
        rows.push_back({{{col, w}}, w * f.values[static_cast<std::size_t>(i)], RowKind::measurement, {{i, w}}});
        s.meas_sensor.push_back(i);
        s.meas_column.push_back(col);
    }
    for (int j = 0; j < nj; ++j) {
        Row r{{}, 0.0, RowKind::mass, {}};
        for (int l : m.incident(j)) r.a.emplace_back(l, static_cast<double>(m.direction(l, j)));
        const int md = metered_demand[static_cast<std::size_t>(j)];
        if (md >= 0) {
            r.z = f.values[static_cast<std::size_t>(md)];
            r.dz.emplace_back(md, 1.0);
        } else {
            r.z = opt.demand_forecast.empty() ? m.demand_at(j, f.k) : opt.demand_forecast[static_cast<std::size_t>(j)];
        }
        rows.push_back(std::move(r));
    }
    auto boundary = [&](int n, double sign, Row& r) {
        // Moves sign * h_n to the right-hand side for fixed-head nodes.
        if (n < nj) {
            r.a.emplace_back(nl + n, sign);
            return;
        }
        if (m.node_kind(n) == NodeKind::reservoir) {
            r.z -= sign * m.elevation(n);
            return;
        }
        const int t = m.tank_of(n);
        const int ml = metered_level[static_cast<std::size_t>(t)];
        if (ml >= 0) {
            r.z -= sign * (m.tanks()[static_cast<std::size_t>(t)].elevation + f.values[static_cast<std::size_t>(ml)]);
            r.dz.emplace_back(ml, -sign);
        } else {
            r.z -= sign * (opt.tank_heads.empty() ? m.tanks()[static_cast<std::size_t>(t)].elevation + m.tanks()[static_cast<std::size_t>(t)].init_level
                                                  : opt.tank_heads[static_cast<std::size_t>(t)]);
        }
    };
    for (int l = 0; l < nl; ++l) {
        if (!running(l)) {
            rows.push_back({{{l, 1.0}}, 0.0, RowKind::energy, {}});
            continue;
        }
        if (m.link_kind(l) == LinkKind::pump) continue;
        // h_from - h_to - slope q = intercept, with q in GPM.
        const Segment sg = lin.active(l);
        Row r{{{l, -sg.slope * kGpmToCfs}}, sg.intercept, RowKind::energy, {}};
        boundary(m.link_from(l), 1.0, r);
        boundary(m.link_to(l), -1.0, r);
        rows.push_back(std::move(r));
    }

    const auto nr = static_cast<Eigen::Index>(rows.size());
    s.H = Eigen::MatrixXd::Zero(nr, nl + nj);
    s.z = Eigen::VectorXd(nr);
    s.dz = Eigen::MatrixXd::Zero(nr, ns);
    for (Eigen::Index i = 0; i < nr; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (const auto& [c, v] : r.a) s.H(i, c) += v;
        for (const auto& [c, v] : r.dz) s.dz(i, c) += v;
        s.z(i) = r.z;
        s.row_kinds.push_back(r.kind);
    }
    if (check_rank) check_observable(m, s.H);
    return s;
}

struct Estimate {
    Eigen::VectorXd x;
    Eigen::VectorXd residuals; // y - H x per measurement row, raw units
    double condition_indicator = 0.0;
    std::vector<std::string> warnings;

    /// Estimated flow of link l in cfs.
    double flow(int l) const { return gpm_to_cfs(x(l)); }
};

/// Normal-equation WLS solve over the stacked system.
inline Estimate estimate(const EstimationSystem& s) {
    const Eigen::MatrixXd n = s.H.transpose() * s.H;
    const Eigen::LDLT<Eigen::MatrixXd> f(n);
    const Eigen::VectorXd d = f.vectorD();
    if (f.info() != Eigen::Success || d.minCoeff() <= 0.0) throw Error("singular normal matrix");
    Estimate e;
    e.x = f.solve(s.H.transpose() * s.z);
    e.condition_indicator = d.maxCoeff() / d.minCoeff();
    if (e.condition_indicator > 1e10) e.warnings.push_back("ill-conditioned normal matrix");
    e.residuals = Eigen::VectorXd(s.n_meas());
    for (int i = 0; i < s.n_meas(); ++i) {
        const double w = s.H(i, s.meas_column[static_cast<std::size_t>(i)]);
        e.residuals(i) = (s.z(i) - s.H.row(i).dot(e.x)) / w;
    }
    return e;
}

/// Linear maps of the estimate and the residuals with respect to the raw sensor readings.
struct Sensitivity {
    Eigen::MatrixXd state;    // d x / d y   (cols x sensors)
    Eigen::MatrixXd residual; // d r / d y   (n_meas x sensors)
};

inline Sensitivity sensitivity(const EstimationSystem& s) {
    const Eigen::MatrixXd n = s.H.transpose() * s.H;
    Sensitivity out;
    out.state = n.ldlt().solve(s.H.transpose() * s.dz);
    out.residual = Eigen::MatrixXd::Zero(s.n_meas(), s.dz.cols());
    for (int i = 0; i < s.n_meas(); ++i) {
        out.residual(i, s.meas_sensor[static_cast<std::size_t>(i)]) = 1.0;
        out.residual.row(i) -= out.state.row(s.meas_column[static_cast<std::size_t>(i)]);
    }
    return out;
}

} // namespace wdn
