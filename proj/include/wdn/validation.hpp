#pragma once

#include <string>
#include <vector>

#include "measurement.hpp"

namespace wdn {

struct BalanceResidual {
    std::string id;
    double residual = 0.0; // cfs for junctions, ft for links
};

struct ValidationReport {
    std::vector<BalanceResidual> mass;   // checked junctions
    std::vector<BalanceResidual> energy; // checked links
    std::vector<std::string> skipped_junctions;
    std::vector<std::string> skipped_links;
    double tol_mass = 0.0;   // cfs
    double tol_energy = 0.0; // ft
    bool pass = true;

    double max_mass() const {
        double v = 0.0;
        for (const auto& r : mass) v = std::max(v, std::abs(r.residual));
        return v;
    }
    double max_energy() const {
        double v = 0.0;
        for (const auto& r : energy) v = std::max(v, std::abs(r.residual));
        return v;
    }
};

inline constexpr double kDefaultTolMassGpm = 0.5;
inline constexpr double kDefaultTolEnergyFt = 1.0;

/**
 * Mass balance at junctions whose incident flows and demand are all known
 * from the frame, and head loss on metered pipes whose end heads are known.
 * Anything not fully metered is skipped, never inferred.
 */
inline ValidationReport validate_frame(const NetworkModel& m, const SensorConfig& cfg, const MeasurementFrame& f,
    double tol_mass = gpm_to_cfs(kDefaultTolMassGpm), double tol_energy = kDefaultTolEnergyFt,
    const std::vector<LinkStatus>& link_status = {}) {
    ValidationReport rep;
    rep.tol_mass = tol_mass;
    rep.tol_energy = tol_energy;
    auto closed = [&](int l) {
        if (!link_status.empty()) return link_status[static_cast<std::size_t>(l)] == LinkStatus::closed;
        if (m.link_kind(l) == LinkKind::pipe) return m.pipes()[static_cast<std::size_t>(l)].status == LinkStatus::closed;
        if (m.link_kind(l) == LinkKind::valve) return m.valves()[static_cast<std::size_t>(m.valve_of(l))].status == LinkStatus::closed;
        return false;
    };
    auto value = [&](Channel c, const std::string& id) -> std::optional<double> {
        const int i = cfg.index(c, id);
        if (i < 0) return std::nullopt;
        return f.values[static_cast<std::size_t>(i)];
    };
    auto head = [&](int n) -> std::optional<double> {
        if (n < m.n_junctions()) return value(Channel::head, m.node_id(n));
        if (m.node_kind(n) == NodeKind::reservoir) return m.elevation(n);
        const auto lv = value(Channel::level, m.node_id(n));
        if (!lv) return std::nullopt;
        return m.elevation(n) + *lv;
    };

    for (int j = 0; j < m.n_junctions(); ++j) {
        const auto& jn = m.junctions()[static_cast<std::size_t>(j)];
        double inflow = 0.0;
        bool known = true;
        for (int l : m.incident(j)) {
            if (closed(l)) continue;
            const auto q = value(Channel::flow, m.link_id(l));
            if (!q) {
                known = false;
                break;
            }
            inflow += m.direction(l, j) * *q;
        }
        std::optional<double> d = value(Channel::demand, jn.id);
        if (!d && jn.base_demand == 0.0) d = 0.0;
        if (!known || !d) {
            rep.skipped_junctions.push_back(jn.id);
            continue;
        }
        rep.mass.push_back({jn.id, gpm_to_cfs(inflow - *d)});
    }
    for (int l = 0; l < m.n_links(); ++l) {
        if (m.link_kind(l) != LinkKind::pipe || closed(l)) continue;
        const auto q = value(Channel::flow, m.link_id(l));
        const auto hi = head(m.link_from(l)), hj = head(m.link_to(l));
        if (!q || !hi || !hj) {
            rep.skipped_links.push_back(m.link_id(l));
            continue;
        }
        const double loss = pipe_headloss(m.pipes()[static_cast<std::size_t>(l)], gpm_to_cfs(*q));
        rep.energy.push_back({m.link_id(l), *hi - *hj - loss});
    }
    rep.pass = rep.max_mass() <= tol_mass && rep.max_energy() <= tol_energy;
    return rep;
}

} // namespace wdn
