#pragma once

#include <cmath>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "components.hpp"
#include "types.hpp"

namespace wdn {

/**
 * Validated, immutable network. Nodes and links get dense indices:
 * junctions, then tanks, then reservoirs; pipes, then pumps, then valves.
 */
class NetworkModel {
public:
    NetworkModel() = default;

    explicit NetworkModel(NetworkData data, std::vector<std::string> warnings = {})
        : d_(std::move(data)), warnings_(std::move(warnings)) {
        index();
        validate();
    }

    const NetworkData& data() const { return d_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    const std::vector<Junction>& junctions() const { return d_.junctions; }
    const std::vector<Tank>& tanks() const { return d_.tanks; }
    const std::vector<Reservoir>& reservoirs() const { return d_.reservoirs; }
    const std::vector<Pipe>& pipes() const { return d_.pipes; }
    const std::vector<Pump>& pumps() const { return d_.pumps; }
    const std::vector<Valve>& valves() const { return d_.valves; }
    const SimulationClock& clock() const { return d_.time; }
    int steps() const { return d_.time.steps(); }
    double dt() const { return d_.time.hydraulic_step; }

    int n_junctions() const { return static_cast<int>(d_.junctions.size()); }
    int n_tanks() const { return static_cast<int>(d_.tanks.size()); }
    int n_reservoirs() const { return static_cast<int>(d_.reservoirs.size()); }
    int n_nodes() const { return n_junctions() + n_tanks() + n_reservoirs(); }
    int n_pipes() const { return static_cast<int>(d_.pipes.size()); }
    int n_pumps() const { return static_cast<int>(d_.pumps.size()); }
    int n_valves() const { return static_cast<int>(d_.valves.size()); }
    int n_links() const { return n_pipes() + n_pumps() + n_valves(); }

    NodeKind node_kind(int n) const {
        if (n < n_junctions()) return NodeKind::junction;
        if (n < n_junctions() + n_tanks()) return NodeKind::tank;
        return NodeKind::reservoir;
    }
    int tank_node(int t) const { return n_junctions() + t; }
    int reservoir_node(int r) const { return n_junctions() + n_tanks() + r; }
    int tank_of(int n) const { return n - n_junctions(); }
    int reservoir_of(int n) const { return n - n_junctions() - n_tanks(); }

    LinkKind link_kind(int l) const {
        if (l < n_pipes()) return LinkKind::pipe;
        if (l < n_pipes() + n_pumps()) return LinkKind::pump;
        return LinkKind::valve;
    }
    int pump_link(int m) const { return n_pipes() + m; }
    int valve_link(int v) const { return n_pipes() + n_pumps() + v; }
    int pump_of(int l) const { return l - n_pipes(); }
    int valve_of(int l) const { return l - n_pipes() - n_pumps(); }

    int link_from(int l) const { return ends_[static_cast<std::size_t>(l)].first; }
    int link_to(int l) const { return ends_[static_cast<std::size_t>(l)].second; }

    const std::string& node_id(int n) const { return node_ids_[static_cast<std::size_t>(n)]; }
    const std::string& link_id(int l) const { return link_ids_[static_cast<std::size_t>(l)]; }

    int node(const std::string& id) const {
        auto it = node_index_.find(id);
        if (it == node_index_.end()) throw Error("unknown node '" + id + "'");
        return it->second;
    }
    int link(const std::string& id) const {
        auto it = link_index_.find(id);
        if (it == link_index_.end()) throw Error("unknown link '" + id + "'");
        return it->second;
    }
    bool has_node(const std::string& id) const { return node_index_.count(id) != 0; }
    bool has_link(const std::string& id) const { return link_index_.count(id) != 0; }

    int junction(const std::string& id) const {
        const int n = node(id);
        if (node_kind(n) != NodeKind::junction) throw Error("'" + id + "' is not a junction");
        return n;
    }
    int tank(const std::string& id) const {
        const int n = node(id);
        if (node_kind(n) != NodeKind::tank) throw Error("'" + id + "' is not a tank");
        return tank_of(n);
    }

    /// Links incident to node n.
    const std::vector<int>& incident(int n) const { return incident_[static_cast<std::size_t>(n)]; }

    /// +1 when link l delivers into node n, -1 when it draws from it.
    int direction(int l, int n) const { return link_to(l) == n ? 1 : -1; }

    int other_end(int l, int n) const { return link_from(l) == n ? link_to(l) : link_from(l); }

    /// Pattern multiplier active at step k.
    double multiplier(const std::optional<std::string>& pattern, int k) const {
        if (!pattern) return 1.0;
        auto it = d_.patterns.find(*pattern);
        if (it == d_.patterns.end() || it->second.empty()) return 1.0;
        const auto& m = it->second;
        const auto p = static_cast<long>(std::floor(k * d_.time.hydraulic_step / d_.time.pattern_step + 1e-9));
        return m[static_cast<std::size_t>(p % static_cast<long>(m.size()))];
    }

    /// Demand of junction j at step k in GPM.
    double demand_at(int j, int k) const {
        const Junction& jn = d_.junctions[static_cast<std::size_t>(j)];
        if (jn.base_demand == 0.0) return 0.0;
        return jn.base_demand * multiplier(jn.pattern, k);
    }

    std::vector<double> demands_gpm(int k) const {
        std::vector<double> d(static_cast<std::size_t>(n_junctions()));
        for (int j = 0; j < n_junctions(); ++j) d[static_cast<std::size_t>(j)] = demand_at(j, k);
        return d;
    }

    double elevation(int n) const {
        switch (node_kind(n)) {
        case NodeKind::junction: return d_.junctions[static_cast<std::size_t>(n)].elevation;
        case NodeKind::tank: return d_.tanks[static_cast<std::size_t>(tank_of(n))].elevation;
        default: return d_.reservoirs[static_cast<std::size_t>(reservoir_of(n))].head;
        }
    }

    /// Connected components of the undirected graph restricted to links with keep(l) true.
    template <class Keep>
    std::vector<int> components(Keep keep) const {
        std::vector<int> comp(static_cast<std::size_t>(n_nodes()), -1);
        int c = 0;
        for (int s = 0; s < n_nodes(); ++s) {
            if (comp[static_cast<std::size_t>(s)] >= 0) continue;
            std::queue<int> q;
            q.push(s);
            comp[static_cast<std::size_t>(s)] = c;
            while (!q.empty()) {
                const int n = q.front();
                q.pop();
                for (int l : incident(n)) {
                    if (!keep(l)) continue;
                    const int m = other_end(l, n);
                    if (comp[static_cast<std::size_t>(m)] < 0) {
                        comp[static_cast<std::size_t>(m)] = c;
                        q.push(m);
                    }
                }
            }
            ++c;
        }
        return comp;
    }

private:
    void add_node(const std::string& id) {
        if (!node_index_.emplace(id, static_cast<int>(node_ids_.size())).second)
            throw Error("duplicate node id '" + id + "'");
        node_ids_.push_back(id);
    }

    void add_link(const std::string& id, const std::string& from, const std::string& to) {
        if (!link_index_.emplace(id, static_cast<int>(link_ids_.size())).second)
            throw Error("duplicate link id '" + id + "'");
        link_ids_.push_back(id);
        auto f = node_index_.find(from), t = node_index_.find(to);
        if (f == node_index_.end()) throw Error("link '" + id + "' references unknown node '" + from + "'");
        if (t == node_index_.end()) throw Error("link '" + id + "' references unknown node '" + to + "'");
        if (f->second == t->second) throw Error("link '" + id + "' connects node '" + from + "' to itself");
        ends_.emplace_back(f->second, t->second);
    }

    void index() {
        for (const auto& j : d_.junctions) add_node(j.id);
        for (const auto& t : d_.tanks) add_node(t.id);
        for (const auto& r : d_.reservoirs) add_node(r.id);
        for (const auto& p : d_.pipes) add_link(p.id, p.from, p.to);
        for (const auto& p : d_.pumps) add_link(p.id, p.from, p.to);
        for (const auto& v : d_.valves) add_link(v.id, v.from, v.to);
        incident_.assign(node_ids_.size(), {});
        for (int l = 0; l < n_links(); ++l) {
            incident_[static_cast<std::size_t>(link_from(l))].push_back(l);
            incident_[static_cast<std::size_t>(link_to(l))].push_back(l);
        }
    }

    void validate() const {
        if (d_.junctions.empty()) throw Error("network has no junctions");
        if (d_.tanks.empty() && d_.reservoirs.empty()) throw Error("network has no source node");
        for (const auto& j : d_.junctions) {
            if (j.base_demand < 0.0) throw Error("junction '" + j.id + "': negative base demand");
            if (j.pattern && !d_.patterns.count(*j.pattern))
                throw Error("junction '" + j.id + "': unknown pattern '" + *j.pattern + "'");
        }
        for (const auto& t : d_.tanks) {
            if (!(t.min_level <= t.init_level && t.init_level <= t.max_level))
                throw Error("tank '" + t.id + "': levels out of order");
            if (!(t.area > 0.0)) throw Error("tank '" + t.id + "': non-positive area");
        }
        for (const auto& p : d_.pipes) {
            if (!(p.length > 0.0 && p.diameter > 0.0)) throw Error("pipe '" + p.id + "': non-positive dimension");
            if (p.roughness < 1.0 || p.roughness > 200.0) throw Error("pipe '" + p.id + "': roughness out of range");
        }
        for (const auto& p : d_.pumps) {
            if (!(p.shutoff_head > 0.0 && p.alpha > 0.0 && p.nu > 0.0)) throw Error("pump '" + p.id + "': invalid curve");
            if (p.quad_fit[0] < 0.0 || p.quad_fit[2] < 0.0) throw Error("pump '" + p.id + "': non-convex fit");
        }
        for (const auto& v : d_.valves)
            if (v.minor_loss < 0.0) throw Error("valve '" + v.id + "': negative minor loss");
        if (!(d_.time.hydraulic_step > 0.0)) throw Error("hydraulic step must be positive");
        const double n = d_.time.duration * 3600.0 / d_.time.hydraulic_step;
        if (std::abs(n - std::round(n)) > 1e-9) throw Error("duration is not a multiple of the hydraulic step");
        const auto comp = components([](int) { return true; });
        for (int v = 0; v < n_nodes(); ++v)
            if (comp[static_cast<std::size_t>(v)] != 0) throw Error("network is disconnected at node '" + node_id(v) + "'");
    }

    NetworkData d_;
    std::vector<std::string> warnings_;
    std::vector<std::string> node_ids_, link_ids_;
    std::unordered_map<std::string, int> node_index_, link_index_;
    std::vector<std::pair<int, int>> ends_;
    std::vector<std::vector<int>> incident_;
};

} // namespace wdn
