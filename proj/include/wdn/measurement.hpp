#pragma once

#include <string>
#include <vector>

#include "hydraulics.hpp"
#include "rng.hpp"

namespace wdn {

enum class Channel { flow, head, demand, level };

inline const char* to_string(Channel c) {
    switch (c) {
    case Channel::flow: return "flow";
    case Channel::head: return "head";
    case Channel::demand: return "demand";
    default: return "level";
    }
}

struct SensorSpec {
    std::string id;
    double sigma = 0.05;
};

/// Sensor layout. Flows and demands are read in GPM, heads and tank levels in ft.
struct SensorConfig {
    std::vector<SensorSpec> flow_sensors;   // link ids
    std::vector<SensorSpec> head_sensors;   // junction ids
    std::vector<SensorSpec> demand_meters;  // junction ids
    std::vector<SensorSpec> level_sensors;  // tank ids

    int size() const {
        return static_cast<int>(flow_sensors.size() + head_sensors.size() + demand_meters.size() + level_sensors.size());
    }

    /// Channel of flattened index i (flows, heads, demands, levels).
    Channel channel(int i) const {
        auto n = static_cast<std::size_t>(i);
        if (n < flow_sensors.size()) return Channel::flow;
        n -= flow_sensors.size();
        if (n < head_sensors.size()) return Channel::head;
        n -= head_sensors.size();
        if (n < demand_meters.size()) return Channel::demand;
        return Channel::level;
    }

    const SensorSpec& sensor(int i) const {
        auto n = static_cast<std::size_t>(i);
        if (n < flow_sensors.size()) return flow_sensors[n];
        n -= flow_sensors.size();
        if (n < head_sensors.size()) return head_sensors[n];
        n -= head_sensors.size();
        if (n < demand_meters.size()) return demand_meters[n];
        return level_sensors[n - demand_meters.size()];
    }

    std::string name(int i) const { return std::string(to_string(channel(i))) + ":" + sensor(i).id; }

    int index(Channel c, const std::string& id) const {
        for (int i = 0; i < size(); ++i)
            if (channel(i) == c && sensor(i).id == id) return i;
        return -1;
    }

    int offset(Channel c) const {
        switch (c) {
        case Channel::flow: return 0;
        case Channel::head: return static_cast<int>(flow_sensors.size());
        case Channel::demand: return static_cast<int>(flow_sensors.size() + head_sensors.size());
        default: return static_cast<int>(flow_sensors.size() + head_sensors.size() + demand_meters.size());
        }
    }

    void check(const NetworkModel& m) const {
        for (const auto& s : flow_sensors) m.link(s.id);
        for (const auto& s : head_sensors) m.junction(s.id);
        for (const auto& s : demand_meters) m.junction(s.id);
        for (const auto& s : level_sensors) m.tank(s.id);
        for (int i = 0; i < size(); ++i)
            if (!(sensor(i).sigma > 0.0)) throw Error("sensor " + name(i) + ": sigma must be positive");
    }
};

struct MeasurementFrame {
    int k = 0;
    std::vector<double> values; // aligned with SensorConfig order
    std::vector<double> sigma;
};

/// Exact reading of sensor i on state s, in I/O units.
inline double read_sensor(const NetworkModel& m, const SensorConfig& cfg, const HydraulicState& s, int i) {
    const auto& id = cfg.sensor(i).id;
    switch (cfg.channel(i)) {
    case Channel::flow: return cfs_to_gpm(s.flow(m, m.link(id)));
    case Channel::head: return s.junction_heads[static_cast<std::size_t>(m.junction(id))];
    case Channel::demand: return cfs_to_gpm(s.demands[static_cast<std::size_t>(m.junction(id))]);
    default: {
        const int t = m.tank(id);
        return s.tank_heads[static_cast<std::size_t>(t)] - m.tanks()[static_cast<std::size_t>(t)].elevation;
    }
    }
}

/// Samples every configured sensor; Gaussian noise drawn from the per-sensor stream at counter k.
inline MeasurementFrame measure(const NetworkModel& m, const SensorConfig& cfg, const HydraulicState& s,
    std::uint64_t seed, bool noiseless = false) {
    MeasurementFrame f;
    f.k = s.k;
    for (int i = 0; i < cfg.size(); ++i) {
        double v = read_sensor(m, cfg, s, i);
        const double sd = cfg.sensor(i).sigma;
        if (!noiseless) v += sd * Stream(seed, cfg.name(i), "noise").normal(static_cast<std::uint64_t>(s.k));
        f.values.push_back(v);
        f.sigma.push_back(sd);
    }
    return f;
}

} // namespace wdn
