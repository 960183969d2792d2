#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "network.hpp"

namespace wdn {

namespace inp_detail {

inline std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline double number(const std::string& s, int line) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    if (!s.empty() && s[0] == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ParseError(line, "expected a number, got '" + s + "'");
    return v;
}

/// "24:00", "1:30:00", "3600 SEC", "2 HOURS" or a bare number of hours, in seconds.
inline double duration(const std::vector<std::string>& t, std::size_t at, int line) {
    if (at >= t.size()) throw ParseError(line, "missing time value");
    const std::string& v = t[at];
    if (v.find(':') != std::string::npos) {
        double total = 0.0, scale = 3600.0;
        std::size_t start = 0;
        while (start <= v.size()) {
            const auto end = v.find(':', start);
            const std::string part = v.substr(start, end == std::string::npos ? std::string::npos : end - start);
            total += number(part, line) * scale;
            scale /= 60.0;
            if (end == std::string::npos) break;
            start = end + 1;
        }
        return total;
    }
    const double x = number(v, line);
    const std::string u = at + 1 < t.size() ? upper(t[at + 1]) : "HOURS";
    if (u.rfind("SEC", 0) == 0) return x;
    if (u.rfind("MIN", 0) == 0) return x * 60.0;
    if (u.rfind("DAY", 0) == 0) return x * 86400.0;
    return x * 3600.0;
}

} // namespace inp_detail

/// Parses the supported INP subset; flows in the file are GPM (or CFS when declared).
inline NetworkModel parse_inp(const std::string& text) {
    using namespace inp_detail;
    NetworkData d;
    std::vector<std::string> warnings;
    std::set<std::string> seen, warned;
    std::map<std::string, std::vector<std::pair<double, double>>> curves;
    std::vector<std::pair<int, std::vector<std::string>>> pump_lines, status_lines;
    std::map<std::string, std::vector<std::pair<double, std::optional<std::string>>>> demand_lines;
    std::optional<std::string> default_pattern;
    double flow_unit = kGpmToCfs;

    std::istringstream in(text);
    std::string raw, section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto semi = raw.find(';');
        std::string s = semi == std::string::npos ? raw : raw.substr(0, semi);
        auto t = split(s);
        if (t.empty()) continue;
        if (t[0].front() == '[') {
            section = upper(t[0]);
            if (section.back() != ']') throw ParseError(line, "malformed section header '" + t[0] + "'");
            seen.insert(section);
            static const std::set<std::string> known = {"[TITLE]", "[JUNCTIONS]", "[RESERVOIRS]", "[TANKS]",
                "[PIPES]", "[PUMPS]", "[VALVES]", "[DEMANDS]", "[PATTERNS]", "[CURVES]", "[TIMES]", "[STATUS]",
                "[OPTIONS]", "[END]"};
            if (!known.count(section) && warned.insert(section).second)
                warnings.push_back("skipped section " + section);
            if (section == "[END]") break;
            continue;
        }
        auto need = [&](std::size_t n) {
            if (t.size() < n) throw ParseError(line, "expected at least " + std::to_string(n) + " fields in " + section);
        };
        if (section.empty()) throw ParseError(line, "data before any section header");
        if (section == "[TITLE]") {
            if (!d.title.empty()) d.title += '\n';
            d.title += s.substr(s.find_first_not_of(" \t"));
        } else if (section == "[JUNCTIONS]") {
            need(2);
            Junction j{t[0], number(t[1], line), t.size() > 2 ? number(t[2], line) : 0.0, std::nullopt};
            if (t.size() > 3) j.pattern = t[3];
            d.junctions.push_back(j);
        } else if (section == "[RESERVOIRS]") {
            need(2);
            if (t.size() > 2) warnings.push_back("reservoir " + t[0] + ": head pattern ignored");
            d.reservoirs.push_back({t[0], number(t[1], line)});
        } else if (section == "[TANKS]") {
            need(6);
            const double diam = number(t[5], line);
            d.tanks.push_back({t[0], number(t[1], line), number(t[2], line), number(t[3], line), number(t[4], line),
                std::numbers::pi * diam * diam / 4.0});
            if (t.size() > 7) warnings.push_back("tank " + t[0] + ": volume curve ignored");
        } else if (section == "[PIPES]") {
            need(6);
            Pipe p{t[0], t[1], t[2], number(t[3], line), number(t[4], line), number(t[5], line)};
            if (t.size() > 6) p.minor_loss = number(t[6], line);
            if (t.size() > 7) {
                const auto st = upper(t[7]);
                if (st == "CLOSED") p.status = LinkStatus::closed;
                else if (st == "CV") warnings.push_back("pipe " + p.id + ": check valve treated as open pipe");
                else if (st != "OPEN") throw ParseError(line, "unknown pipe status '" + t[7] + "'");
            }
            if (p.length <= 0.0 || p.diameter <= 0.0) throw ParseError(line, "pipe '" + p.id + "' has non-positive size");
            if (p.roughness <= 0.0) throw ParseError(line, "pipe '" + p.id + "' has non-positive roughness");
            p.resistance = pipe_resistance(p.length, p.roughness, p.diameter / 12.0);
            d.pipes.push_back(p);
        } else if (section == "[PUMPS]") {
            need(5);
            pump_lines.emplace_back(line, t);
        } else if (section == "[VALVES]") {
            need(6);
            Valve v{t[0], t[1], t[2], upper(t[4]), number(t[3], line), number(t[5], line)};
            const double k = t.size() > 6 ? number(t[6], line) : 0.0;
            v.minor_loss = minor_loss_coeff(k, v.diameter);
            if (v.type != "TCV") warnings.push_back("valve " + v.id + ": " + v.type + " modeled as on-off element");
            d.valves.push_back(v);
        } else if (section == "[DEMANDS]") {
            need(2);
            std::optional<std::string> pat;
            if (t.size() > 2) pat = t[2];
            demand_lines[t[0]].emplace_back(number(t[1], line), pat);
        } else if (section == "[PATTERNS]") {
            need(2);
            auto& m = d.patterns[t[0]];
            for (std::size_t i = 1; i < t.size(); ++i) m.push_back(number(t[i], line));
        } else if (section == "[CURVES]") {
            need(3);
            curves[t[0]].emplace_back(number(t[1], line), number(t[2], line));
        } else if (section == "[STATUS]") {
            need(2);
            status_lines.emplace_back(line, t);
        } else if (section == "[TIMES]") {
            const auto key = upper(t[0]);
            const auto key2 = t.size() > 1 ? upper(t[1]) : std::string();
            if (key == "DURATION") d.time.duration = duration(t, 1, line) / 3600.0;
            else if (key == "HYDRAULIC" && key2 == "TIMESTEP") d.time.hydraulic_step = duration(t, 2, line);
            else if (key == "PATTERN" && key2 == "TIMESTEP") d.time.pattern_step = duration(t, 2, line);
        } else if (section == "[OPTIONS]") {
            const auto key = upper(t[0]);
            if (key == "UNITS") {
                need(2);
                const auto u = upper(t[1]);
                if (u == "GPM") flow_unit = kGpmToCfs;
                else if (u == "CFS") flow_unit = 1.0;
                else throw ParseError(line, "unsupported flow units '" + t[1] + "'");
            } else if (key == "PATTERN") {
                need(2);
                default_pattern = t[1];
            } else if (key == "HEADLOSS" && t.size() > 1 && upper(t[1]) != "H-W") {
                throw ParseError(line, "only Hazen-Williams headloss is supported");
            }
        }
    }

    if (!seen.count("[JUNCTIONS]")) throw Error("missing [JUNCTIONS] section");
    if (!seen.count("[PIPES]")) throw Error("missing [PIPES] section");
    if (d.reservoirs.empty() && d.tanks.empty()) throw Error("no source node: need [RESERVOIRS] or [TANKS]");

    // Flows read in CFS files are stored as GPM so Junction::base_demand keeps one unit.
    const double to_gpm = flow_unit / kGpmToCfs;
    for (auto& j : d.junctions) {
        auto it = demand_lines.find(j.id);
        if (it != demand_lines.end()) {
            j.base_demand = it->second.front().first;
            j.pattern = it->second.front().second;
            if (it->second.size() > 1) warnings.push_back("junction " + j.id + ": extra demand categories ignored");
        }
        j.base_demand *= to_gpm;
        if (!j.pattern && default_pattern && d.patterns.count(*default_pattern)) j.pattern = default_pattern;
    }
    for (auto& [id, _] : demand_lines)
        if (std::none_of(d.junctions.begin(), d.junctions.end(), [&](const Junction& j) { return j.id == id; }))
            throw Error("demand references unknown junction '" + id + "'");

    for (auto& [ln, t] : pump_lines) {
        Pump p;
        p.id = t[0];
        p.from = t[1];
        p.to = t[2];
        for (std::size_t i = 3; i + 1 < t.size(); i += 2) {
            const auto key = upper(t[i]);
            if (key == "HEAD") p.curve_id = t[i + 1];
            else if (key == "SPEED") p.init_speed = number(t[i + 1], ln);
            else if (key == "POWER") throw ParseError(ln, "constant-power pumps are not supported");
            else warnings.push_back("pump " + p.id + ": keyword " + key + " ignored");
        }
        auto c = curves.find(p.curve_id);
        if (c == curves.end()) throw ParseError(ln, "pump '" + p.id + "' references unknown curve '" + p.curve_id + "'");
        p.curve = c->second;
        auto pts = p.curve;
        for (auto& pt : pts) pt.first *= flow_unit;
        for (auto& pt : p.curve) pt.first *= to_gpm;
        set_pump_curve(p, pts);
        p.max_speed = std::max(1.0, p.init_speed);
        d.pumps.push_back(p);
    }

    for (auto& [ln, t] : status_lines) {
        const auto v = upper(t[1]);
        auto set = [&](LinkStatus& st) {
            if (v == "OPEN") st = LinkStatus::open;
            else if (v == "CLOSED") st = LinkStatus::closed;
            else throw ParseError(ln, "unsupported status '" + t[1] + "'");
        };
        bool found = false;
        for (auto& p : d.pipes) if (p.id == t[0]) { set(p.status); found = true; }
        for (auto& v2 : d.valves) if (v2.id == t[0]) { set(v2.status); found = true; }
        for (auto& p : d.pumps) {
            if (p.id != t[0]) continue;
            found = true;
            if (v == "OPEN" || v == "CLOSED") set(p.status);
            else p.init_speed = number(t[1], ln);
        }
        if (!found) throw ParseError(ln, "status references unknown link '" + t[0] + "'");
    }

    return NetworkModel(std::move(d), std::move(warnings));
}

inline NetworkModel load_inp(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_inp(ss.str());
}

/// Debugging serializer for the supported subset; parse_inp(render_inp(m)) reproduces m.
inline std::string render_inp(const NetworkModel& m) {
    std::ostringstream o;
    o.precision(17);
    const auto& d = m.data();
    auto status = [](LinkStatus s) { return s == LinkStatus::open ? "Open" : "Closed"; };
    if (!d.title.empty()) o << "[TITLE]\n" << d.title << "\n\n";
    o << "[JUNCTIONS]\n";
    for (const auto& j : d.junctions) o << j.id << ' ' << j.elevation << ' ' << j.base_demand << ' ' << j.pattern.value_or("") << '\n';
    o << "\n[RESERVOIRS]\n";
    for (const auto& r : d.reservoirs) o << r.id << ' ' << r.head << '\n';
    o << "\n[TANKS]\n";
    for (const auto& t : d.tanks)
        o << t.id << ' ' << t.elevation << ' ' << t.init_level << ' ' << t.min_level << ' ' << t.max_level << ' '
          << std::sqrt(4.0 * t.area / std::numbers::pi) << '\n';
    o << "\n[PIPES]\n";
    for (const auto& p : d.pipes)
        o << p.id << ' ' << p.from << ' ' << p.to << ' ' << p.length << ' ' << p.diameter << ' ' << p.roughness << ' '
          << p.minor_loss << ' ' << status(p.status) << '\n';
    o << "\n[PUMPS]\n";
    for (const auto& p : d.pumps) o << p.id << ' ' << p.from << ' ' << p.to << " HEAD " << p.curve_id << " SPEED " << p.init_speed << '\n';
    o << "\n[VALVES]\n";
    for (const auto& v : d.valves) {
        const double dft = v.diameter / 12.0;
        o << v.id << ' ' << v.from << ' ' << v.to << ' ' << v.diameter << ' ' << v.type << ' ' << v.setting << ' '
          << v.minor_loss * dft * dft * dft * dft / 0.02517 << '\n';
    }
    o << "\n[STATUS]\n";
    for (const auto& p : d.pumps) o << p.id << ' ' << status(p.status) << '\n';
    for (const auto& v : d.valves) o << v.id << ' ' << status(v.status) << '\n';
    o << "\n[PATTERNS]\n";
    for (const auto& [id, mult] : d.patterns) {
        o << id;
        for (double x : mult) o << ' ' << x;
        o << '\n';
    }
    o << "\n[CURVES]\n";
    std::set<std::string> done;
    for (const auto& p : d.pumps)
        if (done.insert(p.curve_id).second)
            for (const auto& [q, h] : p.curve) o << p.curve_id << ' ' << q << ' ' << h << '\n';
    o << "\n[TIMES]\nDuration " << d.time.duration << " HOURS\nHydraulic Timestep " << d.time.hydraulic_step
      << " SEC\nPattern Timestep " << d.time.pattern_step << " SEC\n";
    o << "\n[OPTIONS]\nUnits GPM\n\n[END]\n";
    return o.str();
}

} // namespace wdn
