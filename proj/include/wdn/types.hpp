#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wdn {

/// 1 GPM expressed in cubic feet per second.
inline constexpr double kGpmToCfs = 0.0022280093;
inline constexpr double kHazenExponent = 1.852;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double gpm_to_cfs(double q) { return q * kGpmToCfs; }
inline double cfs_to_gpm(double q) { return q / kGpmToCfs; }

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(int line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Raised when a hydraulic step or an operator problem has no feasible point.
class InfeasibleError : public Error {
public:
    InfeasibleError(int step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

enum class LinkStatus { open, closed };
enum class NodeKind { junction, tank, reservoir };
enum class LinkKind { pipe, pump, valve };

struct Junction {
    std::string id;
    double elevation = 0.0;   // ft
    double base_demand = 0.0; // GPM
    std::optional<std::string> pattern;
};

struct Reservoir {
    std::string id;
    double head = 0.0; // ft
};

struct Tank {
    std::string id;
    double elevation = 0.0;
    double init_level = 0.0;
    double min_level = 0.0;
    double max_level = 0.0;
    double area = 0.0; // ft^2

    double min_head() const { return elevation + min_level; }
    double max_head() const { return elevation + max_level; }
};

struct Pipe {
    std::string id, from, to;
    double length = 0.0;    // ft
    double diameter = 0.0;  // in
    double roughness = 0.0; // Hazen-Williams C
    double resistance = 0.0;
    double minor_loss = 0.0; // dimensionless K, kept for rendering only
    LinkStatus status = LinkStatus::open;
};

/// Pump with head gain s^2 (h0 - alpha (q/s)^nu), flows in cfs.
struct Pump {
    std::string id, from, to;
    double shutoff_head = 0.0;
    double alpha = 0.0;
    double nu = 2.0;
    double max_speed = 1.0;
    double init_speed = 1.0;
    LinkStatus status = LinkStatus::open;
    std::string curve_id;
    std::vector<std::pair<double, double>> curve; // (GPM, ft) as read
    /// Delta-h ~ b1 q^2 + b2 q - b3 s^2 - b4 with b1, b3 >= 0 (q in cfs).
    std::array<double, 4> quad_fit{};

    /// Flow at which the gain vanishes for speed s.
    double max_flow(double s) const { return s * std::pow(shutoff_head / alpha, 1.0 / nu); }
};

struct Valve {
    std::string id, from, to;
    std::string type = "TCV";
    double diameter = 12.0; // in
    double setting = 0.0;
    double minor_loss = 0.0; // ft/cfs^2
    LinkStatus status = LinkStatus::open;
};

struct SimulationClock {
    double duration = 24.0;         // h
    double hydraulic_step = 3600.0; // s
    double pattern_step = 3600.0;   // s

    int steps() const { return static_cast<int>(std::lround(duration * 3600.0 / hydraulic_step)); }
};

struct NetworkData {
    std::string title;
    std::vector<Junction> junctions;
    std::vector<Reservoir> reservoirs;
    std::vector<Tank> tanks;
    std::vector<Pipe> pipes;
    std::vector<Pump> pumps;
    std::vector<Valve> valves;
    std::map<std::string, std::vector<double>> patterns;
    SimulationClock time;
};

} // namespace wdn
