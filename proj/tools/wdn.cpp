#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "wdn/scenario.hpp"

using namespace wdn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitUsage = 64;

std::filesystem::path output_dir(const ScenarioConfig& c, const std::string& flag) {
    if (!flag.empty()) return flag;
    if (!c.output_dir.empty()) return c.output_dir;
    if (const char* env = std::getenv("WDN_OUTPUT_DIR")) return std::filesystem::path(env) / c.name;
    return std::filesystem::path("out") / c.name;
}

void write_lp_dump(const std::string& path, const std::string& text) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw Error("cannot write LP dump '" + path + "'");
    out << text;
}

/// Per-step hydraulic state of the attack-free closed loop.
void print_simulation(std::ostream& os, const NetworkModel& m, const RunRecord& r) {
    os << "# wdn-simulate schema " << kRunSchemaVersion << "\n";
    os << "k";
    for (const auto& p : m.pumps()) os << ",speed:" << p.id;
    for (int l = 0; l < m.n_links(); ++l) os << ",flow_gpm:" << m.link_id(l);
    for (const auto& j : m.junctions()) os << ",head_ft:" << j.id;
    for (const auto& t : m.tanks()) os << ",tank_head_ft:" << t.id;
    os << ",cost\n";
    for (const auto& s : r.steps) {
        os << s.k;
        for (double v : s.speeds) os << ',' << fmt(v);
        for (double q : s.truth.link_flows(m)) os << ',' << fmt(cfs_to_gpm(q));
        for (double h : s.truth.junction_heads) os << ',' << fmt(h);
        for (double h : s.truth.tank_heads) os << ',' << fmt(h);
        os << ',' << fmt(s.cost) << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Water distribution network attack and detection toolkit"};
    app.require_subcommand(1);
    std::string config, out_dir, lp_dump, run_path;
    app.add_option("--lp-dump", lp_dump, "Write every optimization program solved to this file");

    auto* simulate = app.add_subcommand("simulate", "Run the attack-free closed loop and print the hydraulic states");
    auto* attack = app.add_subcommand("attack", "Run the attacked leg and print the injected values");
    auto* detect = app.add_subcommand("detect", "Replay detection over a recorded run table and print the alarms");
    auto* schedule = app.add_subcommand("schedule", "Schedule the pumps against the pattern demands");
    auto* assess = app.add_subcommand("assess", "Run baseline and attacked legs, write all tables, print the summary");
    auto* calibrate = app.add_subcommand("calibrate", "Calibrate the detector from an attack-free run");
    for (auto* sub : {simulate, attack, detect, schedule, assess, calibrate})
        sub->add_option("--config", config, "Scenario file")->required()->check(CLI::ExistingFile);
    detect->add_option("--run", run_path, "Run table written by assess")->required()->check(CLI::ExistingFile);
    assess->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        const auto c = load_scenario(config);
        std::string dump;
        std::string* dump_ptr = lp_dump.empty() ? nullptr : &dump;
        int code = kExitOk;

        if (*simulate) {
            const auto m = scenario_network(c);
            c.sensors.check(m);
            print_simulation(std::cout, m, run_loop(m, c, TargetSet{}, nullptr, false, c.seed, dump_ptr));
        } else if (*schedule) {
            const auto m = scenario_network(c);
            std::vector<std::vector<double>> demands;
            for (int k = 0; k < m.steps(); ++k) demands.push_back(demands_cfs(m, k));
            const auto r = schedule_pumps(m, demands, c.op);
            std::cout << "# wdn-schedule schema " << kRunSchemaVersion << "\nk";
            for (const auto& p : m.pumps()) std::cout << ",speed:" << p.id;
            std::cout << ",cost,feasible\n";
            for (const auto& s : r.steps) {
                std::cout << s.k;
                for (double v : s.speeds) std::cout << ',' << fmt(v);
                std::cout << ',' << fmt(s.cost) << ',' << s.feasible << "\n";
            }
            std::cout << "total," << fmt(r.total_cost) << "\n";
            if (!r.feasible) code = kExitInfeasible;
        } else if (*calibrate) {
            const auto m = scenario_network(c);
            c.sensors.check(m);
            write_calibration_csv(std::cout, calibrate_detector(m, c));
        } else if (*attack) {
            const auto r = run_scenario(c, dump_ptr);
            write_attack_csv(std::cout, c, r.targets, r.attacked);
            for (const auto& n : r.attacked.notes) std::cerr << n << "\n";
            if (r.impact.attacked_validation_failures > 0) code = kExitValidation;
        } else if (*detect) {
            const auto m = scenario_network(c);
            c.sensors.check(m);
            const auto det = calibrate_detector(m, c);
            std::ifstream in(run_path);
            const auto table = read_run_csv(in);
            write_alarm_csv(std::cout, det, replay_detection(m, c, det, table));
        } else if (*assess) {
            const auto r = run_scenario(c, dump_ptr);
            const auto dir = output_dir(c, out_dir);
            write_outputs(dir, c, r);
            write_summary_csv(std::cout, r);
            for (const auto& n : r.attacked.notes) std::cerr << n << "\n";
            std::cerr << "tables written to " << dir.string() << "\n";
            if (r.impact.attacked_validation_failures > 0) code = kExitValidation;
        }
        write_lp_dump(lp_dump, dump);
        return code;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DispatchError& e) {
        std::cerr << "attack rejected: " << e.what() << "\n";
        for (const auto& g : e.suggestions()) {
            std::cerr << "  try:";
            for (const auto& s : g) std::cerr << ' ' << s;
            std::cerr << "\n";
        }
        return kExitInfeasible;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
