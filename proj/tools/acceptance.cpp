// Acceptance checks: one PASS/FAIL line per criterion.
// Exit status is 0 when every criterion passes, or when only the criteria named
// with --known-red fail; any other failure gives 1.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include "oracles.hpp"
#include "wdn/scenario.hpp"

using namespace wdn;

namespace {

const std::string kData = WDN_DATA_DIR;

struct Verdict {
    bool pass = false;
    std::string detail;
};

ScenarioConfig fixture(const std::string& name) { return load_scenario(kData + "/scenarios/" + name); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::vector<int> target_rows(const RunRecord& r, const ScenarioConfig& c) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < r.residual_names.size(); ++i)
        for (const auto& t : c.attack.targets)
            if (r.residual_names[i] == t) rows.push_back(static_cast<int>(i));
    return rows;
}

Verdict conservation() {
    double mass = 0.0, energy = 0.0, worst_secs = 0.0;
    for (const char* net : {"Net1.inp", "Net3.inp"}) {
        const auto m = load_inp(kData + "/networks/" + net);
        auto ctl = default_controls(m);
        for (auto& s : ctl.pump_speeds) s = 1.0;
        const auto t0 = std::chrono::steady_clock::now();
        const auto out = simulate(m, constant_schedule(m, ctl));
        worst_secs = std::max(worst_secs, seconds_since(t0));
        if (static_cast<int>(out.size()) != m.steps()) return {false, std::string(net) + " horizon cut short"};
        for (const auto& s : out) {
            mass = std::max(mass, max_mass_residual(m, s));
            energy = std::max(energy, max_energy_residual(m, s));
        }
    }
    // Closed-loop states under the operator schedule as well.
    for (const char* name : {"net1_none.toml", "net3_fsfdi.toml"}) {
        const auto r = run_scenario(fixture(name));
        for (const auto* run : {&r.baseline, &r.attacked})
            for (const auto& s : run->steps) {
                mass = std::max(mass, max_mass_residual(r.model, s.truth));
                energy = std::max(energy, max_energy_residual(r.model, s.truth));
            }
    }
    return {mass <= 1e-6 && energy <= 1e-4 && worst_secs < 10.0,
        "mass " + num(mass) + " cfs, energy " + num(energy) + " ft, 24 h simulate " + num(worst_secs) + " s"};
}

Verdict hu_closed_form_stealth() {
    const auto c = fixture("net1_hu_closed.toml");
    const auto r = run_scenario(c);
    const auto rows = target_rows(r.attacked, c);
    if (rows.empty()) return {false, "no targeted residual rows"};
    int targeted_alarms = 0, attacked_steps = 0;
    double drift = 0.0;
    const std::vector<double>* first = nullptr;
    for (const auto& s : r.attacked.steps) {
        if (!r.targets.active(s.k)) continue;
        if (!s.attack.zero()) ++attacked_steps;
        if (!first) {
            first = &s.statistic;
            continue;
        }
        for (int row : rows) drift = std::max(drift, std::abs(s.statistic[static_cast<std::size_t>(row)] - (*first)[static_cast<std::size_t>(row)]));
    }
    for (const auto& a : r.attacked.alarms)
        if (r.targets.active(a.k) && std::find(rows.begin(), rows.end(), a.sensor) != rows.end()) ++targeted_alarms;
    const int window = r.targets.k_end - r.targets.k_start + 1;
    return {targeted_alarms == 0 && drift <= 1e-10 && attacked_steps == window,
        std::to_string(targeted_alarms) + " targeted alarms, accumulator drift " + num(drift) + ", " + std::to_string(attacked_steps) + "/" +
            std::to_string(window) + " steps attacked"};
}

Verdict chi2_threshold_riding() {
    const auto c = fixture("net1_detectors.toml");
    const auto r = run_scenario(c);
    const auto& det = r.detector;
    ClosedFormParams p;
    p.kind = DetectorKind::chi2;
    p.alpha = det.alpha;
    p.sigma = det.sigma;
    p.margin = 1e-9;
    const auto rows = target_rows(r.baseline, c);
    double worst = 0.0;
    int steps = 0;
    for (const auto& s : r.baseline.steps) {
        if (!r.targets.active(s.k)) continue;
        const auto a = hu_fdi_closed_form(p, s.residuals, s.k, r.targets.k_start, rows);
        if (!a) return {false, "no closed-form attack at k " + std::to_string(s.k)};
        worst = std::max(worst, std::abs(quadratic_form(det.sigma_inv, s.residuals + *a) - det.alpha));
        ++steps;
    }
    return {steps > 0 && worst < 1e-8, "max |z - alpha| " + num(worst) + " over " + std::to_string(steps) + " steps"};
}

Verdict physics_stealth() {
    std::ostringstream os;
    bool ok = true;
    for (const char* name : {"net1_fsfdi.toml", "net1_hafdi.toml", "net3_fsfdi.toml", "net1_hufdi.toml"}) {
        const auto c = fixture(name);
        const auto r = run_scenario(c);
        int attacked = 0, failed = 0;
        for (const auto& s : r.attacked.steps) {
            if (s.attack.zero()) continue;
            ++attacked;
            if (!s.validation.pass) ++failed;
        }
        const bool hu = c.attack.kind == AttackKind::hu_fdi;
        const double pct = attacked ? 100.0 * (hu ? failed : attacked - failed) / attacked : 0.0;
        ok = ok && attacked > 0 && (hu ? pct >= 90.0 : failed == 0);
        os << c.name << (hu ? " fail " : " pass ") << num(pct) << "% of " << attacked << "; ";
    }
    return {ok, os.str()};
}

Verdict toy_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    oracle::Toy toy;
    const TargetSet t{{0, 1, 2, 3}, 0, 0};
    double worst = 0.0;
    for (double alpha : {0.02, 0.05, 0.1}) {
        const auto ctx = toy.context(t, alpha);
        const auto a = fs_fdi_step(ctx, toy.f);
        if (!a.feasible) return {false, "attack program infeasible: " + a.note};
        const double grid = oracle::toy_grid_search(toy, attack_caps(toy.cfg, t, toy.f, ctx.bounds), ctx.detector_margin);
        worst = std::max(worst, std::abs(a.objective - grid));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 60.0, "max |MILP - grid| " + num(worst) + ", " + num(secs) + " s"};
}

Verdict net1_pattern_and_cost(const ScenarioResult& r) {
    bool quiet = true, active = true;
    for (const auto& s : r.attacked.steps) {
        if (s.k >= 11 && s.k < 15 && !s.attack.zero()) quiet = false;
        if (s.k >= 15 && s.k <= 20 && s.attack.zero()) active = false;
    }
    const double pct = r.impact.cost_increase_pct;
    return {quiet && active && pct >= 3.0 && pct <= 20.0, std::string("zero attack 11-14 ") + (quiet ? "yes" : "no") + ", active 15-20 " +
                                                              (active ? "yes" : "no") + ", cost " + num(pct) + "%"};
}

Verdict net3_cost(const ScenarioResult& r) {
    return {r.impact.cost_increase_pct > 30.0, "cost " + num(r.impact.cost_increase_pct) + "%"};
}

Verdict tank_drain() {
    const auto r = run_scenario(fixture("net1_rfdi_tank.toml"));
    return {r.impact.max_drawdown > 1000.0, "max drawdown " + num(r.impact.max_drawdown) + " ft3"};
}

Verdict detector_comparison() {
    const auto c = fixture("net1_detectors.toml");
    const auto d = compare_detectors(c);
    return {d.chi2_max > d.cusum_max, d.sensor + ": chi-squared " + num(d.chi2_max) + " GPM vs CUSUM " + num(d.cusum_max) + " GPM"};
}

Verdict solvers() {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    int lps = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto [d, p] = oracle::random_lp(rng, trial);
        const auto s = solve_lp(p);
        bool found = false;
        const double v = oracle::vertex_oracle(d, 0.0, 10.0, found);
        if (!found || s.status != SolveStatus::optimal) continue;
        worst = std::max(worst, std::abs(s.objective_value - v));
        ++lps;
    }
    std::mt19937_64 mrng(11);
    int exact = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const auto q = oracle::random_milp(mrng, trial);
        const auto best = oracle::enumerate_milp(q);
        const auto s = solve_milp(q.p);
        if (!best) exact += s.status == SolveStatus::infeasible;
        else exact += s.status == SolveStatus::optimal && s.objective_value == *best;
    }
    return {lps == 50 && worst <= 1e-7 && exact == 25,
        std::to_string(lps) + "/50 LPs, max gap " + num(worst) + "; " + std::to_string(exact) + "/25 MILPs exact"};
}

Verdict wls() {
    const auto m = load_inp(kData + "/networks/Net1.inp");
    SensorConfig cfg;
    for (const char* id : {"10", "22", "110", "112", "9"}) cfg.flow_sensors.push_back({id, 0.05});
    cfg.head_sensors.push_back({"12", 0.1});
    cfg.demand_meters.push_back({"10", 0.05});
    cfg.level_sensors.push_back({"2", 0.1});
    const auto run = simulate(m, constant_schedule(m, default_controls(m)), {});
    double recovery = 0.0, ortho = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
        const auto& s = run[static_cast<std::size_t>(k)];
        const auto lin = local_linearization(m, s.link_flows(m));
        SystemOptions opt;
        opt.tank_heads = s.tank_heads;
        const auto e = estimate(build_system(m, cfg, measure(m, cfg, s, 1, true), lin, opt));
        for (int l = 0; l < m.n_links(); ++l) recovery = std::max(recovery, std::abs(e.flow(l) - s.flow(m, l)));
        const auto sys = build_system(m, cfg, measure(m, cfg, s, 11, false), lin);
        const auto n = estimate(sys);
        ortho = std::max(ortho, (sys.H.transpose() * (sys.z - sys.H * n.x)).cwiseAbs().maxCoeff());
    }
    const auto h = estimate(oracle::scalar_system({1.0, 3.0}, {3.0, 1.0}));
    const double hand = std::max({std::abs(h.x(0) - 1.5), std::abs(h.residuals(0) + 0.5), std::abs(h.residuals(1) - 1.5)});
    return {recovery <= 1e-6 && ortho <= 1e-6 && hand <= 1e-12,
        "recovery " + num(recovery) + " cfs, orthogonality " + num(ortho) + ", hand example " + num(hand)};
}

std::map<std::string, std::string> read_tree(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        out[std::filesystem::relative(e.path(), dir).string()] = os.str();
    }
    return out;
}

Verdict determinism() {
    const auto root = std::filesystem::temp_directory_path() / ("wdn-acceptance-" + std::to_string(::getpid()));
    int files = 0;
    bool same = true;
    for (const char* name : {"net1_fsfdi.toml", "net1_hafdi.toml", "net1_hufdi.toml", "net1_hu_closed.toml", "net1_rfdi_tank.toml",
             "net1_detectors.toml"}) {
        const auto c = fixture(name);
        write_outputs(root / "a" / c.name, c, run_scenario(c));
        write_outputs(root / "b" / c.name, c, run_scenario(c));
        const auto a = read_tree(root / "a" / c.name), b = read_tree(root / "b" / c.name);
        same = same && a == b;
        files += static_cast<int>(a.size());
    }
    std::filesystem::remove_all(root);
    return {same && files > 0, std::to_string(files) + " CSV files compared byte for byte"};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> known_red;
    app.add_option("--known-red", known_red, "Criteria whose failure does not change the exit status");
    CLI11_PARSE(app, argc, argv);

    const auto net1 = run_scenario(fixture("net1_fsfdi.toml"));
    const auto net3 = run_scenario(fixture("net3_fsfdi.toml"));
    const std::vector<std::pair<std::string, std::function<Verdict()>>> checks{
        {"conservation on Net1/Net3", conservation},
        {"HU-FDI closed form stays below CUSUM", hu_closed_form_stealth},
        {"chi-squared threshold riding", chi2_threshold_riding},
        {"physics stealth of FS/HA, HU violations", physics_stealth},
        {"FS-FDI toy network matches grid search", toy_oracle},
        {"Net1 FS-FDI pattern and cost band", [&] { return net1_pattern_and_cost(net1); }},
        {"Net3 FS-FDI cost increase", [&] { return net3_cost(net3); }},
        {"R-FDI tank drain", tank_drain},
        {"chi-squared admits larger manipulation than CUSUM", detector_comparison},
        {"simplex and branch-and-bound oracles", solvers},
        {"WLS estimation suite", wls},
        {"deterministic CSV output", determinism},
    };
    const std::set<int> tolerated(known_red.begin(), known_red.end());
    int unexpected = 0, passed = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        Verdict v;
        try {
            v = checks[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        std::cout << (v.pass ? "PASS" : "FAIL") << " " << id << " " << checks[i].first << ": " << v.detail << "\n";
        if (v.pass) ++passed;
        else if (!tolerated.count(id)) ++unexpected;
    }
    std::cout << passed << "/" << checks.size() << " criteria pass\n";
    return unexpected == 0 ? 0 : 1;
}
