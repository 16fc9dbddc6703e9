// hudsim command line: simulate, cohort, analyze, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hudsim/analysis.hpp"
#include "hudsim/cohort.hpp"
#include "hudsim/config.hpp"
#include "hudsim/default_scenario.hpp"
#include "hudsim/simulation.hpp"

namespace fs = std::filesystem;
using namespace hudsim;

namespace {

constexpr int kExitDegenerate = 1;
constexpr int kExitInput = 2;

struct Options {
    std::string scenario = "default";
    std::string policy = "OMN";
    std::uint64_t seed = 1;
    std::string out = "out";
    std::size_t n_omn = 15;
    std::size_t n_sel = 15;
    std::string config;
    std::string features;
    std::string ratings;
    bool null_cohort = false;
    bool write_signals = false;
};

ScenarioDef load_scenario(const std::string& name) {
    if (name == "default") return parse_scenario(kDefaultScenarioText, "default_scenario", true);
    if (!fs::exists(name)) throw ValidationError(fmt::format("scenario file not found: {}", name));
    return load_scenario_file(name);
}

RunSettings load_settings(const Options& o, bool cohort_flags) {
    RunSettings s;
    if (!o.config.empty()) s = apply_config(kv::Document::parse(read_text_file(o.config), o.config));
    const auto policy = parse_policy(o.policy);
    if (!policy) throw ValidationError(fmt::format("unknown policy '{}' (expected OMN or SEL)", o.policy));
    s.sim.policy = *policy;
    s.sim.seed = o.seed;
    s.cohort.seed = o.seed;
    if (cohort_flags) {
        s.cohort.n_omn = o.n_omn;
        s.cohort.n_sel = o.n_sel;
        if (o.null_cohort) s.cohort.sel_gain = 1.0;
        s.cohort.validate();
    }
    return s;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ValidationError(fmt::format("cannot write '{}'", (dir / name).string()));
    return f;
}

double mean_count(const std::vector<std::size_t>& v) {
    double s = 0.0;
    for (auto c : v) s += static_cast<double>(c);
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void print_simulation_summary(std::ostream& os, const ScenarioDef& sc, const SimulationResult& r) {
    os << fmt::format("scenario {}: {:.0f} s, {} ticks\n", sc.name, sc.duration_s, r.tick_t.size());
    os << "events:";
    for (const auto& m : r.markers) os << fmt::format(" {}@{:.1f}s", to_string(m.event), m.t_s);
    os << '\n';
    os << fmt::format("mean cues per tick: OMN {:.3f}, SEL {:.3f}; SEL subset of OMN: {}\n", mean_count(r.omn_counts), mean_count(r.sel_counts),
                      r.sel_subset_of_omn ? "yes" : "NO");
    os << fmt::format("emergency ticks {}, swerve ticks {}, collision ticks {}, motion clamped ticks {}\n", r.emergency_ticks, r.swerve_ticks,
                      r.collision_ticks, r.clamped_motion_ticks);
}

int cmd_simulate(const Options& o) {
    const auto sc = load_scenario(o.scenario);
    const auto settings = load_settings(o, false);
    const fs::path dir(o.out);
    auto state = open_out(dir, "state.csv");
    auto cues = open_out(dir, "cues.csv");
    auto hazards = open_out(dir, "hazards.csv");
    auto motion = open_out(dir, "motion.csv");
    auto markers = open_out(dir, "markers.csv");
    const auto r = run_simulation(sc, settings.sim, {&state, &cues, &hazards, &motion, &markers});
    print_simulation_summary(std::cout, sc, r);
    return 0;
}

CohortResult run_cohort_files(const Options& o, const ScenarioDef& sc, const RunSettings& s, const fs::path& dir) {
    const auto markers = scenario_markers(sc);
    auto r = run_cohort(s.cohort, markers, sc.duration_s);
    auto f = open_out(dir, "features.csv");
    write_feature_table(f, r.rows);
    auto m = open_out(dir, "markers.csv");
    write_markers(m, markers);
    if (o.write_signals) {
        for (const auto& plan : plan_cohort(s.cohort)) {
            const auto run = run_subject(plan, markers, sc.duration_s, s.cohort, true);
            auto sig = open_out(dir / "signals", plan.id + ".csv");
            write_signal(sig, run.digital);
            auto mk = open_out(dir / "signals", plan.id + ".markers.csv");
            write_markers(mk, run.digital.markers);
        }
    }
    std::cout << fmt::format("cohort: {} OMN + {} SEL subjects, {} feature rows, {} excluded windows, max ADC saturation {:.4f}\n",
                             s.cohort.n_omn, s.cohort.n_sel, r.rows.size(), r.excluded.size(), r.max_saturation);
    for (const auto& e : r.excluded) std::cout << "excluded: " << e << '\n';
    return r;
}

int cmd_cohort(const Options& o) {
    const auto sc = load_scenario(o.scenario);
    const auto s = load_settings(o, true);
    run_cohort_files(o, sc, s, o.out);
    return 0;
}

int write_analysis(const AnalysisReport& rep, const fs::path& dir) {
    auto txt = open_out(dir, "report.txt");
    write_report(txt, rep);
    auto csv = open_out(dir, "results.csv");
    write_results_csv(csv, rep);
    write_report(std::cout, rep);
    return rep.degenerate ? kExitDegenerate : 0;
}

int cmd_analyze(const Options& o) {
    if (o.features.empty() && o.ratings.empty()) throw ValidationError("analyze needs --features and/or --ratings");
    std::vector<FeatureRow> rows;
    std::vector<RatingRow> ratings;
    if (!o.features.empty()) {
        std::ifstream in(o.features);
        if (!in) throw ValidationError(fmt::format("cannot open '{}'", o.features));
        rows = read_feature_table(in, o.features);
    }
    if (!o.ratings.empty()) {
        std::ifstream in(o.ratings);
        if (!in) throw ValidationError(fmt::format("cannot open '{}'", o.ratings));
        ratings = read_rating_table(in, o.ratings);
    }
    return write_analysis(analyze(rows, ratings), o.out);
}

/// simulate -> cohort -> analyze into one directory, plus a combined summary.
int cmd_report(const Options& o) {
    const auto sc = load_scenario(o.scenario);
    const auto s = load_settings(o, true);
    const fs::path dir(o.out);
    auto markers = open_out(dir, "sim_markers.csv");
    const auto sim = run_simulation(sc, s.sim, {nullptr, nullptr, nullptr, nullptr, &markers});
    std::ostringstream summary;
    print_simulation_summary(summary, sc, sim);
    std::cout << summary.str();
    const auto cohort = run_cohort_files(o, sc, s, dir);
    std::cout << '\n';
    const auto rep = analyze(cohort.rows);
    auto txt = open_out(dir, "summary.txt");
    txt << summary.str() << '\n';
    write_report(txt, rep);
    return write_analysis(rep, dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Autonomous-vehicle HUD scenario simulator and GSR analysis"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--scenario", o.scenario, "scenario file, or 'default' for the bundled one")->capture_default_str();
        sub->add_option("--seed", o.seed, "random seed")->capture_default_str();
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_option("--config", o.config, "settings override file");
    };
    auto add_cohort = [&](CLI::App* sub) {
        sub->add_option("--n-omn", o.n_omn, "OMN group size")->capture_default_str();
        sub->add_option("--n-sel", o.n_sel, "SEL group size")->capture_default_str();
        sub->add_flag("--null", o.null_cohort, "identical response profiles in both groups");
        sub->add_flag("--write-signals", o.write_signals, "also write per-subject signal and marker CSVs");
    };

    auto* sim = app.add_subcommand("simulate", "run the scenario and write state, cue, hazard and motion logs");
    add_common(sim);
    sim->add_option("--policy", o.policy, "HUD policy logged to cues.csv (OMN or SEL)")->capture_default_str();

    auto* coh = app.add_subcommand("cohort", "synthesize GSR for a cohort and extract features");
    add_common(coh);
    add_cohort(coh);

    auto* ana = app.add_subcommand("analyze", "statistics on feature and rating tables");
    ana->add_option("--features", o.features, "feature CSV");
    ana->add_option("--ratings", o.ratings, "rating CSV");
    ana->add_option("--out", o.out, "output directory")->capture_default_str();

    auto* rep = app.add_subcommand("report", "simulate, synthesize and analyze in one go");
    add_common(rep);
    add_cohort(rep);
    rep->add_option("--policy", o.policy, "HUD policy")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitInput;
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*coh) return cmd_cohort(o);
        if (*ana) return cmd_analyze(o);
        if (*rep) return cmd_report(o);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const DegenerateError& e) {
        std::cerr << "degenerate: " << e.what() << '\n';
        return kExitDegenerate;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDegenerate;
    }
    return 0;
}
