#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "hudsim/default_scenario.hpp"
#include "hudsim/simulation.hpp"

using namespace hudsim;

namespace {

struct FullRun {
    ScenarioDef sc = parse_scenario(kDefaultScenarioText, "default", true);
    std::ostringstream state, cues, hazards, motion, markers;
    SimulationResult result;

    FullRun() { result = run_simulation(sc, {}, {&state, &cues, &hazards, &motion, &markers}); }
};

const FullRun& full_run() {
    static const FullRun run;
    return run;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        rows.push_back(f);
    }
    return rows;
}

}  // namespace

TEST(FullRun, AllSevenEventsFireInTimelineOrder) {
    const auto& r = full_run();
    ASSERT_EQ(r.result.markers.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(r.result.markers[i].event, r.sc.events[i].id);
        EXPECT_NEAR(r.result.markers[i].t_s, r.sc.events[i].trigger_time_s, r.sc.tick_dt + 1e-9);
    }
    EXPECT_NEAR(r.result.final_world.t, 720.0, 1e-6);
}

TEST(FullRun, SelectiveCuesAreSubsetAndFewer) {
    const auto& r = full_run().result;
    EXPECT_TRUE(r.sel_subset_of_omn);
    double omn = 0, sel = 0;
    for (std::size_t i = 0; i < r.omn_counts.size(); ++i) {
        EXPECT_LE(r.sel_counts[i], r.omn_counts[i]);
        omn += static_cast<double>(r.omn_counts[i]);
        sel += static_cast<double>(r.sel_counts[i]);
    }
    EXPECT_LT(sel, omn);
}

TEST(FullRun, LoggedCuesRecountToTelemetry) {
    const auto& r = full_run();
    std::map<std::string, std::size_t> per_t;
    for (const auto& row : csv_rows(r.cues.str())) {
        ASSERT_EQ(row.size(), 10u);
        EXPECT_EQ(row[1], "OMN");
        ++per_t[row[0]];
    }
    std::size_t checked = 0;
    for (std::size_t i = 0; i < r.result.tick_t.size(); i += 9) {
        const auto key = fmt::format("{:.3f}", r.result.tick_t[i]);
        const auto it = per_t.find(key);
        EXPECT_EQ(it == per_t.end() ? 0u : it->second, r.result.omn_counts[i]) << "t=" << key;
        ++checked;
    }
    EXPECT_GT(checked, 7000u);
}

TEST(FullRun, NoCollisionsAndEventManeuvers) {
    const auto& r = full_run().result;
    EXPECT_EQ(r.collision_ticks, 0u);
    const auto& dog = r.event_modes[static_cast<std::size_t>(EventId::Dog)];
    const auto& car2 = r.event_modes[static_cast<std::size_t>(EventId::Car2)];
    EXPECT_TRUE(dog.contains(AvoidanceMode::Swerve));
    EXPECT_TRUE(car2.contains(AvoidanceMode::EmergencyStop));
    EXPECT_GT(r.emergency_ticks, 0u);
}

TEST(FullRun, RiskyEventsEndInAStop) {
    const auto& r = full_run();
    std::map<double, double> ego_speed;
    for (const auto& row : csv_rows(r.state.str()))
        if (row[1] == "0") ego_speed[std::stod(row[0])] = std::hypot(std::stod(row[5]), std::stod(row[6]));
    for (const auto& ev : r.sc.events) {
        if (ev.post_event_stop_s <= 0) continue;
        const double t_end = ev.trigger_time_s + ev.lifetime_s + ev.post_event_stop_s;
        const auto it = ego_speed.lower_bound(t_end - 0.5);
        ASSERT_NE(it, ego_speed.end());
        EXPECT_LT(it->second, 0.3) << to_string(ev.id);
    }
}

TEST(FullRun, CrossingPedestrianFlaggedOnAppearance) {
    const auto& r = full_run();
    const double t0 = r.sc.event(EventId::Man2)->trigger_time_s;
    bool seen = false;
    for (const auto& row : csv_rows(r.hazards.str())) {
        if (row[1] != "909") continue;
        EXPECT_LE(std::stod(row[0]), t0 + 0.2);
        EXPECT_NE(row[2], "inf");  // a collision point is predicted
        EXPECT_EQ(row[5], "1");
        seen = true;
        break;
    }
    EXPECT_TRUE(seen);
}

TEST(FullRun, MotionCuesWithinPlatformLimits) {
    const auto& r = full_run();
    for (const auto& row : csv_rows(r.motion.str())) {
        EXPECT_LE(std::abs(std::stod(row[1])), 12.0);
        EXPECT_LE(std::abs(std::stod(row[2])), 12.0);
    }
}

TEST(FullRun, ReplayIsByteIdentical) {
    const auto& a = full_run();
    std::ostringstream state, cues, hazards, motion, markers;
    run_simulation(a.sc, {}, {&state, &cues, &hazards, &motion, &markers});
    EXPECT_EQ(state.str(), a.state.str());
    EXPECT_EQ(cues.str(), a.cues.str());
    EXPECT_EQ(hazards.str(), a.hazards.str());
    EXPECT_EQ(motion.str(), a.motion.str());
    EXPECT_EQ(markers.str(), a.markers.str());
}
