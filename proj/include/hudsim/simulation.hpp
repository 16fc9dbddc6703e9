#pragma once

#include <cstdint>
#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "avcontrol.hpp"
#include "hazard.hpp"
#include "hud.hpp"
#include "scenario.hpp"

namespace hudsim {

struct SimulationConfig {
    ControllerConfig controller;
    HazardParams hazard;
    HudParams hud;
    Policy policy = Policy::OMN;
    std::size_t log_every = 9;  ///< write every n-th tick (10 Hz at the default 90 Hz tick)
    std::uint64_t seed = 0;
};

/// Optional CSV sinks; null members are skipped.
struct SimulationLogs {
    std::ostream* state = nullptr;
    std::ostream* cues = nullptr;
    std::ostream* hazards = nullptr;
    std::ostream* motion = nullptr;
    std::ostream* markers = nullptr;
};

struct EventMarker {
    EventId event = EventId::Dog;
    double t_s = 0.0;
};

struct SimulationResult {
    std::vector<EventMarker> markers;  ///< in activation order
    std::vector<double> tick_t;
    std::vector<std::size_t> omn_counts;  ///< cues per tick under each policy, from identical inputs
    std::vector<std::size_t> sel_counts;
    bool sel_subset_of_omn = true;
    std::size_t clamped_motion_ticks = 0;
    std::size_t emergency_ticks = 0;
    std::size_t swerve_ticks = 0;
    double max_abs_lateral = 0.0;
    std::size_t collision_ticks = 0;  ///< ticks where the ego footprint overlaps any actor
    std::array<std::set<AvoidanceMode>, kEventCount> event_modes;  ///< planner modes seen while each event was active
    WorldState final_world;
};

inline constexpr std::string_view kStateLogHeader = "t,actor_id,kind,x,y,vx,vy,heading";
inline constexpr std::string_view kHazardLogHeader = "t,object_id,distance,d_warn,severity,warning_active,flash_hz,audio";
inline constexpr std::string_view kMotionLogHeader = "t,pitch_deg,roll_deg,clamped";
inline constexpr std::string_view kMarkerHeader = "event_id,t_s";

inline void write_state_rows(std::ostream& os, const WorldState& w) {
    const Vec2 ego_v = unit_from_heading(w.ego.heading) * w.ego.speed;
    os << fmt::format("{:.3f},0,EgoCar,{:.3f},{:.3f},{:.3f},{:.3f},{:.4f}\n", w.t, w.ego.position.x, w.ego.position.y, ego_v.x, ego_v.y,
                      w.ego.heading);
    for (const auto& a : w.actors)
        os << fmt::format("{:.3f},{},{},{:.3f},{:.3f},{:.3f},{:.3f},{:.4f}\n", w.t, a.id, to_string(a.kind), a.position.x, a.position.y,
                          a.velocity.x, a.velocity.y, a.heading);
}

/// Per-tick presentation bookkeeping: sign notices and one-shot sounds.
class PresentationLatch {
public:
    explicit PresentationLatch(const HazardParams& p) : params_(p) {}

    CueInputs inputs(const WorldState& w, std::span<const ActorState> objects, std::span<const HazardAssessment> hazards) {
        CueInputs in;
        in.hazard = params_;
        for (const auto& obj : objects) {
            if (obj.kind == ActorKind::RoadSign) {
                const auto [it, fresh] = first_seen_.emplace(obj.id, w.t);
                if (w.t - it->second < params_.sign_notice_s) in.sign_events.insert(obj.id);
            } else if (obj.kind == ActorKind::TrafficLight) {
                for (const auto& l : w.lights)
                    if (l.actor_id == obj.id && l.since_change_s < params_.sign_notice_s && w.t >= l.since_change_s)
                        in.sign_events.insert(obj.id);
            }
        }
        for (const auto& obj : objects) {
            bool active = in.sign_events.contains(obj.id);
            for (const auto& h : hazards)
                if (h.object_id == obj.id) active = active || h.warning_active;
            if (danger_.rising(obj.id, active)) in.audio_edges.insert(obj.id);
        }
        return in;
    }

private:
    HazardParams params_;
    std::map<int, double> first_seen_;
    EdgeLatch danger_;
};

/// Runs the scenario to its end with the autopilot in the loop.
inline SimulationResult run_simulation(const ScenarioDef& sc, const SimulationConfig& cfg, const SimulationLogs& logs = {}) {
    const Route route(sc.network);
    ControllerConfig ctrl = cfg.controller;
    ctrl.apply(sc.controller_settings);
    Autopilot pilot(ctrl, sc.plant.extent);
    PresentationLatch latch(cfg.hazard);

    if (logs.state) *logs.state << kStateLogHeader << '\n';
    if (logs.cues) *logs.cues << kCueLogHeader << '\n';
    if (logs.hazards) *logs.hazards << kHazardLogHeader << '\n';
    if (logs.motion) *logs.motion << kMotionLogHeader << '\n';
    if (logs.markers) *logs.markers << kMarkerHeader << '\n';

    SimulationResult result;
    WorldState world = initial_world(sc);
    const std::size_t ticks = sc.tick_count();
    result.tick_t.reserve(ticks);
    result.omn_counts.reserve(ticks);
    result.sel_counts.reserve(ticks);

    for (std::size_t i = 0; i <= ticks; ++i) {
        const auto objects = query_objects_within(world, world.ego.position, cfg.hud.detection_diameter_m);
        const auto hazards = assess_hazards(world, objects, route, sc.plant.extent, pilot.current_offset(), cfg.hazard);
        CueInputs in = latch.inputs(world, objects, hazards);
        in.color_seed = cfg.seed;
        in.hud = cfg.hud;

        const bool hold = in_post_event_stop(sc, world.t);
        const bool last = i == ticks;
        AutopilotOutput drive;
        if (!last) drive = pilot.update(world.ego, route, hazards, objects, hold, world.t, sc.tick_dt, cfg.hazard);

        const auto candidates = build_candidates(world, hazards, in);
        SelectionContext sel_ctx{&route, {drive.plan.assessed_cars.begin(), drive.plan.assessed_cars.end()}, cfg.hud};
        const CueSet omn = select_cues(candidates, world, hazards, Policy::OMN, sel_ctx);
        const CueSet sel = select_cues(candidates, world, hazards, Policy::SEL, sel_ctx);
        result.tick_t.push_back(world.t);
        result.omn_counts.push_back(omn.cues.size());
        result.sel_counts.push_back(sel.cues.size());
        {
            const auto omn_ids = omn.object_ids();
            for (int id : sel.object_ids())
                if (!omn_ids.contains(id)) result.sel_subset_of_omn = false;
        }

        const MotionCue cue = tilt_coordination(world.ego.accel_long, world.ego.accel_lat, ctrl.platform_max_deg);
        if (cue.clamped) ++result.clamped_motion_ticks;
        if (drive.plan.mode == AvoidanceMode::EmergencyStop) ++result.emergency_ticks;
        if (drive.plan.mode == AvoidanceMode::Swerve) ++result.swerve_ticks;
        result.max_abs_lateral = std::max(result.max_abs_lateral, std::abs(world.ego.lateral));
        for (std::size_t e = 0; e < kEventCount; ++e)
            if (world.active_events[e] && !last) result.event_modes[e].insert(drive.plan.mode);
        {
            const auto ego_box = make_box({world.ego.position, world.ego.heading}, sc.plant.extent);
            for (const auto& a : world.actors)
                if (a.kind != ActorKind::RoadSign && a.kind != ActorKind::TrafficLight && overlaps(ego_box, make_box(a.pose(), a.extent))) {
                    ++result.collision_ticks;
                    break;
                }
        }

        if (i % cfg.log_every == 0) {
            if (logs.state) write_state_rows(*logs.state, world);
            if (logs.cues) write_cue_rows(*logs.cues, cfg.policy == Policy::OMN ? omn : sel);
            if (logs.hazards) {
                for (const auto& h : hazards) {
                    const Cue* shown = nullptr;
                    for (const auto& c : candidates)
                        if (c.object_id == h.object_id) shown = &c;
                    *logs.hazards << fmt::format("{:.3f},{},{:.3f},{:.3f},{:.4f},{},{:g},{}\n", world.t, h.object_id, h.distance_to_collision,
                                                 h.warning_distance, h.severity, h.warning_active ? 1 : 0,
                                                 shown ? shown->warning.flash_hz : 0.0,
                                                 shown ? to_string(shown->warning.audio) : std::string_view("None"));
                }
            }
            if (logs.motion) *logs.motion << fmt::format("{:.3f},{:.4f},{:.4f},{}\n", world.t, cue.pitch_deg, cue.roll_deg, cue.clamped ? 1 : 0);
        }
        if (last) break;

        const auto before = world.triggered;
        world = step_world(world, sc, drive.command, route);
        for (std::size_t e = 0; e < kEventCount; ++e) {
            if (world.triggered[e] && !before[e]) {
                result.markers.push_back({static_cast<EventId>(e), world.t});
                if (logs.markers) *logs.markers << fmt::format("{},{:.4f}\n", kEventNames[e], world.t);
            }
        }
    }
    result.final_world = world;
    return result;
}

}  // namespace hudsim
