#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "errors.hpp"
#include "hazard.hpp"
#include "scenario.hpp"

namespace hudsim {

enum class Policy { OMN, SEL };

inline std::string_view to_string(Policy p) { return p == Policy::OMN ? "OMN" : "SEL"; }

inline std::optional<Policy> parse_policy(std::string_view s) {
    if (s == "OMN") return Policy::OMN;
    if (s == "SEL") return Policy::SEL;
    return std::nullopt;
}

struct HudParams {
    double detection_diameter_m = 150.0;
    double nav_horizon_s = 3.0;
    double nav_step_s = 0.5;
    double line_ahead_m = 60.0;
    double line_step_m = 5.0;
    double lane_tolerance_m = 1.75;  ///< max lateral offset from the ego lane for a car to count as preceding
};

struct Cue {
    int object_id = 0;
    ActorKind kind = ActorKind::StaticObject;
    OrientedBox box;
    double box_height = 0.0;
    std::string label;
    std::string icon_id;
    bool label_faces_ego = true;
    WarningState warning;
    HazardAssessment assessment;
    std::optional<std::vector<Vec2>> nav_line;
    int distance_m = 0;
    std::optional<int> speed_kmh;
    int section = -1;
    bool dynamic = false;
    Rgb body_color;
};

struct CueSet {
    double t = 0.0;
    Policy policy = Policy::OMN;
    std::vector<Cue> cues;
    std::vector<Vec2> ego_nav_line;
    std::vector<Vec2> road_center_line;

    std::set<int> object_ids() const {
        std::set<int> ids;
        for (const auto& c : cues) ids.insert(c.object_id);
        return ids;
    }
};

/// Per-tick presentation inputs derived by the simulation loop.
struct CueInputs {
    std::set<int> sign_events;  ///< signs/lights that changed or were just recognized
    std::set<int> audio_edges;  ///< objects whose sound fires this tick
    std::uint64_t color_seed = 0;
    HazardParams hazard;
    HudParams hud;
};

inline std::string_view display_name(ActorKind k) {
    switch (k) {
        case ActorKind::EgoCar: return "Ego";
        case ActorKind::TrafficCar: return "Car";
        case ActorKind::Scooter: return "Scooter";
        case ActorKind::Pedestrian: return "Pedestrian";
        case ActorKind::Dog: return "Dog";
        case ActorKind::Ball: return "Ball";
        case ActorKind::StaticObject: return "Object";
        case ActorKind::TrafficLight: return "Light";
        case ActorKind::RoadSign: return "Sign";
    }
    return "?";
}

/// "<Kind> <meters>m[ <km/h>km/h]" with integer rounding.
inline std::string make_label(ActorKind kind, double distance_m, std::optional<double> speed_mps) {
    std::string label = fmt::format("{} {}m", display_name(kind), std::llround(distance_m));
    if (speed_mps) label += fmt::format(" {}km/h", std::llround(*speed_mps * 3.6));
    return label;
}

/// Stable pseudo-random body color per (seed, object).
inline Rgb body_color(std::uint64_t seed, int object_id) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(object_id + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return {static_cast<std::uint8_t>(z), static_cast<std::uint8_t>(z >> 8), static_cast<std::uint8_t>(z >> 16)};
}

inline std::vector<Vec2> route_line_ahead(const Route& route, double s0, double lateral, const HudParams& p) {
    std::vector<Vec2> line;
    if (route.empty()) return line;
    for (double d = 0.0; d <= p.line_ahead_m + 1e-9; d += p.line_step_m) line.push_back(route.offset_point(s0 + d, lateral));
    return line;
}

/// One candidate cue per actor inside the detection diameter.
inline std::vector<Cue> build_candidates(const WorldState& world, std::span<const HazardAssessment> assessments,
                                         const CueInputs& in = {}) {
    std::vector<Cue> out;
    const auto objects = query_objects_within(world, world.ego.position, in.hud.detection_diameter_m);
    for (const auto& obj : objects) {
        Cue c;
        c.object_id = obj.id;
        c.kind = obj.kind;
        c.box = make_box(obj.pose(), obj.extent);
        c.box_height = obj.extent.height;
        c.dynamic = obj.dynamic;
        c.section = obj.section;
        const double range = distance(obj.position, world.ego.position);
        c.distance_m = static_cast<int>(std::llround(range));
        std::optional<double> speed;
        if (obj.dynamic) {
            speed = obj.speed();
            c.speed_kmh = static_cast<int>(std::llround(*speed * 3.6));
        }
        c.label = make_label(obj.kind, range, speed);
        c.icon_id = "icon_" + std::string(display_name(obj.kind));
        std::transform(c.icon_id.begin(), c.icon_id.end(), c.icon_id.begin(), [](unsigned char ch) { return std::tolower(ch); });

        c.assessment = make_assessment(obj.id, range, std::numeric_limits<double>::infinity(), 0.0);
        for (const auto& h : assessments)
            if (h.object_id == obj.id) c.assessment = h;
        c.warning = warning_state(c.assessment, obj.kind, in.sign_events.contains(obj.id), in.audio_edges.contains(obj.id), in.hazard);

        if (is_car(obj.kind) && obj.dynamic) {
            std::vector<Vec2> nav;
            for (double t = 0.0; t <= in.hud.nav_horizon_s + 1e-9; t += in.hud.nav_step_s) nav.push_back(obj.position + obj.velocity * t);
            c.nav_line = std::move(nav);
        }
        if (obj.kind == ActorKind::TrafficCar) c.body_color = body_color(in.color_seed, obj.id);
        out.push_back(std::move(c));
    }
    return out;
}

/// Context for the selective policy.
struct SelectionContext {
    const Route* route = nullptr;
    std::set<int> assessed_cars;  ///< from the avoidance planner's priority checks
    HudParams hud;
};

namespace detail {

inline bool precedes_ego(const Cue& c, const WorldState& world, const Route& route, const HudParams& p) {
    const auto& line = route.line();
    const auto proj = line.project(c.box.center, line.normalize(world.ego.route_s), 2.0 * p.detection_diameter_m);
    double ahead = proj.s - line.normalize(world.ego.route_s);
    if (line.closed()) {
        const double len = line.length();
        if (ahead < -0.5 * len) ahead += len;
        if (ahead > 0.5 * len) ahead -= len;
    }
    const std::size_t cur = world.ego.edge;
    const std::size_t nxt = route.next_segment(cur);
    const double to_edge_end = line.segment_start(cur + 1) - line.normalize(world.ego.route_s);
    const double next_len = line.segment_start(nxt + 1) - line.segment_start(nxt);
    return ahead > 0.0 && ahead <= to_edge_end + next_len && std::abs(proj.lateral) <= p.lane_tolerance_m;
}

inline int current_section(const WorldState& world, const Route* route) {
    if (!route || route->empty()) return -1;
    return route->segment(world.ego.edge).section;
}

}  // namespace detail

/// Filters candidates under a policy. Both policies share sign, static-object and ego-line rules.
inline CueSet select_cues(std::span<const Cue> candidates, const WorldState& world, std::span<const HazardAssessment> assessments,
                          Policy policy, const SelectionContext& ctx = {}) {
    CueSet set;
    set.t = world.t;
    set.policy = policy;
    if (ctx.route && !ctx.route->empty()) {
        set.ego_nav_line = route_line_ahead(*ctx.route, world.ego.route_s, world.ego.lateral, ctx.hud);
        set.road_center_line = route_line_ahead(*ctx.route, world.ego.route_s, 0.0, ctx.hud);
    } else {
        set.ego_nav_line = {world.ego.position};
    }
    const int section = detail::current_section(world, ctx.route);
    const auto warning_of = [&](const Cue& c) {
        for (const auto& h : assessments)
            if (h.object_id == c.object_id) return h.warning_active;
        return c.assessment.warning_active;
    };
    const auto collides = [&](const Cue& c) {
        for (const auto& h : assessments)
            if (h.object_id == c.object_id) return h.time_to_collision_s.has_value();
        return c.assessment.time_to_collision_s.has_value();
    };

    for (const auto& c : candidates) {
        bool keep = false;
        Cue cue = c;
        if (is_sign_or_light(c.kind)) {
            keep = c.section == section;
        } else if (!c.dynamic) {
            keep = warning_of(c);
        } else if (policy == Policy::OMN) {
            keep = true;
        } else if (is_car(c.kind)) {
            keep = collides(c) || (ctx.route && !ctx.route->empty() && detail::precedes_ego(c, world, *ctx.route, ctx.hud));
            if (!ctx.assessed_cars.contains(c.object_id)) cue.nav_line.reset();
        } else {
            keep = warning_of(c);
        }
        if (keep) set.cues.push_back(std::move(cue));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Cue load statistics

struct PolicyCounts {
    std::vector<double> t;
    std::vector<std::size_t> counts;
    double mean = 0.0;
};

struct CueCountStats {
    PolicyCounts omn;
    PolicyCounts sel;
};

inline CueCountStats cue_count_stats(std::span<const CueSet> log) {
    if (log.empty()) throw DegenerateError("cue log is empty");
    CueCountStats stats;
    for (const auto& set : log) {
        auto& pc = set.policy == Policy::OMN ? stats.omn : stats.sel;
        pc.t.push_back(set.t);
        pc.counts.push_back(set.cues.size());
    }
    for (auto* pc : {&stats.omn, &stats.sel}) {
        double sum = 0.0;
        for (auto c : pc->counts) sum += static_cast<double>(c);
        pc->mean = pc->counts.empty() ? 0.0 : sum / static_cast<double>(pc->counts.size());
    }
    return stats;
}

inline constexpr std::string_view kCueLogHeader = "t,policy,object_id,kind,distance_m,speed_kmh,severity,flash_hz,audio,has_nav_line";

inline void write_cue_rows(std::ostream& os, const CueSet& set) {
    for (const auto& c : set.cues) {
        os << fmt::format("{:.3f},{},{},{},{},{},{:.4f},{:g},{},{}\n", set.t, to_string(set.policy), c.object_id, to_string(c.kind),
                          c.distance_m, c.speed_kmh ? std::to_string(*c.speed_kmh) : std::string(), c.assessment.severity,
                          c.warning.flash_hz, to_string(c.warning.audio), c.nav_line ? 1 : 0);
    }
}

}  // namespace hudsim
