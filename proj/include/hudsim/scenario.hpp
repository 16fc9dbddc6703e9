#pragma once

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "keyvalue.hpp"
#include "vehicle.hpp"

namespace hudsim {

enum class ActorKind { EgoCar, TrafficCar, Scooter, Pedestrian, Dog, Ball, StaticObject, TrafficLight, RoadSign };

inline constexpr std::array<std::string_view, 9> kActorKindNames = {
    "EgoCar", "TrafficCar", "Scooter", "Pedestrian", "Dog", "Ball", "StaticObject", "TrafficLight", "RoadSign"};

inline std::string_view to_string(ActorKind k) { return kActorKindNames[static_cast<std::size_t>(k)]; }

inline std::optional<ActorKind> parse_actor_kind(std::string_view s) {
    for (std::size_t i = 0; i < kActorKindNames.size(); ++i)
        if (kActorKindNames[i] == s) return static_cast<ActorKind>(i);
    return std::nullopt;
}

inline bool is_sign_or_light(ActorKind k) { return k == ActorKind::TrafficLight || k == ActorKind::RoadSign; }
inline bool is_car(ActorKind k) { return k == ActorKind::TrafficCar || k == ActorKind::Scooter; }

/// The seven scripted test events, in timeline order.
enum class EventId { Dog, Ball, Car1, Scooter, Car2, Man1, Man2 };
inline constexpr std::size_t kEventCount = 7;
inline constexpr std::array<std::string_view, kEventCount> kEventNames = {"Dog",  "Ball", "Car1", "Scooter",
                                                                         "Car2", "Man1", "Man2"};

inline std::string_view to_string(EventId e) { return kEventNames[static_cast<std::size_t>(e)]; }

inline std::optional<EventId> parse_event_id(std::string_view s) {
    for (std::size_t i = 0; i < kEventNames.size(); ++i)
        if (kEventNames[i] == s) return static_cast<EventId>(i);
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Road network

struct Waypoint {
    int id = 0;
    Vec2 position;
    double speed_limit = 0.0;  ///< m/s
};

struct Edge {
    int from = 0;
    int to = 0;
    int lane = 0;
    int section = 0;
};

struct WaypointNetwork {
    std::vector<Waypoint> nodes;
    std::vector<Edge> edges;
    std::vector<int> route;  ///< ego route as node ids
    bool route_loops = false;

    const Waypoint* node(int id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }

    const Edge* edge(int from, int to) const {
        for (const auto& e : edges)
            if (e.from == from && e.to == to) return &e;
        return nullptr;
    }

    void validate() const {
        std::set<int> ids;
        for (const auto& n : nodes) {
            if (!ids.insert(n.id).second) throw ValidationError("duplicate waypoint id " + std::to_string(n.id));
            if (!(n.speed_limit > 0.0)) throw ValidationError("waypoint " + std::to_string(n.id) + " has non-positive speed limit");
        }
        for (const auto& e : edges)
            if (!ids.contains(e.from) || !ids.contains(e.to))
                throw ValidationError("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) + " references an unknown waypoint");
        if (route.empty()) return;
        if (route.size() < 2) throw ValidationError("route needs at least two waypoints");
        const std::size_t links = route_loops ? route.size() : route.size() - 1;
        for (std::size_t i = 0; i < links; ++i) {
            const int a = route[i];
            const int b = route[(i + 1) % route.size()];
            if (!edge(a, b))
                throw ValidationError("route is disconnected: no edge " + std::to_string(a) + "->" + std::to_string(b));
        }
    }
};

/// The ego route as a polyline with per-segment edge attributes.
class Route {
public:
    Route() = default;

    explicit Route(const WaypointNetwork& net) {
        std::vector<Vec2> pts;
        for (int id : net.route) pts.push_back(net.node(id)->position);
        line_ = Polyline(pts, net.route_loops);
        const std::size_t links = line_.segment_count();
        for (std::size_t i = 0; i < links; ++i) {
            const int a = net.route[i];
            const int b = net.route[(i + 1) % net.route.size()];
            const Edge* e = net.edge(a, b);
            segments_.push_back({net.node(a)->speed_limit, e ? e->section : 0, e ? e->lane : 0});
        }
    }

    struct SegmentInfo {
        double speed_limit;
        int section;
        int lane;
    };

    bool empty() const { return segments_.empty(); }
    const Polyline& line() const { return line_; }
    const SegmentInfo& segment(std::size_t i) const { return segments_[i]; }
    std::size_t segment_count() const { return segments_.size(); }
    std::size_t next_segment(std::size_t i) const {
        return line_.closed() ? (i + 1) % segments_.size() : std::min(i + 1, segments_.size() - 1);
    }

    Vec2 point(double s) const { return line_.point_at(s); }
    double heading(double s) const { return line_.heading_at(s); }
    Vec2 tangent(double s) const { return unit_from_heading(heading(s)); }
    Vec2 normal(double s) const { return tangent(s).perp(); }
    /// Point `lateral` meters to the left of the centerline at arc length s.
    Vec2 offset_point(double s, double lateral) const { return point(s) + normal(s) * lateral; }

private:
    Polyline line_;
    std::vector<SegmentInfo> segments_;
};

// ---------------------------------------------------------------------------
// Actors and events

/// Piece of a scripted speed profile: constant velocity in the spawn frame for `duration_s`.
struct ProfileSegment {
    double duration_s = 0.0;
    double v_along = 0.0;
    double v_lateral = 0.0;
};

struct TrafficLightCycle {
    double green_s = 30.0;
    double yellow_s = 4.0;
    double red_s = 26.0;
    double offset_s = 0.0;
};

enum class LightPhase { Green, Yellow, Red };
inline std::string_view to_string(LightPhase p) {
    switch (p) {
        case LightPhase::Green: return "Green";
        case LightPhase::Yellow: return "Yellow";
        case LightPhase::Red: return "Red";
    }
    return "?";
}

/// Definition of an ambient actor. Dynamic ones follow the route centerline at a fixed offset.
struct ActorSpec {
    int id = 0;
    ActorKind kind = ActorKind::StaticObject;
    Extent extent;
    bool dynamic = false;
    Vec2 position;            ///< used when not placed on the route
    double heading = 0.0;
    std::optional<double> route_s;   ///< place on the route at this arc length
    double lateral = 0.0;            ///< offset from the route, left positive
    double speed = 0.0;              ///< along-route speed for dynamic actors
    int direction = 1;               ///< +1 with the route, -1 against it
    double spawn_t = 0.0;
    double despawn_t = std::numeric_limits<double>::infinity();
    int section = -1;                ///< road section regulated by a sign or light
    std::string label;               ///< sign text
    TrafficLightCycle cycle;
};

/// Actor spawned by an event, positioned relative to the ego's route progress at trigger time.
struct EventActorScript {
    int id = 0;
    ActorKind kind = ActorKind::Pedestrian;
    Extent extent;
    double ahead_m = 0.0;
    double lateral_m = 0.0;
    std::vector<ProfileSegment> profile;
};

struct EventSpec {
    EventId id = EventId::Dog;
    double trigger_time_s = 0.0;
    double lifetime_s = 10.0;        ///< scripted actors are removed afterwards
    double post_event_stop_s = 0.0;  ///< ego halts this long once the event is over
    std::vector<EventActorScript> actors;
};

struct ScenarioDef {
    std::string name;
    double duration_s = 720.0;
    double tick_dt = 1.0 / 90.0;
    unsigned long long rng_seed = 0;
    double initial_speed = 0.0;
    WaypointNetwork network;
    std::vector<ActorSpec> actors;
    std::vector<EventSpec> events;
    VehiclePlant plant;
    /// Raw `[controller]` section for the controller module to interpret.
    std::map<std::string, double> controller_settings;

    std::size_t tick_count() const { return static_cast<std::size_t>(std::llround(duration_s / tick_dt)); }

    const EventSpec* event(EventId id) const {
        for (const auto& e : events)
            if (e.id == id) return &e;
        return nullptr;
    }

    void validate(bool require_all_events = false) const {
        if (!(duration_s > 0.0)) throw ValidationError("duration_s must be positive");
        if (!(tick_dt > 0.0) || tick_dt > duration_s) throw ValidationError("tick_dt must be in (0, duration_s]");
        network.validate();
        std::set<int> ids{0};
        auto claim = [&](int id) {
            if (!ids.insert(id).second) throw ValidationError("actor id " + std::to_string(id) + " is used twice (0 is the ego)");
        };
        for (const auto& a : actors) {
            claim(a.id);
            if (a.kind == ActorKind::EgoCar) throw ValidationError("ego is implicit; actor " + std::to_string(a.id) + " may not be EgoCar");
            if (!(a.extent.length > 0 && a.extent.width > 0 && a.extent.height > 0))
                throw ValidationError("actor " + std::to_string(a.id) + " has a non-positive extent");
            if (a.route_s && network.route.empty())
                throw ValidationError("actor " + std::to_string(a.id) + " is placed on the route but no route is defined");
            if (!a.dynamic && a.speed != 0.0) throw ValidationError("static actor " + std::to_string(a.id) + " has a speed");
            if (std::abs(a.speed) > 60.0) throw ValidationError("actor " + std::to_string(a.id) + " exceeds 60 m/s");
        }
        std::bitset<kEventCount> seen;
        double last_t = -1.0;
        for (const auto& e : events) {
            const auto idx = static_cast<std::size_t>(e.id);
            if (seen[idx]) throw ValidationError("event " + std::string(to_string(e.id)) + " appears twice");
            seen[idx] = true;
            if (e.trigger_time_s < 0.0 || e.trigger_time_s > duration_s)
                throw ValidationError("event " + std::string(to_string(e.id)) + " trigger time " + std::to_string(e.trigger_time_s) +
                                      " outside [0, " + std::to_string(duration_s) + "]");
            if (e.trigger_time_s < last_t) throw ValidationError("events must be sorted by trigger time");
            last_t = e.trigger_time_s;
            if (e.post_event_stop_s < 0.0) throw ValidationError("post_event_stop_s must be >= 0");
            if (!(e.lifetime_s > 0.0)) throw ValidationError("event lifetime must be positive");
            if (!e.actors.empty() && network.route.empty())
                throw ValidationError("event actors are placed relative to the route but no route is defined");
            for (const auto& a : e.actors) {
                claim(a.id);
                if (!(a.extent.length > 0 && a.extent.width > 0 && a.extent.height > 0))
                    throw ValidationError("event actor " + std::to_string(a.id) + " has a non-positive extent");
                for (const auto& seg : a.profile)
                    if (std::hypot(seg.v_along, seg.v_lateral) > 60.0 || seg.duration_s < 0.0)
                        throw ValidationError("event actor " + std::to_string(a.id) + " has an invalid profile segment");
            }
        }
        if (require_all_events && !seen.all()) {
            for (std::size_t i = 0; i < kEventCount; ++i)
                if (!seen[i]) throw ValidationError("missing event " + std::string(kEventNames[i]));
        }
    }
};

// ---------------------------------------------------------------------------
// Scenario file

namespace detail {

inline Extent default_extent(ActorKind k) {
    switch (k) {
        case ActorKind::EgoCar:
        case ActorKind::TrafficCar: return {4.5, 1.9, 1.5};
        case ActorKind::Scooter: return {1.9, 0.7, 1.4};
        case ActorKind::Pedestrian: return {0.5, 0.5, 1.75};
        case ActorKind::Dog: return {0.9, 0.35, 0.6};
        case ActorKind::Ball: return {0.25, 0.25, 0.25};
        case ActorKind::StaticObject: return {1.0, 1.0, 3.0};
        case ActorKind::TrafficLight: return {0.4, 0.4, 4.0};
        case ActorKind::RoadSign: return {0.6, 0.1, 2.5};
    }
    return {};
}

inline ActorKind record_kind(const kv::Record& r) {
    const auto k = parse_actor_kind(r.text("kind"));
    if (!k) throw r.error("kind", "unknown actor kind '" + r.text("kind") + "'");
    return *k;
}

inline Extent record_extent(const kv::Record& r, ActorKind kind) {
    Extent e = default_extent(kind);
    if (r.has("extent")) {
        const auto v = r.numbers("extent");
        if (v.size() != 3) throw r.error("extent", "expected length,width,height");
        e = {v[0], v[1], v[2]};
    }
    return e;
}

inline std::vector<ProfileSegment> parse_profile(const kv::Record& r) {
    std::vector<ProfileSegment> out;
    if (!r.has("profile")) return out;
    for (auto part : kv::split(r.text("profile"), ';')) {
        const auto f = kv::split(part, ':');
        if (f.size() != 3) throw r.error("profile", "expected duration:v_along:v_lateral segments separated by ';'");
        const auto d = kv::to_double(f[0]);
        const auto va = kv::to_double(f[1]);
        const auto vl = kv::to_double(f[2]);
        if (!d || !va || !vl) throw r.error("profile", "non-numeric profile segment '" + std::string(part) + "'");
        out.push_back({*d, *va, *vl});
    }
    return out;
}

}  // namespace detail

/// Parses scenario text. Throws ParseError (with line and field) or ValidationError.
inline ScenarioDef parse_scenario(std::string_view text, std::string source = {}, bool require_all_events = false) {
    const auto doc = kv::Document::parse(text, std::move(source));
    ScenarioDef def;
    for (const auto& section : doc.sections()) {
        if (section.name != "scenario" && section.name != "network" && section.name != "actors" && section.name != "events" &&
            section.name != "vehicle" && section.name != "controller")
            throw ParseError(doc.source(), section.line, "", "unknown section [" + section.name + "]");
    }

    if (const auto* s = doc.find("scenario")) {
        for (const auto& [key, setting] : s->settings) {
            if (key == "name") {
                def.name = setting.value;
                continue;
            }
            if (key == "route" || key == "route_loops") continue;
            if (key == "rng_seed") {
                const auto v = kv::to_int(setting.value);
                if (!v || *v < 0) throw ParseError(doc.source(), setting.line, key, "expected a non-negative integer");
                def.rng_seed = static_cast<unsigned long long>(*v);
                continue;
            }
            double* target = key == "duration_s" ? &def.duration_s
                             : key == "tick_dt"  ? &def.tick_dt
                             : key == "initial_speed" ? &def.initial_speed
                                                      : nullptr;
            if (!target) throw ParseError(doc.source(), setting.line, key, "unknown setting in [scenario]");
            kv::read_number(doc, *s, key, *target);
        }
        if (const auto it = s->settings.find("route"); it != s->settings.end()) {
            std::istringstream in(it->second.value);
            std::string tok;
            while (in >> tok) {
                const auto v = kv::to_int(tok);
                if (!v) throw ParseError(doc.source(), it->second.line, "route", "expected waypoint ids, got '" + tok + "'");
                def.network.route.push_back(static_cast<int>(*v));
            }
        }
        if (const auto it = s->settings.find("route_loops"); it != s->settings.end())
            def.network.route_loops = it->second.value == "1" || it->second.value == "true";
    }

    if (const auto* s = doc.find("network")) {
        for (const auto& r : s->records) {
            if (r.type() == "node") {
                r.check_fields({"id", "x", "y", "speed_limit"});
                def.network.nodes.push_back({static_cast<int>(r.integer("id")), {r.number("x"), r.number("y")}, r.number("speed_limit")});
            } else if (r.type() == "edge") {
                r.check_fields({"from", "to", "lane", "section"});
                def.network.edges.push_back({static_cast<int>(r.integer("from")), static_cast<int>(r.integer("to")),
                                             static_cast<int>(r.integer_or("lane", 0)), static_cast<int>(r.integer_or("section", 0))});
            } else if (r.type() == "chain") {
                // chain ids=1,2,3 section=0 lane=0 : edges between consecutive ids
                r.check_fields({"ids", "lane", "section", "closed"});
                const auto ids = r.numbers("ids");
                const bool closed = r.flag_or("closed", false);
                const std::size_t links = closed ? ids.size() : ids.size() - 1;
                for (std::size_t i = 0; i < links; ++i)
                    def.network.edges.push_back({static_cast<int>(ids[i]), static_cast<int>(ids[(i + 1) % ids.size()]),
                                                 static_cast<int>(r.integer_or("lane", 0)), static_cast<int>(r.integer_or("section", 0))});
            } else {
                throw r.error("", "unknown record '" + r.type() + "' in [network]");
            }
        }
    }

    if (const auto* s = doc.find("vehicle")) {
        for (const auto& [key, setting] : s->settings) {
            double* target = key == "wheelbase"     ? &def.plant.wheelbase
                             : key == "accel_lag_s" ? &def.plant.accel_lag_s
                             : key == "max_accel"   ? &def.plant.max_accel
                             : key == "max_decel"   ? &def.plant.max_decel
                             : key == "max_steer"   ? &def.plant.max_steer
                                                    : nullptr;
            if (!target) throw ParseError(doc.source(), setting.line, key, "unknown setting in [vehicle]");
            kv::read_number(doc, *s, key, *target);
        }
    }

    if (const auto* s = doc.find("controller")) {
        for (const auto& [key, setting] : s->settings) {
            const auto v = kv::to_double(setting.value);
            if (!v) throw ParseError(doc.source(), setting.line, key, "expected a number");
            def.controller_settings[key] = *v;
        }
    }

    if (const auto* s = doc.find("actors")) {
        for (const auto& r : s->records) {
            if (r.type() != "actor") throw r.error("", "unknown record '" + r.type() + "' in [actors]");
            r.check_fields({"id", "kind", "x", "y", "heading", "s", "lateral", "speed", "direction", "dynamic", "extent",
                            "spawn", "despawn", "section", "label", "cycle", "offset"});
            ActorSpec a;
            a.id = static_cast<int>(r.integer("id"));
            a.kind = detail::record_kind(r);
            a.extent = detail::record_extent(r, a.kind);
            a.speed = r.number_or("speed", 0.0);
            a.dynamic = r.flag_or("dynamic", a.speed != 0.0);
            if (r.has("s")) {
                a.route_s = r.number("s");
                a.lateral = r.number_or("lateral", 0.0);
            } else {
                a.position = {r.number("x"), r.number("y")};
            }
            a.heading = r.number_or("heading", 0.0);
            a.direction = static_cast<int>(r.integer_or("direction", 1));
            if (a.direction != 1 && a.direction != -1) throw r.error("direction", "expected 1 or -1");
            a.spawn_t = r.number_or("spawn", 0.0);
            a.despawn_t = r.number_or("despawn", std::numeric_limits<double>::infinity());
            a.section = static_cast<int>(r.integer_or("section", -1));
            a.label = r.text_or("label", "");
            if (r.has("cycle")) {
                const auto c = r.numbers("cycle");
                if (c.size() != 3) throw r.error("cycle", "expected green,yellow,red seconds");
                a.cycle = {c[0], c[1], c[2], r.number_or("offset", 0.0)};
            }
            if (is_sign_or_light(a.kind) && a.section < 0) throw r.error("section", "signs and lights need a road section");
            def.actors.push_back(std::move(a));
        }
    }

    if (const auto* s = doc.find("events")) {
        EventSpec* current = nullptr;
        for (const auto& r : s->records) {
            if (r.type() == "event") {
                r.check_fields({"id", "t", "lifetime", "stop"});
                const auto id = parse_event_id(r.text("id"));
                if (!id) throw r.error("id", "unknown event id '" + r.text("id") + "'");
                EventSpec e;
                e.id = *id;
                e.trigger_time_s = r.number("t");
                e.lifetime_s = r.number_or("lifetime", 10.0);
                e.post_event_stop_s = r.number_or("stop", 0.0);
                def.events.push_back(std::move(e));
                current = &def.events.back();
            } else if (r.type() == "spawn") {
                if (!current) throw r.error("", "'spawn' must follow an 'event' record");
                r.check_fields({"id", "kind", "ahead", "lateral", "profile", "extent"});
                EventActorScript a;
                a.id = static_cast<int>(r.integer("id"));
                a.kind = detail::record_kind(r);
                a.extent = detail::record_extent(r, a.kind);
                a.ahead_m = r.number("ahead");
                a.lateral_m = r.number_or("lateral", 0.0);
                a.profile = detail::parse_profile(r);
                current->actors.push_back(std::move(a));
            } else {
                throw r.error("", "unknown record '" + r.type() + "' in [events]");
            }
        }
    }

    def.validate(require_all_events);
    return def;
}

inline ScenarioDef load_scenario_file(const std::string& path, bool require_all_events = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path, require_all_events);
}

// ---------------------------------------------------------------------------
// World state

/// Lane-following motion along the route: arc length, offset and signed speed.
struct LaneMotion {
    double route_s = 0.0;
    double lateral = 0.0;
    double speed = 0.0;  ///< negative against the route direction

    bool operator==(const LaneMotion&) const = default;
};

struct ActorState {
    int id = 0;
    ActorKind kind = ActorKind::StaticObject;
    Vec2 position;
    Vec2 velocity;
    double heading = 0.0;
    Extent extent;
    bool dynamic = false;
    int section = -1;
    std::optional<EventId> event;  ///< set for actors spawned by a scripted event
    std::optional<LaneMotion> lane;  ///< set for traffic driving along the route

    double speed() const { return velocity.norm(); }
    Pose pose() const { return {position, heading}; }
    bool operator==(const ActorState&) const = default;
};

struct LightState {
    int actor_id = 0;
    LightPhase phase = LightPhase::Green;
    double since_change_s = 0.0;

    bool operator==(const LightState&) const = default;
};

/// World-frame trajectory of an actor spawned by an event.
struct SpawnedTrajectory {
    int actor_id = 0;
    EventId event = EventId::Dog;
    double spawn_t = 0.0;
    Vec2 origin;
    double initial_heading = 0.0;
    std::vector<std::pair<double, Vec2>> segments;  ///< (duration, world velocity)

    bool operator==(const SpawnedTrajectory&) const = default;
};

struct WorldState {
    std::size_t tick = 0;
    double t = 0.0;
    EgoState ego;
    std::vector<ActorState> actors;  ///< active non-ego actors, sorted by id
    std::vector<LightState> lights;
    std::bitset<kEventCount> triggered;
    std::bitset<kEventCount> active_events;
    std::vector<SpawnedTrajectory> spawned;

    const ActorState* actor(int id) const {
        for (const auto& a : actors)
            if (a.id == id) return &a;
        return nullptr;
    }

    bool operator==(const WorldState&) const = default;
};

inline LightState light_state(const ActorSpec& light, double t) {
    const auto& c = light.cycle;
    const double period = c.green_s + c.yellow_s + c.red_s;
    double u = std::fmod(t + c.offset_s, period);
    if (u < 0.0) u += period;
    if (u < c.green_s) return {light.id, LightPhase::Green, u};
    if (u < c.green_s + c.yellow_s) return {light.id, LightPhase::Yellow, u - c.green_s};
    return {light.id, LightPhase::Red, u - c.green_s - c.yellow_s};
}

namespace detail {

inline ActorState ambient_state(const ActorSpec& spec, const Route& route, double t) {
    ActorState a;
    a.id = spec.id;
    a.kind = spec.kind;
    a.extent = spec.extent;
    a.dynamic = spec.dynamic;
    a.section = spec.section;
    if (spec.route_s) {
        const double s = *spec.route_s + spec.direction * spec.speed * (t - spec.spawn_t);
        a.position = route.offset_point(s, spec.lateral);
        const Vec2 tangent = route.tangent(s) * static_cast<double>(spec.direction);
        a.heading = std::atan2(tangent.y, tangent.x);
        a.velocity = spec.dynamic ? tangent * spec.speed : Vec2{};
        if (spec.dynamic) a.lane = LaneMotion{s, spec.lateral, spec.direction * spec.speed};
        else a.heading = route.heading(s) + spec.heading;
    } else {
        a.position = spec.position;
        a.heading = spec.heading;
        if (spec.dynamic) {
            a.velocity = unit_from_heading(spec.heading) * spec.speed;
            a.position += a.velocity * (t - spec.spawn_t);
        }
    }
    return a;
}

inline ActorState spawned_state(const SpawnedTrajectory& traj, const EventActorScript& script, double t) {
    ActorState a;
    a.id = traj.actor_id;
    a.kind = script.kind;
    a.extent = script.extent;
    a.dynamic = script.kind != ActorKind::StaticObject && !is_sign_or_light(script.kind);
    a.event = traj.event;
    a.position = traj.origin;
    a.heading = traj.initial_heading;
    double remaining = t - traj.spawn_t;
    for (const auto& [duration, velocity] : traj.segments) {
        const double used = std::clamp(remaining, 0.0, duration);
        a.position += velocity * used;
        if (velocity.norm() > 1e-9) a.heading = std::atan2(velocity.y, velocity.x);
        remaining -= duration;
        if (remaining < 0.0) {
            a.velocity = velocity;
            return a;
        }
    }
    a.velocity = {};
    return a;
}

inline const EventActorScript* find_script(const ScenarioDef& sc, const SpawnedTrajectory& traj) {
    if (const auto* ev = sc.event(traj.event))
        for (const auto& a : ev->actors)
            if (a.id == traj.actor_id) return &a;
    return nullptr;
}

inline void refresh_actors(WorldState& w, const ScenarioDef& sc, const Route& route) {
    w.actors.clear();
    w.lights.clear();
    for (const auto& spec : sc.actors) {
        if (w.t < spec.spawn_t || w.t >= spec.despawn_t) continue;
        w.actors.push_back(ambient_state(spec, route, w.t));
        if (spec.kind == ActorKind::TrafficLight) w.lights.push_back(light_state(spec, w.t));
    }
    for (const auto& traj : w.spawned)
        if (const auto* script = find_script(sc, traj)) w.actors.push_back(spawned_state(traj, *script, w.t));
    std::sort(w.actors.begin(), w.actors.end(), [](const ActorState& a, const ActorState& b) { return a.id < b.id; });
}

}  // namespace detail

/// Re-derives the ego's route progress after it moved, searching near its previous progress.
inline void update_route_progress(EgoState& ego, const Route& route, double previous_s) {
    if (route.empty()) return;
    const double len = route.line().length();
    const double wrapped_prev = route.line().normalize(previous_s);
    const auto proj = route.line().project(ego.position, wrapped_prev, 40.0);
    double delta = proj.s - wrapped_prev;
    if (route.line().closed()) {
        if (delta > 0.5 * len) delta -= len;
        if (delta < -0.5 * len) delta += len;
    }
    ego.route_s = previous_s + delta;
    ego.edge = proj.segment;
    ego.lateral = proj.lateral;
}

inline WorldState initial_world(const ScenarioDef& sc) {
    WorldState w;
    const Route route(sc.network);
    if (!route.empty()) {
        w.ego.position = route.point(0.0);
        w.ego.heading = route.heading(0.0);
    }
    w.ego.speed = sc.initial_speed;
    detail::refresh_actors(w, sc, route);
    return w;
}

/// Advances the world by one tick. Deterministic in (world, scenario, control).
inline WorldState step_world(const WorldState& world, const ScenarioDef& sc, const ControlCommand& control,
                             const Route& route) {
    WorldState next = world;
    next.tick = world.tick + 1;
    next.t = static_cast<double>(next.tick) * sc.tick_dt;

    next.ego = integrate_ego(sc.plant, world.ego, control, sc.tick_dt);
    update_route_progress(next.ego, route, world.ego.route_s);

    // expire finished events and their actors
    std::erase_if(next.spawned, [&](const SpawnedTrajectory& traj) {
        const auto* ev = sc.event(traj.event);
        return !ev || next.t >= ev->trigger_time_s + ev->lifetime_s;
    });
    for (const auto& ev : sc.events) {
        const auto idx = static_cast<std::size_t>(ev.id);
        if (!next.triggered[idx] && ev.trigger_time_s <= next.t) {
            next.triggered[idx] = true;
            for (const auto& script : ev.actors) {
                const double s = next.ego.route_s + script.ahead_m;
                SpawnedTrajectory traj;
                traj.actor_id = script.id;
                traj.event = ev.id;
                traj.spawn_t = next.t;
                traj.origin = route.offset_point(s, script.lateral_m);
                const Vec2 along = route.tangent(s);
                const Vec2 left = along.perp();
                traj.initial_heading = std::atan2(along.y, along.x);
                for (const auto& seg : script.profile)
                    traj.segments.emplace_back(seg.duration_s, along * seg.v_along + left * seg.v_lateral);
                if (!traj.segments.empty() && traj.segments.front().second.norm() > 1e-9)
                    traj.initial_heading = std::atan2(traj.segments.front().second.y, traj.segments.front().second.x);
                if (next.t < ev.trigger_time_s + ev.lifetime_s) next.spawned.push_back(std::move(traj));
            }
        }
        next.active_events[idx] = next.triggered[idx] && next.t < ev.trigger_time_s + ev.lifetime_s;
    }
    detail::refresh_actors(next, sc, route);
    return next;
}

inline WorldState step_world(const WorldState& world, const ScenarioDef& sc, const ControlCommand& control) {
    return step_world(world, sc, control, Route(sc.network));
}

/// Actors whose center lies within diameter/2 of `center`; the ego is never included.
inline std::vector<ActorState> query_objects_within(const WorldState& world, Vec2 center, double diameter) {
    if (!(diameter > 0.0)) throw DomainError("query diameter must be positive");
    const double radius = 0.5 * diameter;
    std::vector<ActorState> out;
    for (const auto& a : world.actors)
        if (a.kind != ActorKind::EgoCar && distance(a.position, center) <= radius) out.push_back(a);
    return out;
}

/// Half-open interval during which the ego must hold still after an event.
inline bool in_post_event_stop(const ScenarioDef& sc, double t) {
    for (const auto& ev : sc.events) {
        if (ev.post_event_stop_s <= 0.0) continue;
        const double start = ev.trigger_time_s + ev.lifetime_s;
        if (t >= start && t < start + ev.post_event_stop_s) return true;
    }
    return false;
}

}  // namespace hudsim
