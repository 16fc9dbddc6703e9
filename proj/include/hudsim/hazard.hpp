#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "scenario.hpp"

namespace hudsim {

struct ReactionModel {
    double reaction_time_s = 1.5;
    double assumed_decel = 6.0;  ///< m/s^2
};

struct HazardParams {
    ReactionModel reaction;
    double color_exponent = 3.0;
    double flash_high_hz = 4.0;
    double flash_low_hz = 1.0;
    double horizon_s = 4.0;
    double sample_dt = 0.1;
    double collision_margin = 0.3;  ///< inflation of both footprints, m
    double sign_notice_s = 2.0;     ///< how long a sign or light change keeps flashing
};

// ---------------------------------------------------------------------------
// Collision prediction

/// Future poses sampled every `dt` seconds, starting now.
struct SampledPath {
    double dt = 0.1;
    std::vector<Pose> poses;
    Extent extent;
};

struct CollisionPrediction {
    Vec2 point;                ///< midpoint of both centers at first contact
    double time_s = 0.0;       ///< time to impact
    std::size_t sample = 0;
};

inline SampledPath constant_velocity_path(const Pose& pose, Vec2 velocity, const Extent& extent, double dt, double horizon_s) {
    SampledPath path{dt, {}, extent};
    const auto n = static_cast<std::size_t>(std::floor(horizon_s / dt + 1e-9)) + 1;
    const double heading = velocity.norm() > 1e-9 ? std::atan2(velocity.y, velocity.x) : pose.heading;
    path.poses.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        path.poses.push_back({pose.position + velocity * (static_cast<double>(i) * dt), i == 0 ? pose.heading : heading});
    return path;
}

/// Earliest sample at which the two footprints (inflated by `margin`) overlap.
inline std::optional<CollisionPrediction> predict_collision(const SampledPath& ego, const SampledPath& obstacle,
                                                            double horizon_s, double margin = 0.0) {
    const std::size_t n = std::min(ego.poses.size(), obstacle.poses.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * ego.dt;
        if (t > horizon_s + 1e-9) break;
        const auto a = make_box(ego.poses[i], ego.extent, margin);
        const auto b = make_box(obstacle.poses[i], obstacle.extent, margin);
        if (overlaps(a, b)) return CollisionPrediction{(ego.poses[i].position + obstacle.poses[i].position) * 0.5, t, i};
    }
    return std::nullopt;
}

/// Ego prediction: constant speed along the route at a fixed lateral offset, first sample at the current pose.
inline SampledPath ego_route_path(const EgoState& ego, const Route& route, const Extent& extent, double lateral_offset,
                                  double dt, double horizon_s) {
    SampledPath path{dt, {}, extent};
    const auto n = static_cast<std::size_t>(std::floor(horizon_s / dt + 1e-9)) + 1;
    path.poses.reserve(n);
    path.poses.push_back({ego.position, ego.heading});
    for (std::size_t i = 1; i < n; ++i) {
        const double s = ego.route_s + ego.speed * static_cast<double>(i) * dt;
        const double lateral = ego.lateral + (lateral_offset - ego.lateral) * std::min(1.0, static_cast<double>(i) * dt / 1.0);
        path.poses.push_back({route.offset_point(s, lateral), route.heading(s)});
    }
    return path;
}

/// Lane-following prediction: keeps the actor's offset and signed speed along the route.
inline SampledPath lane_path(const LaneMotion& lane, const Route& route, const Extent& extent, double dt, double horizon_s) {
    SampledPath path{dt, {}, extent};
    const auto n = static_cast<std::size_t>(std::floor(horizon_s / dt + 1e-9)) + 1;
    path.poses.reserve(n);
    const double flip = lane.speed < 0.0 ? std::numbers::pi : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = lane.route_s + lane.speed * static_cast<double>(i) * dt;
        path.poses.push_back({route.offset_point(s, lane.lateral), wrap_angle(route.heading(s) + flip)});
    }
    return path;
}

/// Lane traffic is predicted along its lane, everything else at constant velocity.
inline SampledPath predicted_path(const ActorState& obj, const Route& route, double dt, double horizon_s) {
    if (obj.lane) return lane_path(*obj.lane, route, obj.extent, dt, horizon_s);
    return constant_velocity_path(obj.pose(), obj.velocity, obj.extent, dt, horizon_s);
}

inline double path_length_to(const SampledPath& path, std::size_t sample) {
    double len = 0.0;
    for (std::size_t i = 1; i <= sample && i < path.poses.size(); ++i)
        len += distance(path.poses[i - 1].position, path.poses[i].position);
    return len;
}

// ---------------------------------------------------------------------------
// Warning distance and hazard index

/// Reaction distance plus braking distance at the assumed deceleration.
inline double warning_distance(double speed, const ReactionModel& model = {}) {
    if (speed < 0.0) throw DomainError("speed must be non-negative");
    return speed * model.reaction_time_s + speed * speed / (2.0 * model.assumed_decel);
}

inline double hazard_severity(double distance_m, double d_warn) {
    if (distance_m < 0.0 || std::isnan(distance_m)) throw DomainError("distance must be non-negative");
    if (d_warn < 0.0) throw DomainError("warning distance must be non-negative");
    if (d_warn == 0.0) return 0.0;
    return 1.0 - std::clamp(distance_m / d_warn, 0.0, 1.0);
}

struct HazardAssessment {
    int object_id = 0;
    std::optional<Vec2> collision_point;
    std::optional<double> time_to_collision_s;
    double distance_to_collision = std::numeric_limits<double>::infinity();  ///< inf when no collision is predicted
    double range_m = 0.0;                                                    ///< center-to-center distance from ego
    double warning_distance = 0.0;
    double ratio = 1.0;
    double severity = 0.0;
    bool warning_active = false;
};

inline HazardAssessment make_assessment(int object_id, double range_m, double distance_to_collision, double d_warn) {
    HazardAssessment h;
    h.object_id = object_id;
    h.range_m = range_m;
    h.distance_to_collision = distance_to_collision;
    h.warning_distance = d_warn;
    h.ratio = d_warn > 0.0 ? std::clamp(distance_to_collision / d_warn, 0.0, 1.0) : 1.0;
    h.severity = hazard_severity(distance_to_collision, d_warn);
    h.warning_active = distance_to_collision < d_warn;
    return h;
}

/// Assesses every non-sign actor against the ego's predicted path.
inline std::vector<HazardAssessment> assess_hazards(const WorldState& world, std::span<const ActorState> objects,
                                                    const Route& route, const Extent& ego_extent, double ego_lateral_offset,
                                                    const HazardParams& params) {
    std::vector<HazardAssessment> out;
    out.reserve(objects.size());
    const auto ego_path = ego_route_path(world.ego, route, ego_extent, ego_lateral_offset, params.sample_dt, params.horizon_s);
    const double d_warn = warning_distance(world.ego.speed, params.reaction);
    for (const auto& obj : objects) {
        const double range = distance(obj.position, world.ego.position);
        double dist = std::numeric_limits<double>::infinity();
        std::optional<CollisionPrediction> hit;
        if (!is_sign_or_light(obj.kind)) {
            const auto obs_path = predicted_path(obj, route, params.sample_dt, params.horizon_s);
            hit = predict_collision(ego_path, obs_path, params.horizon_s, params.collision_margin);
            if (hit) dist = path_length_to(ego_path, hit->sample);
        }
        auto h = make_assessment(obj.id, range, dist, d_warn);
        if (hit) {
            h.collision_point = hit->point;
            h.time_to_collision_s = hit->time_s;
        }
        out.push_back(h);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Presentation

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    bool operator==(const Rgb&) const = default;
};

/// Perceptual interpolation parameter: (e^{k s} - 1) / (e^k - 1).
inline double color_parameter(double severity, double exponent = 3.0) {
    if (!(severity >= 0.0 && severity <= 1.0)) throw DomainError("severity must lie in [0, 1]");
    if (exponent == 0.0) return severity;
    return std::expm1(exponent * severity) / std::expm1(exponent);
}

/// Green at severity 0, red at severity 1.
inline Rgb color_code(double severity, double exponent = 3.0) {
    const double u = color_parameter(severity, exponent);
    const auto channel = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); };
    return {channel(255.0 * u), channel(255.0 * (1.0 - u)), 0};
}

enum class AudioCue { None, DangerAlert, SignChime };

inline std::string_view to_string(AudioCue a) {
    switch (a) {
        case AudioCue::None: return "None";
        case AudioCue::DangerAlert: return "DangerAlert";
        case AudioCue::SignChime: return "SignChime";
    }
    return "?";
}

struct WarningState {
    Rgb color;
    double flash_hz = 0.0;
    AudioCue audio = AudioCue::None;

    bool operator==(const WarningState&) const = default;
};

/// `sign_event` marks a recent light change or newly recognized sign; `audio_edge` gates the one-shot sound.
inline WarningState warning_state(const HazardAssessment& h, ActorKind kind, bool sign_event, bool audio_edge = true,
                                  const HazardParams& params = {}) {
    WarningState w;
    w.color = color_code(h.severity, params.color_exponent);
    if (h.warning_active) {
        w.flash_hz = params.flash_high_hz;
        if (audio_edge) w.audio = AudioCue::DangerAlert;
    } else if (sign_event && is_sign_or_light(kind)) {
        w.flash_hz = params.flash_low_hz;
        if (audio_edge) w.audio = AudioCue::SignChime;
    }
    return w;
}

/// Rising-edge detector per object, owned by the simulation loop.
class EdgeLatch {
public:
    bool rising(int id, bool active) {
        bool& prev = state_[id];
        const bool edge = active && !prev;
        prev = active;
        return edge;
    }

private:
    std::map<int, bool> state_;
};

}  // namespace hudsim
