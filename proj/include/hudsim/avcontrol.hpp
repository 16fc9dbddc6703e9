#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "hazard.hpp"
#include "scenario.hpp"
#include "vehicle.hpp"

namespace hudsim {

inline constexpr double kGravity = 9.80665;

/// Gains and shaping for one PID channel.
struct PidChannelGains {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    double out_min = -1.0;
    double out_max = 1.0;
    double integral_limit = 10.0;  ///< clamp on the integral state (error * s)
    double slew_rate = 1.0;        ///< max |d output / dt|
};

struct PidGains {
    // Hand-tuned on a 0 -> 10 m/s step on the default plant: raise kp until the
    // rise is limited by max_accel, then ki until the peak approaches 2 %.
    PidChannelGains speed{0.8, 0.05, 0.0, -8.0, 3.0, 20.0, 8.0};
    PidChannelGains heading{0.9, 0.0, 0.05, -0.6, 0.6, 1.0, 1.2};
};

struct ControllerConfig {
    PidGains gains;
    double lookahead_min_m = 6.0;
    double lookahead_time_s = 0.8;
    double route_lost_m = 20.0;

    // avoidance
    double safety_margin_m = 3.0;
    double comfort_decel = 4.0;
    std::vector<double> lateral_offsets_m{1.75, 3.0};
    double offset_rate = 2.0;       ///< m/s, lateral offset ramp
    double avoid_hold_s = 2.5;      ///< keep an evasive offset this long after it was last needed
    double emergency_hold_s = 1.5;
    double avoid_slowdown = 0.6;    ///< speed factor while swerving
    double follow_gap_m = 6.0;
    double follow_time_gap_s = 1.2;
    double follow_gain = 0.5;
    double crossing_speed = 4.0;    ///< m/s; cars cutting across the path faster than this are braked for, never swerved around

    double platform_max_deg = 12.0;

    /// Applies `[controller]` overrides; unknown keys throw.
    void apply(const std::map<std::string, double>& settings) {
        for (const auto& [key, value] : settings) {
            auto channel = [&](PidChannelGains& c, const std::string& suffix) {
                if (suffix == "kp") c.kp = value;
                else if (suffix == "ki") c.ki = value;
                else if (suffix == "kd") c.kd = value;
                else if (suffix == "out_min") c.out_min = value;
                else if (suffix == "out_max") c.out_max = value;
                else if (suffix == "integral_limit") c.integral_limit = value;
                else if (suffix == "slew_rate") c.slew_rate = value;
                else return false;
                return true;
            };
            bool ok = false;
            if (key.starts_with("speed_")) ok = channel(gains.speed, key.substr(6));
            else if (key.starts_with("heading_")) ok = channel(gains.heading, key.substr(8));
            else if (key == "lookahead_min_m") { lookahead_min_m = value; ok = true; }
            else if (key == "lookahead_time_s") { lookahead_time_s = value; ok = true; }
            else if (key == "route_lost_m") { route_lost_m = value; ok = true; }
            else if (key == "safety_margin_m") { safety_margin_m = value; ok = true; }
            else if (key == "comfort_decel") { comfort_decel = value; ok = true; }
            else if (key == "offset_rate") { offset_rate = value; ok = true; }
            else if (key == "crossing_speed") { crossing_speed = value; ok = true; }
            else if (key == "avoid_hold_s") { avoid_hold_s = value; ok = true; }
            else if (key == "platform_max_deg") { platform_max_deg = value; ok = true; }
            if (!ok) throw ValidationError("unknown controller setting '" + key + "'");
        }
        validate();
    }

    void validate() const {
        for (const auto* c : {&gains.speed, &gains.heading}) {
            if (!std::isfinite(c->out_min) || !std::isfinite(c->out_max) || c->out_min > c->out_max)
                throw ValidationError("PID output limits must be finite and ordered");
            if (!(c->slew_rate > 0.0)) throw ValidationError("PID slew rate must be positive");
        }
        if (!(platform_max_deg > 0.0)) throw ValidationError("platform_max_deg must be positive");
    }
};

// ---------------------------------------------------------------------------
// PID

/// Single-channel PID with integral clamping, conditional integration and slew-limited output.
class PidController {
public:
    PidController() = default;
    explicit PidController(PidChannelGains gains) : gains_(gains) {}

    double step(double error, double dt) {
        if (!(dt > 0.0)) throw DomainError("dt must be positive");
        const double derivative = primed_ ? (error - prev_error_) / dt : 0.0;
        const double candidate_integral = std::clamp(integral_ + error * dt, -gains_.integral_limit, gains_.integral_limit);

        double raw = gains_.kp * error + gains_.ki * candidate_integral + gains_.kd * derivative;
        // anti-windup: freeze the integrator while it would push further into saturation
        const bool saturating = (raw > gains_.out_max && error > 0.0) || (raw < gains_.out_min && error < 0.0);
        if (!saturating) integral_ = candidate_integral;
        raw = gains_.kp * error + gains_.ki * integral_ + gains_.kd * derivative;

        double out = std::clamp(raw, gains_.out_min, gains_.out_max);
        const double max_delta = gains_.slew_rate * dt;
        out = std::clamp(out, output_ - max_delta, output_ + max_delta);
        output_ = out;
        prev_error_ = error;
        primed_ = true;
        return out;
    }

    double output() const { return output_; }
    double integral() const { return integral_; }
    const PidChannelGains& gains() const { return gains_; }

    void reset(double output = 0.0) {
        integral_ = 0.0;
        prev_error_ = 0.0;
        output_ = output;
        primed_ = false;
    }

private:
    PidChannelGains gains_;
    double integral_ = 0.0;
    double prev_error_ = 0.0;
    double output_ = 0.0;
    bool primed_ = false;
};

struct Setpoints {
    double target_speed = 0.0;
    double target_heading = 0.0;
    double lateral_offset = 0.0;
    bool emergency = false;
};

/// Speed and heading PID pair owned by the simulation thread.
class PidDriver {
public:
    explicit PidDriver(const PidGains& gains = {}) : speed_(gains.speed), heading_(gains.heading) {}

    ControlCommand step(const EgoState& ego, const Setpoints& sp, double dt) {
        const double accel = speed_.step(sp.target_speed - ego.speed, dt);
        const double steer = heading_.step(wrap_angle(sp.target_heading - ego.heading), dt);
        return {accel, steer};
    }

    const PidController& speed_channel() const { return speed_; }
    const PidController& heading_channel() const { return heading_; }

private:
    PidController speed_;
    PidController heading_;
};

/// One control step from fresh controller state, for callers that hold no history.
inline ControlCommand pid_step(const PidGains& gains, const EgoState& ego, const Setpoints& sp, double dt) {
    PidDriver driver(gains);
    return driver.step(ego, sp, dt);
}

struct StepResponse {
    std::vector<double> time;
    std::vector<double> speed;
    std::vector<double> command;
    double peak = 0.0;
    double overshoot_pct = 0.0;
    double settling_time_s = 0.0;  ///< last entry into the +-2 % band
};

/// Closed-loop speed step from rest on the longitudinal plant.
inline StepResponse measure_step_response(const PidChannelGains& gains, const VehiclePlant& plant, double target,
                                          double duration_s, double dt) {
    StepResponse r;
    PidController pid(gains);
    double speed = 0.0;
    double accel = 0.0;
    const auto n = static_cast<std::size_t>(std::llround(duration_s / dt));
    r.time.reserve(n + 1);
    r.time.push_back(0.0);
    r.speed.push_back(0.0);
    r.command.push_back(0.0);
    for (std::size_t i = 1; i <= n; ++i) {
        const double cmd = std::clamp(pid.step(target - speed, dt), -plant.max_decel, plant.max_accel);
        const auto next = integrate_longitudinal(plant, speed, accel, cmd, dt);
        speed = next.speed;
        accel = next.accel;
        r.time.push_back(static_cast<double>(i) * dt);
        r.speed.push_back(speed);
        r.command.push_back(cmd);
    }
    r.peak = *std::max_element(r.speed.begin(), r.speed.end());
    r.overshoot_pct = std::max(0.0, (r.peak - target) / target * 100.0);
    const double band = 0.02 * std::abs(target);
    r.settling_time_s = 0.0;
    for (std::size_t i = r.speed.size(); i-- > 0;) {
        if (std::abs(r.speed[i] - target) > band) {
            r.settling_time_s = i + 1 < r.time.size() ? r.time[i + 1] : std::numeric_limits<double>::infinity();
            break;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Path following and avoidance

/// Target speed from the current edge limit (capped by `hazard_cap`), heading toward the lookahead point.
inline Setpoints follow_path(const EgoState& ego, const Route& route, const ControllerConfig& cfg,
                             double hazard_cap = std::numeric_limits<double>::infinity(), double lateral_offset = 0.0) {
    if (route.empty()) throw RouteLostError("no route to follow");
    if (std::abs(ego.lateral) > cfg.route_lost_m)
        throw RouteLostError("ego is " + std::to_string(std::abs(ego.lateral)) + " m off route");
    Setpoints sp;
    double limit = route.segment(ego.edge).speed_limit;
    // brake ahead of lower limits on the coming edges
    const auto& line = route.line();
    const double reach = ego.speed * ego.speed / (2.0 * cfg.comfort_decel) + cfg.lookahead_min_m;
    double dist = line.segment_start(ego.edge + 1) - line.normalize(ego.route_s);
    for (std::size_t k = ego.edge, n = 0; n < route.segment_count() && dist < reach; ++n) {
        const std::size_t next = route.next_segment(k);
        if (next == k) break;
        k = next;
        const double v = route.segment(k).speed_limit;
        limit = std::min(limit, std::sqrt(v * v + 2.0 * cfg.comfort_decel * std::max(0.0, dist)));
        dist += line.segment_start(k + 1) - line.segment_start(k);
    }
    sp.target_speed = std::max(0.0, std::min(limit, hazard_cap));
    const double lookahead = std::max(cfg.lookahead_min_m, cfg.lookahead_time_s * ego.speed);
    const Vec2 target = route.offset_point(ego.route_s + lookahead, lateral_offset);
    const Vec2 d = target - ego.position;
    sp.target_heading = std::atan2(d.y, d.x);
    sp.lateral_offset = lateral_offset;
    return sp;
}

enum class AvoidanceMode { None, Follow, SlowDown, Swerve, EmergencyStop };

inline std::string_view to_string(AvoidanceMode m) {
    switch (m) {
        case AvoidanceMode::None: return "None";
        case AvoidanceMode::Follow: return "Follow";
        case AvoidanceMode::SlowDown: return "SlowDown";
        case AvoidanceMode::Swerve: return "Swerve";
        case AvoidanceMode::EmergencyStop: return "EmergencyStop";
    }
    return "?";
}

struct AvoidancePlan {
    AvoidanceMode mode = AvoidanceMode::None;
    double speed_cap = std::numeric_limits<double>::infinity();
    std::optional<double> lateral_offset;  ///< evasive offset from the route centerline
    bool emergency = false;
    int critical_object = -1;
    std::vector<int> assessed_cars;  ///< cars whose paths the ego is checking for priority
};

/// Picks the mildest maneuver that clears each predicted collision: follow or slow down,
/// then swerve around the obstacle, else an emergency stop.
inline AvoidancePlan plan_avoidance(const EgoState& ego, std::span<const HazardAssessment> hazards,
                                    std::span<const ActorState> objects, const Route& route, const Extent& ego_extent,
                                    const ControllerConfig& cfg, const HazardParams& hp = {}) {
    AvoidancePlan plan;
    double worst_severity = -1.0;
    const Vec2 fwd = unit_from_heading(ego.heading);
    const auto find = [&](int id) -> const ActorState* {
        for (const auto& o : objects)
            if (o.id == id) return &o;
        return nullptr;
    };
    std::vector<SampledPath> others;
    const auto escalate = [&](AvoidanceMode m) {
        if (static_cast<int>(m) > static_cast<int>(plan.mode)) plan.mode = m;
    };

    for (const auto& h : hazards) {
        if (!h.time_to_collision_s) continue;
        const ActorState* obj = find(h.object_id);
        if (!obj) continue;
        if (is_car(obj->kind) && obj->dynamic) plan.assessed_cars.push_back(obj->id);

        const Vec2 rel = obj->position - ego.position;
        const double v_along = obj->velocity.dot(fwd);
        const double v_across = obj->velocity.dot(fwd.perp());
        if (rel.dot(fwd) > 0.0 && v_along > 1.0 && std::abs(v_across) < 1.0) {
            // same-direction traffic ahead: keep a time gap
            const double gap = rel.dot(fwd) - 0.5 * (obj->extent.length + ego_extent.length);
            const double desired = cfg.follow_gap_m + cfg.follow_time_gap_s * v_along;
            plan.speed_cap = std::min(plan.speed_cap, std::max(0.0, v_along + cfg.follow_gain * (gap - desired)));
            escalate(AvoidanceMode::Follow);
            continue;
        }
        if (!h.warning_active) continue;

        const double room = std::max(h.distance_to_collision - cfg.safety_margin_m, 0.0);
        const double needed_decel = room > 0.0 ? ego.speed * ego.speed / (2.0 * room) : std::numeric_limits<double>::infinity();
        if (needed_decel <= cfg.comfort_decel) {
            plan.speed_cap = std::min({plan.speed_cap, ego.speed, std::sqrt(2.0 * cfg.comfort_decel * room)});
            escalate(AvoidanceMode::SlowDown);
            continue;
        }

        if (is_car(obj->kind) && std::abs(v_across) > cfg.crossing_speed && std::abs(v_across) > std::abs(v_along)) {
            plan.speed_cap = 0.0;
            plan.emergency = true;
            plan.critical_object = obj->id;
            escalate(AvoidanceMode::EmergencyStop);
            continue;
        }

        // swerve away from where the obstacle is heading (or from its side of the lane when static)
        const Vec2 left = route.normal(ego.route_s);
        double away = -(obj->velocity.dot(left));
        if (std::abs(away) < 0.2) away = -(obj->position - ego.position).dot(left);
        const double preferred = away >= 0.0 ? 1.0 : -1.0;
        // an evasive path must stay clear of everything, not just this obstacle
        if (others.empty())
            for (const auto& o : objects)
                if (!is_sign_or_light(o.kind)) others.push_back(predicted_path(o, route, hp.sample_dt, hp.horizon_s));
        const auto clear = [&](const SampledPath& path) {
            for (const auto& other : others)
                if (predict_collision(path, other, hp.horizon_s, hp.collision_margin)) return false;
            return true;
        };
        std::optional<double> chosen;
        for (double side : {preferred, -preferred}) {
            for (double mag : cfg.lateral_offsets_m) {
                EgoState slowed = ego;
                slowed.speed = ego.speed * cfg.avoid_slowdown;
                const auto path = ego_route_path(slowed, route, ego_extent, side * mag, hp.sample_dt, hp.horizon_s);
                if (clear(path)) {
                    chosen = side * mag;
                    break;
                }
            }
            if (chosen) break;
        }
        if (chosen) {
            if (h.severity > worst_severity) {
                worst_severity = h.severity;
                plan.lateral_offset = chosen;
                plan.critical_object = obj->id;
            }
            plan.speed_cap = std::min(plan.speed_cap, ego.speed * cfg.avoid_slowdown);
            escalate(AvoidanceMode::Swerve);
        } else {
            plan.speed_cap = 0.0;
            plan.emergency = true;
            plan.critical_object = obj->id;
            escalate(AvoidanceMode::EmergencyStop);
        }
    }
    if (plan.emergency) plan.lateral_offset.reset();
    return plan;
}

/// Applies a plan to follow_path setpoints. Never raises the target speed.
inline Setpoints apply_plan(Setpoints base, const AvoidancePlan& plan) {
    base.target_speed = std::min(base.target_speed, std::max(0.0, plan.speed_cap));
    if (plan.emergency) {
        base.target_speed = 0.0;
        base.emergency = true;
    }
    return base;
}

// ---------------------------------------------------------------------------
// Motion cueing

struct MotionCue {
    double pitch_deg = 0.0;
    double roll_deg = 0.0;
    bool clamped = false;
};

/// Tilt that makes gravity's component reproduce the sustained acceleration.
inline MotionCue tilt_coordination(double accel_long, double accel_lat, double max_deg = 12.0) {
    if (!std::isfinite(accel_long) || !std::isfinite(accel_lat)) throw DomainError("accelerations must be finite");
    constexpr double to_deg = 180.0 / std::numbers::pi;
    const double pitch = std::asin(std::clamp(accel_long / kGravity, -1.0, 1.0)) * to_deg;
    const double roll = std::asin(std::clamp(accel_lat / kGravity, -1.0, 1.0)) * to_deg;
    MotionCue cue;
    cue.pitch_deg = std::clamp(pitch, -max_deg, max_deg);
    cue.roll_deg = std::clamp(roll, -max_deg, max_deg);
    cue.clamped = cue.pitch_deg != pitch || cue.roll_deg != roll;
    return cue;
}

// ---------------------------------------------------------------------------
// Autopilot

struct AutopilotOutput {
    ControlCommand command;
    Setpoints setpoints;
    AvoidancePlan plan;
};

/// Holds everything the controller remembers between ticks: PID state, the evasive offset and its hold timer.
class Autopilot {
public:
    Autopilot(ControllerConfig cfg, Extent ego_extent) : cfg_(std::move(cfg)), extent_(ego_extent), driver_(cfg_.gains) {}

    /// Lateral offset the ego is currently steering toward; the hazard prediction uses it.
    double current_offset() const { return offset_; }
    const ControllerConfig& config() const { return cfg_; }

    AutopilotOutput update(const EgoState& ego, const Route& route, std::span<const HazardAssessment> hazards,
                           std::span<const ActorState> objects, bool hold_stop, double t, double dt,
                           const HazardParams& hp = {}) {
        AutopilotOutput out;
        out.plan = plan_avoidance(ego, hazards, objects, route, extent_, cfg_, hp);
        if (out.plan.lateral_offset) {
            target_offset_ = *out.plan.lateral_offset;
            offset_until_ = t + cfg_.avoid_hold_s;
        } else if (t >= offset_until_) {
            target_offset_ = 0.0;
        }
        if (out.plan.emergency) emergency_until_ = t + cfg_.emergency_hold_s;
        const double max_step = cfg_.offset_rate * dt;
        offset_ += std::clamp(target_offset_ - offset_, -max_step, max_step);

        double cap = hold_stop ? 0.0 : std::numeric_limits<double>::infinity();
        if (t < emergency_until_) {
            cap = 0.0;
            out.plan.emergency = true;
        }
        out.setpoints = apply_plan(follow_path(ego, route, cfg_, cap, offset_), out.plan);
        out.setpoints.emergency = out.setpoints.emergency || t < emergency_until_;
        out.command = driver_.step(ego, out.setpoints, dt);
        return out;
    }

private:
    ControllerConfig cfg_;
    Extent extent_;
    PidDriver driver_;
    double offset_ = 0.0;
    double target_offset_ = 0.0;
    double offset_until_ = -1.0;
    double emergency_until_ = -1.0;
};

}  // namespace hudsim
