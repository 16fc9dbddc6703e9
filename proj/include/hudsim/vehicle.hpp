#pragma once

#include <algorithm>
#include <cmath>

#include "geometry.hpp"

namespace hudsim {

/// Actuator request. Negative accel brakes; steer is the front-wheel angle.
struct ControlCommand {
    double accel = 0.0;  ///< m/s^2
    double steer = 0.0;  ///< rad

    bool operator==(const ControlCommand&) const = default;
};

struct EgoState {
    Vec2 position;
    double heading = 0.0;      ///< rad
    double speed = 0.0;        ///< m/s, never negative
    double accel_long = 0.0;   ///< realized longitudinal acceleration, m/s^2
    double accel_lat = 0.0;    ///< m/s^2, positive to the left
    double steer = 0.0;        ///< applied wheel angle, rad
    std::size_t edge = 0;      ///< index of the current route edge
    double route_s = 0.0;      ///< distance travelled along the route, unwrapped
    double lateral = 0.0;      ///< signed cross-track offset from the route

    bool operator==(const EgoState&) const = default;
};

/// Kinematic bicycle with a first-order lag between commanded and realized acceleration.
struct VehiclePlant {
    double wheelbase = 2.7;
    double accel_lag_s = 0.3;
    double max_accel = 3.0;
    double max_decel = 8.0;
    double max_steer = 0.6;
    Extent extent{4.5, 1.9, 1.5};

    ControlCommand saturate(ControlCommand c) const {
        return {std::clamp(c.accel, -max_decel, max_accel), std::clamp(c.steer, -max_steer, max_steer)};
    }
};

/// Exact zero-order-hold update of the longitudinal channel.
struct LongitudinalStep {
    double speed;
    double accel;
};

inline LongitudinalStep integrate_longitudinal(const VehiclePlant& plant, double speed, double accel, double command,
                                               double dt) {
    const double decay = std::exp(-dt / plant.accel_lag_s);
    const double next_accel = command + (accel - command) * decay;
    double next_speed = speed + command * dt + (accel - command) * plant.accel_lag_s * (1.0 - decay);
    if (next_speed < 0.0) return {0.0, std::max(next_accel, 0.0)};
    return {next_speed, next_accel};
}

/// Advances pose and speed by one tick. Route bookkeeping is left to the caller.
inline EgoState integrate_ego(const VehiclePlant& plant, const EgoState& ego, ControlCommand command, double dt) {
    command = plant.saturate(command);
    EgoState next = ego;
    const auto lon = integrate_longitudinal(plant, ego.speed, ego.accel_long, command.accel, dt);
    const double mean_speed = 0.5 * (ego.speed + lon.speed);
    const double yaw_rate = mean_speed * std::tan(command.steer) / plant.wheelbase;
    const double mid_heading = ego.heading + 0.5 * yaw_rate * dt;
    next.position = ego.position + unit_from_heading(mid_heading) * (mean_speed * dt);
    next.heading = wrap_angle(ego.heading + yaw_rate * dt);
    next.speed = lon.speed;
    next.accel_long = lon.accel;
    next.steer = command.steer;
    next.accel_lat = lon.speed * lon.speed * std::tan(command.steer) / plant.wheelbase;
    return next;
}

}  // namespace hudsim
