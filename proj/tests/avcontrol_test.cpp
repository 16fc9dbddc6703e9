#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hudsim/avcontrol.hpp"
#include "hudsim/scenario.hpp"

using namespace hudsim;

namespace {

ScenarioDef l_road() {
    return parse_scenario(R"(
[scenario]
duration_s = 60
route = 1 2 3
[network]
node id=1 x=0 y=0 speed_limit=12
node id=2 x=100 y=0 speed_limit=8
node id=3 x=100 y=100 speed_limit=8
chain ids=1,2,3
)");
}

EgoState ego_at(const Route& route, Vec2 p, double heading, double speed, double s_hint) {
    EgoState e;
    e.position = p;
    e.heading = heading;
    e.speed = speed;
    update_route_progress(e, route, s_hint);
    return e;
}

/// Closed speed loop with the plant integrated by classical RK4 on fine substeps.
std::vector<double> rk4_step_trace(const PidChannelGains& gains, const VehiclePlant& plant, double target, double duration, double dt) {
    PidController pid(gains);
    double v = 0.0, a = 0.0;
    std::vector<double> trace{0.0};
    const int sub = 200;
    const double h = dt / sub;
    const auto n = static_cast<int>(std::llround(duration / dt));
    for (int i = 0; i < n; ++i) {
        const double u = std::clamp(pid.step(target - v, dt), -plant.max_decel, plant.max_accel);
        for (int k = 0; k < sub; ++k) {
            auto f = [&](double, double aa) { return std::pair{aa, (u - aa) / plant.accel_lag_s}; };
            const auto [k1v, k1a] = f(v, a);
            const auto [k2v, k2a] = f(v + 0.5 * h * k1v, a + 0.5 * h * k1a);
            const auto [k3v, k3a] = f(v + 0.5 * h * k2v, a + 0.5 * h * k2a);
            const auto [k4v, k4a] = f(v + h * k3v, a + h * k3a);
            v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
            a += h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a);
        }
        trace.push_back(v);
    }
    return trace;
}

}  // namespace

TEST(FollowPath, StraightEdgeTargetsLimitAndEdgeHeading) {
    const auto sc = l_road();
    const Route route(sc.network);
    const auto ego = ego_at(route, {20, 0}, 0.0, 0.0, 20.0);
    const auto sp = follow_path(ego, route, {});
    EXPECT_DOUBLE_EQ(sp.target_speed, 12.0);
    EXPECT_NEAR(sp.target_heading, 0.0, 1e-12);
}

TEST(FollowPath, NearCornerHeadsToLookaheadPoint) {
    const auto sc = l_road();
    const Route route(sc.network);
    const auto ego = ego_at(route, {97, 0}, 0.0, 0.0, 97.0);
    const auto sp = follow_path(ego, route, {});  // 6 m lookahead lands at (100, 3)
    EXPECT_NEAR(sp.target_heading, std::atan2(3.0 - 0.0, 100.0 - 97.0), 1e-12);
}

TEST(FollowPath, ZeroCapStopsAndFarOffRouteThrows) {
    const auto sc = l_road();
    const Route route(sc.network);
    EXPECT_DOUBLE_EQ(follow_path(ego_at(route, {20, 0}, 0.0, 5.0, 20.0), route, {}, 0.0).target_speed, 0.0);
    EXPECT_THROW(follow_path(ego_at(route, {50, -30}, 0.0, 5.0, 50.0), route, {}), RouteLostError);
}

TEST(Pid, ZeroErrorGivesZeroCommand) {
    PidDriver d;
    EgoState e;
    e.speed = 7;
    for (int i = 0; i < 100; ++i) {
        const auto c = d.step(e, {7.0, 0.0, 0.0, false}, 1.0 / 90);
        EXPECT_EQ(c.accel, 0.0);
        EXPECT_EQ(c.steer, 0.0);
    }
    EXPECT_EQ(pid_step({}, e, {7.0, 0.0, 0.0, false}, 0.01), (ControlCommand{0.0, 0.0}));
}

TEST(Pid, BundledGainsMeetStepTarget) {
    const auto r = measure_step_response(PidGains{}.speed, VehiclePlant{}, 10.0, 30.0, 1.0 / 90);
    EXPECT_LE(r.peak, 10.5);
    EXPECT_LE(r.overshoot_pct, 5.0);
    EXPECT_LE(r.settling_time_s, 10.0);
}

TEST(Pid, StepTelemetryMatchesReferenceIntegrator) {
    const double dt = 1.0 / 90;
    const auto gains = PidGains{}.speed;
    const VehiclePlant plant;
    const auto r = measure_step_response(gains, plant, 10.0, 30.0, dt);
    const auto ref = rk4_step_trace(gains, plant, 10.0, 30.0, dt);
    ASSERT_EQ(ref.size(), r.speed.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - r.speed[i]));
    EXPECT_LT(worst, 1e-6);

    const double peak = *std::max_element(ref.begin(), ref.end());
    EXPECT_NEAR(r.overshoot_pct, std::max(0.0, (peak - 10.0) / 10.0 * 100.0), 1e-6);
    double settle = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
        if (std::abs(ref[i] - 10.0) > 0.2) settle = (i + 1) * dt;
    EXPECT_NEAR(r.settling_time_s, settle, 1e-6);
}

TEST(Pid, OutputRespectsSlewRate) {
    const auto gains = PidGains{}.speed;
    const double dt = 1.0 / 90;
    const auto r = measure_step_response(gains, VehiclePlant{}, 10.0, 20.0, dt);
    for (std::size_t i = 1; i < r.command.size(); ++i) EXPECT_LE(std::abs(r.command[i] - r.command[i - 1]), gains.slew_rate * dt + 1e-12);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> err(-20, 20);
    PidController pid(PidGains{}.heading);
    double prev = 0.0;
    for (int i = 0; i < 5000; ++i) {
        const double out = pid.step(err(rng), dt);
        EXPECT_LE(std::abs(out - prev), PidGains{}.heading.slew_rate * dt + 1e-12);
        prev = out;
    }
}

TEST(Tilt, AnalyticCases) {
    const auto zero = tilt_coordination(0, 0);
    EXPECT_EQ(zero.pitch_deg, 0.0);
    EXPECT_EQ(zero.roll_deg, 0.0);
    EXPECT_FALSE(zero.clamped);

    const auto ten = tilt_coordination(kGravity * std::sin(10.0 * std::numbers::pi / 180.0), 0);
    EXPECT_NEAR(ten.pitch_deg, 10.0, 1e-9);
    EXPECT_FALSE(ten.clamped);

    const auto sat = tilt_coordination(kGravity, 0);
    EXPECT_DOUBLE_EQ(sat.pitch_deg, 12.0);
    EXPECT_TRUE(sat.clamped);
    EXPECT_THROW(tilt_coordination(std::nan(""), 0), DomainError);
}

TEST(Tilt, OddSymmetryBeforeClamping) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> acc(-12, 12);
    for (int i = 0; i < 1000; ++i) {
        const double a = acc(rng), b = acc(rng);
        const auto p = tilt_coordination(a, b, 90.0);
        const auto m = tilt_coordination(-a, -b, 90.0);
        EXPECT_EQ(p.pitch_deg, -m.pitch_deg);
        EXPECT_EQ(p.roll_deg, -m.roll_deg);
    }
}

TEST(Avoidance, NoHazardsLeavesSetpointsUnchanged) {
    const auto sc = l_road();
    const Route route(sc.network);
    const auto ego = ego_at(route, {20, 0}, 0.0, 10.0, 20.0);
    const auto plan = plan_avoidance(ego, {}, {}, route, sc.plant.extent, {});
    EXPECT_EQ(plan.mode, AvoidanceMode::None);
    EXPECT_FALSE(plan.emergency);
    const auto base = follow_path(ego, route, {});
    const auto out = apply_plan(base, plan);
    EXPECT_EQ(out.target_speed, base.target_speed);
    EXPECT_EQ(out.target_heading, base.target_heading);
}

namespace {

AvoidancePlan plan_against(const ActorState& obstacle, double ego_speed, EgoState* ego_out = nullptr) {
    static const auto sc = l_road();
    static const Route route(sc.network);
    WorldState w;
    w.ego = ego_at(route, {20, 0}, 0.0, ego_speed, 20.0);
    w.actors = {obstacle};
    const auto hazards = assess_hazards(w, w.actors, route, sc.plant.extent, 0.0, {});
    if (ego_out) *ego_out = w.ego;
    return plan_avoidance(w.ego, hazards, w.actors, route, sc.plant.extent, {});
}

}  // namespace

TEST(Avoidance, CrossingAnimalIsPassedOnTheSideItComesFrom) {
    ActorState dog{};
    dog.id = 7;
    dog.kind = ActorKind::Dog;
    dog.extent = {0.9, 0.35, 0.6};
    dog.position = {34, -3.5};
    dog.velocity = {0, 4.0};  // running right to left across the lane
    dog.heading = std::numbers::pi / 2;
    dog.dynamic = true;
    const auto plan = plan_against(dog, 11.0);
    ASSERT_EQ(plan.mode, AvoidanceMode::Swerve);
    ASSERT_TRUE(plan.lateral_offset.has_value());
    EXPECT_LT(*plan.lateral_offset, 0.0);
    EXPECT_LT(plan.speed_cap, 11.0);
}

TEST(Avoidance, UnavoidableBlockageTriggersEmergencyStop) {
    ActorState wall{};
    wall.id = 8;
    wall.kind = ActorKind::StaticObject;
    wall.extent = {1.0, 12.0, 2.0};
    wall.position = {35, 0};
    const auto plan = plan_against(wall, 12.0);
    EXPECT_EQ(plan.mode, AvoidanceMode::EmergencyStop);
    EXPECT_TRUE(plan.emergency);
    EXPECT_DOUBLE_EQ(plan.speed_cap, 0.0);
    EXPECT_FALSE(plan.lateral_offset.has_value());
}

TEST(Avoidance, ObstacleWithRoomToBrakeOnlySlowsDown) {
    ActorState box{};
    box.id = 9;
    box.kind = ActorKind::StaticObject;
    box.extent = {1.0, 1.0, 1.0};
    box.position = {38, 0};
    const auto plan = plan_against(box, 8.0);
    EXPECT_EQ(plan.mode, AvoidanceMode::SlowDown);
    EXPECT_LE(plan.speed_cap, 8.0);
}

TEST(Avoidance, PlanNeverRaisesTargetSpeed) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> x(22, 80), y(-6, 6), v(-6, 6), spd(0, 14);
    const auto sc = l_road();
    const Route route(sc.network);
    for (int i = 0; i < 300; ++i) {
        ActorState o{};
        o.id = 1;
        o.kind = ActorKind::Pedestrian;
        o.extent = {0.5, 0.5, 1.7};
        o.position = {x(rng), y(rng)};
        o.velocity = {v(rng), v(rng)};
        o.dynamic = true;
        EgoState ego;
        const double s = spd(rng);
        const auto plan = plan_against(o, s, &ego);
        const auto base = follow_path(ego, route, {});
        EXPECT_LE(apply_plan(base, plan).target_speed, base.target_speed);
    }
}
