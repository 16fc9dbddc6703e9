#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hudsim/hazard.hpp"

using namespace hudsim;

TEST(PredictCollision, ParallelPathsNeverMeet) {
    const Extent car{4.5, 1.9, 1.5};
    const auto a = constant_velocity_path({{0, 0}, 0}, {10, 0}, car, 0.1, 4.0);
    const auto b = constant_velocity_path({{5, 3.5}, 0}, {10, 0}, car, 0.1, 4.0);
    EXPECT_FALSE(predict_collision(a, b, 4.0).has_value());
}

TEST(PredictCollision, HeadOnClosingMeetsAtMidpoint) {
    // relative speed 20 m/s over 100 m: contact at 5 s less the footprint depth
    const Extent small{0.2, 0.2, 1.0};
    const auto a = constant_velocity_path({{0, 0}, 0}, {10, 0}, small, 0.05, 8.0);
    const auto b = constant_velocity_path({{100, 0}, std::numbers::pi}, {-10, 0}, small, 0.05, 8.0);
    const auto hit = predict_collision(a, b, 8.0);
    ASSERT_TRUE(hit.has_value());
    const double expect_t = (100.0 - 0.2) / 20.0;
    EXPECT_NEAR(hit->time_s, expect_t, 0.05 + 1e-9);
    EXPECT_NEAR(hit->point.x, 50.0, 0.6);
    EXPECT_NEAR(hit->point.y, 0.0, 1e-12);
}

TEST(PredictCollision, AgreesWithFineSweep) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> pos(-30, 30), vel(-12, 12), len(0.3, 5);
    const double dt = 0.1, horizon = 4.0, fine = dt / 10;
    int hits = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const Vec2 pa{pos(rng), pos(rng)}, pb{pos(rng), pos(rng)};
        const Vec2 va{vel(rng), vel(rng)}, vb{vel(rng), vel(rng)};
        const Extent ea{len(rng), len(rng), 1}, eb{len(rng), len(rng), 1};
        const double ha = std::atan2(va.y, va.x), hb = std::atan2(vb.y, vb.x);
        const auto coarse = predict_collision(constant_velocity_path({pa, ha}, va, ea, dt, horizon),
                                              constant_velocity_path({pb, hb}, vb, eb, dt, horizon), horizon);
        // contact interval from a dense scan
        double first = -1, last = -1;
        for (int k = 0; k <= static_cast<int>(std::llround(horizon / fine)); ++k) {
            const double t = k * fine;
            if (overlaps(make_box({pa + va * t, ha}, ea), make_box({pb + vb * t, hb}, eb))) {
                if (first < 0) first = t;
                last = t;
            }
        }
        if (coarse) {
            ++hits;
            ASSERT_GE(first, 0.0) << "coarse contact the dense scan never saw, trial " << trial;
            EXPECT_LE(first, coarse->time_s + 1e-9);
            EXPECT_LE(coarse->time_s - first, dt + 1e-9);
        } else if (first >= 0.0) {
            // only brief grazes shorter than one coarse sample may slip through
            EXPECT_LT(last - first, dt + 1e-9) << "trial " << trial;
        }
    }
    EXPECT_GT(hits, 50);
}

TEST(WarningDistance, HandValues) {
    EXPECT_DOUBLE_EQ(warning_distance(0.0), 0.0);
    EXPECT_NEAR(warning_distance(10.0), 15.0 + 100.0 / 12.0, 1e-12);
    EXPECT_NEAR(warning_distance(10.0), 23.33, 0.005);
    EXPECT_THROW(warning_distance(-1.0), DomainError);
}

TEST(WarningDistance, StrictlyIncreasing) {
    double prev = warning_distance(0.0);
    for (int i = 1; i <= 1000; ++i) {
        const double d = warning_distance(i * 0.05);
        EXPECT_GT(d, prev);
        prev = d;
    }
}

TEST(Severity, HandValuesAndErrors) {
    EXPECT_EQ(hazard_severity(50.0, 40.0), 0.0);
    EXPECT_EQ(hazard_severity(40.0, 40.0), 0.0);
    EXPECT_EQ(hazard_severity(0.0, 40.0), 1.0);
    EXPECT_DOUBLE_EQ(hazard_severity(10.0, 40.0), 0.75);
    EXPECT_EQ(hazard_severity(5.0, 0.0), 0.0);
    EXPECT_THROW(hazard_severity(-1.0, 10.0), DomainError);
}

TEST(Severity, RandomGridEndpointsAndMonotonicity) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dw(0.0, 150.0), dist(0.0, 200.0), speed(0.0, 30.0);
    for (int i = 0; i < 10000; ++i) {
        const double w = dw(rng);
        const double a = dist(rng), b = dist(rng);
        const double sa = hazard_severity(a, w), sb = hazard_severity(b, w);
        EXPECT_GE(sa, 0.0);
        EXPECT_LE(sa, 1.0);
        if (a <= b) EXPECT_GE(sa, sb);
        if (a >= w) EXPECT_EQ(sa, 0.0);

        const double v = speed(rng);
        const auto h = make_assessment(1, a, a, warning_distance(v));
        EXPECT_EQ(h.warning_active, a < warning_distance(v));
        EXPECT_DOUBLE_EQ(h.severity, 1.0 - h.ratio);
    }
}

TEST(ColorCode, EndpointsAndMidpoint) {
    EXPECT_EQ(color_code(0.0), (Rgb{0, 255, 0}));
    EXPECT_EQ(color_code(1.0), (Rgb{255, 0, 0}));
    EXPECT_NEAR(color_parameter(0.5), (std::exp(1.5) - 1) / (std::exp(3.0) - 1), 1e-15);
    EXPECT_NEAR(color_parameter(0.5), 0.1824, 5e-5);
    EXPECT_EQ(color_code(0.5), (Rgb{47, 208, 0}));
    EXPECT_THROW(color_code(1.01), DomainError);
    EXPECT_THROW(color_code(-0.01), DomainError);
}

TEST(ColorCode, ParameterStrictlyIncreasing) {
    double prev = -1.0;
    for (int i = 0; i <= 1000; ++i) {
        const double u = color_parameter(i / 1000.0);
        EXPECT_GT(u, prev);
        prev = u;
    }
    EXPECT_EQ(color_parameter(0.0), 0.0);
    EXPECT_DOUBLE_EQ(color_parameter(1.0), 1.0);
}

TEST(WarningState, Cases) {
    const auto calm = make_assessment(1, 30.0, std::numeric_limits<double>::infinity(), 20.0);
    const auto quiet = warning_state(calm, ActorKind::Pedestrian, false);
    EXPECT_EQ(quiet.flash_hz, 0.0);
    EXPECT_EQ(quiet.audio, AudioCue::None);
    EXPECT_EQ(quiet.color, (Rgb{0, 255, 0}));

    const auto danger = make_assessment(2, 12.0, 8.0, 20.0);
    const auto alert = warning_state(danger, ActorKind::Pedestrian, false);
    EXPECT_EQ(alert.flash_hz, 4.0);
    EXPECT_EQ(alert.audio, AudioCue::DangerAlert);
    EXPECT_EQ(warning_state(danger, ActorKind::Pedestrian, false, false).audio, AudioCue::None);

    const auto light = warning_state(calm, ActorKind::TrafficLight, true);
    EXPECT_EQ(light.flash_hz, 1.0);
    EXPECT_EQ(light.audio, AudioCue::SignChime);
    // sign events on ordinary objects do not chime
    EXPECT_EQ(warning_state(calm, ActorKind::Pedestrian, true).audio, AudioCue::None);
}

TEST(WarningState, EdgeLatchFiresOncePerRise) {
    EdgeLatch latch;
    EXPECT_TRUE(latch.rising(3, true));
    EXPECT_FALSE(latch.rising(3, true));
    EXPECT_FALSE(latch.rising(3, false));
    EXPECT_TRUE(latch.rising(3, true));
    EXPECT_FALSE(latch.rising(4, false));
}
