#include <gtest/gtest.h>

#include <random>

#include "hudsim/hud.hpp"

using namespace hudsim;

namespace {

struct Fixture {
    ScenarioDef sc = parse_scenario(R"(
[scenario]
duration_s = 60
route = 1 2 3
[network]
node id=1 x=0 y=0 speed_limit=12
node id=2 x=300 y=0 speed_limit=12
node id=3 x=300 y=300 speed_limit=12
edge from=1 to=2 section=0
edge from=2 to=3 section=1
)");
    Route route{sc.network};
    WorldState world;

    Fixture() {
        world.ego.position = {20, 0};
        world.ego.speed = 10;
        update_route_progress(world.ego, route, 20.0);
    }

    ActorState& add(int id, ActorKind kind, Vec2 p, Vec2 v = {}, int section = -1) {
        ActorState a{};
        a.id = id;
        a.kind = kind;
        a.position = p;
        a.velocity = v;
        a.heading = v.norm() > 0 ? std::atan2(v.y, v.x) : 0.0;
        a.extent = kind == ActorKind::TrafficCar ? Extent{4.5, 1.9, 1.5} : Extent{0.5, 0.5, 1.7};
        a.dynamic = v.norm() > 0 || kind == ActorKind::Pedestrian;
        a.section = section;
        world.actors.push_back(a);
        return world.actors.back();
    }

    std::vector<HazardAssessment> hazards() const { return assess_hazards(world, world.actors, route, sc.plant.extent, 0.0, {}); }

    CueSet select(Policy p) const {
        const auto hz = hazards();
        const auto cand = build_candidates(world, hz, {});
        return select_cues(cand, world, hz, p, {&route, {}, {}});
    }
};

bool has(const CueSet& s, int id) { return s.object_ids().contains(id); }

}  // namespace

TEST(Candidates, OutsideDetectionDiameterDropped) {
    Fixture f;
    f.add(1, ActorKind::Pedestrian, {180, 5});
    EXPECT_TRUE(build_candidates(f.world, f.hazards(), {}).empty());
}

TEST(Candidates, LabelRoundsDistanceAndSpeed) {
    Fixture f;
    f.add(1, ActorKind::TrafficCar, {60, 3.5}, {-8, 0});
    const auto c = build_candidates(f.world, f.hazards(), {});
    ASSERT_EQ(c.size(), 1u);
    const double d = std::hypot(40.0, 3.5);
    EXPECT_EQ(c[0].label, fmt::format("Car {}m 29km/h", std::llround(d)));
    EXPECT_EQ(make_label(ActorKind::TrafficCar, 40.0, 8.0), "Car 40m 29km/h");
    EXPECT_NEAR(c[0].distance_m, d, 0.5);
    EXPECT_TRUE(c[0].label_faces_ego);
    EXPECT_TRUE(c[0].nav_line.has_value());
}

TEST(Candidates, EmptyWorldStillDrawsEgoLines) {
    Fixture f;
    const auto set = f.select(Policy::OMN);
    EXPECT_TRUE(set.cues.empty());
    EXPECT_FALSE(set.ego_nav_line.empty());
    EXPECT_FALSE(set.road_center_line.empty());
}

TEST(Selection, ParkedCarHiddenByBothPolicies) {
    Fixture f;
    f.add(1, ActorKind::TrafficCar, {70, -3.5});
    EXPECT_FALSE(has(f.select(Policy::OMN), 1));
    EXPECT_FALSE(has(f.select(Policy::SEL), 1));
}

TEST(Selection, CalmPedestrianOnlyInOmni) {
    Fixture f;
    f.add(1, ActorKind::Pedestrian, {50, -7}, {0.0, 0.0});
    EXPECT_TRUE(has(f.select(Policy::OMN), 1));
    EXPECT_FALSE(has(f.select(Policy::SEL), 1));
}

TEST(Selection, DangerousPedestrianInBoth) {
    Fixture f;
    f.add(1, ActorKind::Pedestrian, {38, -2}, {0.0, 1.0});
    const auto hz = f.hazards();
    ASSERT_TRUE(hz[0].warning_active);
    EXPECT_TRUE(has(f.select(Policy::OMN), 1));
    EXPECT_TRUE(has(f.select(Policy::SEL), 1));
}

TEST(Selection, LightsFollowRoadSection) {
    Fixture f;
    f.add(1, ActorKind::TrafficLight, {60, -5}, {}, 0).dynamic = false;
    f.add(2, ActorKind::TrafficLight, {80, -5}, {}, 1).dynamic = false;
    for (auto p : {Policy::OMN, Policy::SEL}) {
        const auto s = f.select(p);
        EXPECT_TRUE(has(s, 1));
        EXPECT_FALSE(has(s, 2));
    }
}

TEST(Selection, PrecedingCarKeptOncomingCarDroppedBySel) {
    Fixture f;
    f.add(1, ActorKind::TrafficCar, {50, 0}, {10, 0});
    f.add(2, ActorKind::TrafficCar, {90, 3.5}, {-10, 0});
    const auto sel = f.select(Policy::SEL);
    EXPECT_TRUE(has(sel, 1));
    EXPECT_FALSE(has(sel, 2));
    // not being assessed by the planner: no nav line for other cars under SEL
    for (const auto& c : sel.cues) EXPECT_FALSE(c.nav_line.has_value());
    const auto omn = f.select(Policy::OMN);
    EXPECT_TRUE(has(omn, 1));
    EXPECT_TRUE(has(omn, 2));
}

TEST(Selection, RandomWorldsObeySubsetRadiusAndWarningLaws) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> x(-100, 140), y(-40, 40), v(-10, 10);
    std::uniform_int_distribution<int> kind(1, 6), n(0, 40);
    for (int trial = 0; trial < 150; ++trial) {
        Fixture f;
        const int count = n(rng);
        for (int i = 0; i < count; ++i) {
            const auto k = static_cast<ActorKind>(kind(rng));
            const bool moving = k != ActorKind::StaticObject && (rng() & 1);
            f.add(i + 1, k, {x(rng), y(rng)}, moving ? Vec2{v(rng), v(rng)} : Vec2{});
        }
        const auto hz = f.hazards();
        const auto cand = build_candidates(f.world, hz, {});
        std::set<int> assessed;
        for (const auto& c : cand)
            if (rng() % 3 == 0) assessed.insert(c.object_id);
        const SelectionContext ctx{&f.route, assessed, {}};
        const auto omn = select_cues(cand, f.world, hz, Policy::OMN, ctx);
        const auto sel = select_cues(cand, f.world, hz, Policy::SEL, ctx);
        const auto omn_ids = omn.object_ids();
        for (int id : sel.object_ids()) EXPECT_TRUE(omn_ids.contains(id)) << "trial " << trial << " id " << id;
        EXPECT_LE(sel.cues.size(), omn.cues.size());
        for (const auto* set : {&omn, &sel})
            for (const auto& c : set->cues) {
                EXPECT_LE(distance(c.box.center, f.world.ego.position), 75.0);
                bool active = false;
                for (const auto& h : hz)
                    if (h.object_id == c.object_id) active = h.warning_active;
                EXPECT_EQ(c.warning.flash_hz == 4.0, active);
            }
        // same inputs, same output
        const auto again = select_cues(cand, f.world, hz, Policy::SEL, ctx);
        EXPECT_EQ(again.object_ids(), sel.object_ids());
    }
}

TEST(CueStats, EmptyLogIsAnError) {
    EXPECT_THROW(cue_count_stats({}), DegenerateError);
}

TEST(CueStats, CountsAndMeans) {
    std::vector<CueSet> log;
    for (int t = 0; t < 4; ++t) {
        CueSet o{static_cast<double>(t), Policy::OMN, {}, {}, {}};
        CueSet s{static_cast<double>(t), Policy::SEL, {}, {}, {}};
        for (int k = 0; k < t + 1; ++k) o.cues.push_back(Cue{.object_id = k});
        for (int k = 0; k < t; ++k) s.cues.push_back(Cue{.object_id = k});
        log.push_back(o);
        log.push_back(s);
    }
    const auto st = cue_count_stats(log);
    EXPECT_DOUBLE_EQ(st.omn.mean, 2.5);
    EXPECT_DOUBLE_EQ(st.sel.mean, 1.5);
    for (std::size_t i = 0; i < st.omn.counts.size(); ++i) EXPECT_LE(st.sel.counts[i], st.omn.counts[i]);

    const std::vector<CueSet> empty_world{CueSet{0.0, Policy::OMN, {}, {}, {}}, CueSet{0.0, Policy::SEL, {}, {}, {}}};
    const auto z = cue_count_stats(empty_world);
    EXPECT_EQ(z.omn.mean, 0.0);
    EXPECT_EQ(z.sel.mean, 0.0);
}
