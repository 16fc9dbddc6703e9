#include <gtest/gtest.h>

#include <sstream>

#include "hudsim/analysis.hpp"
#include "hudsim/default_scenario.hpp"
#include "hudsim/cohort.hpp"
#include "hudsim/config.hpp"

using namespace hudsim;

namespace {

const std::vector<MarkerTime>& default_markers() {
    static const auto m = scenario_markers(parse_scenario(kDefaultScenarioText, "default", true));
    return m;
}

const CohortResult& default_cohort() {
    static const auto r = run_cohort(CohortSpec{}, default_markers(), 720);
    return r;
}

std::vector<FeatureRow> reparse(const std::vector<FeatureRow>& rows) {
    std::ostringstream os;
    write_feature_table(os, rows);
    std::istringstream is(os.str());
    return read_feature_table(is, "features.csv");
}

}  // namespace

TEST(Cohort, ShapeAndOrder) {
    const auto& c = default_cohort();
    ASSERT_EQ(c.rows.size(), 210u);
    EXPECT_TRUE(c.excluded.empty());
    EXPECT_EQ(c.rows.front().subject, "OMN01");
    EXPECT_EQ(c.rows.back().subject, "SEL15");
    for (std::size_t i = 0; i < c.rows.size(); ++i) EXPECT_EQ(c.rows[i].event, static_cast<EventId>(i % 7));
    EXPECT_LT(c.max_saturation, 0.01);
}

TEST(Cohort, MarkersFollowScenarioTriggers) {
    const auto& m = default_markers();
    ASSERT_EQ(m.size(), 7u);
    const double t[] = {150, 230, 320, 390, 475, 566, 656};
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(m[i].event, static_cast<EventId>(i));
        EXPECT_NEAR(m[i].t_s, t[i], 1.0 / 90);
    }
}

TEST(Cohort, SilentPopulationStaysNearZero) {
    CohortSpec quiet;
    quiet.omn_amplitude.fill(0.0);
    const auto silent = run_cohort(quiet, default_markers(), 720);
    double silent_mean = 0, loud_mean = 0;
    for (const auto& r : silent.rows) silent_mean += std::abs(r.d_p2p) / silent.rows.size();
    for (const auto& r : default_cohort().rows)
        if (r.event != EventId::Scooter && r.event != EventId::Man1) loud_mean += r.d_p2p / 150.0;
    EXPECT_LT(silent_mean, 0.25 * loud_mean);
}

TEST(Cohort, SeedControlsOutput) {
    CohortSpec a;
    a.n_omn = a.n_sel = 2;
    auto b = a;
    b.seed = 2;
    const auto ra = run_cohort(a, default_markers(), 720);
    EXPECT_EQ(ra.rows, run_cohort(a, default_markers(), 720).rows);
    EXPECT_NE(ra.rows, run_cohort(b, default_markers(), 720).rows);
    auto one_thread = a;
    one_thread.threads = 1;
    EXPECT_EQ(ra.rows, run_cohort(one_thread, default_markers(), 720).rows);
}

TEST(Analysis, FileRoundTripGivesSameStatistics) {
    const auto& rows = default_cohort().rows;
    const auto direct = analyze(rows);
    const auto via_file = analyze(reparse(rows));
    ASSERT_EQ(direct.features.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        ASSERT_TRUE(direct.features[i].anova && via_file.features[i].anova);
        EXPECT_EQ(direct.features[i].anova->between.f, via_file.features[i].anova->between.f);
        EXPECT_EQ(direct.features[i].anova->within.p, via_file.features[i].anova->within.p);
    }
    ASSERT_EQ(direct.prepost.size(), 14u);
    for (std::size_t i = 0; i < 14; ++i) {
        ASSERT_TRUE(direct.prepost[i].test && via_file.prepost[i].test);
        EXPECT_NEAR(direct.prepost[i].test->statistic, via_file.prepost[i].test->statistic, 1e-9);
    }
    EXPECT_FALSE(direct.degenerate);
}

TEST(Analysis, PrepostEqualsOneSampleTestOnDelta) {
    const auto& rows = default_cohort().rows;
    const auto rep = analyze(rows, {}, {.posthoc = false, .all_features = false});
    for (const auto& cell : rep.prepost) {
        std::vector<double> d;
        for (const auto& r : rows)
            if (r.group == cell.group && r.event == cell.event) d.push_back(r.d_p2p);
        const auto t = one_sample_ttest(d);
        ASSERT_TRUE(cell.test);
        EXPECT_NEAR(cell.test->statistic, t.statistic, 1e-9 * std::max(1.0, std::abs(t.statistic)));
        EXPECT_EQ(cell.test->df1, 14.0);
    }
}

TEST(Analysis, PosthocFamilySizes) {
    const auto rep = analyze(default_cohort().rows);
    const auto* p2p = rep.find(Feature::P2P);
    ASSERT_TRUE(p2p);
    ASSERT_EQ(p2p->between_posthoc.size(), 7u);
    for (const auto& c : p2p->between_posthoc) EXPECT_EQ(c.family_size, 7u);
    ASSERT_EQ(p2p->within_posthoc.size(), 42u);
    for (const auto& c : p2p->within_posthoc) EXPECT_EQ(c.family_size, 21u);
}

TEST(Analysis, SingleGroupIsDegenerate) {
    std::vector<FeatureRow> rows;
    for (const auto& r : default_cohort().rows)
        if (r.group == "OMN") rows.push_back(r);
    const auto rep = analyze(rows);
    EXPECT_TRUE(rep.degenerate);
    EXPECT_FALSE(rep.features.front().anova_error.empty());
}

TEST(Analysis, RatingsAndRegression) {
    const auto& rows = default_cohort().rows;
    std::map<std::pair<std::string, EventId>, double> cell;
    for (const auto& r : rows) cell[{r.group, r.event}] += r.d_p2p / 15.0;
    std::vector<RatingRow> ratings;
    for (const auto& [key, mean] : cell) {
        ratings.push_back({"x", key.first, fmt::format("{}.stress", to_string(key.second)), 1.0 + 2.0 * mean});
        ratings.push_back({"y", key.first, fmt::format("{}.stress", to_string(key.second)), 1.0 + 2.0 * mean});
    }
    for (int s = 0; s < 8; ++s) {
        ratings.push_back({fmt::format("o{}", s), "OMN", "Q1", 1.0 + s % 3});
        ratings.push_back({fmt::format("s{}", s), "SEL", "Q1", 3.0 + s % 3});
    }
    std::ostringstream os;
    write_rating_table(os, ratings);
    std::istringstream is(os.str());
    const auto back = read_rating_table(is);
    ASSERT_EQ(back.size(), ratings.size());

    const auto rep = analyze(rows, back);
    ASSERT_TRUE(rep.regression) << rep.regression_note;
    EXPECT_EQ(rep.regression_predictors, std::vector<std::string>{"stress"});
    EXPECT_NEAR(rep.regression->coefficients[1], 0.5, 1e-9);
    EXPECT_NEAR(rep.regression->r2, 1.0, 1e-9);
    EXPECT_EQ(rep.regression->overall.df2, 12.0);
    bool found = false;
    for (const auto& [q, t] : rep.ratings)
        if (q == "Q1") {
            found = true;
            EXPECT_LT(t.p, 0.05);
        }
    EXPECT_TRUE(found);
}

TEST(Analysis, ReportMentionsEveryEffect) {
    const auto rep = analyze(default_cohort().rows);
    std::ostringstream txt, csv;
    write_report(txt, rep);
    write_results_csv(csv, rep);
    for (const char* word : {"HUD", "event", "Dog", "Man2"}) EXPECT_NE(txt.str().find(word), std::string::npos) << word;
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "analysis,effect,statistic,df1,df2,p,p_adj");
}

// ---- input errors ------------------------------------------------------------

TEST(Tables, BadNumberCitesRowAndColumn) {
    std::istringstream is("subject,group,event,dP2P,dMax,dMean,dAcc\nA,OMN,Dog,1,2,3,4\nB,SEL,Dog,1,abc,3,4\n");
    try {
        read_feature_table(is, "f.csv");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.field(), "dMax");
    }
}

TEST(Tables, StructuralErrors) {
    std::istringstream missing("subject,group,event,dP2P,dMax,dMean\n");
    EXPECT_THROW(read_feature_table(missing), ParseError);
    std::istringstream ragged("subject,group,event,dP2P,dMax,dMean,dAcc\nA,OMN,Dog,1,2\n");
    EXPECT_THROW(read_feature_table(ragged), ParseError);
    std::istringstream event("subject,group,event,dP2P,dMax,dMean,dAcc\nA,OMN,Cat,1,2,3,4\n");
    try {
        read_feature_table(event);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "event");
    }
    std::istringstream empty("");
    EXPECT_THROW(read_feature_table(empty), ParseError);
}

// ---- configuration -------------------------------------------------------------

TEST(Config, OverridesApply) {
    const auto doc = kv::Document::parse("[physio]\nband_low_hz = 0.2\nhalf_window_s = 8\n[cohort]\namplitude_Dog = 0.7\nn_omn = 4\n"
                                         "[hazard]\nreaction_time_s = 1.0\n",
                                         "run.cfg");
    const auto s = apply_config(doc);
    EXPECT_EQ(s.cohort.physio.band.low_hz, 0.2);
    EXPECT_EQ(s.cohort.physio.half_window_s, 8.0);
    EXPECT_EQ(s.cohort.omn_amplitude[0], 0.7);
    EXPECT_EQ(s.cohort.n_omn, 4u);
    EXPECT_EQ(s.cohort.n_sel, 15u);
    EXPECT_EQ(s.sim.hazard.reaction.reaction_time_s, 1.0);
}

TEST(Config, UnknownOrInvalidSettingsRejected) {
    EXPECT_THROW(apply_config(kv::Document::parse("[physio]\nbogus = 1\n")), ParseError);
    EXPECT_THROW(apply_config(kv::Document::parse("[nonsense]\na = 1\n")), ParseError);
    EXPECT_THROW(apply_config(kv::Document::parse("[physio]\nband_low_hz = 3\n")), ParseError);
    EXPECT_THROW(apply_config(kv::Document::parse("[cohort]\nn_sel = 0\n")), ParseError);
}
