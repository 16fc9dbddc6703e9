#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "keyvalue.hpp"
#include "physio.hpp"
#include "stats.hpp"

namespace hudsim {

// ---------------------------------------------------------------------------
// Input tables

struct RatingRow {
    std::string subject;
    std::string group;
    std::string question_id;
    double rating = 0.0;
};

namespace detail {

/// Reads a headed CSV, checks the header, calls `row(fields, line)` for each data line.
template <class Fn>
void read_csv(std::istream& is, const std::string& source, std::span<const std::string_view> header, Fn&& row) {
    std::string line;
    int lineno = 0;
    bool seen_header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (kv::trim(line).empty()) continue;
        const auto fields = kv::split(line, ',');
        if (!seen_header) {
            seen_header = true;
            for (std::size_t i = 0; i < header.size(); ++i)
                if (i >= fields.size() || kv::trim(fields[i]) != header[i])
                    throw ParseError(source, lineno, std::string(header[i]), "missing or misplaced header column");
            continue;
        }
        if (fields.size() != header.size())
            throw ParseError(source, lineno, {}, fmt::format("expected {} columns, found {}", header.size(), fields.size()));
        row(fields, lineno);
    }
    if (!seen_header) throw ParseError(source, 0, {}, "empty table");
}

inline double csv_number(std::string_view text, const std::string& source, int line, std::string_view column) {
    auto v = kv::to_double(kv::trim(text));
    if (!v || !std::isfinite(*v)) throw ParseError(source, line, std::string(column), fmt::format("'{}' is not a finite number", kv::trim(text)));
    return *v;
}

}  // namespace detail

inline std::vector<FeatureRow> read_feature_table(std::istream& is, const std::string& source = {}) {
    static constexpr std::string_view header[] = {"subject", "group", "event", "dP2P", "dMax", "dMean", "dAcc"};
    std::vector<FeatureRow> rows;
    detail::read_csv(is, source, header, [&](const std::vector<std::string_view>& f, int line) {
        FeatureRow r;
        r.subject = std::string(kv::trim(f[0]));
        r.group = std::string(kv::trim(f[1]));
        if (r.subject.empty()) throw ParseError(source, line, "subject", "empty subject id");
        if (r.group.empty()) throw ParseError(source, line, "group", "empty group");
        auto ev = parse_event_id(kv::trim(f[2]));
        if (!ev) throw ParseError(source, line, "event", fmt::format("unknown event '{}'", kv::trim(f[2])));
        r.event = *ev;
        r.d_p2p = detail::csv_number(f[3], source, line, "dP2P");
        r.d_max = detail::csv_number(f[4], source, line, "dMax");
        r.d_mean = detail::csv_number(f[5], source, line, "dMean");
        r.d_acc = detail::csv_number(f[6], source, line, "dAcc");
        rows.push_back(std::move(r));
    });
    return rows;
}

inline std::vector<RatingRow> read_rating_table(std::istream& is, const std::string& source = {}) {
    static constexpr std::string_view header[] = {"subject", "group", "question_id", "rating"};
    std::vector<RatingRow> rows;
    detail::read_csv(is, source, header, [&](const std::vector<std::string_view>& f, int line) {
        RatingRow r{std::string(kv::trim(f[0])), std::string(kv::trim(f[1])), std::string(kv::trim(f[2])), 0.0};
        if (r.subject.empty() || r.group.empty() || r.question_id.empty()) throw ParseError(source, line, {}, "empty key column");
        r.rating = detail::csv_number(f[3], source, line, "rating");
        rows.push_back(std::move(r));
    });
    return rows;
}

inline void write_rating_table(std::ostream& os, std::span<const RatingRow> rows) {
    os << "subject,group,question_id,rating\n";
    for (const auto& r : rows) os << fmt::format("{},{},{},{:.17g}\n", r.subject, r.group, r.question_id, r.rating);
}

// ---------------------------------------------------------------------------
// Protocol

enum class Feature { P2P, Max, Mean, Acc };
inline constexpr std::array<Feature, 4> kFeatures{Feature::P2P, Feature::Max, Feature::Mean, Feature::Acc};

inline std::string_view feature_name(Feature f) {
    switch (f) {
        case Feature::P2P: return "dP2P";
        case Feature::Max: return "dMax";
        case Feature::Mean: return "dMean";
        case Feature::Acc: return "dAcc";
    }
    return "?";
}

inline double feature_value(const FeatureRow& r, Feature f) {
    switch (f) {
        case Feature::P2P: return r.d_p2p;
        case Feature::Max: return r.d_max;
        case Feature::Mean: return r.d_mean;
        case Feature::Acc: return r.d_acc;
    }
    return 0.0;
}

inline MixedDesignTable design_table(std::span<const FeatureRow> rows, Feature f) {
    MixedDesignTable t;
    for (const auto& r : rows) t.add(r.subject, r.group, std::string(to_string(r.event)), feature_value(r, f));
    return t;
}

/// One line of the machine-readable results.
struct ResultRow {
    std::string analysis;
    std::string effect;
    double statistic = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p = 1.0;
    double p_adj = 1.0;
};

struct CellTest {
    std::string group;
    EventId event = EventId::Dog;
    std::optional<TestResult> test;  ///< empty when degenerate
};

struct FeatureAnalysis {
    Feature feature = Feature::P2P;
    std::optional<AnovaResult> anova;
    std::string anova_error;
    std::vector<PairwiseComparison> between_posthoc;
    std::vector<PairwiseComparison> within_posthoc;
};

struct AnalysisOptions {
    double alpha = 0.05;
    bool posthoc = true;
    bool all_features = true;  ///< false: dP2P only
};

struct AnalysisReport {
    std::vector<FeatureAnalysis> features;
    std::vector<CellTest> prepost;                      ///< dP2P vs 0 per (group, event)
    std::vector<std::pair<std::string, TestResult>> ratings;  ///< Mann-Whitney per question
    std::optional<RegressionResult> regression;
    std::vector<std::string> regression_predictors;
    std::string regression_note;
    std::vector<std::string> notes;
    double alpha = 0.05;
    bool degenerate = false;

    const FeatureAnalysis* find(Feature f) const {
        for (const auto& fa : features)
            if (fa.feature == f) return &fa;
        return nullptr;
    }

    const CellTest* prepost_cell(const std::string& group, EventId e) const {
        for (const auto& c : prepost)
            if (c.group == group && c.event == e) return &c;
        return nullptr;
    }
};

/// Pre/post test of dP2P: post - pre against zero is the paired t on (pre, post).
inline std::vector<CellTest> prepost_tests(std::span<const FeatureRow> rows) {
    std::vector<std::string> groups;
    for (const auto& r : rows)
        if (std::find(groups.begin(), groups.end(), r.group) == groups.end()) groups.push_back(r.group);
    std::vector<CellTest> out;
    for (const auto& g : groups)
        for (std::size_t e = 0; e < kEventCount; ++e) {
            std::vector<double> pre, post;
            for (const auto& r : rows)
                if (r.group == g && r.event == static_cast<EventId>(e)) {
                    pre.push_back(r.pre.p2p);
                    post.push_back(r.pre.p2p + r.d_p2p);
                }
            if (pre.empty()) continue;
            CellTest c{g, static_cast<EventId>(e), std::nullopt};
            try {
                if (pre.size() >= 2) c.test = paired_ttest(pre, post);
            } catch (const DegenerateError&) {
            }
            out.push_back(std::move(c));
        }
    return out;
}

/// Cell means of dP2P per (event, group) regressed on the per-cell mean rating of each factor.
/// Event-related ratings use question ids of the form "<Event>.<factor>".
inline void event_regression(std::span<const FeatureRow> rows, std::span<const RatingRow> ratings, AnalysisReport& rep) {
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> p2p;  // (event, group)
    for (const auto& r : rows) {
        auto& [s, n] = p2p[{std::string(to_string(r.event)), r.group}];
        s += r.d_p2p;
        ++n;
    }
    std::set<std::string> factors;
    std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, int>> rate;  // (event, group, factor)
    for (const auto& r : ratings) {
        const auto dot = r.question_id.find('.');
        if (dot == std::string::npos) continue;
        const auto ev = r.question_id.substr(0, dot);
        if (!parse_event_id(ev)) continue;
        const auto factor = r.question_id.substr(dot + 1);
        factors.insert(factor);
        auto& [s, n] = rate[{ev, r.group, factor}];
        s += r.rating;
        ++n;
    }
    if (factors.empty()) {
        rep.regression_note = "no event-related ratings; regression skipped";
        return;
    }
    std::vector<std::pair<std::string, std::string>> cells;
    for (const auto& [key, _] : p2p) {
        bool complete = true;
        for (const auto& f : factors) complete = complete && rate.count({key.first, key.second, f});
        if (complete) cells.push_back(key);
    }
    const auto p = static_cast<Eigen::Index>(factors.size());
    const auto n = static_cast<Eigen::Index>(cells.size());
    if (n <= p + 1) {
        rep.regression_note = fmt::format("{} complete (event, group) cells for {} predictors; regression skipped", n, p);
        return;
    }
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& [sum, cnt] = p2p.at(cells[static_cast<std::size_t>(i)]);
        y(i) = sum / cnt;
        Eigen::Index j = 0;
        for (const auto& f : factors) {
            const auto& [rs, rn] = rate.at({cells[static_cast<std::size_t>(i)].first, cells[static_cast<std::size_t>(i)].second, f});
            X(i, j++) = rs / rn;
        }
    }
    try {
        rep.regression = linear_regression(X, y);
        rep.regression_predictors.assign(factors.begin(), factors.end());
    } catch (const DegenerateError& e) {
        rep.regression_note = e.what();
    }
}

inline AnalysisReport analyze(std::span<const FeatureRow> rows, std::span<const RatingRow> ratings = {}, const AnalysisOptions& opt = {}) {
    AnalysisReport rep;
    rep.alpha = opt.alpha;
    if (!rows.empty()) {
        for (Feature f : kFeatures) {
            if (!opt.all_features && f != Feature::P2P) continue;
            FeatureAnalysis fa;
            fa.feature = f;
            const auto table = design_table(rows, f);
            try {
                fa.anova = mixed_anova(table, "HUD", "event");
                if (!fa.anova->dropped.empty())
                    rep.notes.push_back(fmt::format("{}: dropped {} incomplete subject(s)", feature_name(f), fa.anova->dropped.size()));
                if (opt.posthoc) {
                    fa.between_posthoc = bonferroni_posthoc(table, Effect::Between);
                    fa.within_posthoc = bonferroni_posthoc(table, Effect::Within);
                }
            } catch (const DegenerateError& e) {
                fa.anova_error = e.what();
                rep.degenerate = true;
            }
            rep.features.push_back(std::move(fa));
        }
        rep.prepost = prepost_tests(rows);
    }

    std::map<std::string, std::map<std::string, std::vector<double>>> by_question;  // question -> group -> ratings
    for (const auto& r : ratings) by_question[r.question_id][r.group].push_back(r.rating);
    for (const auto& [q, groups] : by_question) {
        if (groups.size() != 2) {
            rep.notes.push_back(fmt::format("question {}: needs exactly two groups, found {}", q, groups.size()));
            continue;
        }
        const auto& a = groups.begin()->second;
        const auto& b = std::next(groups.begin())->second;
        auto t = mann_whitney_u(a, b);
        t.method += fmt::format(" {} vs {}", groups.begin()->first, std::next(groups.begin())->first);
        rep.ratings.emplace_back(q, t);
    }
    if (!rows.empty() && !ratings.empty()) event_regression(rows, ratings, rep);
    return rep;
}

// ---------------------------------------------------------------------------
// Output

inline std::vector<ResultRow> result_rows(const AnalysisReport& rep) {
    std::vector<ResultRow> out;
    for (const auto& fa : rep.features) {
        const auto an = fmt::format("anova:{}", feature_name(fa.feature));
        if (fa.anova)
            for (const auto* e : {&fa.anova->between, &fa.anova->within, &fa.anova->interaction})
                out.push_back({an, e->name, e->f, e->df_num, e->df_den, e->p, e->p});
        for (const auto& c : fa.between_posthoc)
            out.push_back({fmt::format("posthoc-between:{}", feature_name(fa.feature)), fmt::format("{}:{}-{}", c.context, c.level_a, c.level_b),
                           c.test.statistic, c.test.df1, c.test.df2, c.test.p, c.p_adjusted});
        for (const auto& c : fa.within_posthoc)
            out.push_back({fmt::format("posthoc-within:{}", feature_name(fa.feature)), fmt::format("{}:{}-{}", c.context, c.level_a, c.level_b),
                           c.test.statistic, c.test.df1, c.test.df2, c.test.p, c.p_adjusted});
    }
    for (const auto& c : rep.prepost) {
        const auto effect = fmt::format("{}:{}", c.group, to_string(c.event));
        if (c.test) out.push_back({"prepost:dP2P", effect, c.test->statistic, c.test->df1, 0.0, c.test->p, c.test->p});
        else out.push_back({"prepost:dP2P", effect, 0.0, 0.0, 0.0, 1.0, 1.0});
    }
    for (const auto& [q, t] : rep.ratings)
        out.push_back({"mann-whitney", q, t.statistic, static_cast<double>(t.n_a), static_cast<double>(t.n_b), t.p, t.p});
    if (rep.regression) {
        const auto& r = *rep.regression;
        out.push_back({"regression", "model", r.overall.statistic, r.overall.df1, r.overall.df2, r.overall.p, r.overall.p});
        out.push_back({"regression", "adjusted_r2", r.adjusted_r2, r.overall.df1, r.overall.df2, r.overall.p, r.overall.p});
        for (std::size_t j = 0; j < r.coefficients.size(); ++j) {
            const auto name = j == 0 ? std::string("intercept") : rep.regression_predictors[j - 1];
            out.push_back({"regression", name, r.coefficients[j], 0.0, r.overall.df2, r.coefficient_p[j], r.coefficient_p[j]});
        }
    }
    return out;
}

inline void write_results_csv(std::ostream& os, const AnalysisReport& rep) {
    os << "analysis,effect,statistic,df1,df2,p,p_adj\n";
    for (const auto& r : result_rows(rep))
        os << fmt::format("{},{},{:.10g},{:g},{:g},{:.6g},{:.6g}\n", r.analysis, r.effect, r.statistic, r.df1, r.df2, r.p, r.p_adj);
}

inline std::string format_p(double p) { return p < 0.001 ? std::string("p<.001") : fmt::format("p={:.3f}", p); }

inline void write_report(std::ostream& os, const AnalysisReport& rep) {
    const auto star = [&](double p) { return p < rep.alpha ? " *" : ""; };
    for (const auto& fa : rep.features) {
        os << fmt::format("== Mixed ANOVA on {} ==\n", feature_name(fa.feature));
        if (!fa.anova) {
            os << "  degenerate: " << fa.anova_error << "\n\n";
            continue;
        }
        os << fmt::format("  subjects: {}\n", fa.anova->subjects);
        for (const auto* e : {&fa.anova->between, &fa.anova->within, &fa.anova->interaction})
            os << fmt::format("  {:<10} F({:g},{:g})={:.3f}, {}{}\n", e->name, e->df_num, e->df_den, e->f, format_p(e->p), star(e->p));
        std::size_t sig_b = 0, sig_w = 0;
        for (const auto& c : fa.between_posthoc) sig_b += c.p_adjusted < rep.alpha;
        for (const auto& c : fa.within_posthoc) sig_w += c.p_adjusted < rep.alpha;
        if (!fa.between_posthoc.empty() || !fa.within_posthoc.empty())
            os << fmt::format("  post-hoc (Bonferroni): {}/{} HUD contrasts, {}/{} event contrasts significant\n", sig_b,
                              fa.between_posthoc.size(), sig_w, fa.within_posthoc.size());
        os << '\n';
    }
    if (!rep.prepost.empty()) {
        os << "== Pre/post t-tests on P2P ==\n";
        for (const auto& c : rep.prepost) {
            if (c.test)
                os << fmt::format("  {:<4} {:<8} t({:g})={:.3f}, {}{}\n", c.group, to_string(c.event), c.test->df1, c.test->statistic,
                                  format_p(c.test->p), star(c.test->p));
            else
                os << fmt::format("  {:<4} {:<8} degenerate\n", c.group, to_string(c.event));
        }
        os << '\n';
    }
    if (!rep.ratings.empty()) {
        os << "== Mann-Whitney U on ratings ==\n";
        for (const auto& [q, t] : rep.ratings)
            os << fmt::format("  {:<20} U={:g}, {} ({}){}\n", q, t.statistic, format_p(t.p), t.method, star(t.p));
        os << '\n';
    }
    if (rep.regression) {
        const auto& r = *rep.regression;
        os << "== Regression of mean dP2P on mean ratings ==\n";
        os << fmt::format("  F({:g},{:g})={:.3f}, {}, R2={:.3f}, adjusted R2={:.3f}\n", r.overall.df1, r.overall.df2, r.overall.statistic,
                          format_p(r.overall.p), r.r2, r.adjusted_r2);
        for (std::size_t j = 0; j < r.coefficients.size(); ++j)
            os << fmt::format("  {:<12} b={:+.4f} (se {:.4f}), {}\n", j == 0 ? std::string("intercept") : rep.regression_predictors[j - 1],
                              r.coefficients[j], r.std_errors[j], format_p(r.coefficient_p[j]));
        os << '\n';
    } else if (!rep.regression_note.empty()) {
        os << "regression: " << rep.regression_note << "\n\n";
    }
    for (const auto& n : rep.notes) os << "note: " << n << '\n';
}

}  // namespace hudsim
