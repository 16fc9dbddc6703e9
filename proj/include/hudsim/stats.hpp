#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "distributions.hpp"
#include "errors.hpp"

namespace hudsim {

struct TestResult {
    double statistic = 0.0;
    double p = 1.0;  ///< two-tailed unless the method is one-sided by nature (F)
    double df1 = 0.0;
    double df2 = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::string method;
};

// ---------------------------------------------------------------------------
// t tests

inline double mean_of(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

/// Sample variance (n - 1 denominator).
inline double sample_variance(std::span<const double> x) {
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

inline TestResult one_sample_ttest(std::span<const double> x, double mu = 0.0) {
    if (x.size() < 2) throw DomainError("t test needs at least 2 values");
    const double m = mean_of(x);
    const double sd = std::sqrt(sample_variance(x));
    const double n = static_cast<double>(x.size());
    // values identical up to rounding count as zero spread
    if (!(sd > 1e-13 * std::max(1.0, std::abs(m)))) throw DegenerateError("t test on values with zero variance");
    TestResult r;
    r.statistic = (m - mu) / (sd / std::sqrt(n));
    r.df1 = n - 1.0;
    r.p = t_two_tailed_p(r.statistic, r.df1);
    r.n_a = x.size();
    r.method = "one-sample t";
    return r;
}

/// Tests post - pre against zero.
inline TestResult paired_ttest(std::span<const double> pre, std::span<const double> post) {
    if (pre.size() != post.size()) throw DomainError("paired t test needs equal-length samples");
    std::vector<double> d(pre.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = post[i] - pre[i];
    auto r = one_sample_ttest(d);
    r.n_b = r.n_a;
    r.method = "paired t";
    return r;
}

/// Student's two-sample t with pooled variance.
inline TestResult independent_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw DomainError("two-sample t test needs at least 2 values per group");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0);
    const double scale = std::max({1.0, std::abs(mean_of(a)), std::abs(mean_of(b))});
    if (!(std::sqrt(pooled) > 1e-13 * scale)) throw DegenerateError("two-sample t test on groups with zero variance");
    TestResult r;
    r.statistic = (mean_of(a) - mean_of(b)) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.df1 = na + nb - 2.0;
    r.p = t_two_tailed_p(r.statistic, r.df1);
    r.n_a = a.size();
    r.n_b = b.size();
    r.method = "independent t";
    return r;
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

/// Midranks (1-based) of the pooled sample, plus sum of t^3 - t over tie groups.
struct Ranking {
    std::vector<double> ranks;
    double tie_term = 0.0;
};

inline Ranking midranks(std::span<const double> pooled) {
    std::vector<std::size_t> order(pooled.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    Ranking out;
    out.ranks.resize(pooled.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) out.ranks[order[k]] = rank;
        const double t = static_cast<double>(j - i + 1);
        out.tie_term += t * t * t - t;
        i = j + 1;
    }
    return out;
}

/// Number of arrangements giving each U value (0..na*nb) when there are no ties.
inline std::vector<double> mann_whitney_counts(std::size_t na, std::size_t nb) {
    // f[i][j][u]: arrangements of i a-values and j b-values with U_a = u
    const std::size_t umax = na * nb;
    std::vector<std::vector<std::vector<double>>> f(na + 1, std::vector<std::vector<double>>(nb + 1));
    for (std::size_t i = 0; i <= na; ++i)
        for (std::size_t j = 0; j <= nb; ++j) {
            auto& cell = f[i][j];
            cell.assign(i * j + 1, 0.0);
            if (i == 0 || j == 0) {
                cell[0] = 1.0;
                continue;
            }
            // largest value is an a (beats all j b's) or a b
            for (std::size_t u = 0; u <= i * j; ++u) {
                if (u >= j && u - j < f[i - 1][j].size()) cell[u] += f[i - 1][j][u - j];
                if (u < f[i][j - 1].size()) cell[u] += f[i][j - 1][u];
            }
        }
    auto out = f[na][nb];
    out.resize(umax + 1, 0.0);
    return out;
}

/// Two-tailed exact p for an observed U_a.
inline double mann_whitney_exact_p(double u, std::size_t na, std::size_t nb) {
    const auto counts = mann_whitney_counts(na, nb);
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    double lower = 0.0, upper = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double kk = static_cast<double>(k);
        if (kk <= u + 1e-9) lower += counts[k];
        if (kk >= u - 1e-9) upper += counts[k];
    }
    return clamp_p(std::min(1.0, 2.0 * std::min(lower, upper) / total));
}

/// Normal approximation with tie and continuity correction.
inline double mann_whitney_normal_p(double u, std::size_t na, std::size_t nb, double tie_term = 0.0) {
    const double a = static_cast<double>(na);
    const double b = static_cast<double>(nb);
    const double n = a + b;
    const double mu = 0.5 * a * b;
    const double var = a * b / 12.0 * ((n + 1.0) - (n > 1.0 ? tie_term / (n * (n - 1.0)) : 0.0));
    if (!(var > 0.0)) return 1.0;
    const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
    return normal_two_tailed_p(z);
}

inline constexpr std::size_t kExactMannWhitneyCells = 64;

inline TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DomainError("Mann-Whitney U needs at least one value per group");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto rk = midranks(pooled);
    double ra = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ra += rk.ranks[i];
    const double na = static_cast<double>(a.size());

    TestResult r;
    r.statistic = ra - na * (na + 1.0) / 2.0;
    r.n_a = a.size();
    r.n_b = b.size();
    if (a.size() * b.size() <= kExactMannWhitneyCells && rk.tie_term == 0.0) {
        r.p = mann_whitney_exact_p(r.statistic, a.size(), b.size());
        r.method = "Mann-Whitney U (exact)";
    } else {
        r.p = mann_whitney_normal_p(r.statistic, a.size(), b.size(), rk.tie_term);
        r.method = "Mann-Whitney U (normal)";
    }
    return r;
}

// ---------------------------------------------------------------------------
// Mixed (split-plot) ANOVA

struct Observation {
    std::string subject;
    std::string group;   ///< between-subjects level
    std::string level;   ///< within-subjects level
    double value = 0.0;
};

struct MixedDesignTable {
    std::vector<Observation> rows;

    void add(std::string subject, std::string group, std::string level, double value) {
        rows.push_back({std::move(subject), std::move(group), std::move(level), value});
    }
};

/// Subjects x within-levels matrix restricted to complete cases.
struct CompleteDesign {
    std::vector<std::string> groups;                ///< between levels, first-seen order
    std::vector<std::string> levels;                ///< within levels, first-seen order
    std::vector<std::string> subjects;
    std::vector<std::size_t> subject_group;         ///< index into groups
    std::vector<std::vector<double>> values;        ///< [subject][level]
    std::vector<std::string> dropped;               ///< incomplete subjects
    bool balanced = true;

    std::size_t group_size(std::size_t g) const { return static_cast<std::size_t>(std::count(subject_group.begin(), subject_group.end(), g)); }
};

inline CompleteDesign complete_cases(const MixedDesignTable& table) {
    CompleteDesign d;
    auto index_of = [](std::vector<std::string>& v, const std::string& s) {
        auto it = std::find(v.begin(), v.end(), s);
        if (it != v.end()) return static_cast<std::size_t>(it - v.begin());
        v.push_back(s);
        return v.size() - 1;
    };
    std::vector<std::string> subjects;
    std::map<std::string, std::size_t> group_of;
    std::map<std::pair<std::string, std::size_t>, double> cell;
    for (const auto& r : table.rows) {
        const auto g = index_of(d.groups, r.group);
        const auto l = index_of(d.levels, r.level);
        index_of(subjects, r.subject);
        auto [it, inserted] = group_of.emplace(r.subject, g);
        if (!inserted && it->second != g) throw ValidationError(fmt::format("subject '{}' appears in two groups", r.subject));
        if (!cell.emplace(std::pair{r.subject, l}, r.value).second)
            throw ValidationError(fmt::format("subject '{}' has two values for level '{}'", r.subject, r.level));
    }
    for (const auto& s : subjects) {
        std::vector<double> row(d.levels.size());
        bool complete = true;
        for (std::size_t l = 0; l < d.levels.size(); ++l) {
            auto it = cell.find({s, l});
            if (it == cell.end() || !std::isfinite(it->second)) {
                complete = false;
                break;
            }
            row[l] = it->second;
        }
        if (!complete) {
            d.dropped.push_back(s);
            continue;
        }
        d.subjects.push_back(s);
        d.subject_group.push_back(group_of.at(s));
        d.values.push_back(std::move(row));
    }
    for (std::size_t g = 1; g < d.groups.size(); ++g)
        if (d.group_size(g) != d.group_size(0)) d.balanced = false;
    return d;
}

struct EffectResult {
    std::string name;
    double ss = 0.0;
    double df_num = 0.0;
    double df_den = 0.0;
    double f = 0.0;
    double p = 1.0;
};

struct AnovaResult {
    EffectResult between;      ///< HUD
    EffectResult within;       ///< event
    EffectResult interaction;
    double ss_subjects_error = 0.0;  ///< subjects within groups
    double ss_within_error = 0.0;    ///< level x subjects within groups
    double ss_total = 0.0;
    std::size_t subjects = 0;
    std::vector<std::string> dropped;
};

inline EffectResult make_effect(std::string name, double ss, double df_num, double ss_err, double df_den, double tiny) {
    EffectResult e{std::move(name), ss, df_num, df_den, 0.0, 1.0};
    if (ss <= tiny) {
        e.ss = std::max(ss, 0.0);
        return e;
    }
    if (ss_err <= tiny) {
        e.f = std::numeric_limits<double>::infinity();
        e.p = clamp_p(0.0);
        return e;
    }
    e.f = (ss / df_num) / (ss_err / df_den);
    e.p = f_upper_p(e.f, df_num, df_den);
    return e;
}

inline AnovaResult mixed_anova(const MixedDesignTable& table, std::string between_name = "between", std::string within_name = "within") {
    const auto d = complete_cases(table);
    const std::size_t a = d.groups.size();
    const std::size_t b = d.levels.size();
    const std::size_t n = d.subjects.size();
    if (a < 2) throw DegenerateError("design needs at least two between-subjects levels");
    if (b < 2) throw DegenerateError("design needs at least two within-subjects levels");
    for (std::size_t g = 0; g < a; ++g)
        if (d.group_size(g) < 2) throw DegenerateError(fmt::format("group '{}' has fewer than 2 complete subjects", d.groups[g]));

    double grand = 0.0, sumsq = 0.0;
    std::vector<double> subj_mean(n, 0.0), level_mean(b, 0.0);
    std::vector<double> group_mean(a, 0.0);
    std::vector<std::vector<double>> cell_mean(a, std::vector<double>(b, 0.0));
    std::vector<double> gn(a, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const auto g = d.subject_group[s];
        gn[g] += 1.0;
        for (std::size_t l = 0; l < b; ++l) {
            const double y = d.values[s][l];
            grand += y;
            sumsq += y * y;
            subj_mean[s] += y;
            level_mean[l] += y;
            group_mean[g] += y;
            cell_mean[g][l] += y;
        }
    }
    const double N = static_cast<double>(n);
    const double B = static_cast<double>(b);
    grand /= N * B;
    for (auto& v : subj_mean) v /= B;
    for (auto& v : level_mean) v /= N;
    for (std::size_t g = 0; g < a; ++g) {
        group_mean[g] /= gn[g] * B;
        for (auto& v : cell_mean[g]) v /= gn[g];
    }

    AnovaResult r;
    r.subjects = n;
    r.dropped = d.dropped;
    double ss_subjects = 0.0, ss_a = 0.0, ss_b = 0.0, ss_cells = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        ss_subjects += B * (subj_mean[s] - grand) * (subj_mean[s] - grand);
        for (std::size_t l = 0; l < b; ++l) r.ss_total += (d.values[s][l] - grand) * (d.values[s][l] - grand);
    }
    for (std::size_t g = 0; g < a; ++g) {
        ss_a += B * gn[g] * (group_mean[g] - grand) * (group_mean[g] - grand);
        for (std::size_t l = 0; l < b; ++l) ss_cells += gn[g] * (cell_mean[g][l] - grand) * (cell_mean[g][l] - grand);
    }
    for (std::size_t l = 0; l < b; ++l) ss_b += N * (level_mean[l] - grand) * (level_mean[l] - grand);
    const double ss_ab = ss_cells - ss_a - ss_b;
    r.ss_subjects_error = ss_subjects - ss_a;
    r.ss_within_error = r.ss_total - ss_subjects - ss_b - ss_ab;

    const double A = static_cast<double>(a);
    const double tiny = 1e-20 * std::max(sumsq, std::numeric_limits<double>::min());
    r.between = make_effect(std::move(between_name), ss_a, A - 1.0, r.ss_subjects_error, N - A, tiny);
    r.within = make_effect(std::move(within_name), ss_b, B - 1.0, r.ss_within_error, (N - A) * (B - 1.0), tiny);
    r.interaction = make_effect(r.between.name + "x" + r.within.name, ss_ab, (A - 1.0) * (B - 1.0), r.ss_within_error,
                                (N - A) * (B - 1.0), tiny);
    return r;
}

// ---------------------------------------------------------------------------
// Post-hoc

inline std::vector<double> bonferroni_adjust(std::span<const double> p) {
    std::vector<double> out(p.size());
    const double m = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::min(1.0, m * p[i]);
    return out;
}

enum class Effect { Between, Within };

struct PairwiseComparison {
    std::string context;  ///< the level of the other factor the comparison is made in
    std::string level_a;
    std::string level_b;
    TestResult test;
    double p_adjusted = 1.0;
    std::size_t family_size = 0;
};

/// Between: groups compared within each within-level (independent t), one family over all of them.
/// Within: levels compared pairwise inside each group (paired t), one family per group.
inline std::vector<PairwiseComparison> bonferroni_posthoc(const MixedDesignTable& table, Effect effect) {
    const auto d = complete_cases(table);
    std::vector<PairwiseComparison> out;
    auto run = [](auto&& fn) {
        try {
            return fn();
        } catch (const DegenerateError&) {
            TestResult t;
            t.method = "degenerate";
            return t;
        }
    };
    auto close_family = [&](std::size_t first) {
        std::vector<double> raw;
        for (std::size_t i = first; i < out.size(); ++i) raw.push_back(out[i].test.p);
        const auto adj = bonferroni_adjust(raw);
        for (std::size_t i = first; i < out.size(); ++i) {
            out[i].p_adjusted = adj[i - first];
            out[i].family_size = raw.size();
        }
    };
    if (effect == Effect::Between) {
        for (std::size_t l = 0; l < d.levels.size(); ++l)
            for (std::size_t g1 = 0; g1 < d.groups.size(); ++g1)
                for (std::size_t g2 = g1 + 1; g2 < d.groups.size(); ++g2) {
                    std::vector<double> x, y;
                    for (std::size_t s = 0; s < d.subjects.size(); ++s) {
                        if (d.subject_group[s] == g1) x.push_back(d.values[s][l]);
                        if (d.subject_group[s] == g2) y.push_back(d.values[s][l]);
                    }
                    out.push_back({d.levels[l], d.groups[g1], d.groups[g2], run([&] { return independent_ttest(x, y); }), 1.0, 0});
                }
        close_family(0);
    } else {
        for (std::size_t g = 0; g < d.groups.size(); ++g) {
            const std::size_t first = out.size();
            for (std::size_t l1 = 0; l1 < d.levels.size(); ++l1)
                for (std::size_t l2 = l1 + 1; l2 < d.levels.size(); ++l2) {
                    std::vector<double> x, y;
                    for (std::size_t s = 0; s < d.subjects.size(); ++s)
                        if (d.subject_group[s] == g) {
                            x.push_back(d.values[s][l1]);
                            y.push_back(d.values[s][l2]);
                        }
                    out.push_back({d.groups[g], d.levels[l1], d.levels[l2], run([&] { return paired_ttest(x, y); }), 1.0, 0});
                }
            close_family(first);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Regression

struct RegressionResult {
    TestResult overall;                  ///< F test of all slopes
    std::vector<double> coefficients;    ///< intercept first
    std::vector<double> std_errors;
    std::vector<double> coefficient_p;
    double r2 = 0.0;
    double adjusted_r2 = 0.0;
    double max_abs_residual = 0.0;
};

/// OLS with intercept. `X` holds predictors only, one row per observation.
inline RegressionResult linear_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const auto n = X.rows();
    const auto p = X.cols();
    if (y.size() != n) throw DomainError("response length differs from predictor rows");
    if (n <= p + 1) throw DegenerateError(fmt::format("regression needs more than {} observations, got {}", p + 1, n));
    Eigen::MatrixXd D(n, p + 1);
    D.col(0).setOnes();
    D.rightCols(p) = X;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    if (qr.rank() < p + 1) throw DegenerateError("singular design: predictors are linearly dependent");
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - D * beta;
    const double sse = resid.squaredNorm();
    const double sst = (y.array() - y.mean()).matrix().squaredNorm();
    if (!(sst > 0.0)) throw DegenerateError("response is constant");

    RegressionResult r;
    r.coefficients.assign(beta.data(), beta.data() + beta.size());
    r.max_abs_residual = resid.cwiseAbs().maxCoeff();
    const double dfe = static_cast<double>(n - p - 1);
    const double dfm = static_cast<double>(p);
    r.r2 = 1.0 - sse / sst;
    r.adjusted_r2 = 1.0 - (1.0 - r.r2) * static_cast<double>(n - 1) / dfe;
    const bool exact = sse <= 1e-24 * sst;
    r.overall.statistic = exact ? std::numeric_limits<double>::infinity() : ((sst - sse) / dfm) / (sse / dfe);
    r.overall.df1 = dfm;
    r.overall.df2 = dfe;
    r.overall.p = f_upper_p(r.overall.statistic, dfm, dfe);
    r.overall.n_a = static_cast<std::size_t>(n);
    r.overall.method = "OLS F";

    const Eigen::MatrixXd cov = (D.transpose() * D).ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1)) * (sse / dfe);
    for (Eigen::Index j = 0; j <= p; ++j) {
        const double se = std::sqrt(std::max(cov(j, j), 0.0));
        r.std_errors.push_back(se);
        r.coefficient_p.push_back(se > 0.0 ? t_two_tailed_p(beta(j) / se, dfe) : clamp_p(0.0));
    }
    return r;
}

}  // namespace hudsim
