#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "physio.hpp"
#include "scenario.hpp"

namespace hudsim {

/// Synthetic participant population. Amplitudes are in the analog unit (microsiemens-like).
struct CohortSpec {
    std::size_t n_omn = 15;
    std::size_t n_sel = 15;
    std::uint64_t seed = 1;

    std::array<double, kEventCount> omn_amplitude{0.5, 0.5, 0.5, 0.0, 0.5, 0.0, 0.5};  ///< indexed by EventId
    double sel_gain = 1.5;            ///< SEL amplitude = sel_gain * OMN amplitude
    double amplitude_spread = 0.15;   ///< log-normal sigma of the per-subject amplitude factor
    double tonic_min = 2.0, tonic_max = 10.0;
    double drift_min = 0.0012, drift_max = 0.0018;  ///< per second
    double latency_min = 1.5, latency_max = 3.5;
    double noise_sd = 0.02;
    double baseline_s = 60.0;
    double sample_rate = kDefaultSampleRate;
    PhysioParams physio;
    unsigned threads = 0;  ///< 0 = hardware concurrency

    void validate() const {
        if (n_omn < 1 || n_sel < 1) throw ValidationError("cohort needs at least one subject per group");
        if (!(tonic_min > 0.0 && tonic_max >= tonic_min)) throw ValidationError("tonic range must be positive and ordered");
        if (!(drift_max >= drift_min)) throw ValidationError("drift range must be ordered");
        if (!(latency_min >= 1.0 && latency_max <= 5.0 && latency_max >= latency_min)) throw ValidationError("latency range must lie in [1, 5] s");
        if (noise_sd < 0.0 || amplitude_spread < 0.0 || sel_gain < 0.0) throw ValidationError("noise, spread and gain must be >= 0");
        for (double a : omn_amplitude)
            if (a < 0.0) throw ValidationError("event amplitudes must be >= 0");
    }
};

struct SubjectPlan {
    std::string id;
    std::string group;
    SubjectProfile profile;
    std::uint64_t noise_seed = 0;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::vector<SubjectPlan> plan_cohort(const CohortSpec& spec) {
    spec.validate();
    std::vector<SubjectPlan> plans;
    const std::size_t total = spec.n_omn + spec.n_sel;
    for (std::size_t k = 0; k < total; ++k) {
        const bool sel = k >= spec.n_omn;
        std::mt19937_64 rng(mix_seed(spec.seed, k));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::normal_distribution<double> z(0.0, 1.0);
        SubjectPlan p;
        p.group = sel ? "SEL" : "OMN";
        p.id = fmt::format("{}{:02}", p.group, sel ? k - spec.n_omn + 1 : k + 1);
        p.profile.tonic_level = spec.tonic_min + (spec.tonic_max - spec.tonic_min) * u01(rng);
        p.profile.drift_per_s = spec.drift_min + (spec.drift_max - spec.drift_min) * u01(rng);
        p.profile.latency_s = spec.latency_min + (spec.latency_max - spec.latency_min) * u01(rng);
        p.profile.noise_sd = spec.noise_sd;
        p.profile.baseline_s = spec.baseline_s;
        const double factor = std::exp(spec.amplitude_spread * z(rng));
        for (std::size_t e = 0; e < kEventCount; ++e)
            p.profile.amplitude[e] = spec.omn_amplitude[e] * factor * (sel ? spec.sel_gain : 1.0);
        p.noise_seed = rng();
        plans.push_back(std::move(p));
    }
    return plans;
}

/// Analog trace -> ADC (auto-calibrated) -> feature rows for one subject.
struct SubjectRun {
    GsrTrace digital;
    double saturation_fraction = 0.0;
    SubjectFeatures features;
};

inline SubjectRun run_subject(const SubjectPlan& plan, std::span<const MarkerTime> markers, double run_duration_s, const CohortSpec& spec,
                              bool keep_trace = false) {
    auto analog = synth_gsr(markers, run_duration_s, plan.profile, plan.noise_seed, spec.sample_rate);
    analog.subject_id = plan.id;
    auto q = adc_quantize(analog, auto_calibrate(analog));
    SubjectRun out;
    out.saturation_fraction = q.saturation_fraction;
    out.features = process_subject(q.trace, plan.group, spec.physio);
    if (keep_trace) out.digital = std::move(q.trace);
    return out;
}

inline std::vector<MarkerTime> scenario_markers(const ScenarioDef& sc) {
    std::vector<MarkerTime> m;
    for (const auto& e : sc.events) m.push_back({e.id, e.trigger_time_s});
    return m;
}

struct CohortResult {
    std::vector<FeatureRow> rows;           ///< subject order, then marker order
    std::vector<std::string> excluded;
    double max_saturation = 0.0;
};

/// Subjects run on a small thread pool; each writes only its own slot so the output order is fixed.
inline CohortResult run_cohort(const CohortSpec& spec, std::span<const MarkerTime> markers, double run_duration_s) {
    const auto plans = plan_cohort(spec);
    std::vector<SubjectRun> runs(plans.size());
    unsigned workers = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, plans.size()));
    std::vector<std::exception_ptr> errors(plans.size());
    auto work = [&](unsigned w) {
        for (std::size_t k = w; k < plans.size(); k += workers) {
            try {
                runs[k] = run_subject(plans[k], markers, run_duration_s, spec);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    CohortResult out;
    for (auto& r : runs) {
        out.rows.insert(out.rows.end(), r.features.rows.begin(), r.features.rows.end());
        out.excluded.insert(out.excluded.end(), r.features.excluded.begin(), r.features.excluded.end());
        out.max_saturation = std::max(out.max_saturation, r.saturation_fraction);
    }
    return out;
}

}  // namespace hudsim
