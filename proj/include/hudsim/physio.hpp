#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "errors.hpp"
#include "scenario.hpp"

namespace hudsim {

inline constexpr double kDefaultSampleRate = 256.0;

struct MarkerTime {
    EventId event = EventId::Dog;
    double t_s = 0.0;

    bool operator==(const MarkerTime&) const = default;
};

/// Skin-conductance recording with event markers, times in seconds from the start of the trace.
struct GsrTrace {
    std::string subject_id;
    double sample_rate = kDefaultSampleRate;
    std::vector<double> samples;
    std::vector<MarkerTime> markers;
    double baseline_t0 = 0.0;
    double baseline_t1 = 0.0;  ///< baseline span [t0, t1); excluded from normalization statistics

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
    std::size_t index_of(double t) const { return static_cast<std::size_t>(std::llround(t * sample_rate)); }
};

// ---------------------------------------------------------------------------
// Synthetic signal

/// Bi-exponential SCR impulse, scaled so its maximum is 1.
struct BatemanKernel {
    double tau_rise = 0.75;
    double tau_decay = 2.0;

    double peak_time() const { return tau_rise * tau_decay * std::log(tau_decay / tau_rise) / (tau_decay - tau_rise); }

    double raw(double t) const { return t < 0.0 ? 0.0 : std::exp(-t / tau_decay) - std::exp(-t / tau_rise); }

    double operator()(double t) const { return raw(t) / raw(peak_time()); }
};

struct SubjectProfile {
    double tonic_level = 5.0;    ///< analog units (microsiemens-like)
    double drift_per_s = 0.0;
    std::array<double, kEventCount> amplitude{};  ///< SCR amplitude per event, indexed by EventId
    double latency_s = 2.0;      ///< stimulus onset to SCR onset, 1..5 s
    double noise_sd = 0.0;
    double baseline_s = 60.0;    ///< rest recording prepended to the run
};

/// Tonic ramp + one Bateman response per marker + white noise. `run_markers` are in run time;
/// the returned trace starts `baseline_s` earlier and its markers are shifted accordingly.
inline GsrTrace synth_gsr(std::span<const MarkerTime> run_markers, double run_duration_s, const SubjectProfile& profile,
                          std::uint64_t seed, double sample_rate = kDefaultSampleRate, const BatemanKernel& kernel = {}) {
    if (profile.latency_s < 1.0 || profile.latency_s > 5.0) throw DomainError("SCR latency must lie in [1, 5] s");
    GsrTrace trace;
    trace.sample_rate = sample_rate;
    trace.baseline_t0 = 0.0;
    trace.baseline_t1 = profile.baseline_s;
    const auto n = static_cast<std::size_t>(std::llround((profile.baseline_s + run_duration_s) * sample_rate));
    trace.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        trace.samples[i] = profile.tonic_level + profile.drift_per_s * (static_cast<double>(i) / sample_rate);

    constexpr double support_s = 60.0;
    const double peak = kernel.raw(kernel.peak_time());
    for (const auto& m : run_markers) {
        const double onset = m.t_s + profile.baseline_s + profile.latency_s;
        trace.markers.push_back({m.event, m.t_s + profile.baseline_s});
        const double amp = profile.amplitude[static_cast<std::size_t>(m.event)];
        if (amp == 0.0) continue;
        const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(onset * sample_rate)));
        const auto last = std::min(n, static_cast<std::size_t>((onset + support_s) * sample_rate));
        for (std::size_t i = first; i < last; ++i)
            trace.samples[i] += amp * kernel.raw(static_cast<double>(i) / sample_rate - onset) / peak;
    }
    if (profile.noise_sd > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, profile.noise_sd);
        for (auto& v : trace.samples) v += noise(rng);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Acquisition

struct AdcCalibration {
    double gain = 1.0;
    double offset = 0.0;
};

inline constexpr double kAdcFullScale = 1023.0;
inline constexpr double kBaselineLow = 200.0;
inline constexpr double kBaselineHigh = 512.0;

/// Picks a gain that maps the baseline mean to the middle of the 200-512 a.u. window.
inline AdcCalibration auto_calibrate(const GsrTrace& analog) {
    const std::size_t a = std::min(analog.index_of(analog.baseline_t0), analog.samples.size());
    std::size_t b = std::min(analog.index_of(analog.baseline_t1), analog.samples.size());
    std::span<const double> base(analog.samples);
    base = b > a ? base.subspan(a, b - a) : base;
    double mean = 0.0;
    for (double v : base) mean += v;
    mean = base.empty() ? 0.0 : mean / static_cast<double>(base.size());
    if (!(mean > 0.0) || !std::isfinite(mean)) throw CalibrationError("baseline signal is flat at zero; cannot calibrate gain");
    return {0.5 * (kBaselineLow + kBaselineHigh) / mean, 0.0};
}

struct QuantizedTrace {
    GsrTrace trace;
    double saturation_fraction = 0.0;
};

/// 10-bit conversion: clamp(round(gain * x + offset), 0, 1023).
inline QuantizedTrace adc_quantize(const GsrTrace& analog, const AdcCalibration& cal) {
    QuantizedTrace out{analog, 0.0};
    std::size_t saturated = 0;
    for (auto& v : out.trace.samples) {
        const double code = std::round(cal.gain * v + cal.offset);
        if (code <= 0.0 || code >= kAdcFullScale) ++saturated;
        v = std::clamp(code, 0.0, kAdcFullScale);
    }
    out.saturation_fraction = out.trace.samples.empty() ? 0.0 : static_cast<double>(saturated) / static_cast<double>(out.trace.samples.size());
    return out;
}

// ---------------------------------------------------------------------------
// Band-pass filter

struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

struct BandpassSpec {
    int order = 3;
    double low_hz = 0.16;
    double high_hz = 2.1;
};

/// Digital Butterworth band-pass as second-order sections (analog prototype, band transform, bilinear map).
inline std::vector<Biquad> butterworth_bandpass(const BandpassSpec& spec, double fs) {
    using cd = std::complex<double>;
    if (spec.order < 1) throw DomainError("filter order must be >= 1");
    if (!(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz && spec.high_hz < 0.5 * fs))
        throw DomainError("band edges must satisfy 0 < low < high < fs/2");
    const double fs2 = 2.0 * fs;
    const double w1 = fs2 * std::tan(std::numbers::pi * spec.low_hz / fs);
    const double w2 = fs2 * std::tan(std::numbers::pi * spec.high_hz / fs);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    std::vector<cd> poles;
    for (int k = 0; k < spec.order; ++k) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + spec.order + 1) / (2.0 * spec.order));
        const cd pb = p * bw;
        const cd root = std::sqrt(pb * pb - 4.0 * w0sq);
        for (const cd s : {(pb + root) * 0.5, (pb - root) * 0.5}) poles.push_back((fs2 + s) / (fs2 - s));
    }
    // gain: analog bw^N with N zeros at s = 0 mapped to z = 1 and N at infinity mapped to z = -1
    cd num = std::pow(cd(fs2), spec.order);
    cd den = 1.0;
    for (int k = 0; k < spec.order; ++k) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + spec.order + 1) / (2.0 * spec.order));
        const cd pb = p * bw;
        const cd root = std::sqrt(pb * pb - 4.0 * w0sq);
        for (const cd s : {(pb + root) * 0.5, (pb - root) * 0.5}) den *= fs2 - s;
    }
    double gain = std::pow(bw, spec.order) * (num / den).real();

    // pair conjugates; leftover reals pair with each other
    std::vector<cd> complex_up, reals;
    for (const cd& p : poles) {
        if (std::abs(p.imag()) < 1e-12 * std::max(1.0, std::abs(p))) reals.push_back(p.real());
        else if (p.imag() > 0.0) complex_up.push_back(p);
    }
    std::vector<Biquad> sos;
    for (const cd& p : complex_up) {
        Biquad q;
        q.a = {1.0, -2.0 * p.real(), std::norm(p)};
        q.b = {1.0, 0.0, -1.0};
        sos.push_back(q);
    }
    std::sort(reals.begin(), reals.end(), [](const cd& x, const cd& y) { return x.real() < y.real(); });
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
        Biquad q;
        const double r1 = reals[i].real();
        const double r2 = reals[i + 1].real();
        q.a = {1.0, -(r1 + r2), r1 * r2};
        q.b = {1.0, 0.0, -1.0};
        sos.push_back(q);
    }
    if (reals.size() % 2 != 0) throw DomainError("unpaired real pole in band-pass design");
    for (auto& v : sos.front().b) v *= gain;
    return sos;
}

/// Gain of the digital design at frequency f, evaluated through the bilinear frequency warping.
inline double butterworth_bandpass_magnitude(const BandpassSpec& spec, double fs, double f) {
    if (f <= 0.0) return 0.0;
    const double fs2 = 2.0 * fs;
    const double w1 = fs2 * std::tan(std::numbers::pi * spec.low_hz / fs);
    const double w2 = fs2 * std::tan(std::numbers::pi * spec.high_hz / fs);
    const double w = fs2 * std::tan(std::numbers::pi * f / fs);
    const double x = (w * w - w1 * w2) / (w * (w2 - w1));
    return 1.0 / std::sqrt(1.0 + std::pow(x * x, spec.order));
}

/// Direct-form-II-transposed cascade. `state` holds two values per section and is updated in place.
inline void sosfilt_inplace(std::span<const Biquad> sos, std::span<double> x, std::vector<double>& state) {
    state.resize(2 * sos.size(), 0.0);
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const auto& q = sos[s];
        double z1 = state[2 * s];
        double z2 = state[2 * s + 1];
        for (double& v : x) {
            const double in = v;
            const double y = q.b[0] * in + z1;
            z1 = q.b[1] * in - q.a[1] * y + z2;
            z2 = q.b[2] * in - q.a[2] * y;
            v = y;
        }
        state[2 * s] = z1;
        state[2 * s + 1] = z2;
    }
}

/// Steady-state section states for a unit step input.
inline std::vector<double> sosfilt_steady_state(std::span<const Biquad> sos) {
    std::vector<double> zi(2 * sos.size());
    double scale = 1.0;
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const auto& q = sos[s];
        const double g = (q.b[0] + q.b[1] + q.b[2]) / (q.a[0] + q.a[1] + q.a[2]);
        const double z2 = q.b[2] - q.a[2] * g;
        const double z1 = q.b[1] - q.a[1] * g + z2;
        zi[2 * s] = scale * z1;
        zi[2 * s + 1] = scale * z2;
        scale *= g;
    }
    return zi;
}

/// Zero-phase filtering: odd-extended edges, steady-state start, forward then backward pass.
inline std::vector<double> sosfiltfilt(std::span<const Biquad> sos, std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) throw DomainError("signal too short to filter");
    const std::size_t pad = std::min(n - 1, 3 * (2 * sos.size() + 1));
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    const auto zi = sosfilt_steady_state(sos);
    std::vector<double> state(zi);
    for (auto& v : state) v *= ext.front();
    sosfilt_inplace(sos, ext, state);
    std::reverse(ext.begin(), ext.end());
    state = zi;
    for (auto& v : state) v *= ext.front();
    sosfilt_inplace(sos, ext, state);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline constexpr double kMinFilterSeconds = 10.0;

/// Phasic (SCR) component of a trace.
inline std::vector<double> bandpass_scr(std::span<const double> samples, double fs, const BandpassSpec& spec = {}) {
    if (static_cast<double>(samples.size()) < kMinFilterSeconds * fs)
        throw DomainError(fmt::format("trace of {:.2f} s is shorter than the {} s filter warm-up",
                                      static_cast<double>(samples.size()) / fs, kMinFilterSeconds));
    return sosfiltfilt(butterworth_bandpass(spec, fs), samples);
}

// ---------------------------------------------------------------------------
// Normalization

enum class NormMode { ZScore, MinMax };

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  ///< population standard deviation
};

/// Single-pass (Welford) mean and population standard deviation.
inline MeanSd mean_sd(std::span<const double> x) {
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t k = 0;
    for (double v : x) {
        ++k;
        const double d = v - mean;
        mean += d / static_cast<double>(k);
        m2 += d * (v - mean);
    }
    return {mean, k ? std::sqrt(m2 / static_cast<double>(k)) : 0.0};
}

/// Normalizes `x` using statistics taken from `reference` (defaults to `x` itself).
inline std::vector<double> normalize(std::span<const double> x, NormMode mode, std::optional<std::span<const double>> reference = {}) {
    const auto ref = reference.value_or(x);
    if (ref.empty()) throw DegenerateError("cannot normalize an empty trace");
    std::vector<double> out(x.begin(), x.end());
    if (mode == NormMode::ZScore) {
        const auto [mean, sd] = mean_sd(ref);
        if (!(sd > 0.0)) throw DegenerateError("z-score of a constant trace is undefined");
        for (auto& v : out) v = (v - mean) / sd;
    } else {
        const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
        if (!(*hi > *lo)) throw DegenerateError("min-max scaling of a constant trace is undefined");
        const double span = *hi - *lo;
        for (auto& v : out) v = (v - *lo) / span;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Event windows and features

/// +-10 s around one event. GSR halves are divided by the window's first GSR sample;
/// SCR halves have the first SCR sample subtracted.
struct EventWindow {
    EventId event = EventId::Dog;
    std::size_t half_length = 0;  ///< L
    std::vector<double> gsr_pre, gsr_post;
    std::vector<double> scr_pre, scr_post;
};

inline constexpr double kHalfWindowSeconds = 10.0;

inline EventWindow extract_window(std::span<const double> gsr_hat, std::span<const double> scr, double fs, const MarkerTime& marker,
                                  double half_window_s = kHalfWindowSeconds) {
    if (gsr_hat.size() != scr.size()) throw DomainError("GSR and SCR views must have equal length");
    const auto L = static_cast<std::size_t>(std::llround(half_window_s * fs));
    const auto center = static_cast<long long>(std::llround(marker.t_s * fs));
    if (center - static_cast<long long>(L) < 0 || center + static_cast<long long>(L) > static_cast<long long>(gsr_hat.size()))
        throw WindowError(fmt::format("event {} at {:.2f} s lacks a full +-{:g} s window", to_string(marker.event), marker.t_s, half_window_s));
    const auto start = static_cast<std::size_t>(center) - L;
    const double g0 = gsr_hat[start];
    const double s0 = scr[start];
    if (g0 == 0.0 || !std::isfinite(g0)) throw WindowError(fmt::format("event {}: first GSR sample is zero", to_string(marker.event)));

    EventWindow w;
    w.event = marker.event;
    w.half_length = L;
    w.gsr_pre.resize(L);
    w.gsr_post.resize(L);
    w.scr_pre.resize(L);
    w.scr_post.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        w.gsr_pre[i] = gsr_hat[start + i] / g0;
        w.gsr_post[i] = gsr_hat[start + L + i] / g0;
        w.scr_pre[i] = scr[start + i] - s0;
        w.scr_post[i] = scr[start + L + i] - s0;
    }
    return w;
}

struct HalfFeatures {
    double mean = 0.0;
    double acc = 0.0;
    double max = 0.0;
    double p2p = 0.0;
};

inline HalfFeatures half_features(std::span<const double> gsr, std::span<const double> scr) {
    if (gsr.empty() || scr.empty()) throw DomainError("empty window half");
    HalfFeatures f;
    const double sum = std::accumulate(gsr.begin(), gsr.end(), 0.0);
    const double L = static_cast<double>(gsr.size());
    f.mean = sum / L;
    f.acc = f.mean * L;
    f.max = *std::max_element(gsr.begin(), gsr.end());
    const auto [lo, hi] = std::minmax_element(scr.begin(), scr.end());
    f.p2p = *hi - *lo;
    return f;
}

struct FeatureRow {
    std::string subject;
    std::string group;
    EventId event = EventId::Dog;
    double d_p2p = 0.0;
    double d_max = 0.0;
    double d_mean = 0.0;
    double d_acc = 0.0;
    HalfFeatures pre, post;

    bool operator==(const FeatureRow& o) const {
        return subject == o.subject && group == o.group && event == o.event && d_p2p == o.d_p2p && d_max == o.d_max &&
               d_mean == o.d_mean && d_acc == o.d_acc;
    }
};

/// Post minus Pre for each feature.
inline FeatureRow extract_features(const EventWindow& w) {
    FeatureRow row;
    row.event = w.event;
    row.pre = half_features(w.gsr_pre, w.scr_pre);
    row.post = half_features(w.gsr_post, w.scr_post);
    row.d_p2p = row.post.p2p - row.pre.p2p;
    row.d_max = row.post.max - row.pre.max;
    row.d_mean = row.post.mean - row.pre.mean;
    row.d_acc = row.post.acc - row.pre.acc;
    return row;
}

struct PhysioParams {
    BandpassSpec band;
    double half_window_s = kHalfWindowSeconds;
};

struct SubjectFeatures {
    std::vector<FeatureRow> rows;
    std::vector<std::string> excluded;  ///< events skipped, with reason
};

/// Full per-subject chain on a digitized trace: z-score (in-run span), band-pass, windows, features.
inline SubjectFeatures process_subject(const GsrTrace& trace, const std::string& group, const PhysioParams& params = {}) {
    const std::size_t b0 = std::min(trace.index_of(trace.baseline_t0), trace.samples.size());
    const std::size_t b1 = std::min(trace.index_of(trace.baseline_t1), trace.samples.size());
    std::vector<double> run_samples;
    run_samples.reserve(trace.samples.size());
    for (std::size_t i = 0; i < trace.samples.size(); ++i)
        if (i < b0 || i >= b1) run_samples.push_back(trace.samples[i]);
    const auto z = normalize(trace.samples, NormMode::ZScore, std::span<const double>(run_samples));
    const auto scr = bandpass_scr(z, trace.sample_rate, params.band);

    SubjectFeatures out;
    for (const auto& m : trace.markers) {
        try {
            auto row = extract_features(extract_window(z, scr, trace.sample_rate, m, params.half_window_s));
            row.subject = trace.subject_id;
            row.group = group;
            out.rows.push_back(std::move(row));
        } catch (const WindowError& e) {
            out.excluded.push_back(e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

inline constexpr std::string_view kFeatureHeader = "subject,group,event,dP2P,dMax,dMean,dAcc";

inline void write_feature_table(std::ostream& os, std::span<const FeatureRow> rows) {
    os << kFeatureHeader << '\n';
    for (const auto& r : rows)
        os << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.subject, r.group, to_string(r.event), r.d_p2p, r.d_max, r.d_mean,
                          r.d_acc);
}

inline void write_signal(std::ostream& os, const GsrTrace& trace) {
    os << "t_s,gsr_au\n";
    for (std::size_t i = 0; i < trace.samples.size(); ++i)
        os << fmt::format("{:.6f},{:.17g}\n", static_cast<double>(i) / trace.sample_rate, trace.samples[i]);
}

inline void write_markers(std::ostream& os, std::span<const MarkerTime> markers) {
    os << "event_id,t_s\n";
    for (const auto& m : markers) os << fmt::format("{},{:.6f}\n", to_string(m.event), m.t_s);
}

}  // namespace hudsim
