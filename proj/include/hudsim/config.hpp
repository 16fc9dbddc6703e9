#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cohort.hpp"
#include "errors.hpp"
#include "keyvalue.hpp"
#include "simulation.hpp"

namespace hudsim {

/// Everything a run can override from a config file.
struct RunSettings {
    SimulationConfig sim;
    CohortSpec cohort;
};

namespace detail {

struct NumberSlot {
    std::string_view key;
    double* target;
};

inline void read_section(const kv::Document& doc, const kv::Section& sec, std::initializer_list<NumberSlot> slots) {
    for (const auto& [key, setting] : sec.settings) {
        bool known = false;
        for (const auto& s : slots) known = known || s.key == key;
        if (!known) throw ParseError(doc.source(), setting.line, key, fmt::format("unknown setting in [{}]", sec.name));
    }
    for (const auto& s : slots) kv::read_number(doc, sec, std::string(s.key), *s.target);
}

inline void read_count(const kv::Document& doc, const kv::Section& sec, const std::string& key, std::size_t& target) {
    double v = static_cast<double>(target);
    kv::read_number(doc, sec, key, v);
    if (v < 0.0 || v != std::floor(v)) throw ParseError(doc.source(), sec.settings.at(key).line, key, "expected a non-negative integer");
    target = static_cast<std::size_t>(v);
}

}  // namespace detail

/// Applies [controller], [hazard], [hud], [physio] and [cohort] sections on top of `base`.
inline RunSettings apply_config(const kv::Document& doc, RunSettings base = {}) {
    for (const auto& sec : doc.sections()) {
        if (!sec.records.empty())
            throw ParseError(doc.source(), sec.records.front().line(), {}, fmt::format("[{}] takes key = value settings only", sec.name));
        if (sec.name == "controller") {
            std::map<std::string, double> values;
            for (const auto& [key, setting] : sec.settings) {
                const auto v = kv::to_double(setting.value);
                if (!v) throw ParseError(doc.source(), setting.line, key, "expected a number");
                values[key] = *v;
            }
            try {
                base.sim.controller.apply(values);
            } catch (const ValidationError& e) {
                throw ParseError(doc.source(), sec.line, {}, e.what());
            }
        } else if (sec.name == "hazard") {
            auto& h = base.sim.hazard;
            detail::read_section(doc, sec,
                                 {{"reaction_time_s", &h.reaction.reaction_time_s},
                                  {"assumed_decel", &h.reaction.assumed_decel},
                                  {"color_exponent", &h.color_exponent},
                                  {"flash_high_hz", &h.flash_high_hz},
                                  {"flash_low_hz", &h.flash_low_hz},
                                  {"horizon_s", &h.horizon_s},
                                  {"sample_dt", &h.sample_dt},
                                  {"collision_margin", &h.collision_margin},
                                  {"sign_notice_s", &h.sign_notice_s}});
            if (!(h.reaction.reaction_time_s >= 0.0 && h.reaction.assumed_decel > 0.0 && h.color_exponent > 0.0 && h.horizon_s > 0.0 &&
                  h.sample_dt > 0.0 && h.flash_high_hz > 0.0 && h.flash_low_hz > 0.0))
                throw ParseError(doc.source(), sec.line, {}, "[hazard] values out of range");
        } else if (sec.name == "hud") {
            auto& h = base.sim.hud;
            detail::read_section(doc, sec,
                                 {{"detection_diameter_m", &h.detection_diameter_m},
                                  {"nav_horizon_s", &h.nav_horizon_s},
                                  {"nav_step_s", &h.nav_step_s},
                                  {"line_ahead_m", &h.line_ahead_m},
                                  {"line_step_m", &h.line_step_m},
                                  {"lane_tolerance_m", &h.lane_tolerance_m}});
            if (!(h.detection_diameter_m > 0.0 && h.nav_step_s > 0.0 && h.line_step_m > 0.0))
                throw ParseError(doc.source(), sec.line, {}, "[hud] values out of range");
        } else if (sec.name == "physio") {
            auto& p = base.cohort.physio;
            double order = p.band.order;
            detail::read_section(doc, sec,
                                 {{"filter_order", &order},
                                  {"band_low_hz", &p.band.low_hz},
                                  {"band_high_hz", &p.band.high_hz},
                                  {"half_window_s", &p.half_window_s},
                                  {"sample_rate", &base.cohort.sample_rate}});
            if (order < 1.0 || order != std::floor(order)) throw ParseError(doc.source(), sec.line, "filter_order", "expected a positive integer");
            p.band.order = static_cast<int>(order);
            if (!(p.band.low_hz > 0.0 && p.band.high_hz > p.band.low_hz && p.band.high_hz < 0.5 * base.cohort.sample_rate && p.half_window_s > 0.0))
                throw ParseError(doc.source(), sec.line, {}, "[physio] band edges or window out of range");
        } else if (sec.name == "cohort") {
            auto& c = base.cohort;
            kv::Section rest = sec;
            for (std::size_t e = 0; e < kEventCount; ++e) {
                const auto key = fmt::format("amplitude_{}", kEventNames[e]);
                kv::read_number(doc, sec, key, c.omn_amplitude[e]);
                rest.settings.erase(key);
            }
            for (const char* key : {"n_omn", "n_sel"}) rest.settings.erase(key);
            detail::read_count(doc, sec, "n_omn", c.n_omn);
            detail::read_count(doc, sec, "n_sel", c.n_sel);
            detail::read_section(doc, rest,
                                 {{"sel_gain", &c.sel_gain},
                                  {"amplitude_spread", &c.amplitude_spread},
                                  {"tonic_min", &c.tonic_min},
                                  {"tonic_max", &c.tonic_max},
                                  {"drift_min", &c.drift_min},
                                  {"drift_max", &c.drift_max},
                                  {"latency_min", &c.latency_min},
                                  {"latency_max", &c.latency_max},
                                  {"noise_sd", &c.noise_sd},
                                  {"baseline_s", &c.baseline_s}});
            try {
                c.validate();
            } catch (const ValidationError& e) {
                throw ParseError(doc.source(), sec.line, {}, e.what());
            }
        } else {
            throw ParseError(doc.source(), sec.line, {}, fmt::format("unknown section [{}]", sec.name));
        }
    }
    return base;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace hudsim
