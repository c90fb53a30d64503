#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rbd/common.hpp"
#include "rbd/config_file.hpp"

namespace rbd {

// Idle gap between chirp ramps. Not part of the radar config file; together
// with the ADC sampling time it sets the Doppler sampling period (92 us per
// chirp for the default 51.2 us ramp), which the default velocity rows assume.
inline constexpr double kInterChirpIdleS = 40.8e-6;

struct waveform_config {
    double start_frequency_hz = 77e9;
    double bandwidth_hz = 3.072e9;
    double chirp_rate_hz_per_s = 60e12;  // 60 MHz/us
    double adc_sample_rate_hz = 2.5e6;
    int samples_per_chirp = 128;
    int chirps_per_frame = 256;
    double frame_duration_s = 50e-3;
    int num_tx = 2;
    int num_rx = 4;
    double max_range_m = 5.0;

    // throws config_error naming the violated relation
    void check() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw config_error(std::string("waveform: ") + name + " must be positive");
        };
        positive(start_frequency_hz, "start_frequency");
        positive(bandwidth_hz, "bandwidth");
        positive(chirp_rate_hz_per_s, "chirp_rate");
        positive(adc_sample_rate_hz, "adc_sample_rate");
        positive(samples_per_chirp, "samples_per_chirp");
        positive(chirps_per_frame, "chirps_per_frame");
        positive(frame_duration_s, "frame_duration");
        positive(num_tx, "num_tx");
        positive(num_rx, "num_rx");
        positive(max_range_m, "max_range");

        double swept = chirp_rate_hz_per_s * samples_per_chirp / adc_sample_rate_hz;
        if (std::abs(swept - bandwidth_hz) > 1e-3 * bandwidth_hz)
            throw config_error(
                "waveform: bandwidth != chirp_rate * samples_per_chirp / adc_sample_rate "
                "(got " + std::to_string(swept) + " Hz vs " + std::to_string(bandwidth_hz) + " Hz)");
        if (chirps_per_frame % num_tx != 0)
            throw config_error("waveform: chirps_per_frame must be divisible by num_tx");
    }
};

struct derived_params {
    double wavelength_m = 0;
    double range_resolution_m = 0;
    int range_bins = 0;
    double velocity_resolution_mps = 0;
    double max_radial_velocity_mps = 0;
    int doppler_bins = 0;
    int virtual_channels = 0;
    double azimuth_resolution_rad = 0;
    double chirp_repetition_per_tx_s = 0;
    int max_range_bin = 0;
};

inline derived_params derive_params(const waveform_config& cfg) {
    cfg.check();
    derived_params d;
    d.wavelength_m = kSpeedOfLight / cfg.start_frequency_hz;
    d.range_resolution_m = kSpeedOfLight / (2.0 * cfg.bandwidth_hz);
    d.range_bins = cfg.samples_per_chirp;
    d.doppler_bins = cfg.chirps_per_frame / cfg.num_tx;
    d.virtual_channels = cfg.num_tx * cfg.num_rx;

    double chirp_period = cfg.samples_per_chirp / cfg.adc_sample_rate_hz + kInterChirpIdleS;
    d.chirp_repetition_per_tx_s = cfg.num_tx * chirp_period;
    d.velocity_resolution_mps =
        d.wavelength_m / (2.0 * d.doppler_bins * d.chirp_repetition_per_tx_s);
    d.max_radial_velocity_mps = d.velocity_resolution_mps * d.doppler_bins / 2.0;

    d.azimuth_resolution_rad = std::asin(2.0 / d.virtual_channels);
    d.max_range_bin = static_cast<int>(cfg.max_range_m / d.range_resolution_m);
    if (d.max_range_bin > d.range_bins - 1) d.max_range_bin = d.range_bins - 1;
    return d;
}

// --- consistency gate for user-supplied configs -------------------------

struct validation_row {
    std::string name;
    double computed = 0;
    std::optional<double> claimed;
    bool pass = true;
};

struct validation_report {
    std::vector<validation_row> rows;
    bool all_passed() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return true;
    }
    int failures() const {
        int n = 0;
        for (const auto& r : rows) n += r.pass ? 0 : 1;
        return n;
    }
};

// claims: (quantity name, expected value); 1% relative tolerance per row.
// Angle claims are in degrees to match the usual datasheet convention.
inline validation_report validate(const waveform_config& cfg,
                                  const key_values& claims = {}) {
    derived_params d = derive_params(cfg);
    const std::vector<std::pair<std::string, double>> quantities = {
        {"wavelength", d.wavelength_m},
        {"range_resolution", d.range_resolution_m},
        {"range_bins", static_cast<double>(d.range_bins)},
        {"velocity_resolution", d.velocity_resolution_mps},
        {"max_radial_velocity", d.max_radial_velocity_mps},
        {"doppler_bins", static_cast<double>(d.doppler_bins)},
        {"virtual_channels", static_cast<double>(d.virtual_channels)},
        {"azimuth_resolution_deg", d.azimuth_resolution_rad * 180.0 / kPi},
        {"chirp_repetition_per_tx", d.chirp_repetition_per_tx_s},
        {"max_range_bin", static_cast<double>(d.max_range_bin)},
    };

    validation_report rep;
    for (const auto& [name, value] : quantities) {
        validation_row row;
        row.name = name;
        row.computed = value;
        for (const auto& [k, v] : claims) {
            if (k == name) {
                double claim = kv_double(k, v);
                row.claimed = claim;
                double denom = std::max(std::abs(claim), 1e-300);
                row.pass = std::abs(value - claim) / denom <= 0.01;
            }
        }
        rep.rows.push_back(row);
    }
    // a claim naming no known quantity is itself a failure
    for (const auto& [k, v] : claims) {
        bool known = false;
        for (const auto& [name, value] : quantities) known |= (k == name);
        if (!known) rep.rows.push_back({k + " (unknown quantity)", 0.0, kv_double(k, v), false});
    }
    return rep;
}

inline waveform_config waveform_from_kv(const key_values& kv) {
    waveform_config cfg;
    for (const auto& [key, value] : kv) {
        if (key == "start_frequency") cfg.start_frequency_hz = kv_double(key, value);
        else if (key == "bandwidth") cfg.bandwidth_hz = kv_double(key, value);
        else if (key == "chirp_rate") cfg.chirp_rate_hz_per_s = kv_double(key, value);
        else if (key == "adc_sample_rate") cfg.adc_sample_rate_hz = kv_double(key, value);
        else if (key == "samples_per_chirp") cfg.samples_per_chirp = static_cast<int>(kv_long(key, value));
        else if (key == "chirps_per_frame") cfg.chirps_per_frame = static_cast<int>(kv_long(key, value));
        else if (key == "frame_duration") cfg.frame_duration_s = kv_double(key, value);
        else if (key == "num_tx") cfg.num_tx = static_cast<int>(kv_long(key, value));
        else if (key == "num_rx") cfg.num_rx = static_cast<int>(kv_long(key, value));
        else if (key == "max_range") cfg.max_range_m = kv_double(key, value);
        else throw config_error("waveform config: unknown key `" + key + "`");
    }
    cfg.check();
    return cfg;
}

inline waveform_config waveform_from_file(const std::string& path) {
    return waveform_from_kv(parse_key_values_file(path));
}

}  // namespace rbd
