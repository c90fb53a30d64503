#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbd/common.hpp"
#include "rbd/dsp.hpp"

namespace rbd {

// Doppler-vs-time window geometry. Two shipped presets:
//   window48: 64 x 48 bins (2.4 s at 20 fps), pairs with the default model
//   one_second: 64 x 20 bins (1 s at 20 fps)
struct signature_profile {
    int doppler_bins = 64;   // D, folded
    int time_steps = 48;     // T
    int fold_factor = 2;     // raw bins summed per folded bin
    int window_stride = 1;   // frames between emitted windows
    int range_exponent = 4;  // 2 = amplitude, 4 = two-way power compensation
    double reference_range = 1.0;  // m

    static signature_profile window48() { return {}; }
    static signature_profile one_second() {
        signature_profile p;
        p.time_steps = 20;
        return p;
    }

    void check(int raw_doppler_bins) const {
        if (doppler_bins < 1 || time_steps < 1 || fold_factor < 1)
            throw config_error("signature profile: dimensions must be positive");
        if (fold_factor * doppler_bins != raw_doppler_bins)
            throw config_error("signature profile: fold_factor * D must equal " +
                               std::to_string(raw_doppler_bins) + " raw Doppler bins");
        if (window_stride < 1) throw config_error("signature profile: stride must be >= 1");
        if (range_exponent != 2 && range_exponent != 4)
            throw config_error("signature profile: range_exponent must be 2 or 4");
    }
};

inline signature_profile profile_from_name(const std::string& name) {
    if (name == "window48" || name == "default") return signature_profile::window48();
    if (name == "one-second") return signature_profile::one_second();
    throw config_error("unknown signature profile: " + name + " (window48 | one-second)");
}

struct doppler_pattern {
    int d = 0;
    int t = 0;
    int track_id = -1;
    long start_frame = 0;
    std::vector<float> values;  // [d][t], row-major

    float at(int row, int col) const { return values[static_cast<size_t>(row) * t + col]; }
    float& at(int row, int col) { return values[static_cast<size_t>(row) * t + col]; }
    float max_value() const {
        float m = 0;
        for (float v : values) m = std::max(m, v);
        return m;
    }
};

// range-compensated Doppler histogram of one track's points in one frame
inline std::vector<double> accumulate_column(const std::vector<radar_point>& points,
                                             const signature_profile& profile,
                                             const derived_params& dp) {
    profile.check(dp.doppler_bins);
    std::vector<double> folded(profile.doppler_bins, 0.0);
    const int raw_bins = dp.doppler_bins;
    for (const auto& p : points) {
        double range = std::hypot(p.x, p.y);
        double compensation = std::pow(range / profile.reference_range, profile.range_exponent);
        int raw = static_cast<int>(std::lround(p.radial_velocity / dp.velocity_resolution_mps)) +
                  raw_bins / 2;
        raw = std::clamp(raw, 0, raw_bins - 1);
        folded[raw / profile.fold_factor] += p.intensity * compensation;
    }
    return folded;
}

// peak-normalized copy; an all-zero window passes through unchanged
inline doppler_pattern normalize_pattern(doppler_pattern raw) {
    float m = raw.max_value();
    if (m > 0)
        for (auto& v : raw.values) v /= m;
    return raw;
}

// per-track sliding window of Doppler columns
class pattern_collector {
  public:
    pattern_collector(signature_profile profile, const derived_params& dp)
        : profile_(profile), dp_(dp) {
        profile_.check(dp.doppler_bins);
    }

    // columns must arrive in increasing frame order per track; returns a
    // normalized pattern once the window is full, every `stride` frames
    std::optional<doppler_pattern> push(int track_id, long frame_index,
                                        const std::vector<double>& column) {
        if (static_cast<int>(column.size()) != profile_.doppler_bins)
            throw shape_error("pattern_collector: column length " + std::to_string(column.size()) +
                              " != D " + std::to_string(profile_.doppler_bins));
        buffer& buf = buffers_[track_id];
        if (buf.last_frame >= 0 && frame_index <= buf.last_frame)
            throw ordering_error("pattern_collector: track " + std::to_string(track_id) +
                                 " frame " + std::to_string(frame_index) + " not after " +
                                 std::to_string(buf.last_frame));
        buf.last_frame = frame_index;

        const int T = profile_.time_steps, D = profile_.doppler_bins;
        if (buf.columns.empty()) buf.columns.assign(static_cast<size_t>(D) * T, 0.0);
        int slot = static_cast<int>(buf.pushed % T);
        for (int d = 0; d < D; ++d) buf.columns[static_cast<size_t>(d) * T + slot] = column[d];
        buf.frame_of_slot.resize(T, 0);
        buf.frame_of_slot[slot] = frame_index;
        buf.pushed += 1;

        if (buf.pushed < T || (buf.pushed - T) % profile_.window_stride != 0) return std::nullopt;

        doppler_pattern pat;
        pat.d = D;
        pat.t = T;
        pat.track_id = track_id;
        int oldest = static_cast<int>(buf.pushed % T);  // slot holding the oldest column
        pat.start_frame = buf.frame_of_slot[oldest];
        pat.values.resize(static_cast<size_t>(D) * T);
        for (int d = 0; d < D; ++d)
            for (int col = 0; col < T; ++col)
                pat.at(d, col) =
                    static_cast<float>(buf.columns[static_cast<size_t>(d) * T + (oldest + col) % T]);
        return normalize_pattern(std::move(pat));
    }

    void drop(int track_id) { buffers_.erase(track_id); }
    size_t tracked() const { return buffers_.size(); }

    const signature_profile& profile() const { return profile_; }

  private:
    struct buffer {
        std::vector<double> columns;  // D x T ring, slot = pushed % T
        std::vector<long> frame_of_slot;
        long pushed = 0;
        long last_frame = -1;
    };
    signature_profile profile_;
    derived_params dp_;
    std::map<int, buffer> buffers_;
};

// P5 graymap, D rows x T columns, byte = round(255 * value)
inline void write_pgm(const doppler_pattern& pat, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open for writing: " + path);
    f << "P5\n" << pat.t << " " << pat.d << "\n255\n";
    for (int d = 0; d < pat.d; ++d)
        for (int col = 0; col < pat.t; ++col) {
            unsigned char byte =
                static_cast<unsigned char>(std::lround(255.0 * std::clamp(pat.at(d, col), 0.0f, 1.0f)));
            f.put(static_cast<char>(byte));
        }
    if (!f) throw format_error("short write: " + path);
}

}  // namespace rbd
