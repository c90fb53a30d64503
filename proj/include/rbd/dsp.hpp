#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "rbd/cube.hpp"
#include "rbd/fft.hpp"
#include "rbd/waveform.hpp"

namespace rbd {

struct range_doppler_map {
    int doppler_bins = 0;
    int range_bins = 0;
    int channels = 0;
    std::vector<cplx> values;   // [doppler][range][channel]
    std::vector<double> power;  // [doppler][range], channel-summed |.|^2

    cplx& at(int d, int r, int ch) {
        return values[(static_cast<size_t>(d) * range_bins + r) * channels + ch];
    }
    const cplx& at(int d, int r, int ch) const {
        return values[(static_cast<size_t>(d) * range_bins + r) * channels + ch];
    }
    double& power_at(int d, int r) { return power[static_cast<size_t>(d) * range_bins + r]; }
    double power_at(int d, int r) const { return power[static_cast<size_t>(d) * range_bins + r]; }
};

struct detection {
    int range_bin = 0;
    int doppler_bin = 0;  // shifted; doppler_bins/2 is zero velocity
    double azimuth_rad = 0;
    double snr = 0;
    double range_m = 0;
    double radial_velocity_mps = 0;
};

struct radar_point {
    double x = 0;
    double y = 0;
    double radial_velocity = 0;
    double intensity = 0;  // linear snr
    long frame_index = 0;
    std::optional<int> track_id;
};

// Hann-windowed FFT along fast time, per (chirp, channel)
inline data_cube range_fft(data_cube cube) {
    const int nf = cube.fast_samples, nc = cube.channels;
    auto window = hann_window(nf);
    std::vector<cplx> line(nf);
    for (int c = 0; c < cube.doppler_chirps; ++c) {
        for (int k = 0; k < nc; ++k) {
            for (int n = 0; n < nf; ++n) line[n] = cube.at(c, n, k) * window[n];
            fft_inplace(line);
            for (int n = 0; n < nf; ++n) cube.at(c, n, k) = line[n];
        }
    }
    return cube;
}

// zero-Doppler notch: subtract the mean across chirps per (range bin, channel)
inline data_cube mti_filter(data_cube cube) {
    const int nd = cube.doppler_chirps, nf = cube.fast_samples, nc = cube.channels;
    for (int n = 0; n < nf; ++n) {
        for (int k = 0; k < nc; ++k) {
            cplx mean = 0;
            for (int c = 0; c < nd; ++c) mean += cube.at(c, n, k);
            mean /= static_cast<double>(nd);
            for (int c = 0; c < nd; ++c) cube.at(c, n, k) -= mean;
        }
    }
    return cube;
}

// Hann-windowed FFT across chirps, shifted so doppler_bins/2 == zero velocity
inline range_doppler_map doppler_fft(const data_cube& cube) {
    range_doppler_map map;
    map.doppler_bins = cube.doppler_chirps;
    map.range_bins = cube.fast_samples;
    map.channels = cube.channels;
    map.values.resize(cube.samples.size());
    map.power.assign(static_cast<size_t>(map.doppler_bins) * map.range_bins, 0.0);

    auto window = hann_window(map.doppler_bins);
    std::vector<cplx> line(map.doppler_bins);
    for (int n = 0; n < map.range_bins; ++n) {
        for (int k = 0; k < map.channels; ++k) {
            for (int c = 0; c < map.doppler_bins; ++c) line[c] = cube.at(c, n, k) * window[c];
            fft_inplace(line);
            fft_shift(line);
            for (int c = 0; c < map.doppler_bins; ++c) map.at(c, n, k) = line[c];
        }
    }
    for (int d = 0; d < map.doppler_bins; ++d)
        for (int n = 0; n < map.range_bins; ++n) {
            double p = 0;
            for (int k = 0; k < map.channels; ++k) p += std::norm(map.at(d, n, k));
            map.power_at(d, n) = p;
        }
    return map;
}

struct cfar_params {
    int guard = 2;
    int train = 8;  // per side
    double pfa = 1e-4;
};

namespace detail {

inline double cfar_alpha(int n_train, double pfa) {
    return n_train * (std::pow(pfa, -1.0 / n_train) - 1.0);
}

// one-dimensional CA-CFAR pass along a strided line; writes the local noise
// estimate for every cell and returns the over-threshold mask
inline void ca_cfar_line(const double* cells, int n, int stride, const cfar_params& p,
                         unsigned char* mask, double* noise) {
    for (int i = 0; i < n; ++i) {
        double sum = 0;
        int count = 0;
        int lead_lo = i + p.guard + 1;
        int lead_hi = std::min(n - 1, i + p.guard + p.train);
        for (int j = lead_lo; j <= lead_hi; ++j) { sum += cells[j * stride]; ++count; }
        int lag_hi = i - p.guard - 1;
        int lag_lo = std::max(0, i - p.guard - p.train);
        for (int j = lag_lo; j <= lag_hi; ++j) { sum += cells[j * stride]; ++count; }
        double estimate = sum / count;
        double alpha = cfar_alpha(count, p.pfa);
        noise[i] = estimate;
        mask[i] = cells[i * stride] > alpha * estimate ? 1 : 0;
    }
}

}  // namespace detail

struct cfar_hit {
    int range_bin = 0;
    int doppler_bin = 0;
    double snr = 0;
};

// two-pass cell-averaging CFAR: a cell must beat the threshold along range
// and along Doppler; snr is taken against the range-pass noise estimate
inline std::vector<cfar_hit> cfar_detect(const range_doppler_map& map, const cfar_params& p) {
    if (p.guard < 1 || p.train < 1) throw config_error("cfar: guard and train must be >= 1");
    if (!(p.pfa > 0.0 && p.pfa < 1.0)) throw config_error("cfar: pfa must be in (0,1)");
    const int nd = map.doppler_bins, nr = map.range_bins;
    const int need = 2 * (p.guard + p.train) + 1;
    if (nr < need || nd < need)
        throw shape_error("cfar: map " + std::to_string(nd) + "x" + std::to_string(nr) +
                          " smaller than window " + std::to_string(need));

    std::vector<unsigned char> range_mask(static_cast<size_t>(nd) * nr);
    std::vector<double> range_noise(static_cast<size_t>(nd) * nr);
    for (int d = 0; d < nd; ++d)
        detail::ca_cfar_line(&map.power[static_cast<size_t>(d) * nr], nr, 1, p,
                             &range_mask[static_cast<size_t>(d) * nr],
                             &range_noise[static_cast<size_t>(d) * nr]);

    std::vector<unsigned char> dop_mask(nd);
    std::vector<double> dop_noise(nd);
    std::vector<cfar_hit> hits;
    for (int r = 0; r < nr; ++r) {
        detail::ca_cfar_line(&map.power[r], nd, nr, p, dop_mask.data(), dop_noise.data());
        for (int d = 0; d < nd; ++d) {
            size_t idx = static_cast<size_t>(d) * nr + r;
            if (range_mask[idx] && dop_mask[d]) {
                cfar_hit h;
                h.range_bin = r;
                h.doppler_bin = d;
                h.snr = map.power[idx] / range_noise[idx];
                hits.push_back(h);
            }
        }
    }
    return hits;
}

// spatial FFT of the channel snapshot zero-padded to fft_size;
// peak bin k maps to arcsin(2k / fft_size)
inline double estimate_azimuth(std::span<const cplx> snapshot, int fft_size = 64) {
    std::vector<cplx> buf(fft_size, cplx{0.0, 0.0});
    for (size_t i = 0; i < snapshot.size(); ++i) buf[i] = snapshot[i];
    fft_inplace(buf);
    fft_shift(buf);
    int peak = 0;
    double best = -1.0;
    for (int i = 0; i < fft_size; ++i) {
        double mag = std::norm(buf[i]);
        if (mag > best) { best = mag; peak = i; }
    }
    int k = peak - fft_size / 2;
    return std::asin(2.0 * k / fft_size);
}

inline std::vector<detection> detections_from_hits(const range_doppler_map& map,
                                                   const std::vector<cfar_hit>& hits,
                                                   const derived_params& dp) {
    std::vector<detection> out;
    out.reserve(hits.size());
    std::vector<cplx> snap(map.channels);
    for (const auto& h : hits) {
        for (int k = 0; k < map.channels; ++k) snap[k] = map.at(h.doppler_bin, h.range_bin, k);
        detection det;
        det.range_bin = h.range_bin;
        det.doppler_bin = h.doppler_bin;
        det.snr = h.snr;
        det.azimuth_rad = estimate_azimuth(snap);
        det.range_m = h.range_bin * dp.range_resolution_m;
        det.radial_velocity_mps = (h.doppler_bin - map.doppler_bins / 2) * dp.velocity_resolution_mps;
        out.push_back(det);
    }
    return out;
}

// bin indices to scene coordinates; points past the range cutoff are dropped
inline std::vector<radar_point> to_point_cloud(const std::vector<detection>& detections,
                                               const derived_params& dp, double max_range_m,
                                               long frame_index) {
    std::vector<radar_point> cloud;
    cloud.reserve(detections.size());
    for (const auto& det : detections) {
        if (det.range_m > max_range_m) continue;
        radar_point pt;
        pt.x = det.range_m * std::sin(det.azimuth_rad);
        pt.y = det.range_m * std::cos(det.azimuth_rad);
        pt.radial_velocity = det.radial_velocity_mps;
        pt.intensity = det.snr;
        pt.frame_index = frame_index;
        cloud.push_back(pt);
    }
    return cloud;
}

// raw cube to point cloud in one call
inline std::vector<radar_point> process_frame(data_cube cube, const derived_params& dp,
                                              double max_range_m, const cfar_params& cp = {}) {
    long frame = cube.frame_index;
    range_doppler_map map = doppler_fft(mti_filter(range_fft(std::move(cube))));
    auto hits = cfar_detect(map, cp);
    auto dets = detections_from_hits(map, hits, dp);
    return to_point_cloud(dets, dp, max_range_m, frame);
}

}  // namespace rbd
