#pragma once

#include <vector>

#include "rbd/fft.hpp"

namespace rbd {

// raw (or range-transformed) radar samples for one frame,
// indexed [doppler_chirp][fast_time_sample][virtual_channel]
struct data_cube {
    int doppler_chirps = 0;
    int fast_samples = 0;
    int channels = 0;
    long frame_index = 0;
    int excluded_scatterers = 0;  // out-of-range points skipped during synthesis
    std::vector<cplx> samples;

    data_cube() = default;
    data_cube(int chirps, int fast, int ch, long frame = 0)
        : doppler_chirps(chirps),
          fast_samples(fast),
          channels(ch),
          frame_index(frame),
          samples(static_cast<size_t>(chirps) * fast * ch) {}

    cplx& at(int chirp, int sample, int channel) {
        return samples[(static_cast<size_t>(chirp) * fast_samples + sample) * channels + channel];
    }
    const cplx& at(int chirp, int sample, int channel) const {
        return samples[(static_cast<size_t>(chirp) * fast_samples + sample) * channels + channel];
    }
};

}  // namespace rbd
