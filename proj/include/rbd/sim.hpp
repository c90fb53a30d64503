#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rbd/common.hpp"
#include "rbd/config_file.hpp"
#include "rbd/cube.hpp"
#include "rbd/rng.hpp"
#include "rbd/waveform.hpp"

namespace rbd {

struct scatterer {
    double x = 0;       // m
    double y = 0;       // m
    double radial_velocity = 0;  // m/s, toward radar negative
    double rcs_amplitude = 1.0;  // linear amplitude
};

// per-behavior kinematic knobs; defaults are desk-tuned, not measured
struct motion_params {
    double walk_speed = 1.0;
    double walk_extent = 0.9;       // half peak-to-peak of the radial bounce
    double walk_limb_amp = 1.5;
    double walk_limb_hz = 2.0;
    double fall_peak = 3.5;
    double fall_burst_s = 0.8;
    double fall_cycle_s = 1.7;      // stand-fall-stand repetition
    double fall_rise_speed = 0.8;
    double swing_amp = 2.0;
    double swing_hz = 1.5;
    double seizure_amp = 0.5;
    double seizure_hz = 5.0;
    double restless_amp = 1.0;
    double twitch_amp = 0.3;
};

struct actor {
    behavior kind = behavior::other;
    double anchor_x = 0;
    double anchor_y = 2.0;
    double start_time = 0;
    double stop_time = 1e12;
    motion_params motion{};
    std::uint64_t seed = 0;  // phases / twitch schedule stream
};

struct scene {
    std::vector<actor> actors;
    std::vector<scatterer> clutter;
    double noise_power = 0.08;  // linear, per complex sample
    std::uint64_t rng_seed = 1;
};

namespace detail {

// five-point body: torso + four limbs, offsets in (radial, lateral) m
struct body_point {
    double radial, lateral, rcs;
};

inline constexpr body_point kBody[5] = {
    {0.00, 0.00, 1.00},   // torso
    {0.05, 0.25, 0.35},   // arm
    {0.05, -0.25, 0.35},  // arm
    {-0.12, 0.15, 0.30},  // leg
    {-0.12, -0.15, 0.30}, // leg
};

struct point_state {
    double radial_disp = 0;  // displacement along the line of sight, m
    double velocity = 0;     // radial velocity, m/s
};

// twitch schedule: one event per fixed 0.4 s slot. The quiet stretch between
// events stays under the tracker's 10-miss deletion budget, and each twitch
// moves the torso a little (posture shift) plus one arm/leg pair so the
// CFAR+DBSCAN stage reliably sees a cluster mid-event.
inline point_state other_state(const actor& a, double tau, int point) {
    const double slot_len = 0.4;
    long slot = static_cast<long>(std::floor(tau / slot_len));
    rng r(rng::derive(a.seed, 300, static_cast<std::uint64_t>(slot)));
    double offset = r.uniform(0.0, 0.08);
    double dur = r.uniform(0.24, 0.30);
    double amp = r.uniform(0.6 * a.motion.twitch_amp, a.motion.twitch_amp) *
                 (r.uniform() < 0.5 ? -1.0 : 1.0);
    int side = static_cast<int>(r.uniform_int(2));  // arm + same-side leg
    double te = tau - slot * slot_len - offset;
    point_state s;
    if (te >= 0 && te < dur) {
        double envelope = std::sin(kPi * te / dur);
        if (point == 0) s.velocity = 0.5 * amp * envelope;
        else if (point == 1 + side) s.velocity = amp * envelope;
        else if (point == 3 + side) s.velocity = 0.8 * amp * envelope;
    }
    return s;
}

inline point_state walking_state(const actor& a, double tau, int point) {
    const auto& m = a.motion;
    rng r(rng::derive(a.seed, 301));
    double phase0 = r.uniform(0.0, 1.0);
    double period = 4.0 * m.walk_extent / m.walk_speed;
    double p = tau / period + phase0;
    p -= std::floor(p);
    point_state s;
    if (p < 0.5) {
        s.radial_disp = m.walk_extent * (4.0 * p - 1.0);
        s.velocity = m.walk_speed;
    } else {
        s.radial_disp = m.walk_extent * (3.0 - 4.0 * p);
        s.velocity = -m.walk_speed;
    }
    if (point > 0) {
        // anti-phase limb pairs, mean velocity stays on the torso
        double amp = (point <= 2) ? m.walk_limb_amp : 0.8 * m.walk_limb_amp;
        double sign = (point == 1 || point == 4) ? 1.0 : -1.0;
        double w = 2.0 * kPi * m.walk_limb_hz;
        s.velocity += sign * amp * std::sin(w * tau);
        s.radial_disp += -sign * amp / w * std::cos(w * tau);
    }
    return s;
}

inline point_state falling_state(const actor& a, double tau, int point) {
    const auto& m = a.motion;
    rng r(rng::derive(a.seed, 302));
    double cycle_offset = r.uniform(0.0, m.fall_cycle_s);
    double tc = std::fmod(tau + cycle_offset, m.fall_cycle_s);
    static constexpr double kScale[5] = {1.0, 1.1, 0.9, 1.05, 0.95};
    const double burst = m.fall_burst_s;
    const double settle = 0.2;
    const double rise = 0.5;
    const double lurch = 0.35;  // net radial displacement of the fall, recovered on rise
    point_state s;
    if (tc < burst) {
        s.velocity = -m.fall_peak * kScale[point] * std::sin(kPi * tc / burst);
        s.radial_disp = -lurch * 0.5 * (1.0 - std::cos(kPi * tc / burst));
    } else if (tc < burst + settle) {
        s.radial_disp = -lurch;
    } else if (tc < burst + settle + rise) {
        double tr = tc - burst - settle;
        s.velocity = m.fall_rise_speed * kScale[point] * std::sin(kPi * tr / rise);
        s.radial_disp = -lurch + lurch * 0.5 * (1.0 - std::cos(kPi * tr / rise));
    }
    return s;
}

inline point_state swing_state(const actor& a, double tau, int point) {
    const auto& m = a.motion;
    rng r(rng::derive(a.seed, 303));
    int swing_limb = 1 + static_cast<int>(r.uniform_int(2));  // an arm
    double sway_phase = r.uniform(0.0, 2.0 * kPi);
    point_state s;
    if (point == swing_limb) {
        double w = 2.0 * kPi * m.swing_hz;
        s.velocity = m.swing_amp * std::sin(w * tau);
        s.radial_disp = -m.swing_amp / w * std::cos(w * tau);
    } else {
        // slight postural sway keeps the body visible through the MTI notch
        double w = 2.0 * kPi * 0.35;
        s.velocity = 0.1 * std::sin(w * tau + sway_phase);
        s.radial_disp = -0.1 / w * std::cos(w * tau + sway_phase);
    }
    return s;
}

inline point_state seizure_state(const actor& a, double tau, int point) {
    const auto& m = a.motion;
    rng r(rng::derive(a.seed, 200 + static_cast<std::uint64_t>(point)));
    double phase = r.uniform(0.0, 2.0 * kPi);
    double w = 2.0 * kPi * m.seizure_hz;
    point_state s;
    s.velocity = m.seizure_amp * std::sin(w * tau + phase);
    s.radial_disp = -m.seizure_amp / w * std::cos(w * tau + phase);
    return s;
}

inline point_state restless_state(const actor& a, double tau, int point) {
    const auto& m = a.motion;
    rng r(rng::derive(a.seed, 100 + static_cast<std::uint64_t>(point)));
    point_state s;
    double total = m.restless_amp * r.uniform(0.7, 1.0);
    double weights[4], wsum = 0;
    for (double& w : weights) wsum += (w = r.uniform(0.3, 1.0));
    for (int k = 0; k < 4; ++k) {
        double amp = total * weights[k] / wsum;
        double freq = r.uniform(0.3, 2.2);
        double phase = r.uniform(0.0, 2.0 * kPi);
        double w = 2.0 * kPi * freq;
        s.velocity += amp * std::sin(w * tau + phase);
        s.radial_disp += -amp / w * std::cos(w * tau + phase);
    }
    return s;
}

inline point_state behavior_state(const actor& a, double tau, int point) {
    switch (a.kind) {
        case behavior::other: return other_state(a, tau, point);
        case behavior::walking: return walking_state(a, tau, point);
        case behavior::falling: return falling_state(a, tau, point);
        case behavior::swing: return swing_state(a, tau, point);
        case behavior::seizure: return seizure_state(a, tau, point);
        case behavior::restless: return restless_state(a, tau, point);
    }
    return {};
}

}  // namespace detail

// torso + four limbs at time t; empty outside the actor's active interval
inline std::vector<scatterer> scatterer_ensemble(const actor& a, double t) {
    if (t < a.start_time || t >= a.stop_time) return {};
    double r0 = std::hypot(a.anchor_x, a.anchor_y);
    if (r0 <= 1e-9) throw config_error("actor anchor must not sit on the radar origin");
    double ur_x = a.anchor_x / r0, ur_y = a.anchor_y / r0;
    double ul_x = -ur_y, ul_y = ur_x;

    std::vector<scatterer> out;
    out.reserve(5);
    double tau = t - a.start_time;
    for (int i = 0; i < 5; ++i) {
        const auto& bp = detail::kBody[i];
        detail::point_state st = detail::behavior_state(a, tau, i);
        scatterer s;
        double radial = bp.radial + st.radial_disp;
        s.x = a.anchor_x + radial * ur_x + bp.lateral * ul_x;
        s.y = a.anchor_y + radial * ur_y + bp.lateral * ul_y;
        s.radial_velocity = st.velocity;
        s.rcs_amplitude = bp.rcs;
        out.push_back(s);
    }
    return out;
}

// beat-tone superposition over all visible scatterers plus circular
// Gaussian noise; deterministic per (scene, frame_index)
inline data_cube synthesize_frame(const scene& sc, long frame_index, const waveform_config& cfg,
                                  const derived_params& d) {
    if (frame_index < 0) throw config_error("frame_index must be >= 0");
    data_cube cube(d.doppler_bins, cfg.samples_per_chirp, d.virtual_channels, frame_index);

    double t0 = frame_index * cfg.frame_duration_s;
    std::vector<scatterer> points(sc.clutter.begin(), sc.clutter.end());
    for (const auto& a : sc.actors) {
        auto ensemble = scatterer_ensemble(a, t0);
        points.insert(points.end(), ensemble.begin(), ensemble.end());
    }

    const double ts = 1.0 / cfg.adc_sample_rate_hz;
    const double tr = d.chirp_repetition_per_tx_s;
    const int nd = cube.doppler_chirps, nf = cube.fast_samples, nc = cube.channels;

    std::vector<cplx> fast(nf), chan(nc);
    for (const auto& p : points) {
        double range = std::hypot(p.x, p.y);
        if (range <= 0.05 || range > cfg.max_range_m ||
            std::abs(p.radial_velocity) > d.max_radial_velocity_mps) {
            ++cube.excluded_scatterers;
            continue;
        }
        double az = std::atan2(p.x, p.y);
        double amp = p.rcs_amplitude / (range * range);
        double beat_hz = 2.0 * range * cfg.chirp_rate_hz_per_s / kSpeedOfLight;
        double doppler_hz = 2.0 * p.radial_velocity / d.wavelength_m;

        cplx wf = std::polar(1.0, 2.0 * kPi * beat_hz * ts);
        fast[0] = {1.0, 0.0};
        for (int n = 1; n < nf; ++n) fast[n] = fast[n - 1] * wf;
        for (int k = 0; k < nc; ++k) chan[k] = std::polar(1.0, kPi * k * std::sin(az));
        cplx wc = std::polar(1.0, 2.0 * kPi * doppler_hz * tr);
        cplx chirp = {1.0, 0.0};
        for (int c = 0; c < nd; ++c) {
            cplx* row = &cube.samples[static_cast<size_t>(c) * nf * nc];
            for (int n = 0; n < nf; ++n) {
                cplx base = amp * chirp * fast[n];
                cplx* cell = row + static_cast<size_t>(n) * nc;
                for (int k = 0; k < nc; ++k) cell[k] += base * chan[k];
            }
            chirp *= wc;
        }
    }

    if (sc.noise_power > 0) {
        rng noise(rng::derive(sc.rng_seed, static_cast<std::uint64_t>(frame_index), 0xC0FFEE));
        double sigma = std::sqrt(sc.noise_power / 2.0);
        for (auto& v : cube.samples) v += cplx(sigma * noise.gaussian(), sigma * noise.gaussian());
    }
    return cube;
}

// --- scene description files --------------------------------------------
//
// Same key/value format as waveform configs. Scene-level keys: seed,
// noise_power. A new actor begins at each `actor.behavior` line; a new
// clutter point begins at each `clutter.x` line.
inline scene scene_from_kv(const key_values& kv) {
    scene sc;
    actor* cur_actor = nullptr;
    scatterer* cur_clutter = nullptr;
    for (const auto& [key, value] : kv) {
        if (key == "seed") sc.rng_seed = static_cast<std::uint64_t>(kv_long(key, value));
        else if (key == "noise_power") sc.noise_power = kv_double(key, value);
        else if (key == "actor.behavior") {
            sc.actors.emplace_back();
            cur_actor = &sc.actors.back();
            cur_actor->kind = behavior_from_name(value);
        } else if (key.rfind("actor.", 0) == 0) {
            if (!cur_actor) throw config_error("scene: `" + key + "` before any actor.behavior");
            if (key == "actor.x") cur_actor->anchor_x = kv_double(key, value);
            else if (key == "actor.y") cur_actor->anchor_y = kv_double(key, value);
            else if (key == "actor.start") cur_actor->start_time = kv_double(key, value);
            else if (key == "actor.stop") cur_actor->stop_time = kv_double(key, value);
            else throw config_error("scene: unknown key `" + key + "`");
        } else if (key == "clutter.x") {
            sc.clutter.emplace_back();
            cur_clutter = &sc.clutter.back();
            cur_clutter->x = kv_double(key, value);
        } else if (key.rfind("clutter.", 0) == 0) {
            if (!cur_clutter) throw config_error("scene: `" + key + "` before any clutter.x");
            if (key == "clutter.y") cur_clutter->y = kv_double(key, value);
            else if (key == "clutter.amplitude") cur_clutter->rcs_amplitude = kv_double(key, value);
            else throw config_error("scene: unknown key `" + key + "`");
        } else {
            throw config_error("scene: unknown key `" + key + "`");
        }
    }
    for (size_t i = 0; i < sc.actors.size(); ++i)
        sc.actors[i].seed = rng::derive(sc.rng_seed, 0xAC708, i);
    return sc;
}

inline scene scene_from_file(const std::string& path) {
    return scene_from_kv(parse_key_values_file(path));
}

}  // namespace rbd
