#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <future>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rbd/common.hpp"
#include "rbd/nn.hpp"
#include "rbd/signature.hpp"
#include "rbd/sim.hpp"
#include "rbd/tracking.hpp"

namespace rbd {

struct labeled_sample {
    doppler_pattern pattern;
    behavior label = behavior::other;
};

struct dataset {
    signature_profile profile;
    std::vector<labeled_sample> samples;
    std::uint64_t seed = 0;
    std::string provenance;

    std::array<long, kNumBehaviors> class_counts() const {
        std::array<long, kNumBehaviors> counts{};
        for (const auto& s : samples) counts[static_cast<int>(s.label)] += 1;
        return counts;
    }
};

struct generation_options {
    std::array<int, kNumBehaviors> counts{};  // per-class sample targets
    signature_profile profile{};
    waveform_config wf{};
    tracker_config tk{};
    cfar_params cfar{};
    std::uint64_t seed = 1;
    double fall_min_peak_velocity = 2.0;  // window filter for the falling class
    int frames_per_scene = 260;
    int max_scenes_per_class = 48;
    int threads = 0;
};

namespace detail {

// runs one single-actor scene through the whole chain and keeps the
// patterns emitted for the dominant track
inline std::vector<doppler_pattern> harvest_scene(behavior kind, std::uint64_t scene_seed,
                                                  const generation_options& opts,
                                                  const derived_params& dp) {
    rng r(rng::derive(scene_seed, 0x5C));
    scene sc;
    sc.rng_seed = scene_seed;
    actor a;
    a.kind = kind;
    double range = r.uniform(1.6, 3.4);
    double az = r.uniform(-0.6, 0.6);
    a.anchor_x = range * std::sin(az);
    a.anchor_y = range * std::cos(az);
    a.seed = rng::derive(scene_seed, 0xAC708, 0);
    sc.actors.push_back(a);
    for (int i = 0; i < 3; ++i) {
        scatterer cl;
        double cr = r.uniform(1.0, 4.5);
        double caz = r.uniform(-0.9, 0.9);
        cl.x = cr * std::sin(caz);
        cl.y = cr * std::cos(caz);
        cl.rcs_amplitude = r.uniform(0.5, 2.0);
        sc.clutter.push_back(cl);
    }

    tracker trk(opts.tk);
    pattern_collector collector(opts.profile, dp);
    const int window = opts.profile.time_steps;
    std::map<int, std::deque<double>> peak_velocity;  // per track, one entry per frame

    std::vector<doppler_pattern> out;
    for (int frame = 0; frame < opts.frames_per_scene; ++frame) {
        data_cube cube = synthesize_frame(sc, frame, opts.wf, dp);
        auto cloud = process_frame(std::move(cube), dp, opts.wf.max_range_m, opts.cfar);
        auto stamped = trk.step(std::move(cloud), frame);

        std::map<int, std::vector<radar_point>> by_track;
        for (const auto& p : stamped)
            if (p.track_id) by_track[*p.track_id].push_back(p);

        for (int id : trk.deleted_this_step()) {
            collector.drop(id);
            peak_velocity.erase(id);
        }

        for (int id : trk.active_ids()) {
            auto it = by_track.find(id);
            static const std::vector<radar_point> empty;
            const auto& pts = it != by_track.end() ? it->second : empty;
            double peak = 0;
            for (const auto& p : pts) peak = std::max(peak, std::abs(p.radial_velocity));
            auto& ring = peak_velocity[id];
            ring.push_back(peak);
            if (static_cast<int>(ring.size()) > window) ring.pop_front();

            auto column = accumulate_column(pts, opts.profile, dp);
            auto pattern = collector.push(id, frame, column);
            if (!pattern) continue;
            if (kind == behavior::falling) {
                double window_peak = 0;
                for (double v : ring) window_peak = std::max(window_peak, v);
                if (window_peak < opts.fall_min_peak_velocity) continue;
            }
            out.push_back(std::move(*pattern));
        }
    }
    return out;
}

}  // namespace detail

// labeled single-actor patterns via the full pipeline; deterministic per seed
inline dataset generate_dataset(const generation_options& opts) {
    opts.wf.check();
    derived_params dp = derive_params(opts.wf);
    opts.profile.check(dp.doppler_bins);

    dataset ds;
    ds.profile = opts.profile;
    ds.seed = opts.seed;
    {
        std::ostringstream prov;
        prov << "generator seed=" << opts.seed << " frames_per_scene=" << opts.frames_per_scene
             << " fall_min_peak=" << opts.fall_min_peak_velocity;
        ds.provenance = prov.str();
    }

    int threads = detail::resolve_threads(opts.threads);
    for (int cls = 0; cls < kNumBehaviors; ++cls) {
        int want = opts.counts[cls];
        if (want < 0) throw config_error("generate_dataset: negative count");
        if (want == 0) continue;
        behavior kind = static_cast<behavior>(cls);

        int harvested = 0, scenes_run = 0, empty_scenes = 0;
        int next_scene = 0;
        while (harvested < want) {
            if (scenes_run >= opts.max_scenes_per_class) {
                std::ostringstream why;
                why << "generate_dataset: class " << behavior_name(kind) << " produced "
                    << harvested << "/" << want << " patterns after " << scenes_run
                    << " scenes (" << empty_scenes
                    << " yielded nothing; tracker lost the actor persistently)";
                throw generation_error(why.str());
            }
            // scenes are independent; launch a deterministic batch in parallel
            int batch = std::min(threads, opts.max_scenes_per_class - scenes_run);
            std::vector<std::future<std::vector<doppler_pattern>>> futs;
            for (int b = 0; b < batch; ++b) {
                std::uint64_t scene_seed =
                    rng::derive(opts.seed, static_cast<std::uint64_t>(cls) + 1,
                                static_cast<std::uint64_t>(next_scene + b));
                futs.push_back(std::async(std::launch::async, [&, scene_seed] {
                    return detail::harvest_scene(kind, scene_seed, opts, dp);
                }));
            }
            next_scene += batch;
            for (auto& f : futs) {
                auto patterns = f.get();
                ++scenes_run;
                if (patterns.empty()) ++empty_scenes;
                for (auto& p : patterns) {
                    if (harvested >= want) break;
                    ds.samples.push_back({std::move(p), kind});
                    ++harvested;
                }
            }
        }
    }
    return ds;
}

// uniform split without replacement; |validation| = round(fraction * N)
inline std::pair<dataset, dataset> split_dataset(const dataset& ds, double val_fraction,
                                                 std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw dataset_error("val_fraction must be in (0,1)");
    const long n = static_cast<long>(ds.samples.size());
    long n_val = std::lround(val_fraction * static_cast<double>(n));
    if (n_val == 0 || n_val == n)
        throw dataset_error("split would leave an empty side (" + std::to_string(n - n_val) + "/" +
                            std::to_string(n_val) + ")");

    std::vector<long> idx(n);
    for (long i = 0; i < n; ++i) idx[i] = i;
    rng r(rng::derive(seed, 0x59117));
    for (long i = n - 1; i > 0; --i) {
        long j = static_cast<long>(r.uniform_int(static_cast<std::uint64_t>(i) + 1));
        std::swap(idx[i], idx[j]);
    }

    dataset train, val;
    train.profile = val.profile = ds.profile;
    train.seed = val.seed = ds.seed;
    train.provenance = ds.provenance + " [train split]";
    val.provenance = ds.provenance + " [validation split]";
    for (long i = 0; i < n; ++i) {
        if (i < n_val)
            val.samples.push_back(ds.samples[idx[i]]);
        else
            train.samples.push_back(ds.samples[idx[i]]);
    }
    return {std::move(train), std::move(val)};
}

// --- dataset file (RBDS) --------------------------------------------------
//
// little-endian: magic "RBDS", version u32, profile (D u32, T u32, fold u32,
// stride u32, range_exponent u32, reference_range f64), sample count u64,
// then per sample: label u8, D u16, T u16, D*T f32 values.

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

inline void save_dataset(const dataset& ds, const std::string& path) {
    detail::byte_writer w(path);
    w.write("RBDS", 4);
    w.u32(kDatasetFormatVersion);
    w.u32(static_cast<std::uint32_t>(ds.profile.doppler_bins));
    w.u32(static_cast<std::uint32_t>(ds.profile.time_steps));
    w.u32(static_cast<std::uint32_t>(ds.profile.fold_factor));
    w.u32(static_cast<std::uint32_t>(ds.profile.window_stride));
    w.u32(static_cast<std::uint32_t>(ds.profile.range_exponent));
    double ref = ds.profile.reference_range;
    w.write(&ref, 8);
    std::uint64_t count = ds.samples.size();
    w.write(&count, 8);
    for (const auto& s : ds.samples) {
        std::uint8_t label = static_cast<std::uint8_t>(s.label);
        std::uint16_t d = static_cast<std::uint16_t>(s.pattern.d);
        std::uint16_t t = static_cast<std::uint16_t>(s.pattern.t);
        w.write(&label, 1);
        w.write(&d, 2);
        w.write(&t, 2);
        w.write(s.pattern.values.data(), s.pattern.values.size() * sizeof(float));
    }
    if (!w.f) throw format_error("short write: " + path);
}

inline dataset load_dataset(const std::string& path) {
    detail::byte_reader r(path);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "RBDS", 4) != 0)
        throw format_error(path + ": bad magic at byte offset 0");
    std::uint32_t version = r.u32();
    if (version != kDatasetFormatVersion)
        throw format_error(path + ": unsupported version " + std::to_string(version));
    dataset ds;
    ds.profile.doppler_bins = static_cast<int>(r.u32());
    ds.profile.time_steps = static_cast<int>(r.u32());
    ds.profile.fold_factor = static_cast<int>(r.u32());
    ds.profile.window_stride = static_cast<int>(r.u32());
    ds.profile.range_exponent = static_cast<int>(r.u32());
    r.read(&ds.profile.reference_range, 8);
    std::uint64_t count = r.u64();
    ds.samples.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint8_t label;
        std::uint16_t d, t;
        r.read(&label, 1);
        r.read(&d, 2);
        r.read(&t, 2);
        if (label >= kNumBehaviors)
            throw format_error(path + ": bad label " + std::to_string(label) +
                               " at byte offset " + std::to_string(r.offset - 5));
        if (d != ds.profile.doppler_bins || t != ds.profile.time_steps)
            throw format_error(path + ": sample dims " + std::to_string(d) + "x" +
                               std::to_string(t) + " do not match profile at byte offset " +
                               std::to_string(r.offset - 4));
        labeled_sample s;
        s.label = static_cast<behavior>(label);
        s.pattern.d = d;
        s.pattern.t = t;
        s.pattern.values.resize(static_cast<size_t>(d) * t);
        r.read(s.pattern.values.data(), s.pattern.values.size() * sizeof(float));
        ds.samples.push_back(std::move(s));
    }
    r.expect_eof();
    return ds;
}

// JSON-lines sidecar for human inspection
inline void write_manifest(const dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw format_error("cannot open for writing: " + path);
    auto counts = ds.class_counts();
    f << "{\"type\":\"dataset\",\"seed\":" << ds.seed << ",\"samples\":" << ds.samples.size()
      << ",\"profile\":{\"d\":" << ds.profile.doppler_bins << ",\"t\":" << ds.profile.time_steps
      << ",\"fold\":" << ds.profile.fold_factor << ",\"stride\":" << ds.profile.window_stride
      << ",\"range_exponent\":" << ds.profile.range_exponent
      << ",\"reference_range\":" << ds.profile.reference_range << "}}\n";
    for (int c = 0; c < kNumBehaviors; ++c)
        f << "{\"type\":\"class\",\"label\":" << c << ",\"name\":\""
          << behavior_name(static_cast<behavior>(c)) << "\",\"count\":" << counts[c] << "}\n";
}

// packs a dataset for the training loop
template <class T>
inline detail::sample_matrix<T> to_sample_matrix(const model_config& cfg, const dataset& ds) {
    std::vector<const doppler_pattern*> patterns;
    std::vector<int> labels;
    patterns.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        patterns.push_back(&s.pattern);
        labels.push_back(static_cast<int>(s.label));
    }
    return pack_samples<T>(cfg, patterns, labels);
}

}  // namespace rbd
