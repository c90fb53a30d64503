#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "rbd/dataset.hpp"
#include "rbd/nn.hpp"
#include "rbd/signature.hpp"
#include "rbd/sim.hpp"
#include "rbd/tracking.hpp"

namespace rbd {

// --- wire records -----------------------------------------------------------

struct point_record {
    long frame = 0;
    std::optional<int> track_id;
    double x = 0, y = 0, v = 0, intensity = 0;
};

struct prediction_record {
    long frame = 0;
    int track_id = 0;
    int label = 0;
    std::string class_name;
    double probability = 0;
};

struct stream_stats {
    long frames = 0;
    long points = 0;
    long predictions = 0;
    double mean_latency_ms = 0;  // dsp + tracking + signature + classify
    double max_latency_ms = 0;
};

// --- bounded FIFO with backpressure ------------------------------------------

template <class T>
class bounded_queue {
  public:
    explicit bounded_queue(size_t capacity) : capacity_(capacity) {}

    void push(T value) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
        if (closed_) return;
        items_.push_back(std::move(value));
        not_empty_.notify_one();
    }

    // blocks until an item arrives; empty after close() drains
    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        T v = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return v;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

  private:
    std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
    std::deque<T> items_;
    size_t capacity_;
    bool closed_ = false;
};

// --- three-stage runtime -------------------------------------------------------
//
// stage 1: point-cloud source (synthesis + dsp + tracking)
// stage 2: per-track signature collection
// stage 3: behavior classification
// The stages run either as one sequential loop or as three threads joined by
// bounded queues; both orderings emit identical records for identical seeds.

struct stream_config {
    scene sc{};
    waveform_config wf{};
    signature_profile profile{};
    tracker_config tk{};
    cfar_params cfar{};
    long frames = 0;
    bool realtime = false;  // pace stage 1 at the frame period
    size_t queue_capacity = 8;
};

struct stream_sink {
    std::function<void(const point_record&)> on_point;
    std::function<void(const prediction_record&)> on_prediction;
};

namespace detail {

struct cloud_bundle {
    long frame = 0;
    std::vector<radar_point> points;
    std::vector<int> active_tracks;
    std::vector<int> deleted_tracks;
    double latency_ms = 0;
};

struct pattern_bundle {
    long frame = 0;
    std::vector<radar_point> points;
    std::vector<doppler_pattern> patterns;
    double latency_ms = 0;
};

class stream_source {
  public:
    stream_source(const stream_config& cfg, const derived_params& dp)
        : cfg_(cfg), dp_(dp), tracker_(cfg.tk) {}

    cloud_bundle produce(long frame) {
        data_cube cube = synthesize_frame(cfg_.sc, frame, cfg_.wf, dp_);
        auto t0 = std::chrono::steady_clock::now();
        auto cloud = process_frame(std::move(cube), dp_, cfg_.wf.max_range_m, cfg_.cfar);
        cloud_bundle b;
        b.frame = frame;
        b.points = tracker_.step(std::move(cloud), frame);
        b.active_tracks = tracker_.active_ids();
        b.deleted_tracks = tracker_.deleted_this_step();
        b.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
        return b;
    }

  private:
    stream_config cfg_;
    derived_params dp_;
    tracker tracker_;
};

class stream_collector {
  public:
    stream_collector(const signature_profile& profile, const derived_params& dp)
        : collector_(profile, dp), profile_(profile), dp_(dp) {}

    pattern_bundle collect(cloud_bundle b) {
        auto t0 = std::chrono::steady_clock::now();
        pattern_bundle out;
        out.frame = b.frame;
        out.latency_ms = b.latency_ms;

        std::map<int, std::vector<radar_point>> by_track;
        for (const auto& p : b.points)
            if (p.track_id) by_track[*p.track_id].push_back(p);
        for (int id : b.deleted_tracks) collector_.drop(id);
        for (int id : b.active_tracks) {
            static const std::vector<radar_point> empty;
            auto it = by_track.find(id);
            auto column = accumulate_column(it != by_track.end() ? it->second : empty, profile_, dp_);
            if (auto pattern = collector_.push(id, b.frame, column))
                out.patterns.push_back(std::move(*pattern));
        }
        out.points = std::move(b.points);
        out.latency_ms += std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        return out;
    }

  private:
    pattern_collector collector_;
    signature_profile profile_;
    derived_params dp_;
};

class stream_classifier {
  public:
    explicit stream_classifier(model<float>& m) : model_(m) {}

    void classify(pattern_bundle b, const stream_sink& sink, stream_stats& stats) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<prediction_record> preds;
        for (const auto& pat : b.patterns) {
            prediction p = predict(model_, pat, cache_);
            prediction_record rec;
            rec.frame = b.frame;
            rec.track_id = pat.track_id;
            rec.label = static_cast<int>(p.label);
            rec.class_name = behavior_name(p.label);
            rec.probability = p.probabilities[rec.label];
            preds.push_back(std::move(rec));
        }
        double ms = b.latency_ms + std::chrono::duration<double, std::milli>(
                                       std::chrono::steady_clock::now() - t0)
                                       .count();
        stats.frames += 1;
        stats.points += static_cast<long>(b.points.size());
        stats.predictions += static_cast<long>(preds.size());
        stats.mean_latency_ms += (ms - stats.mean_latency_ms) / stats.frames;
        stats.max_latency_ms = std::max(stats.max_latency_ms, ms);

        // point records precede prediction records within a frame
        if (sink.on_point)
            for (const auto& p : b.points) {
                point_record rec;
                rec.frame = b.frame;
                rec.track_id = p.track_id;
                rec.x = p.x;
                rec.y = p.y;
                rec.v = p.radial_velocity;
                rec.intensity = p.intensity;
                sink.on_point(rec);
            }
        if (sink.on_prediction)
            for (const auto& p : preds) sink.on_prediction(p);
    }

  private:
    model<float>& model_;
    forward_cache<float> cache_;
};

}  // namespace detail

inline stream_stats run_stream_sequential(const stream_config& cfg, model<float>& m,
                                          const stream_sink& sink) {
    derived_params dp = derive_params(cfg.wf);
    cfg.profile.check(dp.doppler_bins);
    detail::stream_source source(cfg, dp);
    detail::stream_collector collector(cfg.profile, dp);
    detail::stream_classifier classifier(m);

    stream_stats stats;
    auto start = std::chrono::steady_clock::now();
    for (long frame = 0; frame < cfg.frames; ++frame) {
        if (cfg.realtime)
            std::this_thread::sleep_until(
                start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(frame * cfg.wf.frame_duration_s)));
        classifier.classify(collector.collect(source.produce(frame)), sink, stats);
    }
    return stats;
}

inline stream_stats run_stream_threaded(const stream_config& cfg, model<float>& m,
                                        const stream_sink& sink) {
    derived_params dp = derive_params(cfg.wf);
    cfg.profile.check(dp.doppler_bins);
    detail::stream_source source(cfg, dp);
    detail::stream_collector collector(cfg.profile, dp);
    detail::stream_classifier classifier(m);

    bounded_queue<detail::cloud_bundle> clouds(cfg.queue_capacity);
    bounded_queue<detail::pattern_bundle> patterns(cfg.queue_capacity);

    std::exception_ptr stage_error;
    std::mutex error_mu;
    auto capture = [&](std::exception_ptr e) {
        std::lock_guard lock(error_mu);
        if (!stage_error) stage_error = e;
    };

    std::thread producer([&] {
        try {
            auto start = std::chrono::steady_clock::now();
            for (long frame = 0; frame < cfg.frames; ++frame) {
                if (cfg.realtime)
                    std::this_thread::sleep_until(
                        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(frame * cfg.wf.frame_duration_s)));
                clouds.push(source.produce(frame));
            }
        } catch (...) {
            capture(std::current_exception());
        }
        clouds.close();
    });
    std::thread collecting([&] {
        try {
            while (auto b = clouds.pop()) patterns.push(collector.collect(std::move(*b)));
        } catch (...) {
            capture(std::current_exception());
        }
        patterns.close();
    });

    stream_stats stats;
    try {
        while (auto b = patterns.pop()) classifier.classify(std::move(*b), sink, stats);
    } catch (...) {
        capture(std::current_exception());
        clouds.close();
        patterns.close();
    }
    producer.join();
    collecting.join();
    if (stage_error) std::rethrow_exception(stage_error);
    return stats;
}

inline stream_stats run_stream(const stream_config& cfg, model<float>& m, const stream_sink& sink,
                               bool threaded = true) {
    return threaded ? run_stream_threaded(cfg, m, sink) : run_stream_sequential(cfg, m, sink);
}

}  // namespace rbd
