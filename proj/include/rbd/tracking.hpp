#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "rbd/common.hpp"
#include "rbd/dsp.hpp"

namespace rbd {

inline constexpr int kNoiseLabel = -1;

// classic DBSCAN over 3-d feature points (x, y, weighted velocity);
// neighborhood counts include the point itself
inline std::vector<int> dbscan(const std::vector<std::array<double, 3>>& pts, double eps,
                               int min_pts) {
    if (!(eps > 0.0)) throw config_error("dbscan: eps must be > 0");
    if (min_pts < 1) throw config_error("dbscan: min_pts must be >= 1");
    const int n = static_cast<int>(pts.size());
    const double eps2 = eps * eps;
    auto neighbors = [&](int i) {
        std::vector<int> out;
        for (int j = 0; j < n; ++j) {
            double dx = pts[i][0] - pts[j][0];
            double dy = pts[i][1] - pts[j][1];
            double dv = pts[i][2] - pts[j][2];
            if (dx * dx + dy * dy + dv * dv <= eps2) out.push_back(j);
        }
        return out;
    };

    constexpr int kUnvisited = -2;
    std::vector<int> label(n, kUnvisited);
    int next_cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (label[i] != kUnvisited) continue;
        auto seeds = neighbors(i);
        if (static_cast<int>(seeds.size()) < min_pts) {
            label[i] = kNoiseLabel;
            continue;
        }
        int cluster = next_cluster++;
        label[i] = cluster;
        std::deque<int> queue(seeds.begin(), seeds.end());
        while (!queue.empty()) {
            int j = queue.front();
            queue.pop_front();
            if (label[j] == kNoiseLabel) label[j] = cluster;  // border point
            if (label[j] != kUnvisited) continue;
            label[j] = cluster;
            auto more = neighbors(j);
            if (static_cast<int>(more.size()) >= min_pts)
                queue.insert(queue.end(), more.begin(), more.end());
        }
    }
    return label;
}

// --- Kalman track ---------------------------------------------------------

enum class track_status { tentative, confirmed, coasting };

struct track {
    int id = 0;
    std::array<double, 4> state{};   // x, y, vx, vy
    std::array<double, 16> cov{};    // row-major 4x4
    track_status status = track_status::tentative;
    int hits = 0;
    int misses = 0;  // consecutive
    long last_update_frame = -1;
    unsigned recent = 0;  // hit bitmask over the confirmation window
};

namespace detail {

inline void mat4_mul(const std::array<double, 16>& a, const std::array<double, 16>& b,
                     std::array<double, 16>& out) {
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 4 + j];
            out[i * 4 + j] = s;
        }
}

inline std::array<double, 16> mat4_transpose(const std::array<double, 16>& a) {
    std::array<double, 16> t;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) t[j * 4 + i] = a[i * 4 + j];
    return t;
}

}  // namespace detail

// constant-velocity prediction with a white-acceleration process model
inline void kalman_predict(track& t, double dt, double accel_density) {
    if (!(dt > 0)) throw config_error("kalman_predict: dt must be > 0");
    auto& s = t.state;
    s[0] += s[2] * dt;
    s[1] += s[3] * dt;

    std::array<double, 16> f = {1, 0, dt, 0, 0, 1, 0, dt, 0, 0, 1, 0, 0, 0, 0, 1};
    std::array<double, 16> fp, fpft;
    detail::mat4_mul(f, t.cov, fp);
    detail::mat4_mul(fp, detail::mat4_transpose(f), fpft);
    double q3 = accel_density * dt * dt * dt / 3.0;
    double q2 = accel_density * dt * dt / 2.0;
    double q1 = accel_density * dt;
    fpft[0] += q3;
    fpft[5] += q3;
    fpft[2] += q2;
    fpft[8] += q2;
    fpft[7] += q2;
    fpft[13] += q2;
    fpft[10] += q1;
    fpft[15] += q1;
    t.cov = fpft;
}

// innovation covariance of the (x, y) measurement, and its inverse
struct innovation {
    double s00, s01, s11;      // S = H P H^T + R
    double i00, i01, i11;      // S^-1
};

inline innovation innovation_of(const track& t, double meas_var) {
    innovation v{};
    v.s00 = t.cov[0] + meas_var;
    v.s01 = t.cov[1];
    v.s11 = t.cov[5] + meas_var;
    double det = v.s00 * v.s11 - v.s01 * v.s01;
    v.i00 = v.s11 / det;
    v.i01 = -v.s01 / det;
    v.i11 = v.s00 / det;
    return v;
}

inline double mahalanobis2(const track& t, double mx, double my, double meas_var) {
    innovation v = innovation_of(t, meas_var);
    double dx = mx - t.state[0], dy = my - t.state[1];
    return dx * dx * v.i00 + 2.0 * dx * dy * v.i01 + dy * dy * v.i11;
}

// Joseph-form position update keeps the covariance symmetric PSD
inline void kalman_update(track& t, double mx, double my, double meas_var) {
    innovation v = innovation_of(t, meas_var);
    double dx = mx - t.state[0], dy = my - t.state[1];

    // K = P H^T S^-1, H = [I2 0]
    double k[4][2];
    for (int i = 0; i < 4; ++i) {
        double p0 = t.cov[i * 4 + 0], p1 = t.cov[i * 4 + 1];
        k[i][0] = p0 * v.i00 + p1 * v.i01;
        k[i][1] = p0 * v.i01 + p1 * v.i11;
    }
    for (int i = 0; i < 4; ++i) t.state[i] += k[i][0] * dx + k[i][1] * dy;

    std::array<double, 16> a = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // I - K H
    for (int i = 0; i < 4; ++i) {
        a[i * 4 + 0] -= k[i][0];
        a[i * 4 + 1] -= k[i][1];
    }
    std::array<double, 16> ap, apat;
    detail::mat4_mul(a, t.cov, ap);
    detail::mat4_mul(ap, detail::mat4_transpose(a), apat);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            apat[i * 4 + j] += meas_var * (k[i][0] * k[j][0] + k[i][1] * k[j][1]);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            double s = 0.5 * (apat[i * 4 + j] + apat[j * 4 + i]);
            apat[i * 4 + j] = apat[j * 4 + i] = s;
        }
    t.cov = apat;
}

// --- association -----------------------------------------------------------

struct association {
    std::vector<std::pair<int, int>> matches;  // (track index, cluster index)
    std::vector<int> unmatched_tracks;
    std::vector<int> unmatched_clusters;
};

// greedy global nearest neighbor on Mahalanobis distance, chi-square gated
inline association associate(const std::vector<track>& tracks,
                             const std::vector<std::array<double, 2>>& centroids,
                             double meas_var, double gate_d2 = 9.21) {
    struct cand {
        double d2;
        int ti, ci;
    };
    std::vector<cand> cands;
    for (size_t ti = 0; ti < tracks.size(); ++ti)
        for (size_t ci = 0; ci < centroids.size(); ++ci) {
            double d2 = mahalanobis2(tracks[ti], centroids[ci][0], centroids[ci][1], meas_var);
            if (d2 <= gate_d2) cands.push_back({d2, static_cast<int>(ti), static_cast<int>(ci)});
        }
    std::sort(cands.begin(), cands.end(), [](const cand& a, const cand& b) {
        if (a.d2 != b.d2) return a.d2 < b.d2;
        if (a.ti != b.ti) return a.ti < b.ti;
        return a.ci < b.ci;
    });

    association out;
    std::vector<bool> track_used(tracks.size(), false), cluster_used(centroids.size(), false);
    for (const auto& c : cands) {
        if (track_used[c.ti] || cluster_used[c.ci]) continue;
        track_used[c.ti] = cluster_used[c.ci] = true;
        out.matches.emplace_back(c.ti, c.ci);
    }
    for (size_t i = 0; i < tracks.size(); ++i)
        if (!track_used[i]) out.unmatched_tracks.push_back(static_cast<int>(i));
    for (size_t i = 0; i < centroids.size(); ++i)
        if (!cluster_used[i]) out.unmatched_clusters.push_back(static_cast<int>(i));
    return out;
}

// --- frame-to-frame tracker -------------------------------------------------

struct tracker_config {
    double eps = 0.5;
    int min_pts = 5;
    double velocity_weight = 0.2;  // m per (m/s) in the clustering space
    double frame_period = 0.05;
    double accel_density = 2.0;    // white-acceleration spectral density
    double meas_std = 0.15;
    double gate_d2 = 9.21;         // chi-square, 2 dof, 99%
    int confirm_hits = 3;
    int confirm_window = 5;
    int delete_misses = 10;
    double initial_speed_std = 1.5;
};

class tracker {
  public:
    explicit tracker(tracker_config cfg = {}) : cfg_(cfg) {}

    // clusters the cloud, advances all tracks, stamps track ids into the
    // returned points; frames must arrive in increasing order
    std::vector<radar_point> step(std::vector<radar_point> points, long frame_index) {
        if (frame_index <= last_frame_ && last_frame_ >= 0)
            throw ordering_error("tracker: frame " + std::to_string(frame_index) +
                                 " not after frame " + std::to_string(last_frame_));
        long delta = last_frame_ >= 0 ? frame_index - last_frame_ : 1;
        last_frame_ = frame_index;
        deleted_.clear();

        std::vector<std::array<double, 3>> feats(points.size());
        for (size_t i = 0; i < points.size(); ++i)
            feats[i] = {points[i].x, points[i].y, cfg_.velocity_weight * points[i].radial_velocity};
        std::vector<int> labels = dbscan(feats, cfg_.eps, cfg_.min_pts);

        int n_clusters = 0;
        for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
        std::vector<std::array<double, 2>> centroids(n_clusters, {0, 0});
        std::vector<double> weight(n_clusters, 0);
        for (size_t i = 0; i < points.size(); ++i) {
            if (labels[i] == kNoiseLabel) continue;
            double w = std::max(points[i].intensity, 1e-12);
            centroids[labels[i]][0] += w * points[i].x;
            centroids[labels[i]][1] += w * points[i].y;
            weight[labels[i]] += w;
        }
        for (int c = 0; c < n_clusters; ++c) {
            centroids[c][0] /= weight[c];
            centroids[c][1] /= weight[c];
        }

        double dt = cfg_.frame_period * delta;
        for (auto& t : tracks_) kalman_predict(t, dt, cfg_.accel_density);

        double meas_var = cfg_.meas_std * cfg_.meas_std;
        association assoc = associate(tracks_, centroids, meas_var, cfg_.gate_d2);

        std::vector<int> cluster_track_id(n_clusters, -1);
        for (auto [ti, ci] : assoc.matches) {
            track& t = tracks_[ti];
            kalman_update(t, centroids[ci][0], centroids[ci][1], meas_var);
            t.hits += 1;
            t.misses = 0;
            t.last_update_frame = frame_index;
            push_outcome(t, true);
            if (t.status == track_status::tentative && window_hits(t) >= cfg_.confirm_hits)
                t.status = track_status::confirmed;
            else if (t.status == track_status::coasting)
                t.status = track_status::confirmed;
            cluster_track_id[ci] = t.id;
        }
        for (int ti : assoc.unmatched_tracks) {
            track& t = tracks_[ti];
            t.misses += 1;
            push_outcome(t, false);
            if (t.status == track_status::confirmed) t.status = track_status::coasting;
        }
        for (int ci : assoc.unmatched_clusters) {
            track t;
            t.id = next_id_++;
            t.state = {centroids[ci][0], centroids[ci][1], 0, 0};
            double p = meas_var;
            double v = cfg_.initial_speed_std * cfg_.initial_speed_std;
            t.cov = {p, 0, 0, 0, 0, p, 0, 0, 0, 0, v, 0, 0, 0, 0, v};
            t.hits = 1;
            t.last_update_frame = frame_index;
            t.recent = 1;
            tracks_.push_back(t);
            cluster_track_id[ci] = t.id;
        }

        for (size_t i = tracks_.size(); i-- > 0;) {
            if (tracks_[i].misses >= cfg_.delete_misses) {
                deleted_.push_back(tracks_[i].id);
                tracks_.erase(tracks_.begin() + static_cast<long>(i));
            }
        }

        for (size_t i = 0; i < points.size(); ++i)
            if (labels[i] != kNoiseLabel && cluster_track_id[labels[i]] >= 0)
                points[i].track_id = cluster_track_id[labels[i]];
        return points;
    }

    const std::vector<track>& tracks() const { return tracks_; }
    const std::vector<int>& deleted_this_step() const { return deleted_; }

    std::vector<int> active_ids() const {
        std::vector<int> ids;
        ids.reserve(tracks_.size());
        for (const auto& t : tracks_) ids.push_back(t.id);
        return ids;
    }

  private:
    void push_outcome(track& t, bool hit) {
        t.recent = ((t.recent << 1) | (hit ? 1u : 0u)) & ((1u << cfg_.confirm_window) - 1);
    }
    int window_hits(const track& t) const {
        unsigned m = t.recent;
        int n = 0;
        while (m) { n += m & 1u; m >>= 1; }
        return n;
    }

    tracker_config cfg_;
    std::vector<track> tracks_;
    std::vector<int> deleted_;
    int next_id_ = 1;
    long last_frame_ = -1;
};

}  // namespace rbd
