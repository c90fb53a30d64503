#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "rbd/rng.hpp"
#include "rbd/sim.hpp"
#include "rbd/tracking.hpp"

using namespace rbd;

namespace {

// Cholesky pivots all positive <=> symmetric positive definite
bool is_spd(const std::array<double, 16>& m) {
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (m[i * 4 + j] != m[j * 4 + i]) return false;
    std::array<double, 16> l{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m[i * 4 + j];
            for (int k = 0; k < j; ++k) s -= l[i * 4 + k] * l[j * 4 + k];
            if (i == j) {
                if (s <= 0) return false;
                l[i * 4 + i] = std::sqrt(s);
            } else {
                l[i * 4 + j] = s / l[j * 4 + j];
            }
        }
    }
    return true;
}

std::vector<radar_point> cluster_of_points(double cx, double cy, double v, int n, rng& r) {
    std::vector<radar_point> pts;
    for (int i = 0; i < n; ++i) {
        radar_point p;
        p.x = cx + 0.1 * r.gaussian();
        p.y = cy + 0.1 * r.gaussian();
        p.radial_velocity = v + 0.05 * r.gaussian();
        p.intensity = 10.0 + 5.0 * r.uniform();
        pts.push_back(p);
    }
    return pts;
}

}  // namespace

TEST_CASE("dbscan separates two well-spaced blobs") {
    rng r(3);
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({0.1 * r.gaussian(), 0.1 * r.gaussian(), 0.0});
    for (int i = 0; i < 10; ++i) pts.push_back({3.0 + 0.1 * r.gaussian(), 0.1 * r.gaussian(), 0.0});
    auto labels = dbscan(pts, 0.5, 5);
    std::set<int> clusters;
    for (int l : labels) {
        CHECK(l != kNoiseLabel);
        clusters.insert(l);
    }
    CHECK(clusters.size() == 2);
    for (int i = 1; i < 10; ++i) CHECK(labels[i] == labels[0]);
    for (int i = 11; i < 20; ++i) CHECK(labels[i] == labels[10]);
}

TEST_CASE("dbscan labels an isolated point as noise") {
    std::vector<std::array<double, 3>> pts{{0, 0, 0}};
    CHECK(dbscan(pts, 0.5, 5) == std::vector<int>{kNoiseLabel});
}

TEST_CASE("dbscan parameter validation") {
    std::vector<std::array<double, 3>> pts{{0, 0, 0}};
    CHECK_THROWS_AS(dbscan(pts, 0.0, 5), config_error);
    CHECK_THROWS_AS(dbscan(pts, 1.0, 0), config_error);
}

TEST_CASE("dbscan matches the reachability oracle on random instances") {
    rng r(2024);
    for (int instance = 0; instance < 200; ++instance) {
        int n = 5 + static_cast<int>(r.uniform_int(46));
        std::vector<std::array<double, 3>> pts(n);
        for (auto& p : pts) p = {r.uniform(0, 4), r.uniform(0, 4), r.uniform(-0.4, 0.4)};
        double eps = r.uniform(0.3, 0.9);
        int min_pts = 2 + static_cast<int>(r.uniform_int(5));
        auto labels = dbscan(pts, eps, min_pts);
        INFO("instance ", instance, " n=", n, " eps=", eps, " min_pts=", min_pts);
        CHECK(oracle::dbscan_labels_match(pts, labels, eps, min_pts));
    }
}

TEST_CASE("dbscan core labeling is permutation invariant") {
    rng r(55);
    std::vector<std::array<double, 3>> pts(40);
    for (auto& p : pts) p = {r.uniform(0, 3), r.uniform(0, 3), 0.0};
    auto labels = dbscan(pts, 0.6, 4);

    std::vector<int> perm(pts.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    for (size_t i = perm.size() - 1; i > 0; --i)
        std::swap(perm[i], perm[r.uniform_int(i + 1)]);
    std::vector<std::array<double, 3>> shuffled(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) shuffled[i] = pts[perm[i]];
    auto shuffled_labels = dbscan(shuffled, 0.6, 4);

    CHECK(oracle::dbscan_labels_match(pts, labels, 0.6, 4));
    CHECK(oracle::dbscan_labels_match(shuffled, shuffled_labels, 0.6, 4));
    // noise set must be identical, not just oracle-consistent
    for (size_t i = 0; i < pts.size(); ++i)
        CHECK((labels[perm[i]] == kNoiseLabel) == (shuffled_labels[i] == kNoiseLabel));
}

TEST_CASE("kalman predict advances position by velocity") {
    track t;
    t.state = {1.0, 2.0, 0.5, 0.0};
    t.cov = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    kalman_predict(t, 0.05, 2.0);
    CHECK(t.state[0] == doctest::Approx(1.025).epsilon(1e-12));
    CHECK(t.state[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("kalman predict grows uncertainty at rest") {
    track t;
    t.state = {1.0, 1.0, 0.0, 0.0};
    t.cov = {0.1, 0, 0, 0, 0, 0.1, 0, 0, 0, 0, 0.1, 0, 0, 0, 0, 0.1};
    double trace_before = t.cov[0] + t.cov[5] + t.cov[10] + t.cov[15];
    kalman_predict(t, 0.2, 2.0);
    CHECK(t.state[0] == 1.0);
    CHECK(t.state[1] == 1.0);
    double trace_after = t.cov[0] + t.cov[5] + t.cov[10] + t.cov[15];
    CHECK(trace_after > trace_before);
}

TEST_CASE("two half-steps equal one full step for the state") {
    track a, b;
    a.state = b.state = {0.3, -1.2, 0.8, -0.4};
    a.cov = b.cov = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    kalman_predict(a, 0.05, 2.0);
    kalman_predict(b, 0.025, 2.0);
    kalman_predict(b, 0.025, 2.0);
    for (int i = 0; i < 4; ++i) CHECK(a.state[i] == doctest::Approx(b.state[i]).epsilon(1e-12));
}

TEST_CASE("covariance stays spd through random predict/update cycles") {
    rng r(99);
    track t;
    t.state = {0, 0, 0, 0};
    t.cov = {0.5, 0, 0, 0, 0, 0.5, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    for (int cycle = 0; cycle < 1000; ++cycle) {
        kalman_predict(t, 0.01 + 0.2 * r.uniform(), 0.5 + 3.0 * r.uniform());
        kalman_update(t, t.state[0] + r.gaussian(), t.state[1] + r.gaussian(),
                      0.01 + 0.2 * r.uniform());
        REQUIRE(is_spd(t.cov));
    }
}

TEST_CASE("association matches near pairs and gates far ones") {
    track t;
    t.state = {1.0, 1.0, 0, 0};
    t.cov = {0.05, 0, 0, 0, 0, 0.05, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    double meas_var = 0.15 * 0.15;

    auto near = associate({t}, {{1.05, 1.0}}, meas_var);
    CHECK(near.matches.size() == 1);
    CHECK(near.unmatched_tracks.empty());
    CHECK(near.unmatched_clusters.empty());

    // 5 m innovation: d^2 = 25 / (0.05 + 0.0225) >> 9.21
    CHECK(mahalanobis2(t, 6.0, 1.0, meas_var) > 9.21);
    auto far = associate({t}, {{6.0, 1.0}}, meas_var);
    CHECK(far.matches.empty());
    CHECK(far.unmatched_tracks == std::vector<int>{0});
    CHECK(far.unmatched_clusters == std::vector<int>{0});
}

TEST_CASE("association picks the distance-minimizing pairing") {
    track a, b;
    a.state = {0.0, 0.0, 0, 0};
    b.state = {2.0, 0.0, 0, 0};
    a.cov = b.cov = {0.1, 0, 0, 0, 0, 0.1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    double meas_var = 0.15 * 0.15;
    // centroids near b then near a: indices must cross-match
    auto out = associate({a, b}, {{1.9, 0.1}, {0.1, -0.1}}, meas_var);
    REQUIRE(out.matches.size() == 2);
    for (auto [ti, ci] : out.matches) {
        if (ti == 0) CHECK(ci == 1);
        if (ti == 1) CHECK(ci == 0);
    }
}

TEST_CASE("tracker rejects out-of-order frames") {
    tracker trk;
    trk.step({}, 5);
    CHECK_THROWS_AS(trk.step({}, 5), ordering_error);
    CHECK_THROWS_AS(trk.step({}, 4), ordering_error);
    CHECK_NOTHROW(trk.step({}, 6));
}

TEST_CASE("tracker confirms, coasts, and deletes") {
    rng r(17);
    tracker trk;
    // feed a steady cluster; confirmation needs 3 hits within 5 frames
    for (int f = 0; f < 4; ++f) trk.step(cluster_of_points(1.0, 2.0, 0.3, 12, r), f);
    REQUIRE(trk.tracks().size() == 1);
    CHECK(trk.tracks()[0].status == track_status::confirmed);
    int id = trk.tracks()[0].id;

    // starve it: coasting first, deleted after 10 consecutive misses
    trk.step({}, 4);
    CHECK(trk.tracks()[0].status == track_status::coasting);
    for (int f = 5; f < 14; ++f) trk.step({}, f);
    CHECK(trk.tracks().empty());
    CHECK(trk.deleted_this_step() == std::vector<int>{id});
}

TEST_CASE("a returning cluster re-confirms the coasting track under the same id") {
    rng r(18);
    tracker trk;
    for (int f = 0; f < 5; ++f) trk.step(cluster_of_points(1.0, 2.0, 0.0, 12, r), f);
    int id = trk.tracks()[0].id;
    for (int f = 5; f < 9; ++f) trk.step({}, f);  // 4 misses, below the limit
    CHECK(trk.tracks()[0].status == track_status::coasting);
    trk.step(cluster_of_points(1.0, 2.0, 0.0, 12, r), 9);
    REQUIRE(trk.tracks().size() == 1);
    CHECK(trk.tracks()[0].id == id);
    CHECK(trk.tracks()[0].status == track_status::confirmed);
}

TEST_CASE("points in a matched cluster carry the track id, noise does not") {
    rng r(19);
    tracker trk;
    for (int f = 0; f < 3; ++f) trk.step(cluster_of_points(1.0, 2.0, 0.0, 12, r), f);
    auto pts = cluster_of_points(1.0, 2.0, 0.0, 12, r);
    radar_point lone;
    lone.x = -2.0;
    lone.y = 4.0;
    lone.intensity = 5.0;
    pts.push_back(lone);
    auto stamped = trk.step(std::move(pts), 3);
    int with_id = 0;
    for (const auto& p : stamped) {
        if (p.track_id) {
            ++with_id;
            CHECK(*p.track_id == trk.tracks()[0].id);
        }
    }
    CHECK(with_id == 12);
    CHECK_FALSE(stamped.back().track_id.has_value());
}

TEST_CASE("two synthetic actors hold two confirmed tracks with stable ids") {
    waveform_config cfg;
    derived_params d = derive_params(cfg);
    scene sc;
    sc.rng_seed = 404;
    actor a;
    a.kind = behavior::walking;
    a.anchor_x = -1.5;
    a.anchor_y = 2.0;
    a.seed = rng::derive(sc.rng_seed, 0xAC708, 0);
    actor b;
    b.kind = behavior::swing;
    b.anchor_x = 1.5;
    b.anchor_y = 2.0;
    b.seed = rng::derive(sc.rng_seed, 0xAC708, 1);
    sc.actors = {a, b};
    sc.clutter.push_back({0.0, 4.0, 0.0, 1.5});

    tracker trk;
    std::set<int> seen_ids;
    int frames_with_two_confirmed = 0;
    for (int f = 0; f < 100; ++f) {
        auto cloud = process_frame(synthesize_frame(sc, f, cfg, d), d, cfg.max_range_m, {});
        auto stamped = trk.step(std::move(cloud), f);
        int confirmed = 0;
        for (const auto& t : trk.tracks())
            if (t.status == track_status::confirmed || t.status == track_status::coasting) {
                ++confirmed;
                seen_ids.insert(t.id);
            }
        if (confirmed == 2) ++frames_with_two_confirmed;
    }
    CHECK(seen_ids.size() == 2);  // no id switches over the whole run
    CHECK(frames_with_two_confirmed >= 90);
}

TEST_CASE("steady-state position error stays small for a jittering actor") {
    waveform_config cfg;
    derived_params d = derive_params(cfg);
    scene sc;
    sc.rng_seed = 777;
    actor a;
    a.kind = behavior::seizure;  // on-the-spot jitter
    a.anchor_x = 0.5;
    a.anchor_y = 2.0;
    a.seed = rng::derive(sc.rng_seed, 0xAC708, 0);
    sc.actors = {a};

    tracker trk;
    double err2 = 0;
    int counted = 0;
    for (int f = 0; f < 80; ++f) {
        auto cloud = process_frame(synthesize_frame(sc, f, cfg, d), d, cfg.max_range_m, {});
        trk.step(std::move(cloud), f);
        if (f >= 20) {
            REQUIRE_FALSE(trk.tracks().empty());
            const auto& t = trk.tracks()[0];
            double dx = t.state[0] - a.anchor_x, dy = t.state[1] - a.anchor_y;
            err2 += dx * dx + dy * dy;
            ++counted;
        }
    }
    double rmse = std::sqrt(err2 / counted);
    CHECK(rmse < 0.25);  // eps / 2
}
