#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "rbd/rng.hpp"
#include "rbd/signature.hpp"

using namespace rbd;

namespace {

radar_point point_at(double range, double v, double intensity) {
    radar_point p;
    p.x = 0;
    p.y = range;
    p.radial_velocity = v;
    p.intensity = intensity;
    return p;
}

derived_params params() { return derive_params(waveform_config{}); }

}  // namespace

TEST_CASE("profile geometry is validated against the raw doppler bins") {
    derived_params d = params();
    CHECK_NOTHROW(signature_profile::window48().check(d.doppler_bins));
    CHECK_NOTHROW(signature_profile::one_second().check(d.doppler_bins));
    signature_profile bad;
    bad.doppler_bins = 50;  // 2 * 50 != 128
    CHECK_THROWS_AS(bad.check(d.doppler_bins), config_error);
    signature_profile bad_exp;
    bad_exp.range_exponent = 3;
    CHECK_THROWS_AS(bad_exp.check(d.doppler_bins), config_error);
}

TEST_CASE("a still point at the reference range lands centered with unit weight") {
    derived_params d = params();
    signature_profile profile;  // D=64, fold 2, exponent 4, reference 1 m
    auto col = accumulate_column({point_at(1.0, 0.0, 1.0)}, profile, d);
    REQUIRE(static_cast<int>(col.size()) == profile.doppler_bins);
    CHECK(col[32] == doctest::Approx(1.0).epsilon(1e-12));  // raw bin 64 folds to 32
    double sum = 0;
    for (double v : col) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("range compensation follows the configured exponent") {
    derived_params d = params();
    signature_profile p4;
    auto col4 = accumulate_column({point_at(2.0, 0.0, 1.0)}, p4, d);
    CHECK(col4[32] == doctest::Approx(16.0).epsilon(1e-9));  // (2/1)^4

    signature_profile p2;
    p2.range_exponent = 2;
    auto col2 = accumulate_column({point_at(2.0, 0.0, 1.0)}, p2, d);
    CHECK(col2[32] == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("no points gives an all-zero column") {
    auto col = accumulate_column({}, signature_profile{}, params());
    for (double v : col) CHECK(v == 0.0);
}

TEST_CASE("velocities fold into the expected bins and clip at the edges") {
    derived_params d = params();
    signature_profile profile;
    // +12 raw bins -> raw 76 -> folded 38
    auto col = accumulate_column({point_at(1.0, 12.0 * d.velocity_resolution_mps, 1.0)}, profile, d);
    CHECK(col[38] == doctest::Approx(1.0));
    // out-of-span velocity clips to the last bin
    auto clipped = accumulate_column({point_at(1.0, 50.0, 1.0)}, profile, d);
    CHECK(clipped[63] == doctest::Approx(1.0));
    double sum = 0;
    for (double v : clipped) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("column weight is conserved through folding") {
    derived_params d = params();
    signature_profile profile;
    rng r(5);
    std::vector<radar_point> pts;
    double expected = 0;
    for (int i = 0; i < 50; ++i) {
        double range = r.uniform(0.5, 4.5), v = r.uniform(-5, 5), inten = r.uniform(0.1, 30);
        pts.push_back(point_at(range, v, inten));
        expected += inten * std::pow(range / profile.reference_range, profile.range_exponent);
    }
    auto col = accumulate_column(pts, profile, d);
    double sum = 0;
    for (double v : col) sum += v;
    CHECK(std::abs(sum - expected) / expected < 1e-9);
}

TEST_CASE("normalization maps the max to one and keeps ratios") {
    doppler_pattern pat;
    pat.d = 2;
    pat.t = 2;
    pat.values = {5.0f, 2.5f, 0.0f, 1.0f};
    doppler_pattern out = normalize_pattern(pat);
    CHECK(out.values[0] == 1.0f);
    CHECK(out.values[1] == 0.5f);
    CHECK(out.values[3] == 0.2f);

    doppler_pattern zeros;
    zeros.d = 2;
    zeros.t = 2;
    zeros.values = {0, 0, 0, 0};
    doppler_pattern zout = normalize_pattern(zeros);
    for (float v : zout.values) CHECK(v == 0.0f);
}

TEST_CASE("collector emits the first window exactly when full, then per stride") {
    derived_params d = params();
    signature_profile profile = signature_profile::one_second();  // T = 20
    pattern_collector collector(profile, d);
    std::vector<double> col(profile.doppler_bins, 1.0);
    int emitted = 0;
    for (long frame = 1; frame <= 20; ++frame) {
        auto pat = collector.push(7, frame, col);
        if (frame < 20) CHECK_FALSE(pat.has_value());
        if (frame == 20) {
            REQUIRE(pat.has_value());
            CHECK(pat->track_id == 7);
            CHECK(pat->start_frame == 1);
            CHECK(pat->d == 64);
            CHECK(pat->t == 20);
        }
        emitted += pat.has_value() ? 1 : 0;
    }
    auto next = collector.push(7, 21, col);
    REQUIRE(next.has_value());
    CHECK(next->start_frame == 2);
    CHECK(emitted == 1);
}

TEST_CASE("stride spaces out emissions") {
    derived_params d = params();
    signature_profile profile = signature_profile::one_second();
    profile.window_stride = 5;
    pattern_collector collector(profile, d);
    std::vector<double> col(profile.doppler_bins, 1.0);
    std::vector<long> emitted_at;
    for (long frame = 0; frame < 40; ++frame)
        if (collector.push(1, frame, col)) emitted_at.push_back(frame);
    CHECK(emitted_at == std::vector<long>{19, 24, 29, 34, 39});
}

TEST_CASE("a track dropped before its window fills never emits") {
    derived_params d = params();
    signature_profile profile = signature_profile::one_second();
    pattern_collector collector(profile, d);
    std::vector<double> col(profile.doppler_bins, 1.0);
    for (long frame = 0; frame < 10; ++frame) CHECK_FALSE(collector.push(3, frame, col).has_value());
    collector.drop(3);
    CHECK(collector.tracked() == 0);
    // a later track with the same id starts from scratch
    for (long frame = 50; frame < 60; ++frame)
        CHECK_FALSE(collector.push(3, frame, col).has_value());
}

TEST_CASE("interleaved tracks never mix columns") {
    derived_params d = params();
    signature_profile profile = signature_profile::one_second();
    pattern_collector both(profile, d), only_a(profile, d), only_b(profile, d);
    rng r(8);

    for (long frame = 0; frame < 30; ++frame) {
        std::vector<double> ca(profile.doppler_bins), cb(profile.doppler_bins);
        for (auto& v : ca) v = r.uniform();
        for (auto& v : cb) v = r.uniform();
        auto pa = both.push(1, frame, ca);
        auto pb = both.push(2, frame, cb);
        auto ra = only_a.push(1, frame, ca);
        auto rb = only_b.push(2, frame, cb);
        REQUIRE(pa.has_value() == ra.has_value());
        REQUIRE(pb.has_value() == rb.has_value());
        if (pa) CHECK(pa->values == ra->values);
        if (pb) CHECK(pb->values == rb->values);
    }
}

TEST_CASE("collector rejects out-of-order frames per track") {
    derived_params d = params();
    pattern_collector collector(signature_profile{}, d);
    std::vector<double> col(64, 0.0);
    collector.push(1, 5, col);
    CHECK_THROWS_AS(collector.push(1, 5, col), ordering_error);
    CHECK_THROWS_AS(collector.push(1, 4, col), ordering_error);
    CHECK_NOTHROW(collector.push(2, 4, col));  // other tracks are independent
}

TEST_CASE("emitted patterns are normalized and scale invariant") {
    derived_params d = params();
    signature_profile profile = signature_profile::one_second();
    auto run = [&](double scale) {
        pattern_collector collector(profile, d);
        rng r(21);
        std::optional<doppler_pattern> last;
        for (long frame = 0; frame < 25; ++frame) {
            std::vector<double> col(profile.doppler_bins);
            for (auto& v : col) v = scale * r.uniform(0.0, 3.0);
            if (auto p = collector.push(1, frame, col)) last = p;
        }
        REQUIRE(last.has_value());
        return *last;
    };

    doppler_pattern base = run(1.0);
    // power-of-two scales are exact in the float format: bit-identical output
    for (double scale : {0.25, 8.0, 1048576.0})
        CHECK(base.values == run(scale).values);
    // arbitrary positive scales agree to rounding
    doppler_pattern odd = run(7.25);
    for (size_t i = 0; i < base.values.size(); ++i)
        CHECK(std::abs(base.values[i] - odd.values[i]) < 1e-6f);

    float max = 0;
    for (float v : base.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        max = std::max(max, v);
    }
    CHECK(max == 1.0f);
}

TEST_CASE("pgm export writes the expected header and bytes") {
    doppler_pattern pat;
    pat.d = 2;
    pat.t = 3;
    pat.values = {0.0f, 0.5f, 1.0f, 0.25f, 0.75f, 0.1f};
    std::string path = "test_pattern.pgm";
    write_pgm(pat, path);

    std::ifstream f(path, std::ios::binary);
    std::string magic, dims;
    std::getline(f, magic);
    std::getline(f, dims);
    std::string maxval;
    std::getline(f, maxval);
    CHECK(magic == "P5");
    CHECK(dims == "3 2");
    CHECK(maxval == "255");
    unsigned char bytes[6];
    f.read(reinterpret_cast<char*>(bytes), 6);
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 128);
    CHECK(bytes[2] == 255);
    CHECK(bytes[3] == 64);
    CHECK(bytes[4] == 191);
    CHECK(bytes[5] == 26);
    std::remove(path.c_str());
}
