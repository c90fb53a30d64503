#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "rbd/dataset.hpp"

using namespace rbd;

namespace {

// fabricated dataset for split/serialization tests (no simulation)
dataset dummy_dataset(int n, int d = 8, int t = 4) {
    dataset ds;
    ds.profile.doppler_bins = d;
    ds.profile.time_steps = t;
    ds.profile.fold_factor = 128 / d;
    ds.seed = 42;
    rng r(7);
    for (int i = 0; i < n; ++i) {
        labeled_sample s;
        s.label = static_cast<behavior>(i % kNumBehaviors);
        s.pattern.d = d;
        s.pattern.t = t;
        s.pattern.values.resize(static_cast<size_t>(d) * t);
        for (auto& v : s.pattern.values) v = static_cast<float>(r.uniform());
        s.pattern.values[i % s.pattern.values.size()] = 1.0f;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

generation_options small_options(int per_class, std::uint64_t seed) {
    generation_options opts;
    opts.counts.fill(per_class);
    opts.seed = seed;
    opts.frames_per_scene = 130;
    return opts;
}

}  // namespace

TEST_CASE("generated samples are labeled, counted, and normalized") {
    dataset ds = generate_dataset(small_options(6, 11));
    CHECK(ds.samples.size() == 36);
    auto counts = ds.class_counts();
    for (long c : counts) CHECK(c == 6);

    for (const auto& s : ds.samples) {
        CHECK(s.pattern.d == ds.profile.doppler_bins);
        CHECK(s.pattern.t == ds.profile.time_steps);
        float max = 0;
        for (float v : s.pattern.values) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
            max = std::max(max, v);
        }
        CHECK((max == 0.0f || max == 1.0f));
    }
}

TEST_CASE("falling samples carry fast doppler content, per the window filter") {
    generation_options opts = small_options(0, 12);
    opts.counts[static_cast<int>(behavior::falling)] = 8;
    dataset ds = generate_dataset(opts);
    REQUIRE(ds.samples.size() == 8);
    // 2 m/s is 24 raw bins = 12 folded bins off center
    for (const auto& s : ds.samples) {
        bool fast_energy = false;
        for (int d = 0; d < s.pattern.d; ++d) {
            if (std::abs(d - s.pattern.d / 2) < 12) continue;
            for (int t = 0; t < s.pattern.t; ++t)
                fast_energy |= s.pattern.at(d, t) > 0.05f;
        }
        CHECK(fast_energy);
    }
}

TEST_CASE("generation is deterministic and thread-count independent") {
    generation_options opts = small_options(0, 13);
    opts.counts[1] = 4;
    opts.counts[3] = 4;
    opts.threads = 1;
    dataset a = generate_dataset(opts);
    opts.threads = 2;
    dataset b = generate_dataset(opts);
    REQUIRE(a.samples.size() == b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].label == b.samples[i].label);
        CHECK(a.samples[i].pattern.values == b.samples[i].pattern.values);
    }
}

TEST_CASE("all-zero counts give an empty dataset") {
    dataset ds = generate_dataset(small_options(0, 14));
    CHECK(ds.samples.empty());
}

TEST_CASE("an impossible target raises a generation error with diagnostics") {
    generation_options opts = small_options(0, 15);
    opts.counts[0] = 1000000;
    opts.max_scenes_per_class = 1;
    opts.frames_per_scene = 60;
    CHECK_THROWS_AS(generate_dataset(opts), generation_error);
}

TEST_CASE("split produces the rounded sizes") {
    dataset ds = dummy_dataset(1000);
    auto [train, val] = split_dataset(ds, 0.10, 5);
    CHECK(train.samples.size() == 900);
    CHECK(val.samples.size() == 100);

    auto [t30, v30] = split_dataset(ds, 0.30, 5);
    CHECK(t30.samples.size() == 700);
    CHECK(v30.samples.size() == 300);
}

TEST_CASE("splits are disjoint and cover the dataset across seeds") {
    dataset ds = dummy_dataset(60);
    // tag samples by a unique value so membership is identifiable
    for (size_t i = 0; i < ds.samples.size(); ++i)
        ds.samples[i].pattern.values[0] = static_cast<float>(i);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto [train, val] = split_dataset(ds, 0.25, seed);
        CHECK(train.samples.size() + val.samples.size() == ds.samples.size());
        std::set<float> seen;
        for (const auto& s : train.samples) seen.insert(s.pattern.values[0]);
        for (const auto& s : val.samples) seen.insert(s.pattern.values[0]);
        CHECK(seen.size() == ds.samples.size());
    }
}

TEST_CASE("degenerate splits are rejected") {
    dataset ds = dummy_dataset(10);
    CHECK_THROWS_AS(split_dataset(ds, 0.0, 1), dataset_error);
    CHECK_THROWS_AS(split_dataset(ds, 1.0, 1), dataset_error);
    CHECK_THROWS_AS(split_dataset(ds, 0.01, 1), dataset_error);  // rounds to zero val
}

TEST_CASE("dataset files round-trip bit-exactly") {
    dataset ds = dummy_dataset(25);
    std::string path = "test_dataset.rbds";
    save_dataset(ds, path);
    dataset loaded = load_dataset(path);
    CHECK(loaded.profile.doppler_bins == ds.profile.doppler_bins);
    CHECK(loaded.profile.time_steps == ds.profile.time_steps);
    REQUIRE(loaded.samples.size() == ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(loaded.samples[i].label == ds.samples[i].label);
        CHECK(loaded.samples[i].pattern.values == ds.samples[i].pattern.values);
    }
    std::remove(path.c_str());
}

TEST_CASE("an empty dataset round-trips") {
    dataset ds;
    ds.profile = signature_profile::one_second();
    std::string path = "test_dataset_empty.rbds";
    save_dataset(ds, path);
    dataset loaded = load_dataset(path);
    CHECK(loaded.samples.empty());
    CHECK(loaded.profile.time_steps == 20);
    std::remove(path.c_str());
}

TEST_CASE("truncated dataset files fail with a format error and offset") {
    dataset ds = dummy_dataset(4);
    std::string path = "test_dataset_trunc.rbds";
    save_dataset(ds, path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size()) - 7);
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("byte offset"), format_error);
    std::remove(path.c_str());
}

TEST_CASE("manifest counts equal actual label counts") {
    dataset ds = dummy_dataset(23);  // uneven per-class counts
    std::string path = "test_manifest.jsonl";
    write_manifest(ds, path);
    auto counts = ds.class_counts();
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);  // header line
    CHECK(line.find("\"type\":\"dataset\"") != std::string::npos);
    for (int c = 0; c < kNumBehaviors; ++c) {
        REQUIRE(std::getline(f, line));
        CHECK(line.find("\"label\":" + std::to_string(c)) != std::string::npos);
        CHECK(line.find("\"count\":" + std::to_string(counts[c])) != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("a nearest-centroid classifier separates the generated classes") {
    dataset ds = generate_dataset(small_options(24, 16));
    auto [train, val] = split_dataset(ds, 0.25, 3);

    const size_t dim = static_cast<size_t>(ds.profile.doppler_bins) * ds.profile.time_steps;
    std::vector<std::vector<double>> centroid(kNumBehaviors, std::vector<double>(dim, 0.0));
    std::array<long, kNumBehaviors> n{};
    for (const auto& s : train.samples) {
        int c = static_cast<int>(s.label);
        for (size_t i = 0; i < dim; ++i) centroid[c][i] += s.pattern.values[i];
        n[c] += 1;
    }
    for (int c = 0; c < kNumBehaviors; ++c) {
        REQUIRE(n[c] > 0);
        for (auto& v : centroid[c]) v /= static_cast<double>(n[c]);
    }

    long correct = 0;
    for (const auto& s : val.samples) {
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < kNumBehaviors; ++c) {
            double d2 = 0;
            for (size_t i = 0; i < dim; ++i) {
                double diff = s.pattern.values[i] - centroid[c][i];
                d2 += diff * diff;
            }
            if (d2 < best_d) { best_d = d2; best = c; }
        }
        correct += best == static_cast<int>(s.label) ? 1 : 0;
    }
    double accuracy = static_cast<double>(correct) / val.samples.size();
    INFO("nearest-centroid accuracy ", accuracy);
    CHECK(accuracy >= 0.60);
}

TEST_CASE("sample matrices reject patterns that do not fit the model") {
    dataset ds = dummy_dataset(6, 8, 4);
    model_config cfg;  // expects 64x48
    CHECK_THROWS_AS(to_sample_matrix<float>(cfg, ds), shape_error);
}
