#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rbd/dataset.hpp"
#include "rbd/nn.hpp"
#include "rbd/report.hpp"
#include "rbd/stream.hpp"

namespace {

using nlohmann::json;

rbd::waveform_config load_waveform(const std::string& path) {
    if (path.empty()) return rbd::waveform_config{};
    return rbd::waveform_from_file(path);
}

std::array<int, rbd::kNumBehaviors> parse_counts(int uniform, const std::string& per_class) {
    std::array<int, rbd::kNumBehaviors> counts;
    counts.fill(uniform);
    if (per_class.empty()) return counts;
    std::stringstream ss(per_class);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= rbd::kNumBehaviors) throw rbd::config_error("--per-class: too many values");
        counts[i++] = std::stoi(item);
    }
    if (i != rbd::kNumBehaviors)
        throw rbd::config_error("--per-class: expected 6 comma-separated values");
    return counts;
}

// line sink for the wire protocol: stdout or a raw TCP client connection
class line_sink {
  public:
    static line_sink to_stdout() { return line_sink(-1); }

    static line_sink to_tcp(const std::string& host, const std::string& port) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
            throw rbd::config_error("stream sink: cannot resolve " + host + ":" + port);
        int fd = -1;
        for (addrinfo* p = res; p; p = p->ai_next) {
            fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
            ::close(fd);
            fd = -1;
        }
        freeaddrinfo(res);
        if (fd < 0) throw rbd::config_error("stream sink: cannot connect to " + host + ":" + port);
        return line_sink(fd);
    }

    line_sink(line_sink&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    line_sink(const line_sink&) = delete;
    ~line_sink() {
        if (fd_ >= 0) ::close(fd_);
    }

    void write_line(const std::string& line) {
        if (fd_ < 0) {
            std::fwrite(line.data(), 1, line.size(), stdout);
            std::fputc('\n', stdout);
            return;
        }
        std::string buf = line + "\n";
        size_t off = 0;
        while (off < buf.size()) {
            ssize_t n = ::write(fd_, buf.data() + off, buf.size() - off);
            if (n <= 0) throw rbd::config_error("stream sink: connection lost");
            off += static_cast<size_t>(n);
        }
    }

  private:
    explicit line_sink(int fd) : fd_(fd) {}
    int fd_;
};

int cmd_info(const std::string& config_path, const std::string& claims_path) {
    rbd::waveform_config cfg = load_waveform(config_path);
    rbd::key_values claims;
    if (!claims_path.empty()) claims = rbd::parse_key_values_file(claims_path);
    rbd::validation_report rep = rbd::validate(cfg, claims);
    std::printf("%-26s %16s %16s  %s\n", "quantity", "computed", "claimed", "status");
    for (const auto& row : rep.rows) {
        if (row.claimed)
            std::printf("%-26s %16.6g %16.6g  %s\n", row.name.c_str(), row.computed, *row.claimed,
                        row.pass ? "ok" : "FAIL");
        else
            std::printf("%-26s %16.6g %16s  %s\n", row.name.c_str(), row.computed, "-", "-");
    }
    if (!rep.all_passed()) {
        std::fprintf(stderr, "%d claim(s) outside 1%% tolerance\n", rep.failures());
        return 1;
    }
    return 0;
}

int cmd_generate(const std::string& out, const std::string& config_path,
                 const std::string& profile_name, int count, const std::string& per_class,
                 std::uint64_t seed, int threads) {
    rbd::generation_options opts;
    opts.wf = load_waveform(config_path);
    opts.profile = rbd::profile_from_name(profile_name);
    opts.counts = parse_counts(count, per_class);
    opts.seed = seed;
    opts.threads = threads;

    rbd::dataset ds = rbd::generate_dataset(opts);
    rbd::save_dataset(ds, out);
    rbd::write_manifest(ds, out + ".manifest.jsonl");
    auto counts = ds.class_counts();
    std::printf("wrote %zu samples to %s\n", ds.samples.size(), out.c_str());
    for (int c = 0; c < rbd::kNumBehaviors; ++c)
        std::printf("  %-10s (label %d): %ld\n",
                    rbd::behavior_name(static_cast<rbd::behavior>(c)), c, counts[c]);
    return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& model_out, int epochs, int batch,
              float lr, double val_fraction, std::uint64_t seed, int threads,
              const std::string& depths_arg) {
    rbd::dataset ds = rbd::load_dataset(dataset_path);
    auto [train_ds, val_ds] = rbd::split_dataset(ds, val_fraction, seed);

    rbd::model_config cfg;
    cfg.input_d = ds.profile.doppler_bins;
    cfg.input_t = ds.profile.time_steps;
    if (!depths_arg.empty()) {
        cfg.conv_depths.clear();
        std::stringstream ss(depths_arg);
        std::string item;
        while (std::getline(ss, item, ',')) cfg.conv_depths.push_back(std::stoi(item));
    }
    cfg.check();
    std::printf("model: %dx%d input, %zu conv layers, %ld parameters\n", cfg.input_d, cfg.input_t,
                cfg.conv_depths.size(), rbd::param_count(cfg));
    std::printf("training on %zu samples, validating on %zu\n", train_ds.samples.size(),
                val_ds.samples.size());

    rbd::model<float> m = rbd::model<float>::he_init(cfg, seed);
    rbd::train_data<float> data;
    data.train = rbd::to_sample_matrix<float>(cfg, train_ds);
    data.val = rbd::to_sample_matrix<float>(cfg, val_ds);

    rbd::train_options topts;
    topts.epochs = epochs;
    topts.batch_size = batch;
    topts.adam.lr = lr;
    topts.seed = seed;
    topts.threads = threads;

    std::printf("%5s  %12s  %12s  %12s\n", "epoch", "train loss", "val loss", "val accuracy");
    topts.on_epoch = [](int epoch, const rbd::epoch_stats& st) {
        std::printf("%5d  %12.4f  %12.4f  %11.2f%%\n", epoch + 1, st.train_loss, st.val_loss,
                    100.0 * st.val_accuracy);
        std::fflush(stdout);
    };
    auto t0 = std::chrono::steady_clock::now();
    auto history = rbd::train(m, data, topts);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("trained in %.1f s\n", secs);

    rbd::save_model(m, model_out);
    std::printf("model written to %s\n", model_out.c_str());
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& dataset_path) {
    rbd::model<float> m = rbd::load_model(model_path);
    rbd::dataset ds = rbd::load_dataset(dataset_path);
    if (ds.profile.doppler_bins != m.cfg.input_d || ds.profile.time_steps != m.cfg.input_t) {
        std::fprintf(stderr, "profile mismatch: dataset %dx%d vs model %dx%d\n",
                     ds.profile.doppler_bins, ds.profile.time_steps, m.cfg.input_d, m.cfg.input_t);
        return 1;
    }
    rbd::eval_report report;
    rbd::forward_cache<float> cache;
    for (const auto& s : ds.samples) {
        rbd::prediction p = rbd::predict(m, s.pattern, cache);
        report.add(s.label, p.label);
    }
    report.print(std::cout);
    std::string csv_path = model_path + ".eval.csv";
    std::ofstream csv(csv_path);
    report.to_csv(csv);
    std::printf("csv written to %s\n", csv_path.c_str());
    return 0;
}

int cmd_stream(const std::string& scene_path, const std::string& model_path,
               const std::string& config_path, const std::string& profile_name,
               const std::string& sink_arg, double duration, bool as_fast_as_possible,
               bool sequential) {
    rbd::model<float> m = rbd::load_model(model_path);
    rbd::stream_config cfg;
    cfg.sc = rbd::scene_from_file(scene_path);
    cfg.wf = load_waveform(config_path);
    cfg.profile = rbd::profile_from_name(profile_name);
    cfg.frames = static_cast<long>(std::llround(duration / cfg.wf.frame_duration_s));
    cfg.realtime = !as_fast_as_possible;
    if (cfg.profile.doppler_bins != m.cfg.input_d || cfg.profile.time_steps != m.cfg.input_t) {
        std::fprintf(stderr, "profile mismatch: %dx%d vs model %dx%d\n", cfg.profile.doppler_bins,
                     cfg.profile.time_steps, m.cfg.input_d, m.cfg.input_t);
        return 1;
    }

    line_sink out = [&] {
        if (sink_arg == "stdout") return line_sink::to_stdout();
        if (sink_arg.rfind("tcp:", 0) == 0) {
            std::string rest = sink_arg.substr(4);
            size_t colon = rest.rfind(':');
            if (colon == std::string::npos)
                throw rbd::config_error("--sink tcp:HOST:PORT expected, got " + sink_arg);
            return line_sink::to_tcp(rest.substr(0, colon), rest.substr(colon + 1));
        }
        throw rbd::config_error("unknown sink: " + sink_arg + " (stdout | tcp:HOST:PORT)");
    }();

    rbd::stream_sink sink;
    sink.on_point = [&](const rbd::point_record& r) {
        json j{{"type", "point"}, {"frame", r.frame}, {"x", r.x},
               {"y", r.y},        {"v", r.v},         {"intensity", r.intensity}};
        if (r.track_id) j["track_id"] = *r.track_id;
        out.write_line(j.dump());
    };
    sink.on_prediction = [&](const rbd::prediction_record& r) {
        json j{{"type", "prediction"},   {"frame", r.frame},
               {"track_id", r.track_id}, {"label", r.label},
               {"class", r.class_name},  {"probability", r.probability}};
        out.write_line(j.dump());
    };

    rbd::stream_stats stats = rbd::run_stream(cfg, m, sink, !sequential);
    std::fprintf(stderr,
                 "frames %ld, points %ld, predictions %ld, "
                 "per-frame latency mean %.2f ms max %.2f ms\n",
                 stats.frames, stats.points, stats.predictions, stats.mean_latency_ms,
                 stats.max_latency_ms);
    return 0;
}

int cmd_export_pattern(const std::string& dataset_path, long index, const std::string& out) {
    rbd::dataset ds = rbd::load_dataset(dataset_path);
    if (index < 0 || index >= static_cast<long>(ds.samples.size())) {
        std::fprintf(stderr, "index %ld out of range (dataset has %zu samples)\n", index,
                     ds.samples.size());
        return 1;
    }
    rbd::write_pgm(ds.samples[index].pattern, out);
    std::printf("wrote %s (%dx%d, label %d %s)\n", out.c_str(), ds.samples[index].pattern.t,
                ds.samples[index].pattern.d, static_cast<int>(ds.samples[index].label),
                rbd::behavior_name(ds.samples[index].label));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"radar behavior detection: simulation, training, and streaming inference"};
    app.require_subcommand(1);

    std::string config_path, claims_path, dataset_path, model_path, scene_path, out_path;
    std::string profile_name = "window48", per_class, sink_arg = "stdout", depths_arg;
    std::uint64_t seed = 1;
    int count = 600, epochs = 10, batch = 64, threads = 0;
    long index = 0;
    float lr = 1e-3f;
    double val_fraction = 0.10, duration = 10.0;
    bool as_fast_as_possible = false, sequential = false;

    auto* info = app.add_subcommand("info", "print derived waveform parameters");
    info->add_option("--config", config_path, "waveform config file (defaults built in)");
    info->add_option("--claims", claims_path, "expected values to check at 1% tolerance");

    auto* gen = app.add_subcommand("generate", "generate a labeled synthetic dataset");
    gen->add_option("--out", out_path, "output .rbds path")->required();
    gen->add_option("--config", config_path, "waveform config file");
    gen->add_option("--profile", profile_name, "signature profile (window48 | one-second)");
    gen->add_option("--counts", count, "samples per class (default 600)");
    gen->add_option("--per-class", per_class, "six comma-separated per-class counts");
    gen->add_option("--seed", seed, "generation seed")->envname("RBD_SEED");
    gen->add_option("--threads", threads, "worker threads (0 = auto)");

    auto* train = app.add_subcommand("train", "train the classifier on a dataset");
    train->add_option("--dataset", dataset_path, "input .rbds path")->required();
    train->add_option("--model-out", model_path, "output .rbnn path")->required();
    train->add_option("--epochs", epochs, "training epochs (default 10)");
    train->add_option("--batch", batch, "mini-batch size (default 64)");
    train->add_option("--lr", lr, "Adam learning rate (default 1e-3)");
    train->add_option("--val-fraction", val_fraction, "validation fraction (default 0.10)");
    train->add_option("--seed", seed, "training seed")->envname("RBD_SEED");
    train->add_option("--threads", threads, "worker threads (0 = auto)");
    train->add_option("--conv-depths", depths_arg, "conv layer depths, e.g. 32,64,128,256");

    auto* eval = app.add_subcommand("eval", "evaluate a model against a dataset");
    eval->add_option("--model", model_path, "model .rbnn path")->required();
    eval->add_option("--dataset", dataset_path, "dataset .rbds path")->required();

    auto* stream = app.add_subcommand("stream", "run streaming inference on a scene");
    stream->add_option("--scene", scene_path, "scene description file")->required();
    stream->add_option("--model", model_path, "model .rbnn path")->required();
    stream->add_option("--config", config_path, "waveform config file");
    stream->add_option("--profile", profile_name, "signature profile");
    stream->add_option("--sink", sink_arg, "stdout | tcp:HOST:PORT");
    stream->add_option("--duration", duration, "seconds of scene time (default 10)");
    stream->add_flag("--as-fast-as-possible", as_fast_as_possible, "do not pace to the frame period");
    stream->add_flag("--sequential", sequential, "run the three stages as one loop");

    auto* expat = app.add_subcommand("export-pattern", "export one pattern as a PGM image");
    expat->add_option("--dataset", dataset_path, "dataset .rbds path")->required();
    expat->add_option("--index", index, "sample index")->required();
    expat->add_option("--out", out_path, "output .pgm path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (info->parsed()) return cmd_info(config_path, claims_path);
        if (gen->parsed())
            return cmd_generate(out_path, config_path, profile_name, count, per_class, seed, threads);
        if (train->parsed())
            return cmd_train(dataset_path, model_path, epochs, batch, lr, val_fraction, seed,
                             threads, depths_arg);
        if (eval->parsed()) return cmd_eval(model_path, dataset_path);
        if (stream->parsed())
            return cmd_stream(scene_path, model_path, config_path, profile_name, sink_arg, duration,
                              as_fast_as_possible, sequential);
        if (expat->parsed()) return cmd_export_pattern(dataset_path, index, out_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
