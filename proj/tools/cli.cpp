#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <thread>

#include "fmdt/error.hpp"
#include "fmdt/graphs.hpp"
#include "fmdt/seqio.hpp"

namespace fmdt::cli {

namespace fs = std::filesystem;

namespace {

struct ChainFlags {
    int light_min = 55;
    int light_max = 80;
    std::uint32_t surface_min = 3;
    std::uint32_t surface_max = 1000;
    std::size_t knn_k = 3;
    double knn_d = 100.0;
    double sigma = 1.0;
    double r_min = 0.8;
    std::size_t track_min = 3;

    void add_to(CLI::App& app)
    {
        app.add_option("--light-min", light_min, "Low (hysteresis) threshold, intensity 0-255")->capture_default_str();
        app.add_option("--light-max", light_max, "High (hysteresis) threshold, intensity 0-255")->capture_default_str();
        app.add_option("--surface-min", surface_min, "Smallest kept CC, pixels")->capture_default_str();
        app.add_option("--surface-max", surface_max, "Largest kept CC, pixels")->capture_default_str();
        app.add_option("--knn-k", knn_k, "Candidates per CC for k-NN matching")->capture_default_str();
        app.add_option("--knn-d", knn_d, "Maximum matching distance, pixels")->capture_default_str();
        app.add_option("--sigma", sigma, "Outlier cut of the motion fit, in residual std units")->capture_default_str();
        app.add_option("--r-min", r_min, "Speed above which a CC is moving, pixels/frame")->capture_default_str();
        app.add_option("--track-min", track_min, "Frames of motion needed to confirm a track")->capture_default_str();
    }

    ChainParams params() const
    {
        ChainParams p;
        p.threshold = {light_min, light_max};
        p.surface = {surface_min, surface_max};
        p.knn = {knn_k, knn_d};
        p.sigma_factor = sigma;
        p.r_min = r_min;
        p.track_min = track_min;
        try {
            p.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
        return p;
    }
};

struct ModeFlags {
    int version = 2;
    std::string mode = "S";
    std::size_t buf_cap = 1;

    void add_to(CLI::App& app)
    {
        app.add_option("--version", version, "Task graph: 1 (recompute both frames) or 2 (delayer)")
            ->check(CLI::IsMember({1, 2}))
            ->capture_default_str();
        app.add_option("--mode", mode, "S (sequential) or P<i> (pipeline, i threads in the middle stage)")
            ->capture_default_str();
        app.add_option("--buf-cap", buf_cap, "Inter-stage buffer capacity, frames")->capture_default_str();
    }

    ExecutionMode execution() const
    {
        ExecutionMode m;
        try {
            m = ExecutionMode::parse(mode);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("--mode: ") + e.what());
        }
        if (buf_cap < 1)
            throw ConfigError("--buf-cap: buffer capacity must be >= 1");
        m.buffer_capacity = buf_cap;
        return m;
    }

    ChainVersion chain_version() const { return version == 1 ? ChainVersion::v1 : ChainVersion::v2; }
};

StatsRow stats_row(const ExecutionMode& m, int version, const StreamStats& s)
{
    return {m.pipelined ? "P" : "S", version, m.pipelined ? m.replicas : 0, s};
}

void print_summary(std::ostream& out, const std::string& label, const StreamStats& s)
{
    out << std::fixed << std::setprecision(2) << label << ": " << s.frames << " frames, D = " << s.throughput_fps
        << " fps, L = " << s.latency_ms_mean << " ms (p99 " << s.latency_ms_p99 << " ms)\n";
}

std::vector<GrayFrame> synthetic_frames(const std::string& geometry, std::size_t n_frames, std::uint64_t seed)
{
    const auto x = geometry.find('x');
    int w = 0, h = 0;
    try {
        if (x == std::string::npos)
            throw std::invalid_argument(geometry);
        w = std::stoi(geometry.substr(0, x));
        h = std::stoi(geometry.substr(x + 1));
    } catch (const std::logic_error&) {
        throw ConfigError("--synthetic: expected WIDTHxHEIGHT, got '" + geometry + "'");
    }
    try {
        return generate(random_scene(seed, w, h, n_frames, 2, 2.0)).frames;
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("--synthetic: ") + e.what());
    }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Meteor detection chain: detection, synthetic sequences, scoring and benchmarks"};
    app.require_subcommand(1);

    // detect
    auto* detect = app.add_subcommand("detect", "Run the detection chain over a directory of PGM frames");
    std::string in_dir;
    ChainFlags chain_flags;
    ModeFlags mode_flags;
    std::string out_tracks = "tracks.csv";
    std::string out_stats = "stats.csv";
    bool all_tracks = false;
    detect->add_option("--in", in_dir, "Directory of binary PGM frames, read in filename order")->required();
    mode_flags.add_to(*detect);
    chain_flags.add_to(*detect);
    detect->add_option("--out-tracks", out_tracks, "Track CSV output path")->capture_default_str();
    detect->add_option("--out-stats", out_stats, "Throughput/latency CSV output path")->capture_default_str();
    detect->add_flag("--all-tracks", all_tracks, "Also write unconfirmed tracks");

    // gen
    auto* gen = app.add_subcommand("gen", "Write a synthetic star-field sequence with meteors and its ground truth");
    std::string gen_out;
    std::uint64_t seed = 1;
    int width = 640, height = 480;
    std::size_t frames = 100, stars = 50, meteors = 2;
    double jitter = 2.0;
    int noise = 4;
    std::string truth_path;
    gen->add_option("--out", gen_out, "Output directory for frame_NNNNNN.pgm files")->required();
    gen->add_option("--seed", seed, "Generator seed")->capture_default_str();
    gen->add_option("--width", width, "Frame width, pixels")->capture_default_str();
    gen->add_option("--height", height, "Frame height, pixels")->capture_default_str();
    gen->add_option("--frames", frames, "Number of frames")->capture_default_str();
    gen->add_option("--stars", stars, "Number of stars")->capture_default_str();
    gen->add_option("--meteors", meteors, "Number of meteors")->capture_default_str();
    gen->add_option("--jitter", jitter, "Camera jitter bound, pixels/frame")->capture_default_str();
    gen->add_option("--noise", noise, "Uniform noise amplitude, intensity")->capture_default_str();
    gen->add_option("--truth", truth_path, "Ground-truth CSV path (default: <out>/truth.csv)");

    // check
    auto* check = app.add_subcommand("check", "Score a track CSV against ground truth");
    std::string check_tracks = "tracks.csv";
    std::string check_truth;
    double tol = 1.5;
    check->add_option("--tracks", check_tracks, "Track CSV to score")->capture_default_str();
    check->add_option("--truth", check_truth, "Ground-truth CSV")->required();
    check->add_option("--tol", tol, "Position tolerance, pixels")->capture_default_str();

    // bench
    auto* bench = app.add_subcommand("bench", "Loop a sequence for a fixed time and report throughput and latency");
    std::string bench_in;
    std::string synthetic;
    std::size_t synthetic_frames_n = 20;
    ModeFlags bench_mode;
    ChainFlags bench_chain_flags;
    double bench_secs = 30.0;
    bool sweep = false;
    std::size_t max_i = 4;
    std::string bench_stats = "bench.csv";
    auto* bench_in_opt = bench->add_option("--in", bench_in, "Directory of binary PGM frames");
    bench->add_option("--synthetic", synthetic, "Generate frames in memory instead, WIDTHxHEIGHT")
        ->excludes(bench_in_opt);
    bench->add_option("--synthetic-frames", synthetic_frames_n, "Frames generated for --synthetic")
        ->capture_default_str();
    bench_mode.add_to(*bench);
    bench_chain_flags.add_to(*bench);
    bench->add_option("--bench-secs", bench_secs, "Duration of each run, seconds")->capture_default_str();
    bench->add_flag("--sweep", sweep, "Run S and P1..P<max-i>, one CSV row each");
    bench->add_option("--max-i", max_i, "Largest replication count of the sweep")->capture_default_str();
    bench->add_option("--out-stats", bench_stats, "Stats CSV output path")->capture_default_str();
    bench->add_option("--seed", seed, "Seed for --synthetic")->capture_default_str();

    std::vector<std::string> argv_store{"fmdt"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store)
        argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return bad_config;
    }

    try {
        if (detect->parsed()) {
            const auto params = chain_flags.params();
            const auto mode = mode_flags.execution();
            auto chain = build_chain(mode_flags.chain_version(), params);
            const auto run = run_chain(chain, directory_source(in_dir), mode);
            write_tracks_csv(all_tracks ? run.tracks : confirmed_only(run.tracks), out_tracks);
            write_stats_csv({stats_row(mode, mode_flags.version, run.stats)}, out_stats);
            out << confirmed_only(run.tracks).size() << " confirmed tracks written to " << out_tracks << '\n';
            print_summary(out, mode.label() + " v" + std::to_string(mode_flags.version), run.stats);
            return ok;
        }

        if (gen->parsed()) {
            const auto scene = random_scene(seed, width, height, frames, meteors, jitter);
            SceneSpec s = scene;
            s.n_stars = stars;
            s.noise = noise;
            const auto seq = generate(s);
            write_sequence(seq.frames, gen_out);
            const fs::path truth = truth_path.empty() ? fs::path(gen_out) / "truth.csv" : fs::path(truth_path);
            write_truth_csv(seq.truth, truth);
            out << seq.frames.size() << " frames and " << seq.truth.meteor_count() << " meteors written to "
                << gen_out << '\n';
            return ok;
        }

        if (check->parsed()) {
            if (!(tol > 0.0))
                throw ConfigError("--tol: tolerance must be > 0");
            const auto sc = score(read_tracks_csv(check_tracks), read_truth_csv(check_truth), tol);
            out << std::fixed << std::setprecision(4) << "recall " << sc.recall << " (" << sc.detected << "/"
                << sc.total << "), false positives " << sc.false_positives << '\n';
            return ok;
        }

        if (bench->parsed()) {
            if (!(bench_secs > 0.0))
                throw ConfigError("--bench-secs: duration must be > 0");
            if (bench_in.empty() && synthetic.empty())
                throw ConfigError("--in or --synthetic is required");
            const auto params = bench_chain_flags.params();
            const auto base = bench_mode.execution();
            const auto input = synthetic.empty() ? read_sequence(bench_in)
                                                 : synthetic_frames(synthetic, synthetic_frames_n, seed);
            if (input.empty())
                throw IoError("no frames in " + bench_in);

            std::vector<ExecutionMode> modes;
            if (sweep) {
                if (max_i < 1)
                    throw ConfigError("--max-i: must be >= 1");
                modes.push_back({false, 1, base.buffer_capacity});
                for (std::size_t i = 1; i <= max_i; ++i)
                    modes.push_back({true, i, base.buffer_capacity});
            } else {
                modes.push_back(base);
            }

            auto chain = build_chain(bench_mode.chain_version(), params);
            std::vector<StatsRow> rows;
            for (const auto& m : modes) {
                const auto stats = bench_chain(chain, input, m, bench_secs);
                print_summary(out, m.label() + " v" + std::to_string(bench_mode.version), stats);
                rows.push_back(stats_row(m, bench_mode.version, stats));
            }
            write_stats_csv(rows, bench_stats);
            return ok;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return bad_config;
    } catch (const ReplicationRefused& e) {
        err << "error: " << e.what() << '\n';
        return bad_config;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return io_error;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return io_error;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return io_error;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return bad_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return io_error;
    }
    return ok;
}

} // namespace fmdt::cli
