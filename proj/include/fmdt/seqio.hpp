#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fmdt/graphs.hpp"
#include "fmdt/imgproc.hpp"
#include "fmdt/motion.hpp"
#include "fmdt/runtime.hpp"
#include "fmdt/tracking.hpp"

namespace fmdt {

// ---------------------------------------------------------------------------
// Binary PGM ("P5", maxval <= 255)

/// Throws FormatError (with byte offset) on a bad magic, header, maxval or truncation.
GrayFrame parse_pgm(std::span<const std::uint8_t> bytes, std::uint64_t t = 0);
std::vector<std::uint8_t> encode_pgm(const GrayFrame& frame);

GrayFrame read_pgm(const std::filesystem::path& path, std::uint64_t t = 0);
void write_pgm(const GrayFrame& frame, const std::filesystem::path& path);

/// "frame_000017.pgm"
std::string frame_filename(std::uint64_t t);

/// *.pgm files of `dir` in lexicographic order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// All frames of a directory, t = 0..N-1 in lexicographic filename order.
std::vector<GrayFrame> read_sequence(const std::filesystem::path& dir);
void write_sequence(const std::vector<GrayFrame>& frames, const std::filesystem::path& dir);

/// Reads one file per call, so decoding happens on whichever thread pulls.
FrameSource directory_source(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic night sky

struct MeteorSpec {
    std::uint64_t t_start = 0;
    std::size_t duration = 0;    ///< frames
    Point2 start;                ///< sky position at t_start
    Point2 velocity;             ///< px/frame
    double intensity = 200.0;    ///< peak above background
    double thickness = 2.0;      ///< px, twice the Gaussian cross-section sigma
};

struct SceneSpec {
    int width = 640;
    int height = 480;
    std::size_t n_frames = 100;
    std::size_t n_stars = 50;
    int star_min = 120;          ///< peak above background
    int star_max = 250;
    double star_sigma = 1.2;     ///< px
    double star_spacing = 10.0;  ///< minimum star-to-star distance, px
    double star_clearance = 14.0; ///< minimum star distance to any meteor path, px
    std::vector<MeteorSpec> meteors;
    double jitter_shift = 0.0;   ///< max frame-to-frame camera translation, px
    double jitter_angle = 0.0;   ///< max frame-to-frame camera rotation, rad
    double max_drift = 8.0;      ///< bound on the cumulative translation, px
    double max_tilt = 0.01;      ///< bound on the cumulative rotation, rad
    int background = 20;
    int noise = 0;               ///< uniform additive noise in [-noise, noise]
    std::uint64_t seed = 1;
};

struct TruthPoint {
    std::uint32_t meteor_id = 0;
    std::uint64_t t = 0;
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const TruthPoint&, const TruthPoint&) = default;
};

/// True meteor centroids in image coordinates, sorted by (meteor_id, t).
struct GroundTruth {
    std::vector<TruthPoint> points;

    std::size_t meteor_count() const;
};

struct SyntheticSequence {
    std::vector<GrayFrame> frames;
    GroundTruth truth;
    std::vector<RigidMotion> camera; ///< sky to image, per frame, about the image centre
};

/// Deterministic for a fixed seed (mt19937_64 with a fixed uniform mapping).
/// Throws InvalidArgument when an object leaves the frame or stars cannot be placed.
SyntheticSequence generate(const SceneSpec& scene);

/// A random scene with 50 stars, `meteors` moving objects and bounded jitter,
/// sized so every meteor stays inside the frame. Used by tests and `gen`.
SceneSpec random_scene(std::uint64_t seed, int width = 640, int height = 480, std::size_t n_frames = 100,
                       std::size_t meteors = 2, double jitter = 2.0);

// ---------------------------------------------------------------------------
// Scoring

struct Score {
    double recall = 0.0;
    std::size_t detected = 0;
    std::size_t total = 0;
    std::size_t false_positives = 0;
};

/// A confirmed track matches a meteor when at least `min_frames` of its
/// states lie within `tol` px of that meteor's truth at the same frame.
/// Unconfirmed tracks are ignored. Throws InvalidArgument unless tol > 0.
Score score(const std::vector<Track>& tracks, const GroundTruth& truth, double tol,
            std::size_t min_frames = 3);

// ---------------------------------------------------------------------------
// CSV files

/// track_id,t_begin,t_end,status,t,x,y,residual (one row per state).
std::string tracks_csv(const std::vector<Track>& tracks);
void write_tracks_csv(const std::vector<Track>& tracks, const std::filesystem::path& path);
std::vector<Track> parse_tracks_csv(const std::string& text);
std::vector<Track> read_tracks_csv(const std::filesystem::path& path);

/// meteor_id,t,x,y
std::string truth_csv(const GroundTruth& truth);
void write_truth_csv(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth parse_truth_csv(const std::string& text);
GroundTruth read_truth_csv(const std::filesystem::path& path);

struct StatsRow {
    std::string mode; ///< "S" or "P"
    int version = 2;
    std::size_t replicas = 0; ///< 0 for sequential runs
    StreamStats stats;
};

/// mode,version,i,frames,elapsed_s,throughput_fps,latency_ms_mean,latency_ms_p99
std::string stats_csv(const std::vector<StatsRow>& rows);
void write_stats_csv(const std::vector<StatsRow>& rows, const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

} // namespace fmdt
