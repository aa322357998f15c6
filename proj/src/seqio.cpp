#include "fmdt/seqio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "fmdt/error.hpp"

namespace fmdt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PGM

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> b) : bytes_(b) {}

    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long number(const char* what)
    {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1'000'000)
                throw FormatError(std::string("pgm ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start)
            throw FormatError(std::string("pgm ") + what + " missing or not a number", start);
        return v;
    }

    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

GrayFrame parse_pgm(std::span<const std::uint8_t> bytes, std::uint64_t t)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw FormatError("not a binary PGM (magic must be P5)", 0);
    HeaderReader r(bytes.subspan(2));
    const long w = r.number("width");
    const long h = r.number("height");
    const std::size_t maxval_at = 2 + r.pos();
    const long maxval = r.number("maxval");
    if (maxval < 1 || maxval > 255)
        throw FormatError("pgm maxval " + std::to_string(maxval) + " unsupported (must be 1..255)", maxval_at);
    const std::size_t sep = 2 + r.pos();
    if (sep >= bytes.size() || !std::isspace(bytes[sep]))
        throw FormatError("pgm header not terminated by whitespace", sep);
    if (w < 2 || h < 2)
        throw FormatError("pgm geometry must be at least 2x2", 2);

    const std::size_t data_at = sep + 1;
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - data_at < need)
        throw FormatError("pgm pixel data truncated: " + std::to_string(bytes.size() - data_at) + " of " +
                              std::to_string(need) + " bytes",
                          bytes.size());

    GrayFrame f(static_cast<int>(w), static_cast<int>(h), t);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(data_at), need, f.data.begin());
    return f;
}

std::vector<std::uint8_t> encode_pgm(const GrayFrame& frame)
{
    frame.validate();
    const std::string header =
        "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), frame.data.begin(), frame.data.end());
    return out;
}

GrayFrame read_pgm(const fs::path& path, std::uint64_t t)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_pgm(bytes, t);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

void write_pgm(const GrayFrame& frame, const fs::path& path)
{
    const auto bytes = encode_pgm(frame);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("short write to " + path.string());
}

std::string frame_filename(std::uint64_t t)
{
    std::ostringstream s;
    s << "frame_" << std::setw(6) << std::setfill('0') << t << ".pgm";
    return s.str();
}

std::vector<fs::path> list_frames(const fs::path& dir)
{
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm")
            files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

std::vector<GrayFrame> read_sequence(const fs::path& dir)
{
    std::vector<GrayFrame> frames;
    const auto files = list_frames(dir);
    for (std::size_t i = 0; i < files.size(); ++i)
        frames.push_back(read_pgm(files[i], i));
    return frames;
}

void write_sequence(const std::vector<GrayFrame>& frames, const fs::path& dir)
{
    fs::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i)
        write_pgm(frames[i], dir / frame_filename(i));
}

FrameSource directory_source(const fs::path& dir)
{
    auto files = std::make_shared<std::vector<fs::path>>(list_frames(dir));
    auto next = std::make_shared<std::size_t>(0);
    return [files, next]() -> std::optional<GrayFrame> {
        if (*next >= files->size())
            return std::nullopt;
        const auto i = (*next)++;
        return read_pgm((*files)[i], i);
    };
}

// ---------------------------------------------------------------------------
// Synthetic sky

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) from the top 53 bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi].
    int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }

private:
    std::mt19937_64 engine_;
};

double point_segment_distance(Point2 p, Point2 a, Point2 b)
{
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double u = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    return std::hypot(p.x - (a.x + u * vx), p.y - (a.y + u * vy));
}

// Sky to image transform for a camera pose, rotating about the image centre.
Point2 to_image(const RigidMotion& pose, Point2 sky, Point2 centre)
{
    const Point2 r = RigidMotion{pose.tx, pose.ty, pose.theta}.apply({sky.x - centre.x, sky.y - centre.y});
    return {r.x + centre.x, r.y + centre.y};
}

void add_spot(std::vector<double>& img, int w, int h, Point2 c, double peak, double sigma)
{
    const int rad = static_cast<int>(std::ceil(4.0 * sigma));
    const int cx = static_cast<int>(std::floor(c.x)), cy = static_cast<int>(std::floor(c.y));
    const double k = -1.0 / (2.0 * sigma * sigma);
    for (int y = std::max(0, cy - rad); y <= std::min(h - 1, cy + rad + 1); ++y)
        for (int x = std::max(0, cx - rad); x <= std::min(w - 1, cx + rad + 1); ++x) {
            const double dx = x - c.x, dy = y - c.y;
            img[static_cast<std::size_t>(y) * w + x] += peak * std::exp(k * (dx * dx + dy * dy));
        }
}

void add_streak(std::vector<double>& img, int w, int h, Point2 a, Point2 b, double peak, double sigma)
{
    const int pad = static_cast<int>(std::ceil(4.0 * sigma)) + 1;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x))) - pad);
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(a.x, b.x))) + pad);
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y))) - pad);
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(a.y, b.y))) + pad);
    const double k = -1.0 / (2.0 * sigma * sigma);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = point_segment_distance({double(x), double(y)}, a, b);
            img[static_cast<std::size_t>(y) * w + x] += peak * std::exp(k * d * d);
        }
}

} // namespace

std::size_t GroundTruth::meteor_count() const
{
    std::vector<std::uint32_t> ids;
    for (const auto& p : points)
        ids.push_back(p.meteor_id);
    std::sort(ids.begin(), ids.end());
    return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

SyntheticSequence generate(const SceneSpec& scene)
{
    if (scene.width < 2 || scene.height < 2)
        throw InvalidArgument("scene must be at least 2x2");
    if (scene.star_min > scene.star_max || scene.star_min < 0)
        throw InvalidArgument("star intensity range is empty");
    if (scene.jitter_shift < 0.0 || scene.jitter_angle < 0.0 || scene.max_drift < 0.0 || scene.max_tilt < 0.0)
        throw InvalidArgument("jitter bounds must be non-negative");

    Rng rng(scene.seed);
    const int w = scene.width, h = scene.height;
    const Point2 centre{(w - 1) / 2.0, (h - 1) / 2.0};

    // Camera: bounded random walk, reflected at the drift limits.
    SyntheticSequence out;
    RigidMotion pose;
    for (std::size_t t = 0; t < scene.n_frames; ++t) {
        if (t > 0) {
            const double step = scene.jitter_shift / std::sqrt(2.0);
            auto reflect = [](double v, double lim) {
                if (v > lim)
                    return 2 * lim - v;
                if (v < -lim)
                    return -2 * lim - v;
                return v;
            };
            pose.tx = reflect(pose.tx + rng.uniform(-step, step), scene.max_drift);
            pose.ty = reflect(pose.ty + rng.uniform(-step, step), scene.max_drift);
            pose.theta = reflect(pose.theta + rng.uniform(-scene.jitter_angle, scene.jitter_angle), scene.max_tilt);
        }
        out.camera.push_back(pose);
    }

    // Worst-case image displacement of a sky point under the camera walk.
    const double half_diag = std::hypot(w / 2.0, h / 2.0);
    const double sway = scene.max_drift * std::sqrt(2.0) + scene.max_tilt * half_diag;
    const double star_margin = sway + 4.0 * scene.star_sigma + 2.0;

    // Meteors: validate bounds in image coordinates over their lifetime.
    struct Path {
        Point2 a, b;
    };
    std::vector<Path> paths;
    for (std::size_t m = 0; m < scene.meteors.size(); ++m) {
        const auto& ms = scene.meteors[m];
        if (ms.t_start + ms.duration > scene.n_frames)
            throw InvalidArgument("meteor " + std::to_string(m) + " outlives the sequence");
        const Point2 end{ms.start.x + ms.velocity.x * (double(ms.duration) - 1),
                         ms.start.y + ms.velocity.y * (double(ms.duration) - 1)};
        paths.push_back({{ms.start.x - ms.velocity.x, ms.start.y - ms.velocity.y},
                         {end.x + ms.velocity.x, end.y + ms.velocity.y}});
        for (std::size_t k = 0; k < ms.duration; ++k) {
            const auto t = ms.t_start + k;
            const Point2 sky{ms.start.x + ms.velocity.x * double(k), ms.start.y + ms.velocity.y * double(k)};
            const Point2 img = to_image(out.camera[t], sky, centre);
            const double edge = std::hypot(ms.velocity.x, ms.velocity.y) / 2.0 + 2.0 * ms.thickness + 1.0;
            if (img.x < edge || img.y < edge || img.x > w - 1 - edge || img.y > h - 1 - edge)
                throw InvalidArgument("meteor " + std::to_string(m) + " leaves the frame at t=" + std::to_string(t));
            out.truth.points.push_back({static_cast<std::uint32_t>(m + 1), t, img.x, img.y});
        }
    }

    // Stars: rejection sampling against borders, meteor paths and each other.
    struct Star {
        Point2 sky;
        double peak;
    };
    std::vector<Star> stars;
    if (scene.n_stars > 0 && (w <= 2 * star_margin || h <= 2 * star_margin))
        throw InvalidArgument("frame too small for stars under the given jitter");
    for (std::size_t s = 0; s < scene.n_stars; ++s) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            const Point2 p{rng.uniform(star_margin, w - 1 - star_margin), rng.uniform(star_margin, h - 1 - star_margin)};
            const double peak = rng.integer(scene.star_min, scene.star_max);
            bool ok = true;
            for (const auto& path : paths)
                ok = ok && point_segment_distance(p, path.a, path.b) >= scene.star_clearance;
            for (const auto& o : stars)
                ok = ok && std::hypot(p.x - o.sky.x, p.y - o.sky.y) >= scene.star_spacing;
            if (ok) {
                stars.push_back({p, peak});
                placed = true;
            }
        }
        if (!placed)
            throw InvalidArgument("could not place star " + std::to_string(s) + " under the spacing constraints");
    }

    std::vector<double> img(static_cast<std::size_t>(w) * h);
    for (std::size_t t = 0; t < scene.n_frames; ++t) {
        std::fill(img.begin(), img.end(), static_cast<double>(scene.background));
        for (const auto& s : stars)
            add_spot(img, w, h, to_image(out.camera[t], s.sky, centre), s.peak, scene.star_sigma);
        for (const auto& ms : scene.meteors) {
            if (t < ms.t_start || t >= ms.t_start + ms.duration)
                continue;
            const double k = double(t - ms.t_start);
            const Point2 c{ms.start.x + ms.velocity.x * k, ms.start.y + ms.velocity.y * k};
            const Point2 a{c.x - ms.velocity.x / 2, c.y - ms.velocity.y / 2};
            const Point2 b{c.x + ms.velocity.x / 2, c.y + ms.velocity.y / 2};
            add_streak(img, w, h, to_image(out.camera[t], a, centre), to_image(out.camera[t], b, centre),
                       ms.intensity, std::max(0.5, ms.thickness / 2.0));
        }
        GrayFrame f(w, h, t);
        for (std::size_t i = 0; i < img.size(); ++i) {
            double v = img[i];
            if (scene.noise > 0)
                v += rng.integer(-scene.noise, scene.noise);
            f.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
        out.frames.push_back(std::move(f));
    }

    std::sort(out.truth.points.begin(), out.truth.points.end(), [](const TruthPoint& a, const TruthPoint& b) {
        return a.meteor_id != b.meteor_id ? a.meteor_id < b.meteor_id : a.t < b.t;
    });
    return out;
}

SceneSpec random_scene(std::uint64_t seed, int width, int height, std::size_t n_frames, std::size_t meteors,
                       double jitter)
{
    SceneSpec s;
    s.width = width;
    s.height = height;
    s.n_frames = n_frames;
    s.n_stars = 50;
    s.seed = seed;
    s.noise = 4;
    // Split the per-frame budget between translation and rotation about the centre.
    const double half_diag = std::hypot(width / 2.0, height / 2.0);
    s.jitter_shift = 0.75 * jitter;
    s.jitter_angle = 0.25 * jitter / half_diag;
    s.max_drift = 4.0 * jitter;
    s.max_tilt = 4.0 * s.jitter_angle;

    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const double sway = s.max_drift * std::sqrt(2.0) + s.max_tilt * half_diag;
    const double border = sway + 20.0;
    for (std::size_t m = 0; m < meteors; ++m) {
        for (int attempt = 0; attempt < 10000; ++attempt) {
            MeteorSpec ms;
            ms.duration = static_cast<std::size_t>(rng.integer(6, 15));
            if (n_frames < ms.duration + 4)
                throw InvalidArgument("sequence too short for a meteor");
            ms.t_start = static_cast<std::uint64_t>(rng.integer(2, static_cast<int>(n_frames - ms.duration - 2)));
            const double speed = rng.uniform(3.0, 7.0);
            const double dir = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            ms.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
            ms.start = {rng.uniform(border, width - 1 - border), rng.uniform(border, height - 1 - border)};
            ms.intensity = rng.uniform(160.0, 230.0);
            ms.thickness = 2.0;
            const Point2 end{ms.start.x + ms.velocity.x * double(ms.duration - 1),
                             ms.start.y + ms.velocity.y * double(ms.duration - 1)};
            if (end.x < border || end.y < border || end.x > width - 1 - border || end.y > height - 1 - border)
                continue;
            // Keep meteors apart from each other.
            bool ok = true;
            for (const auto& o : s.meteors) {
                const Point2 oe{o.start.x + o.velocity.x * double(o.duration - 1),
                                o.start.y + o.velocity.y * double(o.duration - 1)};
                const double d = std::min({point_segment_distance(ms.start, o.start, oe),
                                           point_segment_distance(end, o.start, oe),
                                           point_segment_distance(o.start, ms.start, end),
                                           point_segment_distance(oe, ms.start, end)});
                ok = ok && d > 40.0;
            }
            if (ok) {
                s.meteors.push_back(ms);
                break;
            }
        }
        if (s.meteors.size() != m + 1)
            throw InvalidArgument("could not place meteor " + std::to_string(m));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Scoring

Score score(const std::vector<Track>& tracks, const GroundTruth& truth, double tol, std::size_t min_frames)
{
    if (!(tol > 0.0))
        throw InvalidArgument("score tolerance must be > 0");
    std::map<std::uint32_t, std::map<std::uint64_t, Point2>> by_meteor;
    for (const auto& p : truth.points)
        by_meteor[p.meteor_id][p.t] = {p.x, p.y};

    Score sc;
    sc.total = by_meteor.size();
    std::map<std::uint32_t, bool> detected;
    for (const auto& tr : tracks) {
        if (tr.status != TrackStatus::confirmed)
            continue;
        bool matched_any = false;
        for (const auto& [id, pts] : by_meteor) {
            std::size_t hits = 0;
            for (const auto& s : tr.states) {
                auto it = pts.find(s.t);
                if (it != pts.end() && std::hypot(s.x - it->second.x, s.y - it->second.y) <= tol)
                    ++hits;
            }
            if (hits >= min_frames) {
                detected[id] = true;
                matched_any = true;
            }
        }
        if (!matched_any)
            ++sc.false_positives;
    }
    sc.detected = detected.size();
    sc.recall = sc.total == 0 ? 1.0 : static_cast<double>(sc.detected) / static_cast<double>(sc.total);
    return sc;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream s(line);
    while (std::getline(s, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

template <class F>
void for_each_row(const std::string& text, const std::string& header, std::size_t columns, F&& row)
{
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    if (!std::getline(in, line) || line != header)
        throw FormatError("csv header must be '" + header + "'", 0);
    offset += line.size() + 1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!line.empty()) {
            auto cells = split_csv_line(line);
            if (cells.size() != columns)
                throw FormatError("csv row has " + std::to_string(cells.size()) + " fields, expected " +
                                      std::to_string(columns),
                                  offset);
            try {
                row(cells);
            } catch (const std::logic_error&) {
                throw FormatError("csv row has a malformed number", offset);
            }
        }
        offset += line.size() + 1;
    }
}

std::ostream& fixed4(std::ostream& o)
{
    return o << std::fixed << std::setprecision(4);
}

const char* const kTracksHeader = "track_id,t_begin,t_end,status,t,x,y,residual";
const char* const kTruthHeader = "meteor_id,t,x,y";
const char* const kStatsHeader =
    "mode,version,i,frames,elapsed_s,throughput_fps,latency_ms_mean,latency_ms_p99";

} // namespace

std::string tracks_csv(const std::vector<Track>& tracks)
{
    std::ostringstream o;
    o << kTracksHeader << '\n' << fixed4;
    for (const auto& tr : tracks)
        for (const auto& s : tr.states)
            o << tr.id << ',' << tr.t_begin << ',' << tr.t_end << ','
              << (tr.status == TrackStatus::confirmed ? "confirmed" : "potential") << ',' << s.t << ',' << s.x
              << ',' << s.y << ',' << s.residual << '\n';
    return o.str();
}

std::vector<Track> parse_tracks_csv(const std::string& text)
{
    std::vector<Track> tracks;
    std::map<std::uint64_t, std::size_t> index;
    for_each_row(text, kTracksHeader, 8, [&](const std::vector<std::string>& c) {
        const auto id = std::stoull(c[0]);
        auto [it, fresh] = index.emplace(id, tracks.size());
        if (fresh) {
            Track t;
            t.id = id;
            t.t_begin = std::stoull(c[1]);
            t.t_end = std::stoull(c[2]);
            if (c[3] == "confirmed")
                t.status = TrackStatus::confirmed;
            else if (c[3] == "potential")
                t.status = TrackStatus::potential;
            else
                throw std::invalid_argument("status");
            t.terminated = true;
            tracks.push_back(std::move(t));
        }
        tracks[it->second].states.push_back({std::stoull(c[4]), std::stod(c[5]), std::stod(c[6]), std::stod(c[7])});
    });
    return tracks;
}

std::string truth_csv(const GroundTruth& truth)
{
    std::ostringstream o;
    o << kTruthHeader << '\n' << fixed4;
    for (const auto& p : truth.points)
        o << p.meteor_id << ',' << p.t << ',' << p.x << ',' << p.y << '\n';
    return o.str();
}

GroundTruth parse_truth_csv(const std::string& text)
{
    GroundTruth g;
    for_each_row(text, kTruthHeader, 4, [&](const std::vector<std::string>& c) {
        g.points.push_back({static_cast<std::uint32_t>(std::stoul(c[0])), std::stoull(c[1]), std::stod(c[2]),
                            std::stod(c[3])});
    });
    return g;
}

std::string stats_csv(const std::vector<StatsRow>& rows)
{
    std::ostringstream o;
    o << kStatsHeader << '\n' << fixed4;
    for (const auto& r : rows)
        o << r.mode << ',' << r.version << ',' << r.replicas << ',' << r.stats.frames << ',' << r.stats.elapsed_s
          << ',' << r.stats.throughput_fps << ',' << r.stats.latency_ms_mean << ',' << r.stats.latency_ms_p99
          << '\n';
    return o.str();
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const std::string& text, const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << text;
    if (!out)
        throw IoError("short write to " + path.string());
}

void write_tracks_csv(const std::vector<Track>& tracks, const fs::path& path) { write_text(tracks_csv(tracks), path); }
std::vector<Track> read_tracks_csv(const fs::path& path) { return parse_tracks_csv(read_text(path)); }
void write_truth_csv(const GroundTruth& truth, const fs::path& path) { write_text(truth_csv(truth), path); }
GroundTruth read_truth_csv(const fs::path& path) { return parse_truth_csv(read_text(path)); }
void write_stats_csv(const std::vector<StatsRow>& rows, const fs::path& path) { write_text(stats_csv(rows), path); }

} // namespace fmdt
