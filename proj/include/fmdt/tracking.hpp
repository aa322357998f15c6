#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fmdt/assoc.hpp"
#include "fmdt/ccl.hpp"

namespace fmdt {

enum class TrackStatus { potential, confirmed };

struct TrackPoint {
    std::uint64_t t = 0;
    double x = 0.0;
    double y = 0.0;
    double residual = 0.0;

    friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

/// Chain of moving detections over consecutive frames.
struct Track {
    std::uint64_t id = 0;
    std::uint64_t t_begin = 0;
    std::uint64_t t_end = 0;
    std::vector<TrackPoint> states;
    TrackStatus status = TrackStatus::potential;
    bool terminated = false;

    friend bool operator==(const Track&, const Track&) = default;
};

/// Frame-ordered state machine turning moving associations into tracks.
///
/// A track survives only while it is extended on every frame; the first
/// missed frame terminates it. A new track records both endpoints of its
/// first association, so an object moving across frames t-1, t, t+1 carries
/// three states. A track is confirmed once it holds `confirm_length` states.
class Tracker {
public:
    explicit Tracker(std::size_t confirm_length = 3);

    /// Throws ContractViolation when t does not increase, or when an
    /// association at t = 0 would need a frame -1.
    void update(std::uint64_t t, const std::vector<Association>& moving, const CCList& cur);

    /// Terminates active tracks and returns every track sorted by (t_begin, id).
    std::vector<Track> finalize();

    const std::map<std::uint32_t, Track>& active() const { return active_; }
    const std::vector<Track>& finished() const { return finished_; }
    std::size_t confirm_length() const { return confirm_length_; }

    void reset();

private:
    void terminate_all();

    std::size_t confirm_length_;
    std::map<std::uint32_t, Track> active_; // keyed by CC label in the last frame
    std::vector<Track> finished_;
    std::uint64_t next_id_ = 1;
    std::optional<std::uint64_t> last_t_;
};

std::vector<Track> confirmed_only(const std::vector<Track>& tracks);

} // namespace fmdt
