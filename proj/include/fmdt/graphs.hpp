#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fmdt/assoc.hpp"
#include "fmdt/ccl.hpp"
#include "fmdt/imgproc.hpp"
#include "fmdt/motion.hpp"
#include "fmdt/runtime.hpp"
#include "fmdt/tracking.hpp"

namespace fmdt {

struct ChainParams {
    ThresholdParams threshold;
    SurfaceParams surface;
    KnnParams knn;
    double sigma_factor = 1.0;
    double r_min = 0.8; ///< px/frame
    std::size_t track_min = 3;

    void validate() const;
};

enum class ChainVersion { v1 = 1, v2 = 2 };

/// CCs of the previous frame carried to the next iteration.
struct DelayerSlot {
    std::optional<CCList> ccs;
    std::uint64_t t = 0;
};

/// Global motion for one frame pair. `estimated` is false when fewer than two
/// usable associations forced the identity motion.
struct Registration {
    RigidMotion motion;
    bool estimated = false;
    std::vector<Association> assocs;
    MotionStats stats;
};

/// What the chain emits for every frame.
struct FrameReport {
    std::uint64_t t = 0;
    std::size_t n_ccs = 0;
    std::size_t n_assocs = 0;
    Registration registration;
    std::vector<Association> moving;
};

/// A built task graph plus the state its stateful tasks share.
class DetectionChain {
public:
    struct State {
        explicit State(std::size_t track_min) : tracker(track_min) {}

        Tracker tracker;
        DelayerSlot delayer;
        std::optional<GrayFrame> previous_frame; // version 1 pairing
        std::atomic<std::uint64_t> labelings{0};
    };

    DetectionChain(ChainVersion version, ChainParams params, Sequence seq, std::shared_ptr<State> state)
        : version_(version), params_(std::move(params)), seq_(std::move(seq)), state_(std::move(state))
    {
    }

    const Sequence& sequence() const { return seq_; }
    ChainVersion version() const { return version_; }
    const ChainParams& params() const { return params_; }

    /// Number of label_and_analyze calls since construction or reset().
    std::uint64_t labeling_invocations() const { return state_->labelings.load(); }

    /// Flushes the tracker; see Tracker::finalize.
    std::vector<Track> finalize() { return state_->tracker.finalize(); }

    /// Clears the tracker, the delayer and the counters for a new stream.
    void reset();

private:
    ChainVersion version_;
    ChainParams params_;
    Sequence seq_;
    std::shared_ptr<State> state_;
};

/// Recomputes the CCs of both I(t-1) and I(t) for every frame.
DetectionChain build_v1(const ChainParams& params);

/// Labels each frame once and carries its CCs forward through a
/// load/save delayer pair.
DetectionChain build_v2(const ChainParams& params);

DetectionChain build_chain(ChainVersion version, const ChainParams& params);

/// E1 = acquisition (plus frame pairing in version 1), E2 = thresholding,
/// labeling and CC filters, E3 = delayer, matching, registration,
/// classification and tracking.
PipelineConfig stage_cut(const Sequence& seq, ChainVersion version, std::size_t replicas = 1,
                         std::size_t buffer_capacity = 1);

/// S (sequential) or P<i> (pipelined, i copies of E2).
struct ExecutionMode {
    bool pipelined = false;
    std::size_t replicas = 1;
    std::size_t buffer_capacity = 1;

    /// Throws ConfigError on anything but "S" or "P<i>", i >= 1.
    static ExecutionMode parse(std::string_view text);
    std::string label() const;
};

using FrameSource = std::function<std::optional<GrayFrame>()>;

/// Yields copies of `frames` in order.
FrameSource frames_source(const std::vector<GrayFrame>& frames);

struct ChainRun {
    std::vector<Track> tracks; ///< every track, sorted by (t_begin, id)
    std::vector<FrameReport> reports;
    StreamStats stats;
};

/// Resets the chain, streams `source` through it and finalizes the tracker.
ChainRun run_chain(DetectionChain& chain, const FrameSource& source, const ExecutionMode& mode,
                   const RunOptions& opts = {});

/// Replays `frames` in a loop, with increasing t, until `seconds` have
/// elapsed; returns the statistics of the whole run.
StreamStats bench_chain(DetectionChain& chain, const std::vector<GrayFrame>& frames, const ExecutionMode& mode,
                        double seconds);

} // namespace fmdt
