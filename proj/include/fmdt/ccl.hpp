#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "fmdt/imgproc.hpp"

namespace fmdt {

/// Connected component with the features accumulated during labeling.
struct CC {
    std::uint32_t label = 0;
    std::uint32_t S = 0;
    double xG = 0.0;
    double yG = 0.0;
    int xmin = 0;
    int xmax = 0;
    int ymin = 0;
    int ymax = 0;
    std::uint8_t vmax = 0;

    friend bool operator==(const CC&, const CC&) = default;
};

using CCList = std::vector<CC>;

/// Row-major labels, 0 is background.
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> labels;

    std::uint32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct SurfaceParams {
    std::uint32_t s_min = 3;
    std::uint32_t s_max = 1000;

    static constexpr std::uint32_t unbounded = std::numeric_limits<std::uint32_t>::max();

    void validate() const;
};

/// 8-connected labeling with fused feature accumulation.
///
/// Labels are numbered 1..n in raster order of each component's first pixel,
/// and the returned list is sorted by label. Throws InvalidArgument when the
/// mask and frame geometries differ.
std::pair<LabelMap, CCList> label_and_analyze(const BinaryMask& mask, const GrayFrame& frame);

/// Keeps CCs with vmax >= lambda_high, order preserved.
CCList filter_hysteresis(const CCList& ccs, int lambda_high);

/// Keeps CCs with s_min <= S <= s_max, order preserved.
CCList filter_surface(const CCList& ccs, const SurfaceParams& p);

} // namespace fmdt
