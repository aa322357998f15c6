#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "fmdt/ccl.hpp"

namespace fmdt {

enum class InlierState : std::uint8_t { unset, inlier, outlier };

/// A CC of frame t-1 matched with a CC of frame t.
struct Association {
    std::uint32_t prev_label = 0;
    std::uint32_t cur_label = 0;
    double dx = 0.0; ///< cur centroid minus prev centroid
    double dy = 0.0;
    double dist = 0.0;
    std::optional<double> residual; ///< filled by registration
    InlierState inlier = InlierState::unset;

    friend bool operator==(const Association&, const Association&) = default;
};

struct KnnParams {
    std::size_t k = 3;
    double d_max = 100.0; ///< may be +infinity

    void validate() const;
};

/// Mutual k-nearest-neighbour matching with greedy ascending-distance
/// conflict resolution.
///
/// A pair (a, b) is a candidate when b is among the k nearest CCs of a in
/// `cur`, a is among the k nearest CCs of b in `prev`, and their centroid
/// distance is at most d_max. Neighbour ranks and the greedy order break
/// distance ties by prev label, then cur label. When fewer than k
/// neighbours exist, all of them are candidates. Output is sorted by
/// cur_label.
std::vector<Association> match_knn(const CCList& prev, const CCList& cur, const KnnParams& p);

/// Centroid distance used by the matcher.
inline double centroid_distance(const CC& a, const CC& b)
{
    const double dx = b.xG - a.xG;
    const double dy = b.yG - a.yG;
    return std::sqrt(dx * dx + dy * dy);
}

} // namespace fmdt
