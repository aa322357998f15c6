#pragma once

#include <span>
#include <vector>

#include "fmdt/assoc.hpp"
#include "fmdt/ccl.hpp"

namespace fmdt {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Rigid camera motion mapping frame t-1 coordinates onto frame t:
/// q = R(theta) p + T, theta in (-pi, pi].
struct RigidMotion {
    double tx = 0.0;
    double ty = 0.0;
    double theta = 0.0;

    Point2 apply(Point2 p) const;

    friend bool operator==(const RigidMotion&, const RigidMotion&) = default;
};

struct MotionStats {
    double mean_residual = 0.0;
    double std_residual = 0.0;
    std::size_t n_inliers = 0;
    std::size_t n_outliers = 0;
};

/// Closed-form least-squares rigid fit (2D Procrustes without scale).
///
/// Throws InsufficientData for fewer than 2 pairs and DegenerateGeometry when
/// every source point coincides.
RigidMotion estimate_rigid(std::span<const Point2> from, std::span<const Point2> to);

/// Fit over the centroids of associated CCs, prev onto cur.
RigidMotion estimate_rigid(const std::vector<Association>& assocs, const CCList& prev, const CCList& cur);

/// Fills residual = |R p + T - q| for every association.
std::vector<Association> register_residuals(std::vector<Association> assocs, const CCList& prev,
                                            const CCList& cur, const RigidMotion& m);

struct TwoPassResult {
    RigidMotion motion;
    std::vector<Association> assocs; ///< residual and inlier flag filled
    MotionStats stats;
};

/// Fit on everything, reject residual > mean + sigma_factor * std (population
/// std), refit on the survivors and recompute all residuals. Residuals at or
/// below `noise_floor` px are never rejected. Falls back to the first fit with
/// everything marked inlier if fewer than 2 survivors remain.
TwoPassResult estimate_two_pass(const std::vector<Association>& assocs, const CCList& prev,
                                const CCList& cur, double sigma_factor, double noise_floor = 1e-6);

enum class MotionClass { still, moving };

/// moving iff residual >= r_min. Throws ContractViolation on an unset residual.
std::vector<MotionClass> classify_motion(const std::vector<Association>& assocs, double r_min);

/// Sum of squared registration errors, used to compare fits.
double sum_squared_residuals(std::span<const Point2> from, std::span<const Point2> to,
                             const RigidMotion& m);

} // namespace fmdt
