#include "fmdt/motion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fmdt/error.hpp"

namespace fmdt {

Point2 RigidMotion::apply(Point2 p) const
{
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {c * p.x - s * p.y + tx, s * p.x + c * p.y + ty};
}

RigidMotion estimate_rigid(std::span<const Point2> from, std::span<const Point2> to)
{
    if (from.size() != to.size())
        throw InvalidArgument("point sets differ in size");
    const std::size_t n = from.size();
    if (n < 2)
        throw InsufficientData("rigid fit needs at least 2 point pairs, got " + std::to_string(n));

    Point2 pm, qm;
    for (std::size_t i = 0; i < n; ++i) {
        pm.x += from[i].x;
        pm.y += from[i].y;
        qm.x += to[i].x;
        qm.y += to[i].y;
    }
    const double inv = 1.0 / static_cast<double>(n);
    pm.x *= inv;
    pm.y *= inv;
    qm.x *= inv;
    qm.y *= inv;

    double cross = 0.0, dot = 0.0, spread = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double px = from[i].x - pm.x;
        const double py = from[i].y - pm.y;
        const double qx = to[i].x - qm.x;
        const double qy = to[i].y - qm.y;
        cross += px * qy - py * qx;
        dot += px * qx + py * qy;
        spread += px * px + py * py;
        scale += from[i].x * from[i].x + from[i].y * from[i].y;
    }
    // Centering identical points leaves only rounding noise.
    if (spread <= 1e-24 * (1.0 + scale))
        throw DegenerateGeometry("all source points coincide");

    RigidMotion m;
    m.theta = std::atan2(cross, dot);
    if (m.theta <= -std::numbers::pi)
        m.theta = std::numbers::pi;
    const double c = std::cos(m.theta);
    const double s = std::sin(m.theta);
    m.tx = qm.x - (c * pm.x - s * pm.y);
    m.ty = qm.y - (s * pm.x + c * pm.y);
    return m;
}

namespace {

const CC& find_cc(const CCList& ccs, std::uint32_t label)
{
    auto it = std::lower_bound(ccs.begin(), ccs.end(), label,
                               [](const CC& c, std::uint32_t l) { return c.label < l; });
    if (it == ccs.end() || it->label != label)
        throw InvalidArgument("association refers to unknown CC label " + std::to_string(label));
    return *it;
}

void gather(const std::vector<Association>& assocs, const CCList& prev, const CCList& cur,
            std::vector<Point2>& from, std::vector<Point2>& to)
{
    from.clear();
    to.clear();
    for (const auto& a : assocs) {
        const CC& p = find_cc(prev, a.prev_label);
        const CC& q = find_cc(cur, a.cur_label);
        from.push_back({p.xG, p.yG});
        to.push_back({q.xG, q.yG});
    }
}

MotionStats residual_stats(const std::vector<Association>& assocs)
{
    MotionStats st;
    if (assocs.empty())
        return st;
    double sum = 0.0;
    for (const auto& a : assocs)
        sum += *a.residual;
    st.mean_residual = sum / static_cast<double>(assocs.size());
    double var = 0.0;
    for (const auto& a : assocs) {
        const double d = *a.residual - st.mean_residual;
        var += d * d;
    }
    st.std_residual = std::sqrt(var / static_cast<double>(assocs.size()));
    for (const auto& a : assocs)
        (a.inlier == InlierState::outlier ? st.n_outliers : st.n_inliers)++;
    return st;
}

} // namespace

RigidMotion estimate_rigid(const std::vector<Association>& assocs, const CCList& prev, const CCList& cur)
{
    std::vector<Point2> from, to;
    gather(assocs, prev, cur, from, to);
    return estimate_rigid(from, to);
}

std::vector<Association> register_residuals(std::vector<Association> assocs, const CCList& prev,
                                            const CCList& cur, const RigidMotion& m)
{
    if (!std::isfinite(m.tx) || !std::isfinite(m.ty) || !std::isfinite(m.theta))
        throw InvalidArgument("rigid motion is not finite");
    for (auto& a : assocs) {
        const CC& p = find_cc(prev, a.prev_label);
        const CC& q = find_cc(cur, a.cur_label);
        const Point2 r = m.apply({p.xG, p.yG});
        a.residual = std::hypot(r.x - q.xG, r.y - q.yG);
    }
    return assocs;
}

TwoPassResult estimate_two_pass(const std::vector<Association>& assocs, const CCList& prev,
                                const CCList& cur, double sigma_factor, double noise_floor)
{
    std::vector<Point2> from, to;
    gather(assocs, prev, cur, from, to);
    const RigidMotion first = estimate_rigid(from, to);

    TwoPassResult res;
    res.assocs = register_residuals(assocs, prev, cur, first);
    for (auto& a : res.assocs)
        a.inlier = InlierState::inlier;
    const MotionStats pass1 = residual_stats(res.assocs);
    const double cut = std::max(pass1.mean_residual + sigma_factor * pass1.std_residual, noise_floor);

    std::vector<Point2> in_from, in_to;
    for (std::size_t i = 0; i < res.assocs.size(); ++i) {
        if (*res.assocs[i].residual > cut) {
            res.assocs[i].inlier = InlierState::outlier;
        } else {
            in_from.push_back(from[i]);
            in_to.push_back(to[i]);
        }
    }

    res.motion = first;
    if (in_from.size() < 2) {
        for (auto& a : res.assocs)
            a.inlier = InlierState::inlier;
    } else if (in_from.size() < res.assocs.size()) {
        try {
            res.motion = estimate_rigid(in_from, in_to);
        } catch (const DegenerateGeometry&) {
            // Survivors collapse to one point: keep the first fit.
            for (auto& a : res.assocs)
                a.inlier = InlierState::inlier;
        }
        res.assocs = register_residuals(std::move(res.assocs), prev, cur, res.motion);
    }
    res.stats = residual_stats(res.assocs);
    return res;
}

std::vector<MotionClass> classify_motion(const std::vector<Association>& assocs, double r_min)
{
    std::vector<MotionClass> out;
    out.reserve(assocs.size());
    for (const auto& a : assocs) {
        if (!a.residual)
            throw ContractViolation("classify_motion needs registered associations");
        out.push_back(*a.residual >= r_min ? MotionClass::moving : MotionClass::still);
    }
    return out;
}

double sum_squared_residuals(std::span<const Point2> from, std::span<const Point2> to,
                             const RigidMotion& m)
{
    double s = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const Point2 r = m.apply(from[i]);
        const double dx = r.x - to[i].x;
        const double dy = r.y - to[i].y;
        s += dx * dx + dy * dy;
    }
    return s;
}

} // namespace fmdt
