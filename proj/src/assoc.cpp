#include "fmdt/assoc.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "fmdt/error.hpp"

namespace fmdt {

void KnnParams::validate() const
{
    if (k < 1)
        throw InvalidArgument("knn k must be >= 1");
    if (!(d_max > 0.0))
        throw InvalidArgument("knn d_max must be > 0");
}

namespace {

// Row r of the result holds the column indices of the k nearest columns,
// ranked by (distance, column label).
std::vector<std::vector<std::size_t>> nearest(const std::vector<double>& dist, std::size_t rows,
                                              std::size_t cols, bool row_major,
                                              const CCList& col_ccs, std::size_t k)
{
    std::vector<std::vector<std::size_t>> out(rows);
    std::vector<std::size_t> idx(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        auto d = [&](std::size_t c) { return row_major ? dist[r * cols + c] : dist[c * rows + r]; };
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const std::size_t keep = std::min(k, cols);
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                          [&](std::size_t a, std::size_t b) {
                              return std::make_tuple(d(a), col_ccs[a].label) <
                                     std::make_tuple(d(b), col_ccs[b].label);
                          });
        out[r].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    return out;
}

} // namespace

std::vector<Association> match_knn(const CCList& prev, const CCList& cur, const KnnParams& p)
{
    p.validate();
    const std::size_t np = prev.size();
    const std::size_t nc = cur.size();
    if (np == 0 || nc == 0)
        return {};

    std::vector<double> dist(np * nc);
    for (std::size_t a = 0; a < np; ++a)
        for (std::size_t b = 0; b < nc; ++b)
            dist[a * nc + b] = centroid_distance(prev[a], cur[b]);

    const auto prev_knn = nearest(dist, np, nc, true, cur, p.k);
    const auto cur_knn = nearest(dist, nc, np, false, prev, p.k);

    struct Candidate {
        double dist;
        std::uint32_t prev_label;
        std::uint32_t cur_label;
        std::size_t a;
        std::size_t b;
    };
    std::vector<Candidate> cand;
    for (std::size_t a = 0; a < np; ++a) {
        for (std::size_t b : prev_knn[a]) {
            const double d = dist[a * nc + b];
            if (d > p.d_max)
                continue;
            const auto& back = cur_knn[b];
            if (std::find(back.begin(), back.end(), a) == back.end())
                continue;
            cand.push_back({d, prev[a].label, cur[b].label, a, b});
        }
    }
    std::sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) {
        return std::tie(x.dist, x.prev_label, x.cur_label) < std::tie(y.dist, y.prev_label, y.cur_label);
    });

    std::vector<bool> prev_used(np, false);
    std::vector<bool> cur_used(nc, false);
    std::vector<Association> out;
    for (const auto& c : cand) {
        if (prev_used[c.a] || cur_used[c.b])
            continue;
        prev_used[c.a] = true;
        cur_used[c.b] = true;
        Association as;
        as.prev_label = c.prev_label;
        as.cur_label = c.cur_label;
        as.dx = cur[c.b].xG - prev[c.a].xG;
        as.dy = cur[c.b].yG - prev[c.a].yG;
        as.dist = c.dist;
        out.push_back(as);
    }
    std::sort(out.begin(), out.end(),
              [](const Association& x, const Association& y) { return x.cur_label < y.cur_label; });
    return out;
}

} // namespace fmdt
