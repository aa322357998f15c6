#include "fmdt/ccl.hpp"

#include <algorithm>
#include <iterator>

#include "fmdt/error.hpp"

namespace fmdt {

namespace {

struct Accumulator {
    std::uint64_t S = 0;
    std::uint64_t sum_x = 0;
    std::uint64_t sum_y = 0;
    int xmin = std::numeric_limits<int>::max();
    int xmax = -1;
    int ymin = std::numeric_limits<int>::max();
    int ymax = -1;
    std::uint8_t vmax = 0;

    void add(int x, int y, std::uint8_t v)
    {
        ++S;
        sum_x += static_cast<std::uint64_t>(x);
        sum_y += static_cast<std::uint64_t>(y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        vmax = std::max(vmax, v);
    }

    void merge(const Accumulator& o)
    {
        S += o.S;
        sum_x += o.sum_x;
        sum_y += o.sum_y;
        xmin = std::min(xmin, o.xmin);
        xmax = std::max(xmax, o.xmax);
        ymin = std::min(ymin, o.ymin);
        ymax = std::max(ymax, o.ymax);
        vmax = std::max(vmax, o.vmax);
    }
};

// Union-find over provisional labels; the root is always the smallest label
// of its set, which is the label of the set's first pixel in raster order.
class Equivalences {
public:
    std::uint32_t make()
    {
        const auto l = static_cast<std::uint32_t>(parent_.size());
        parent_.push_back(l);
        return l;
    }

    std::uint32_t find(std::uint32_t l)
    {
        std::uint32_t root = l;
        while (parent_[root] != root)
            root = parent_[root];
        while (parent_[l] != root) {
            const auto next = parent_[l];
            parent_[l] = root;
            l = next;
        }
        return root;
    }

    std::uint32_t unite(std::uint32_t a, std::uint32_t b)
    {
        a = find(a);
        b = find(b);
        if (a == b)
            return a;
        if (b < a)
            std::swap(a, b);
        parent_[b] = a;
        return a;
    }

    std::size_t size() const { return parent_.size(); }

private:
    std::vector<std::uint32_t> parent_;
};

} // namespace

void SurfaceParams::validate() const
{
    if (s_min < 1 || s_min > s_max)
        throw InvalidArgument("surface bounds must satisfy 1 <= s_min <= s_max");
}

std::pair<LabelMap, CCList> label_and_analyze(const BinaryMask& mask, const GrayFrame& frame)
{
    if (mask.width != frame.width || mask.height != frame.height ||
        mask.bits.size() != frame.data.size())
        throw InvalidArgument("mask and frame geometry differ");

    const int w = mask.width;
    const int h = mask.height;
    LabelMap map{w, h, std::vector<std::uint32_t>(static_cast<std::size_t>(w) * h, 0)};

    Equivalences eq;
    eq.make(); // provisional label 0 is background
    std::vector<Accumulator> acc(1);

    auto& lab = map.labels;
    for (int y = 0; y < h; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            const std::size_t i = row + x;
            if (!mask.bits[i])
                continue;

            // Already-visited 8-neighbours: W, NW, N, NE.
            std::uint32_t l = 0;
            auto take = [&](std::uint32_t n) {
                if (n == 0)
                    return;
                l = (l == 0) ? eq.find(n) : eq.unite(l, n);
            };
            if (x > 0)
                take(lab[i - 1]);
            if (y > 0) {
                const std::size_t up = i - w;
                if (x > 0)
                    take(lab[up - 1]);
                take(lab[up]);
                if (x + 1 < w)
                    take(lab[up + 1]);
            }
            if (l == 0) {
                l = eq.make();
                acc.emplace_back();
            }
            lab[i] = l;
            acc[l].add(x, y, frame.data[i]);
        }
    }

    // Fold provisional accumulators into roots and number roots in raster order.
    const std::size_t n_prov = eq.size();
    std::vector<std::uint32_t> final_label(n_prov, 0);
    CCList ccs;
    for (std::uint32_t l = 1; l < n_prov; ++l) {
        const auto root = eq.find(l);
        if (root != l)
            acc[root].merge(acc[l]);
    }
    for (std::uint32_t l = 1; l < n_prov; ++l) {
        if (eq.find(l) != l)
            continue;
        const auto& a = acc[l];
        CC cc;
        cc.label = static_cast<std::uint32_t>(ccs.size() + 1);
        cc.S = static_cast<std::uint32_t>(a.S);
        cc.xG = static_cast<double>(a.sum_x) / static_cast<double>(a.S);
        cc.yG = static_cast<double>(a.sum_y) / static_cast<double>(a.S);
        cc.xmin = a.xmin;
        cc.xmax = a.xmax;
        cc.ymin = a.ymin;
        cc.ymax = a.ymax;
        cc.vmax = a.vmax;
        final_label[l] = cc.label;
        ccs.push_back(cc);
    }
    for (std::uint32_t l = 1; l < n_prov; ++l)
        final_label[l] = final_label[eq.find(l)];

    for (auto& v : lab)
        v = final_label[v];

    return {std::move(map), std::move(ccs)};
}

CCList filter_hysteresis(const CCList& ccs, int lambda_high)
{
    CCList out;
    out.reserve(ccs.size());
    std::copy_if(ccs.begin(), ccs.end(), std::back_inserter(out),
                 [&](const CC& c) { return static_cast<int>(c.vmax) >= lambda_high; });
    return out;
}

CCList filter_surface(const CCList& ccs, const SurfaceParams& p)
{
    CCList out;
    out.reserve(ccs.size());
    std::copy_if(ccs.begin(), ccs.end(), std::back_inserter(out),
                 [&](const CC& c) { return c.S >= p.s_min && c.S <= p.s_max; });
    return out;
}

} // namespace fmdt
