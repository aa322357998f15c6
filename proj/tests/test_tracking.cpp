#include <doctest.h>

#include "fmdt/error.hpp"
#include "fmdt/graphs.hpp"
#include "fmdt/seqio.hpp"
#include "fmdt/tracking.hpp"
#include <numeric>

#include "oracles.hpp"

using namespace fmdt;

namespace {

Association moving(std::uint32_t prev, std::uint32_t cur, double dx, double dy, double residual)
{
    Association a;
    a.prev_label = prev;
    a.cur_label = cur;
    a.dx = dx;
    a.dy = dy;
    a.dist = std::hypot(dx, dy);
    a.residual = residual;
    a.inlier = InlierState::outlier;
    return a;
}

// One object at x = 10 + 3t, CC label 1 in every frame, moving on frames [t0, t1].
std::vector<Track> single_object(std::uint64_t t0, std::uint64_t t1, std::size_t confirm = 3)
{
    Tracker tr(confirm);
    for (std::uint64_t t = 1; t <= t1 + 2; ++t) {
        const CCList cur{oracle::cc_at(1, 10.0 + 3.0 * t, 20.0)};
        std::vector<Association> m;
        if (t > t0 && t <= t1)
            m.push_back(moving(1, 1, 3.0, 0.0, 3.0));
        tr.update(t, m, cur);
    }
    return tr.finalize();
}

} // namespace

TEST_CASE("tracker: two frames of motion stay potential")
{
    const auto tracks = single_object(0, 1);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].states.size() == 2);
    CHECK(tracks[0].status == TrackStatus::potential);
    CHECK(tracks[0].terminated);
    CHECK(tracks[0].t_begin == 0);
    CHECK(tracks[0].t_end == 1);
}

TEST_CASE("tracker: three frames of motion confirm")
{
    const auto tracks = single_object(0, 2);
    REQUIRE(tracks.size() == 1);
    const Track& t = tracks[0];
    CHECK(t.status == TrackStatus::confirmed);
    CHECK(t.t_begin == 0);
    CHECK(t.t_end == 2);
    REQUIRE(t.states.size() == 3);
    CHECK(t.states[0].x == 10.0);
    CHECK(t.states[1].x == 13.0);
    CHECK(t.states[2].x == 16.0);
    CHECK(confirmed_only(tracks).size() == 1);
}

TEST_CASE("tracker: a missed frame ends the track")
{
    Tracker tr;
    const CCList cur{oracle::cc_at(1, 0, 0)};
    tr.update(1, {moving(1, 1, 2, 0, 2)}, cur);
    tr.update(2, {}, cur);
    tr.update(3, {moving(1, 1, 2, 0, 2)}, cur);
    const auto tracks = tr.finalize();
    REQUIRE(tracks.size() == 2);
    CHECK(tracks[0].states.size() == 2);
    CHECK(tracks[1].states.size() == 2);
    CHECK(tracks[1].t_begin == 2);
}

TEST_CASE("tracker: skipped frame index terminates active tracks")
{
    Tracker tr;
    const CCList cur{oracle::cc_at(1, 0, 0)};
    tr.update(1, {moving(1, 1, 2, 0, 2)}, cur);
    tr.update(3, {moving(1, 1, 2, 0, 2)}, cur);
    const auto tracks = tr.finalize();
    REQUIRE(tracks.size() == 2);
    CHECK(tracks[0].t_end == 1);
    CHECK(tracks[1].t_begin == 2);
}

TEST_CASE("tracker: contract violations")
{
    Tracker tr;
    tr.update(4, {}, {});
    CHECK_THROWS_AS(tr.update(4, {}, {}), ContractViolation);
    CHECK_THROWS_AS(tr.update(2, {}, {}), ContractViolation);
    Tracker fresh;
    CHECK_THROWS_AS(fresh.update(0, {moving(1, 1, 1, 1, 1)}, {oracle::cc_at(1, 0, 0)}), ContractViolation);
}

TEST_CASE("finalize: empty and flush")
{
    Tracker empty;
    CHECK(empty.finalize().empty());

    Tracker tr;
    for (std::uint64_t t = 1; t <= 2; ++t)
        tr.update(t, {moving(1, 1, 1, 0, 1)}, {oracle::cc_at(1, double(t), 0)});
    CHECK(tr.active().size() == 1);
    const auto tracks = tr.finalize();
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].status == TrackStatus::confirmed);
    CHECK(tracks[0].terminated);
}

namespace {

struct RandomStream {
    std::vector<std::vector<Association>> moving; // index t-1 for frame t
    std::vector<CCList> cur;
};

// Random objects appearing and disappearing; CC labels reshuffled every frame.
RandomStream random_stream(std::mt19937_64& rng, std::uint64_t frames)
{
    RandomStream s;
    std::map<int, std::uint32_t> last_label; // object -> label in previous frame
    int next_object = 0;
    for (std::uint64_t t = 1; t <= frames; ++t) {
        std::map<int, std::uint32_t> labels;
        std::vector<int> objects;
        for (auto& [o, l] : last_label)
            if (oracle::uniform(rng, 0, 1) < 0.8)
                objects.push_back(o);
        const int born = oracle::uniform_int(rng, 0, 2);
        for (int b = 0; b < born; ++b)
            objects.push_back(next_object++);
        std::vector<std::uint32_t> pool(objects.size());
        std::iota(pool.begin(), pool.end(), 1u);
        std::shuffle(pool.begin(), pool.end(), rng);
        CCList cur;
        std::vector<Association> m;
        for (std::size_t i = 0; i < objects.size(); ++i) {
            const auto l = pool[i];
            labels[objects[i]] = l;
            cur.push_back(oracle::cc_at(l, objects[i] * 10.0 + t, 5.0));
            const auto prev = last_label.count(objects[i]) ? last_label[objects[i]] : 100 + objects[i];
            m.push_back(moving(prev, l, 1.0, 0.0, 1.0));
        }
        std::sort(cur.begin(), cur.end(), [](auto& a, auto& b) { return a.label < b.label; });
        s.moving.push_back(m);
        s.cur.push_back(cur);
        last_label = labels;
    }
    return s;
}

std::vector<Track> replay(const RandomStream& s)
{
    Tracker tr;
    for (std::size_t i = 0; i < s.moving.size(); ++i)
        tr.update(i + 1, s.moving[i], s.cur[i]);
    return tr.finalize();
}

} // namespace

TEST_CASE("tracker: properties over random streams")
{
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = random_stream(rng, 40);
        const auto tracks = replay(s);
        CHECK(tracks == replay(s));

        auto sorted = tracks;
        std::sort(sorted.begin(), sorted.end(),
                  [](const Track& a, const Track& b) { return std::tie(a.t_begin, a.id) < std::tie(b.t_begin, b.id); });
        CHECK(tracks == sorted);

        std::set<std::uint64_t> ids;
        for (const auto& t : tracks) {
            CHECK(ids.insert(t.id).second);
            CHECK((t.status == TrackStatus::confirmed) == (t.states.size() >= 3));
            CHECK(t.t_end - t.t_begin + 1 == t.states.size());
            for (std::size_t i = 1; i < t.states.size(); ++i)
                CHECK(t.states[i].t == t.states[i - 1].t + 1);
            CHECK(t.terminated);
        }
        // ids follow creation order: a later-born track never has a smaller id
        for (const auto& a : tracks)
            for (const auto& b : tracks)
                if (a.t_begin < b.t_begin)
                    CHECK(a.id < b.id);
    }
}

TEST_CASE("tracker: two meteors among 50 stars")
{
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        auto scene = random_scene(seed, 640, 480, 60, 2, 2.0);
        const auto seq = generate(scene);
        auto chain = build_v2(ChainParams{});
        const auto confirmed = confirmed_only(run_chain(chain, frames_source(seq.frames), ExecutionMode{}).tracks);
        REQUIRE(confirmed.size() == 2);

        std::set<std::uint32_t> matched;
        for (const auto& track : confirmed) {
            // the meteor with the closest first state
            std::uint32_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (const auto& p : seq.truth.points)
                if (p.t == track.states[0].t) {
                    const double d = std::hypot(p.x - track.states[0].x, p.y - track.states[0].y);
                    if (d < best_d) {
                        best_d = d;
                        best = p.meteor_id;
                    }
                }
            matched.insert(best);
            for (const auto& s : track.states) {
                bool found = false;
                for (const auto& p : seq.truth.points)
                    if (p.meteor_id == best && p.t == s.t) {
                        found = true;
                        CHECK(std::hypot(p.x - s.x, p.y - s.y) <= 1.0);
                    }
                CHECK(found);
            }
        }
        CHECK(matched.size() == 2);
    }
}
