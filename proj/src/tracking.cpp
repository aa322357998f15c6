#include "fmdt/tracking.hpp"

#include <algorithm>
#include <iterator>
#include <string>

#include "fmdt/error.hpp"

namespace fmdt {

Tracker::Tracker(std::size_t confirm_length) : confirm_length_(confirm_length)
{
    if (confirm_length_ < 1)
        throw InvalidArgument("track confirmation length must be >= 1");
}

void Tracker::terminate_all()
{
    for (auto& [label, track] : active_) {
        track.terminated = true;
        finished_.push_back(std::move(track));
    }
    active_.clear();
}

void Tracker::update(std::uint64_t t, const std::vector<Association>& moving, const CCList& cur)
{
    if (last_t_ && t <= *last_t_)
        throw ContractViolation("tracker update at frame " + std::to_string(t) +
                                " after frame " + std::to_string(*last_t_));
    if (last_t_ && t != *last_t_ + 1)
        terminate_all();
    last_t_ = t;

    std::vector<const Association*> order;
    order.reserve(moving.size());
    for (const auto& a : moving)
        order.push_back(&a);
    std::sort(order.begin(), order.end(),
              [](const Association* a, const Association* b) { return a->cur_label < b->cur_label; });

    std::map<std::uint32_t, Track> next;
    for (const Association* a : order) {
        auto cc = std::lower_bound(cur.begin(), cur.end(), a->cur_label,
                                   [](const CC& c, std::uint32_t l) { return c.label < l; });
        if (cc == cur.end() || cc->label != a->cur_label)
            throw InvalidArgument("moving association refers to unknown CC " +
                                  std::to_string(a->cur_label));
        const double r = a->residual.value_or(a->dist);
        const TrackPoint here{t, cc->xG, cc->yG, r};

        Track track;
        if (auto it = active_.find(a->prev_label); it != active_.end()) {
            track = std::move(it->second);
            active_.erase(it);
            track.states.push_back(here);
        } else {
            if (t == 0)
                throw ContractViolation("association at frame 0 has no previous frame");
            track.id = next_id_++;
            track.t_begin = t - 1;
            track.states.push_back({t - 1, cc->xG - a->dx, cc->yG - a->dy, r});
            track.states.push_back(here);
        }
        track.t_end = t;
        if (track.states.size() >= confirm_length_)
            track.status = TrackStatus::confirmed;
        next.emplace(a->cur_label, std::move(track));
    }

    terminate_all();
    active_ = std::move(next);
}

std::vector<Track> Tracker::finalize()
{
    terminate_all();
    std::vector<Track> all = finished_;
    std::sort(all.begin(), all.end(), [](const Track& a, const Track& b) {
        return a.t_begin != b.t_begin ? a.t_begin < b.t_begin : a.id < b.id;
    });
    return all;
}

void Tracker::reset()
{
    active_.clear();
    finished_.clear();
    next_id_ = 1;
    last_t_.reset();
}

std::vector<Track> confirmed_only(const std::vector<Track>& tracks)
{
    std::vector<Track> out;
    std::copy_if(tracks.begin(), tracks.end(), std::back_inserter(out),
                 [](const Track& t) { return t.status == TrackStatus::confirmed; });
    return out;
}

} // namespace fmdt
