#include "fmdt/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <queue>
#include <thread>
#include <unordered_map>

#include "fmdt/bounded_queue.hpp"

#if defined(__GNUG__)
#include <cxxabi.h>
#include <cstdlib>
#include <memory>
#endif

namespace fmdt {

std::string type_name(std::type_index t)
{
#if defined(__GNUG__)
    int status = 0;
    std::unique_ptr<char, void (*)(void*)> s(abi::__cxa_demangle(t.name(), nullptr, nullptr, &status),
                                             std::free);
    if (status == 0 && s)
        return s.get();
#endif
    return t.name();
}

std::size_t Sequence::index_of(std::string_view task_name) const
{
    for (std::size_t i = 0; i < tasks_.size(); ++i)
        if (tasks_[i].name == task_name)
            return i;
    throw InvalidArgument("no task named '" + std::string(task_name) + "'");
}

std::vector<std::string> Sequence::order() const
{
    std::vector<std::string> names;
    for (const auto& t : tasks_)
        names.push_back(t.name);
    return names;
}

namespace {

std::string describe(const Endpoint& e)
{
    return e.is_stream() ? std::string("<stream>") : e.task + "." + e.socket;
}

std::size_t socket_index(const std::vector<SocketSpec>& sockets, const std::string& name)
{
    for (std::size_t i = 0; i < sockets.size(); ++i)
        if (sockets[i].name == name)
            return i;
    return sockets.size();
}

} // namespace

Sequence build_sequence(std::vector<Task> tasks, const std::vector<Binding>& bindings, SequenceIO io)
{
    const std::size_t n = tasks.size();
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < n; ++i) {
        if (tasks[i].name.empty())
            throw BindingError("task names must be non-empty");
        if (!tasks[i].work)
            throw BindingError("task '" + tasks[i].name + "' has no work function");
        if (!by_name.emplace(tasks[i].name, i).second)
            throw BindingError("duplicate task name '" + tasks[i].name + "'");
    }

    // Producer of each input socket: (task index or n for the stream, output index).
    constexpr std::size_t unbound = static_cast<std::size_t>(-1);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> producer(n);
    for (std::size_t i = 0; i < n; ++i)
        producer[i].assign(tasks[i].inputs.size(), {unbound, 0});

    auto resolve_output = [&](const Endpoint& e) -> std::pair<std::size_t, std::size_t> {
        if (e.is_stream())
            return {n, 0};
        auto it = by_name.find(e.task);
        if (it == by_name.end())
            throw BindingError("unknown task in " + describe(e));
        const auto k = socket_index(tasks[it->second].outputs, e.socket);
        if (k == tasks[it->second].outputs.size())
            throw BindingError("unknown output socket " + describe(e));
        return {it->second, k};
    };
    auto output_type = [&](std::pair<std::size_t, std::size_t> p) {
        return p.first == n ? io.stream_type : tasks[p.first].outputs[p.second].type;
    };

    for (const auto& b : bindings) {
        if (b.to.is_stream())
            throw BindingError("the stream input cannot be bound as a consumer");
        auto it = by_name.find(b.to.task);
        if (it == by_name.end())
            throw BindingError("unknown task in " + describe(b.to));
        const std::size_t ti = it->second;
        const auto k = socket_index(tasks[ti].inputs, b.to.socket);
        if (k == tasks[ti].inputs.size())
            throw BindingError("unknown input socket " + describe(b.to));
        if (producer[ti][k].first != unbound)
            throw BindingError("input socket " + describe(b.to) + " is bound twice");
        const auto src = resolve_output(b.from);
        const auto want = tasks[ti].inputs[k].type;
        const auto have = output_type(src);
        if (want != have)
            throw TypeMismatchError("binding " + describe(b.from) + " -> " + describe(b.to) + ": " +
                                    type_name(have) + " does not match " + type_name(want));
        producer[ti][k] = src;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < producer[i].size(); ++k)
            if (producer[i][k].first == unbound)
                throw BindingError("input socket " + tasks[i].name + "." + tasks[i].inputs[k].name +
                                   " is not bound");

    // Kahn's algorithm, lowest declaration index first among ready tasks.
    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> preds;
        for (const auto& [p, k] : producer[i])
            if (p != n)
                preds.push_back(p);
        std::sort(preds.begin(), preds.end());
        preds.erase(std::unique(preds.begin(), preds.end()), preds.end());
        for (auto p : preds) {
            succ[p].push_back(i);
            ++indeg[i];
        }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0)
            ready.push(i);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        const auto i = ready.top();
        ready.pop();
        order.push_back(i);
        for (auto s : succ[i])
            if (--indeg[s] == 0)
                ready.push(s);
    }
    if (order.size() != n) {
        std::string stuck;
        for (std::size_t i = 0; i < n; ++i)
            if (indeg[i] != 0)
                stuck += (stuck.empty() ? "" : ", ") + tasks[i].name;
        throw GraphCycleError("task graph has a cycle through: " + stuck);
    }

    // Slot 0 is the stream; each task output gets its own slot.
    Sequence seq;
    seq.stream_type_ = io.stream_type;
    std::vector<std::size_t> first_slot(n, 0);
    std::size_t next = 1;
    for (std::size_t i = 0; i < n; ++i) {
        first_slot[i] = next;
        next += tasks[i].outputs.size();
    }
    seq.n_slots_ = next;
    auto slot_of = [&](std::pair<std::size_t, std::size_t> p) {
        return p.first == n ? std::size_t{0} : first_slot[p.first] + p.second;
    };

    for (auto i : order) {
        std::vector<std::size_t> ins, outs;
        std::vector<std::type_index> out_types;
        for (const auto& p : producer[i])
            ins.push_back(slot_of(p));
        for (std::size_t k = 0; k < tasks[i].outputs.size(); ++k) {
            outs.push_back(first_slot[i] + k);
            out_types.push_back(tasks[i].outputs[k].type);
        }
        seq.input_slots_.push_back(std::move(ins));
        seq.output_slots_.push_back(std::move(outs));
        seq.output_types_.push_back(std::move(out_types));
    }
    for (const auto& e : io.outputs)
        seq.sink_slots_.push_back(slot_of(resolve_output(e)));
    for (auto i : order)
        seq.tasks_.push_back(std::move(tasks[i]));
    return seq;
}

namespace {

struct Packet {
    std::uint64_t index = 0;
    Clock::time_point emitted;
    std::vector<std::any> slots;
};

} // namespace

/// Runs a contiguous range of a sequence's tasks over one packet, using its
/// own copy of the task objects.
class StageRunner {
public:
    StageRunner(const Sequence& seq, std::size_t begin, std::size_t end, std::vector<Task> tasks)
        : seq_(&seq), begin_(begin), tasks_(std::move(tasks)), seconds_(end - begin, 0.0)
    {
    }

    StageRunner(const Sequence& seq, std::size_t begin, std::size_t end)
        : StageRunner(seq, begin, end,
                      std::vector<Task>(seq.tasks_.begin() + static_cast<std::ptrdiff_t>(begin),
                                        seq.tasks_.begin() + static_cast<std::ptrdiff_t>(end)))
    {
    }

    void run(Packet& p, bool profile)
    {
        for (std::size_t j = 0; j < tasks_.size(); ++j) {
            const std::size_t i = begin_ + j;
            TaskIO io(p.slots, seq_->input_slots_[i], seq_->output_slots_[i], seq_->output_types_[i]);
            const auto t0 = profile ? Clock::now() : Clock::time_point{};
            try {
                tasks_[j].work(io);
            } catch (const std::exception& e) {
                throw TaskError(tasks_[j].name, e.what());
            } catch (...) {
                throw TaskError(tasks_[j].name, "unknown exception");
            }
            if (profile)
                seconds_[j] += std::chrono::duration<double>(Clock::now() - t0).count();
        }
    }

    Packet make_packet(std::uint64_t index, std::any item) const
    {
        Packet p;
        p.index = index;
        p.emitted = Clock::now();
        p.slots.resize(seq_->n_slots_);
        p.slots[0] = std::move(item);
        return p;
    }

    StreamItem to_item(Packet& p) const
    {
        StreamItem item;
        item.index = p.index;
        for (auto s : seq_->sink_slots_)
            item.values.push_back(p.slots[s]);
        return item;
    }

    std::vector<TaskTiming> timings() const
    {
        std::vector<TaskTiming> out;
        for (std::size_t j = 0; j < tasks_.size(); ++j)
            out.push_back({tasks_[j].name, seconds_[j]});
        return out;
    }

private:
    const Sequence* seq_;
    std::size_t begin_;
    std::vector<Task> tasks_;
    std::vector<double> seconds_;
};

namespace {

std::optional<std::any> pull(const Source& source)
{
    try {
        return source();
    } catch (const std::exception& e) {
        throw TaskError("source", e.what());
    }
}

void deliver(const Sink& sink, StreamItem&& item)
{
    try {
        sink(std::move(item));
    } catch (const std::exception& e) {
        throw TaskError("sink", e.what());
    }
}

double ms_since(Clock::time_point t0, Clock::time_point t1)
{
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

} // namespace

void finish_stats(StreamStats& stats)
{
    stats.frames = stats.latency_ms.size();
    if (stats.frames == 0) {
        stats.throughput_fps = 0.0;
        stats.latency_ms_mean = 0.0;
        stats.latency_ms_p99 = 0.0;
        return;
    }
    stats.throughput_fps = stats.elapsed_s > 0.0 ? static_cast<double>(stats.frames) / stats.elapsed_s : 0.0;
    double sum = 0.0;
    for (double l : stats.latency_ms)
        sum += l;
    stats.latency_ms_mean = sum / static_cast<double>(stats.frames);
    std::vector<double> sorted = stats.latency_ms;
    std::sort(sorted.begin(), sorted.end());
    // Nearest-rank percentile.
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size())));
    stats.latency_ms_p99 = sorted[std::max<std::size_t>(rank, 1) - 1];
}

StreamStats run_sequential(const Sequence& seq, const Source& source, const Sink& sink,
                           const RunOptions& opts)
{
    StageRunner runner(seq, 0, seq.size());
    StreamStats stats;
    const auto start = Clock::now();
    std::uint64_t index = 0;
    while (auto item = pull(source)) {
        Packet p = runner.make_packet(index++, std::move(*item));
        runner.run(p, opts.profile_tasks);
        deliver(sink, runner.to_item(p));
        const auto done = Clock::now();
        stats.latency_ms.push_back(ms_since(p.emitted, done));
    }
    stats.elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();
    if (opts.profile_tasks)
        stats.task_times = runner.timings();
    finish_stats(stats);
    return stats;
}

void PipelineConfig::validate(const Sequence& seq) const
{
    if (replicas < 1)
        throw ConfigError("replication count must be >= 1");
    if (buffer_capacity < 1)
        throw ConfigError("buffer capacity must be >= 1");
    if (e2_begin > e3_begin || e3_begin > seq.size())
        throw ConfigError("stage cut points must satisfy 0 <= e2_begin <= e3_begin <= " +
                          std::to_string(seq.size()));
    if (replicas > 1) {
        for (std::size_t i = e2_begin; i < e3_begin; ++i)
            if (!seq.tasks()[i].stateless)
                throw ReplicationRefused("cannot replicate stage E2: task '" + seq.tasks()[i].name +
                                         "' is stateful");
    }
}

std::vector<std::vector<Task>> replicate_stage(std::span<const Task> stage, std::size_t replicas)
{
    if (replicas < 1)
        throw ConfigError("replication count must be >= 1");
    for (const auto& t : stage)
        if (!t.stateless)
            throw ReplicationRefused("cannot replicate task '" + t.name + "': it is stateful");
    std::vector<std::vector<Task>> clones;
    clones.reserve(replicas);
    for (std::size_t r = 0; r < replicas; ++r)
        clones.emplace_back(stage.begin(), stage.end());
    return clones;
}

StreamStats run_pipeline(const Sequence& seq, const PipelineConfig& cfg, const Source& source,
                         const Sink& sink)
{
    cfg.validate(seq);

    const auto e2_span = std::span<const Task>(seq.tasks()).subspan(cfg.e2_begin, cfg.e3_begin - cfg.e2_begin);
    std::vector<std::vector<Task>> clones;
    if (cfg.replicas > 1)
        clones = replicate_stage(e2_span, cfg.replicas);
    else
        clones.emplace_back(e2_span.begin(), e2_span.end());

    StageRunner e1(seq, 0, cfg.e2_begin);
    std::vector<StageRunner> e2;
    e2.reserve(cfg.replicas);
    for (auto& c : clones)
        e2.emplace_back(seq, cfg.e2_begin, cfg.e3_begin, std::move(c));
    StageRunner e3(seq, cfg.e3_begin, seq.size());

    BoundedQueue<Packet> q12(cfg.buffer_capacity);
    BoundedQueue<Packet> q23(cfg.buffer_capacity);

    std::mutex error_mutex;
    std::exception_ptr error;
    auto fail = [&](std::exception_ptr e) {
        {
            std::lock_guard lock(error_mutex);
            if (!error)
                error = e;
        }
        q12.abort();
        q23.abort();
    };

    StreamStats stats;
    const auto start = Clock::now();

    std::vector<std::jthread> threads;
    threads.emplace_back([&] {
        try {
            std::uint64_t index = 0;
            while (auto item = pull(source)) {
                Packet p = e1.make_packet(index++, std::move(*item));
                e1.run(p, false);
                if (!q12.push(std::move(p)))
                    return;
            }
            q12.close();
        } catch (...) {
            fail(std::current_exception());
        }
    });

    std::atomic<std::size_t> e2_running{cfg.replicas};
    for (std::size_t r = 0; r < cfg.replicas; ++r) {
        threads.emplace_back([&, r] {
            try {
                while (auto p = q12.pop()) {
                    e2[r].run(*p, false);
                    if (!q23.push(std::move(*p)))
                        return;
                }
            } catch (...) {
                fail(std::current_exception());
            }
            if (e2_running.fetch_sub(1) == 1)
                q23.close();
        });
    }

    // E3 on this thread, re-serialising frames by sequence number.
    try {
        std::map<std::uint64_t, Packet> pending;
        std::uint64_t expected = 0;
        while (auto p = q23.pop()) {
            pending.emplace(p->index, std::move(*p));
            for (auto it = pending.find(expected); it != pending.end(); it = pending.find(expected)) {
                Packet cur = std::move(it->second);
                pending.erase(it);
                e3.run(cur, false);
                deliver(sink, e3.to_item(cur));
                stats.latency_ms.push_back(ms_since(cur.emitted, Clock::now()));
                ++expected;
            }
        }
    } catch (...) {
        fail(std::current_exception());
    }

    threads.clear(); // join
    if (error)
        std::rethrow_exception(error);

    stats.elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();
    finish_stats(stats);
    return stats;
}

} // namespace fmdt
