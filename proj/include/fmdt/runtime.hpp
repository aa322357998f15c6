#pragma once

#include <any>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <typeindex>
#include <typeinfo>
#include <utility>
#include <vector>

#include "fmdt/error.hpp"

namespace fmdt {

using Clock = std::chrono::steady_clock;

struct SocketSpec {
    std::string name;
    std::type_index type;
};

template <class T>
SocketSpec socket(std::string name)
{
    return {std::move(name), std::type_index(typeid(T))};
}

std::string type_name(std::type_index t);

class Sequence;

/// View a task gets over the current frame's data while it runs.
class TaskIO {
public:
    template <class T>
    const T& in(std::size_t i) const
    {
        const std::any& slot = (*slots_)[inputs_[i]];
        if (!slot.has_value())
            throw BindingError("input " + std::to_string(i) + " was not produced upstream");
        const T* v = std::any_cast<T>(&slot);
        if (v == nullptr)
            throw TypeMismatchError("input " + std::to_string(i) + " holds " +
                                    type_name(slot.type()) + ", read as " + type_name(typeid(T)));
        return *v;
    }

    template <class T>
    void out(std::size_t i, T value)
    {
        if (std::type_index(typeid(T)) != output_types_[i])
            throw TypeMismatchError("output " + std::to_string(i) + " declared " +
                                    type_name(output_types_[i]) + ", written as " +
                                    type_name(typeid(T)));
        (*slots_)[outputs_[i]] = std::move(value);
    }

private:
    friend class StageRunner;

    TaskIO(std::vector<std::any>& slots, std::span<const std::size_t> inputs,
           std::span<const std::size_t> outputs, std::span<const std::type_index> output_types)
        : slots_(&slots), inputs_(inputs), outputs_(outputs), output_types_(output_types) {}

    std::vector<std::any>* slots_;
    std::span<const std::size_t> inputs_;
    std::span<const std::size_t> outputs_;
    std::span<const std::type_index> output_types_;
};

/// Unit of work with typed input and output sockets.
///
/// A stateless task's outputs depend only on its inputs; only stateless
/// tasks may be replicated across threads.
struct Task {
    std::string name;
    std::vector<SocketSpec> inputs;
    std::vector<SocketSpec> outputs;
    bool stateless = true;
    std::function<void(TaskIO&)> work;
};

/// A task socket, or the stream input when `task` is empty.
struct Endpoint {
    std::string task;
    std::string socket;

    static Endpoint stream() { return {}; }
    bool is_stream() const { return task.empty(); }
};

/// Connects the input socket `to` to the output socket `from`.
struct Binding {
    Endpoint to;
    Endpoint from;
};

struct SequenceIO {
    std::type_index stream_type = typeid(void);
    std::vector<Endpoint> outputs; ///< delivered to the sink, in this order
};

/// Validated task list with an execution order fixed at construction.
class Sequence {
public:
    const std::vector<Task>& tasks() const { return tasks_; }
    std::size_t size() const { return tasks_.size(); }
    std::size_t index_of(std::string_view task_name) const;
    std::vector<std::string> order() const;
    std::type_index stream_type() const { return stream_type_; }

private:
    friend Sequence build_sequence(std::vector<Task>, const std::vector<Binding>&, SequenceIO);
    friend class StageRunner;

    Sequence() = default;

    std::vector<Task> tasks_; // execution order
    std::vector<std::vector<std::size_t>> input_slots_;
    std::vector<std::vector<std::size_t>> output_slots_;
    std::vector<std::vector<std::type_index>> output_types_;
    std::vector<std::size_t> sink_slots_;
    std::size_t n_slots_ = 1; // slot 0 is the stream input
    std::type_index stream_type_ = typeid(void);
};

/// Checks bindings and orders tasks topologically; among ready tasks the one
/// given first wins.
///
/// Throws BindingError for an unbound, doubly bound or dangling socket,
/// TypeMismatchError when bound sockets disagree, GraphCycleError on a cycle.
Sequence build_sequence(std::vector<Task> tasks, const std::vector<Binding>& bindings, SequenceIO io);

/// Returns nullopt at end of stream.
using Source = std::function<std::optional<std::any>()>;

struct StreamItem {
    std::uint64_t index = 0;
    std::vector<std::any> values; ///< one per SequenceIO::outputs entry
};

using Sink = std::function<void(StreamItem&&)>;

struct TaskTiming {
    std::string name;
    double seconds = 0.0;
};

struct StreamStats {
    std::uint64_t frames = 0;
    double elapsed_s = 0.0;
    double throughput_fps = 0.0; ///< 0 when no frame completed
    double latency_ms_mean = 0.0;
    double latency_ms_p99 = 0.0;
    std::vector<double> latency_ms; ///< per frame, source emission to sink completion
    std::vector<TaskTiming> task_times; ///< only with RunOptions::profile_tasks
};

struct RunOptions {
    bool profile_tasks = false;
};

enum class WaitPolicy { passive };

/// Three-stage cut over a sequence's execution order:
/// E1 = [0, e2_begin), E2 = [e2_begin, e3_begin), E3 = [e3_begin, size).
struct PipelineConfig {
    std::size_t e2_begin = 0;
    std::size_t e3_begin = 0;
    std::size_t replicas = 1;
    std::size_t buffer_capacity = 1;
    WaitPolicy wait = WaitPolicy::passive;

    std::size_t thread_count() const { return replicas + 2; }

    /// Throws ConfigError for bad counts or cut points and ReplicationRefused
    /// when E2 holds a stateful task and replicas > 1.
    void validate(const Sequence& seq) const;
};

/// i independent copies of a stage. Throws ReplicationRefused if any task is stateful.
std::vector<std::vector<Task>> replicate_stage(std::span<const Task> stage, std::size_t replicas);

/// Runs the whole sequence on the calling thread, one frame at a time.
StreamStats run_sequential(const Sequence& seq, const Source& source, const Sink& sink,
                           const RunOptions& opts = {});

/// E1 on one thread, E2 on `replicas` threads taking whole frames, E3 on the
/// calling thread. Frames reach E3 and the sink in source order.
StreamStats run_pipeline(const Sequence& seq, const PipelineConfig& cfg, const Source& source,
                         const Sink& sink);

/// Fills D and L from per-frame latency samples and elapsed time.
void finish_stats(StreamStats& stats);

} // namespace fmdt
