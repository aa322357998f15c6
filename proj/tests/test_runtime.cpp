#include <doctest.h>

#include <atomic>
#include <chrono>
#include <future>
#include <numeric>
#include <thread>

#include "fmdt/bounded_queue.hpp"
#include "fmdt/error.hpp"
#include "fmdt/runtime.hpp"
#include "oracles.hpp"

using namespace fmdt;
using namespace std::chrono_literals;

namespace {

Task int_task(std::string name, std::function<int(int)> f, bool stateless = true)
{
    Task t;
    t.name = std::move(name);
    t.inputs = {socket<int>("in")};
    t.outputs = {socket<int>("out")};
    t.stateless = stateless;
    t.work = [f = std::move(f)](TaskIO& io) { io.out(0, f(io.in<int>(0))); };
    return t;
}

Task sleeper(std::string name, std::chrono::microseconds d)
{
    return int_task(std::move(name), [d](int v) {
        std::this_thread::sleep_for(d);
        return v;
    });
}

/// Linear chain: stream -> tasks[0] -> tasks[1] -> ... -> sink.
Sequence chain_of(std::vector<Task> tasks)
{
    std::vector<Binding> b;
    for (std::size_t i = 0; i < tasks.size(); ++i)
        b.push_back({{tasks[i].name, "in"}, i == 0 ? Endpoint::stream() : Endpoint{tasks[i - 1].name, "out"}});
    const std::string last = tasks.back().name;
    return build_sequence(std::move(tasks), b, {typeid(int), {{last, "out"}}});
}

Source counting_source(int n)
{
    auto next = std::make_shared<int>(0);
    return [next, n]() -> std::optional<std::any> {
        if (*next >= n)
            return std::nullopt;
        return std::any(int((*next)++));
    };
}

struct Collected {
    std::vector<std::uint64_t> index;
    std::vector<int> value;
};

Sink collect(Collected& c)
{
    return [&c](StreamItem&& it) {
        c.index.push_back(it.index);
        c.value.push_back(std::any_cast<int>(it.values.at(0)));
    };
}

PipelineConfig cut(std::size_t e2, std::size_t e3, std::size_t replicas, std::size_t cap = 1)
{
    PipelineConfig c;
    c.e2_begin = e2;
    c.e3_begin = e3;
    c.replicas = replicas;
    c.buffer_capacity = cap;
    return c;
}

} // namespace

// ---------------------------------------------------------------------------
// build_sequence

TEST_CASE("build_sequence: two-task chain")
{
    const auto seq = chain_of({int_task("A", [](int v) { return v; }), int_task("B", [](int v) { return v; })});
    CHECK(seq.order() == std::vector<std::string>{"A", "B"});
}

TEST_CASE("build_sequence: binding order is taken from the graph, not the list")
{
    std::vector<Task> tasks{int_task("B", [](int v) { return v; }), int_task("A", [](int v) { return v; })};
    std::vector<Binding> b{{{"A", "in"}, Endpoint::stream()}, {{"B", "in"}, {"A", "out"}}};
    const auto seq = build_sequence(tasks, b, {typeid(int), {{"B", "out"}}});
    CHECK(seq.order() == std::vector<std::string>{"A", "B"});
    CHECK(oracle::respects_edges(seq, b));
}

TEST_CASE("build_sequence: independent tasks keep declaration order")
{
    std::vector<Task> tasks{int_task("Z", [](int v) { return v; }), int_task("Y", [](int v) { return v; })};
    std::vector<Binding> b{{{"Z", "in"}, Endpoint::stream()}, {{"Y", "in"}, Endpoint::stream()}};
    CHECK(build_sequence(tasks, b, {typeid(int), {}}).order() == std::vector<std::string>{"Z", "Y"});
}

TEST_CASE("build_sequence: errors")
{
    auto id = [](int v) { return v; };
    SUBCASE("unbound input")
    {
        std::vector<Binding> b{{{"A", "in"}, Endpoint::stream()}};
        CHECK_THROWS_AS(build_sequence({int_task("A", id), int_task("B", id)}, b, {typeid(int), {}}), BindingError);
    }
    SUBCASE("input bound twice")
    {
        std::vector<Binding> b{{{"A", "in"}, Endpoint::stream()}, {{"A", "in"}, Endpoint::stream()}};
        CHECK_THROWS_AS(build_sequence({int_task("A", id)}, b, {typeid(int), {}}), BindingError);
    }
    SUBCASE("unknown socket")
    {
        std::vector<Binding> b{{{"A", "in"}, {"nope", "out"}}};
        CHECK_THROWS_AS(build_sequence({int_task("A", id)}, b, {typeid(int), {}}), BindingError);
    }
    SUBCASE("duplicate names")
    {
        std::vector<Binding> b{{{"A", "in"}, Endpoint::stream()}};
        CHECK_THROWS_AS(build_sequence({int_task("A", id), int_task("A", id)}, b, {typeid(int), {}}), BindingError);
    }
    SUBCASE("type mismatch")
    {
        Task d;
        d.name = "D";
        d.inputs = {socket<double>("in")};
        d.work = [](TaskIO&) {};
        std::vector<Binding> b{{{"A", "in"}, Endpoint::stream()}, {{"D", "in"}, {"A", "out"}}};
        CHECK_THROWS_AS(build_sequence({int_task("A", id), d}, b, {typeid(int), {}}), TypeMismatchError);
    }
    SUBCASE("stream type mismatch")
    {
        std::vector<Binding> b{{{"A", "in"}, Endpoint::stream()}};
        CHECK_THROWS_AS(build_sequence({int_task("A", id)}, b, {typeid(double), {}}), TypeMismatchError);
    }
    SUBCASE("cycle")
    {
        std::vector<Binding> b{{{"A", "in"}, {"B", "out"}}, {{"B", "in"}, {"A", "out"}}};
        CHECK_THROWS_AS(build_sequence({int_task("A", id), int_task("B", id)}, b, {typeid(int), {}}), GraphCycleError);
    }
}

TEST_CASE("build_sequence: random DAGs are ordered topologically")
{
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = oracle::uniform_int(rng, 1, 8);
        // task k reads from tasks with a smaller rank in a hidden permutation
        std::vector<int> rank(n);
        std::iota(rank.begin(), rank.end(), 0);
        std::shuffle(rank.begin(), rank.end(), rng);
        std::vector<Task> tasks;
        std::vector<Binding> bindings;
        for (int k = 0; k < n; ++k) {
            Task t;
            t.name = "t" + std::to_string(k);
            t.outputs = {socket<int>("out")};
            t.work = [](TaskIO& io) { io.out(0, 0); };
            std::vector<int> preds;
            for (int j = 0; j < n; ++j)
                if (rank[j] < rank[k] && oracle::uniform(rng, 0, 1) < 0.4)
                    preds.push_back(j);
            if (preds.empty()) {
                t.inputs.push_back(socket<int>("s"));
                bindings.push_back({{t.name, "s"}, Endpoint::stream()});
            }
            for (int j : preds) {
                t.inputs.push_back(socket<int>("from" + std::to_string(j)));
                bindings.push_back({{t.name, "from" + std::to_string(j)}, {"t" + std::to_string(j), "out"}});
            }
            tasks.push_back(std::move(t));
        }
        const auto seq = build_sequence(tasks, bindings, {typeid(int), {}});
        REQUIRE(seq.size() == static_cast<std::size_t>(n));
        auto names = seq.order();
        std::sort(names.begin(), names.end());
        CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
        CHECK(oracle::respects_edges(seq, bindings));
    }
}

// ---------------------------------------------------------------------------
// run_sequential

TEST_CASE("run_sequential: three 10 ms stages")
{
    const auto seq = chain_of({sleeper("a", 10ms), sleeper("b", 10ms), sleeper("c", 10ms)});
    Collected c;
    const auto s = run_sequential(seq, counting_source(20), collect(c));
    CHECK(s.frames == 20);
    CHECK(s.latency_ms.size() == 20);
    CHECK(s.latency_ms_mean == doctest::Approx(30.0).epsilon(0.15));
    CHECK(s.throughput_fps == doctest::Approx(33.3).epsilon(0.15));
    CHECK(s.throughput_fps == doctest::Approx(s.frames / s.elapsed_s).epsilon(1e-9));
    CHECK(s.latency_ms_p99 >= s.latency_ms_mean * 0.99);
}

TEST_CASE("run_sequential: empty stream")
{
    const auto seq = chain_of({int_task("a", [](int v) { return v; })});
    Collected c;
    const auto s = run_sequential(seq, counting_source(0), collect(c));
    CHECK(s.frames == 0);
    CHECK(s.throughput_fps == 0.0);
    CHECK(c.index.empty());
}

TEST_CASE("run_sequential: identity tasks pass data through")
{
    const auto seq = chain_of({int_task("a", [](int v) { return v; }), int_task("b", [](int v) { return v; })});
    Collected c;
    run_sequential(seq, counting_source(50), collect(c));
    std::vector<int> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(c.value == expect);
    CHECK(std::is_sorted(c.index.begin(), c.index.end()));
}

TEST_CASE("run_sequential: per-task profile")
{
    const auto seq = chain_of({sleeper("a", 2ms), sleeper("b", 6ms)});
    Collected c;
    const auto s = run_sequential(seq, counting_source(10), collect(c), RunOptions{true});
    REQUIRE(s.task_times.size() == 2);
    CHECK(s.task_times[0].name == "a");
    CHECK(s.task_times[1].seconds > s.task_times[0].seconds);
}

// ---------------------------------------------------------------------------
// run_pipeline

TEST_CASE("run_pipeline: slowest stage sets throughput")
{
    const auto seq = chain_of({sleeper("e1", 10ms), sleeper("e2", 30ms), sleeper("e3", 10ms)});
    SUBCASE("P1")
    {
        Collected c;
        const auto s = run_pipeline(seq, cut(1, 2, 1), counting_source(40), collect(c));
        CHECK(s.frames == 40);
        CHECK(s.throughput_fps == doctest::Approx(1000.0 / 30.0).epsilon(0.15));
    }
    SUBCASE("P3")
    {
        Collected c;
        const auto s = run_pipeline(seq, cut(1, 2, 3), counting_source(120), collect(c));
        CHECK(s.frames == 120);
        CHECK(s.throughput_fps == doctest::Approx(100.0).epsilon(0.15));
    }
}

TEST_CASE("run_pipeline: P1 latency is not below sequential latency")
{
    const auto seq = chain_of({sleeper("e1", 5ms), sleeper("e2", 15ms), sleeper("e3", 5ms)});
    Collected a, b;
    const auto s = run_sequential(seq, counting_source(30), collect(a));
    const auto p = run_pipeline(seq, cut(1, 2, 1), counting_source(30), collect(b));
    CHECK(p.latency_ms_mean >= s.latency_ms_mean);
}

namespace {

// E1 stamps a running counter, E2 does a pure value-dependent amount of work,
// E3 accumulates a running sum.
Sequence stateful_ends()
{
    auto counter = std::make_shared<int>(0);
    auto sum = std::make_shared<long>(0);
    Task e1 = int_task("stamp", [counter](int v) { return v * 1000 + (*counter)++; }, false);
    Task e2 = int_task("work", [](int v) {
        std::uint64_t h = static_cast<std::uint64_t>(v);
        const int spins = (v * 7919) % 3000;
        for (int i = 0; i < spins; ++i)
            h = h * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<int>(h % 100000);
    });
    Task e3 = int_task("accumulate", [sum](int v) {
        *sum += v;
        return static_cast<int>(*sum % 1000003);
    }, false);
    return chain_of({e1, e2, e3});
}

} // namespace

TEST_CASE("run_pipeline: same output as sequential for every replica count and capacity")
{
    Collected ref;
    run_sequential(stateful_ends(), counting_source(300), collect(ref));
    for (std::size_t i = 1; i <= 8; ++i)
        for (std::size_t cap : {1, 2, 4}) {
            CAPTURE(i);
            CAPTURE(cap);
            Collected c;
            run_pipeline(stateful_ends(), cut(1, 2, i, cap), counting_source(300), collect(c));
            CHECK(c.value == ref.value);
            CHECK(c.index == ref.index);
        }
}

TEST_CASE("run_pipeline: randomized durations across clones come back in order")
{
    auto rng = std::make_shared<std::mt19937_64>(72);
    auto delays = std::make_shared<std::vector<int>>();
    for (int k = 0; k < 200; ++k)
        delays->push_back(oracle::uniform_int(*rng, 0, 2000));
    Task e2 = int_task("jitter", [delays](int v) {
        std::this_thread::sleep_for(std::chrono::microseconds((*delays)[v]));
        return v;
    });
    const auto seq = chain_of({int_task("src", [](int v) { return v; }, false), e2,
                               int_task("dst", [](int v) { return v; }, false)});
    Collected c;
    run_pipeline(seq, cut(1, 2, 4), counting_source(200), collect(c));
    std::vector<int> expect(200);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(c.value == expect);
    for (std::size_t k = 0; k < c.index.size(); ++k)
        CHECK(c.index[k] == k);
}

TEST_CASE("run_pipeline: 10000 frames with random durations under capacity 1")
{
    Task e2 = int_task("spin", [](int v) {
        const auto until = Clock::now() + std::chrono::microseconds((v * 2654435761u) % 40);
        while (Clock::now() < until) {
        }
        return v;
    });
    const auto seq = chain_of({int_task("a", [](int v) { return v; }), e2, int_task("b", [](int v) { return v; })});
    for (std::size_t i : {1, 3}) {
        Collected c;
        const auto s = run_pipeline(seq, cut(1, 2, i, 1), counting_source(10000), collect(c));
        CHECK(s.frames == 10000);
        CHECK(std::is_sorted(c.value.begin(), c.value.end()));
        CHECK(c.value.back() == 9999);
    }
}

TEST_CASE("failures name the task and stop the run")
{
    auto failing = [] {
        return chain_of({int_task("read", [](int v) { return v; }), int_task("crunch", [](int v) {
                             if (v == 5)
                                 throw std::runtime_error("boom");
                             return v;
                         }),
                         int_task("write", [](int v) { return v; })});
    };
    auto expect_task_error = [](auto&& run) {
        try {
            run();
            FAIL("no exception");
        } catch (const TaskError& e) {
            CHECK(e.task() == "crunch");
            CHECK(std::string(e.what()).find("boom") != std::string::npos);
        }
    };
    Collected c1, c2, c3;
    expect_task_error([&] { run_sequential(failing(), counting_source(1000), collect(c1)); });
    expect_task_error([&] { run_pipeline(failing(), cut(1, 2, 1), counting_source(1000), collect(c2)); });
    expect_task_error([&] { run_pipeline(failing(), cut(1, 2, 3), counting_source(1000), collect(c3)); });
    CHECK(c1.value.size() == 5);
    CHECK(c2.value.size() <= 5);

    Source bad = []() -> std::optional<std::any> { throw IoError("disk gone"); };
    try {
        run_pipeline(failing(), cut(1, 2, 2), bad, collect(c3));
        FAIL("no exception");
    } catch (const TaskError& e) {
        CHECK(e.task() == "source");
    }
}

// ---------------------------------------------------------------------------
// configuration and replication

TEST_CASE("PipelineConfig validation")
{
    auto id = [](int v) { return v; };
    const auto seq = chain_of({int_task("a", id, false), int_task("b", id), int_task("c", id, false)});
    CHECK_NOTHROW(cut(1, 2, 4).validate(seq));
    CHECK(cut(1, 2, 3).thread_count() == 5);
    CHECK_THROWS_AS(cut(1, 2, 0).validate(seq), ConfigError);
    CHECK_THROWS_AS(cut(1, 2, 1, 0).validate(seq), ConfigError);
    CHECK_THROWS_AS(cut(2, 1, 1).validate(seq), ConfigError);
    CHECK_THROWS_AS(cut(1, 4, 1).validate(seq), ConfigError);
    CHECK_NOTHROW(cut(1, 3, 1).validate(seq));
    CHECK_THROWS_AS(cut(1, 3, 2).validate(seq), ReplicationRefused);
    Collected c;
    CHECK_THROWS_AS(run_pipeline(seq, cut(0, 2, 2), counting_source(3), collect(c)), ReplicationRefused);
}

TEST_CASE("replicate_stage")
{
    SUBCASE("pure stage, four clones with identical outputs")
    {
        const std::vector<Task> stage{int_task("double", [](int v) { return 2 * v; }),
                                      int_task("inc", [](int v) { return v + 1; })};
        const auto clones = replicate_stage(stage, 4);
        REQUIRE(clones.size() == 4);
        Collected ref;
        run_sequential(chain_of(stage), counting_source(20), collect(ref));
        for (const auto& clone : clones) {
            REQUIRE(clone.size() == 2);
            CHECK(clone[0].name == "double");
            Collected c;
            run_sequential(chain_of(clone), counting_source(20), collect(c));
            CHECK(c.value == ref.value);
        }
    }
    SUBCASE("stateful task refused")
    {
        const std::vector<Task> stage{int_task("pure", [](int v) { return v; }),
                                      int_task("delay", [](int v) { return v; }, false)};
        CHECK_THROWS_AS(replicate_stage(stage, 2), ReplicationRefused);
        CHECK_THROWS_AS(replicate_stage(stage, 0), ConfigError);
    }
}

// ---------------------------------------------------------------------------
// BoundedQueue

TEST_CASE("BoundedQueue: FIFO, close and drain")
{
    BoundedQueue<int> q(2);
    CHECK(q.push(1));
    CHECK(q.push(2));
    q.close();
    CHECK_FALSE(q.push(3));
    CHECK(q.pop() == 1);
    CHECK(q.pop() == 2);
    CHECK_FALSE(q.pop().has_value());
}

TEST_CASE("BoundedQueue: producer blocks while full")
{
    BoundedQueue<int> q(1);
    q.push(1);
    std::atomic<bool> pushed{false};
    std::thread producer([&] {
        q.push(2);
        pushed = true;
    });
    std::this_thread::sleep_for(20ms);
    CHECK_FALSE(pushed.load());
    CHECK(q.pop() == 1);
    producer.join();
    CHECK(pushed.load());
    CHECK(q.pop() == 2);
}

TEST_CASE("BoundedQueue: abort wakes a blocked consumer")
{
    BoundedQueue<int> q(1);
    auto f = std::async(std::launch::async, [&] { return q.pop(); });
    std::this_thread::sleep_for(20ms);
    q.abort();
    CHECK_FALSE(f.get().has_value());
    CHECK_FALSE(q.push(1));
}
