// Sequential reference against the pipelined runtime, plus a per-task time
// table for both chain versions. Usage: fmdt_bench [seconds-per-run] [max-i]
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>

#include "fmdt/graphs.hpp"
#include "fmdt/seqio.hpp"

using namespace fmdt;

namespace {

void task_table(const std::vector<GrayFrame>& frames)
{
    std::map<std::string, std::pair<double, double>> rows; // name -> (v1, v2) ms/frame
    std::vector<std::string> order;
    double total[2] = {0.0, 0.0};
    for (int v = 0; v < 2; ++v) {
        auto chain = build_chain(v == 0 ? ChainVersion::v1 : ChainVersion::v2, ChainParams{});
        const auto run = run_chain(chain, frames_source(frames), ExecutionMode{}, RunOptions{true});
        for (const auto& tt : run.stats.task_times) {
            const double ms = 1e3 * tt.seconds / static_cast<double>(frames.size());
            if (!rows.count(tt.name)) {
                order.push_back(tt.name);
                rows[tt.name] = {-1.0, -1.0};
            }
            (v == 0 ? rows[tt.name].first : rows[tt.name].second) = ms;
            total[v] += ms;
        }
    }
    std::printf("%-18s %10s %10s\n", "task", "v1 ms/fr", "v2 ms/fr");
    auto cell = [](double ms) { return ms < 0.0 ? std::string("-") : std::to_string(ms).substr(0, 6); };
    for (const auto& name : order)
        std::printf("%-18s %10s %10s\n", name.c_str(), cell(rows[name].first).c_str(), cell(rows[name].second).c_str());
    std::printf("%-18s %10.4f %10.4f  (v2/v1 = %.3f)\n\n", "total", total[0], total[1], total[1] / total[0]);
}

} // namespace

int main(int argc, char** argv)
{
    const double secs = argc > 1 ? std::atof(argv[1]) : 3.0;
    const std::size_t max_i = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 4;

    const auto frames = generate(random_scene(7, 640, 480, 40, 2, 2.0)).frames;
    std::printf("host threads: %u, %zu frames 640x480, %.1f s per run\n\n", std::thread::hardware_concurrency(),
                frames.size(), secs);

    task_table(frames);

    std::printf("%-4s %-4s %12s %12s %12s\n", "ver", "mode", "D (fps)", "L mean ms", "L p99 ms");
    for (auto v : {ChainVersion::v1, ChainVersion::v2}) {
        auto chain = build_chain(v, ChainParams{});
        std::vector<ExecutionMode> modes{{false, 1, 1}};
        for (std::size_t i = 1; i <= max_i; ++i)
            modes.push_back({true, i, 1});
        for (const auto& m : modes) {
            const auto s = bench_chain(chain, frames, m, secs);
            std::printf("v%-3d %-4s %12.2f %12.3f %12.3f\n", static_cast<int>(v), m.label().c_str(),
                        s.throughput_fps, s.latency_ms_mean, s.latency_ms_p99);
        }
    }
    return 0;
}
