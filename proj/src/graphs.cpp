#include "fmdt/graphs.hpp"

#include <charconv>
#include <cmath>

#include "fmdt/error.hpp"

namespace fmdt {

void ChainParams::validate() const
{
    threshold.validate();
    surface.validate();
    knn.validate();
    if (!(sigma_factor >= 0.0))
        throw InvalidArgument("sigma factor must be >= 0");
    if (!(r_min >= 0.0))
        throw InvalidArgument("r_min must be >= 0");
    if (track_min < 1)
        throw InvalidArgument("track confirmation length must be >= 1");
}

void DetectionChain::reset()
{
    state_->tracker.reset();
    state_->delayer = {};
    state_->previous_frame.reset();
    state_->labelings = 0;
}

namespace {

using MaybeFrame = std::optional<GrayFrame>;
using MaybeMask = std::optional<BinaryMask>;
using MaybeCCs = std::optional<CCList>;
using Assocs = std::vector<Association>;
using State = DetectionChain::State;

Binding connect(std::string to_task, std::string to_socket, std::string from_task, std::string from_socket)
{
    return {{std::move(to_task), std::move(to_socket)}, {std::move(from_task), std::move(from_socket)}};
}

Binding bind_stream(std::string to_task, std::string to_socket)
{
    return {{std::move(to_task), std::move(to_socket)}, Endpoint::stream()};
}

// Threshold, label, hysteresis and surface tasks over the stream frame.
void add_pixel_tasks(std::vector<Task>& tasks, std::vector<Binding>& bindings, const ChainParams& p,
                     const std::shared_ptr<State>& state)
{
    const int low = p.threshold.lambda_low;
    const int high = p.threshold.lambda_high;
    const SurfaceParams surface = p.surface;

    tasks.push_back({"binarize", {socket<GrayFrame>("frame")}, {socket<BinaryMask>("mask")}, true,
                     [low](TaskIO& io) { io.out(0, binarize(io.in<GrayFrame>(0), low)); }});
    tasks.push_back({"label",
                     {socket<BinaryMask>("mask"), socket<GrayFrame>("frame")},
                     {socket<LabelMap>("labels"), socket<CCList>("ccs")},
                     true,
                     [state](TaskIO& io) {
                         auto [labels, ccs] = label_and_analyze(io.in<BinaryMask>(0), io.in<GrayFrame>(1));
                         state->labelings.fetch_add(1, std::memory_order_relaxed);
                         io.out(0, std::move(labels));
                         io.out(1, std::move(ccs));
                     }});
    tasks.push_back({"hysteresis", {socket<CCList>("ccs")}, {socket<CCList>("ccs")}, true,
                     [high](TaskIO& io) { io.out(0, filter_hysteresis(io.in<CCList>(0), high)); }});
    tasks.push_back({"surface", {socket<CCList>("ccs")}, {socket<CCList>("ccs")}, true,
                     [surface](TaskIO& io) { io.out(0, filter_surface(io.in<CCList>(0), surface)); }});

    bindings.push_back(bind_stream("binarize", "frame"));
    bindings.push_back(connect("label", "mask", "binarize", "mask"));
    bindings.push_back(bind_stream("label", "frame"));
    bindings.push_back(connect("hysteresis", "ccs", "label", "ccs"));
    bindings.push_back(connect("surface", "ccs", "hysteresis", "ccs"));
}

// Pixel work of version 1 on one frame of the (I(t-1), I(t)) pair. Both
// frames are absent on the first frame of the stream, so nothing is labeled.
void add_pair_pixel_tasks(std::vector<Task>& tasks, std::vector<Binding>& bindings, const ChainParams& p,
                          const std::shared_ptr<State>& state, const std::string& which)
{
    const int low = p.threshold.lambda_low;
    const int high = p.threshold.lambda_high;
    const SurfaceParams surface = p.surface;
    const std::string binarize_name = "binarize_" + which;
    const std::string label_name = "label_" + which;
    const std::string hysteresis_name = "hysteresis_" + which;
    const std::string surface_name = "surface_" + which;

    tasks.push_back({binarize_name, {socket<MaybeFrame>("frame")}, {socket<MaybeMask>("mask")}, true,
                     [low](TaskIO& io) {
                         const auto& f = io.in<MaybeFrame>(0);
                         io.out(0, f ? MaybeMask(binarize(*f, low)) : MaybeMask());
                     }});
    tasks.push_back({label_name,
                     {socket<MaybeMask>("mask"), socket<MaybeFrame>("frame")},
                     {socket<MaybeCCs>("ccs")},
                     true,
                     [state](TaskIO& io) {
                         const auto& m = io.in<MaybeMask>(0);
                         const auto& f = io.in<MaybeFrame>(1);
                         if (!m || !f) {
                             io.out(0, MaybeCCs());
                             return;
                         }
                         auto res = label_and_analyze(*m, *f);
                         state->labelings.fetch_add(1, std::memory_order_relaxed);
                         io.out(0, MaybeCCs(std::move(res.second)));
                     }});
    tasks.push_back({hysteresis_name, {socket<MaybeCCs>("ccs")}, {socket<MaybeCCs>("ccs")}, true,
                     [high](TaskIO& io) {
                         const auto& c = io.in<MaybeCCs>(0);
                         io.out(0, c ? MaybeCCs(filter_hysteresis(*c, high)) : MaybeCCs());
                     }});
    tasks.push_back({surface_name, {socket<MaybeCCs>("ccs")}, {socket<MaybeCCs>("ccs")}, true,
                     [surface](TaskIO& io) {
                         const auto& c = io.in<MaybeCCs>(0);
                         io.out(0, c ? MaybeCCs(filter_surface(*c, surface)) : MaybeCCs());
                     }});

    bindings.push_back(connect(binarize_name, "frame", "pair", which));
    bindings.push_back(connect(label_name, "mask", binarize_name, "mask"));
    bindings.push_back(connect(label_name, "frame", "pair", which));
    bindings.push_back(connect(hysteresis_name, "ccs", label_name, "ccs"));
    bindings.push_back(connect(surface_name, "ccs", hysteresis_name, "ccs"));
}

Registration register_pair(const Assocs& assocs, const CCList& prev, const CCList& cur, double sigma)
{
    Registration reg;
    if (assocs.size() >= 2) {
        try {
            auto two = estimate_two_pass(assocs, prev, cur, sigma);
            reg.motion = two.motion;
            reg.estimated = true;
            reg.assocs = std::move(two.assocs);
            reg.stats = two.stats;
            return reg;
        } catch (const DegenerateGeometry&) {
        }
    }
    // Not enough geometry for a fit: compare positions without compensation.
    reg.assocs = register_residuals(assocs, prev, cur, reg.motion);
    for (auto& a : reg.assocs)
        a.inlier = InlierState::inlier;
    reg.stats.n_inliers = reg.assocs.size();
    if (!reg.assocs.empty()) {
        double sum = 0.0;
        for (const auto& a : reg.assocs)
            sum += *a.residual;
        reg.stats.mean_residual = sum / static_cast<double>(reg.assocs.size());
        double var = 0.0;
        for (const auto& a : reg.assocs)
            var += (*a.residual - reg.stats.mean_residual) * (*a.residual - reg.stats.mean_residual);
        reg.stats.std_residual = std::sqrt(var / static_cast<double>(reg.assocs.size()));
    }
    return reg;
}

// Matching, registration, classification and tracking over the CCs of
// I(t-1) and I(t), read from the given producer sockets. Either list is
// absent on the first frame.
void add_association_tasks(std::vector<Task>& tasks, std::vector<Binding>& bindings, const ChainParams& p,
                           const std::shared_ptr<State>& state, const Endpoint& prev, const Endpoint& cur)
{
    const KnnParams knn = p.knn;
    const double sigma = p.sigma_factor;
    const double r_min = p.r_min;

    tasks.push_back({"knn",
                     {socket<MaybeCCs>("prev"), socket<MaybeCCs>("cur")},
                     {socket<Assocs>("assocs")},
                     true,
                     [knn](TaskIO& io) {
                         const auto& prev = io.in<MaybeCCs>(0);
                         const auto& cur = io.in<MaybeCCs>(1);
                         io.out(0, prev && cur ? match_knn(*prev, *cur, knn) : Assocs());
                     }});
    tasks.push_back({"motion",
                     {socket<Assocs>("assocs"), socket<MaybeCCs>("prev"), socket<MaybeCCs>("cur")},
                     {socket<Registration>("registration")},
                     true,
                     [sigma](TaskIO& io) {
                         const auto& prev = io.in<MaybeCCs>(1);
                         const auto& cur = io.in<MaybeCCs>(2);
                         if (!prev || !cur) {
                             io.out(0, Registration());
                             return;
                         }
                         io.out(0, register_pair(io.in<Assocs>(0), *prev, *cur, sigma));
                     }});
    tasks.push_back({"classify", {socket<Registration>("registration")}, {socket<Assocs>("moving")}, true,
                     [r_min](TaskIO& io) {
                         const auto& reg = io.in<Registration>(0);
                         const auto cls = classify_motion(reg.assocs, r_min);
                         Assocs moving;
                         for (std::size_t i = 0; i < cls.size(); ++i)
                             if (cls[i] == MotionClass::moving)
                                 moving.push_back(reg.assocs[i]);
                         io.out(0, std::move(moving));
                     }});
    tasks.push_back({"track",
                     {socket<GrayFrame>("frame"), socket<Assocs>("moving"), socket<MaybeCCs>("cur"),
                      socket<Registration>("registration")},
                     {socket<FrameReport>("report")},
                     false,
                     [state](TaskIO& io) {
                         static const CCList none;
                         const auto& frame = io.in<GrayFrame>(0);
                         const auto& moving = io.in<Assocs>(1);
                         const auto& maybe_cur = io.in<MaybeCCs>(2);
                         const CCList& cur = maybe_cur ? *maybe_cur : none;
                         state->tracker.update(frame.t, moving, cur);
                         FrameReport rep;
                         rep.t = frame.t;
                         rep.n_ccs = cur.size();
                         rep.registration = io.in<Registration>(3);
                         rep.n_assocs = rep.registration.assocs.size();
                         rep.moving = moving;
                         io.out(0, std::move(rep));
                     }});

    bindings.push_back({{"knn", "prev"}, prev});
    bindings.push_back({{"knn", "cur"}, cur});
    bindings.push_back(connect("motion", "assocs", "knn", "assocs"));
    bindings.push_back({{"motion", "prev"}, prev});
    bindings.push_back({{"motion", "cur"}, cur});
    bindings.push_back(connect("classify", "registration", "motion", "registration"));
    bindings.push_back(bind_stream("track", "frame"));
    bindings.push_back(connect("track", "moving", "classify", "moving"));
    bindings.push_back({{"track", "cur"}, cur});
    bindings.push_back(connect("track", "registration", "motion", "registration"));
}

SequenceIO chain_io()
{
    return {typeid(GrayFrame), {{"track", "report"}}};
}

} // namespace

DetectionChain build_v1(const ChainParams& params)
{
    params.validate();
    auto state = std::make_shared<State>(params.track_min);
    std::vector<Task> tasks;
    std::vector<Binding> bindings;

    // E1 pairing: I(t-1) and I(t) are both emitted once a predecessor exists.
    tasks.push_back({"pair", {socket<GrayFrame>("frame")}, {socket<MaybeFrame>("prev"), socket<MaybeFrame>("cur")},
                     false, [state](TaskIO& io) {
                         const auto& f = io.in<GrayFrame>(0);
                         if (state->previous_frame) {
                             io.out(0, state->previous_frame);
                             io.out(1, MaybeFrame(f));
                         } else {
                             io.out(0, MaybeFrame());
                             io.out(1, MaybeFrame());
                         }
                         state->previous_frame = f;
                     }});
    bindings.push_back(bind_stream("pair", "frame"));
    add_pair_pixel_tasks(tasks, bindings, params, state, "prev");
    add_pair_pixel_tasks(tasks, bindings, params, state, "cur");
    add_association_tasks(tasks, bindings, params, state, {"surface_prev", "ccs"}, {"surface_cur", "ccs"});

    auto seq = build_sequence(std::move(tasks), bindings, chain_io());
    return DetectionChain(ChainVersion::v1, params, std::move(seq), std::move(state));
}

DetectionChain build_v2(const ChainParams& params)
{
    params.validate();
    auto state = std::make_shared<State>(params.track_min);
    std::vector<Task> tasks;
    std::vector<Binding> bindings;

    add_pixel_tasks(tasks, bindings, params, state);

    // Delayer: load hands over I(t-1)'s CCs next to I(t)'s, then save keeps
    // I(t)'s for t+1.
    // Declaration order fixes load before save.
    tasks.push_back({"delayer_load", {socket<CCList>("ccs")}, {socket<MaybeCCs>("prev"), socket<MaybeCCs>("cur")},
                     false, [state](TaskIO& io) {
                         io.out(0, state->delayer.ccs);
                         io.out(1, MaybeCCs(io.in<CCList>(0)));
                     }});
    tasks.push_back({"delayer_save", {socket<CCList>("ccs"), socket<GrayFrame>("frame")}, {}, false,
                     [state](TaskIO& io) {
                         state->delayer.ccs = io.in<CCList>(0);
                         state->delayer.t = io.in<GrayFrame>(1).t;
                     }});
    bindings.push_back(connect("delayer_load", "ccs", "surface", "ccs"));
    bindings.push_back(connect("delayer_save", "ccs", "surface", "ccs"));
    bindings.push_back(bind_stream("delayer_save", "frame"));

    add_association_tasks(tasks, bindings, params, state, {"delayer_load", "prev"}, {"delayer_load", "cur"});

    auto seq = build_sequence(std::move(tasks), bindings, chain_io());
    return DetectionChain(ChainVersion::v2, params, std::move(seq), std::move(state));
}

DetectionChain build_chain(ChainVersion version, const ChainParams& params)
{
    return version == ChainVersion::v1 ? build_v1(params) : build_v2(params);
}

PipelineConfig stage_cut(const Sequence& seq, ChainVersion version, std::size_t replicas,
                         std::size_t buffer_capacity)
{
    PipelineConfig cfg;
    if (version == ChainVersion::v1) {
        cfg.e2_begin = seq.index_of("binarize_prev");
        cfg.e3_begin = seq.index_of("knn");
    } else {
        cfg.e2_begin = seq.index_of("binarize");
        cfg.e3_begin = seq.index_of("delayer_load");
    }
    cfg.replicas = replicas;
    cfg.buffer_capacity = buffer_capacity;
    cfg.validate(seq);
    return cfg;
}

ExecutionMode ExecutionMode::parse(std::string_view text)
{
    ExecutionMode m;
    if (text == "S")
        return m;
    if (text.size() < 2 || text.front() != 'P')
        throw ConfigError("mode must be S or P<i>, got '" + std::string(text) + "'");
    long long i = 0;
    const char* first = text.data() + 1;
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, i);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("mode must be S or P<i>, got '" + std::string(text) + "'");
    if (i < 1)
        throw ConfigError("replication count must be >= 1");
    m.pipelined = true;
    m.replicas = static_cast<std::size_t>(i);
    return m;
}

std::string ExecutionMode::label() const
{
    return pipelined ? "P" + std::to_string(replicas) : "S";
}

FrameSource frames_source(const std::vector<GrayFrame>& frames)
{
    auto next = std::make_shared<std::size_t>(0);
    return [&frames, next]() -> std::optional<GrayFrame> {
        if (*next >= frames.size())
            return std::nullopt;
        return frames[(*next)++];
    };
}

ChainRun run_chain(DetectionChain& chain, const FrameSource& source, const ExecutionMode& mode,
                   const RunOptions& opts)
{
    chain.reset();
    ChainRun run;
    Source src = [&source]() -> std::optional<std::any> {
        auto f = source();
        if (!f)
            return std::nullopt;
        return std::any(std::move(*f));
    };
    Sink sink = [&run](StreamItem&& item) {
        run.reports.push_back(std::any_cast<FrameReport>(std::move(item.values.at(0))));
    };
    if (mode.pipelined) {
        const auto cfg = stage_cut(chain.sequence(), chain.version(), mode.replicas, mode.buffer_capacity);
        run.stats = run_pipeline(chain.sequence(), cfg, src, sink);
    } else {
        run.stats = run_sequential(chain.sequence(), src, sink, opts);
    }
    run.tracks = chain.finalize();
    return run;
}

StreamStats bench_chain(DetectionChain& chain, const std::vector<GrayFrame>& frames, const ExecutionMode& mode,
                        double seconds)
{
    if (frames.empty())
        throw InvalidArgument("bench needs at least one frame");
    if (!(seconds > 0.0))
        throw ConfigError("bench duration must be > 0");
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
    auto next = std::make_shared<std::uint64_t>(0);
    FrameSource looped = [&frames, next, deadline]() -> std::optional<GrayFrame> {
        if (Clock::now() >= deadline)
            return std::nullopt;
        GrayFrame f = frames[*next % frames.size()];
        f.t = (*next)++;
        return f;
    };
    return run_chain(chain, looped, mode).stats;
}

} // namespace fmdt
