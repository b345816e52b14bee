// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "sgl/cli.hpp"
#include "sgl/dynamics.hpp"
#include "sgl/service.hpp"
#include "support.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <thread>

using namespace sgl;
using sgl::test::Gen;
using sgl::test::make_node;
using sgl::test::relation_holds;
using sgl::test::ScriptedBackend;
using Rules = std::vector<ScriptedBackend::Rule>;
using Json = nlohmann::json;

namespace {

// Tolerances and budgets.
constexpr int kCasesPerKind = 50;
constexpr double kNearReach = 2.0;          // starts within this many D of the reference, per axis
constexpr double kConvergenceBudgetS = 1.0;
constexpr int kExclusivityCases = 200;
constexpr int kRigidSubgraphs = 100;
constexpr double kRigidRelTol = 1e-9;
constexpr int kPartitionCases = 1000;
constexpr int kPartitionMaxNodes = 32;
constexpr const char* kMontageGolden = "a6e6a5befa881c81898aa15d99e1de63ce2150975f36c69ddd169612b6763a6a";

/// Collects failed checks for one criterion.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok)
            failures_.push_back(what);
    }
    bool ok() const { return failures_.empty(); }
    std::string summary() const {
        if (ok())
            return std::to_string(total_) + " checks";
        std::string s = std::to_string(failures_.size()) + "/" + std::to_string(total_) + " checks failed: ";
        for (std::size_t i = 0; i < failures_.size() && i < 3; ++i)
            s += (i ? "; " : "") + failures_[i];
        if (failures_.size() > 3)
            s += "; ...";
        return s;
    }

private:
    int total_ = 0;
    std::vector<std::string> failures_;
};

struct Outcome {
    bool ok = false;
    std::string detail;
};

Outcome finish(const Checks& c, const std::string& extra = {}) {
    return {c.ok(), c.summary() + (extra.empty() ? "" : ", " + extra)};
}

template <class F>
std::optional<ErrorCode> code_of(F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

const ViewCapturer& capturer() {
    static const ViewCapturer c;
    return c;
}

// ---------------------------------------------------------------------------

Outcome oracle_convergence() {
    Gen gen(2024);
    OracleScorer oracle;
    Checks c;
    double seconds = 0.0;
    int worst = 0;
    for (RelationKind kind : kAllRelationKinds) {
        for (int i = 0; i < kCasesPerKind; ++i) {
            const SceneGraph g = sgl::test::near_pair(gen, kind, kNearReach);
            const RelationEdge e = g.edges().front();
            const auto t0 = std::chrono::steady_clock::now();
            const auto r = optimize_edge(g, e, oracle, capturer());
            seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const std::string tag = std::string(to_string(kind)) + " #" + std::to_string(i);
            c.expect(r.trace.status == TraceStatus::Converged, tag + " did not converge");
            c.expect(static_cast<int>(r.trace.iterations.size()) <= 10, tag + " exceeded 10 iterations");
            std::string why;
            const bool holds = relation_holds(r.graph, e, &why);
            c.expect(holds, tag + ": " + why);
            worst = std::max(worst, static_cast<int>(r.trace.iterations.size()));
        }
    }
    c.expect(seconds < kConvergenceBudgetS, "runtime over budget");
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d kinds x %d starts within %.0f D, max %d iterations, %.3f s", 7, kCasesPerKind,
                  kNearReach, worst, seconds);
    return finish(c, buf);
}

Outcome hierarchy_ablation() {
    const SceneGraph g = sgl::test::hierarchy_fixture();
    OracleScorer oracle;
    Checks c;
    const auto full = optimize_scene(g, oracle, capturer());
    c.expect(g.size() == 5 && full.report.subgraphs.size() == 2, "fixture is not 5 nodes in 2 subgraphs");
    c.expect(full.report.energy_after.total == 0.0, "full pipeline E_scene = " +
                                                        std::to_string(full.report.energy_after.total));

    OptimizerConfig no_edges;
    no_edges.edge_optimization = false;
    const auto ne = optimize_scene(g, oracle, capturer(), no_edges);
    c.expect(ne.report.energy_after.total > 0.0, "E_scene is 0 without edge optimization");

    OptimizerConfig no_placement;
    no_placement.placement_refinement = false;
    const auto np = optimize_scene(g, oracle, capturer(), no_placement);
    c.expect(np.report.placement_fallback, "placement did not use the fallback grid");
    c.expect(np.report.subgraphs.size() == np.report.initial_anchors.size(), "anchor count mismatch");
    for (std::size_t k = 0; k < np.report.subgraphs.size() && k < np.report.initial_anchors.size(); ++k)
        c.expect(np.report.subgraphs[k].anchor == np.report.initial_anchors[k],
                 "anchor " + std::to_string(k) + " moved without placement refinement");
    char buf[160];
    std::snprintf(buf, sizeof buf, "E_scene full %.3g, no-edge %.3g, no-placement anchors fixed", full.report.energy_after.total,
                  ne.report.energy_after.total);
    return finish(c, buf);
}

Outcome in_node_exclusivity() {
    Gen gen(3003);
    OracleScorer oracle;
    Checks c;
    int cases = 0;
    while (cases < kExclusivityCases) {
        const SceneGraph g = sgl::test::random_graph(gen, gen.integer(2, 12), 1.2);
        if (g.edges().empty())
            continue;
        ++cases;
        const RelationEdge e = gen.pick(g.edges());
        bool clean = true;
        auto same = [](const FeatureVector& a, const FeatureVector& b) {
            return std::memcmp(&a, &b, sizeof(FeatureVector)) == 0;
        };
        const auto r = optimize_edge(g, e, oracle, capturer(), {}, [&](const ProgressEvent&, const SceneGraph& now) {
            for (const auto& n : g.nodes())
                clean = clean && (n.id == e.src || same(now.node(n.id).feature, n.feature));
        });
        for (const auto& n : g.nodes())
            clean = clean && (n.id == e.src || same(r.graph.node(n.id).feature, n.feature));
        clean = clean && r.graph.edges() == g.edges();
        c.expect(clean, "case " + std::to_string(cases) + " mutated a node other than " + e.src);
    }
    return finish(c, std::to_string(cases) + " random graphs, bitwise");
}

Outcome rigidity() {
    Gen gen(4004);
    OracleScorer oracle;
    Checks c;
    int checked = 0;
    double worst = 0.0;
    while (checked < kRigidSubgraphs) {
        const SceneGraph g = sgl::test::random_graph(gen, gen.integer(3, 10), 0.7);
        const auto parts = partition_subgraphs(g);
        if (parts.size() < 2)
            continue;
        std::vector<FeatureVector> anchors;
        for (std::size_t k = 0; k < parts.size(); ++k)
            anchors.push_back({gen.uniform(-5, 5), gen.uniform(-5, 5), gen.uniform(-1, 1),
                               std::exp(gen.uniform(-0.5, 0.5)), gen.uniform(-180, 179)});
        const auto r = place_subgraphs(g, parts, anchors, oracle, capturer());
        for (const auto& p : r.subgraphs) {
            if (checked >= kRigidSubgraphs)
                break;
            ++checked;
            const double k = p.anchor.s;
            for (std::size_t i = 0; i < p.member_ids.size(); ++i) {
                for (std::size_t j = i + 1; j < p.member_ids.size(); ++j) {
                    const auto& a0 = g.node(p.member_ids[i]).feature;
                    const auto& b0 = g.node(p.member_ids[j]).feature;
                    const auto& a1 = r.graph.node(p.member_ids[i]).feature;
                    const auto& b1 = r.graph.node(p.member_ids[j]).feature;
                    const double before = std::hypot(a0.x - b0.x, a0.y - b0.y, a0.z - b0.z);
                    const double after = std::hypot(a1.x - b1.x, a1.y - b1.y, a1.z - b1.z);
                    const double rel = std::fabs(after - k * before) / std::max(1.0, k * before);
                    worst = std::max(worst, rel);
                    c.expect(rel <= kRigidRelTol, "subgraph " + std::to_string(checked) + " distorted");
                }
            }
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d subgraphs, worst relative error %.2e", checked, worst);
    return finish(c, buf);
}

Outcome partition_matches_union_find() {
    Gen gen(5005);
    Checks c;
    for (int i = 0; i < kPartitionCases; ++i) {
        const auto g = sgl::test::random_graph(gen, gen.integer(0, kPartitionMaxNodes), gen.uniform(0.0, 1.5));
        std::vector<std::set<NodeId>> bfs;
        for (const auto& p : partition_subgraphs(g))
            bfs.emplace_back(p.member_ids.begin(), p.member_ids.end());
        c.expect(bfs == sgl::test::components_by_union_find(g), "case " + std::to_string(i));
    }
    return finish(c, std::to_string(kPartitionCases) + " graphs of 0.." + std::to_string(kPartitionMaxNodes) + " nodes");
}

Outcome parser_goldens() {
    Checks c;
    const auto r = parse_graph_reply(sgl::test::kFruitGraphReply);
    c.expect(r.labels == std::vector<std::string>{"apple", "banana", "toy", "bed"}, "graph labels");
    const auto g = graph_from_reply(r, sgl::test::kFruitScene);
    c.expect(g.edges() == std::vector<RelationEdge>{{"apple", "banana", RelationKind::Left},
                                                    {"toy", "bed", RelationKind::Up}},
             "graph edges");
    c.expect(r.warnings.size() == 1 && r.warnings[0].find("\"on\"") != std::string::npos, "\"on\" warning");
    c.expect(g.node("toy").node_prompt == "a colorful toy car", "node prompt");

    const auto s = parse_scores(
        "The score-1 is: 40\nThe score-2 is: -12.5\nThe score-3 is: 0\nThe score-4 is: 7\nThe score-5 is: -10");
    c.expect(s.values == std::array<double, 5>{40, -12.5, 0, 7, -10}, "five-anchor reply");
    const auto clamped = parse_scores(
        "The score-1 is: 240\nThe score-2 is: 0\nThe score-3 is: 0\nThe score-4 is: 0\nThe score-5 is: 0");
    c.expect(clamped.scale() == 100.0, "score-1 clamp");
    c.expect(clamp_scores({150, -20, 0, 99, -400}).scores.values == std::array<double, 5>{100, -20, 0, 99, -100},
             "clamp example");

    c.expect(code_of([] { parse_scores("The score-1 is: 1\nThe score-2 is: 2\nThe score-3 is: 3\nThe score-4 is: 4"); }) ==
                 ErrorCode::Parse,
             "four anchors");
    for (const char* bad : {"nodes = [a, b], node-prompts = [x, y]", "node-prompts = [x]\nedges = []",
                            "nodes = [a, b], node-prompts = [x]\nedges = []",
                            "nodes = [a, b], node-prompts = [x, y]\nedges = [a left c]",
                            "nodes = [], node-prompts = []\nedges = []"})
        c.expect(code_of([&] { parse_graph_reply(bad); }) == ErrorCode::Parse, std::string("malformed: ") + bad);

    c.expect(sha256_hex(kPrompt1) == "a819aac3cb48ce129ada7a46d70dc3b4df8f062c0a44ae24a8e5a1751f1621f3",
             "Prompt 1 golden");
    c.expect(sha256_hex(kPrompt2) == "8c32d0efb198b6c4fe0819fa52a8f9c2a5685622c581bce8451ebae443e545cc",
             "Prompt 2 golden");
    return finish(c);
}

Outcome determinism() {
    namespace fs = std::filesystem;
    Checks c;
    const auto dir = fs::temp_directory_path() / "sgl_acceptance";
    fs::create_directories(dir);
    const auto session = (dir / "pair.jsonl").string();
    const Rules rules{
        {"The target sentence is: ",
         "nodes = [apple, banana], node-prompts = [a red apple, a yellow banana]\nedges = [apple left banana]"},
        {"(apple)?", "8 cm in width, 8 cm in length and 9 cm in height"},
        {"(banana)?", "20 cm in width, 5 cm in length and 4 cm in height"},
    };
    std::ostringstream sink;
    CliHooks rec;
    rec.transport = std::make_shared<sgl::test::ScriptedTransport>(rules);
    const std::string prompt = "an apple left of a banana";
    c.expect(run_cli({"generate", "--prompt", prompt, "--out", (dir / "rec.json").string(), "--record", session},
                     sink, sink, rec) == 0,
             "recording run failed");
    std::string first;
    for (int k = 0; k < 2; ++k) {
        const auto out = (dir / ("replay" + std::to_string(k) + ".json")).string();
        c.expect(run_cli({"generate", "--prompt", prompt, "--out", out, "--replay", session}, sink, sink) == 0,
                 "replay run failed");
        const std::string bytes = read_file(out);
        if (k == 0)
            first = bytes;
        else
            c.expect(bytes == first, "replayed scene files differ");
    }
    c.expect(load_scene(dir / "replay0.json").graph.size() == 2, "replayed scene lacks 2 nodes");

    SceneGraph g("golden");
    g.add_node(make_node("apple", {0, 0, 0, 1, 15}, {0.5, 0.4, 0.6}));
    g.add_node(make_node("banana", {1.2, 0.3, 0, 1, -30}, {0.8, 0.3, 0.3}));
    g.add_node(make_node("bed", {0, 2, -0.5, 1.5, 0}, {1.6, 2.0, 0.5}));
    const std::vector<NodeId> all{"apple", "banana", "bed"};
    const auto a = encode_ppm(render_montage(g, all, all, CameraRig::standard()).pixels);
    const auto b = encode_ppm(render_montage(g, all, all, CameraRig::standard()).pixels);
    c.expect(a == b, "montage differs between runs");
    c.expect(sha256_hex(a) == kMontageGolden, "montage golden hash changed");
    return finish(c, "replay x2 byte-identical, montage golden");
}

SceneGraph laid_out_fruit() {
    SceneGraph g(sgl::test::kFruitScene);
    g.add_node(make_node("apple", {}, {0.08, 0.08, 0.09}));
    g.add_node(make_node("banana", {}, {0.20, 0.05, 0.04}));
    g.add_node(make_node("toy", {}, {0.30, 0.15, 0.12}));
    g.add_node(make_node("bed", {}, {1.60, 2.00, 0.50}));
    g.add_edge({"apple", "banana", RelationKind::Left});
    g.add_edge({"toy", "bed", RelationKind::Up});
    OracleScorer oracle;
    return optimize_scene(g, oracle, capturer()).graph;
}

Outcome dynamic_modification() {
    Checks c;
    OracleScorer oracle;
    const SceneGraph g = laid_out_fruit();
    ScriptedBackend backend(Rules{
        {"The user asks: remove the banana", "action = remove\nnode = banana"},
        {"The user asks: add a lamp on the table", "action = add\nnode = lamp\nedges = [lamp on table]"},
        {"The user asks: move the apple", "action = reposition\nnode = apple\noffset = [1, 0, 0]"},
        {"The user asks: paint", "action = none\nnode = apple"},
        {"(lamp)?", "40 cm in width, 40 cm in length and 90 cm in height"},
        {"transformation", "states = [toy: beside the bed]\nedges = [toy left bed]"},
    });

    // Remove.
    const auto rm = apply_modification(g, plan_modification(g, "remove the banana", backend), oracle, capturer());
    std::size_t iters = 0;
    for (const auto& t : rm.report.traces)
        iters += t.iterations.size();
    c.expect(!rm.graph.contains("banana") && iters == 0, "remove: isolated apple was re-optimized");
    for (const auto& n : rm.graph.nodes())
        c.expect(n.feature == g.node(n.id).feature, "remove: " + n.id + " moved");

    // Add.
    SceneGraph table("a table");
    table.add_node(make_node("table", {}, {1.2, 0.8, 0.75}));
    const auto add_plan = plan_modification(table, "add a lamp on the table", backend);
    c.expect(add_plan.edges == std::vector<RelationEdge>{{"lamp", "table", RelationKind::Up}}, "add: lamp Up table");
    const auto added = apply_modification(table, add_plan, oracle, capturer());
    std::string why;
    const bool lamp_holds = sgl::test::all_relations_hold(added.graph, &why);
    c.expect(lamp_holds, "add: " + why);

    // Reposition, default configuration.
    const auto moved = apply_modification(g, plan_modification(g, "move the apple one metre along x", backend), oracle,
                                          capturer());
    why.clear();
    const bool left_holds = relation_holds(moved.graph, {"apple", "banana", RelationKind::Left}, &why);
    c.expect(left_holds,
             "reposition +1 m: apple Left banana violated after " +
                 std::to_string(moved.report.traces.empty() ? 0 : moved.report.traces[0].iterations.size()) +
                 " iterations (" + why + ")");

    c.expect(code_of([&] { plan_modification(g, "paint the apple red", backend); }) == ErrorCode::InvalidArgument,
             "paint request accepted");

    // Trajectory.
    const auto traj = generate_trajectory(g, "the toy falls off the bed", backend, oracle, capturer(), {}, 5);
    const auto& kf = traj.trajectory.keyframes;
    c.expect(kf.size() == 5, "trajectory keyframe count");
    if (!kf.empty()) {
        SceneGraph start = g;
        start.set_edge({"toy", "bed", RelationKind::Left});
        c.expect(kf.front().t == 0.0 && kf.back().t == 1.0, "trajectory endpoints t");
        for (const auto& n : start.nodes())
            c.expect(std::memcmp(&kf.front().graph.node(n.id).feature, &n.feature, sizeof(FeatureVector)) == 0,
                     "trajectory start differs from the start graph");
        why.clear();
        const bool end_holds = sgl::test::all_relations_hold(kf.back().graph, &why);
        c.expect(end_holds, "trajectory end: " + why);
        for (std::size_t i = 1; i < kf.size(); ++i) {
            c.expect(kf[i - 1].t < kf[i].t, "t not strictly increasing");
            c.expect(kf[i].graph.edges() == kf[0].graph.edges(), "keyframe structure differs");
        }
    }
    const FeatureVector y0{0, 0, 0, 1, 170}, y1{0, 0, 0, 1, -170};
    c.expect(std::fabs(std::fabs(interpolate(y0, y1, 0.5).r) - 180.0) < 1e-9, "yaw not shortest arc");
    return finish(c);
}

/// Oracle scorer that blocks until released.
class GatedScorer final : public Scorer {
public:
    ScoreVector score(const ScoringRequest& r) override {
        std::unique_lock lock(mu_);
        ++waiting_;
        cv_.notify_all();
        cv_.wait(lock, [this] { return open_; });
        return oracle_.score(r);
    }
    std::string name() const override { return "gated"; }
    void wait_for_caller() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return waiting_ > 0; });
    }
    void open() {
        std::lock_guard lock(mu_);
        open_ = true;
        cv_.notify_all();
    }

private:
    OracleScorer oracle_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool open_ = false;
    int waiting_ = 0;
};

Outcome service_contract() {
    Checks c;
    EngineConfig cfg;
    cfg.quadrant_size = 64;
    auto gate = std::make_shared<GatedScorer>();
    auto backend = std::make_shared<ScriptedBackend>(Rules{
        {"The user asks: nudge", "action = reposition\nnode = apple\noffset = [0.05, 0, 0]"},
        {"The user asks: remove", "action = remove\nnode = banana"},
    });
    SceneGraph g("an apple left of a banana");
    g.add_node(make_node("apple", {0.05, 0.02, 0, 1, 0}, {0.08, 0.08, 0.09}));
    g.add_node(make_node("banana", {}, {0.20, 0.05, 0.04}));
    g.add_edge({"apple", "banana", RelationKind::Left});
    SceneService service(Engine(cfg, backend, gate), g);
    const int port = service.bind("127.0.0.1", 0);
    service.start();
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(10, 0);

    auto wait_idle = [&] {
        for (int i = 0; i < 4000 && service.busy(); ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
    };
    auto post = [&](const char* path, const Json& body) {
        auto res = client.Post(path, body.dump(), "application/json");
        return res ? res->status : -1;
    };
    auto revision = [&] {
        auto res = client.Get("/api/scene");
        return res ? Json::parse(res->body).at("revision").get<std::uint64_t>() : 0;
    };

    // SSE subscriber.
    std::mutex mu;
    std::string stream;
    std::thread reader([&] {
        httplib::Client sse("127.0.0.1", port);
        sse.set_read_timeout(10, 0);
        sse.Get("/api/events", [&](const char* data, std::size_t len) {
            std::lock_guard lock(mu);
            stream.append(data, len);
            return stream.find("event: revision") == std::string::npos;
        });
    });
    for (int i = 0; i < 2000 && service.events().subscriber_count() == 0; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    c.expect(service.events().subscriber_count() == 1, "SSE subscriber did not attach");

    const auto r0 = revision();
    c.expect(r0 == 1, "fresh revision is not 1");
    c.expect(post("/api/modify", {{"prompt", "nudge the apple"}}) == 202, "first modify not accepted");
    gate->wait_for_caller();
    c.expect(post("/api/modify", {{"prompt", "nudge the apple"}}) == 409, "concurrent modify not rejected with 409");
    c.expect(revision() == r0, "read during job changed the revision");
    gate->open();
    wait_idle();
    reader.join();
    const auto r1 = revision();
    c.expect(r1 > r0, "revision did not increase after a committed job");
    std::size_t progress = 0;
    for (auto p = stream.find("event: progress"); p != std::string::npos; p = stream.find("event: progress", p + 1))
        ++progress;
    const auto job = service.last_job();
    c.expect(job && job->status == "done", "job did not finish");
    c.expect(job && progress == job->iterations && progress > 0,
             "progress events " + std::to_string(progress) + " vs iterations " +
                 std::to_string(job ? job->iterations : 0));

    c.expect(post("/api/modify", {{"prompt", "remove the banana"}}) == 202, "second job not accepted");
    wait_idle();
    const auto r2 = revision();
    c.expect(r2 > r1, "revision did not increase after the second job");
    for (int i = 0; i < 3; ++i)
        client.Get("/api/energy");
    c.expect(revision() == r2, "reads changed the revision");
    service.stop();
    char buf[128];
    std::snprintf(buf, sizeof buf, "revisions %llu -> %llu -> %llu, %zu progress events",
                  static_cast<unsigned long long>(r0), static_cast<unsigned long long>(r1),
                  static_cast<unsigned long long>(r2), progress);
    return finish(c, buf);
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"oracle convergence", oracle_convergence},
        {"hierarchy ablation", hierarchy_ablation},
        {"in-node exclusivity", in_node_exclusivity},
        {"rigid placement", rigidity},
        {"partition vs union-find", partition_matches_union_find},
        {"parser goldens", parser_goldens},
        {"determinism", determinism},
        {"dynamic modification", dynamic_modification},
        {"service contract", service_contract},
    };
    int failed = 0;
    int index = 0;
    for (const auto& [name, run] : criteria) {
        ++index;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& ex) {
            o = {false, std::string("threw: ") + ex.what()};
        }
        failed += !o.ok;
        std::printf("%s [%d] %s: %s\n", o.ok ? "PASS" : "FAIL", index, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed;
}
