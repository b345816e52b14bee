#pragma once

// Test-side helpers. The band checker and the union-find below are written
// independently of the library code they are used to check.

#include "sgl/graph.hpp"
#include "sgl/llm.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace sgl::test {

// ---------------------------------------------------------------------------
// Seeded generators

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(integer(0, static_cast<int>(v.size()) - 1))];
    }

    RelationKind kind() { return kAllRelationKinds[static_cast<std::size_t>(integer(0, 6))]; }

    FeatureVector feature(double spread = 3.0) {
        return {uniform(-spread, spread), uniform(-spread, spread), uniform(-spread, spread),
                std::exp(uniform(-0.7, 0.7)), uniform(-180.0, 179.999)};
    }

    Extent3 extent() { return {uniform(0.2, 1.5), uniform(0.2, 1.5), uniform(0.2, 1.5)}; }

    ObjectNode node(const std::string& id) {
        ObjectNode n;
        n.id = id;
        n.label = id;
        n.node_prompt = "a " + id;
        n.feature = feature();
        n.base_size = extent();
        return n;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline std::string node_name(int i) { return "n" + std::to_string(i); }

/// Random graph with `n` nodes and about `density * n` edges (no self-edges,
/// one edge per ordered pair).
inline SceneGraph random_graph(Gen& g, int n, double density = 0.8) {
    SceneGraph graph("random scene");
    for (int i = 0; i < n; ++i)
        graph.add_node(g.node(node_name(i)));
    if (n < 2)
        return graph;
    const int m = static_cast<int>(std::round(density * n));
    for (int k = 0; k < m; ++k) {
        const int a = g.integer(0, n - 1);
        int b = g.integer(0, n - 2);
        if (b >= a)
            ++b;
        if (graph.find_edge(node_name(a), node_name(b)))
            continue;
        graph.add_edge({node_name(a), node_name(b), g.kind()});
    }
    return graph;
}

inline ObjectNode make_node(const std::string& id, FeatureVector f = {}, Extent3 size = {}) {
    ObjectNode n;
    n.id = id;
    n.label = id;
    n.node_prompt = "a " + id;
    n.feature = f;
    n.base_size = size;
    return n;
}

// ---------------------------------------------------------------------------
// Union-find oracle for connected components

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b)
            parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

/// Components as sets of ids, ordered by their smallest insertion index.
inline std::vector<std::set<NodeId>> components_by_union_find(const SceneGraph& g) {
    std::map<NodeId, std::size_t> index;
    for (std::size_t i = 0; i < g.nodes().size(); ++i)
        index[g.nodes()[i].id] = i;
    UnionFind uf(g.nodes().size());
    for (const auto& e : g.edges())
        uf.unite(index[e.src], index[e.dst]);
    std::map<std::size_t, std::set<NodeId>> groups;
    for (std::size_t i = 0; i < g.nodes().size(); ++i)
        groups[uf.find(i)].insert(g.nodes()[i].id);
    std::vector<std::set<NodeId>> out;
    for (auto& [root, members] : groups)
        out.push_back(std::move(members));
    return out;
}

// ---------------------------------------------------------------------------
// Independent band checker

struct Span1 {
    double lo;
    double hi;
};

/// Axis extent of a node's world box from its eight rotated corners.
inline std::array<Span1, 3> box_spans(const ObjectNode& n) {
    const auto& f = n.feature;
    const double hx = 0.5 * f.s * n.base_size.width;
    const double hy = 0.5 * f.s * n.base_size.depth;
    const double hz = 0.5 * f.s * n.base_size.height;
    const double c = std::cos(f.r * M_PI / 180.0);
    const double s = std::sin(f.r * M_PI / 180.0);
    std::array<Span1, 3> out{{{1e300, -1e300}, {1e300, -1e300}, {1e300, -1e300}}};
    for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
            for (int sz : {-1, 1}) {
                const double lx = sx * hx, ly = sy * hy, lz = sz * hz;
                const double p[3] = {f.x + c * lx - s * ly, f.y + s * lx + c * ly, f.z + lz};
                for (int a = 0; a < 3; ++a) {
                    out[a].lo = std::min(out[a].lo, p[a]);
                    out[a].hi = std::max(out[a].hi, p[a]);
                }
            }
        }
    }
    return out;
}

inline double sphere_diameter(const ObjectNode& n) {
    const double w = n.feature.s * n.base_size.width;
    const double d = n.feature.s * n.base_size.depth;
    const double h = n.feature.s * n.base_size.height;
    return std::sqrt(w * w + d * d + h * h);
}

inline double yaw_distance(double a, double b) {
    double d = std::fmod(std::fabs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

/// Default band table, restated: horizontal gap [0.05, 0.5] D with 0.5 D
/// alignment; vertical gap [0, 0.25] D with 0.25 D alignment; scale ratio in
/// [0.8, 1.25]; containment extent ratio in [0.45, 0.8]; yaw within 20 deg.
inline bool relation_holds(const SceneGraph& g, const RelationEdge& e, std::string* why = nullptr) {
    const ObjectNode& a = g.node(e.src);
    const ObjectNode& b = g.node(e.dst);
    const auto sa = box_spans(a);
    const auto sb = box_spans(b);
    const double D = 0.5 * (sphere_diameter(a) + sphere_diameter(b));
    auto fail = [&](const std::string& msg) {
        if (why)
            *why = msg;
        return false;
    };
    const double eps = 1e-9;
    auto center = [](const Span1& s) { return 0.5 * (s.lo + s.hi); };

    if (e.kind == RelationKind::In) {
        double ratio = 0.0;
        for (int ax = 0; ax < 3; ++ax) {
            if (sa[ax].lo < sb[ax].lo - eps || sa[ax].hi > sb[ax].hi + eps)
                return fail("not contained on axis " + std::to_string(ax));
            ratio = std::max(ratio, (sa[ax].hi - sa[ax].lo) / (sb[ax].hi - sb[ax].lo));
        }
        if (ratio < 0.45 - eps || ratio > 0.8 + eps)
            return fail("extent ratio " + std::to_string(ratio));
        if (yaw_distance(a.feature.r, b.feature.r) > 20.0 + eps)
            return fail("yaw");
        return true;
    }

    int axis = 0;
    int sign = -1;
    double glo = 0.05, ghi = 0.5, align = 0.5, facing = 0.0;
    bool match_yaw = false;
    switch (e.kind) {
    case RelationKind::Left: axis = 0; sign = -1; facing = 0.0; break;
    case RelationKind::Right: axis = 0; sign = +1; facing = -180.0; break;
    case RelationKind::Front: axis = 1; sign = -1; facing = 90.0; break;
    case RelationKind::Up: axis = 2; sign = +1; glo = 0.0; ghi = 0.25; align = 0.25; match_yaw = true; break;
    case RelationKind::Down:
    case RelationKind::Below: axis = 2; sign = -1; glo = 0.0; ghi = 0.25; align = 0.25; match_yaw = true; break;
    case RelationKind::In: break;
    }
    for (int ax = 0; ax < 3; ++ax) {
        const double ca = center(sa[ax]);
        const double cb = center(sb[ax]);
        if (ax == axis) {
            if (!(sign * (ca - cb) > 0.0))
                return fail("wrong side");
            const double gap = std::max(sa[ax].lo, sb[ax].lo) - std::min(sa[ax].hi, sb[ax].hi);
            if (gap < glo * D - eps || gap > ghi * D + eps)
                return fail("gap " + std::to_string(gap / D) + " D");
        } else if (std::fabs(ca - cb) > align * D + eps) {
            return fail("misaligned on axis " + std::to_string(ax));
        }
    }
    const double ratio = a.feature.s / b.feature.s;
    if (ratio < 0.8 - eps || ratio > 1.25 + eps)
        return fail("scale ratio " + std::to_string(ratio));
    const double goal = match_yaw ? b.feature.r : facing;
    if (yaw_distance(a.feature.r, goal) > 20.0 + eps)
        return fail("yaw");
    return true;
}

inline bool all_relations_hold(const SceneGraph& g, std::string* why = nullptr) {
    for (const auto& e : g.edges()) {
        std::string w;
        if (!relation_holds(g, e, &w)) {
            if (why)
                *why = edge_name(e) + ": " + w;
            return false;
        }
    }
    return true;
}

/// Places `src` so that `e` holds exactly at the band centres (used to build
/// satisfied fixtures). Both nodes keep their sizes; yaw is set to the goal.
inline void satisfy(SceneGraph& g, const RelationEdge& e) {
    const ObjectNode& b = g.node(e.dst);
    FeatureVector f = g.node(e.src).feature;
    const auto sb = box_spans(b);
    f.s = b.feature.s;
    f.x = b.feature.x;
    f.y = b.feature.y;
    f.z = b.feature.z;
    switch (e.kind) {
    case RelationKind::Left: f.r = 0.0; break;
    case RelationKind::Right: f.r = -180.0; break;
    case RelationKind::Front: f.r = 90.0; break;
    default: f.r = b.feature.r; break;
    }
    if (e.kind == RelationKind::In) {
        f.s = 0.6 * b.feature.s * std::min({b.base_size.width / g.node(e.src).base_size.width,
                                            b.base_size.depth / g.node(e.src).base_size.depth,
                                            b.base_size.height / g.node(e.src).base_size.height});
        g.feature(e.src) = f;
        return;
    }
    g.feature(e.src) = f;
    const auto sa = box_spans(g.node(e.src));
    const double D = 0.5 * (sphere_diameter(g.node(e.src)) + sphere_diameter(b));
    const bool vertical = e.kind == RelationKind::Up || e.kind == RelationKind::Below || e.kind == RelationKind::Down;
    const double gap = (vertical ? 0.125 : 0.275) * D;
    const int axis = (e.kind == RelationKind::Front) ? 1 : vertical ? 2 : 0;
    const int sign = (e.kind == RelationKind::Right || e.kind == RelationKind::Up) ? +1 : -1;
    const double half_a = 0.5 * (sa[axis].hi - sa[axis].lo);
    const double half_b = 0.5 * (sb[axis].hi - sb[axis].lo);
    const double offset = sign * (half_a + half_b + gap);
    if (axis == 0)
        f.x = b.feature.x + offset;
    else if (axis == 1)
        f.y = b.feature.y + offset;
    else
        f.z = b.feature.z + offset;
    g.feature(e.src) = f;
}

// ---------------------------------------------------------------------------
// Layout fixtures

/// Random pose pair "a -> b" where a starts within `reach` D of b on every
/// axis (D = mean bounding-sphere diameter of the pair). Scale and yaw of
/// both nodes are unconstrained draws from Gen::feature().
inline SceneGraph near_pair(Gen& gen, RelationKind kind, double reach = 2.0) {
    ObjectNode a = gen.node("a");
    ObjectNode b = gen.node("b");
    const double D = 0.5 * (sphere_diameter(a) + sphere_diameter(b));
    a.feature.x = b.feature.x + gen.uniform(-reach * D, reach * D);
    a.feature.y = b.feature.y + gen.uniform(-reach * D, reach * D);
    a.feature.z = b.feature.z + gen.uniform(-reach * D, reach * D);
    SceneGraph g("pair");
    g.add_node(a);
    g.add_node(b);
    g.add_edge({"a", "b", kind});
    return g;
}

/// Five nodes in two components, all piled near the origin:
/// {chair left table, lamp on table} and {toy on bed}.
inline SceneGraph hierarchy_fixture() {
    SceneGraph g("a chair left of a table with a lamp on it, and a toy on a bed");
    g.add_node(make_node("chair", {0.3, 0.2, 0.0, 1.0, 40.0}, {0.5, 0.5, 0.9}));
    g.add_node(make_node("table", {0.0, 0.0, 0.0, 1.0, 0.0}, {1.2, 0.8, 0.75}));
    g.add_node(make_node("lamp", {0.1, -0.2, 0.05, 1.0, 10.0}, {0.3, 0.3, 0.6}));
    g.add_node(make_node("toy", {0.5, 0.5, 0.0, 1.0, -30.0}, {0.3, 0.15, 0.12}));
    g.add_node(make_node("bed", {0.2, 0.0, 0.0, 1.0, 0.0}, {1.6, 2.0, 0.5}));
    g.add_edge({"chair", "table", RelationKind::Left});
    g.add_edge({"lamp", "table", RelationKind::Up});
    g.add_edge({"toy", "bed", RelationKind::Up});
    return g;
}

// ---------------------------------------------------------------------------
// Chat backends for tests

/// Answers by the first rule whose needle occurs in the request text.
class ScriptedBackend final : public ChatBackend {
public:
    struct Rule {
        std::string needle;
        std::string reply;
    };

    explicit ScriptedBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {}

    std::string complete(const ChatRequest& messages) override {
        ++calls_;
        std::string text;
        for (const auto& m : messages)
            text += m.text;
        for (const auto& r : rules_) {
            if (text.find(r.needle) != std::string::npos)
                return r.reply;
        }
        throw Error(ErrorCode::Backend, "scripted backend has no rule for this request");
    }

    int calls() const { return calls_.load(); }

private:
    std::vector<Rule> rules_;
    std::atomic<int> calls_{0};
};

/// Transport that counts calls and answers with a fixed response sequence
/// (the last one repeats), or throws the configured error.
class CountingTransport final : public HttpTransport {
public:
    CountingTransport() = default;
    explicit CountingTransport(std::vector<HttpResponse> responses) : responses_(std::move(responses)) {}

    std::optional<ErrorCode> fail_with;

    HttpResponse post(const HttpRequest& request) override {
        std::lock_guard lock(mu_);
        ++calls_;
        last_ = request;
        if (fail_with)
            throw Error(*fail_with, "injected transport failure");
        if (responses_.empty())
            throw Error(ErrorCode::Backend, "counting transport has no response");
        const std::size_t i = std::min(static_cast<std::size_t>(calls_ - 1), responses_.size() - 1);
        return responses_[i];
    }

    int calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

    HttpRequest last() const {
        std::lock_guard lock(mu_);
        return last_;
    }

private:
    std::vector<HttpResponse> responses_;
    mutable std::mutex mu_;
    int calls_ = 0;
    HttpRequest last_;
};

inline HttpResponse chat_ok(const std::string& content) {
    nlohmann::json body{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
    return {200, body.dump()};
}

/// Transport that answers chat requests through a ScriptedBackend, so the
/// HTTP client, recording and replay paths run end to end.
class ScriptedTransport final : public HttpTransport {
public:
    explicit ScriptedTransport(std::vector<ScriptedBackend::Rule> rules) : backend_(std::move(rules)) {}

    HttpResponse post(const HttpRequest& request) override {
        const auto body = nlohmann::json::parse(request.body);
        ChatRequest messages;
        for (const auto& m : body.at("messages")) {
            ChatMessage msg;
            msg.role = m.at("role").get<std::string>();
            for (const auto& part : m.at("content")) {
                if (part.at("type") == "text")
                    msg.text += part.at("text").get<std::string>();
            }
            messages.push_back(std::move(msg));
        }
        return chat_ok(backend_.complete(messages));
    }

    int calls() const { return backend_.calls(); }

private:
    ScriptedBackend backend_;
};

// ---------------------------------------------------------------------------
// Fixture replies

inline constexpr const char* kFruitScene = "an apple left of a banana, and a toy on the bed";

inline constexpr const char* kFruitGraphReply =
    "nodes = [apple, banana, toy, bed], node-prompts = [a fresh red apple, a ripe yellow banana, "
    "a colorful toy car, a wooden bed]\n"
    "edges = [apple left banana, toy on bed]";

inline std::vector<ScriptedBackend::Rule> fruit_rules() {
    return {
        {"The target sentence is: ", kFruitGraphReply},
        {"(apple)?", "8 cm in width, 8 cm in length and 9 cm in height"},
        {"(banana)?", "20 cm in width, 5 cm in length and 4 cm in height"},
        {"(toy)?", "30 cm in width, 15 cm in length and 12 cm in height"},
        {"(bed)?", "160 cm in width, 200 cm in length and 50 cm in height"},
        {"subgraph-1", "subgraph-1 = [0, 0, 0, 1, 0]\nsubgraph-2 = [2.5, 0, 0, 1, 0]"},
    };
}

} // namespace sgl::test
