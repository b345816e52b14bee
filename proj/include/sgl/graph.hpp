#pragma once

#include "sgl/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sgl {

using NodeId = std::string;

/// Wraps an angle in degrees into [-180, 180).
inline double normalize_yaw(double degrees) {
    double r = std::fmod(degrees + 180.0, 360.0);
    if (r < 0.0)
        r += 360.0;
    r -= 180.0;
    // fmod can land exactly on 180 after the shift for inputs like -540.
    if (r >= 180.0)
        r -= 360.0;
    return r;
}

/// Layout state of one object: position (m), uniform scale, yaw about +z (deg).
struct FeatureVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double s = 1.0;
    double r = 0.0;

    bool operator==(const FeatureVector&) const = default;
};

inline bool is_valid(const FeatureVector& f) {
    return std::isfinite(f.x) && std::isfinite(f.y) && std::isfinite(f.z) && std::isfinite(f.s) &&
           std::isfinite(f.r) && f.s > 0.0 && f.r >= -180.0 && f.r < 180.0;
}

inline void validate(const FeatureVector& f) {
    if (!is_valid(f))
        throw Error(ErrorCode::InvalidArgument,
                    "feature vector must be finite with s > 0 and r in [-180, 180)");
}

/// Axis-aligned extent at s = 1: width along x, depth along y, height along z.
struct Extent3 {
    double width = 1.0;
    double depth = 1.0;
    double height = 1.0;

    bool operator==(const Extent3&) const = default;
};

enum class SizeProvenance { Llm, Config, Default };

inline const char* to_string(SizeProvenance p) {
    switch (p) {
    case SizeProvenance::Llm: return "llm";
    case SizeProvenance::Config: return "config";
    case SizeProvenance::Default: return "default";
    }
    return "default";
}

inline std::optional<SizeProvenance> parse_size_provenance(std::string_view s) {
    if (s == "llm")
        return SizeProvenance::Llm;
    if (s == "config")
        return SizeProvenance::Config;
    if (s == "default")
        return SizeProvenance::Default;
    return std::nullopt;
}

struct ObjectNode {
    NodeId id;
    std::string label;
    std::string node_prompt;
    FeatureVector feature;
    Extent3 base_size;
    SizeProvenance size_provenance = SizeProvenance::Default;

    bool operator==(const ObjectNode&) const = default;
};

enum class RelationKind { Left, Right, Up, Down, Front, Below, In };

inline constexpr RelationKind kAllRelationKinds[] = {
    RelationKind::Left, RelationKind::Right, RelationKind::Up,  RelationKind::Down,
    RelationKind::Front, RelationKind::Below, RelationKind::In,
};

inline const char* to_string(RelationKind k) {
    switch (k) {
    case RelationKind::Left: return "left";
    case RelationKind::Right: return "right";
    case RelationKind::Up: return "up";
    case RelationKind::Down: return "down";
    case RelationKind::Front: return "front";
    case RelationKind::Below: return "below";
    case RelationKind::In: return "in";
    }
    return "?";
}

/// Parses one of the seven relation tokens (case-insensitive). Anything else,
/// including aliases such as "on", yields nullopt; alias handling is the
/// caller's policy.
inline std::optional<RelationKind> parse_relation_kind(std::string_view token) {
    std::string t(token);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    for (RelationKind k : kAllRelationKinds) {
        if (t == to_string(k))
            return k;
    }
    return std::nullopt;
}

/// Directed relation: src is placed relative to dst and is the node that moves.
struct RelationEdge {
    NodeId src;
    NodeId dst;
    RelationKind kind = RelationKind::Left;

    bool operator==(const RelationEdge&) const = default;
};

inline std::string edge_name(const RelationEdge& e) {
    return e.src + " " + to_string(e.kind) + " " + e.dst;
}

/// A weakly-connected group of nodes plus its rigid world placement.
struct Subgraph {
    std::vector<NodeId> member_ids;
    FeatureVector anchor;

    bool operator==(const Subgraph&) const = default;
};

enum class Incidence { Outgoing, Incoming };

struct Neighbor {
    NodeId node;
    RelationEdge edge;
    Incidence direction;

    bool operator==(const Neighbor&) const = default;
};

/// Directed scene graph. Node and edge insertion order is preserved and is
/// the tie-breaker for every traversal, so equal graphs produce equal output.
/// Mutators follow a single-writer contract; copies are independent values.
class SceneGraph {
public:
    SceneGraph() = default;
    explicit SceneGraph(std::string scene_prompt) : scene_prompt_(std::move(scene_prompt)) {}

    const std::vector<ObjectNode>& nodes() const noexcept { return nodes_; }
    const std::vector<RelationEdge>& edges() const noexcept { return edges_; }
    const std::string& scene_prompt() const noexcept { return scene_prompt_; }
    void set_scene_prompt(std::string p) { scene_prompt_ = std::move(p); }

    bool empty() const noexcept { return nodes_.empty(); }
    std::size_t size() const noexcept { return nodes_.size(); }

    std::optional<std::size_t> index_of(std::string_view id) const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].id == id)
                return i;
        }
        return std::nullopt;
    }

    bool contains(std::string_view id) const { return index_of(id).has_value(); }

    const ObjectNode& node(std::string_view id) const { return nodes_[require(id)]; }

    /// Mutable access to one node's layout state; structure stays untouched.
    FeatureVector& feature(std::string_view id) { return nodes_[require(id)].feature; }

    void set_feature(std::string_view id, const FeatureVector& f) {
        validate(f);
        nodes_[require(id)].feature = f;
    }

    void add_node(ObjectNode node) {
        if (node.label.empty())
            throw Error(ErrorCode::InvalidArgument, "node label must be non-empty");
        if (node.id.empty())
            throw Error(ErrorCode::InvalidArgument, "node id must be non-empty");
        if (!(node.base_size.width > 0.0 && node.base_size.depth > 0.0 && node.base_size.height > 0.0))
            throw Error(ErrorCode::InvalidArgument, "base_size of '" + node.id + "' must be positive");
        validate(node.feature);
        if (contains(node.id))
            throw Error(ErrorCode::DuplicateId, "node id '" + node.id + "' already exists");
        nodes_.push_back(std::move(node));
    }

    /// Removes the node and all incident edges. Returns the former neighbours
    /// in first-incidence order without duplicates.
    std::vector<NodeId> remove_node(std::string_view id) {
        const std::size_t idx = require(id);
        std::vector<NodeId> former;
        auto note = [&](const NodeId& n) {
            if (std::find(former.begin(), former.end(), n) == former.end())
                former.push_back(n);
        };
        std::vector<RelationEdge> kept;
        kept.reserve(edges_.size());
        for (auto& e : edges_) {
            if (e.src == id)
                note(e.dst);
            else if (e.dst == id)
                note(e.src);
            else
                kept.push_back(std::move(e));
        }
        edges_ = std::move(kept);
        nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(idx));
        return former;
    }

    /// Strict insertion: the ordered pair must be new.
    void add_edge(RelationEdge edge) {
        check_endpoints(edge);
        if (find_edge(edge.src, edge.dst))
            throw Error(ErrorCode::DuplicateEdge,
                        "edge " + edge.src + " -> " + edge.dst + " already exists");
        edges_.push_back(std::move(edge));
    }

    /// Inserts, or replaces the relation on an existing ordered pair (keeping
    /// its position) with a warning. Returns true when an edge was replaced.
    bool set_edge(RelationEdge edge) {
        check_endpoints(edge);
        for (auto& e : edges_) {
            if (e.src == edge.src && e.dst == edge.dst) {
                if (e.kind != edge.kind)
                    spdlog::warn("relation {} -> {} replaced: {} becomes {}", e.src, e.dst,
                                 to_string(e.kind), to_string(edge.kind));
                e.kind = edge.kind;
                return true;
            }
        }
        edges_.push_back(std::move(edge));
        return false;
    }

    bool remove_edge(std::string_view src, std::string_view dst) {
        auto it = std::find_if(edges_.begin(), edges_.end(),
                               [&](const RelationEdge& e) { return e.src == src && e.dst == dst; });
        if (it == edges_.end())
            return false;
        edges_.erase(it);
        return true;
    }

    const RelationEdge* find_edge(std::string_view src, std::string_view dst) const {
        for (const auto& e : edges_) {
            if (e.src == src && e.dst == dst)
                return &e;
        }
        return nullptr;
    }

    bool operator==(const SceneGraph&) const = default;

private:
    std::size_t require(std::string_view id) const {
        auto idx = index_of(id);
        if (!idx)
            throw Error(ErrorCode::UnknownId, "unknown node id '" + std::string(id) + "'");
        return *idx;
    }

    void check_endpoints(const RelationEdge& edge) const {
        if (edge.src == edge.dst)
            throw Error(ErrorCode::SelfEdge, "self-edge on '" + edge.src + "' is not allowed");
        for (const auto* end : {&edge.src, &edge.dst}) {
            if (!contains(*end))
                throw Error(ErrorCode::UnknownId, "edge endpoint '" + *end + "' does not exist");
        }
    }

    std::vector<ObjectNode> nodes_;
    std::vector<RelationEdge> edges_;
    std::string scene_prompt_;
};

/// Incident edges of `id` in edge-insertion order.
inline std::vector<Neighbor> neighbors(const SceneGraph& graph, std::string_view id) {
    if (!graph.contains(id))
        throw Error(ErrorCode::UnknownId, "unknown node id '" + std::string(id) + "'");
    std::vector<Neighbor> out;
    for (const auto& e : graph.edges()) {
        if (e.src == id)
            out.push_back({e.dst, e, Incidence::Outgoing});
        else if (e.dst == id)
            out.push_back({e.src, e, Incidence::Incoming});
    }
    return out;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> undirected_adjacency(const SceneGraph& graph) {
    std::vector<std::vector<std::size_t>> adj(graph.size());
    for (const auto& e : graph.edges()) {
        const std::size_t a = *graph.index_of(e.src);
        const std::size_t b = *graph.index_of(e.dst);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return adj;
}

} // namespace detail

/// Weakly-connected components by BFS. Components are ordered by their
/// smallest node index; members are listed in BFS order from that node with
/// neighbours visited in node-insertion order. Anchors start at identity.
inline std::vector<Subgraph> partition_subgraphs(const SceneGraph& graph) {
    const auto adj = detail::undirected_adjacency(graph);
    std::vector<bool> seen(graph.size(), false);
    std::vector<Subgraph> parts;
    for (std::size_t seed = 0; seed < graph.size(); ++seed) {
        if (seen[seed])
            continue;
        Subgraph part;
        std::deque<std::size_t> queue{seed};
        seen[seed] = true;
        while (!queue.empty()) {
            const std::size_t u = queue.front();
            queue.pop_front();
            part.member_ids.push_back(graph.nodes()[u].id);
            for (std::size_t v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        parts.push_back(std::move(part));
    }
    return parts;
}

/// Edges of a subgraph in BFS discovery order: members are visited in the
/// subgraph's member order and each contributes its not-yet-listed incident
/// edges in edge-insertion order.
inline std::vector<RelationEdge> bfs_edge_order(const SceneGraph& graph, const Subgraph& part) {
    std::vector<RelationEdge> ordered;
    std::vector<bool> taken(graph.edges().size(), false);
    for (const auto& id : part.member_ids) {
        for (std::size_t i = 0; i < graph.edges().size(); ++i) {
            const auto& e = graph.edges()[i];
            if (!taken[i] && (e.src == id || e.dst == id)) {
                taken[i] = true;
                ordered.push_back(e);
            }
        }
    }
    return ordered;
}

} // namespace sgl
