#pragma once

#include "sgl/graph.hpp"
#include "sgl/llm.hpp"
#include "sgl/optimizer.hpp"
#include "sgl/scoring.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace sgl {

enum class ModificationKind { Add, Remove, Reposition, Retarget };

inline const char* to_string(ModificationKind k) {
    switch (k) {
    case ModificationKind::Add: return "add";
    case ModificationKind::Remove: return "remove";
    case ModificationKind::Reposition: return "reposition";
    case ModificationKind::Retarget: return "retarget";
    }
    return "?";
}

struct ModificationPlan {
    ModificationKind kind = ModificationKind::Add;
    /// Add: the new node. Remove / Reposition: `node.id` names the target.
    ObjectNode node;
    /// Add: relations of the new node. Reposition: replacements for the
    /// node's outgoing relations (may be empty). Retarget: the target set.
    std::vector<RelationEdge> edges;
    /// Reposition: translation intent in metres.
    Vec3 offset;
    std::vector<NodeId> affected;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string unique_id(const SceneGraph& g, const std::string& label) {
    if (!g.contains(label))
        return label;
    for (int k = 2;; ++k) {
        std::string id = label + "#" + std::to_string(k);
        if (!g.contains(id))
            return id;
    }
}

inline std::optional<std::string> field(const std::string& text, const char* name) {
    const std::regex re(std::string("(^|[^A-Za-z_-])") + name + R"(\s*=\s*([^\n]*))", std::regex::icase);
    std::smatch m;
    if (!std::regex_search(text, m, re))
        return std::nullopt;
    return trim(m[2].str());
}

} // namespace detail

inline ChatRequest build_modification_prompt(const SceneGraph& graph, std::string_view sentence) {
    std::vector<std::string> ids;
    for (const auto& n : graph.nodes())
        ids.push_back(n.id);
    std::vector<std::string> rels;
    for (const auto& e : graph.edges())
        rels.push_back(e.src + " " + to_string(e.kind) + " " + e.dst);
    std::string text = "You are an expert in scene design. The scene contains these objects: " +
                       detail::join(ids, ", ") + ".\nCurrent relations: " +
                       (rels.empty() ? std::string("none") : detail::join(rels, ", ")) + ".\n" +
                       "The user asks: " + std::string(sentence) + "\n" +
                       "Classify the request as one spatial modification and reply in this form:\n"
                       "action = add | remove | reposition | none\n"
                       "node = the object added, removed or moved\n"
                       "node-prompt = a short prompt for 3D generation (add only)\n"
                       "edges = [obj_a {interaction} obj_b, ...] using only {left, right, up, down, front, below, in}\n"
                       "offset = [dx, dy, dz] in meters (reposition only)\n"
                       "Use action = none when the request does not change the layout.";
    return {{"user", std::move(text), {}}};
}

/// Classifies a modification request. Add plans carry the new node with its
/// size already queried.
inline ModificationPlan plan_modification(const SceneGraph& graph, std::string_view sentence, ChatBackend& backend) {
    const std::string s = detail::trim(sentence);
    if (s.empty())
        throw Error(ErrorCode::InvalidArgument, "modification sentence must be non-empty");
    const std::string reply = backend.complete(build_modification_prompt(graph, s));
    const auto action = detail::field(reply, "action");
    if (!action)
        throw Error(ErrorCode::Parse, "modification reply lacks \"action =\"");
    const std::string act = detail::lower(*action);
    if (act == "none")
        throw Error(ErrorCode::InvalidArgument, "no spatial modification detected in \"" + s + "\"");
    const auto node_name = detail::field(reply, "node");
    if (!node_name || node_name->empty())
        throw Error(ErrorCode::Parse, "modification reply lacks \"node =\"");

    ModificationPlan plan;
    std::vector<std::string> unknown;
    if (act == "add") {
        plan.kind = ModificationKind::Add;
        plan.node.label = *node_name;
        plan.node.id = detail::unique_id(graph, *node_name);
        plan.node.node_prompt = detail::field(reply, "node-prompt").value_or(*node_name);
        // The new label names the new node even when the scene has one already.
        plan.edges = detail::parse_edges_against(graph, reply, plan.warnings, unknown,
                                                 {{plan.node.label, plan.node.id}, {plan.node.id, plan.node.id}});
        const SizeEstimate size = query_size(backend, plan.node.label, plan.node.node_prompt);
        plan.node.base_size = size.extent();
        plan.node.size_provenance = size.provenance;
        plan.affected = {plan.node.id};
    } else if (act == "remove" || act == "reposition") {
        const NodeId id = detail::resolve_name(graph, *node_name);
        if (id.empty())
            throw Error(ErrorCode::Parse, "modification names unknown label \"" + *node_name + "\"");
        plan.node = graph.node(id);
        if (act == "remove") {
            plan.kind = ModificationKind::Remove;
            for (const auto& n : neighbors(graph, id)) {
                if (std::find(plan.affected.begin(), plan.affected.end(), n.node) == plan.affected.end())
                    plan.affected.push_back(n.node);
            }
        } else {
            plan.kind = ModificationKind::Reposition;
            if (detail::field(reply, "edges"))
                plan.edges = detail::parse_edges_against(graph, reply, plan.warnings, unknown);
            if (const auto off = detail::field(reply, "offset")) {
                std::smatch m;
                static const std::regex vec(R"(\[\s*([^,\]]+),\s*([^,\]]+),\s*([^,\]]+)\])");
                if (!std::regex_search(*off, m, vec))
                    throw Error(ErrorCode::Parse, "offset must be [dx, dy, dz]");
                plan.offset = {std::strtod(m[1].str().c_str(), nullptr), std::strtod(m[2].str().c_str(), nullptr),
                               std::strtod(m[3].str().c_str(), nullptr)};
            }
            plan.affected = {id};
        }
    } else {
        throw Error(ErrorCode::Parse, "unknown modification action \"" + *action + "\"");
    }
    for (const auto& e : plan.edges) {
        for (const auto* id : {&e.src, &e.dst}) {
            if (!graph.contains(*id) && *id != plan.node.id)
                unknown.push_back(*id);
        }
    }
    if (!unknown.empty())
        throw Error(ErrorCode::Parse, "modification uses unknown labels: " + detail::join(unknown, ", "));
    return plan;
}

struct ModificationReport {
    std::vector<EdgeTrace> traces;
    std::vector<NodeId> removed_neighbors;
};

struct ModificationResult {
    SceneGraph graph;
    ModificationReport report;
};

namespace detail {

inline void optimize_edges(SceneGraph& graph, const std::vector<RelationEdge>& edges, Scorer& scorer,
                           const ViewCapturer& capturer, const OptimizerConfig& config,
                           const ProgressObserver& observer, std::vector<EdgeTrace>& traces) {
    for (const auto& e : edges) {
        auto res = optimize_edge(std::move(graph), e, scorer, capturer, config, observer);
        graph = std::move(res.graph);
        traces.push_back(std::move(res.trace));
    }
}

/// Incident edges of `id`: its own relations first, then its dependants.
inline std::vector<RelationEdge> incident_edges(const SceneGraph& graph, const NodeId& id) {
    std::vector<RelationEdge> out;
    for (const auto& e : graph.edges()) {
        if (e.src == id)
            out.push_back(e);
    }
    for (const auto& e : graph.edges()) {
        if (e.dst == id)
            out.push_back(e);
    }
    return out;
}

/// Replaces the outgoing relations of every src named in `edges`.
inline void retarget(SceneGraph& graph, const std::vector<RelationEdge>& edges) {
    std::vector<NodeId> srcs;
    for (const auto& e : edges) {
        if (std::find(srcs.begin(), srcs.end(), e.src) == srcs.end())
            srcs.push_back(e.src);
    }
    for (const auto& s : srcs) {
        std::vector<NodeId> dsts;
        for (const auto& e : graph.edges()) {
            if (e.src == s)
                dsts.push_back(e.dst);
        }
        for (const auto& d : dsts)
            graph.remove_edge(s, d);
    }
    for (const auto& e : edges)
        graph.set_edge(e);
}

} // namespace detail

/// Applies a plan and re-optimizes around it. Remove re-optimizes the
/// remaining relations of the former neighbours; Add and Reposition
/// re-optimize every relation incident to the node.
inline ModificationResult apply_modification(SceneGraph graph, const ModificationPlan& plan, Scorer& scorer,
                                             const ViewCapturer& capturer, const OptimizerConfig& config = {},
                                             const ProgressObserver& observer = {}) {
    ModificationResult out;
    switch (plan.kind) {
    case ModificationKind::Add: {
        ObjectNode n = plan.node;
        n.feature = FeatureVector{};
        for (const auto& e : plan.edges) {
            const NodeId& other = e.src == n.id ? e.dst : e.src;
            if (graph.contains(other)) {
                n.feature = graph.node(other).feature;
                n.feature.s = 1.0;
                break;
            }
        }
        graph.add_node(std::move(n));
        for (const auto& e : plan.edges)
            graph.set_edge(e);
        detail::optimize_edges(graph, detail::incident_edges(graph, plan.node.id), scorer, capturer, config,
                               observer, out.report.traces);
        break;
    }
    case ModificationKind::Remove: {
        out.report.removed_neighbors = graph.remove_node(plan.node.id);
        std::vector<RelationEdge> todo;
        for (const auto& e : graph.edges()) {
            if (std::find(out.report.removed_neighbors.begin(), out.report.removed_neighbors.end(), e.src) !=
                out.report.removed_neighbors.end())
                todo.push_back(e);
        }
        detail::optimize_edges(graph, todo, scorer, capturer, config, observer, out.report.traces);
        break;
    }
    case ModificationKind::Reposition: {
        FeatureVector f = graph.node(plan.node.id).feature;
        f.x += plan.offset.x;
        f.y += plan.offset.y;
        f.z += plan.offset.z;
        graph.set_feature(plan.node.id, f);
        if (!plan.edges.empty())
            detail::retarget(graph, plan.edges);
        detail::optimize_edges(graph, detail::incident_edges(graph, plan.node.id), scorer, capturer, config,
                               observer, out.report.traces);
        break;
    }
    case ModificationKind::Retarget: {
        detail::retarget(graph, plan.edges);
        SceneOptions opts;
        opts.reuse_layout = true;
        auto res = optimize_scene(std::move(graph), scorer, capturer, config, opts, observer);
        graph = std::move(res.graph);
        out.report.traces = std::move(res.report.traces);
        break;
    }
    }
    out.graph = std::move(graph);
    return out;
}

// ---------------------------------------------------------------------------
// Trajectories

struct Keyframe {
    double t = 0.0;
    SceneGraph graph;
};

struct Trajectory {
    std::vector<Keyframe> keyframes;
};

inline FeatureVector interpolate(const FeatureVector& a, const FeatureVector& b, double alpha) {
    FeatureVector f;
    f.x = a.x + alpha * (b.x - a.x);
    f.y = a.y + alpha * (b.y - a.y);
    f.z = a.z + alpha * (b.z - a.z);
    f.s = std::exp(std::log(a.s) + alpha * (std::log(b.s) - std::log(a.s)));
    f.r = normalize_yaw(a.r + alpha * normalize_yaw(b.r - a.r));
    return f;
}

/// Resamples recorded states (all with one structure) at t = k / (n - 1).
/// Endpoints are copies of the first and last state.
inline Trajectory resample_trajectory(const std::vector<SceneGraph>& states, std::size_t n_keyframes) {
    if (n_keyframes < 2)
        throw Error(ErrorCode::InvalidArgument, "a trajectory needs at least 2 keyframes");
    if (states.empty())
        throw Error(ErrorCode::InvalidArgument, "no recorded states to resample");
    Trajectory out;
    if (states.size() < 2) {
        out.keyframes.push_back({0.0, states.front()});
        out.keyframes.push_back({1.0, states.front()});
        return out;
    }
    const std::size_t m = states.size();
    for (std::size_t k = 0; k < n_keyframes; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(n_keyframes - 1);
        if (k == 0) {
            out.keyframes.push_back({0.0, states.front()});
            continue;
        }
        if (k + 1 == n_keyframes) {
            out.keyframes.push_back({1.0, states.back()});
            continue;
        }
        const double u = t * static_cast<double>(m - 1);
        const std::size_t i = std::min(static_cast<std::size_t>(std::floor(u)), m - 2);
        const double alpha = u - static_cast<double>(i);
        SceneGraph g = states[i];
        for (const auto& node : states[i].nodes())
            g.feature(node.id) = interpolate(node.feature, states[i + 1].node(node.id).feature, alpha);
        out.keyframes.push_back({t, std::move(g)});
    }
    return out;
}

struct TrajectoryResult {
    Trajectory trajectory;
    StatePlan plan;
    SceneReport report;
};

/// Retargets the graph from state prompts, re-optimizes it in place and
/// turns the recorded optimizer states into keyframes.
inline TrajectoryResult generate_trajectory(const SceneGraph& graph, std::string_view sentence, ChatBackend& backend,
                                            Scorer& scorer, const ViewCapturer& capturer,
                                            const OptimizerConfig& config = {}, std::size_t n_keyframes = 8,
                                            const ProgressObserver& observer = {}) {
    if (n_keyframes < 2)
        throw Error(ErrorCode::InvalidArgument, "a trajectory needs at least 2 keyframes");
    TrajectoryResult out;
    out.plan = query_state_prompts(backend, graph, sentence);
    SceneGraph start = graph;
    detail::retarget(start, out.plan.edges);

    std::vector<SceneGraph> states{start};
    auto record = [&](const ProgressEvent& ev, const SceneGraph& g) {
        if (observer)
            observer(ev, g);
        bool changed = false;
        for (const auto& n : g.nodes())
            changed = changed || !(n.feature == states.back().node(n.id).feature);
        if (changed)
            states.push_back(g);
    };
    SceneOptions opts;
    opts.reuse_layout = true;
    auto res = optimize_scene(start, scorer, capturer, config, opts, record);
    if (!(res.graph == states.back()))
        states.push_back(res.graph);
    out.trajectory = resample_trajectory(states, n_keyframes);
    out.report = std::move(res.report);
    return out;
}

} // namespace sgl
