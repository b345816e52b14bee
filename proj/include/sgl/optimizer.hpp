#pragma once

#include "sgl/geometry.hpp"
#include "sgl/graph.hpp"
#include "sgl/render.hpp"
#include "sgl/scoring.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace sgl {

struct OptimizerConfig {
    std::array<double, 5> weights{0.2, 0.2, 0.2, 0.2, 0.2};
    /// Translation step, in units of D per unit normalized score.
    double step_translation = 0.5;
    /// Scale step in log-scale units per unit normalized score.
    double step_scale = 0.5;
    /// Yaw step in degrees per unit normalized score.
    double step_yaw = 0.25 * 180.0;
    double threshold = 0.05;
    int max_edge_iterations = 10;
    int max_placement_iterations = 10;

    /// Ablation switches for the three levels.
    bool edge_optimization = true;
    bool node_refinement = true;
    bool placement_refinement = true;

    void validate() const {
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0))
                throw Error(ErrorCode::InvalidArgument, "weights must be >= 0");
            sum += w;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw Error(ErrorCode::InvalidArgument, "weights must sum to 1");
        if (!(step_translation > 0.0 && step_scale > 0.0 && step_yaw > 0.0))
            throw Error(ErrorCode::InvalidArgument, "step sizes must be > 0");
        if (!(threshold > 0.0))
            throw Error(ErrorCode::InvalidArgument, "threshold must be > 0");
        if (max_edge_iterations < 1 || max_placement_iterations < 1)
            throw Error(ErrorCode::InvalidArgument, "iteration caps must be >= 1");
    }
};

/// Weighted sum of normalized absolute scores.
inline double loss(const ScoreVector& scores, const OptimizerConfig& config = {}) {
    double l = 0.0;
    for (std::size_t k = 0; k < 5; ++k)
        l += config.weights[k] * std::fabs(scores.values[k]) / 100.0;
    return l;
}

/// Score-driven update of one feature vector. Scores act as signed descent
/// directions per channel: translation moves along the frame direction
/// (positive = away from the reference), scale shrinks for positive scores,
/// yaw turns clockwise for positive scores.
inline FeatureVector apply_scores(const FeatureVector& f, const ScoreFrame& frame,
                                  const ScoreVector& scores, const OptimizerConfig& config = {}) {
    if (scores.is_zero())
        return f;
    FeatureVector out = f;
    const Vec3& D = frame.length;
    out.s = f.s * std::exp(-config.step_scale * scores.scale() / 100.0);
    out.x = f.x + config.step_translation * (scores.left_right() / 100.0) * D.x * frame.direction.x;
    out.y = f.y + config.step_translation * (scores.forward_backward() / 100.0) * D.y * frame.direction.y;
    out.z = f.z + config.step_translation * (scores.up_down() / 100.0) * D.z * frame.direction.z;
    out.r = normalize_yaw(f.r - config.step_yaw * scores.yaw() / 100.0);
    return out;
}

/// Edge form: src moves relative to dst; dst is never touched.
inline FeatureVector apply_scores(const ObjectNode& src, const ObjectNode& dst, const ScoreVector& scores,
                                  const OptimizerConfig& config = {}) {
    const OrientedBox a = world_box(src);
    const OrientedBox b = world_box(dst);
    const Vec3 d = a.center - b.center;
    const auto frame = ScoreFrame::uniform({separation_sign(d.x), separation_sign(d.y), separation_sign(d.z)},
                                           characteristic_length(a, b));
    return apply_scores(src.feature, frame, scores, config);
}

/// Edge form using the relation-specific frame of `edge`.
inline FeatureVector apply_scores(const SceneGraph& graph, const RelationEdge& edge, const ScoreVector& scores,
                                  const OptimizerConfig& config = {}) {
    return apply_scores(graph.node(edge.src).feature, edge_frame(graph, edge), scores, config);
}

enum class TraceStatus { Converged, MaxIters, ScorerError };

inline const char* to_string(TraceStatus s) {
    switch (s) {
    case TraceStatus::Converged: return "converged";
    case TraceStatus::MaxIters: return "max_iters";
    case TraceStatus::ScorerError: return "scorer_error";
    }
    return "?";
}

struct IterationRecord {
    int iteration = 0;
    ScoreVector scores;
    double loss = 0.0;
    FeatureVector before;
    FeatureVector after;
};

/// Per-loop record. `target` names the edge ("a left b"), node or subgraph.
struct EdgeTrace {
    ScoringLevel level = ScoringLevel::Edge;
    std::string target;
    std::optional<RelationEdge> edge;
    std::vector<IterationRecord> iterations;
    TraceStatus status = TraceStatus::MaxIters;
    std::string error;
};

struct ProgressEvent {
    ScoringLevel level = ScoringLevel::Edge;
    std::string target;
    int iteration = 0;
    ScoreVector scores;
    double loss = 0.0;
};

/// Called once per iteration with the graph state after that iteration.
using ProgressObserver = std::function<void(const ProgressEvent&, const SceneGraph&)>;

struct EdgeResult {
    SceneGraph graph;
    EdgeTrace trace;
};

namespace detail {

inline std::string describe(const SceneGraph& g, std::span<const NodeId> ids) {
    std::string out;
    for (const auto& id : ids) {
        const auto& n = g.node(id);
        if (!out.empty())
            out += ", ";
        out += n.node_prompt.empty() ? n.label : n.node_prompt;
    }
    return out;
}

/// Shared descent loop. `step` applies one score vector to the working graph.
template <typename StepFn>
EdgeTrace descend(SceneGraph& graph, ScoringRequest request, Scorer& scorer, const ViewCapturer& capturer,
                  int max_iterations, const OptimizerConfig& config, const ProgressObserver& observer,
                  const NodeId& tracked, StepFn&& step) {
    EdgeTrace trace;
    trace.level = request.level;
    trace.edge = request.edge;
    trace.target = request.edge ? edge_name(*request.edge)
                                : (request.level == ScoringLevel::Node ? request.x1.front()
                                                                        : "subgraph:" + request.x1.front());
    request.graph = &graph;
    request.scene_description = graph.scene_prompt();
    request.x1_description = describe(graph, request.x1);
    request.x2_description = describe(graph, request.x2);
    for (int it = 1; it <= max_iterations; ++it) {
        request.capture = [&graph, &capturer, &request] {
            return capturer.capture(graph, request.x1, request.x2);
        };
        ScoreVector scores;
        try {
            scores = scorer.score(request);
        } catch (const std::exception& ex) {
            trace.status = TraceStatus::ScorerError;
            trace.error = ex.what();
            spdlog::warn("scorer failed on {}: {}", trace.target, ex.what());
            return trace;
        }
        IterationRecord rec;
        rec.iteration = it;
        rec.scores = scores;
        rec.loss = loss(scores, config);
        rec.before = graph.node(tracked).feature;
        const bool converged = rec.loss < config.threshold;
        if (!converged)
            step(scores);
        rec.after = graph.node(tracked).feature;
        trace.iterations.push_back(rec);
        if (observer)
            observer({request.level, trace.target, it, scores, rec.loss}, graph);
        if (converged) {
            trace.status = TraceStatus::Converged;
            return trace;
        }
    }
    trace.status = TraceStatus::MaxIters;
    return trace;
}

} // namespace detail

/// Iterative edge loop: capture X1 = {src}, X2 = {dst}; score; stop when the
/// loss is under the threshold, else move src only.
inline EdgeResult optimize_edge(SceneGraph graph, const RelationEdge& edge, Scorer& scorer,
                                const ViewCapturer& capturer, const OptimizerConfig& config = {},
                                const ProgressObserver& observer = {}) {
    if (!graph.find_edge(edge.src, edge.dst))
        throw Error(ErrorCode::UnknownId, "unknown edge " + edge.src + " -> " + edge.dst);
    ScoringRequest req;
    req.level = ScoringLevel::Edge;
    req.x1 = {edge.src};
    req.x2 = {edge.dst};
    req.edge = graph.find_edge(edge.src, edge.dst) ? *graph.find_edge(edge.src, edge.dst) : edge;
    auto trace = detail::descend(graph, req, scorer, capturer, config.max_edge_iterations, config, observer,
                                 edge.src, [&](const ScoreVector& s) {
                                     graph.feature(edge.src) = apply_scores(graph, edge, s, config);
                                 });
    return {std::move(graph), std::move(trace)};
}

/// Node-level refinement: X1 = {node}, X2 = the other members.
inline EdgeResult refine_node(SceneGraph graph, const NodeId& node, std::span<const NodeId> others,
                              Scorer& scorer, const ViewCapturer& capturer, const OptimizerConfig& config = {},
                              const ProgressObserver& observer = {}) {
    ScoringRequest req;
    req.level = ScoringLevel::Node;
    req.x1 = {node};
    req.x2.assign(others.begin(), others.end());
    auto trace = detail::descend(graph, req, scorer, capturer, config.max_edge_iterations, config, observer,
                                 node, [&](const ScoreVector& s) {
                                     const NodeId me[] = {node};
                                     const auto frame = frame_for(graph, me, others);
                                     graph.feature(node) = apply_scores(graph.node(node).feature, frame, s, config);
                                 });
    return {std::move(graph), std::move(trace)};
}

namespace detail {

/// Moves `mates` along with a node whose pose changed from `before` to
/// `after`: translation plus scaling about the node. Heading is not carried
/// over, because the relations are defined along world axes.
inline void carry_along(SceneGraph& graph, std::span<const NodeId> mates, const FeatureVector& before,
                        const FeatureVector& after) {
    const double k = after.s / before.s;
    const Vec3 p0{before.x, before.y, before.z};
    const Vec3 p1{after.x, after.y, after.z};
    for (const auto& id : mates) {
        FeatureVector& f = graph.feature(id);
        const Vec3 p = p1 + (Vec3{f.x, f.y, f.z} - p0) * k;
        f.x = p.x;
        f.y = p.y;
        f.z = p.z;
        f.s *= k;
    }
}

/// Refinement order: every node after the nodes it is placed relative to,
/// ties and cycles broken by member order.
inline std::vector<NodeId> dependency_order(const SceneGraph& graph, const Subgraph& part) {
    std::vector<NodeId> order;
    std::vector<bool> done(part.member_ids.size(), false);
    auto pos = [&](const NodeId& id) {
        return static_cast<std::size_t>(
            std::find(part.member_ids.begin(), part.member_ids.end(), id) - part.member_ids.begin());
    };
    while (order.size() < part.member_ids.size()) {
        bool progressed = false;
        for (std::size_t i = 0; i < part.member_ids.size(); ++i) {
            if (done[i])
                continue;
            bool ready = true;
            for (const auto& e : graph.edges()) {
                if (e.src == part.member_ids[i]) {
                    const std::size_t j = pos(e.dst);
                    if (j < part.member_ids.size() && !done[j]) {
                        ready = false;
                        break;
                    }
                }
            }
            if (ready) {
                done[i] = true;
                order.push_back(part.member_ids[i]);
                progressed = true;
            }
        }
        if (!progressed) {
            // Cycle: release the first pending member.
            for (std::size_t i = 0; i < part.member_ids.size(); ++i) {
                if (!done[i]) {
                    done[i] = true;
                    order.push_back(part.member_ids[i]);
                    break;
                }
            }
        }
    }
    return order;
}

} // namespace detail

struct SubgraphResult {
    SceneGraph graph;
    std::vector<EdgeTrace> traces;
};

/// Independent subgraph optimization. Edges run in BFS discovery order; each
/// optimized src drags the cluster it was already placed with, so earlier
/// relations survive. Afterwards every member is refined once against the
/// rest of the subgraph, references before dependants.
inline SubgraphResult optimize_subgraph(SceneGraph graph, const Subgraph& part, Scorer& scorer,
                                        const ViewCapturer& capturer, const OptimizerConfig& config = {},
                                        const ProgressObserver& observer = {}) {
    SubgraphResult out;
    if (part.member_ids.size() < 2) {
        out.graph = std::move(graph);
        return out;
    }
    // cluster[i] = index of the placed cluster member i belongs to.
    std::map<NodeId, std::size_t> cluster;
    for (std::size_t i = 0; i < part.member_ids.size(); ++i)
        cluster[part.member_ids[i]] = i;
    auto members_of = [&](std::size_t c) {
        std::vector<NodeId> ids;
        for (const auto& id : part.member_ids) {
            if (cluster[id] == c)
                ids.push_back(id);
        }
        return ids;
    };

    for (const auto& edge : bfs_edge_order(graph, part)) {
        const FeatureVector before = graph.node(edge.src).feature;
        auto res = optimize_edge(std::move(graph), edge, scorer, capturer, config, observer);
        graph = std::move(res.graph);
        out.traces.push_back(std::move(res.trace));
        const std::size_t cs = cluster[edge.src];
        const std::size_t cd = cluster[edge.dst];
        if (cs == cd)
            continue;
        std::vector<NodeId> mates;
        for (const auto& id : members_of(cs)) {
            if (id != edge.src)
                mates.push_back(id);
        }
        detail::carry_along(graph, mates, before, graph.node(edge.src).feature);
        for (auto& [id, c] : cluster) {
            if (c == cs)
                c = cd;
        }
    }

    if (config.node_refinement) {
        for (const auto& node : detail::dependency_order(graph, part)) {
            std::vector<NodeId> others;
            for (const auto& id : part.member_ids) {
                if (id != node)
                    others.push_back(id);
            }
            auto res = refine_node(std::move(graph), node, others, scorer, capturer, config, observer);
            graph = std::move(res.graph);
            out.traces.push_back(std::move(res.trace));
        }
    }
    out.graph = std::move(graph);
    return out;
}

namespace detail {

/// Rigid placement of a subgraph from its original member poses: the
/// original centre maps to the anchor position, scaled by anchor.s and
/// rotated by anchor.r about that point.
inline void place_rigidly(SceneGraph& graph, const std::vector<NodeId>& members,
                          const std::vector<FeatureVector>& original, const Vec3& original_center,
                          const FeatureVector& anchor) {
    for (std::size_t i = 0; i < members.size(); ++i) {
        const FeatureVector& f0 = original[i];
        const Vec3 local = rotate_z((Vec3{f0.x, f0.y, f0.z} - original_center) * anchor.s, anchor.r);
        FeatureVector& f = graph.feature(members[i]);
        f.x = anchor.x + local.x;
        f.y = anchor.y + local.y;
        f.z = anchor.z + local.z;
        f.s = f0.s * anchor.s;
        f.r = normalize_yaw(f0.r + anchor.r);
    }
}

} // namespace detail

struct PlacementResult {
    SceneGraph graph;
    std::vector<Subgraph> subgraphs;
    std::vector<EdgeTrace> traces;
};

/// Graph-level placement. Each subgraph is first moved rigidly onto its
/// anchor, then refined as a rigid unit (X1 = members, X2 = every other
/// node). A single subgraph is left where it is.
inline PlacementResult place_subgraphs(SceneGraph graph, std::vector<Subgraph> parts,
                                       std::span<const FeatureVector> placements, Scorer& scorer,
                                       const ViewCapturer& capturer, const OptimizerConfig& config = {},
                                       const ProgressObserver& observer = {}) {
    if (placements.size() != parts.size())
        throw Error(ErrorCode::InvalidArgument, "place_subgraphs needs one placement per subgraph");
    PlacementResult out;
    if (parts.size() <= 1) {
        for (auto& p : parts)
            p.anchor = FeatureVector{};
        out.graph = std::move(graph);
        out.subgraphs = std::move(parts);
        return out;
    }

    std::vector<std::vector<FeatureVector>> original(parts.size());
    std::vector<Vec3> centers(parts.size());
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (const auto& id : parts[k].member_ids)
            original[k].push_back(graph.node(id).feature);
        centers[k] = set_bounds(graph, parts[k].member_ids).aabb.center();
        parts[k].anchor = placements[k];
        parts[k].anchor.r = normalize_yaw(parts[k].anchor.r);
        validate(parts[k].anchor);
        detail::place_rigidly(graph, parts[k].member_ids, original[k], centers[k], parts[k].anchor);
    }

    if (config.placement_refinement) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
            ScoringRequest req;
            req.level = ScoringLevel::Subgraph;
            req.x1 = parts[k].member_ids;
            for (const auto& n : graph.nodes()) {
                if (std::find(req.x1.begin(), req.x1.end(), n.id) == req.x1.end())
                    req.x2.push_back(n.id);
            }
            const auto others = req.x2;
            auto trace = detail::descend(
                graph, req, scorer, capturer, config.max_placement_iterations, config, observer,
                parts[k].member_ids.front(), [&](const ScoreVector& s) {
                    const auto frame = frame_for(graph, parts[k].member_ids, others);
                    FeatureVector& a = parts[k].anchor;
                    a = apply_scores(a, frame, s, config);
                    detail::place_rigidly(graph, parts[k].member_ids, original[k], centers[k], a);
                });
            trace.target = "subgraph:" + std::to_string(k);
            out.traces.push_back(std::move(trace));
        }
    }
    out.graph = std::move(graph);
    out.subgraphs = std::move(parts);
    return out;
}

/// Internal energy per subgraph plus cross-subgraph penalty terms.
struct GlobalEnergy {
    std::vector<double> subgraph_energy;
    /// (p, q, penalty) for each pair of subgraphs joined by at least one edge.
    struct Penalty {
        std::size_t p = 0;
        std::size_t q = 0;
        double value = 0.0;
    };
    std::vector<Penalty> penalties;
    double total = 0.0;
};

/// Energy of a graph under a given grouping. Edges inside a group count
/// towards that group's energy; edges between groups count towards the
/// pair's penalty. Both use the oracle loss.
inline GlobalEnergy scene_energy(const SceneGraph& graph, std::span<const Subgraph> parts,
                                 const BandTable& bands = {}, const OptimizerConfig& config = {}) {
    GlobalEnergy out;
    out.subgraph_energy.assign(parts.size(), 0.0);
    std::map<NodeId, std::size_t> group;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (const auto& id : parts[k].member_ids)
            group[id] = k;
    }
    std::map<std::pair<std::size_t, std::size_t>, double> pen;
    for (const auto& e : graph.edges()) {
        const double l = loss(oracle_score(graph, e, bands), config);
        const auto gs = group.find(e.src);
        const auto gd = group.find(e.dst);
        if (gs == group.end() || gd == group.end())
            throw Error(ErrorCode::InvalidArgument, "edge endpoint outside every subgraph: " + edge_name(e));
        if (gs->second == gd->second) {
            out.subgraph_energy[gs->second] += l;
        } else {
            const auto key = std::minmax(gs->second, gd->second);
            pen[{key.first, key.second}] += l;
        }
    }
    for (const auto& [key, v] : pen)
        out.penalties.push_back({key.first, key.second, v});
    out.total = std::accumulate(out.subgraph_energy.begin(), out.subgraph_energy.end(), 0.0);
    for (const auto& p : out.penalties)
        out.total += p.value;
    return out;
}

/// Energy under the graph's own connected components (no cross terms).
inline GlobalEnergy scene_energy(const SceneGraph& graph, const BandTable& bands = {},
                                 const OptimizerConfig& config = {}) {
    const auto parts = partition_subgraphs(graph);
    return scene_energy(graph, parts, bands, config);
}

/// Summary handed to the placement query.
struct SubgraphSummary {
    std::size_t member_count = 0;
    std::vector<std::string> labels;
    Vec3 extent;
    double radius = 0.0;
};

inline std::vector<SubgraphSummary> summarize(const SceneGraph& graph, std::span<const Subgraph> parts) {
    std::vector<SubgraphSummary> out;
    for (const auto& p : parts) {
        SubgraphSummary s;
        s.member_count = p.member_ids.size();
        for (const auto& id : p.member_ids)
            s.labels.push_back(graph.node(id).label);
        const auto b = set_bounds(graph, p.member_ids);
        s.extent = b.aabb.size();
        s.radius = 0.5 * norm(s.extent);
        out.push_back(std::move(s));
    }
    return out;
}

/// Deterministic row along +x: consecutive anchors are 1.5 * (r_k + r_k+1)
/// apart, starting at the origin.
inline std::vector<FeatureVector> fallback_grid(std::span<const SubgraphSummary> summaries) {
    std::vector<FeatureVector> out;
    double x = 0.0;
    for (std::size_t k = 0; k < summaries.size(); ++k) {
        if (k > 0)
            x += 1.5 * (summaries[k - 1].radius + summaries[k].radius);
        out.push_back({x, 0.0, 0.0, 1.0, 0.0});
    }
    return out;
}

struct PlacementEstimate {
    std::vector<FeatureVector> anchors;
    bool used_fallback = false;
    std::vector<std::string> warnings;
};

/// Source of initial subgraph anchors (the language model, or the grid).
using PlacementQuery = std::function<PlacementEstimate(std::span<const SubgraphSummary>)>;

struct SceneOptions {
    /// Keep the current world placement of subgraphs instead of re-placing.
    bool reuse_layout = false;
    PlacementQuery placement;
};

struct SceneReport {
    std::vector<EdgeTrace> traces;
    GlobalEnergy energy_before;
    GlobalEnergy energy_after;
    std::vector<Subgraph> subgraphs;
    std::vector<FeatureVector> initial_anchors;
    bool placement_fallback = false;
    std::vector<std::string> warnings;

    bool ok() const {
        return std::none_of(traces.begin(), traces.end(),
                            [](const EdgeTrace& t) { return t.status == TraceStatus::ScorerError; });
    }
};

struct SceneResult {
    SceneGraph graph;
    SceneReport report;
};

/// Full pipeline: partition, optimize each subgraph, estimate anchors, place.
inline SceneResult optimize_scene(SceneGraph graph, Scorer& scorer, const ViewCapturer& capturer,
                                  const OptimizerConfig& config = {}, const SceneOptions& options = {},
                                  const ProgressObserver& observer = {}, const BandTable& bands = {}) {
    config.validate();
    SceneResult out;
    auto parts = partition_subgraphs(graph);
    out.report.energy_before = scene_energy(graph, parts, bands, config);

    if (config.edge_optimization) {
        for (const auto& p : parts) {
            auto res = optimize_subgraph(std::move(graph), p, scorer, capturer, config, observer);
            graph = std::move(res.graph);
            for (auto& t : res.traces)
                out.report.traces.push_back(std::move(t));
        }
    }

    if (!options.reuse_layout && parts.size() > 1) {
        const auto summaries = summarize(graph, parts);
        PlacementEstimate est;
        if (options.placement) {
            est = options.placement(summaries);
        } else {
            est.anchors = fallback_grid(summaries);
            est.used_fallback = true;
        }
        out.report.initial_anchors = est.anchors;
        out.report.placement_fallback = est.used_fallback;
        out.report.warnings = est.warnings;
        auto placed = place_subgraphs(std::move(graph), parts, est.anchors, scorer, capturer, config, observer);
        graph = std::move(placed.graph);
        parts = std::move(placed.subgraphs);
        for (auto& t : placed.traces)
            out.report.traces.push_back(std::move(t));
    } else {
        out.report.initial_anchors.assign(parts.size(), FeatureVector{});
    }

    out.report.energy_after = scene_energy(graph, parts, bands, config);
    out.report.subgraphs = std::move(parts);
    out.graph = std::move(graph);
    return out;
}

} // namespace sgl
