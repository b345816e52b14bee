#pragma once

#include "sgl/geometry.hpp"
#include "sgl/graph.hpp"
#include "sgl/render.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sgl {

/// Five signed scores in [-100, 100]: scale, left-right (x), forward-backward
/// (y), up-down (z), yaw. Positive translation scores mean "too close",
/// positive scale means "too big", positive yaw means "rotate clockwise".
struct ScoreVector {
    std::array<double, 5> values{};

    double scale() const { return values[0]; }
    double left_right() const { return values[1]; }
    double forward_backward() const { return values[2]; }
    double up_down() const { return values[3]; }
    double yaw() const { return values[4]; }

    double axis(Axis a) const { return values[1 + static_cast<std::size_t>(a)]; }

    bool is_zero() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
    }

    bool operator==(const ScoreVector&) const = default;
};

struct ClampResult {
    ScoreVector scores;
    bool warned = false;
};

/// Componentwise clamp to [-100, 100]; NaN becomes 0. Either case sets the
/// warning flag.
inline ClampResult clamp_scores(const std::array<double, 5>& raw) {
    ClampResult out;
    for (std::size_t k = 0; k < 5; ++k) {
        double v = raw[k];
        if (std::isnan(v)) {
            v = 0.0;
            out.warned = true;
        } else if (v > 100.0 || v < -100.0) {
            v = std::clamp(v, -100.0, 100.0);
            out.warned = true;
        }
        out.scores.values[k] = v;
    }
    if (out.warned)
        spdlog::warn("score vector clamped to [-100, 100]");
    return out;
}

struct Band {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double mid() const { return 0.5 * (lo + hi); }
    double geometric_mid() const { return std::sqrt(lo * hi); }
    bool operator==(const Band&) const = default;
};

/// Numeric constants behind the oracle. Gap and alignment values are
/// fractions of the characteristic length D of the pair.
struct BandTable {
    Band horizontal_gap{0.05, 0.50};
    double horizontal_align = 0.50;
    Band vertical_gap{0.0, 0.25};
    double vertical_align = 0.25;
    /// Band on s_src / s_dst (sizes already carry the real-world ratio).
    Band scale_ratio{0.8, 1.25};
    /// Band on the largest per-axis extent ratio src/dst for containment.
    Band contained_extent{0.45, 0.8};
    double yaw_tolerance_deg = 20.0;
    /// Smallest magnitude reported for any violated channel, so a violated
    /// edge can never fall under the convergence threshold.
    double min_violation_score = 25.0;
    /// Gap band between a subgraph and its nearest neighbouring subgraph.
    Band placement_gap{0.05, 0.50};

    void validate() const {
        for (const Band* b : {&horizontal_gap, &vertical_gap, &placement_gap}) {
            if (!(b->lo >= 0.0 && b->lo <= b->hi))
                throw Error(ErrorCode::InvalidArgument, "gap band needs 0 <= lo <= hi");
        }
        for (const Band* b : {&scale_ratio, &contained_extent}) {
            if (!(b->lo > 0.0 && b->lo <= b->hi))
                throw Error(ErrorCode::InvalidArgument, "scale band needs 0 < lo <= hi");
        }
        if (!(horizontal_align > 0.0 && vertical_align > 0.0))
            throw Error(ErrorCode::InvalidArgument, "alignment bands must be positive");
        if (!(yaw_tolerance_deg > 0.0 && yaw_tolerance_deg < 180.0))
            throw Error(ErrorCode::InvalidArgument, "yaw tolerance must be in (0, 180)");
        if (!(min_violation_score >= 0.0 && min_violation_score <= 100.0))
            throw Error(ErrorCode::InvalidArgument, "min_violation_score must be in [0, 100]");
    }

    bool operator==(const BandTable&) const = default;
};

enum class ScaleMeasure {
    /// s_src / s_dst against `scale`.
    RelativeScale,
    /// max over axes of src extent / dst extent against `scale`.
    ContainedExtent,
};

enum class YawTarget {
    /// src heading points along the relation towards dst (`facing_deg`).
    FaceReference,
    /// src heading matches dst heading.
    MatchReference,
};

/// Geometric meaning of one relation kind.
struct RelationTarget {
    RelationKind kind = RelationKind::Left;
    Axis axis = Axis::X;
    /// Required sign of (src - dst) along `axis`; 0 for containment.
    int sign = -1;
    Band gap;
    double align = 0.0;
    bool containment = false;
    Band scale;
    ScaleMeasure scale_measure = ScaleMeasure::RelativeScale;
    YawTarget yaw_target = YawTarget::FaceReference;
    double facing_deg = 0.0;
};

inline RelationTarget relation_semantics(RelationKind kind, const BandTable& bands = {}) {
    RelationTarget t;
    t.kind = kind;
    t.scale = bands.scale_ratio;
    switch (kind) {
    case RelationKind::Left:
    case RelationKind::Right:
        t.axis = Axis::X;
        t.sign = kind == RelationKind::Left ? -1 : +1;
        t.gap = bands.horizontal_gap;
        t.align = bands.horizontal_align;
        t.facing_deg = kind == RelationKind::Left ? 0.0 : -180.0;
        break;
    case RelationKind::Front:
        t.axis = Axis::Y;
        t.sign = -1;
        t.gap = bands.horizontal_gap;
        t.align = bands.horizontal_align;
        t.facing_deg = 90.0;
        break;
    case RelationKind::Up:
    case RelationKind::Down:
    case RelationKind::Below:
        t.axis = Axis::Z;
        t.sign = kind == RelationKind::Up ? +1 : -1;
        t.gap = bands.vertical_gap;
        t.align = bands.vertical_align;
        t.yaw_target = YawTarget::MatchReference;
        break;
    case RelationKind::In:
        t.axis = Axis::Z;
        t.sign = 0;
        t.containment = true;
        t.scale = bands.contained_extent;
        t.scale_measure = ScaleMeasure::ContainedExtent;
        t.yaw_target = YawTarget::MatchReference;
        break;
    }
    return t;
}

/// Centre and size of a node set: a single node uses its own box (bounding
/// sphere diameter); several nodes use their union AABB (diagonal).
struct SetBounds {
    Vec3 center;
    double diameter = 0.0;
    Aabb aabb;
};

inline SetBounds set_bounds(const SceneGraph& graph, std::span<const NodeId> ids) {
    if (ids.empty())
        throw Error(ErrorCode::InvalidArgument, "set_bounds needs at least one node");
    SetBounds out;
    for (const auto& id : ids)
        out.aabb.expand(world_box(graph.node(id)));
    if (ids.size() == 1) {
        const auto box = world_box(graph.node(ids.front()));
        out.center = box.center;
        out.diameter = bounding_diameter(box);
    } else {
        out.center = out.aabb.center();
        out.diameter = norm(out.aabb.size());
    }
    return out;
}

/// Interpretation frame shared by scorers and the optimizer: per-axis unit
/// direction from the reference set to the moved set (tie -> +1) and the
/// per-axis length that a full-scale translation score stands for.
struct ScoreFrame {
    Vec3 direction{1.0, 1.0, 1.0};
    Vec3 length{1.0, 1.0, 1.0};

    static ScoreFrame uniform(const Vec3& direction, double D) { return {direction, {D, D, D}}; }
};

inline double separation_sign(double delta) { return delta >= 0.0 ? 1.0 : -1.0; }

inline ScoreFrame frame_for(const SceneGraph& graph, std::span<const NodeId> moved,
                            std::span<const NodeId> reference) {
    const auto a = set_bounds(graph, moved);
    const auto b = set_bounds(graph, reference);
    const Vec3 d = a.center - b.center;
    return ScoreFrame::uniform({separation_sign(d.x), separation_sign(d.y), separation_sign(d.z)},
                               0.5 * (a.diameter + b.diameter));
}

/// Frame of a single edge. Containment uses, per axis, the larger of the
/// reference extent and the current centre offset, so that small corrections
/// stay inside the reference and large ones still close half the distance
/// per step. Other relations use D on every axis.
inline ScoreFrame edge_frame(const SceneGraph& graph, const RelationEdge& edge) {
    const OrientedBox a = world_box(graph.node(edge.src));
    const OrientedBox b = world_box(graph.node(edge.dst));
    const Vec3 d = a.center - b.center;
    const Vec3 u{separation_sign(d.x), separation_sign(d.y), separation_sign(d.z)};
    if (edge.kind != RelationKind::In)
        return ScoreFrame::uniform(u, characteristic_length(a, b));
    ScoreFrame f{u, {}};
    for (Axis ax : kAxes) {
        const Interval di = project(b, ax);
        component(f.length, ax) = std::max(di.hi - di.lo, std::fabs(component(d, ax)));
    }
    return f;
}

/// What the oracle wants to happen to the moved set, in world terms.
struct Correction {
    Vec3 move;
    std::array<bool, 3> move_violated{false, false, false};
    double log_scale = 0.0;
    bool scale_violated = false;
    double yaw_deg = 0.0;
    bool yaw_violated = false;

    bool satisfied() const {
        return !scale_violated && !yaw_violated && !move_violated[0] && !move_violated[1] &&
               !move_violated[2];
    }
};

namespace detail {

inline double floored(double magnitude, double floor_fraction) {
    return std::min(1.0, std::max(floor_fraction, magnitude));
}

/// Correction on an axis where src must sit on side `sign` of dst with the
/// interval gap inside `gap` (fractions of D).
inline void side_axis(Correction& c, Axis axis, int sign, const Interval& src, const Interval& dst,
                      const Band& gap, double D) {
    const double t = sign * (src.center() - dst.center());
    const double g = std::max(src.lo, dst.lo) - std::min(src.hi, dst.hi);
    const auto i = static_cast<std::size_t>(axis);
    if (t > 0.0 && g >= gap.lo * D && g <= gap.hi * D)
        return;
    const double target = src.half_width() + dst.half_width() + gap.mid() * D;
    component(c.move, axis) = sign * (target - t);
    c.move_violated[i] = true;
}

inline void align_axis(Correction& c, Axis axis, double src_center, double dst_center, double limit) {
    const double d = dst_center - src_center;
    if (std::fabs(d) <= limit)
        return;
    component(c.move, axis) = d;
    c.move_violated[static_cast<std::size_t>(axis)] = true;
}

inline void yaw_channel(Correction& c, double current, double target, double tolerance) {
    const double delta = normalize_yaw(target - current);
    if (std::fabs(delta) <= tolerance)
        return;
    c.yaw_deg = delta;
    c.yaw_violated = true;
}

inline void scale_channel(Correction& c, double measure, const Band& band) {
    if (band.contains(measure))
        return;
    c.log_scale = -std::log(measure / band.geometric_mid());
    c.scale_violated = true;
}

} // namespace detail

/// World-space correction the oracle requests for `edge.src`.
inline Correction edge_correction(const SceneGraph& graph, const RelationEdge& edge,
                                  const BandTable& bands = {}) {
    const ObjectNode& src = graph.node(edge.src);
    const ObjectNode& dst = graph.node(edge.dst);
    const OrientedBox a = world_box(src);
    const OrientedBox b = world_box(dst);
    const double D = characteristic_length(a, b);
    const RelationTarget target = relation_semantics(edge.kind, bands);
    Correction c;

    if (target.containment) {
        double extent = 0.0;
        for (Axis ax : kAxes) {
            const Interval si = project(a, ax);
            const Interval di = project(b, ax);
            extent = std::max(extent, (si.hi - si.lo) / (di.hi - di.lo));
            if (di.contains(si))
                continue;
            const double slack = di.half_width() - si.half_width();
            const double off = di.center() - si.center();
            // Too large to fit: only pull towards the centre; scale does the rest.
            if (slack < 0.0 && std::fabs(off) <= 0.05 * D)
                continue;
            component(c.move, ax) = off;
            c.move_violated[static_cast<std::size_t>(ax)] = true;
        }
        detail::scale_channel(c, extent, target.scale);
    } else {
        for (Axis ax : kAxes) {
            const Interval si = project(a, ax);
            const Interval di = project(b, ax);
            if (ax == target.axis)
                detail::side_axis(c, ax, target.sign, si, di, target.gap, D);
            else
                detail::align_axis(c, ax, si.center(), di.center(), target.align * D);
        }
        detail::scale_channel(c, src.feature.s / dst.feature.s, target.scale);
    }

    const double yaw_goal =
        target.yaw_target == YawTarget::MatchReference ? dst.feature.r : target.facing_deg;
    detail::yaw_channel(c, src.feature.r, yaw_goal, bands.yaw_tolerance_deg);
    return c;
}

/// Encodes a correction as scores under the shared frame conventions.
/// Translation magnitudes are |move| / D, scale is log-ratio / log 4 and yaw
/// is degrees / 180; every violated channel reports at least
/// `min_violation_score`.
inline ScoreVector encode_correction(const Correction& c, const ScoreFrame& frame,
                                     const BandTable& bands = {}) {
    const double floor_q = bands.min_violation_score / 100.0;
    ScoreVector s;
    if (c.scale_violated) {
        const double q = -c.log_scale / std::log(4.0);
        s.values[0] = 100.0 * std::copysign(detail::floored(std::fabs(q), floor_q), q);
    }
    for (Axis ax : kAxes) {
        const auto i = static_cast<std::size_t>(ax);
        if (!c.move_violated[i])
            continue;
        const double m = component(c.move, ax);
        const double u = component(frame.direction, ax);
        // Moving along u (away from the reference) is a "too close" score.
        const double sign = m * u >= 0.0 ? 1.0 : -1.0;
        s.values[1 + i] = 100.0 * sign * detail::floored(std::fabs(m) / component(frame.length, ax), floor_q);
    }
    if (c.yaw_violated) {
        // Counter-clockwise need => negative score.
        const double q = -c.yaw_deg / 180.0;
        s.values[4] = 100.0 * std::copysign(detail::floored(std::fabs(q), floor_q), q);
    }
    return s;
}

/// Five oracle scores for one relation edge, read directly from geometry.
inline ScoreVector oracle_score(const SceneGraph& graph, const RelationEdge& edge,
                                const BandTable& bands = {}) {
    if (!graph.find_edge(edge.src, edge.dst))
        throw Error(ErrorCode::UnknownId, "unknown edge " + edge.src + " -> " + edge.dst);
    return encode_correction(edge_correction(graph, edge, bands), edge_frame(graph, edge), bands);
}

enum class ScoringLevel { Edge, Node, Subgraph };

inline const char* to_string(ScoringLevel l) {
    switch (l) {
    case ScoringLevel::Edge: return "edge";
    case ScoringLevel::Node: return "node";
    case ScoringLevel::Subgraph: return "subgraph";
    }
    return "edge";
}

/// One scoring step: X1 is being optimized against fixed X2. `capture`
/// renders the X1/X2/X_all montages on demand.
struct ScoringRequest {
    const SceneGraph* graph = nullptr;
    ScoringLevel level = ScoringLevel::Edge;
    std::vector<NodeId> x1;
    std::vector<NodeId> x2;
    std::optional<RelationEdge> edge;
    std::string x1_description;
    std::string x2_description;
    std::string scene_description;
    std::function<MontageTriplet()> capture;
};

/// Scorer contract: total (returns or throws sgl::Error), stateless apart
/// from configuration.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual ScoreVector score(const ScoringRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Node-level correction: mean of the corrections of the node's outgoing
/// edges into X2. Zero when all of them hold.
inline Correction node_correction(const SceneGraph& graph, const NodeId& node,
                                  std::span<const NodeId> others, const BandTable& bands = {}) {
    Correction sum;
    int count = 0;
    for (const auto& e : graph.edges()) {
        if (e.src != node || std::find(others.begin(), others.end(), e.dst) == others.end())
            continue;
        const Correction c = edge_correction(graph, e, bands);
        ++count;
        sum.move = sum.move + c.move;
        sum.log_scale += c.log_scale;
        sum.yaw_deg += c.yaw_deg;
        for (std::size_t i = 0; i < 3; ++i)
            sum.move_violated[i] = sum.move_violated[i] || c.move_violated[i];
        sum.scale_violated = sum.scale_violated || c.scale_violated;
        sum.yaw_violated = sum.yaw_violated || c.yaw_violated;
    }
    if (count > 1) {
        sum.move = sum.move / count;
        sum.log_scale /= count;
        sum.yaw_deg /= count;
    }
    return sum;
}

/// Subgraph-level correction: keep the moved set within `placement_gap` of
/// its nearest neighbouring component along x.
inline Correction placement_correction(const SceneGraph& graph, std::span<const NodeId> moved,
                                       std::span<const NodeId> others, const BandTable& bands = {}) {
    Correction c;
    if (moved.empty() || others.empty())
        return c;
    const auto mine = set_bounds(graph, moved);
    std::optional<SetBounds> nearest;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& part : partition_subgraphs(graph)) {
        std::vector<NodeId> group;
        for (const auto& id : part.member_ids) {
            if (std::find(others.begin(), others.end(), id) != others.end())
                group.push_back(id);
        }
        if (group.empty())
            continue;
        const auto b = set_bounds(graph, group);
        const double dist = norm(b.center - mine.center);
        if (dist < best) {
            best = dist;
            nearest = b;
        }
    }
    if (!nearest)
        return c;
    const double D = 0.5 * (mine.diameter + nearest->diameter);
    const int sign = static_cast<int>(separation_sign(mine.center.x - nearest->center.x));
    detail::side_axis(c, Axis::X, sign, mine.aabb.on(Axis::X), nearest->aabb.on(Axis::X),
                      bands.placement_gap, D);
    return c;
}

/// Deterministic scorer computing the five scores from box geometry and the
/// band table. Ignores the montages.
class OracleScorer final : public Scorer {
public:
    OracleScorer() = default;
    explicit OracleScorer(BandTable bands) : bands_(bands) { bands_.validate(); }

    const BandTable& bands() const noexcept { return bands_; }

    ScoreVector score(const ScoringRequest& req) override {
        if (req.graph == nullptr)
            throw Error(ErrorCode::InvalidArgument, "scoring request without a graph");
        const SceneGraph& g = *req.graph;
        switch (req.level) {
        case ScoringLevel::Edge:
            if (!req.edge)
                throw Error(ErrorCode::InvalidArgument, "edge-level scoring needs an edge");
            return oracle_score(g, *req.edge, bands_);
        case ScoringLevel::Node:
            if (req.x1.size() != 1 || req.x2.empty())
                return {};
            return encode_correction(node_correction(g, req.x1.front(), req.x2, bands_),
                                     frame_for(g, req.x1, req.x2), bands_);
        case ScoringLevel::Subgraph:
            if (req.x1.empty() || req.x2.empty())
                return {};
            return encode_correction(placement_correction(g, req.x1, req.x2, bands_),
                                     frame_for(g, req.x1, req.x2), bands_);
        }
        return {};
    }

    std::string name() const override { return "oracle"; }

private:
    BandTable bands_;
};

} // namespace sgl
