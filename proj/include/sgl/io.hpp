#pragma once

#include "sgl/dynamics.hpp"
#include "sgl/error.hpp"
#include "sgl/geometry.hpp"
#include "sgl/graph.hpp"
#include "sgl/llm.hpp"
#include "sgl/optimizer.hpp"
#include "sgl/render.hpp"
#include "sgl/scoring.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

namespace sgl {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Canonical JSON

namespace detail {

inline std::string format_double(double v) {
    if (!std::isfinite(v))
        throw Error(ErrorCode::InvalidArgument, "cannot serialize a non-finite number");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    // Keep a marker that this is a real, so integral reals round-trip as reals.
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

inline void emit(const Json& j, std::string& out, int depth) {
    const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
    const std::string close_pad(static_cast<std::size_t>(2 * depth), ' ');
    switch (j.type()) {
    case Json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first)
                out += ",\n";
            first = false;
            out += pad + Json(it.key()).dump() + ": ";
            emit(it.value(), out, depth + 1);
        }
        out += "\n" + close_pad + "}";
        return;
    }
    case Json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i)
                out += ",\n";
            out += pad;
            emit(j[i], out, depth + 1);
        }
        out += "\n" + close_pad + "]";
        return;
    }
    case Json::value_t::number_float:
        out += format_double(j.get<double>());
        return;
    default:
        out += j.dump();
        return;
    }
}

} // namespace detail

/// Sorted keys, two-space indent, reals with 17 significant digits.
inline std::string canonical_json(const Json& j) {
    std::string out;
    detail::emit(j, out, 0);
    out += "\n";
    return out;
}

/// Parses JSON, reporting syntax errors with line and column.
inline Json parse_json(const std::string& text, std::string_view what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& ex) {
        const std::size_t byte = ex.byte == 0 ? 0 : ex.byte - 1;
        std::size_t line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(ErrorCode::Parse, std::string(what) + ": malformed JSON at line " + std::to_string(line) +
                                          ", column " + std::to_string(col));
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out)
        throw Error(ErrorCode::Io, "write failed for " + path.string());
}

namespace detail {

/// Strict reader over a JSON object; every access carries a field path.
class Fields {
public:
    Fields(const Json& j, std::string path, std::string context) : j_(j), path_(std::move(path)), ctx_(std::move(context)) {
        if (!j_.is_object())
            fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorCode::Parse, path_ + ": " + msg);
    }

    void only(std::initializer_list<const char*> allowed) const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool ok = false;
            for (const char* a : allowed)
                ok = ok || it.key() == a;
            if (!ok)
                throw Error(ErrorCode::Parse, path_ + "." + it.key() + ": unknown field (not defined by " + ctx_ + ")");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    const Json& at(const char* key) const {
        if (!j_.contains(key))
            throw Error(ErrorCode::Parse, path_ + "." + key + ": missing field");
        return j_.at(key);
    }

    std::string sub(const char* key) const { return path_ + "." + key; }

    double number(const char* key) const {
        const Json& v = at(key);
        if (!v.is_number())
            throw Error(ErrorCode::Parse, sub(key) + ": expected a number");
        return v.get<double>();
    }

    double number_or(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

    int integer_or(const char* key, int fallback) const {
        if (!has(key))
            return fallback;
        const Json& v = at(key);
        if (!v.is_number_integer())
            throw Error(ErrorCode::Parse, sub(key) + ": expected an integer");
        return v.get<int>();
    }

    bool boolean_or(const char* key, bool fallback) const {
        if (!has(key))
            return fallback;
        const Json& v = at(key);
        if (!v.is_boolean())
            throw Error(ErrorCode::Parse, sub(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string string(const char* key) const {
        const Json& v = at(key);
        if (!v.is_string())
            throw Error(ErrorCode::Parse, sub(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::string string_or(const char* key, std::string fallback) const {
        return has(key) ? string(key) : std::move(fallback);
    }

    const Json& array(const char* key) const {
        const Json& v = at(key);
        if (!v.is_array())
            throw Error(ErrorCode::Parse, sub(key) + ": expected an array");
        return v;
    }

private:
    const Json& j_;
    std::string path_;
    std::string ctx_;
};

inline Json feature_json(const FeatureVector& f) {
    return {{"x", f.x}, {"y", f.y}, {"z", f.z}, {"s", f.s}, {"r", f.r}};
}

inline FeatureVector read_feature(const Json& j, const std::string& path, const std::string& ctx) {
    Fields f(j, path, ctx);
    f.only({"x", "y", "z", "s", "r"});
    FeatureVector out{f.number("x"), f.number("y"), f.number("z"), f.number("s"), f.number("r")};
    if (!is_valid(out))
        throw Error(ErrorCode::Parse, path + ": feature needs finite values, s > 0 and r in [-180, 180)");
    return out;
}

inline constexpr int kSceneVersion = 1;
inline constexpr const char* kSceneContext = "scene format version 1";

} // namespace detail

// ---------------------------------------------------------------------------
// Scene files

struct SceneDocument {
    SceneGraph graph;
    std::vector<Subgraph> subgraphs;
};

inline Json scene_to_json(const SceneGraph& graph, const std::vector<Subgraph>& subgraphs = {}) {
    Json nodes = Json::array();
    for (const auto& n : graph.nodes()) {
        nodes.push_back({{"id", n.id},
                         {"label", n.label},
                         {"node_prompt", n.node_prompt},
                         {"feature", detail::feature_json(n.feature)},
                         {"base_size", {{"w", n.base_size.width}, {"d", n.base_size.depth}, {"h", n.base_size.height}}},
                         {"size_provenance", to_string(n.size_provenance)}});
    }
    Json edges = Json::array();
    for (const auto& e : graph.edges())
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}});
    Json j{{"format", "sgl-scene"},
           {"version", detail::kSceneVersion},
           {"scene_prompt", graph.scene_prompt()},
           {"nodes", std::move(nodes)},
           {"edges", std::move(edges)}};
    if (!subgraphs.empty()) {
        Json parts = Json::array();
        for (const auto& p : subgraphs)
            parts.push_back({{"members", p.member_ids}, {"anchor", detail::feature_json(p.anchor)}});
        j["subgraphs"] = std::move(parts);
    }
    return j;
}

inline std::string serialize_scene(const SceneGraph& graph, const std::vector<Subgraph>& subgraphs = {}) {
    return canonical_json(scene_to_json(graph, subgraphs));
}

inline SceneDocument scene_from_json(const Json& j) {
    using detail::Fields;
    const std::string ctx = detail::kSceneContext;
    Fields top(j, "scene", ctx);
    if (top.has("version")) {
        const Json& v = top.at("version");
        if (!v.is_number_integer())
            top.fail("version must be an integer");
        if (v.get<int>() != detail::kSceneVersion)
            throw Error(ErrorCode::Parse, "scene.version: version " + std::to_string(v.get<int>()) +
                                              " is not supported (this build reads version 1)");
    } else {
        top.at("version");
    }
    top.only({"format", "version", "scene_prompt", "nodes", "edges", "subgraphs"});
    if (top.string("format") != "sgl-scene")
        throw Error(ErrorCode::Parse, "scene.format: expected \"sgl-scene\"");

    SceneDocument doc;
    doc.graph.set_scene_prompt(top.string_or("scene_prompt", ""));
    const Json& nodes = top.array("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string path = "scene.nodes[" + std::to_string(i) + "]";
        Fields f(nodes[i], path, ctx);
        f.only({"id", "label", "node_prompt", "feature", "base_size", "size_provenance"});
        ObjectNode n;
        n.id = f.string("id");
        n.label = f.string("label");
        n.node_prompt = f.string_or("node_prompt", "");
        n.feature = detail::read_feature(f.at("feature"), f.sub("feature"), ctx);
        Fields b(f.at("base_size"), f.sub("base_size"), ctx);
        b.only({"w", "d", "h"});
        n.base_size = {b.number("w"), b.number("d"), b.number("h")};
        if (f.has("size_provenance")) {
            const auto p = parse_size_provenance(f.string("size_provenance"));
            if (!p)
                throw Error(ErrorCode::Parse, f.sub("size_provenance") + ": unknown provenance \"" +
                                                  f.string("size_provenance") + "\"");
            n.size_provenance = *p;
        }
        try {
            doc.graph.add_node(std::move(n));
        } catch (const Error& ex) {
            throw Error(ErrorCode::Parse, path + ": " + ex.what());
        }
    }
    const Json& edges = top.array("edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string path = "scene.edges[" + std::to_string(i) + "]";
        Fields f(edges[i], path, ctx);
        f.only({"src", "dst", "kind"});
        const std::string token = f.string("kind");
        const auto kind = parse_relation_kind(token);
        if (!kind)
            throw Error(ErrorCode::Parse, f.sub("kind") + ": unknown relation kind \"" + token + "\"");
        try {
            doc.graph.add_edge({f.string("src"), f.string("dst"), *kind});
        } catch (const Error& ex) {
            throw Error(ErrorCode::Parse, path + ": " + ex.what());
        }
    }
    if (top.has("subgraphs")) {
        const Json& parts = top.array("subgraphs");
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const std::string path = "scene.subgraphs[" + std::to_string(i) + "]";
            Fields f(parts[i], path, ctx);
            f.only({"members", "anchor"});
            Subgraph p;
            for (const auto& m : f.array("members")) {
                if (!m.is_string())
                    throw Error(ErrorCode::Parse, f.sub("members") + ": expected node ids");
                if (!doc.graph.contains(m.get<std::string>()))
                    throw Error(ErrorCode::Parse, f.sub("members") + ": unknown node \"" + m.get<std::string>() + "\"");
                p.member_ids.push_back(m.get<std::string>());
            }
            p.anchor = detail::read_feature(f.at("anchor"), f.sub("anchor"), ctx);
            doc.subgraphs.push_back(std::move(p));
        }
    }
    return doc;
}

inline SceneDocument parse_scene(const std::string& text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw Error(ErrorCode::Parse, "scene: file is empty");
    return scene_from_json(parse_json(text, "scene"));
}

inline SceneDocument load_scene(const std::filesystem::path& path) {
    return parse_scene(read_file(path));
}

inline void save_scene(const std::filesystem::path& path, const SceneGraph& graph,
                       const std::vector<Subgraph>& subgraphs = {}) {
    write_file(path, serialize_scene(graph, subgraphs));
}

// ---------------------------------------------------------------------------
// Reports

inline Json energy_to_json(const GlobalEnergy& e) {
    Json pen = Json::array();
    for (const auto& p : e.penalties)
        pen.push_back({{"p", p.p}, {"q", p.q}, {"value", p.value}});
    return {{"subgraph_energy", e.subgraph_energy}, {"penalties", std::move(pen)}, {"total", e.total}};
}

inline Json scores_json(const ScoreVector& s) {
    return Json(std::vector<double>(s.values.begin(), s.values.end()));
}

inline Json trace_to_json(const EdgeTrace& t) {
    Json its = Json::array();
    for (const auto& r : t.iterations) {
        its.push_back({{"iteration", r.iteration},
                       {"scores", scores_json(r.scores)},
                       {"loss", r.loss},
                       {"before", detail::feature_json(r.before)},
                       {"after", detail::feature_json(r.after)}});
    }
    Json j{{"level", to_string(t.level)}, {"target", t.target}, {"status", to_string(t.status)}, {"iterations", its}};
    if (!t.error.empty())
        j["error"] = t.error;
    return j;
}

inline Json progress_to_json(const ProgressEvent& ev) {
    return {{"level", to_string(ev.level)},
            {"target", ev.target},
            {"iteration", ev.iteration},
            {"scores", scores_json(ev.scores)},
            {"loss", ev.loss}};
}

// ---------------------------------------------------------------------------
// Trajectories

inline Json trajectory_to_json(const Trajectory& traj) {
    Json j{{"format", "sgl-trajectory"}, {"version", 1}};
    if (!traj.keyframes.empty()) {
        const SceneGraph& g = traj.keyframes.front().graph;
        Json nodes = Json::array();
        for (const auto& n : g.nodes()) {
            nodes.push_back({{"id", n.id},
                             {"label", n.label},
                             {"base_size", {{"w", n.base_size.width}, {"d", n.base_size.depth}, {"h", n.base_size.height}}}});
        }
        Json edges = Json::array();
        for (const auto& e : g.edges())
            edges.push_back({{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}});
        j["nodes"] = std::move(nodes);
        j["edges"] = std::move(edges);
    }
    Json frames = Json::array();
    for (const auto& k : traj.keyframes) {
        Json poses = Json::object();
        for (const auto& n : k.graph.nodes())
            poses[n.id] = detail::feature_json(n.feature);
        frames.push_back({{"t", k.t}, {"poses", std::move(poses)}});
    }
    j["keyframes"] = std::move(frames);
    return j;
}

inline std::string serialize_trajectory(const Trajectory& traj) {
    return canonical_json(trajectory_to_json(traj));
}

// ---------------------------------------------------------------------------
// Geometry export

enum class MeshFormat { Obj, Ply };

inline std::optional<MeshFormat> parse_mesh_format(std::string_view s) {
    if (s == "obj")
        return MeshFormat::Obj;
    if (s == "ply")
        return MeshFormat::Ply;
    return std::nullopt;
}

/// One world-space box per node: 8 vertices and 12 triangles each.
inline std::string export_geometry(const SceneGraph& graph, MeshFormat format) {
    std::string out;
    char buf[128];
    if (format == MeshFormat::Obj) {
        out += "# sgl scene export\n";
        std::size_t base = 1;
        for (const auto& n : graph.nodes()) {
            out += "g " + n.id + "\n";
            for (const auto& c : corners(world_box(n))) {
                std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", c.x, c.y, c.z);
                out += buf;
            }
            for (const auto& t : detail::kBoxTriangles) {
                std::snprintf(buf, sizeof buf, "f %zu %zu %zu\n", base + static_cast<std::size_t>(t[0]),
                              base + static_cast<std::size_t>(t[1]), base + static_cast<std::size_t>(t[2]));
                out += buf;
            }
            base += 8;
        }
        return out;
    }
    const std::size_t n = graph.size();
    out += "ply\nformat ascii 1.0\n";
    for (const auto& node : graph.nodes())
        out += "comment node " + node.id + "\n";
    out += "element vertex " + std::to_string(8 * n) + "\nproperty double x\nproperty double y\nproperty double z\n";
    out += "element face " + std::to_string(12 * n) + "\nproperty list uchar int vertex_indices\nend_header\n";
    for (const auto& node : graph.nodes()) {
        for (const auto& c : corners(world_box(node))) {
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", c.x, c.y, c.z);
            out += buf;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& t : detail::kBoxTriangles) {
            std::snprintf(buf, sizeof buf, "3 %zu %zu %zu\n", 8 * i + static_cast<std::size_t>(t[0]),
                          8 * i + static_cast<std::size_t>(t[1]), 8 * i + static_cast<std::size_t>(t[2]));
            out += buf;
        }
    }
    return out;
}

inline void export_geometry(const SceneGraph& graph, const std::filesystem::path& path, MeshFormat format) {
    write_file(path, export_geometry(graph, format));
}

// ---------------------------------------------------------------------------
// Engine configuration

struct EngineConfig {
    OptimizerConfig optimizer;
    /// "oracle" or "mllm".
    std::string scorer = "oracle";
    BandTable bands;
    double camera_margin = 0.10;
    int quadrant_size = 256;
    BackendConfig backend;
    std::string bind = "127.0.0.1:8080";
    std::size_t keyframes = 8;

    CameraRig rig() const { return CameraRig::standard(camera_margin, quadrant_size); }
};

namespace detail {

inline Band read_band(const Fields& parent, const char* key, Band fallback, const std::string& ctx) {
    if (!parent.has(key))
        return fallback;
    const Json& v = parent.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw Error(ErrorCode::Parse, parent.sub(key) + ": expected [lo, hi]");
    (void)ctx;
    return {v[0].get<double>(), v[1].get<double>()};
}

/// Runs a validator and prefixes its message with the field path.
template <typename Fn>
void check(const std::string& path, Fn&& fn) {
    try {
        fn();
    } catch (const Error& ex) {
        throw Error(ErrorCode::InvalidArgument, path + ": " + ex.what());
    }
}

} // namespace detail

inline EngineConfig config_from_json(const Json& j) {
    using detail::Fields;
    const std::string ctx = "engine config";
    EngineConfig c;
    Fields top(j, "config", ctx);
    top.only({"optimizer", "scorer", "bands", "camera", "backend", "bind", "keyframes"});
    c.scorer = top.string_or("scorer", c.scorer);
    if (c.scorer != "oracle" && c.scorer != "mllm")
        throw Error(ErrorCode::InvalidArgument, "config.scorer: expected \"oracle\" or \"mllm\", got \"" + c.scorer + "\"");
    c.bind = top.string_or("bind", c.bind);
    {
        const int k = top.integer_or("keyframes", static_cast<int>(c.keyframes));
        if (k < 2)
            throw Error(ErrorCode::InvalidArgument, "config.keyframes: must be >= 2");
        c.keyframes = static_cast<std::size_t>(k);
    }
    if (top.has("optimizer")) {
        Fields f(top.at("optimizer"), "config.optimizer", ctx);
        f.only({"weights", "step_translation", "step_scale", "step_yaw", "threshold", "max_edge_iterations",
                "max_placement_iterations", "edge_optimization", "node_refinement", "placement_refinement"});
        auto& o = c.optimizer;
        if (f.has("weights")) {
            const Json& w = f.array("weights");
            if (w.size() != 5)
                throw Error(ErrorCode::InvalidArgument, "config.optimizer.weights: expected 5 numbers");
            for (std::size_t k = 0; k < 5; ++k) {
                if (!w[k].is_number())
                    throw Error(ErrorCode::Parse, "config.optimizer.weights[" + std::to_string(k) + "]: expected a number");
                o.weights[k] = w[k].get<double>();
            }
        }
        o.step_translation = f.number_or("step_translation", o.step_translation);
        o.step_scale = f.number_or("step_scale", o.step_scale);
        o.step_yaw = f.number_or("step_yaw", o.step_yaw);
        o.threshold = f.number_or("threshold", o.threshold);
        o.max_edge_iterations = f.integer_or("max_edge_iterations", o.max_edge_iterations);
        o.max_placement_iterations = f.integer_or("max_placement_iterations", o.max_placement_iterations);
        o.edge_optimization = f.boolean_or("edge_optimization", o.edge_optimization);
        o.node_refinement = f.boolean_or("node_refinement", o.node_refinement);
        o.placement_refinement = f.boolean_or("placement_refinement", o.placement_refinement);
        detail::check("config.optimizer", [&] { o.validate(); });
    }
    if (top.has("bands")) {
        Fields f(top.at("bands"), "config.bands", ctx);
        f.only({"horizontal_gap", "horizontal_align", "vertical_gap", "vertical_align", "scale_ratio",
                "contained_extent", "yaw_tolerance_deg", "min_violation_score", "placement_gap"});
        auto& b = c.bands;
        b.horizontal_gap = detail::read_band(f, "horizontal_gap", b.horizontal_gap, ctx);
        b.horizontal_align = f.number_or("horizontal_align", b.horizontal_align);
        b.vertical_gap = detail::read_band(f, "vertical_gap", b.vertical_gap, ctx);
        b.vertical_align = f.number_or("vertical_align", b.vertical_align);
        b.scale_ratio = detail::read_band(f, "scale_ratio", b.scale_ratio, ctx);
        b.contained_extent = detail::read_band(f, "contained_extent", b.contained_extent, ctx);
        b.yaw_tolerance_deg = f.number_or("yaw_tolerance_deg", b.yaw_tolerance_deg);
        b.min_violation_score = f.number_or("min_violation_score", b.min_violation_score);
        b.placement_gap = detail::read_band(f, "placement_gap", b.placement_gap, ctx);
        detail::check("config.bands", [&] { b.validate(); });
    }
    if (top.has("camera")) {
        Fields f(top.at("camera"), "config.camera", ctx);
        f.only({"margin", "quadrant_size"});
        c.camera_margin = f.number_or("margin", c.camera_margin);
        c.quadrant_size = f.integer_or("quadrant_size", c.quadrant_size);
        detail::check("config.camera", [&] { c.rig().validate(); });
    }
    if (top.has("backend")) {
        Fields f(top.at("backend"), "config.backend", ctx);
        f.only({"endpoint", "model", "api_key", "timeout_s", "retries", "max_in_flight", "record_path", "replay_path"});
        auto& b = c.backend;
        b.endpoint = f.string_or("endpoint", b.endpoint);
        b.model = f.string_or("model", b.model);
        b.api_key = f.string_or("api_key", b.api_key);
        b.timeout_s = f.number_or("timeout_s", b.timeout_s);
        b.retries = f.integer_or("retries", b.retries);
        b.max_in_flight = f.integer_or("max_in_flight", b.max_in_flight);
        b.record_path = f.string_or("record_path", b.record_path);
        b.replay_path = f.string_or("replay_path", b.replay_path);
        if (!(b.timeout_s > 0.0))
            throw Error(ErrorCode::InvalidArgument, "config.backend.timeout_s: must be > 0");
        if (b.retries < 0)
            throw Error(ErrorCode::InvalidArgument, "config.backend.retries: must be >= 0");
        if (b.max_in_flight < 1)
            throw Error(ErrorCode::InvalidArgument, "config.backend.max_in_flight: must be >= 1");
    }
    return c;
}

/// Loads `path`, or $SGL_CONFIG when `path` is empty, or defaults when
/// neither is set. $SGL_API_KEY overrides the backend key.
inline EngineConfig load_config(const std::filesystem::path& path = {}) {
    std::filesystem::path p = path;
    if (p.empty()) {
        if (const char* env = std::getenv("SGL_CONFIG"); env && *env)
            p = env;
    }
    EngineConfig c;
    if (!p.empty())
        c = config_from_json(parse_json(read_file(p), "config"));
    if (const char* key = std::getenv("SGL_API_KEY"); key && *key)
        c.backend.api_key = key;
    return c;
}

} // namespace sgl
