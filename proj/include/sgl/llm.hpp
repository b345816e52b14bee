#pragma once

#include "sgl/error.hpp"
#include "sgl/geometry.hpp"
#include "sgl/graph.hpp"
#include "sgl/optimizer.hpp"
#include "sgl/render.hpp"
#include "sgl/scoring.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace sgl {

// ---------------------------------------------------------------------------
// Encoding helpers

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::InvalidArgument, "sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

inline std::string base64_encode(std::string_view data) {
    std::string out(4 * ((data.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(data.data()),
                                  static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

// ---------------------------------------------------------------------------
// Chat abstraction

struct ChatMessage {
    std::string role = "user";
    std::string text;
    /// PNG-encoded image attachments, in order.
    std::vector<std::string> images;
};

using ChatRequest = std::vector<ChatMessage>;

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Returns the reply text or throws Error (Backend, Timeout, Replay).
    virtual std::string complete(const ChatRequest& messages) = 0;
};

struct HttpRequest {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
    double timeout_s = 60.0;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Network seam. Implementations throw Error(Timeout) or Error(Backend) when
/// no response arrives.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

struct BackendConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key;
    double timeout_s = 60.0;
    int retries = 2;
    int max_in_flight = 4;
    std::string record_path;
    std::string replay_path;
};

namespace detail {

/// Counting gate for concurrent backend calls.
class InFlightLimit {
public:
    explicit InFlightLimit(int limit) : limit_(std::max(1, limit)) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return active_ < limit_; });
        ++active_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int limit_;
    int active_ = 0;
};

} // namespace detail

/// Chat-completions client over an injected transport. Images travel as
/// base64 PNG data URLs.
class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(BackendConfig config, std::shared_ptr<HttpTransport> transport)
        : config_(std::move(config)), transport_(std::move(transport)), limit_(config_.max_in_flight) {
        if (!transport_)
            throw Error(ErrorCode::InvalidArgument, "HttpChatBackend needs a transport");
    }

    static nlohmann::json request_body(const BackendConfig& config, const ChatRequest& messages) {
        nlohmann::json msgs = nlohmann::json::array();
        for (const auto& m : messages) {
            nlohmann::json content = nlohmann::json::array();
            content.push_back({{"type", "text"}, {"text", m.text}});
            for (const auto& png : m.images) {
                content.push_back({{"type", "image_url"},
                                   {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
            }
            msgs.push_back({{"role", m.role}, {"content", std::move(content)}});
        }
        return {{"model", config.model}, {"messages", std::move(msgs)}, {"temperature", 0}};
    }

    std::string complete(const ChatRequest& messages) override {
        HttpRequest req;
        req.url = config_.endpoint;
        req.body = request_body(config_, messages).dump();
        req.timeout_s = config_.timeout_s;
        req.headers.emplace_back("Content-Type", "application/json");
        if (!config_.api_key.empty())
            req.headers.emplace_back("Authorization", "Bearer " + config_.api_key);

        limit_.acquire();
        struct Release {
            detail::InFlightLimit& l;
            ~Release() { l.release(); }
        } release{limit_};

        ErrorCode last_code = ErrorCode::Backend;
        std::string last_error;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            HttpResponse resp;
            try {
                resp = transport_->post(req);
            } catch (const Error& ex) {
                last_code = ex.code();
                last_error = ex.what();
                spdlog::warn("chat request attempt {} failed: {}", attempt + 1, ex.what());
                continue;
            }
            if (resp.status == 429 || resp.status >= 500) {
                last_code = ErrorCode::Backend;
                last_error = "HTTP " + std::to_string(resp.status);
                spdlog::warn("chat request attempt {} got HTTP {}", attempt + 1, resp.status);
                continue;
            }
            if (resp.status != 200)
                throw Error(ErrorCode::Backend, "chat endpoint returned HTTP " + std::to_string(resp.status) +
                                                    ": " + resp.body.substr(0, 200));
            return extract_reply(resp.body);
        }
        throw Error(last_code, "chat request failed after " + std::to_string(config_.retries + 1) +
                                   " attempts: " + last_error);
    }

    static std::string extract_reply(const std::string& body) {
        const auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded())
            throw Error(ErrorCode::Backend, "chat endpoint returned malformed JSON");
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::Backend, "chat reply lacks choices[0].message.content");
        }
    }

private:
    BackendConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    detail::InFlightLimit limit_;
};

// ---------------------------------------------------------------------------
// Record / replay

/// Digest of a request: SHA-256 over canonical JSON of roles, texts and the
/// SHA-256 of each image.
inline std::string request_digest(const ChatRequest& messages) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : messages) {
        nlohmann::json imgs = nlohmann::json::array();
        for (const auto& png : m.images)
            imgs.push_back(sha256_hex(png));
        j.push_back({{"images", imgs}, {"role", m.role}, {"text", m.text}});
    }
    return sha256_hex(j.dump());
}

struct SessionEntry {
    std::string digest;
    std::string reply;
};

/// Ordered (digest, reply) log stored as JSON lines.
class RecordedSession {
public:
    RecordedSession() = default;
    explicit RecordedSession(std::vector<SessionEntry> entries) : entries_(std::move(entries)) {}

    const std::vector<SessionEntry>& entries() const noexcept { return entries_; }

    void append(SessionEntry e) { entries_.push_back(std::move(e)); }

    std::string to_jsonl() const {
        std::string out;
        for (const auto& e : entries_)
            out += nlohmann::json{{"digest", e.digest}, {"reply", e.reply}}.dump() + "\n";
        return out;
    }

    static RecordedSession from_jsonl(std::string_view text) {
        RecordedSession s;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos < text.size()) {
            const std::size_t end = std::min(text.find('\n', pos), text.size());
            const std::string line(text.substr(pos, end - pos));
            pos = end + 1;
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos)
                continue;
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("digest") || !j.contains("reply") ||
                !j["digest"].is_string() || !j["reply"].is_string())
                throw Error(ErrorCode::Parse, "session line " + std::to_string(line_no) +
                                                  ": expected {\"digest\": string, \"reply\": string}");
            s.entries_.push_back({j["digest"].get<std::string>(), j["reply"].get<std::string>()});
        }
        return s;
    }

    static RecordedSession load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error(ErrorCode::Io, "cannot open session file " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return from_jsonl(ss.str());
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::Io, "cannot write session file " + path.string());
        out << to_jsonl();
    }

private:
    std::vector<SessionEntry> entries_;
};

/// Answers strictly from a recorded session. Repeated digests are served in
/// recorded order; an unrecorded request is an error.
class ReplayBackend final : public ChatBackend {
public:
    explicit ReplayBackend(const RecordedSession& session) {
        for (const auto& e : session.entries())
            queues_[e.digest].push_back(e.reply);
    }

    std::string complete(const ChatRequest& messages) override {
        const std::string d = request_digest(messages);
        std::lock_guard lock(mu_);
        auto it = queues_.find(d);
        if (it == queues_.end() || it->second.empty())
            throw Error(ErrorCode::Replay, "no recorded reply for request " + d.substr(0, 16));
        std::string r = std::move(it->second.front());
        it->second.pop_front();
        return r;
    }

private:
    std::map<std::string, std::deque<std::string>> queues_;
    std::mutex mu_;
};

/// Forwards to an inner backend and logs every exchange.
class RecordingBackend final : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path path = {})
        : inner_(std::move(inner)), path_(std::move(path)) {}

    std::string complete(const ChatRequest& messages) override {
        std::string reply = inner_->complete(messages);
        std::lock_guard lock(mu_);
        session_.append({request_digest(messages), reply});
        if (!path_.empty()) {
            std::ofstream out(path_, std::ios::binary | std::ios::app);
            if (!out)
                throw Error(ErrorCode::Io, "cannot append to session file " + path_.string());
            out << nlohmann::json{{"digest", request_digest(messages)}, {"reply", reply}}.dump() << "\n";
        }
        return reply;
    }

    const RecordedSession& session() const noexcept { return session_; }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path path_;
    RecordedSession session_;
    std::mutex mu_;
};

/// Replay when a replay path is set (the transport is never touched),
/// otherwise a live client, wrapped in a recorder when a record path is set.
inline std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config,
                                                 std::shared_ptr<HttpTransport> transport) {
    if (!config.replay_path.empty())
        return std::make_shared<ReplayBackend>(RecordedSession::load(config.replay_path));
    std::shared_ptr<ChatBackend> live = std::make_shared<HttpChatBackend>(config, std::move(transport));
    if (!config.record_path.empty()) {
        std::filesystem::remove(config.record_path);
        return std::make_shared<RecordingBackend>(std::move(live), config.record_path);
    }
    return live;
}

// ---------------------------------------------------------------------------
// Prompt templates

inline constexpr std::string_view kPrompt1 =
    R"(You are an expert in computer graphics, computer vision, and scene design. Below I will send you a sentence. The sentence will describe some objects in a scene. I want you to help me construct a graph with nodes and edges, where nodes represent the objects in the scene, and edges represent the objects' connections.

Here are the guided steps to construct the structure:

First, you should analyze the sentence, identify all object categories, count the objects, and assign each object a short prompt for 3D generation. These objects are the nodes of the graph. The result of nodes should follow this format:
"nodes = [obj_1, obj_2, obj_3, ...], node-prompts = [prompt of obj_1, prompt of obj_2 , prompt of obj_3]"
For example:
"nodes = [apple, banana, toy], node-prompts = [a fresh red apple, a ripe yellow banana, a colorful toy car]".

Secondly, after collecting all nodes, you should identify all connections between objects. These connections are the edges of the graph, which should strictly be uni-directional. You should only use interaction like {left, right, up, down, front, below, in} to describe the interactions between objects. The result of edges should follow this format, where "obj_a {interaction} obj_b" means "obj_a" is in the position described by "interaction" relative to "obj_b":
"edges = [obj_1 {interaction_1} obj_2, obj_2 {interaction_4} obj_3, ...]".
For example:
"edges = [apple left banana, toy on bed]".

You should determine the most common interaction if there are multiple choices.

The target sentence is: )";

inline constexpr std::string_view kPrompt2 =
    R"(You are an expert in computer graphics, computer vision, and scene design. I will send you a sentence and 3 images, all images are four views of a scene, where the left-top is a front view, the right-top is a side view, the bottom-left is a top-down view, and the bottom-right is an angled perspective view.

These images are respectively:

1. The optimized objects: {X1}.
2. Other objects: {X2}.
3. entire scene {X_all}.

The position, rotation, and scale of {X2} are correct in the scene. There might be some incorrect scale, location, and rotation of {X1}, which are unlikely to form a realistic layout in a scene satisfying {X_all} in the third image. Please now modify the scene step by step:

Please evaluate whether {X1} in the scene meets the requirement. Provide five scores from -100 to 100 based on the following criteria respectively:

1. First score is about the scale of {X1}:
    If {X1} in the scene is at an appropriate size, give a score close to zero.
    If {X1} in the scene is too big, give a high positive score.
    If {X1} in the scene is too small, give a high negative score.

2. Second score is about {X1}'s location in the left-and-right direction:
    (You must not consider the side view image to rate the score; consider the x-axis in both the front-view and top-down view.)
    If {X1} in the scene is at an appropriate location, give a score close to zero.
    If {X1} is too close to {X2}, give a high positive score.
    If {X1} is too far from {X2}, give a high negative score.

3. Third score is about {X1}'s location in the forward-and-backward direction:
    (You must not consider the front-view image to rate the score; consider the x-axis in the side-view and the y-axis in the top-down view.)
    If {X1} in the scene is at an appropriate location, give a score close to zero.
    If {X1} is too close to {X2}, give a high positive score.
    If {X1} is too far from {X2}, give a high negative score.

4. Fourth score is about {X1}'s location in the up-and-down direction:
    (You must not consider the top-down view to rate this score; consider the y-axis in both the front-view and side-view.)
    If {X1} in the scene is at an appropriate location, give a score close to zero.
    If {X1} is too close to {X2}, give a high positive score.
    If {X1} is too far from {X2}, give a high negative score.

5. Fifth score is about {X1}'s yaw rotation:
    (You should consider the top-view image.)
    If {X1} in the scene is at an appropriate rotation, give a score close to zero.
    If {X1} should rotate clockwise, give a positive score.
    If {X1} should rotate counterclockwise, give a negative score.

The return should begin with:
The score-1 is: ...
The score-2 is: ...
The score-3 is: ...
The score-4 is: ...
The score-5 is: ...)";

namespace detail {

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n\"'`*");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n\"'`*.");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::vector<std::string> split_list(std::string_view body) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        const std::size_t end = std::min(body.find(',', pos), body.size());
        std::string item = trim(body.substr(pos, end - pos));
        if (!item.empty())
            out.push_back(std::move(item));
        pos = end + 1;
    }
    return out;
}

inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string w;
    while (in >> w)
        out.push_back(w);
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace detail

inline ChatRequest build_prompt1(std::string_view scene_sentence) {
    if (detail::trim(scene_sentence).empty())
        throw Error(ErrorCode::InvalidArgument, "scene sentence must be non-empty");
    return {{"user", std::string(kPrompt1) + std::string(scene_sentence), {}}};
}

inline ChatRequest build_prompt2(std::string_view x1_desc, std::string_view x2_desc, std::string_view scene_desc,
                                 std::vector<std::string> images) {
    if (images.size() != 3)
        throw Error(ErrorCode::InvalidArgument,
                    "Prompt 2 needs exactly 3 images, got " + std::to_string(images.size()));
    std::string text(kPrompt2);
    text = detail::replace_all(std::move(text), "{X_all}", scene_desc);
    text = detail::replace_all(std::move(text), "{X1}", x1_desc);
    text = detail::replace_all(std::move(text), "{X2}", x2_desc);
    return {{"user", std::move(text), std::move(images)}};
}

inline ChatRequest build_prompt2(std::string_view x1_desc, std::string_view x2_desc, std::string_view scene_desc,
                                 const MontageTriplet& triplet) {
    return build_prompt2(x1_desc, x2_desc, scene_desc,
                         {encode_png(triplet.x1.pixels), encode_png(triplet.x2.pixels),
                          encode_png(triplet.all.pixels)});
}

// ---------------------------------------------------------------------------
// Graph reply

struct EdgeTriple {
    std::string src;
    std::string token;
    std::string dst;
    /// Resolved relation; empty when the token is outside the vocabulary.
    std::optional<RelationKind> kind;
};

struct GraphSpecReply {
    std::vector<std::string> labels;
    std::vector<std::string> node_prompts;
    std::vector<EdgeTriple> edges;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string find_list(const std::string& text, const char* name) {
    const std::regex re(std::string("(^|[^A-Za-z_-])") + name + R"(\s*=\s*\[([^\]]*)\])", std::regex::icase);
    std::smatch m;
    if (!std::regex_search(text, m, re))
        throw Error(ErrorCode::Parse, std::string("reply is missing the \"") + name + " = [...]\" section");
    return m[2].str();
}

/// Maps a relation token; "on" becomes Up with a warning.
inline std::optional<RelationKind> relation_token(const std::string& token, std::vector<std::string>& warnings) {
    if (auto k = parse_relation_kind(token))
        return k;
    if (lower(token) == "on") {
        warnings.push_back("relation \"on\" interpreted as \"up\"");
        return RelationKind::Up;
    }
    return std::nullopt;
}

/// Splits "a b token c d" into (longest known prefix, middle, longest known
/// suffix). Labels are compared case-insensitively.
inline std::optional<EdgeTriple> split_edge(const std::string& entry, const std::vector<std::string>& labels) {
    const auto w = words(entry);
    std::size_t best_prefix = 0;
    std::size_t best_suffix = 0;
    std::string src;
    std::string dst;
    for (const auto& label : labels) {
        const auto lw = words(lower(label));
        if (lw.empty() || lw.size() + 2 > w.size())
            continue;
        bool pre = true;
        bool suf = true;
        for (std::size_t i = 0; i < lw.size(); ++i) {
            pre = pre && lower(w[i]) == lw[i];
            suf = suf && lower(w[w.size() - lw.size() + i]) == lw[i];
        }
        if (pre && lw.size() > best_prefix) {
            best_prefix = lw.size();
            src = label;
        }
        if (suf && lw.size() > best_suffix) {
            best_suffix = lw.size();
            dst = label;
        }
    }
    if (best_prefix == 0 || best_suffix == 0 || best_prefix + best_suffix >= w.size())
        return std::nullopt;
    std::vector<std::string> mid(w.begin() + static_cast<std::ptrdiff_t>(best_prefix),
                                 w.end() - static_cast<std::ptrdiff_t>(best_suffix));
    return EdgeTriple{src, join(mid, " "), dst, std::nullopt};
}

} // namespace detail

/// Node identifiers: the label itself when unique, else label#k (1-based
/// occurrence index).
inline std::vector<NodeId> assign_ids(const std::vector<std::string>& labels) {
    std::map<std::string, int> total;
    for (const auto& l : labels)
        ++total[l];
    std::map<std::string, int> seen;
    std::vector<NodeId> ids;
    for (const auto& l : labels) {
        const int k = ++seen[l];
        ids.push_back(total[l] > 1 ? l + "#" + std::to_string(k) : l);
    }
    return ids;
}

/// Parses the nodes / node-prompts / edges lists of a graph reply. Edge
/// endpoints must name a parsed node (a label or a label#k id); unknown
/// relation tokens are dropped with a warning.
inline GraphSpecReply parse_graph_reply(const std::string& text) {
    GraphSpecReply out;
    out.labels = detail::split_list(detail::find_list(text, "nodes"));
    out.node_prompts = detail::split_list(detail::find_list(text, "node-prompts"));
    const auto edges = detail::split_list(detail::find_list(text, "edges"));
    if (out.labels.empty())
        throw Error(ErrorCode::Parse, "reply lists no nodes");
    if (out.labels.size() != out.node_prompts.size())
        throw Error(ErrorCode::Parse, "nodes and node-prompts differ in length (" +
                                          std::to_string(out.labels.size()) + " vs " +
                                          std::to_string(out.node_prompts.size()) + ")");
    auto names = out.labels;
    for (const auto& id : assign_ids(out.labels))
        names.push_back(id);
    for (const auto& entry : edges) {
        auto triple = detail::split_edge(entry, names);
        if (!triple)
            throw Error(ErrorCode::Parse, "cannot resolve edge endpoints in \"" + entry + "\"");
        triple->kind = detail::relation_token(triple->token, out.warnings);
        if (!triple->kind) {
            out.warnings.push_back("unknown relation \"" + triple->token + "\" in \"" + entry + "\"; edge dropped");
        }
        out.edges.push_back(std::move(*triple));
    }
    for (const auto& w : out.warnings)
        spdlog::warn("{}", w);
    return out;
}

/// Builds the scene graph of a parsed reply. A plain label that names
/// several nodes resolves to its first occurrence.
inline SceneGraph graph_from_reply(const GraphSpecReply& reply, std::string scene_prompt,
                                   const std::vector<SizeEstimate>& sizes = {}) {
    SceneGraph g(std::move(scene_prompt));
    const auto ids = assign_ids(reply.labels);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ObjectNode n;
        n.id = ids[i];
        n.label = reply.labels[i];
        n.node_prompt = reply.node_prompts[i];
        const SizeEstimate est = i < sizes.size() ? sizes[i] : default_size();
        n.base_size = est.extent();
        n.size_provenance = est.provenance;
        g.add_node(std::move(n));
    }
    auto resolve = [&](const std::string& name) -> NodeId {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (detail::lower(ids[i]) == detail::lower(name))
                return ids[i];
        }
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (detail::lower(reply.labels[i]) == detail::lower(name))
                return ids[i];
        }
        throw Error(ErrorCode::Parse, "unresolvable edge endpoint \"" + name + "\"");
    };
    for (const auto& e : reply.edges) {
        if (!e.kind)
            continue;
        RelationEdge edge{resolve(e.src), resolve(e.dst), *e.kind};
        if (edge.src == edge.dst)
            throw Error(ErrorCode::Parse, "edge relates \"" + e.src + "\" to itself");
        g.set_edge(std::move(edge));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Scores

/// Extracts the five "The score-k is:" values; prose around them is ignored.
inline ScoreVector parse_scores(const std::string& text, bool* warned = nullptr) {
    static const std::regex anchor(R"(score[\s-]*([1-5])\s*is\s*:?)", std::regex::icase);
    static const std::regex number(R"(^[\s*`"']*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))");
    std::array<std::optional<double>, 5> found;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), anchor); it != std::sregex_iterator(); ++it) {
        const int k = std::stoi((*it)[1].str()) - 1;
        if (found[static_cast<std::size_t>(k)])
            continue;
        const auto rest_begin = text.begin() + (it->position(0) + it->length(0));
        const auto line_end = std::find(rest_begin, text.end(), '\n');
        const std::string rest(rest_begin, line_end);
        std::smatch m;
        if (!std::regex_search(rest, m, number))
            throw Error(ErrorCode::Parse, "score-" + std::to_string(k + 1) + " is not numeric: \"" +
                                              detail::trim(rest) + "\"");
        found[static_cast<std::size_t>(k)] = std::strtod(m[1].str().c_str(), nullptr);
    }
    std::array<double, 5> raw{};
    std::vector<int> missing;
    for (std::size_t k = 0; k < 5; ++k) {
        if (!found[k])
            missing.push_back(static_cast<int>(k) + 1);
        else
            raw[k] = *found[k];
    }
    if (!missing.empty()) {
        std::string list;
        for (int k : missing)
            list += (list.empty() ? "" : ", ") + std::to_string(k);
        throw Error(ErrorCode::Parse, "reply lacks score anchors " + list);
    }
    const auto c = clamp_scores(raw);
    if (warned)
        *warned = c.warned;
    return c.scores;
}

inline std::string format_scores(const ScoreVector& s) {
    std::string out;
    char buf[64];
    for (std::size_t k = 0; k < 5; ++k) {
        std::snprintf(buf, sizeof buf, "The score-%zu is: %.17g\n", k + 1, s.values[k]);
        out += buf;
    }
    return out;
}

/// Scorer backed by a multimodal chat model: renders the triplet, sends
/// Prompt 2 and parses the reply.
class MllmScorer final : public Scorer {
public:
    explicit MllmScorer(std::shared_ptr<ChatBackend> backend) : backend_(std::move(backend)) {
        if (!backend_)
            throw Error(ErrorCode::InvalidArgument, "MllmScorer needs a backend");
    }

    ScoreVector score(const ScoringRequest& req) override {
        if (!req.capture)
            throw Error(ErrorCode::InvalidArgument, "MLLM scoring needs a view capture");
        const auto triplet = req.capture();
        const auto reply = backend_->complete(
            build_prompt2(req.x1_description, req.x2_description, req.scene_description, triplet));
        bool warned = false;
        auto s = parse_scores(reply, &warned);
        if (warned)
            spdlog::warn("scores out of range were clamped");
        return s;
    }

    std::string name() const override { return "mllm"; }

private:
    std::shared_ptr<ChatBackend> backend_;
};

// ---------------------------------------------------------------------------
// Size, placement and state queries

inline ChatRequest build_size_prompt(std::string_view label, std::string_view node_prompt) {
    std::string text = "What is the typical real-world size of this object: ";
    text += node_prompt.empty() ? label : node_prompt;
    text += " (" + std::string(label) + ")?\n"
            "Answer with its width, depth and height in centimeters, in this form: "
            "\"40 cm in width, 40 cm in length and 90 cm in height\".";
    return {{"user", std::move(text), {}}};
}

/// First three magnitudes with optional units (mm, cm, m, in, ft; bare
/// numbers are centimetres), converted to metres.
inline std::optional<SizeEstimate> parse_size_reply(const std::string& text) {
    static const std::regex re(
        R"((\d+(?:\.\d+)?|\.\d+)\s*(millimeters?|millimetres?|mm|centimeters?|centimetres?|cm|meters?|metres?|m|inches|inch|in|feet|foot|ft)?(?![A-Za-z]))",
        std::regex::icase);
    std::vector<double> vals;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
         it != std::sregex_iterator() && vals.size() < 3; ++it) {
        const double v = std::strtod((*it)[1].str().c_str(), nullptr);
        const std::string u = detail::lower((*it)[2].str());
        double k = 0.01;
        if (u.rfind("mm", 0) == 0 || u.rfind("milli", 0) == 0)
            k = 0.001;
        else if (u == "m" || u.rfind("meter", 0) == 0 || u.rfind("metre", 0) == 0)
            k = 1.0;
        else if (u == "in" || u.rfind("inch", 0) == 0)
            k = 0.0254;
        else if (u == "ft" || u == "feet" || u == "foot")
            k = 0.3048;
        vals.push_back(v * k);
    }
    if (vals.size() < 3 || !std::all_of(vals.begin(), vals.end(), [](double v) { return v > 0.0; }))
        return std::nullopt;
    return SizeEstimate{vals[0], vals[1], vals[2], SizeProvenance::Llm};
}

/// Size of one object; an unusable reply falls back to the default cube.
inline SizeEstimate query_size(ChatBackend& backend, std::string_view label, std::string_view node_prompt) {
    const std::string reply = backend.complete(build_size_prompt(label, node_prompt));
    if (auto s = parse_size_reply(reply))
        return *s;
    spdlog::warn("size reply for \"{}\" unusable; using the default cube", label);
    return default_size();
}

inline ChatRequest build_placement_prompt(std::span<const SubgraphSummary> summaries) {
    std::string text =
        "You are an expert in scene design. A scene consists of the following groups of objects. "
        "Each group is already arranged internally and is given with its objects and its bounding "
        "size (width, depth, height) in meters.\n\n";
    char buf[160];
    for (std::size_t k = 0; k < summaries.size(); ++k) {
        const auto& s = summaries[k];
        std::snprintf(buf, sizeof buf, " (%.3g x %.3g x %.3g m)\n", s.extent.x, s.extent.y, s.extent.z);
        text += "subgraph-" + std::to_string(k + 1) + ": " + detail::join(s.labels, ", ") + buf;
    }
    text += "\nEstimate a rough placement for every group so that the scene looks realistic. "
            "Reply with one line per group in the form \"subgraph-k = [x, y, z, scale, yaw]\", where x, y, z "
            "are the group centre in meters (x to the right, y away from the viewer, z up), scale is a "
            "positive factor and yaw is in degrees about the vertical axis.";
    return {{"user", std::move(text), {}}};
}

inline std::optional<std::vector<FeatureVector>> parse_placement_reply(const std::string& text, std::size_t count) {
    static const std::regex re(R"(subgraph[\s-]*(\d+)\s*[=:]\s*\[([^\]]*)\])", std::regex::icase);
    std::vector<std::optional<FeatureVector>> found(count);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        const std::size_t k = std::stoul((*it)[1].str());
        if (k < 1 || k > count)
            continue;
        const auto parts = detail::split_list((*it)[2].str());
        if (parts.size() != 5)
            return std::nullopt;
        std::array<double, 5> v{};
        for (std::size_t i = 0; i < 5; ++i) {
            char* end = nullptr;
            v[i] = std::strtod(parts[i].c_str(), &end);
            if (end == parts[i].c_str())
                return std::nullopt;
        }
        FeatureVector f{v[0], v[1], v[2], v[3], normalize_yaw(v[4])};
        if (!is_valid(f))
            return std::nullopt;
        found[k - 1] = f;
    }
    std::vector<FeatureVector> out;
    for (const auto& f : found) {
        if (!f)
            return std::nullopt;
        out.push_back(*f);
    }
    return out;
}

/// Initial anchors from the model. One subgraph needs no query; backend
/// failures and malformed replies fall back to the grid, flagged.
inline PlacementEstimate query_subgraph_placement(ChatBackend* backend, std::span<const SubgraphSummary> summaries) {
    PlacementEstimate out;
    if (summaries.size() <= 1) {
        out.anchors.assign(summaries.size(), FeatureVector{});
        return out;
    }
    auto fall_back = [&](std::string why) {
        spdlog::warn("subgraph placement: {}; using the fallback grid", why);
        out.warnings.push_back(std::move(why));
        out.anchors = fallback_grid(summaries);
        out.used_fallback = true;
        return out;
    };
    if (!backend)
        return fall_back("no backend configured");
    std::string reply;
    try {
        reply = backend->complete(build_placement_prompt(summaries));
    } catch (const Error& ex) {
        return fall_back(std::string("backend failed: ") + ex.what());
    }
    auto parsed = parse_placement_reply(reply, summaries.size());
    if (!parsed)
        return fall_back("malformed placement reply");
    out.anchors = std::move(*parsed);
    return out;
}

struct StatePlan {
    /// Final-state description per node id.
    std::vector<std::pair<NodeId, std::string>> states;
    std::vector<RelationEdge> edges;
    std::vector<std::string> warnings;
};

namespace detail {

inline bool mentions(const std::string& sentence, const std::string& label) {
    const auto s = words(lower(sentence));
    const auto l = words(lower(label));
    if (l.empty())
        return false;
    for (std::size_t i = 0; i + l.size() <= s.size(); ++i) {
        bool ok = true;
        for (std::size_t j = 0; j < l.size() && ok; ++j) {
            std::string w = s[i + j];
            while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.back())) && w.back() != '#')
                w.pop_back();
            ok = w == l[j] || w == l[j] + "s";
        }
        if (ok)
            return true;
    }
    return false;
}

inline std::vector<std::string> known_names(const SceneGraph& g) {
    std::vector<std::string> names;
    for (const auto& n : g.nodes()) {
        names.push_back(n.id);
        if (n.label != n.id)
            names.push_back(n.label);
    }
    return names;
}

inline NodeId resolve_name(const SceneGraph& g, const std::string& name) {
    for (const auto& n : g.nodes()) {
        if (lower(n.id) == lower(name))
            return n.id;
    }
    for (const auto& n : g.nodes()) {
        if (lower(n.label) == lower(name))
            return n.id;
    }
    return {};
}

/// Parses "edges = [...]" against the graph's names; unknown endpoints are
/// collected rather than thrown.
inline std::vector<RelationEdge> parse_edges_against(const SceneGraph& g, const std::string& text,
                                                     std::vector<std::string>& warnings,
                                                     std::vector<std::string>& unknown,
                                                     const std::vector<std::pair<std::string, NodeId>>& extra = {}) {
    std::vector<RelationEdge> out;
    auto names = known_names(g);
    for (const auto& [name, id] : extra)
        names.push_back(name);
    auto resolve = [&](const std::string& name) {
        for (const auto& [n, id] : extra) {
            if (lower(n) == lower(name))
                return id;
        }
        NodeId id = resolve_name(g, name);
        return id.empty() ? name : id;
    };
    for (const auto& entry : split_list(find_list(text, "edges"))) {
        auto t = split_edge(entry, names);
        if (!t) {
            const auto w = words(entry);
            unknown.push_back(w.empty() ? entry : w.front());
            continue;
        }
        auto kind = relation_token(t->token, warnings);
        if (!kind) {
            warnings.push_back("unknown relation \"" + t->token + "\"; edge dropped");
            continue;
        }
        out.push_back({resolve(t->src), resolve(t->dst), *kind});
    }
    return out;
}

} // namespace detail

inline ChatRequest build_state_prompt(const SceneGraph& graph, std::string_view sentence) {
    std::string text =
        "You are an expert in scene design. The scene contains these objects: ";
    std::vector<std::string> ids;
    for (const auto& n : graph.nodes())
        ids.push_back(n.id);
    text += detail::join(ids, ", ") + ".\nCurrent relations: ";
    std::vector<std::string> rels;
    for (const auto& e : graph.edges())
        rels.push_back(e.src + " " + to_string(e.kind) + " " + e.dst);
    text += (rels.empty() ? std::string("none") : detail::join(rels, ", ")) + ".\n";
    text += "The following transformation happens: " + std::string(sentence) + "\n";
    text += "Describe the final state of every object that changes and give the relations that hold at the "
            "end, using only {left, right, up, down, front, below, in}. Reply in this form:\n"
            "\"states = [obj: final state description, ...]\"\n"
            "\"edges = [obj_a {interaction} obj_b, ...]\"";
    return {{"user", std::move(text), {}}};
}

/// Final states and target relations for a transformation sentence.
inline StatePlan query_state_prompts(ChatBackend& backend, const SceneGraph& graph, std::string_view sentence) {
    const std::string s = detail::trim(sentence);
    if (s.empty())
        throw Error(ErrorCode::InvalidArgument, "transformation sentence must be non-empty");
    bool named = false;
    for (const auto& n : graph.nodes())
        named = named || detail::mentions(s, n.label) || detail::mentions(s, n.id);
    if (!named) {
        std::vector<std::string> labels;
        for (const auto& n : graph.nodes())
            labels.push_back(n.label);
        throw Error(ErrorCode::Parse, "sentence names no object of the scene (known labels: " +
                                          detail::join(labels, ", ") + ")");
    }
    const std::string reply = backend.complete(build_state_prompt(graph, s));
    StatePlan plan;
    std::vector<std::string> unknown;
    plan.edges = detail::parse_edges_against(graph, reply, plan.warnings, unknown);
    for (const auto& e : plan.edges) {
        for (const auto* id : {&e.src, &e.dst}) {
            if (!graph.contains(*id))
                unknown.push_back(*id);
        }
    }
    if (!unknown.empty())
        throw Error(ErrorCode::Parse, "state reply uses unknown labels: " + detail::join(unknown, ", "));
    static const std::regex states_re(R"((^|[^A-Za-z_-])states\s*=\s*\[([^\]]*)\])", std::regex::icase);
    std::smatch m;
    if (std::regex_search(reply, m, states_re)) {
        for (const auto& item : detail::split_list(m[2].str())) {
            const auto colon = item.find(':');
            if (colon == std::string::npos)
                continue;
            const NodeId id = detail::resolve_name(graph, detail::trim(item.substr(0, colon)));
            if (!id.empty())
                plan.states.emplace_back(id, detail::trim(item.substr(colon + 1)));
        }
    }
    for (const auto& w : plan.warnings)
        spdlog::warn("{}", w);
    return plan;
}

} // namespace sgl
