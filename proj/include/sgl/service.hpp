#pragma once

#include "sgl/engine.hpp"
#include "sgl/io.hpp"
#include "sgl/render.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace sgl {

struct ServerEvent {
    std::string name;
    std::string data;
};

/// Fan-out of server events to SSE subscribers. Each subscriber owns a
/// queue; closing the bus ends every stream.
class EventBus {
public:
    class Subscription {
    public:
        /// Waits up to `timeout` for the next event; empty when none arrived
        /// or the bus closed.
        std::optional<ServerEvent> next(std::chrono::milliseconds timeout) {
            std::unique_lock lock(mu_);
            cv_.wait_for(lock, timeout, [this] { return closed_ || !queue_.empty(); });
            if (queue_.empty())
                return std::nullopt;
            ServerEvent e = std::move(queue_.front());
            queue_.pop_front();
            return e;
        }

        bool closed() const {
            std::lock_guard lock(mu_);
            return closed_ && queue_.empty();
        }

    private:
        friend class EventBus;
        void push(ServerEvent e) {
            {
                std::lock_guard lock(mu_);
                queue_.push_back(std::move(e));
            }
            cv_.notify_all();
        }
        void close() {
            {
                std::lock_guard lock(mu_);
                closed_ = true;
            }
            cv_.notify_all();
        }

        mutable std::mutex mu_;
        std::condition_variable cv_;
        std::deque<ServerEvent> queue_;
        bool closed_ = false;
    };

    std::shared_ptr<Subscription> subscribe() {
        auto s = std::make_shared<Subscription>();
        std::lock_guard lock(mu_);
        if (closed_)
            s->close();
        subs_.push_back(s);
        return s;
    }

    void unsubscribe(const std::shared_ptr<Subscription>& s) {
        std::lock_guard lock(mu_);
        subs_.remove(s);
    }

    void publish(const std::string& name, const nlohmann::json& data) {
        std::lock_guard lock(mu_);
        const std::string payload = data.dump();
        for (auto& s : subs_)
            s->push({name, payload});
    }

    void send(Subscription& s, const std::string& name, const nlohmann::json& data) { s.push({name, data.dump()}); }

    std::size_t subscriber_count() const {
        std::lock_guard lock(mu_);
        return subs_.size();
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        for (auto& s : subs_)
            s->close();
    }

private:
    mutable std::mutex mu_;
    std::list<std::shared_ptr<Subscription>> subs_;
    bool closed_ = false;
};

inline std::string format_sse(const ServerEvent& e) {
    return "event: " + e.name + "\ndata: " + e.data + "\n\n";
}

struct JobInfo {
    std::uint64_t id = 0;
    std::string kind;
    std::string status = "running";
    std::size_t iterations = 0;
    std::string error;

    nlohmann::json to_json() const {
        nlohmann::json j{{"id", id}, {"kind", kind}, {"status", status}, {"iterations", iterations}};
        if (!error.empty())
            j["error"] = error;
        return j;
    }
};

/// HTTP front end over one scene. Reads see the last committed revision;
/// at most one mutating job runs at a time, off the request thread.
class SceneService {
public:
    SceneService(Engine engine, SceneGraph graph, std::vector<Subgraph> subgraphs = {})
        : engine_(std::move(engine)), graph_(std::move(graph)), subgraphs_(std::move(subgraphs)) {
        routes();
    }

    ~SceneService() { stop(); }

    SceneService(const SceneService&) = delete;
    SceneService& operator=(const SceneService&) = delete;

    /// Binds to host:port (port 0 picks a free port) and returns the port.
    int bind(const std::string& host, int port) {
        const int p = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (p < 0)
            throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
        return p;
    }

    /// Serves on the calling thread until stop().
    void listen() { server_.listen_after_bind(); }

    void start() {
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    void stop() {
        bus_.close();
        server_.stop();
        if (listener_.joinable())
            listener_.join();
        std::lock_guard lock(jobs_mu_);
        for (auto& t : workers_) {
            if (t.joinable())
                t.join();
        }
        workers_.clear();
    }

    std::uint64_t revision() const {
        std::lock_guard lock(mu_);
        return revision_;
    }

    SceneGraph graph() const {
        std::lock_guard lock(mu_);
        return graph_;
    }

    std::optional<JobInfo> last_job() const {
        std::lock_guard lock(mu_);
        return last_job_;
    }

    bool busy() const {
        std::lock_guard lock(mu_);
        return active_.has_value();
    }

    EventBus& events() noexcept { return bus_; }

private:
    using Json = nlohmann::json;

    static void send_json(httplib::Response& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    Json error_body(const std::string& message) const {
        return {{"error", message}, {"revision", revision()}};
    }

    void routes() {
        server_.Get("/api/scene", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mu_);
            Json body{{"scene", scene_to_json(graph_, subgraphs_)}, {"revision", revision_}};
            body["active_job"] = active_ ? Json(*active_) : Json(nullptr);
            body["last_job"] = last_job_ ? last_job_->to_json() : Json(nullptr);
            send_json(res, 200, body);
        });

        server_.Get("/api/energy", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mu_);
            Json body = energy_to_json(scene_energy(graph_, engine_.config().bands, engine_.config().optimizer));
            body["revision"] = revision_;
            send_json(res, 200, body);
        });

        server_.Get("/api/views", [this](const httplib::Request& req, httplib::Response& res) {
            const SceneGraph g = graph();
            std::vector<NodeId> all;
            for (const auto& n : g.nodes())
                all.push_back(n.id);
            std::vector<NodeId> subject;
            const std::string spec = req.has_param("subject") ? req.get_param_value("subject") : "all";
            if (spec == "all") {
                subject = all;
            } else {
                for (auto& id : detail::split_list(spec))
                    subject.push_back(id);
            }
            for (const auto& id : subject) {
                if (!g.contains(id))
                    return send_json(res, 404, error_body("unknown node id \"" + id + "\""));
            }
            if (all.empty())
                return send_json(res, 409, error_body("the scene is empty"));
            const auto m = render_montage(g, subject, all, engine_.config().rig(), MontageSubject::Custom);
            res.status = 200;
            res.set_header("X-Scene-Revision", std::to_string(revision()));
            res.set_content(encode_png(m.pixels), "image/png");
        });

        server_.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
            auto sub = bus_.subscribe();
            bus_.send(*sub, "hello", {{"revision", revision()}});
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream",
                [sub](std::size_t, httplib::DataSink& sink) {
                    if (sub->closed())
                        return false;
                    if (auto e = sub->next(std::chrono::milliseconds(200))) {
                        const std::string s = format_sse(*e);
                        return sink.write(s.data(), s.size());
                    }
                    static constexpr char keepalive[] = ": keep-alive\n\n";
                    return sink.is_writable() && sink.write(keepalive, sizeof keepalive - 1);
                },
                [this, sub](bool) { bus_.unsubscribe(sub); });
        });

        server_.Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req, res);
            if (!body)
                return;
            if (!body->contains("prompt") || !(*body)["prompt"].is_string() ||
                (*body)["prompt"].get<std::string>().empty())
                return send_json(res, 400, error_body("body needs a non-empty \"prompt\""));
            const std::string prompt = (*body)["prompt"];
            submit(res, "generate", [this, prompt](const SceneGraph&, const ProgressObserver& obs) {
                auto r = engine_.generate(prompt, obs);
                return Commit{std::move(r.graph), std::move(r.report.subgraphs), r.report.traces.size(), count(r.report.traces)};
            });
        });

        server_.Post("/api/modify", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req, res);
            if (!body)
                return;
            if (!body->contains("prompt") || !(*body)["prompt"].is_string() ||
                (*body)["prompt"].get<std::string>().empty())
                return send_json(res, 400, error_body("body needs a non-empty \"prompt\""));
            const std::string prompt = (*body)["prompt"];
            submit(res, "modify", [this, prompt](const SceneGraph& g, const ProgressObserver& obs) {
                auto r = engine_.modify(g, prompt, obs);
                return Commit{std::move(r.graph), std::nullopt, r.report.traces.size(), count(r.report.traces)};
            });
        });

        server_.Post("/api/optimize", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req, res);
            if (!body)
                return;
            const std::string level = body->value("level", std::string("scene"));
            if (level == "scene") {
                submit(res, "optimize", [this](const SceneGraph& g, const ProgressObserver& obs) {
                    auto r = engine_.optimize(g, obs);
                    return Commit{std::move(r.graph), std::move(r.report.subgraphs), r.report.traces.size(),
                                  count(r.report.traces)};
                });
                return;
            }
            if (level != "edge")
                return send_json(res, 400, error_body("level must be \"edge\" or \"scene\""));
            const Json e = body->value("edge", Json::object());
            if (!e.is_object() || !e.contains("src") || !e.contains("dst") || !e["src"].is_string() ||
                !e["dst"].is_string())
                return send_json(res, 400, error_body("edge level needs \"edge\": {\"src\", \"dst\"}"));
            const std::string src = e["src"];
            const std::string dst = e["dst"];
            std::optional<RelationEdge> edge;
            {
                std::lock_guard lock(mu_);
                if (const auto* found = graph_.find_edge(src, dst))
                    edge = *found;
            }
            if (!edge)
                return send_json(res, 404, error_body("no edge " + src + " -> " + dst));
            submit(res, "optimize", [this, edge = *edge](const SceneGraph& g, const ProgressObserver& obs) {
                auto r = engine_.optimize_edge(g, edge, obs);
                if (r.trace.status == TraceStatus::ScorerError)
                    throw Error(ErrorCode::Backend, r.trace.error);
                return Commit{std::move(r.graph), std::nullopt, 1, r.trace.iterations.size()};
            });
        });
    }

    std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
        if (req.body.empty())
            return Json::object();
        auto j = Json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            send_json(res, 400, error_body("body must be a JSON object"));
            return std::nullopt;
        }
        return j;
    }

    static std::size_t count(const std::vector<EdgeTrace>& traces) {
        std::size_t n = 0;
        for (const auto& t : traces)
            n += t.iterations.size();
        return n;
    }

    struct Commit {
        SceneGraph graph;
        std::optional<std::vector<Subgraph>> subgraphs;
        std::size_t traces = 0;
        std::size_t iterations = 0;
    };

    using JobFn = std::function<Commit(const SceneGraph&, const ProgressObserver&)>;

    void submit(httplib::Response& res, const std::string& kind, JobFn fn) {
        std::uint64_t id = 0;
        SceneGraph snapshot;
        {
            std::lock_guard lock(mu_);
            if (active_) {
                send_json(res, 409, {{"error", "another job is running"}, {"active_job", *active_}, {"revision", revision_}});
                return;
            }
            id = ++job_counter_;
            active_ = id;
            snapshot = graph_;
        }
        bus_.publish("job", {{"id", id}, {"kind", kind}, {"status", "running"}});
        {
            std::lock_guard lock(jobs_mu_);
            workers_.emplace_back([this, id, kind, fn = std::move(fn), snapshot = std::move(snapshot)] {
                run_job(id, kind, fn, snapshot);
            });
        }
        send_json(res, 202, {{"job", id}, {"revision", revision()}});
    }

    void run_job(std::uint64_t id, const std::string& kind, const JobFn& fn, const SceneGraph& snapshot) {
        JobInfo info;
        info.id = id;
        info.kind = kind;
        auto observer = [this, id](const ProgressEvent& ev, const SceneGraph&) {
            Json j = progress_to_json(ev);
            j["job"] = id;
            bus_.publish("progress", j);
        };
        try {
            Commit c = fn(snapshot, observer);
            std::uint64_t rev = 0;
            {
                std::lock_guard lock(mu_);
                graph_ = std::move(c.graph);
                if (c.subgraphs)
                    subgraphs_ = std::move(*c.subgraphs);
                rev = ++revision_;
            }
            info.status = "done";
            info.iterations = c.iterations;
            bus_.publish("revision", {{"revision", rev}, {"job", id}});
        } catch (const std::exception& ex) {
            info.status = "failed";
            info.error = ex.what();
            spdlog::warn("job {} ({}) failed: {}", id, kind, ex.what());
        }
        {
            std::lock_guard lock(mu_);
            last_job_ = info;
            active_.reset();
        }
        bus_.publish("job", info.to_json());
    }

    Engine engine_;
    httplib::Server server_;
    EventBus bus_;
    std::thread listener_;

    mutable std::mutex mu_;
    SceneGraph graph_;
    std::vector<Subgraph> subgraphs_;
    std::uint64_t revision_ = 1;
    std::uint64_t job_counter_ = 0;
    std::optional<std::uint64_t> active_;
    std::optional<JobInfo> last_job_;

    std::mutex jobs_mu_;
    std::vector<std::thread> workers_;
};

} // namespace sgl
