#pragma once

#include "sgl/engine.hpp"
#include "sgl/http.hpp"
#include "sgl/io.hpp"
#include "sgl/service.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace sgl {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitBackend = 2,
    kExitParse = 3,
};

inline int exit_code_for(ErrorCode c) {
    switch (c) {
    case ErrorCode::Backend:
    case ErrorCode::Timeout:
    case ErrorCode::Replay: return kExitBackend;
    case ErrorCode::Parse:
    case ErrorCode::UnknownId: return kExitParse;
    default: return kExitFailure;
    }
}

/// Test seams: transport used for live backends, and a callback fired once
/// `serve` is listening (receives the bound port).
struct CliHooks {
    std::shared_ptr<HttpTransport> transport;
    std::function<void(SceneService&, int)> on_serving;
};

namespace detail {

struct CliOptions {
    std::string config_path;
    std::string scorer;
    std::string replay;
    std::string record;
    std::string prompt;
    std::string scene;
    std::string out;
    std::string subject = "all";
    std::string bind;
    std::string format = "obj";
    std::size_t keyframes = 0;
};

inline EngineConfig resolve_config(const CliOptions& o) {
    EngineConfig c = load_config(o.config_path);
    if (!o.scorer.empty()) {
        if (o.scorer != "oracle" && o.scorer != "mllm")
            throw Error(ErrorCode::InvalidArgument, "--scorer must be oracle or mllm");
        c.scorer = o.scorer;
    }
    if (!o.replay.empty())
        c.backend.replay_path = o.replay;
    if (!o.record.empty())
        c.backend.record_path = o.record;
    return c;
}

inline Engine make_engine(const EngineConfig& c, const CliHooks& hooks, bool needs_backend) {
    std::shared_ptr<ChatBackend> backend;
    if (needs_backend || c.scorer == "mllm" || !c.backend.replay_path.empty()) {
        backend = hooks.transport ? make_backend(c.backend, hooks.transport) : make_backend(c.backend);
    }
    return Engine(c, std::move(backend));
}

inline std::size_t failed_traces(const std::vector<EdgeTrace>& traces) {
    std::size_t n = 0;
    for (const auto& t : traces)
        n += t.status == TraceStatus::ScorerError;
    return n;
}

inline std::pair<std::string, int> split_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos)
        throw Error(ErrorCode::InvalidArgument, "--bind expects host:port");
    const std::string port = bind.substr(colon + 1);
    char* end = nullptr;
    const long p = std::strtol(port.c_str(), &end, 10);
    if (port.empty() || *end != '\0' || p < 0 || p > 65535)
        throw Error(ErrorCode::InvalidArgument, "--bind port must be in [0, 65535]");
    return {bind.substr(0, colon), static_cast<int>(p)};
}

} // namespace detail

/// Runs the command-line tool. Returns the process exit status.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                   const CliHooks& hooks = {}) {
    using detail::CliOptions;
    CliOptions o;
    CLI::App app{"Scene-graph layout engine", "sgl"};
    app.require_subcommand(1);
    app.add_option("--config", o.config_path, "Engine configuration JSON (default: $SGL_CONFIG)");

    auto add_backend_opts = [&](CLI::App* sub) {
        sub->add_option("--scorer", o.scorer, "oracle or mllm");
        sub->add_option("--replay", o.replay, "Answer model requests from a recorded session");
        sub->add_option("--record", o.record, "Record model exchanges to a session file");
    };

    auto* gen = app.add_subcommand("generate", "Build and optimize a scene from a sentence");
    gen->add_option("--prompt", o.prompt, "Scene sentence")->required();
    gen->add_option("--out", o.out, "Scene file to write")->required();
    add_backend_opts(gen);

    auto* mod = app.add_subcommand("modify", "Apply a natural-language modification");
    mod->add_option("--scene", o.scene, "Input scene file")->required();
    mod->add_option("--prompt", o.prompt, "Modification request")->required();
    mod->add_option("--out", o.out, "Scene file to write")->required();
    add_backend_opts(mod);

    auto* ani = app.add_subcommand("animate", "Generate a keyframed trajectory from a transformation");
    ani->add_option("--scene", o.scene, "Input scene file")->required();
    ani->add_option("--prompt", o.prompt, "Transformation sentence")->required();
    ani->add_option("--keyframes", o.keyframes, "Number of keyframes (>= 2)");
    ani->add_option("--out", o.out, "Trajectory file to write")->required();
    add_backend_opts(ani);

    auto* ren = app.add_subcommand("render", "Render the four-view montage of a node subset");
    ren->add_option("--scene", o.scene, "Input scene file")->required();
    ren->add_option("--subject", o.subject, "Comma-separated node ids or \"all\"");
    ren->add_option("--out", o.out, "Image file (.ppm or .png)")->required();

    auto* en = app.add_subcommand("energy", "Print the scene energy breakdown as JSON");
    en->add_option("--scene", o.scene, "Input scene file")->required();

    auto* exp = app.add_subcommand("export", "Export node boxes as OBJ or PLY");
    exp->add_option("--scene", o.scene, "Input scene file")->required();
    exp->add_option("--format", o.format, "obj or ply");
    exp->add_option("--out", o.out, "Mesh file to write")->required();

    auto* srv = app.add_subcommand("serve", "Serve the HTTP API over one scene");
    srv->add_option("--scene", o.scene, "Scene file to serve")->required();
    srv->add_option("--bind", o.bind, "host:port (default from config)");
    add_backend_opts(srv);

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitFailure;
    }

    try {
        const EngineConfig cfg = detail::resolve_config(o);

        if (gen->parsed()) {
            Engine engine = detail::make_engine(cfg, hooks, true);
            auto res = engine.generate(o.prompt);
            save_scene(o.out, res.graph, res.report.subgraphs);
            const std::size_t failed = detail::failed_traces(res.report.traces);
            out << canonical_json({{"nodes", res.graph.size()},
                                   {"edges", res.graph.edges().size()},
                                   {"energy", energy_to_json(res.report.energy_after)},
                                   {"scorer_errors", failed},
                                   {"warnings", res.warnings}});
            return failed ? kExitBackend : kExitOk;
        }
        if (mod->parsed()) {
            Engine engine = detail::make_engine(cfg, hooks, true);
            auto doc = load_scene(o.scene);
            auto res = engine.modify(std::move(doc.graph), o.prompt);
            save_scene(o.out, res.graph);
            const std::size_t failed = detail::failed_traces(res.report.traces);
            out << canonical_json({{"nodes", res.graph.size()},
                                   {"edges", res.graph.edges().size()},
                                   {"energy", energy_to_json(scene_energy(res.graph, cfg.bands, cfg.optimizer))},
                                   {"scorer_errors", failed}});
            return failed ? kExitBackend : kExitOk;
        }
        if (ani->parsed()) {
            Engine engine = detail::make_engine(cfg, hooks, true);
            auto doc = load_scene(o.scene);
            const std::size_t n = o.keyframes ? o.keyframes : cfg.keyframes;
            auto res = engine.animate(doc.graph, o.prompt, n);
            write_file(o.out, serialize_trajectory(res.trajectory));
            out << canonical_json({{"keyframes", res.trajectory.keyframes.size()},
                                   {"scorer_errors", detail::failed_traces(res.report.traces)}});
            return detail::failed_traces(res.report.traces) ? kExitBackend : kExitOk;
        }
        if (ren->parsed()) {
            const auto doc = load_scene(o.scene);
            std::vector<NodeId> all;
            for (const auto& n : doc.graph.nodes())
                all.push_back(n.id);
            std::vector<NodeId> subject = o.subject == "all" ? all : detail::split_list(o.subject);
            for (const auto& id : subject) {
                if (!doc.graph.contains(id))
                    throw Error(ErrorCode::UnknownId, "unknown node id \"" + id + "\"");
            }
            if (all.empty())
                throw Error(ErrorCode::InvalidArgument, "the scene has no nodes to frame");
            const auto m = render_montage(doc.graph, subject, all, cfg.rig(), MontageSubject::Custom);
            const bool png = std::filesystem::path(o.out).extension() == ".png";
            write_file(o.out, png ? encode_png(m.pixels) : encode_ppm(m.pixels));
            return kExitOk;
        }
        if (en->parsed()) {
            const auto doc = load_scene(o.scene);
            std::vector<Subgraph> parts = doc.subgraphs.empty() ? partition_subgraphs(doc.graph) : doc.subgraphs;
            out << canonical_json(energy_to_json(scene_energy(doc.graph, parts, cfg.bands, cfg.optimizer)));
            return kExitOk;
        }
        if (exp->parsed()) {
            const auto fmt = parse_mesh_format(o.format);
            if (!fmt)
                throw Error(ErrorCode::InvalidArgument, "--format must be obj or ply");
            const auto doc = load_scene(o.scene);
            export_geometry(doc.graph, o.out, *fmt);
            return kExitOk;
        }
        if (srv->parsed()) {
            Engine engine = detail::make_engine(cfg, hooks, false);
            auto doc = load_scene(o.scene);
            const auto [host, port] = detail::split_bind(o.bind.empty() ? cfg.bind : o.bind);
            SceneService service(std::move(engine), std::move(doc.graph), std::move(doc.subgraphs));
            const int bound = service.bind(host, port);
            spdlog::info("serving on {}:{}", host, bound);
            if (hooks.on_serving) {
                service.start();
                hooks.on_serving(service, bound);
                service.stop();
            } else {
                service.listen();
            }
            return kExitOk;
        }
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return exit_code_for(ex.code());
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace sgl
