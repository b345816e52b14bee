#pragma once

#include "sgl/dynamics.hpp"
#include "sgl/io.hpp"
#include "sgl/llm.hpp"
#include "sgl/optimizer.hpp"
#include "sgl/render.hpp"
#include "sgl/scoring.hpp"

#include <memory>
#include <string>
#include <vector>

namespace sgl {

inline std::shared_ptr<Scorer> make_scorer(const EngineConfig& config, std::shared_ptr<ChatBackend> backend) {
    if (config.scorer == "oracle")
        return std::make_shared<OracleScorer>(config.bands);
    if (config.scorer == "mllm") {
        if (!backend)
            throw Error(ErrorCode::InvalidArgument, "scorer \"mllm\" needs a chat backend");
        return std::make_shared<MllmScorer>(std::move(backend));
    }
    throw Error(ErrorCode::InvalidArgument, "unknown scorer \"" + config.scorer + "\"");
}

struct GenerateResult {
    SceneGraph graph;
    SceneReport report;
    std::vector<std::string> warnings;
};

/// Everything one scene operation needs: configuration, the chat backend
/// (may be null for oracle-only work), the scorer and the view capturer.
class Engine {
public:
    Engine(EngineConfig config, std::shared_ptr<ChatBackend> backend, std::shared_ptr<Scorer> scorer = nullptr)
        : config_(std::move(config)),
          backend_(std::move(backend)),
          scorer_(scorer ? std::move(scorer) : make_scorer(config_, backend_)),
          capturer_(config_.rig()) {
        config_.optimizer.validate();
    }

    const EngineConfig& config() const noexcept { return config_; }
    ChatBackend* backend() const noexcept { return backend_.get(); }
    Scorer& scorer() const noexcept { return *scorer_; }
    const ViewCapturer& capturer() const noexcept { return capturer_; }

    ChatBackend& require_backend() const {
        if (!backend_)
            throw Error(ErrorCode::InvalidArgument, "this operation needs a chat backend (live or --replay)");
        return *backend_;
    }

    /// Sentence -> graph (Prompt 1) -> sizes -> optimized layout.
    GenerateResult generate(const std::string& sentence, const ProgressObserver& observer = {}) const {
        ChatBackend& backend = require_backend();
        const std::string reply = backend.complete(build_prompt1(sentence));
        const GraphSpecReply spec = parse_graph_reply(reply);
        std::vector<SizeEstimate> sizes;
        for (std::size_t i = 0; i < spec.labels.size(); ++i)
            sizes.push_back(query_size(backend, spec.labels[i], spec.node_prompts[i]));
        SceneGraph graph = graph_from_reply(spec, sentence, sizes);
        auto res = optimize(std::move(graph), observer);
        GenerateResult out{std::move(res.graph), std::move(res.report), spec.warnings};
        return out;
    }

    SceneResult optimize(SceneGraph graph, const ProgressObserver& observer = {}, bool reuse_layout = false) const {
        SceneOptions opts;
        opts.reuse_layout = reuse_layout;
        ChatBackend* backend = backend_.get();
        opts.placement = [backend](std::span<const SubgraphSummary> s) { return query_subgraph_placement(backend, s); };
        return optimize_scene(std::move(graph), *scorer_, capturer_, config_.optimizer, opts, observer, config_.bands);
    }

    EdgeResult optimize_edge(SceneGraph graph, const RelationEdge& edge, const ProgressObserver& observer = {}) const {
        return sgl::optimize_edge(std::move(graph), edge, *scorer_, capturer_, config_.optimizer, observer);
    }

    ModificationResult modify(SceneGraph graph, const std::string& sentence, const ProgressObserver& observer = {}) const {
        const auto plan = plan_modification(graph, sentence, require_backend());
        return apply_modification(std::move(graph), plan, *scorer_, capturer_, config_.optimizer, observer);
    }

    TrajectoryResult animate(const SceneGraph& graph, const std::string& sentence, std::size_t keyframes,
                             const ProgressObserver& observer = {}) const {
        return generate_trajectory(graph, sentence, require_backend(), *scorer_, capturer_, config_.optimizer,
                                   keyframes, observer);
    }

private:
    EngineConfig config_;
    std::shared_ptr<ChatBackend> backend_;
    std::shared_ptr<Scorer> scorer_;
    ViewCapturer capturer_;
};

} // namespace sgl
