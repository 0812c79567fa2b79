#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "pomr/encounters.hpp"
#include "pomr/features.hpp"
#include "pomr/kb.hpp"
#include "pomr/model.hpp"

namespace httplib {
class Server;
}

namespace pomr {

inline constexpr int kServiceSchemaVersion = 1;

/// Annotation guideline shown to annotators.
inline constexpr const char* kAnnotationGuideline =
    "1 means this item would be of interest to an emergency medicine physician for the vast majority of cases, "
    "when seeing a patient with the condition for the first time. "
    "0 means the item is rarely of interest for this condition";

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

struct ServiceConfig {
    /// Append-only JSONL log; replayed on top of the base KB at startup.
    std::filesystem::path event_log;
    /// Optional KB snapshot rewritten after every accepted annotation.
    std::optional<std::filesystem::path> snapshot;
    TrainConfig train;
    InitConfig init;
    /// Seed of the random split used by retraining.
    std::uint64_t split_seed = 1;
};

/// State and handlers behind the annotation HTTP API. Handlers are callable
/// directly; bind() wires them to an httplib server.
class AnnotationService {
public:
    AnnotationService(KnowledgeBase base, std::shared_ptr<const EncounterStore> store, Vocabulary vocabulary,
                      std::optional<FeatureTable> features, std::optional<ModelParams> model, ServiceConfig config);
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    ServiceResponse get_problems() const;
    /// kind is MEDICATION, PROCEDURE or LAB; round 1 ranks by importance
    /// score, round 2 by the current model and skips annotated targets.
    ServiceResponse get_candidates(const std::string& problem_id, const std::string& kind, int round,
                                   std::optional<std::size_t> top_n) const;
    /// Body: {problem, relation, target:{system,id}, label, round?, annotator?, timestamp?}.
    /// The annotator header wins over the body field.
    ServiceResponse post_annotation(const std::string& body, const std::string& annotator_header);
    ServiceResponse get_annotations(const std::string& annotator) const;
    ServiceResponse get_agreement(const std::string& a, const std::string& b) const;
    ServiceResponse post_retrain();
    ServiceResponse get_status() const;
    ServiceResponse get_kb() const;

    /// Blocks until no retraining job is running.
    void wait_for_retrain();

    KnowledgeBase kb() const;
    std::shared_ptr<const ModelParams> model() const;
    std::size_t model_generation() const { return generation_.load(); }

    /// Registers every endpoint.
    void bind(httplib::Server& server);

private:
    ServiceResponse error(int status, const std::string& message) const;
    void retrain_job(KnowledgeBase snapshot);

    std::shared_ptr<const EncounterStore> store_;
    Vocabulary vocabulary_;
    std::optional<FeatureTable> features_;
    ServiceConfig config_;

    mutable std::shared_mutex kb_mutex_;
    KnowledgeBase kb_;
    std::vector<AnnotationEvent> events_;

    mutable std::mutex model_mutex_;
    std::shared_ptr<const ModelParams> model_;
    std::atomic<std::size_t> generation_{0};

    mutable std::mutex retrain_mutex_;
    std::condition_variable retrain_cv_;
    std::thread retrain_thread_;
    bool retrain_running_ = false;
    std::string retrain_state_ = "idle";
    std::string retrain_error_;
    std::optional<std::size_t> last_best_epoch_;
    std::optional<double> last_val_mrr_;

    mutable std::mutex importance_mutex_;
    mutable std::map<std::string, std::map<Code, ImportanceScore>> importance_cache_;
};

/// Binds and serves until the server is stopped.
void serve(AnnotationService& service, const std::string& host, int port);

}  // namespace pomr
