#include "pomr/service.hpp"

#include <chrono>
#include <ctime>

#include <httplib.h>

#include "json_util.hpp"
#include "pomr/evaluator.hpp"

namespace pomr {

using detail::json;

namespace {

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json with_version(json body) {
    body["schema_version"] = kServiceSchemaVersion;
    return body;
}

json event_json(const AnnotationEvent& ev) {
    return {{"annotator", ev.annotator_id},
            {"problem", ev.triplet.problem_id},
            {"relation", std::string(to_string(ev.triplet.relation))},
            {"target", detail::code_to_json(ev.triplet.target)},
            {"label", ev.triplet.positive() ? 1 : 0},
            {"round", ev.triplet.round},
            {"timestamp", ev.timestamp}};
}

}  // namespace

AnnotationService::AnnotationService(KnowledgeBase base, std::shared_ptr<const EncounterStore> store,
                                     Vocabulary vocabulary, std::optional<FeatureTable> features,
                                     std::optional<ModelParams> model, ServiceConfig config)
    : store_(std::move(store)),
      vocabulary_(std::move(vocabulary)),
      features_(std::move(features)),
      config_(std::move(config)) {
    if (!store_) throw Error("service needs an encounter store");
    events_ = read_events(config_.event_log);
    kb_ = replay(base, events_);
    if (model) model_ = std::make_shared<const ModelParams>(std::move(*model));
}

AnnotationService::~AnnotationService() {
    wait_for_retrain();
}

ServiceResponse AnnotationService::error(int status, const std::string& message) const {
    return {status, with_version({{"error", message}})};
}

KnowledgeBase AnnotationService::kb() const {
    std::shared_lock lock(kb_mutex_);
    return kb_;
}

std::shared_ptr<const ModelParams> AnnotationService::model() const {
    std::lock_guard lock(model_mutex_);
    return model_;
}

ServiceResponse AnnotationService::get_problems() const {
    std::shared_lock lock(kb_mutex_);
    json arr = json::array();
    for (const auto& [id, p] : kb_.problems()) {
        json def = json::array();
        for (const auto& c : p.definition) def.push_back(detail::code_to_json(c));
        std::array<std::size_t, 3> annotated{};
        for (const auto& t : kb_.triplets()) {
            if (t.problem_id == id) ++annotated[index_of(t.relation)];
        }
        json counts = json::object();
        for (auto kind : kAllRelations) counts[std::string(to_string(kind))] = annotated[index_of(kind)];
        arr.push_back({{"id", id}, {"name", p.name}, {"definition", def}, {"annotated", counts}});
    }
    return {200, with_version({{"problems", arr}, {"guideline", kAnnotationGuideline}})};
}

ServiceResponse AnnotationService::get_candidates(const std::string& problem_id, const std::string& kind_text,
                                                  int round, std::optional<std::size_t> top_n) const {
    const auto kind = parse_relation(kind_text);
    if (!kind) return error(400, "kind must be MEDICATION, PROCEDURE or LAB");
    if (round != 1 && round != 2) return error(400, "round must be 1 or 2");
    const std::size_t n = top_n.value_or(round == 1 ? kRoundOneCandidates : kRoundTwoCandidates);

    Problem problem;
    std::set<Code> annotated;
    std::map<Code, int> labels;
    {
        std::shared_lock lock(kb_mutex_);
        const auto* p = kb_.find_problem(problem_id);
        if (p == nullptr) return error(404, "unknown problem '" + problem_id + "'");
        problem = *p;
        annotated = annotated_targets(kb_, problem_id, *kind);
        for (const auto& t : kb_.triplets()) {
            if (t.problem_id == problem_id && t.relation == *kind) labels[t.target] = t.positive() ? 1 : 0;
        }
    }

    std::vector<Candidate> list;
    if (round == 1) {
        std::map<Code, ImportanceScore> scores;
        {
            std::lock_guard lock(importance_mutex_);
            auto it = importance_cache_.find(problem_id);
            if (it == importance_cache_.end()) {
                it = importance_cache_.emplace(problem_id, importance_scores(*store_, problem)).first;
            }
            scores = it->second;
        }
        list = candidate_list(
            [&](const Code& c) {
                const auto it = scores.find(c);
                return it == scores.end() ? 0.0 : it->second.value;
            },
            vocabulary_.codes(*kind), {}, n);
    } else {
        const auto params = model();
        if (!params) return error(409, "no model loaded; POST /retrain first");
        if (!params->has_problem(problem_id)) return error(409, "model has no embedding for '" + problem_id + "'");
        std::set<Code> eligible;
        for (const auto& c : vocabulary_.codes(*kind)) {
            if (params->has_target(c)) eligible.insert(c);
        }
        const FeatureTable* feats = features_ ? &*features_ : nullptr;
        list = candidate_list(
            [&](const Code& c) {
                return score_triplet(*params, Triplet{problem_id, *kind, c, Label::NEGATIVE, 2}, feats);
            },
            eligible, annotated, n);
    }

    json arr = json::array();
    for (const auto& c : list) {
        json item{{"code", detail::code_to_json(c.code)}, {"score", c.score}};
        if (const auto it = labels.find(c.code); it != labels.end()) item["label"] = it->second;
        arr.push_back(std::move(item));
    }
    return {200, with_version({{"problem", problem_id},
                               {"relation", std::string(to_string(*kind))},
                               {"round", round},
                               {"top_n", n},
                               {"candidates", arr}})};
}

ServiceResponse AnnotationService::post_annotation(const std::string& body, const std::string& annotator_header) {
    AnnotationEvent ev;
    try {
        const auto j = json::parse(body);
        ev.annotator_id = !annotator_header.empty() ? annotator_header : j.value("annotator", std::string{});
        if (ev.annotator_id.empty()) return error(400, "missing annotator id");
        const auto rel = parse_relation(j.at("relation").get<std::string>());
        if (!rel) return error(400, "bad relation");
        const int label = j.at("label").get<int>();
        if (label != 0 && label != 1) return error(400, "label must be 0 or 1");
        ev.triplet = Triplet{j.at("problem").get<std::string>(), *rel, detail::code_from_json(j.at("target")),
                             label == 1 ? Label::POSITIVE : Label::NEGATIVE, j.value("round", 1)};
        ev.timestamp = j.value("timestamp", now_utc());
    } catch (const json::exception& e) {
        return error(400, std::string("bad annotation body: ") + e.what());
    } catch (const Error& e) {
        return error(400, e.what());
    }

    const KindLookup kinds = [this](const Code& c) { return store_->kind_of(c); };
    std::unique_lock lock(kb_mutex_);
    KnowledgeBase next;
    try {
        next = add_annotation(kb_, ev.triplet, ev.annotator_id, ev.timestamp, kinds);
    } catch (const Error& e) {
        return error(400, e.what());
    }
    try {
        append_event(config_.event_log, ev);
    } catch (const Error& e) {
        return error(500, e.what());
    }
    kb_ = std::move(next);
    events_.push_back(ev);
    if (config_.snapshot) {
        try {
            save_kb(kb_, *config_.snapshot);
        } catch (const Error&) {
        }
    }
    json out = event_json(ev);
    out["sequence"] = events_.size();
    return {201, with_version(std::move(out))};
}

ServiceResponse AnnotationService::get_annotations(const std::string& annotator) const {
    std::shared_lock lock(kb_mutex_);
    json arr = json::array();
    for (const auto& ev : events_) {
        if (annotator.empty() || ev.annotator_id == annotator) arr.push_back(event_json(ev));
    }
    return {200, with_version({{"annotations", arr}})};
}

ServiceResponse AnnotationService::get_agreement(const std::string& a, const std::string& b) const {
    if (a.empty() || b.empty()) return error(400, "parameters a and b are required");
    std::map<TripletKey, int> la;
    std::map<TripletKey, int> lb;
    {
        std::shared_lock lock(kb_mutex_);
        for (const auto& ev : events_) {
            const int label = ev.triplet.positive() ? 1 : 0;
            if (ev.annotator_id == a) la[key_of(ev.triplet)] = label;
            if (ev.annotator_id == b) lb[key_of(ev.triplet)] = label;
        }
    }
    std::vector<int> xa;
    std::vector<int> xb;
    json conflicts = json::array();
    for (const auto& [key, label] : la) {
        const auto it = lb.find(key);
        if (it == lb.end()) continue;
        xa.push_back(label);
        xb.push_back(it->second);
        if (label != it->second) {
            conflicts.push_back({{"problem", key.problem_id},
                                 {"relation", std::string(to_string(key.relation))},
                                 {"target", detail::code_to_json(key.target)},
                                 {"label_a", label},
                                 {"label_b", it->second}});
        }
    }
    if (xa.empty()) return error(400, "annotators '" + a + "' and '" + b + "' share no annotated triplets");
    const double kappa = cohen_kappa(xa, xb);
    return {200, with_version({{"a", a}, {"b", b}, {"n", xa.size()}, {"kappa", kappa}, {"conflicts", conflicts}})};
}

ServiceResponse AnnotationService::post_retrain() {
    KnowledgeBase snapshot = kb();
    std::lock_guard lock(retrain_mutex_);
    if (retrain_running_) return {202, with_version({{"state", "running"}, {"accepted", false}})};
    if (retrain_thread_.joinable()) retrain_thread_.join();
    retrain_running_ = true;
    retrain_state_ = "running";
    retrain_error_.clear();
    retrain_thread_ = std::thread([this, kb = std::move(snapshot)]() mutable { retrain_job(std::move(kb)); });
    return {202, with_version({{"state", "running"}, {"accepted", true}})};
}

void AnnotationService::retrain_job(KnowledgeBase snapshot) {
    std::string state = "done";
    std::string err;
    std::optional<std::size_t> best_epoch;
    std::optional<double> val_mrr;
    try {
        TrainConfig cfg = config_.train;
        const FeatureTable* feats = features_ ? &*features_ : nullptr;
        if (feats == nullptr) cfg.use_features = false;
        const std::size_t spec_dim = feats != nullptr ? feats->specialty_dim() : 0;
        const auto split = split_random(snapshot, {}, config_.split_seed);
        const auto initial = init_model(snapshot, vocabulary_, spec_dim, nullptr, nullptr, config_.init);
        auto result = train(snapshot, split, initial, feats, &vocabulary_, cfg);
        best_epoch = result.best_epoch;
        for (const auto& r : result.history) {
            if (r.epoch == result.best_epoch) val_mrr = r.val_mrr;
        }
        auto next = std::make_shared<const ModelParams>(std::move(result.params));
        {
            std::lock_guard lock(model_mutex_);
            model_ = std::move(next);
        }
        ++generation_;
    } catch (const std::exception& e) {
        state = "failed";
        err = e.what();
    }
    std::lock_guard lock(retrain_mutex_);
    retrain_running_ = false;
    retrain_state_ = state;
    retrain_error_ = err;
    last_best_epoch_ = best_epoch;
    last_val_mrr_ = val_mrr;
    retrain_cv_.notify_all();
}

void AnnotationService::wait_for_retrain() {
    std::unique_lock lock(retrain_mutex_);
    retrain_cv_.wait(lock, [this] { return !retrain_running_; });
    if (retrain_thread_.joinable()) retrain_thread_.join();
}

ServiceResponse AnnotationService::get_status() const {
    json body;
    {
        std::shared_lock lock(kb_mutex_);
        body["problems"] = kb_.problems().size();
        body["triplets"] = kb_.triplets().size();
        body["events"] = events_.size();
    }
    body["model_loaded"] = model() != nullptr;
    body["model_generation"] = generation_.load();
    body["features_loaded"] = features_.has_value();
    {
        std::lock_guard lock(retrain_mutex_);
        json r{{"state", retrain_state_}};
        if (!retrain_error_.empty()) r["error"] = retrain_error_;
        if (last_best_epoch_) r["best_epoch"] = *last_best_epoch_;
        if (last_val_mrr_) r["val_mrr"] = *last_val_mrr_;
        body["retrain"] = std::move(r);
    }
    body["guideline"] = kAnnotationGuideline;
    return {200, with_version(std::move(body))};
}

ServiceResponse AnnotationService::get_kb() const {
    std::string text;
    {
        std::shared_lock lock(kb_mutex_);
        text = serialize_kb(kb_);
    }
    json body = json::parse(text);
    return {200, with_version({{"kb", std::move(body)}})};
}

void AnnotationService::bind(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto guarded = [this, reply](auto handler) {
        return [this, reply, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                reply(res, handler(req));
            } catch (const std::exception& e) {
                reply(res, error(500, e.what()));
            }
        };
    };
    server.Get("/problems", guarded([this](const httplib::Request&) { return get_problems(); }));
    server.Get(R"(/problems/([^/]+)/candidates)", guarded([this](const httplib::Request& req) {
                   int round = 1;
                   std::optional<std::size_t> top_n;
                   try {
                       if (req.has_param("round")) round = std::stoi(req.get_param_value("round"));
                       if (req.has_param("top_n")) top_n = std::stoul(req.get_param_value("top_n"));
                   } catch (const std::logic_error&) {
                       return error(400, "round and top_n must be integers");
                   }
                   return get_candidates(req.matches[1].str(), req.get_param_value("kind"), round, top_n);
               }));
    server.Post("/annotations", guarded([this](const httplib::Request& req) {
                    return post_annotation(req.body, req.get_header_value("X-Annotator-Id"));
                }));
    server.Get("/annotations", guarded([this](const httplib::Request& req) {
                   return get_annotations(req.get_param_value("annotator"));
               }));
    server.Get("/agreement", guarded([this](const httplib::Request& req) {
                   return get_agreement(req.get_param_value("a"), req.get_param_value("b"));
               }));
    server.Post("/retrain", guarded([this](const httplib::Request&) { return post_retrain(); }));
    server.Get("/status", guarded([this](const httplib::Request&) { return get_status(); }));
    server.Get("/kb", guarded([this](const httplib::Request&) { return get_kb(); }));
}

void serve(AnnotationService& service, const std::string& host, int port) {
    httplib::Server server;
    service.bind(server);
    if (!server.listen(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
}

}  // namespace pomr
