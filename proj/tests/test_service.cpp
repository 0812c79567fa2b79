#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <thread>

#include "pipeline.hpp"
#include "pomr/service.hpp"
#include "support.hpp"

using namespace pomr;
using nlohmann::json;

namespace {

struct Fixture {
    pipeline::Prepared prep;
    std::filesystem::path dir;
    std::unique_ptr<AnnotationService> service;

    explicit Fixture(bool with_model) {
        PlantSpec spec;
        spec.n_problems = 6;
        spec.n_targets_per_kind = 24;
        spec.n_patients = 120;
        prep = pipeline::prepare(spec);
        dir = support::temp_dir("service");
        service = make(with_model);
    }

    std::unique_ptr<AnnotationService> make(bool with_model) {
        std::optional<ModelParams> model;
        if (with_model) {
            InitConfig init;
            init.dim = 8;
            model = init_model(prep.data.kb, prep.vocab, prep.features.specialty_dim(), nullptr, nullptr, init);
        }
        ServiceConfig cfg;
        cfg.event_log = dir / "events.jsonl";
        cfg.snapshot = dir / "kb_snapshot.json";
        cfg.train.max_epochs = 3;
        cfg.init.dim = 8;
        return std::make_unique<AnnotationService>(
            prep.data.kb, std::make_shared<const EncounterStore>(prep.store), prep.vocab, prep.features, model, cfg);
    }
};

std::string annotation(const std::string& problem, const Code& target, int label) {
    return json{{"problem", problem},
                {"relation", "MEDICATION"},
                {"target", {{"system", std::string(to_string(target.system()))}, {"id", target.id()}}},
                {"label", label},
                {"round", 2}}
        .dump();
}

}  // namespace

TEST_CASE("problems endpoint carries the guideline") {
    Fixture fx(false);
    const auto r = fx.service->get_problems();
    CHECK(r.status == 200);
    CHECK(r.body["schema_version"] == kServiceSchemaVersion);
    CHECK(r.body["problems"].size() == 6);
    CHECK(r.body["guideline"].get<std::string>().find("emergency medicine physician") != std::string::npos);
}

TEST_CASE("round-one candidates follow importance scores") {
    Fixture fx(false);
    const auto r = fx.service->get_candidates("P00", "MEDICATION", 1, std::nullopt);
    REQUIRE(r.status == 200);
    const auto& c = r.body["candidates"];
    CHECK(c.size() <= kRoundOneCandidates);
    CHECK(c.size() > 3);
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i - 1]["score"].get<double>() >= c[i]["score"].get<double>());
    const auto& planted = fx.prep.data.truth.at({"P00", RelationKind::MEDICATION});
    for (std::size_t i = 0; i < planted.size(); ++i) {
        const auto code = Code(CodeSystem::RXNORM, c[i]["code"]["id"].get<std::string>());
        CHECK(planted.contains(code));
    }
    CHECK(fx.service->get_candidates("NOPE", "MEDICATION", 1, std::nullopt).status == 404);
    CHECK(fx.service->get_candidates("P00", "DEVICE", 1, std::nullopt).status == 400);
    CHECK(fx.service->get_candidates("P00", "MEDICATION", 3, std::nullopt).status == 400);
    CHECK(fx.service->get_candidates("P00", "MEDICATION", 2, std::nullopt).status == 409);
}

TEST_CASE("round-two candidates skip annotated targets") {
    Fixture fx(true);
    const auto r = fx.service->get_candidates("P00", "MEDICATION", 2, std::nullopt);
    REQUIRE(r.status == 200);
    CHECK(r.body["candidates"].size() <= kRoundTwoCandidates);
    const auto annotated = annotated_targets(fx.service->kb(), "P00", RelationKind::MEDICATION);
    for (const auto& item : r.body["candidates"]) {
        CHECK_FALSE(annotated.contains(Code(CodeSystem::RXNORM, item["code"]["id"].get<std::string>())));
    }
}

TEST_CASE("annotations are validated, logged and replayed") {
    Fixture fx(false);
    const auto annotated = annotated_targets(fx.prep.data.kb, "P00", RelationKind::MEDICATION);
    Code target = synth_target(RelationKind::MEDICATION, 0);
    for (std::size_t j = 0; annotated.contains(target); ++j) target = synth_target(RelationKind::MEDICATION, j);
    CHECK(fx.service->post_annotation(annotation("P00", target, 1), "").status == 400);
    CHECK(fx.service->post_annotation("{nope", "alice").status == 400);
    CHECK(fx.service->post_annotation(annotation("P00", target, 5), "alice").status == 400);
    CHECK(fx.service->post_annotation(annotation("ZZZ", target, 1), "alice").status == 400);
    CHECK(fx.service->post_annotation(annotation("P00", synth_target(RelationKind::LAB, 0), 1), "alice").status == 400);

    const auto before = fx.service->kb().triplets().size();
    const auto ok = fx.service->post_annotation(annotation("P00", target, 1), "alice");
    CHECK(ok.status == 201);
    CHECK(ok.body["sequence"] == 1);
    CHECK(fx.service->kb().triplets().size() == before + 1);
    CHECK(fx.service->post_annotation(annotation("P00", target, 0), "bob").status == 201);
    CHECK(fx.service->kb().triplets().size() == before + 1);
    CHECK(fx.service->get_annotations("alice").body["annotations"].size() == 1);
    CHECK(fx.service->get_annotations("").body["annotations"].size() == 2);
    CHECK(read_events(fx.dir / "events.jsonl").size() == 2);
    CHECK(load_kb(fx.dir / "kb_snapshot.json") == fx.service->kb());

    const auto restarted = fx.make(false);
    CHECK(restarted->kb() == fx.service->kb());
    CHECK(restarted->get_annotations("").body["annotations"].size() == 2);
}

TEST_CASE("agreement between annotators") {
    Fixture fx(false);
    const std::vector<int> a{1, 1, 0, 0, 1, 0, 1, 0, 0, 0};
    const std::vector<int> b{1, 0, 0, 0, 1, 0, 1, 1, 0, 0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto t = synth_target(RelationKind::MEDICATION, 10 + i % 10);
        REQUIRE(fx.service->post_annotation(annotation("P0" + std::to_string(i / 5), t, a[i]), "a").status == 201);
        REQUIRE(fx.service->post_annotation(annotation("P0" + std::to_string(i / 5), t, b[i]), "b").status == 201);
    }
    const auto r = fx.service->get_agreement("a", "b");
    REQUIRE(r.status == 200);
    CHECK(r.body["n"] == 10);
    CHECK(r.body["kappa"].get<double>() == doctest::Approx(7.0 / 12.0));
    CHECK(r.body["conflicts"].size() == 2);
    CHECK(fx.service->get_agreement("a", "nobody").status == 400);
    CHECK(fx.service->get_agreement("", "b").status == 400);
}

TEST_CASE("retraining swaps in a new model") {
    Fixture fx(false);
    CHECK(fx.service->model() == nullptr);
    const auto r = fx.service->post_retrain();
    CHECK(r.status == 202);
    CHECK(r.body["accepted"] == true);
    fx.service->wait_for_retrain();
    CHECK(fx.service->model_generation() == 1);
    REQUIRE(fx.service->model() != nullptr);
    const auto status = fx.service->get_status();
    CHECK(status.body["retrain"]["state"] == "done");
    CHECK(status.body["model_loaded"] == true);
    CHECK(fx.service->get_candidates("P00", "MEDICATION", 2, 5).body["candidates"].size() == 5);
}

TEST_CASE("HTTP endpoints over localhost") {
    Fixture fx(true);
    httplib::Server server;
    fx.service->bind(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto res = client.Get("/problems");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["problems"].size() == 6);

    res = client.Get("/problems/P01/candidates?kind=LAB&round=1&top_n=4");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["candidates"].size() == 4);

    res = client.Get("/problems/P01/candidates?kind=LAB&round=x");
    REQUIRE(res);
    CHECK(res->status == 400);

    const auto target = synth_target(RelationKind::MEDICATION, 20);
    res = client.Post("/annotations", httplib::Headers{{"X-Annotator-Id", "carol"}}, annotation("P01", target, 1),
                      "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    CHECK(json::parse(res->body)["annotator"] == "carol");

    res = client.Get("/annotations?annotator=carol");
    REQUIRE(res);
    CHECK(json::parse(res->body)["annotations"].size() == 1);

    res = client.Get("/status");
    REQUIRE(res);
    CHECK(json::parse(res->body)["events"] == 1);

    res = client.Get("/kb");
    REQUIRE(res);
    CHECK(res->status == 200);

    res = client.Get("/agreement?a=carol&b=dave");
    REQUIRE(res);
    CHECK(res->status == 400);

    server.stop();
    thread.join();
}
