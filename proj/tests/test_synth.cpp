#include <doctest.h>

#include "pomr/features.hpp"
#include "pomr/synth.hpp"
#include "support.hpp"

using namespace pomr;

TEST_CASE("plant spec validation") {
    PlantSpec s;
    CHECK_NOTHROW(s.validate());
    s.block_size = 10;
    s.n_targets_per_kind = 20;
    CHECK_THROWS_AS(s.validate(), Error);
    PlantSpec p;
    p.p_in = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("generated data is consistent and deterministic") {
    PlantSpec spec;
    spec.n_patients = 100;
    const auto a = generate(spec);
    const auto b = generate(spec);
    CHECK(a.kb == b.kb);
    CHECK(a.truth == b.truth);
    REQUIRE(a.encounters.size() == b.encounters.size());
    for (std::size_t i = 0; i < a.encounters.size(); ++i) {
        CHECK(encounter_to_json_line(a.encounters[i]) == encounter_to_json_line(b.encounters[i]));
    }
    CHECK(a.kb.problems().size() == spec.n_problems);
    CHECK_NOTHROW(EncounterStore::from_records(a.encounters));
    for (const auto& t : a.kb.triplets()) {
        const auto& planted = a.truth.at({t.problem_id, t.relation});
        CHECK(planted.contains(t.target) == t.positive());
    }
    spec.seed = 2;
    CHECK_FALSE(generate(spec).kb == a.kb);
}

TEST_CASE("perfect plant gives exact same-encounter rates") {
    PlantSpec spec;
    spec.n_problems = 6;
    spec.n_targets_per_kind = 24;
    spec.n_patients = 150;
    spec.p_in = 1.0;
    spec.p_out = 0.0;
    spec.p_second_problem = 0.0;
    const auto data = generate(spec);
    const auto store = EncounterStore::from_records(data.encounters);
    const auto table = compute_cooccurrence(store, data.kb.problem_list());
    std::size_t checked = 0;
    for (const auto& p : data.kb.problem_list()) {
        for (auto kind : kAllRelations) {
            const auto& planted = data.truth.at({p.problem_id, kind});
            for (std::size_t j = 0; j < spec.n_targets_per_kind; ++j) {
                const auto code = synth_target(kind, j);
                if (table.target_patients(code) == 0) continue;
                const double v = table.value(p.problem_id, code, CoocDefinition::SAME_ENCOUNTER);
                CHECK(v == (planted.contains(code) ? 1.0 : 0.0));
                ++checked;
            }
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("planted targets have higher importance") {
    PlantSpec spec;
    spec.n_problems = 5;
    spec.n_patients = 200;
    const auto data = generate(spec);
    const auto store = EncounterStore::from_records(data.encounters);
    for (const auto& p : data.kb.problem_list()) {
        const auto scores = importance_scores(store, p);
        const auto& planted = data.truth.at({p.problem_id, RelationKind::MEDICATION});
        double min_planted = INFINITY;
        double max_other = -INFINITY;
        for (const auto& [code, s] : scores) {
            if (code.system() != CodeSystem::RXNORM) continue;
            if (planted.contains(code)) {
                min_planted = std::min(min_planted, s.value);
            } else {
                max_other = std::max(max_other, s.value);
            }
        }
        CHECK(min_planted > max_other);
    }
}

TEST_CASE("write_synth and truth round trip") {
    PlantSpec spec;
    spec.n_patients = 40;
    const auto data = generate(spec);
    CHECK(truth_from_json(truth_to_json(data.truth)) == data.truth);
    const auto dir = support::temp_dir("synth");
    write_synth(data, dir);
    for (const char* f : {"encounters.jsonl", "kb.json", "truth.json"}) CHECK(std::filesystem::exists(dir / f));
    CHECK(load_kb(dir / "kb.json") == data.kb);
    CHECK(ingest(dir / "encounters.jsonl").encounters().size() == data.encounters.size());
}
