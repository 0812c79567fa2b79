#include <doctest.h>

#include <cmath>
#include <random>

#include "pomr/encounters.hpp"
#include "support.hpp"

using namespace pomr;
using support::encounter;
using support::icd;
using support::lab;
using support::med;
using support::order;

namespace {

constexpr auto M = RelationKind::MEDICATION;
constexpr auto L = RelationKind::LAB;

/// Independent pass over every pair of encounters of a patient.
double brute_force_cooc(const std::vector<EncounterRecord>& recs, const Problem& p, const Code& target,
                        CoocDefinition def) {
    std::map<std::string, std::vector<const EncounterRecord*>> by_patient;
    for (const auto& r : recs) by_patient[r.patient_id].push_back(&r);
    std::size_t num = 0;
    std::size_t den = 0;
    for (const auto& [pid, list] : by_patient) {
        bool has_target = false;
        bool hit = false;
        for (const auto* t : list) {
            for (const auto& o : t->orders) {
                if (o.code != target) continue;
                has_target = true;
                if (def == CoocDefinition::EXPLICIT) {
                    if (o.linked_diagnosis && p.definition.contains(*o.linked_diagnosis)) hit = true;
                    continue;
                }
                for (const auto* d : list) {
                    bool has_problem = false;
                    for (const auto& c : p.definition) has_problem = has_problem || d->diagnoses.contains(c);
                    if (!has_problem) continue;
                    const int gap = std::abs(*parse_day(d->date) - *parse_day(t->date));
                    switch (def) {
                        case CoocDefinition::SAME_ENCOUNTER: hit = hit || d == t; break;
                        case CoocDefinition::TWO_WEEKS_SAME_FACILITY:
                            hit = hit || (gap <= 14 && d->facility_id == t->facility_id);
                            break;
                        case CoocDefinition::TWO_WEEKS_ANY_FACILITY: hit = hit || gap <= 14; break;
                        default: break;
                    }
                }
            }
        }
        if (has_target) ++den;
        if (has_target && hit) ++num;
    }
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::vector<EncounterRecord> random_records(std::mt19937_64& rng, std::size_t n_patients) {
    std::vector<Code> dx{icd("A1"), icd("A2"), icd("B1"), icd("C1")};
    std::vector<Code> meds{med("1"), med("2"), med("3"), med("4")};
    std::uniform_int_distribution<int> pick(0, 3);
    std::uniform_int_distribution<int> gap(0, 25);
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<EncounterRecord> out;
    for (std::size_t p = 0; p < n_patients; ++p) {
        int day = 0;
        const int n = 1 + pick(rng);
        for (int e = 0; e < n; ++e) {
            day += gap(rng);
            std::vector<Code> d;
            if (coin(rng)) d.push_back(dx[pick(rng)]);
            if (coin(rng)) d.push_back(dx[pick(rng)]);
            std::vector<Order> orders;
            for (int k = 0; k < 2; ++k) {
                if (!coin(rng)) continue;
                std::optional<Code> link;
                if (!d.empty() && coin(rng)) link = d[0];
                orders.push_back(order(M, meds[pick(rng)], link));
            }
            out.push_back(encounter("p" + std::to_string(p), "p" + std::to_string(p) + "e" + std::to_string(e),
                                    format_day(18000 + day), coin(rng) ? "F1" : "F2", d, orders));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("ingest JSONL") {
    const std::string text =
        R"({"patient_id":"p1","encounter_id":"e1","date":"2020-01-01","facility_id":"F","setting":"OUTPATIENT","diagnoses":[{"system":"ICD10","id":"I10"}],"orders":[{"kind":"MEDICATION","code":{"system":"RXNORM","id":"1"}}]})"
        "\n"
        R"({"patient_id":"p1","encounter_id":"e2","date":"2020-01-05","facility_id":"F","setting":"ED","diagnoses":[],"orders":[]})"
        "\n"
        R"({"patient_id":"p2","encounter_id":"e3","date":"2020-02-01","facility_id":"G","setting":"INPATIENT","diagnoses":[],"orders":[{"kind":"LAB","code":{"system":"LOINC","id":"1-1"}}],"provider_specialty":"cardiology"})"
        "\n";
    const auto store = parse_encounters(text);
    CHECK(store.encounters().size() == 3);
    CHECK(store.patients().size() == 2);
    CHECK(store.kind_of(med("1")) == CodeKind::MEDICATION);
    CHECK(store.kind_of(icd("I10")) == CodeKind::DIAGNOSIS);
    CHECK(store.occurrences(lab("1-1")) == 1);
    CHECK(parse_encounters("").empty());
}

TEST_CASE("encounter JSON round trip") {
    const auto r = encounter("p", "e", "2021-03-04", "F", {icd("I10")}, {order(M, med("5"), icd("I10"))}, "cardio");
    const auto back = encounter_from_json_line(encounter_to_json_line(r), "x", 1);
    CHECK(back.patient_id == "p");
    CHECK(back.diagnoses == r.diagnoses);
    REQUIRE(back.orders.size() == 1);
    CHECK(back.orders[0].linked_diagnosis == icd("I10"));
    CHECK(back.provider_specialty == "cardio");
}

TEST_CASE("ingest errors") {
    SUBCASE("kind conflict") {
        std::vector<EncounterRecord> recs{
            encounter("p", "e1", "2020-01-01", "F", {}, {order(M, med("X"))}),
            encounter("p", "e2", "2020-01-02", "F", {}, {order(L, med("X"))})};
        CHECK_THROWS_AS(EncounterStore::from_records(recs), Error);
    }
    SUBCASE("duplicate encounter id") {
        std::vector<EncounterRecord> recs{encounter("p", "e1", "2020-01-01", "F", {}, {}),
                                          encounter("q", "e1", "2020-01-02", "F", {}, {})};
        CHECK_THROWS_AS(EncounterStore::from_records(recs), Error);
    }
    SUBCASE("bad date") {
        CHECK_THROWS_AS(EncounterStore::from_records({encounter("p", "e1", "2020-02-30", "F", {}, {})}), Error);
    }
    SUBCASE("linked diagnosis not on encounter") {
        std::vector<EncounterRecord> recs{encounter("p", "e1", "2020-01-01", "F", {}, {order(M, med("1"), icd("I10"))})};
        CHECK_THROWS_AS(EncounterStore::from_records(recs), Error);
        const auto lenient = EncounterStore::from_records(recs, IngestOptions{false});
        CHECK(lenient.warnings().size() == 1);
    }
    SUBCASE("parse error carries the line") {
        try {
            parse_encounters("\n{broken\n", "enc.jsonl");
            FAIL("expected parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
}

TEST_CASE("dates") {
    CHECK(parse_day("1970-01-01") == 0);
    CHECK(parse_day("1970-01-15") == 14);
    CHECK_FALSE(parse_day("2021-13-01"));
    CHECK(format_day(*parse_day("2024-02-29")) == "2024-02-29");
}

TEST_CASE("vocabulary threshold") {
    std::vector<EncounterRecord> recs;
    for (int i = 0; i < 5; ++i) {
        std::vector<Order> orders{order(M, med("five"))};
        if (i < 4) orders.push_back(order(M, med("four")));
        recs.push_back(encounter("p", "e" + std::to_string(i), "2020-01-0" + std::to_string(i + 1), "F", {}, orders));
    }
    const auto store = EncounterStore::from_records(recs);
    const auto v5 = build_vocabulary(store, 5);
    CHECK(v5.codes(M).contains(med("five")));
    CHECK_FALSE(v5.codes(M).contains(med("four")));
    const auto v1 = build_vocabulary(store, 1);
    CHECK(v1.codes(M).size() == 2);
    CHECK(v1.frequency(med("four")) == 4);
    const auto back = vocabulary_from_json(vocabulary_to_json(v1));
    CHECK(back.codes(M) == v1.codes(M));
    CHECK(back.frequency(med("five")) == 5);
}

TEST_CASE("co-occurrence on a single encounter") {
    const Problem p{"P", "p", {icd("D1")}};
    const auto store = EncounterStore::from_records(
        {encounter("x", "e", "2020-01-01", "F", {icd("D1")}, {order(M, med("m"))})});
    CHECK(cooccurrence(store, {p}, CoocDefinition::SAME_ENCOUNTER).at({"P", med("m")}) == 1.0);
    CHECK(cooccurrence(store, {p}, CoocDefinition::EXPLICIT).at({"P", med("m")}) == 0.0);
}

TEST_CASE("two-week same-facility example: 2 of 4 patients") {
    const Problem p{"P", "p", {icd("D1")}};
    std::vector<EncounterRecord> recs{
        // counted: d and m 10 days apart, same facility
        encounter("a", "a1", "2020-01-01", "F", {icd("D1")}, {}),
        encounter("a", "a2", "2020-01-11", "F", {}, {order(M, med("m"))}),
        // counted: exactly 14 days apart
        encounter("b", "b1", "2020-03-01", "F", {icd("D1")}, {}),
        encounter("b", "b2", "2020-03-15", "F", {}, {order(M, med("m"))}),
        // not counted: other facility
        encounter("c", "c1", "2020-01-01", "F", {icd("D1")}, {}),
        encounter("c", "c2", "2020-01-02", "G", {}, {order(M, med("m"))}),
        // not counted: 15 days
        encounter("d", "d1", "2020-01-01", "F", {icd("D1")}, {}),
        encounter("d", "d2", "2020-01-16", "F", {}, {order(M, med("m"))}),
        // no m
        encounter("e", "e1", "2020-01-01", "F", {icd("D1")}, {}),
        encounter("f", "f1", "2020-01-01", "F", {}, {})};
    const auto store = EncounterStore::from_records(recs);
    const auto v = cooccurrence(store, {p}, CoocDefinition::TWO_WEEKS_SAME_FACILITY).at({"P", med("m")});
    CHECK(v == 0.5);
    CHECK(v == brute_force_cooc(recs, p, med("m"), CoocDefinition::TWO_WEEKS_SAME_FACILITY));
    CHECK(cooccurrence(store, {p}, CoocDefinition::TWO_WEEKS_ANY_FACILITY).at({"P", med("m")}) == 0.75);
}

TEST_CASE("co-occurrence matches the brute-force oracle and threads agree") {
    std::mt19937_64 rng(5);
    const auto recs = random_records(rng, 40);
    const auto store = EncounterStore::from_records(recs);
    const std::vector<Problem> problems{{"A", "a", {icd("A1"), icd("A2")}}, {"B", "b", {icd("B1")}}};
    const auto one = compute_cooccurrence(store, problems, 1);
    const auto four = compute_cooccurrence(store, problems, 4);
    for (const auto& p : problems) {
        for (const auto& m : {med("1"), med("2"), med("3"), med("4")}) {
            for (auto def : kAllCoocDefinitions) {
                CHECK(one.value(p.problem_id, m, def) == doctest::Approx(brute_force_cooc(recs, p, m, def)).epsilon(1e-15));
                CHECK(one.numerator(p.problem_id, m, def) == four.numerator(p.problem_id, m, def));
            }
        }
    }
}

TEST_CASE("specialty vectors") {
    std::vector<EncounterRecord> recs{
        encounter("p", "e1", "2020-01-01", "F", {}, {order(M, med("t"))}, "cardiology"),
        encounter("p", "e2", "2020-01-02", "F", {}, {order(M, med("t"))}, "cardiology"),
        encounter("p", "e3", "2020-01-03", "F", {}, {order(M, med("t"))}),
        encounter("p", "e4", "2020-01-04", "F", {}, {}, "neurology")};
    const auto store = EncounterStore::from_records(recs);
    const auto vocab = build_specialty_vocabulary(store);
    REQUIRE(vocab.size() == 2);
    CHECK(vocab.names()[0] == "cardiology");
    const auto v = specialty_vector(store, med("t"), vocab);
    CHECK(v == std::vector<double>{2.0, 0.0});
    CHECK(specialty_vector(store, med("absent"), vocab) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("importance score") {
    const Problem p{"P", "p", {icd("D")}};
    SUBCASE("log(11) for a perfectly separating target") {
        std::vector<EncounterRecord> recs;
        for (int i = 0; i < 10; ++i) {
            recs.push_back(encounter("a", "y" + std::to_string(i), "2020-01-01", "F", {icd("D")}, {order(M, med("t"))}));
            recs.push_back(encounter("b", "n" + std::to_string(i), "2020-01-01", "F", {icd("Z")}, {order(M, med("o"))}));
        }
        const auto store = EncounterStore::from_records(recs);
        const auto s = importance_score(store, p, med("t"));
        CHECK_FALSE(s.degenerate);
        CHECK(s.value == doctest::Approx(std::log(11.0)).epsilon(1e-12));
        CHECK(s.value == doctest::Approx(2.398).epsilon(1e-3));
        CHECK(importance_score(store, p, med("o")).value < 0.0);
    }
    SUBCASE("equal frequency gives zero") {
        std::vector<EncounterRecord> recs;
        for (int i = 0; i < 4; ++i) {
            recs.push_back(encounter("a", "y" + std::to_string(i), "2020-01-01", "F", {icd("D")},
                                     i % 2 ? std::vector<Order>{order(M, med("t"))} : std::vector<Order>{}));
            recs.push_back(encounter("b", "n" + std::to_string(i), "2020-01-01", "F", {icd("Z")},
                                     i % 2 ? std::vector<Order>{order(M, med("t"))} : std::vector<Order>{}));
        }
        CHECK(importance_score(EncounterStore::from_records(recs), p, med("t")).value == doctest::Approx(0.0));
    }
    SUBCASE("encounters without diagnoses are ignored") {
        std::vector<EncounterRecord> recs{encounter("a", "y", "2020-01-01", "F", {icd("D")}, {order(M, med("t"))}),
                                          encounter("a", "x", "2020-01-02", "F", {}, {order(M, med("t"))})};
        const auto store = EncounterStore::from_records(recs);
        // With the filter: 1 y=1 encounter containing t, 0 y=0 encounters.
        CHECK(importance_score(store, p, med("t")).value == doctest::Approx(std::log(2.0 / 3.0) - std::log(0.5)));
        // Without it the diagnosis-free encounter is a y=0 encounter containing t.
        CHECK(importance_score(store, p, med("t"), {false}).value ==
              doctest::Approx(std::log(2.0 / 3.0) - std::log(2.0 / 3.0)));
    }
    SUBCASE("no qualifying encounters") {
        const auto store = EncounterStore::from_records({encounter("a", "x", "2020-01-01", "F", {icd("Z")}, {order(M, med("t"))})});
        const auto s = importance_score(store, p, med("t"));
        CHECK(s.degenerate);
        CHECK(s.value == 0.0);
    }
}

TEST_CASE("candidate lists") {
    const std::set<Code> eligible{med("a"), med("b"), med("c")};
    const std::map<Code, double> score{{med("a"), 2.0}, {med("b"), 0.5}, {med("c"), -1.0}};
    auto scorer = [&](const Code& c) { return score.at(c); };
    const auto top2 = candidate_list(scorer, eligible, {}, 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].code == med("a"));
    CHECK(top2[1].code == med("b"));
    const auto excl = candidate_list(scorer, eligible, {med("a")}, 2);
    CHECK(excl[0].code == med("b"));
    CHECK(candidate_list(scorer, eligible, {}, 10).size() == 3);
    CHECK(candidate_list(scorer, {}, {}, 10).empty());
    const auto ties = candidate_list([](const Code&) { return 1.0; }, eligible, {}, 3);
    CHECK(ties[0].code == med("a"));
    CHECK(ties[2].code == med("c"));
}
