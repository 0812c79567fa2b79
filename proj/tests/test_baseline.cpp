#include <doctest.h>

#include <fstream>

#include "pomr/baseline.hpp"
#include "support.hpp"

using namespace pomr;
using support::icd;
using support::lab;
using support::med;
using support::proc;

namespace {

OntologyMaps sample_maps() {
    OntologyMaps m;
    m.med_to_diagnoses[med("lisinopril")] = {icd("I10")};
    m.proc_parent[proc("93000")] = "ECG";
    m.parent_discipline["ECG"] = "cardiology";
    m.chapters.push_back({CodeSystem::ICD10, "I00", "I99", "cardiology"});
    m.chapters.push_back({CodeSystem::ICD10, "E00", "E89", "endocrine"});
    return m;
}

}  // namespace

TEST_CASE("chapter lookup ignores dots and compares prefixes") {
    const auto m = sample_maps();
    CHECK(chapter_disciplines(m, icd("I10")) == std::set<std::string>{"cardiology"});
    CHECK(chapter_disciplines(m, icd("I25.10")) == std::set<std::string>{"cardiology"});
    CHECK(chapter_disciplines(m, icd("E11.9")) == std::set<std::string>{"endocrine"});
    CHECK(chapter_disciplines(m, icd("J45")).empty());
    CHECK(chapter_disciplines(m, Code(CodeSystem::ICD9, "410")).empty());
}

TEST_CASE("relevance rules") {
    const auto m = sample_maps();
    const Problem htn{"HTN", "hypertension", {icd("I10")}};
    const Problem dm{"DM", "diabetes", {icd("E11.9")}};
    CHECK(med_relevant(m, med("lisinopril"), htn));
    CHECK_FALSE(med_relevant(m, med("lisinopril"), dm));
    CHECK_FALSE(med_relevant(m, med("unmapped"), htn));
    CHECK(proc_relevant(m, proc("93000"), htn));
    CHECK_FALSE(proc_relevant(m, proc("93000"), dm));
    CHECK_FALSE(proc_relevant(m, proc("00000"), htn));
}

TEST_CASE("baseline scorer skips labs") {
    const auto m = sample_maps();
    const KnowledgeBase kb({{"HTN", "hypertension", {icd("I10")}}},
                           {{"HTN", RelationKind::MEDICATION, med("lisinopril"), Label::POSITIVE, 1},
                            {"HTN", RelationKind::MEDICATION, med("other"), Label::NEGATIVE, 1},
                            {"HTN", RelationKind::LAB, lab("1-1"), Label::POSITIVE, 1},
                            {"HTN", RelationKind::LAB, lab("2-2"), Label::NEGATIVE, 1}});
    const auto scorer = baseline_scorer(m, kb);
    CHECK(scorer(kb.triplets()[0]) == 1.0);
    CHECK(scorer(kb.triplets()[1]) == 0.0);
    CHECK_FALSE(scorer(kb.triplets()[2]).has_value());
    const std::vector<std::size_t> all{0, 1, 2, 3};
    const auto report = evaluate(scorer, kb, all, TiePolicy::STRICT);
    CHECK(report.ranked.size() == 1);
    CHECK(report.ranked[0].rank == 1.0);
    CHECK(report.skipped_unsupported == 1);
    const auto cov = baseline_coverage(m, kb, all);
    CHECK(cov.medications == 2);
    CHECK(cov.mapped_fraction == 0.5);
    CHECK(cov.matching_fraction == 0.5);
}

TEST_CASE("ontology maps save and load") {
    const auto dir = support::temp_dir("ontology");
    const auto m = sample_maps();
    save_ontology_maps(m, dir);
    const auto back = load_ontology_maps(dir);
    CHECK(back.med_to_diagnoses == m.med_to_diagnoses);
    CHECK(back.proc_parent == m.proc_parent);
    CHECK(back.parent_discipline == m.parent_discipline);
    REQUIRE(back.chapters.size() == 2);
    CHECK(back.chapters[0].hi == "I99");

    std::ofstream(dir / "chapter_discipline.csv") << "system,chapter_lo,chapter_hi,discipline\nICD10,I00,I9,x\n";
    CHECK_THROWS_AS(load_ontology_maps(dir), Error);
    std::filesystem::remove(dir / "proc_parent.csv");
    CHECK_THROWS_AS(load_ontology_maps(dir), Error);
}
