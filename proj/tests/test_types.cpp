#include <doctest.h>

#include "pomr/types.hpp"

using namespace pomr;

TEST_CASE("codes are trimmed and uppercased") {
    const Code a(CodeSystem::ICD10, "  i10 ");
    const Code b(CodeSystem::ICD10, "I10");
    CHECK(a == b);
    CHECK(a.id() == "I10");
    CHECK(a.token() == "ICD10:I10");
}

TEST_CASE("code identity includes the system") {
    CHECK(Code(CodeSystem::ICD9, "250") != Code(CodeSystem::ICD10, "250"));
}

TEST_CASE("codes order by system name then id") {
    CHECK(Code(CodeSystem::CPT, "9") < Code(CodeSystem::ICD10, "A"));
    CHECK(Code(CodeSystem::ICD10, "A") < Code(CodeSystem::ICD10, "B"));
    CHECK(Code(CodeSystem::LOINC, "1") < Code(CodeSystem::RXNORM, "0"));
}

TEST_CASE("token round trip") {
    const auto c = Code::from_token("RXNORM:1191");
    REQUIRE(c);
    CHECK(c->system() == CodeSystem::RXNORM);
    CHECK(c->id() == "1191");
    CHECK_FALSE(Code::from_token("NOPE:1"));
    CHECK_FALSE(Code::from_token("RXNORM"));
}

TEST_CASE("system, relation and kind names") {
    for (auto s : {CodeSystem::RXNORM, CodeSystem::LOINC, CodeSystem::CPT, CodeSystem::ICD9, CodeSystem::ICD10,
                   CodeSystem::SNOMED, CodeSystem::INTERNAL}) {
        CHECK(parse_code_system(to_string(s)) == s);
    }
    for (auto r : kAllRelations) CHECK(parse_relation(to_string(r)) == r);
    CHECK_FALSE(parse_relation("DEVICE"));
    CHECK(is_diagnosis_system(CodeSystem::SNOMED));
    CHECK_FALSE(is_diagnosis_system(CodeSystem::LOINC));
    CHECK(code_kind_of(RelationKind::LAB) == CodeKind::LAB);
}

TEST_CASE("format_double round-trips") {
    for (double x : {0.1, 1.0 / 3.0, 2.5e-300, -7.0, 123456789.125}) {
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(1.0) == "1");
}
