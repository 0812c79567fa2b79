#include <doctest.h>

#include <cmath>

#include "pomr/embeddings.hpp"
#include "support.hpp"

using namespace pomr;
using support::icd;
using support::med;

TEST_CASE("parse word2vec text") {
    const auto t = parse_embeddings("2 3\nRXNORM:1 0.1 0.2 0.3\nRXNORM:2 1 2 3\n");
    CHECK(t.dim() == 3);
    CHECK(t.size() == 2);
    CHECK((*t.find(med("2")))[2] == 3.0);
    CHECK(parse_embeddings(serialize_embeddings(t)) == t);
}

TEST_CASE("embedding load errors") {
    CHECK_THROWS_AS(parse_embeddings("1 3\nRXNORM:1 0.1 0.2\n"), ParseError);
    CHECK_THROWS_AS(parse_embeddings("1 2\nRXNORM:1 0.1 nan\n"), ParseError);
    CHECK_THROWS_AS(parse_embeddings("1 2\nRXNORM:1 0.1 abc\n"), ParseError);
    CHECK_THROWS_AS(parse_embeddings("2 2\nRXNORM:1 0.1 0.2\nRXNORM:1 0.1 0.2\n"), ParseError);
    CHECK_THROWS_AS(parse_embeddings("1 2\nRXNORM:1 0.1 0.2\n", 3), ParseError);
    CHECK_THROWS_AS(parse_embeddings("garbage\n"), ParseError);
    try {
        parse_embeddings("2 2\nA 1 2\nB 1\n", 0, "e.txt");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("vector helpers") {
    CHECK(dot({1, 2}, {3, 4}) == 11.0);
    CHECK(cosine({1, 0}, {0, 1}) == 0.0);
    CHECK(cosine({2, 0}, {5, 0}) == doctest::Approx(1.0));
    std::mt19937_64 rng(1);
    const auto v = random_vector(10, rng);
    for (double x : v) CHECK(std::abs(x) <= 0.05);
}

TEST_CASE("problem embedding from definition codes") {
    EmbeddingTable t(2, EmbeddingSource::EXTERNAL);
    t.add(icd("A").token(), {1.0, 0.0});
    t.add(icd("B").token(), {0.0, 1.0});
    const Problem p{"P", "p", {icd("A"), icd("B"), icd("C")}};
    std::mt19937_64 rng(1);
    const std::map<Code, std::size_t> freq{{icd("A"), 3}, {icd("B"), 1}};
    const auto f = init_problem_embedding(p, t, ProblemWeighting::FREQUENCY, freq, rng);
    CHECK_FALSE(f.random);
    CHECK(f.vector[0] == doctest::Approx(0.75));
    CHECK(f.vector[1] == doctest::Approx(0.25));
    const auto u = init_problem_embedding(p, t, ProblemWeighting::UNIFORM, freq, rng);
    CHECK(u.vector[0] == doctest::Approx(0.5));
    const Problem none{"Q", "q", {icd("Z")}};
    const auto r = init_problem_embedding(none, t, ProblemWeighting::UNIFORM, freq, rng);
    CHECK(r.random);
    CHECK(r.vector.size() == 2);
}

TEST_CASE("k-NN transfer") {
    EmbeddingTable internal(2, EmbeddingSource::SITE_SPECIFIC);
    internal.add("RXNORM:Q", {1.0, 0.0});
    internal.add("RXNORM:N1", {1.0, 0.1});
    internal.add("RXNORM:N2", {1.0, 0.3});
    internal.add("RXNORM:FAR", {-1.0, 0.0});
    EmbeddingTable external(3, EmbeddingSource::EXTERNAL);
    external.add("RXNORM:N1", {1.0, 2.0, 3.0});
    external.add("RXNORM:N2", {3.0, 2.0, 1.0});
    external.add("RXNORM:FAR", {9.0, 9.0, 9.0});
    std::mt19937_64 rng(1);
    const auto one = knn_transfer(med("Q"), internal, external, 1, rng);
    CHECK(one.vector == Vector{1.0, 2.0, 3.0});
    const auto two = knn_transfer(med("Q"), internal, external, 2, rng);
    CHECK(two.vector == Vector{2.0, 2.0, 2.0});
    const auto five = knn_transfer(med("Q"), internal, external, kDefaultKnn, rng);
    CHECK(five.short_of_k);
    CHECK(kDefaultKnn == 5);
    const auto missing = knn_transfer(med("NOWHERE"), internal, external, 1, rng);
    CHECK(missing.random);
    CHECK(missing.vector.size() == 3);
}

TEST_CASE("vocabulary intersection") {
    std::array<std::set<Code>, 3> targets;
    targets[0] = {med("1"), med("2"), med("3"), med("4")};
    const Vocabulary vocab(targets, {}, {}, 1);
    EmbeddingTable ext(1, EmbeddingSource::EXTERNAL);
    ext.add("RXNORM:1", {0.0});
    ext.add("RXNORM:9", {0.0});
    const auto rows = vocab_intersection(vocab, ext);
    CHECK(rows[0].internal_count == 4);
    CHECK(rows[0].external_count == 2);
    CHECK(rows[0].shared == 1);
    CHECK(rows[0].fraction == 0.25);
    CHECK(intersection_to_csv(rows).find("vocab,statistic,value") == 0);
}

TEST_CASE("skip-gram is deterministic and covers the vocabulary") {
    std::vector<EncounterRecord> recs;
    for (int i = 0; i < 30; ++i) {
        recs.push_back(support::encounter("p", "e" + std::to_string(i), "2020-01-01", "F", {icd("D")},
                                          {support::order(RelationKind::MEDICATION, med(std::to_string(i % 3)))}));
    }
    const auto store = EncounterStore::from_records(recs);
    SkipGramConfig cfg;
    cfg.dim = 8;
    cfg.min_count = 5;
    const auto a = train_skipgram(store, cfg);
    const auto b = train_skipgram(store, cfg);
    CHECK(a == b);
    CHECK(a.size() == 4);
    CHECK(a.source() == EmbeddingSource::SITE_SPECIFIC);
}
