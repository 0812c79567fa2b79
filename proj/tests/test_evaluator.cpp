#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pomr/evaluator.hpp"
#include "support.hpp"

using namespace pomr;
using support::lab;
using support::med;

namespace {

constexpr auto M = RelationKind::MEDICATION;

std::vector<std::size_t> all_indices(const KnowledgeBase& kb) {
    std::vector<std::size_t> out(kb.triplets().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

}  // namespace

TEST_CASE("rank with ties") {
    const std::vector<double> negs{5.0, 3.0, 3.0, 1.0};
    CHECK(rank_one(3.0, negs, TiePolicy::STRICT) == 4.0);
    CHECK(rank_one(3.0, negs, TiePolicy::MEDIAN) == 3.0);
    const std::vector<double> all_tied(14, 0.0);
    CHECK(rank_one(0.0, all_tied, TiePolicy::MEDIAN) == 8.0);
    CHECK(rank_one(0.0, all_tied, TiePolicy::STRICT) == 15.0);
    CHECK(rank_one(9.0, negs, TiePolicy::STRICT) == 1.0);
    CHECK_THROWS_AS(rank_one(NAN, negs, TiePolicy::STRICT), Error);
}

TEST_CASE("median rank for a 0/1 scorer with 4 relevant and 5 irrelevant negatives") {
    std::vector<double> negs{1, 1, 1, 1, 0, 0, 0, 0, 0};
    CHECK(rank_one(1.0, negs, TiePolicy::MEDIAN) == 3.0);
    CHECK(rank_one(0.0, negs, TiePolicy::MEDIAN) == 7.5);
}

TEST_CASE("rank agrees with the sorted-position oracle") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> val(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> negs(static_cast<std::size_t>(val(rng) * 3));
        for (auto& x : negs) x = val(rng);
        const double pos = val(rng);
        for (auto policy : {TiePolicy::STRICT, TiePolicy::MEDIAN}) {
            CHECK(rank_one(pos, negs, policy) == oracle::sorted_rank(pos, negs, policy));
        }
    }
}

TEST_CASE("metrics from ranks") {
    const std::vector<double> ranks{1.0, 2.0, 4.0, 10.0};
    const auto m = metrics_from_ranks(ranks);
    CHECK(m.count == 4);
    CHECK(m.mr == doctest::Approx(4.25));
    CHECK(m.mrr == doctest::Approx((1.0 + 0.5 + 0.25 + 0.1) / 4.0));
    CHECK(m.hits1 == 0.25);
    CHECK(m.hits5 == 0.75);
    CHECK(metrics_from_ranks({}).count == 0);
}

TEST_CASE("evaluate groups by problem and relation and counts exclusions") {
    const Problem p{"P", "p", {support::icd("D")}};
    const Problem q{"Q", "q", {support::icd("E")}};
    const KnowledgeBase kb({p, q}, {{"P", M, med("a"), Label::POSITIVE, 1},
                                    {"P", M, med("b"), Label::NEGATIVE, 1},
                                    {"P", M, med("c"), Label::NEGATIVE, 1},
                                    {"Q", M, med("a"), Label::NEGATIVE, 1},
                                    {"Q", RelationKind::LAB, lab("1-1"), Label::POSITIVE, 1},
                                    {"Q", M, med("z"), Label::POSITIVE, 1}});
    const std::map<Code, double> score{{med("a"), 1.0}, {med("b"), 2.0}, {med("c"), 0.0}, {med("z"), 5.0}};
    const TripletScorer scorer = [&](const Triplet& t) -> std::optional<double> {
        const auto it = score.find(t.target);
        if (it == score.end()) return std::nullopt;
        return it->second;
    };
    const auto report = evaluate(scorer, kb, all_indices(kb), TiePolicy::STRICT);
    REQUIRE(report.ranked.size() == 2);
    CHECK(report.excluded_no_negatives == 1);
    CHECK(report.ranked[0].problem_id == "P");
    CHECK(report.ranked[0].rank == 2.0);
    CHECK(report.ranked[1].rank == 1.0);
    CHECK(report.overall.mrr == doctest::Approx(0.75));
    CHECK(report.per_kind[index_of(RelationKind::LAB)].count == 0);
    const auto json = report_to_json(report);
    CHECK(json.find("\"excluded_no_negatives\"") != std::string::npos);
    CHECK(report_to_csv(report).rfind("kind,mr,mrr,hits1,hits5,n", 0) == 0);
}

TEST_CASE("evaluate matches a brute-force oracle") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> val(0, 3);
    std::vector<Problem> ps{{"A", "a", {support::icd("A")}}, {"B", "b", {support::icd("B")}}};
    std::vector<Triplet> ts;
    std::map<std::pair<std::string, Code>, double> score;
    for (const auto& p : ps) {
        for (int j = 0; j < 12; ++j) {
            const auto code = med(std::to_string(j));
            ts.push_back({p.problem_id, M, code, j < 5 ? Label::POSITIVE : Label::NEGATIVE, 1});
            score[{p.problem_id, code}] = val(rng);
        }
    }
    const KnowledgeBase kb(ps, ts);
    const TripletScorer scorer = [&](const Triplet& t) { return std::optional<double>(score.at({t.problem_id, t.target})); };
    for (auto policy : {TiePolicy::STRICT, TiePolicy::MEDIAN}) {
        const auto report = evaluate(scorer, kb, all_indices(kb), policy);
        double sum_rr = 0.0;
        double sum_r = 0.0;
        std::size_t n = 0;
        for (const auto& p : ps) {
            std::vector<double> negs;
            for (const auto& t : kb.triplets()) {
                if (t.problem_id == p.problem_id && !t.positive()) negs.push_back(score.at({p.problem_id, t.target}));
            }
            for (const auto& t : kb.triplets()) {
                if (t.problem_id != p.problem_id || !t.positive()) continue;
                const double r = oracle::sorted_rank(score.at({p.problem_id, t.target}), negs, policy);
                sum_r += r;
                sum_rr += 1.0 / r;
                ++n;
            }
        }
        CHECK(report.overall.count == n);
        CHECK(report.overall.mr == doctest::Approx(sum_r / n).epsilon(1e-12));
        CHECK(report.overall.mrr == doctest::Approx(sum_rr / n).epsilon(1e-12));
    }
}

TEST_CASE("model scorer declines unknown entities") {
    ModelParams params(2, 1, {"P"}, {med("a")});
    const auto scorer = model_scorer(params, nullptr);
    CHECK(scorer({"P", M, med("a"), Label::POSITIVE, 1}).has_value());
    CHECK_FALSE(scorer({"P", M, med("zz"), Label::POSITIVE, 1}).has_value());
    CHECK_FALSE(scorer({"X", M, med("a"), Label::POSITIVE, 1}).has_value());
}

TEST_CASE("per-problem table") {
    EvalReport r;
    r.ranked.push_back({0, "P", M, med("a"), 1.0, 3});
    r.ranked.push_back({1, "P", M, med("b"), 7.0, 3});
    const auto table = per_problem_report(r);
    CHECK(table.at("P")[0] == 0.5);
    CHECK_FALSE(table.at("P")[2].has_value());
    CHECK(problem_table_to_csv(table).find("P") != std::string::npos);
}

TEST_CASE("frequency bins") {
    EvalReport r;
    const std::vector<std::size_t> counts{1, 10, 100, 1000, 10000};
    std::map<Code, std::size_t> freq;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto c = med(std::to_string(i));
        freq[c] = counts[i];
        r.ranked.push_back({i, "P", M, c, static_cast<double>(i + 1), 5});
    }
    const auto bins = frequency_bin_report(r, [&](const Code& c) { return freq.at(c); }, 5);
    REQUIRE(bins.size() == 5);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        CHECK(bins[i].metrics.count == 1);
        CHECK(bins[i].metrics.mr == static_cast<double>(i + 1));
    }
    const auto one = frequency_bin_report(r, [](const Code&) { return std::size_t{7}; }, 5);
    CHECK(one.size() == 1);
    CHECK(frequency_bins_to_csv(bins).rfind("bin,log_lo,log_hi,n,mr,mrr,hits1,hits5", 0) == 0);
}

TEST_CASE("nearest problems") {
    ModelParams params(2, 1, {"A", "B", "C", "D"}, {med("t")});
    auto set = [&](const std::string& id, double x, double y) {
        params.problem(id)[0] = x;
        params.problem(id)[1] = y;
    };
    set("A", 1, 0);
    set("B", 0.9, 0.1);
    set("C", 0, 1);
    set("D", -1, 0);
    const auto n = nearest_problems(params, "A", 2);
    REQUIRE(n.size() == 2);
    CHECK(n[0].problem_id == "B");
    CHECK(n[1].problem_id == "C");
    CHECK(nearest_problems(params, "A", 10).size() == 3);
}

TEST_CASE("Cohen's kappa") {
    const std::vector<int> a{1, 1, 0, 0, 1, 0, 1, 0, 0, 0};
    const std::vector<int> b{1, 0, 0, 0, 1, 0, 1, 1, 0, 0};
    CHECK(cohen_kappa(a, b) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
    CHECK(cohen_kappa(a, a) == 1.0);
    const std::vector<int> x{1, 0, 1, 0};
    const std::vector<int> y{0, 1, 0, 1};
    CHECK(cohen_kappa(x, y) == doctest::Approx(-1.0));
    const std::vector<int> ones{1, 1};
    CHECK(cohen_kappa(ones, ones) == 1.0);
    CHECK_THROWS_AS(cohen_kappa(a, x), Error);
    CHECK_THROWS_AS(cohen_kappa(std::vector<int>{}, std::vector<int>{}), Error);
    CHECK_THROWS_AS(cohen_kappa(std::vector<int>{2}, std::vector<int>{1}), Error);
}
