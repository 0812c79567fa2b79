#include "pomr/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"

namespace pomr {

using detail::json;

double rank_one(double pos_score, std::span<const double> neg_scores, TiePolicy policy) {
    if (!std::isfinite(pos_score)) throw Error("non-finite positive score");
    std::size_t above = 0;
    std::size_t tied = 0;
    for (double s : neg_scores) {
        if (!std::isfinite(s)) throw Error("non-finite negative score");
        if (s > pos_score) {
            ++above;
        } else if (s == pos_score) {
            ++tied;
        }
    }
    if (policy == TiePolicy::STRICT) return 1.0 + static_cast<double>(above + tied);
    return 1.0 + static_cast<double>(above) + static_cast<double>(tied) / 2.0;
}

Metrics metrics_from_ranks(std::span<const double> ranks) {
    Metrics m;
    m.count = ranks.size();
    if (ranks.empty()) return m;
    for (double r : ranks) {
        m.mr += r;
        m.mrr += 1.0 / r;
        if (r <= 1.0) m.hits1 += 1.0;
        if (r <= 5.0) m.hits5 += 1.0;
    }
    const double n = static_cast<double>(ranks.size());
    m.mr /= n;
    m.mrr /= n;
    m.hits1 /= n;
    m.hits5 /= n;
    return m;
}

EvalReport evaluate(const TripletScorer& scorer, const KnowledgeBase& kb, std::span<const std::size_t> part,
                    TiePolicy policy) {
    using PairId = std::pair<std::string, RelationKind>;
    struct Group {
        std::vector<std::size_t> positives;
        std::vector<double> negative_scores;
        std::size_t negatives_seen = 0;
    };
    std::map<PairId, Group> groups;
    EvalReport report;
    const auto& triplets = kb.triplets();
    for (auto i : part) {
        const auto& t = triplets.at(i);
        auto& g = groups[{t.problem_id, t.relation}];
        if (t.positive()) {
            g.positives.push_back(i);
            continue;
        }
        ++g.negatives_seen;
        if (const auto s = scorer(t)) g.negative_scores.push_back(*s);
    }

    std::vector<double> all;
    std::array<std::vector<double>, 3> by_kind;
    for (auto& [id, g] : groups) {
        for (auto i : g.positives) {
            const auto& t = triplets[i];
            if (g.negatives_seen == 0) {
                ++report.excluded_no_negatives;
                continue;
            }
            const auto s = scorer(t);
            if (!s || g.negative_scores.empty()) {
                ++report.skipped_unsupported;
                continue;
            }
            const double rank = rank_one(*s, g.negative_scores, policy);
            report.ranked.push_back({i, t.problem_id, t.relation, t.target, rank, g.negative_scores.size()});
            all.push_back(rank);
            by_kind[index_of(t.relation)].push_back(rank);
        }
    }
    report.overall = metrics_from_ranks(all);
    for (std::size_t k = 0; k < 3; ++k) report.per_kind[k] = metrics_from_ranks(by_kind[k]);
    return report;
}

TripletScorer model_scorer(const ModelParams& params, const FeatureTable* features) {
    return [&params, features](const Triplet& t) -> std::optional<double> {
        if (!params.has_problem(t.problem_id) || !params.has_target(t.target)) return std::nullopt;
        return score_triplet(params, t, features);
    };
}

ProblemTable per_problem_report(const EvalReport& report) {
    std::map<std::string, std::array<std::vector<double>, 3>> ranks;
    for (const auto& r : report.ranked) ranks[r.problem_id][index_of(r.relation)].push_back(r.rank);
    ProblemTable table;
    for (const auto& [id, kinds] : ranks) {
        auto& row = table[id];
        for (std::size_t k = 0; k < 3; ++k) {
            if (!kinds[k].empty()) row[k] = metrics_from_ranks(kinds[k]).hits5;
        }
    }
    return table;
}

std::vector<FrequencyBin> frequency_bin_report(const EvalReport& report,
                                               const std::function<std::size_t(const Code&)>& count,
                                               std::size_t n_bins) {
    if (n_bins == 0) throw Error("need at least one bin");
    std::vector<FrequencyBin> bins;
    if (report.ranked.empty()) return bins;
    std::vector<double> logs;
    logs.reserve(report.ranked.size());
    for (const auto& r : report.ranked) logs.push_back(std::log(static_cast<double>(std::max<std::size_t>(1, count(r.target)))));
    const auto [lo_it, hi_it] = std::minmax_element(logs.begin(), logs.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi == lo) n_bins = 1;
    const double width = n_bins == 1 ? 0.0 : (hi - lo) / static_cast<double>(n_bins);
    std::vector<std::vector<double>> ranks(n_bins);
    for (std::size_t i = 0; i < logs.size(); ++i) {
        std::size_t b = 0;
        if (width > 0.0) {
            b = static_cast<std::size_t>(std::floor((logs[i] - lo) / width));
            b = std::min(b, n_bins - 1);
        }
        ranks[b].push_back(report.ranked[i].rank);
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
        FrequencyBin bin;
        bin.log_lo = lo + width * static_cast<double>(b);
        bin.log_hi = b + 1 == n_bins ? hi : lo + width * static_cast<double>(b + 1);
        bin.metrics = metrics_from_ranks(ranks[b]);
        bins.push_back(bin);
    }
    return bins;
}

std::vector<Neighbor> nearest_problems(const ModelParams& params, const std::string& problem_id, std::size_t k) {
    const auto query = params.problem(problem_id);
    std::vector<Neighbor> out;
    for (const auto& [id, _] : params.problem_index()) {
        if (id == problem_id) continue;
        const Vector a(query.begin(), query.end());
        const auto row = params.problem(id);
        out.push_back({id, cosine(a, Vector(row.begin(), row.end()))});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Neighbor& x, const Neighbor& y) { return x.similarity > y.similarity; });
    if (out.size() > k) out.resize(k);
    return out;
}

double cohen_kappa(std::span<const int> labels_a, std::span<const int> labels_b) {
    if (labels_a.size() != labels_b.size()) throw Error("kappa: label sequences differ in length");
    if (labels_a.empty()) throw Error("kappa: empty label sequences");
    double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        const int a = labels_a[i];
        const int b = labels_b[i];
        if ((a != 0 && a != 1) || (b != 0 && b != 1)) throw Error("kappa: labels must be 0 or 1");
        if (a == 1 && b == 1) ++n11;
        else if (a == 1) ++n10;
        else if (b == 1) ++n01;
        else ++n00;
    }
    const double n = static_cast<double>(labels_a.size());
    const double p_o = (n11 + n00) / n;
    const double p_e = ((n11 + n10) / n) * ((n11 + n01) / n) + ((n00 + n01) / n) * ((n00 + n10) / n);
    if (p_e == 1.0) return 1.0;
    return (p_o - p_e) / (1.0 - p_e);
}

namespace {

json metrics_json(const Metrics& m) {
    return {{"count", m.count}, {"mr", m.mr}, {"mrr", m.mrr}, {"hits1", m.hits1}, {"hits5", m.hits5}};
}

std::string metrics_row(const std::string& name, const Metrics& m) {
    return name + "," + format_double(m.mr) + "," + format_double(m.mrr) + "," + format_double(m.hits1) + "," +
           format_double(m.hits5) + "," + std::to_string(m.count) + "\n";
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    json j;
    j["schema_version"] = 1;
    j["overall"] = metrics_json(report.overall);
    json kinds = json::object();
    for (auto kind : kAllRelations) kinds[std::string(to_string(kind))] = metrics_json(report.per_kind[index_of(kind)]);
    j["per_kind"] = std::move(kinds);
    j["excluded_no_negatives"] = report.excluded_no_negatives;
    j["skipped_unsupported"] = report.skipped_unsupported;
    json ranked = json::array();
    for (const auto& r : report.ranked) {
        ranked.push_back({{"triplet", r.triplet_index},
                          {"problem", r.problem_id},
                          {"relation", std::string(to_string(r.relation))},
                          {"target", detail::code_to_json(r.target)},
                          {"rank", r.rank},
                          {"negatives", r.n_negatives}});
    }
    j["ranked"] = std::move(ranked);
    return j.dump(1) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
    std::string out = "kind,mr,mrr,hits1,hits5,n\n";
    for (auto kind : kAllRelations) out += metrics_row(std::string(to_string(kind)), report.per_kind[index_of(kind)]);
    out += metrics_row("OVERALL", report.overall);
    return out;
}

std::string problem_table_to_csv(const ProblemTable& table) {
    std::string out = "problem";
    for (auto kind : kAllRelations) out += "," + std::string(to_string(kind));
    out += "\n";
    for (const auto& [id, row] : table) {
        out += id;
        for (const auto& cell : row) out += "," + (cell ? format_double(*cell) : std::string{});
        out += "\n";
    }
    return out;
}

std::string frequency_bins_to_csv(const std::vector<FrequencyBin>& bins) {
    std::string out = "bin,log_lo,log_hi,n,mr,mrr,hits1,hits5\n";
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const auto& m = bins[b].metrics;
        out += std::to_string(b) + "," + format_double(bins[b].log_lo) + "," + format_double(bins[b].log_hi) + "," +
               std::to_string(m.count) + "," + format_double(m.mr) + "," + format_double(m.mrr) + "," +
               format_double(m.hits1) + "," + format_double(m.hits5) + "\n";
    }
    return out;
}

}  // namespace pomr
