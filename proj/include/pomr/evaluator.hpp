#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pomr/encounters.hpp"
#include "pomr/kb.hpp"
#include "pomr/model.hpp"

namespace pomr {

enum class TiePolicy {
    /// Ties count against the positive: rank = 1 + #{neg >= pos}.
    STRICT,
    /// Every member of a tie group gets the group's median position.
    MEDIAN
};

/// Rank of a positive among negatives. Throws on a non-finite score.
double rank_one(double pos_score, std::span<const double> neg_scores, TiePolicy policy);

struct Metrics {
    std::size_t count = 0;
    double mr = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits5 = 0.0;
};

/// Aggregates ranks; all zeros (count 0) for an empty input.
Metrics metrics_from_ranks(std::span<const double> ranks);

struct RankedPositive {
    std::size_t triplet_index = 0;
    std::string problem_id;
    RelationKind relation = RelationKind::MEDICATION;
    Code target;
    double rank = 0.0;
    std::size_t n_negatives = 0;
};

struct EvalReport {
    std::vector<RankedPositive> ranked;
    /// Positives with no same-pair negative in the part.
    std::size_t excluded_no_negatives = 0;
    /// Triplets the scorer declined (e.g. labs for the ontology baseline).
    std::size_t skipped_unsupported = 0;
    Metrics overall;
    std::array<Metrics, 3> per_kind;
};

/// Score for a triplet, or nullopt when the scorer does not support it.
using TripletScorer = std::function<std::optional<double>(const Triplet&)>;

/// Ranks each positive in `part` against the negatives of the same
/// (problem, relation) in `part`.
EvalReport evaluate(const TripletScorer& scorer, const KnowledgeBase& kb, std::span<const std::size_t> part,
                    TiePolicy policy);

/// Scorer backed by a model; features may be null.
TripletScorer model_scorer(const ModelParams& params, const FeatureTable* features);

/// problem -> kind -> Hits@5; absent when the cell has no ranked positive.
using ProblemTable = std::map<std::string, std::array<std::optional<double>, 3>>;
ProblemTable per_problem_report(const EvalReport& report);

struct FrequencyBin {
    double log_lo = 0.0;
    double log_hi = 0.0;
    Metrics metrics;
};

/// Equal-width bins in log(count) over the ranked positives' targets. Counts
/// below 1 are treated as 1. All-equal counts give a single bin.
std::vector<FrequencyBin> frequency_bin_report(const EvalReport& report,
                                               const std::function<std::size_t(const Code&)>& count,
                                               std::size_t n_bins = 5);

struct Neighbor {
    std::string problem_id;
    double similarity = 0.0;
};

/// Other problems by cosine similarity of problem embeddings, best first.
std::vector<Neighbor> nearest_problems(const ModelParams& params, const std::string& problem_id,
                                       std::size_t k = 5);

/// Cohen's kappa on aligned binary labels.
double cohen_kappa(std::span<const int> labels_a, std::span<const int> labels_b);

std::string report_to_json(const EvalReport& report);
/// Rows per kind plus overall, columns MR, MRR, H@1, H@5, N.
std::string report_to_csv(const EvalReport& report);
std::string problem_table_to_csv(const ProblemTable& table);
std::string frequency_bins_to_csv(const std::vector<FrequencyBin>& bins);

}  // namespace pomr
