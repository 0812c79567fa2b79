#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pomr/embeddings.hpp"
#include "pomr/features.hpp"
#include "pomr/kb.hpp"

namespace pomr {

/// Trainable parameter groups. Each is stored as one flat array.
enum class ParamGroup { PROBLEMS = 0, TARGETS = 1, RELATIONS = 2, SPEC_RELATIONS = 3, HEAD = 4 };
inline constexpr std::size_t kNumParamGroups = 5;
inline constexpr std::array<ParamGroup, kNumParamGroups> kAllParamGroups{
    ParamGroup::PROBLEMS, ParamGroup::TARGETS, ParamGroup::RELATIONS, ParamGroup::SPEC_RELATIONS,
    ParamGroup::HEAD};

std::string_view to_string(ParamGroup group);

/// Length of the linear head: g_EMB, g_SPEC, then the pair features.
inline constexpr std::size_t kHeadSize = 2 + kNumPairFeatures;

/// Same layout as ModelParams' groups.
using GroupArrays = std::array<std::vector<double>, kNumParamGroups>;

/// Problem and target embedding tables, one relation vector and one specialty
/// relation vector per RelationKind, and the linear head.
class ModelParams {
public:
    ModelParams() = default;

    /// Relation and specialty-relation vectors start all-ones and the head
    /// starts at (1, 0, ..., 0). Embedding rows start at zero, in sorted key order.
    ModelParams(std::size_t dim, std::size_t spec_dim, const std::vector<std::string>& problem_ids,
                const std::vector<Code>& targets);

    std::size_t dim() const { return dim_; }
    std::size_t spec_dim() const { return spec_dim_; }

    bool has_problem(const std::string& id) const { return problem_index_.contains(id); }
    bool has_target(const Code& code) const { return target_index_.contains(code); }

    std::span<const double> problem(const std::string& id) const;
    std::span<double> problem(const std::string& id);
    std::span<const double> target(const Code& code) const;
    std::span<double> target(const Code& code);
    std::span<const double> relation(RelationKind kind) const;
    std::span<double> relation(RelationKind kind);
    std::span<const double> spec_relation(RelationKind kind) const;
    std::span<double> spec_relation(RelationKind kind);
    std::span<const double> head() const { return groups_[4]; }
    std::span<double> head() { return groups_[4]; }

    /// Row offset of a problem / target inside its group array.
    std::size_t problem_offset(const std::string& id) const;
    std::size_t target_offset(const Code& code) const;

    const std::map<std::string, std::size_t>& problem_index() const { return problem_index_; }
    const std::map<Code, std::size_t>& target_index() const { return target_index_; }

    const GroupArrays& groups() const { return groups_; }
    std::vector<double>& group(ParamGroup g) { return groups_[static_cast<std::size_t>(g)]; }
    const std::vector<double>& group(ParamGroup g) const { return groups_[static_cast<std::size_t>(g)]; }

    bool frozen(ParamGroup g) const { return frozen_[static_cast<std::size_t>(g)]; }
    void set_frozen(ParamGroup g, bool value) { frozen_[static_cast<std::size_t>(g)] = value; }
    const std::array<bool, kNumParamGroups>& freeze_flags() const { return frozen_; }

    /// Zero-filled arrays shaped like the groups.
    GroupArrays zeros_like() const;

    bool operator==(const ModelParams&) const = default;

private:
    std::size_t dim_ = 0;
    std::size_t spec_dim_ = 0;
    std::map<std::string, std::size_t> problem_index_;
    std::map<Code, std::size_t> target_index_;
    GroupArrays groups_;
    std::array<bool, kNumParamGroups> frozen_{};
};

/// Σ e_s[i] e_r[i] e_t[i]. Throws when a problem or target has no row.
double score_emb(const ModelParams& params, const std::string& problem_id, RelationKind relation,
                 const Code& target);

/// Σ v_s[i] v_r[i] v_t[i] with v_r the relation's specialty parameters.
double score_spec(const ModelParams& params, std::span<const double> spec_problem, RelationKind relation,
                  std::span<const double> spec_target);

/// Everything score_full reads besides the parameters.
struct ScoreInputs {
    std::vector<double> features;  // f(s, t); length kNumPairFeatures
    std::vector<double> spec_problem;
    std::vector<double> spec_target;
};

ScoreInputs score_inputs(const FeatureTable& table, const std::string& problem_id, const Code& target);

/// θᵀ[g_EMB ⊕ g_SPEC ⊕ f].
double score_full(const ModelParams& params, const std::string& problem_id, RelationKind relation,
                  const Code& target, const ScoreInputs& inputs);

/// score_full when features are given, otherwise score_emb.
double score_triplet(const ModelParams& params, const Triplet& t, const FeatureTable* features);

/// max(0, margin - pos + neg).
double margin_loss(double pos_score, double neg_score, double margin);

enum class NegativeStrategy { ANNOTATED, RANDOM_VOCAB };
enum class Ablation { FULL, FROZEN, PROBLEM_ONLY, RELATION_ONLY, RELATION_PLUS_TARGET };

std::string_view to_string(NegativeStrategy s);
std::string_view to_string(Ablation a);
std::optional<NegativeStrategy> parse_negative_strategy(std::string_view text);
std::optional<Ablation> parse_ablation(std::string_view text);

/// Frozen flags per group for an ablation regime.
std::array<bool, kNumParamGroups> freeze_flags_for(Ablation ablation, bool use_features);

struct TrainConfig {
    double margin = 1.0;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;
    NegativeStrategy negatives = NegativeStrategy::ANNOTATED;
    std::size_t negatives_per_positive = 4;  // RANDOM_VOCAB only
    std::uint64_t seed = 1;
    Ablation ablation = Ablation::FULL;
    bool use_features = true;

    /// Throws on an invalid combination.
    void validate() const;
};

/// Flat "key = value" text; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
std::string train_config_to_text(const TrainConfig& config);

struct TrainingPair {
    Triplet positive;
    Triplet negative;
};

struct LossAndGradients {
    double loss = 0.0;  // mean hinge over the batch
    GroupArrays grads;
};

/// Mean hinge loss of the batch under the current parameters.
double batch_loss(const ModelParams& params, std::span<const TrainingPair> batch, const FeatureTable* features,
                  double margin);

/// Exact gradients of batch_loss. Frozen groups get zero. A hinge at exactly
/// zero counts as inactive.
LossAndGradients gradients(const ModelParams& params, std::span<const TrainingPair> batch,
                           const FeatureTable* features, double margin);

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    GroupArrays m;
    GroupArrays v;
    std::uint64_t step = 0;

    static AdamState zeros_for(const ModelParams& params);
};

/// Bias-corrected Adam update of every unfrozen group.
void adam_step(ModelParams& params, const GroupArrays& grads, AdamState& state, const AdamConfig& config);

/// Produces negatives for training positives.
class NegativeSampler {
public:
    /// `train` indexes into kb.triplets(). `vocabulary` is required for RANDOM_VOCAB.
    NegativeSampler(NegativeStrategy strategy, const KnowledgeBase& kb, std::span<const std::size_t> train,
                    const Vocabulary* vocabulary, std::size_t negatives_per_positive, std::uint64_t seed);

    /// ANNOTATED: one annotated negative of the same (problem, relation),
    /// round-robin over the shuffled training negatives. RANDOM_VOCAB: n codes
    /// drawn uniformly from the relation's vocabulary, never a known positive.
    /// Empty when nothing is available; see skipped().
    std::vector<Triplet> sample(const Triplet& positive);

    std::size_t skipped() const { return skipped_; }

private:
    using PairId = std::pair<std::string, RelationKind>;

    NegativeStrategy strategy_;
    const Vocabulary* vocabulary_;
    std::size_t per_positive_;
    std::mt19937_64 rng_;
    std::map<PairId, std::vector<Triplet>> annotated_;
    std::map<PairId, std::size_t> cursor_;
    std::map<PairId, std::set<Code>> positives_;
    std::array<std::vector<Code>, 3> vocab_codes_;
    std::size_t skipped_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double val_mr = 0.0;
    double val_mrr = 0.0;
};

struct TrainResult {
    ModelParams params;  // best snapshot
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    std::size_t skipped_positives = 0;
};

/// Trains from `initial` on split.train with early stopping on validation
/// MR. FROZEN returns `initial` unchanged with a single evaluation record.
TrainResult train(const KnowledgeBase& kb, const Split& split, const ModelParams& initial,
                  const FeatureTable* features, const Vocabulary* vocabulary, const TrainConfig& config);

enum class InitSource { RANDOM, EXTERNAL, SITE_SPECIFIC, EXTERNAL_KNN };

std::string_view to_string(InitSource s);
std::optional<InitSource> parse_init_source(std::string_view text);

struct InitConfig {
    InitSource source = InitSource::RANDOM;
    std::size_t dim = 300;  // used when no table fixes it
    std::size_t knn_k = kDefaultKnn;
    std::uint64_t seed = 1;
};

struct InitReport {
    std::size_t targets_from_table = 0;
    std::size_t targets_from_knn = 0;
    std::size_t targets_random = 0;
    std::size_t problems_random = 0;
};

/// Builds parameters for every KB problem and every vocabulary or KB target.
/// EXTERNAL uses frequency-weighted problem averages; SITE_SPECIFIC uses
/// uniform ones; EXTERNAL_KNN fills external gaps by k-NN transfer from the
/// internal table. Anything without a vector is randomly initialized.
ModelParams init_model(const KnowledgeBase& kb, const Vocabulary& vocab, std::size_t spec_dim,
                       const EmbeddingTable* external, const EmbeddingTable* internal, const InitConfig& config,
                       InitReport* report = nullptr);

/// JSON checkpoint with parameters, config and history. Doubles round-trip exactly.
std::string checkpoint_to_json(const ModelParams& params, const TrainConfig* config,
                               const std::vector<EpochRecord>* history);
ModelParams checkpoint_from_json(const std::string& text, TrainConfig* config = nullptr,
                                 std::vector<EpochRecord>* history = nullptr);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const TrainConfig* config,
                     const std::vector<EpochRecord>* history);
ModelParams load_checkpoint(const std::filesystem::path& path, TrainConfig* config = nullptr,
                            std::vector<EpochRecord>* history = nullptr);

}  // namespace pomr
