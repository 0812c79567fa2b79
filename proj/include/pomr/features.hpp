#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pomr/encounters.hpp"

namespace pomr {

/// Number of entries in f(problem, target): four co-occurrence rates plus
/// log-scaled problem and target patient counts.
inline constexpr std::size_t kNumPairFeatures = 6;

struct PairFeatures {
    std::array<double, 4> cooc{};  // indexed by CoocDefinition
    std::size_t problem_patients = 0;
    std::size_t target_patients = 0;

    double log_problem_patients() const;
    double log_target_patients() const;

    /// The model-facing vector, length kNumPairFeatures.
    std::array<double, kNumPairFeatures> values() const;
};

/// Everything the scorer reads from the encounter log: pair features plus
/// raw specialty counts per problem and per target code.
class FeatureTable {
public:
    FeatureTable() = default;

    PairFeatures pair(const std::string& problem_id, const Code& target) const;

    /// L1-normalized then log(1 + x) scaled; zero vector when unknown.
    std::vector<double> problem_specialty(const std::string& problem_id) const;
    std::vector<double> target_specialty(const Code& target) const;

    const std::vector<double>& raw_problem_specialty(const std::string& problem_id) const;
    const std::vector<double>& raw_target_specialty(const Code& target) const;

    const SpecialtyVocabulary& specialties() const { return specialties_; }
    std::size_t specialty_dim() const { return specialties_.size(); }

    const std::map<PairKey, PairFeatures>& pairs() const { return pairs_; }

    void set_pair(const std::string& problem_id, const Code& target, const PairFeatures& f);
    /// Resets all specialty vectors.
    void set_specialties(SpecialtyVocabulary vocab);
    void set_problem_specialty(const std::string& problem_id, std::vector<double> counts);
    void set_target_specialty(const Code& target, std::vector<double> counts);

    const std::map<std::string, std::vector<double>>& problem_specialties() const { return problem_spec_; }
    const std::map<Code, std::vector<double>>& target_specialties() const { return target_spec_; }

private:
    std::map<PairKey, PairFeatures> pairs_;
    SpecialtyVocabulary specialties_;
    std::map<std::string, std::vector<double>> problem_spec_;
    std::map<Code, std::vector<double>> target_spec_;
    std::vector<double> zeros_;
};

/// L1 normalization followed by log(1 + x), elementwise.
std::vector<double> scale_specialty(const std::vector<double>& counts);

/// Pair features for one (problem, target) from a precomputed table.
PairFeatures pair_features(const CooccurrenceTable& cooc, const std::string& problem_id, const Code& target);

/// Computes pair features for every problem against every order code in the
/// store, and specialty counts for every problem and order code.
FeatureTable build_features(const EncounterStore& store, const std::vector<Problem>& problems,
                            std::size_t n_specialties = kDefaultSpecialtyCount, unsigned threads = 1);

/// Writes pair_features.csv and specialty_vectors.csv into `dir`.
void save_features(const FeatureTable& table, const std::filesystem::path& dir);
FeatureTable load_features(const std::filesystem::path& dir);

}  // namespace pomr
