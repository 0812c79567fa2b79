#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pomr/kb.hpp"
#include "pomr/types.hpp"

namespace pomr {

enum class Setting { INPATIENT, OUTPATIENT, ED };

std::string_view to_string(Setting setting);
std::optional<Setting> parse_setting(std::string_view text);

struct Order {
    RelationKind kind = RelationKind::MEDICATION;
    Code code;
    std::optional<Code> linked_diagnosis;
};

struct EncounterRecord {
    std::string patient_id;
    std::string encounter_id;
    std::string date;  // YYYY-MM-DD
    int day = 0;       // days since 1970-01-01, derived from date
    std::string facility_id;
    Setting setting = Setting::OUTPATIENT;
    std::set<Code> diagnoses;
    std::vector<Order> orders;
    std::optional<std::string> provider_specialty;
};

/// Days since the epoch for a YYYY-MM-DD string, or nullopt.
std::optional<int> parse_day(std::string_view date);
/// YYYY-MM-DD for a day count.
std::string format_day(int day);

struct IngestOptions {
    /// An order's linked diagnosis must also be on its encounter. When false a
    /// violation is recorded as a warning instead of rejected.
    bool strict_explicit_links = true;
};

/// Read-only, indexed encounter log.
class EncounterStore {
public:
    EncounterStore() = default;

    /// Validates and indexes. Throws Error on duplicate encounter ids or a
    /// code used under two kinds.
    static EncounterStore from_records(std::vector<EncounterRecord> records,
                                       const IngestOptions& options = {});

    const std::vector<EncounterRecord>& encounters() const { return encounters_; }
    bool empty() const { return encounters_.empty(); }

    /// Sorted patient ids.
    const std::vector<std::string>& patients() const { return patients_; }
    /// Encounter indices of one patient in chronological order.
    std::span<const std::size_t> timeline(std::size_t patient_index) const {
        return timelines_[patient_index];
    }

    std::optional<CodeKind> kind_of(const Code& code) const;
    const std::map<Code, CodeKind>& code_kinds() const { return kinds_; }

    /// Total occurrence count: one per diagnosis listing, one per order.
    std::size_t occurrences(const Code& code) const;
    const std::map<Code, std::size_t>& occurrence_counts() const { return counts_; }

    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    std::vector<EncounterRecord> encounters_;
    std::vector<std::string> patients_;
    std::vector<std::vector<std::size_t>> timelines_;
    std::map<Code, CodeKind> kinds_;
    std::map<Code, std::size_t> counts_;
    std::vector<std::string> warnings_;
};

EncounterRecord encounter_from_json_line(const std::string& line, const std::string& source,
                                         std::size_t line_no);
std::string encounter_to_json_line(const EncounterRecord& record);

EncounterStore parse_encounters(const std::string& text, const std::string& source = "<encounters>",
                                const IngestOptions& options = {});
EncounterStore ingest(const std::filesystem::path& path, const IngestOptions& options = {});

/// Codes per relation kind whose occurrence count reaches min_count, plus the
/// diagnosis codes meeting the same threshold.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::array<std::set<Code>, 3> targets, std::set<Code> diagnoses,
               std::map<Code, std::size_t> frequencies, std::size_t min_count);

    const std::set<Code>& codes(RelationKind kind) const { return targets_[index_of(kind)]; }
    const std::set<Code>& diagnoses() const { return diagnoses_; }
    std::size_t frequency(const Code& code) const;
    std::size_t min_count() const { return min_count_; }
    std::optional<CodeKind> kind_of(const Code& code) const;
    bool contains(const Code& code) const { return kind_of(code).has_value(); }

    KindLookup lookup() const {
        return [this](const Code& c) { return kind_of(c); };
    }

private:
    std::array<std::set<Code>, 3> targets_;
    std::set<Code> diagnoses_;
    std::map<Code, std::size_t> frequencies_;
    std::size_t min_count_ = 1;
};

Vocabulary build_vocabulary(const EncounterStore& store, std::size_t min_count = 5);

std::string vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const std::string& text);

enum class CoocDefinition {
    EXPLICIT = 0,
    SAME_ENCOUNTER = 1,
    TWO_WEEKS_SAME_FACILITY = 2,
    TWO_WEEKS_ANY_FACILITY = 3
};

inline constexpr std::array<CoocDefinition, 4> kAllCoocDefinitions{
    CoocDefinition::EXPLICIT, CoocDefinition::SAME_ENCOUNTER,
    CoocDefinition::TWO_WEEKS_SAME_FACILITY, CoocDefinition::TWO_WEEKS_ANY_FACILITY};

std::string_view to_string(CoocDefinition def);

/// Maximum |day difference| counted as "within two weeks".
inline constexpr int kTwoWeeksDays = 14;

using PairKey = std::pair<std::string, Code>;

/// Patient-level co-occurrence counts for every (problem, order code) pair.
class CooccurrenceTable {
public:
    /// Patients for which problem and target co-occur under `def`.
    std::size_t numerator(const std::string& problem_id, const Code& target, CoocDefinition def) const;
    std::size_t target_patients(const Code& target) const;
    std::size_t problem_patients(const std::string& problem_id) const;

    /// numerator / target_patients, or 0 when the target has no patients.
    double value(const std::string& problem_id, const Code& target, CoocDefinition def) const;

    const std::map<Code, std::size_t>& targets() const { return target_patients_; }
    const std::map<std::string, std::size_t>& problems() const { return problem_patients_; }

private:
    friend CooccurrenceTable compute_cooccurrence(const EncounterStore&, const std::vector<Problem>&,
                                                  unsigned);

    std::map<PairKey, std::array<std::size_t, 4>> numerators_;
    std::map<Code, std::size_t> target_patients_;
    std::map<std::string, std::size_t> problem_patients_;
};

CooccurrenceTable compute_cooccurrence(const EncounterStore& store, const std::vector<Problem>& problems,
                                       unsigned threads = 1);

/// Normalized values for every (problem, target) pair whose target has at
/// least one patient.
std::map<PairKey, double> cooccurrence(const EncounterStore& store, const std::vector<Problem>& problems,
                                       CoocDefinition def);

/// Specialty names, most encounters first (ties by name).
class SpecialtyVocabulary {
public:
    SpecialtyVocabulary() = default;
    explicit SpecialtyVocabulary(std::vector<std::string> names);

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    std::optional<std::size_t> index(const std::string& name) const;

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
};

inline constexpr std::size_t kDefaultSpecialtyCount = 24;

SpecialtyVocabulary build_specialty_vocabulary(const EncounterStore& store,
                                               std::size_t max_size = kDefaultSpecialtyCount);

/// Encounters containing the code (as diagnosis or order), counted per listed
/// in-vocabulary specialty.
std::vector<double> specialty_vector(const EncounterStore& store, const Code& code,
                                     const SpecialtyVocabulary& vocab);
/// Same, for encounters containing any definition code of the problem.
std::vector<double> specialty_vector(const EncounterStore& store, const Problem& problem,
                                     const SpecialtyVocabulary& vocab);

struct ImportanceOptions {
    /// Only encounters with at least one diagnosis code are counted.
    bool require_diagnosis = true;
};

struct ImportanceScore {
    double value = 0.0;
    /// The problem had no qualifying encounters; value is 0.
    bool degenerate = false;
};

/// log p(target | problem) - log p(target | no problem) over encounters,
/// each conditional estimated as (count + 1) / (n + 2).
ImportanceScore importance_score(const EncounterStore& store, const Problem& problem, const Code& target,
                                 const ImportanceOptions& options = {});

/// Scores for every order code in the store in one pass.
std::map<Code, ImportanceScore> importance_scores(const EncounterStore& store, const Problem& problem,
                                                  const ImportanceOptions& options = {});

struct Candidate {
    Code code;
    double score = 0.0;
};

using CodeScorer = std::function<double(const Code&)>;

/// Eligible codes minus excluded ones, by descending score with ties broken
/// by (system, id); at most top_n.
std::vector<Candidate> candidate_list(const CodeScorer& scorer, const std::set<Code>& eligible,
                                      const std::set<Code>& excluded, std::size_t top_n);

inline constexpr std::size_t kRoundOneCandidates = 50;
inline constexpr std::size_t kRoundTwoCandidates = 20;

/// Targets of (problem, relation) already present in the KB.
std::set<Code> annotated_targets(const KnowledgeBase& kb, const std::string& problem_id,
                                 RelationKind relation);

}  // namespace pomr
