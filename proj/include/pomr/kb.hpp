#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pomr/types.hpp"

namespace pomr {

/// One expert judgment. The audit trail and the service event log are both
/// sequences of these.
struct AnnotationEvent {
    std::string annotator_id;
    Triplet triplet;
    std::string timestamp;  // ISO-8601
};

/// Problems plus annotated triplets. A value type: mutators return a new KB.
class KnowledgeBase {
public:
    KnowledgeBase() = default;

    /// Builds and validates. Throws Error on a dangling problem id, a
    /// duplicate problem id or a duplicate triplet key.
    KnowledgeBase(std::vector<Problem> problems, std::vector<Triplet> triplets);

    const std::map<std::string, Problem>& problems() const { return problems_; }
    const std::vector<Triplet>& triplets() const { return triplets_; }
    const std::vector<AnnotationEvent>& audit() const { return audit_; }

    const Problem* find_problem(const std::string& id) const;
    std::optional<std::size_t> find(const TripletKey& key) const;

    /// Sorted problem ids.
    std::vector<std::string> problem_ids() const;
    /// Problems in id order.
    std::vector<Problem> problem_list() const;

    /// Same problems and same triplets, ignoring order and audit trail.
    bool operator==(const KnowledgeBase& other) const;

private:
    friend KnowledgeBase add_annotation(const KnowledgeBase&, const Triplet&, const std::string&,
                                        const std::string&,
                                        const std::function<std::optional<CodeKind>(const Code&)>&);

    std::map<std::string, Problem> problems_;
    std::vector<Triplet> triplets_;
    std::map<TripletKey, std::size_t> index_;
    std::vector<AnnotationEvent> audit_;
};

using KindLookup = std::function<std::optional<CodeKind>(const Code&)>;

/// Inserts or replaces the triplet with the same key and records the event.
/// When `kinds` is set the target must be known to it with the kind the
/// relation requires.
KnowledgeBase add_annotation(const KnowledgeBase& kb, const Triplet& triplet,
                             const std::string& annotator_id, const std::string& timestamp,
                             const KindLookup& kinds = {});

KnowledgeBase parse_kb(const std::string& text, const std::string& source = "<kb>");
KnowledgeBase load_kb(const std::filesystem::path& path);

/// Canonical text: problems by id, triplets by (problem, relation, system, id),
/// one element per line.
std::string serialize_kb(const KnowledgeBase& kb);
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);

std::string event_to_json_line(const AnnotationEvent& event);
AnnotationEvent event_from_json_line(const std::string& line, const std::string& source = "<event>",
                                     std::size_t line_no = 0);
void append_event(const std::filesystem::path& path, const AnnotationEvent& event);
std::vector<AnnotationEvent> read_events(const std::filesystem::path& path);

/// Applies events in order on top of `base`.
KnowledgeBase replay(const KnowledgeBase& base, const std::vector<AnnotationEvent>& events,
                     const KindLookup& kinds = {});

enum class SplitMode { RANDOM_TRIPLET, HELD_OUT_PROBLEM };

/// Triplet indices into the KB the split was made from.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    SplitMode mode = SplitMode::RANDOM_TRIPLET;
    std::uint64_t seed = 0;
};

struct SplitFractions {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;
};

/// Seeded shuffle, then floor(n * fraction) for validation and test with the
/// remainder going to train.
Split split_random(const KnowledgeBase& kb, SplitFractions fractions, std::uint64_t seed);

/// Whole problems go to test (first) and validation (next); train gets the rest.
Split split_by_problem(const KnowledgeBase& kb, std::size_t n_val_problems,
                       std::size_t n_test_problems, std::uint64_t seed);

std::string split_to_json(const Split& split);
Split split_from_json(const std::string& text);

}  // namespace pomr
