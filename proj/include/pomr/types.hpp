#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pomr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an input file does not parse or violates a file-level
/// invariant. `line` is 1-based; 0 means the error is not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what);

    const std::string& source() const { return source_; }
    std::size_t line() const { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

enum class CodeSystem { RXNORM, LOINC, CPT, ICD9, ICD10, SNOMED, INTERNAL };

std::string_view to_string(CodeSystem system);
std::optional<CodeSystem> parse_code_system(std::string_view text);

/// Diagnosis systems are the ones allowed in problem definitions.
bool is_diagnosis_system(CodeSystem system);

/// A coded concept. Ids are trimmed and uppercased on construction so
/// equality is exact string equality.
class Code {
public:
    Code() = default;
    Code(CodeSystem system, std::string_view id);

    CodeSystem system() const { return system_; }
    const std::string& id() const { return id_; }

    /// "SYSTEM:ID", the token used in embedding files.
    std::string token() const;
    static std::optional<Code> from_token(std::string_view token);

    friend bool operator==(const Code&, const Code&) = default;
    /// Lexicographic on (system name, id).
    friend std::strong_ordering operator<=>(const Code& a, const Code& b) {
        if (a.system_ != b.system_) return to_string(a.system_).compare(to_string(b.system_)) <=> 0;
        return a.id_.compare(b.id_) <=> 0;
    }

private:
    CodeSystem system_ = CodeSystem::INTERNAL;
    std::string id_;
};

enum class RelationKind { MEDICATION = 0, PROCEDURE = 1, LAB = 2 };

inline constexpr std::array<RelationKind, 3> kAllRelations{
    RelationKind::MEDICATION, RelationKind::PROCEDURE, RelationKind::LAB};

std::string_view to_string(RelationKind kind);
std::optional<RelationKind> parse_relation(std::string_view text);
inline std::size_t index_of(RelationKind kind) { return static_cast<std::size_t>(kind); }

/// What a code is used as in the encounter log. Diagnoses are not a
/// relation target but still need a kind for conflict detection.
enum class CodeKind { DIAGNOSIS, MEDICATION, PROCEDURE, LAB };

std::string_view to_string(CodeKind kind);
CodeKind code_kind_of(RelationKind kind);

enum class Label { NEGATIVE = 0, POSITIVE = 1 };

struct Problem {
    std::string problem_id;
    std::string name;
    std::set<Code> definition;
};

struct Triplet {
    std::string problem_id;
    RelationKind relation = RelationKind::MEDICATION;
    Code target;
    Label label = Label::NEGATIVE;
    int round = 1;

    bool positive() const { return label == Label::POSITIVE; }
};

/// Identity of a triplet inside a knowledge base.
struct TripletKey {
    std::string problem_id;
    RelationKind relation = RelationKind::MEDICATION;
    Code target;

    friend bool operator==(const TripletKey&, const TripletKey&) = default;
    friend auto operator<=>(const TripletKey&, const TripletKey&) = default;
};

inline TripletKey key_of(const Triplet& t) { return {t.problem_id, t.relation, t.target}; }

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace pomr
