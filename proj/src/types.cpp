#include "pomr/types.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace pomr {

ParseError::ParseError(std::string source, std::size_t line, const std::string& what)
    : Error(source + (line > 0 ? ":" + std::to_string(line) : std::string{}) + ": " + what),
      source_(std::move(source)),
      line_(line) {}

namespace {

std::string upper_trimmed(std::string_view text) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

constexpr std::array<std::string_view, 7> kSystemNames{"RXNORM", "LOINC", "CPT",     "ICD9",
                                                       "ICD10",  "SNOMED", "INTERNAL"};
constexpr std::array<std::string_view, 3> kRelationNames{"MEDICATION", "PROCEDURE", "LAB"};

}  // namespace

std::string_view to_string(CodeSystem system) {
    return kSystemNames[static_cast<std::size_t>(system)];
}

std::optional<CodeSystem> parse_code_system(std::string_view text) {
    const auto norm = upper_trimmed(text);
    for (std::size_t i = 0; i < kSystemNames.size(); ++i) {
        if (kSystemNames[i] == norm) return static_cast<CodeSystem>(i);
    }
    return std::nullopt;
}

bool is_diagnosis_system(CodeSystem system) {
    switch (system) {
        case CodeSystem::ICD9:
        case CodeSystem::ICD10:
        case CodeSystem::SNOMED:
        case CodeSystem::INTERNAL:
            return true;
        default:
            return false;
    }
}

Code::Code(CodeSystem system, std::string_view id) : system_(system), id_(upper_trimmed(id)) {
    if (id_.empty()) throw Error("code id must be nonempty");
}

std::string Code::token() const {
    std::string out(to_string(system_));
    out += ':';
    out += id_;
    return out;
}

std::optional<Code> Code::from_token(std::string_view token) {
    const auto colon = token.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    const auto system = parse_code_system(token.substr(0, colon));
    const auto id = upper_trimmed(token.substr(colon + 1));
    if (!system || id.empty()) return std::nullopt;
    return Code(*system, id);
}

std::string_view to_string(RelationKind kind) { return kRelationNames[index_of(kind)]; }

std::optional<RelationKind> parse_relation(std::string_view text) {
    const auto norm = upper_trimmed(text);
    for (auto kind : kAllRelations) {
        if (to_string(kind) == norm) return kind;
    }
    return std::nullopt;
}

std::string_view to_string(CodeKind kind) {
    switch (kind) {
        case CodeKind::DIAGNOSIS: return "DIAGNOSIS";
        case CodeKind::MEDICATION: return "MEDICATION";
        case CodeKind::PROCEDURE: return "PROCEDURE";
        case CodeKind::LAB: return "LAB";
    }
    return "?";
}

CodeKind code_kind_of(RelationKind kind) {
    switch (kind) {
        case RelationKind::MEDICATION: return CodeKind::MEDICATION;
        case RelationKind::PROCEDURE: return CodeKind::PROCEDURE;
        case RelationKind::LAB: return CodeKind::LAB;
    }
    return CodeKind::MEDICATION;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

}  // namespace pomr
