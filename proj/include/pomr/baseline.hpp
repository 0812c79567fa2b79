#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pomr/evaluator.hpp"
#include "pomr/kb.hpp"

namespace pomr {

/// Diagnosis chapter range, e.g. ICD10 I00..I99 -> circulatory.
struct ChapterRange {
    CodeSystem system = CodeSystem::ICD10;
    std::string lo;
    std::string hi;
    std::string discipline;
};

/// Precomposed terminology maps. Unknown keys mean "not relevant".
struct OntologyMaps {
    std::map<Code, std::set<Code>> med_to_diagnoses;
    std::map<Code, std::string> proc_parent;
    std::map<std::string, std::string> parent_discipline;
    std::vector<ChapterRange> chapters;
};

/// Reads med_to_diagnoses.csv, proc_parent.csv, parent_discipline.csv and
/// chapter_discipline.csv from `dir`. Each file needs its header row.
OntologyMaps load_ontology_maps(const std::filesystem::path& dir);
void save_ontology_maps(const OntologyMaps& maps, const std::filesystem::path& dir);

/// Disciplines whose chapter range holds the code. Dots are ignored and the
/// code is cut to the length of the range bounds before comparing.
std::set<std::string> chapter_disciplines(const OntologyMaps& maps, const Code& diagnosis);

bool med_relevant(const OntologyMaps& maps, const Code& med, const Problem& problem);
bool proc_relevant(const OntologyMaps& maps, const Code& proc, const Problem& problem);

/// 1/0 relevance for medications and procedures; nullopt for labs.
TripletScorer baseline_scorer(const OntologyMaps& maps, const KnowledgeBase& kb);

struct BaselineCoverage {
    std::size_t medications = 0;
    /// Fraction of medication targets with at least one mapped diagnosis.
    double mapped_fraction = 0.0;
    /// Fraction of medication targets relevant to at least one problem.
    double matching_fraction = 0.0;
};

/// Coverage over the distinct medication targets in `part`.
BaselineCoverage baseline_coverage(const OntologyMaps& maps, const KnowledgeBase& kb,
                                   std::span<const std::size_t> part);

}  // namespace pomr
