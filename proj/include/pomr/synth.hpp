#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pomr/baseline.hpp"
#include "pomr/encounters.hpp"
#include "pomr/kb.hpp"

namespace pomr {

/// Parameters of a planted-structure dataset.
struct PlantSpec {
    std::size_t n_problems = 20;
    std::size_t n_targets_per_kind = 60;
    std::size_t n_patients = 500;
    /// Targets each problem owns per kind.
    std::size_t block_size = 3;
    /// Chance a block target is ordered in an encounter of its problem.
    double p_in = 0.9;
    /// Chance any other target is ordered in an encounter.
    double p_out = 0.05;
    /// Fraction of planted orders carrying an explicit diagnosis link.
    double link_fraction = 0.5;
    std::size_t min_encounters = 2;
    std::size_t max_encounters = 6;
    /// Chance an encounter carries one of the patient's problems.
    double p_problem_encounter = 0.7;
    /// Chance a patient has a second problem.
    double p_second_problem = 0.3;
    std::size_t n_facilities = 3;
    std::size_t n_noise_diagnoses = 10;
    /// Annotated negatives per (problem, kind), drawn from other blocks.
    std::size_t negatives_per_pair = 15;
    std::uint64_t seed = 1;

    /// Throws Error on an inconsistent spec.
    void validate() const;
};

/// (problem, kind) -> planted targets.
using GroundTruth = std::map<std::pair<std::string, RelationKind>, std::set<Code>>;

struct SynthData {
    std::vector<EncounterRecord> encounters;
    KnowledgeBase kb;
    GroundTruth truth;
    /// Ontology maps consistent with the plant, for the rule baseline.
    OntologyMaps maps;
};

SynthData generate(const PlantSpec& spec);

/// Target code j of a kind: RXNORM, CPT or LOINC ids.
Code synth_target(RelationKind kind, std::size_t j);

std::string truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const std::string& text);

/// Writes encounters.jsonl, kb.json, truth.json and ontology/ into `dir`.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

}  // namespace pomr
