#include "pomr/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "json_util.hpp"
#include "rng.hpp"

namespace pomr {

using detail::json;

void PlantSpec::validate() const {
    if (n_problems == 0) throw Error("n_problems must be positive");
    if (n_patients == 0) throw Error("n_patients must be positive");
    if (block_size == 0) throw Error("block_size must be positive");
    if (block_size * n_problems > n_targets_per_kind) {
        throw Error("n_targets_per_kind must be at least block_size * n_problems");
    }
    if (!(p_in > 0.0 && p_in <= 1.0)) throw Error("p_in must be in (0, 1]");
    if (!(p_out >= 0.0 && p_out < 1.0)) throw Error("p_out must be in [0, 1)");
    if (!(p_in > p_out)) throw Error("p_in must exceed p_out");
    if (!(link_fraction >= 0.0 && link_fraction <= 1.0)) throw Error("link_fraction must be in [0, 1]");
    if (!(p_problem_encounter >= 0.0 && p_problem_encounter <= 1.0)) throw Error("p_problem_encounter must be in [0, 1]");
    if (!(p_second_problem >= 0.0 && p_second_problem <= 1.0)) throw Error("p_second_problem must be in [0, 1]");
    if (min_encounters == 0 || min_encounters > max_encounters) throw Error("need 1 <= min_encounters <= max_encounters");
    if (n_facilities == 0) throw Error("n_facilities must be positive");
    if (n_noise_diagnoses == 0) throw Error("n_noise_diagnoses must be positive");
}

Code synth_target(RelationKind kind, std::size_t j) {
    switch (kind) {
        case RelationKind::MEDICATION: return Code(CodeSystem::RXNORM, std::to_string(100000 + j));
        case RelationKind::PROCEDURE: return Code(CodeSystem::CPT, std::to_string(90000 + j));
        case RelationKind::LAB: return Code(CodeSystem::LOINC, std::to_string(20000 + j) + "-" + std::to_string(j % 10));
    }
    return {};
}

namespace {

char chapter_letter(std::size_t problem) { return static_cast<char>('A' + problem % 26); }

Code definition_code(std::size_t problem, std::size_t which) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%02zu.%zu", chapter_letter(problem), (problem / 26) % 100, which + 1);
    return Code(CodeSystem::ICD10, buf);
}

std::string problem_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%02zu", i);
    return buf;
}

std::string specialty_of(std::size_t problem) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "SPECIALTY_%02zu", problem % 8);
    return buf;
}

bool bernoulli(std::mt19937_64& rng, double p) { return detail::uniform01(rng) < p; }

}  // namespace

SynthData generate(const PlantSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    SynthData data;

    std::vector<Problem> problems;
    for (std::size_t i = 0; i < spec.n_problems; ++i) {
        problems.push_back({problem_id(i), "Problem " + std::to_string(i), {definition_code(i, 0), definition_code(i, 1)}});
    }
    // owner[kind][j]: problem owning target j, or n_problems if none.
    std::array<std::vector<std::size_t>, 3> owner;
    for (auto kind : kAllRelations) {
        auto& o = owner[index_of(kind)];
        o.assign(spec.n_targets_per_kind, spec.n_problems);
        for (std::size_t i = 0; i < spec.n_problems; ++i) {
            for (std::size_t b = 0; b < spec.block_size; ++b) {
                const std::size_t j = i * spec.block_size + b;
                o[j] = i;
                data.truth[{problems[i].problem_id, kind}].insert(synth_target(kind, j));
            }
        }
    }
    std::vector<Code> noise_dx;
    for (std::size_t j = 0; j < spec.n_noise_diagnoses; ++j) {
        noise_dx.emplace_back(CodeSystem::SNOMED, std::to_string(900000 + j));
    }

    const int base_day = *parse_day("2020-01-01");
    for (std::size_t p = 0; p < spec.n_patients; ++p) {
        char pid[16];
        std::snprintf(pid, sizeof pid, "PT%05zu", p);
        std::vector<std::size_t> own{p % spec.n_problems};
        if (spec.n_problems > 1 && bernoulli(rng, spec.p_second_problem)) {
            std::size_t other = detail::uniform_index(rng, spec.n_problems - 1);
            if (other >= own[0]) ++other;
            own.push_back(other);
        }
        const std::size_t home = detail::uniform_index(rng, spec.n_facilities);
        const std::size_t n_enc =
            spec.min_encounters + detail::uniform_index(rng, spec.max_encounters - spec.min_encounters + 1);
        int day = base_day + static_cast<int>(detail::uniform_index(rng, 365));
        for (std::size_t e = 0; e < n_enc; ++e) {
            if (e > 0) day += 1 + static_cast<int>(detail::uniform_index(rng, 60));
            EncounterRecord r;
            r.patient_id = pid;
            r.encounter_id = std::string(pid) + "-E" + std::to_string(e);
            r.date = format_day(day);
            r.day = day;
            const std::size_t fac = bernoulli(rng, 0.8) ? home : detail::uniform_index(rng, spec.n_facilities);
            r.facility_id = "F" + std::to_string(fac);
            const double u = detail::uniform01(rng);
            r.setting = u < 0.15 ? Setting::INPATIENT : (u < 0.3 ? Setting::ED : Setting::OUTPATIENT);

            std::optional<std::size_t> problem;
            if (bernoulli(rng, spec.p_problem_encounter)) problem = own[detail::uniform_index(rng, own.size())];
            std::vector<Code> present_defs;
            if (problem) {
                for (const auto& c : problems[*problem].definition) {
                    if (bernoulli(rng, 0.7)) present_defs.push_back(c);
                }
                if (present_defs.empty()) {
                    const auto& def = problems[*problem].definition;
                    present_defs.push_back(*std::next(def.begin(), static_cast<std::ptrdiff_t>(detail::uniform_index(rng, def.size()))));
                }
                r.diagnoses.insert(present_defs.begin(), present_defs.end());
                if (bernoulli(rng, 0.3)) r.diagnoses.insert(noise_dx[detail::uniform_index(rng, noise_dx.size())]);
                r.provider_specialty = specialty_of(*problem);
            } else {
                r.diagnoses.insert(noise_dx[detail::uniform_index(rng, noise_dx.size())]);
                if (bernoulli(rng, 0.5)) r.diagnoses.insert(noise_dx[detail::uniform_index(rng, noise_dx.size())]);
                r.provider_specialty = "PRIMARY_CARE";
            }
            for (auto kind : kAllRelations) {
                const auto& o = owner[index_of(kind)];
                for (std::size_t j = 0; j < spec.n_targets_per_kind; ++j) {
                    const bool planted = problem && o[j] == *problem;
                    if (!bernoulli(rng, planted ? spec.p_in : spec.p_out)) continue;
                    Order order{kind, synth_target(kind, j), std::nullopt};
                    if (planted && bernoulli(rng, spec.link_fraction)) {
                        order.linked_diagnosis = present_defs[detail::uniform_index(rng, present_defs.size())];
                    }
                    r.orders.push_back(std::move(order));
                }
            }
            data.encounters.push_back(std::move(r));
        }
    }

    std::vector<Triplet> triplets;
    for (std::size_t i = 0; i < spec.n_problems; ++i) {
        for (auto kind : kAllRelations) {
            const auto& o = owner[index_of(kind)];
            std::vector<std::size_t> others;
            for (std::size_t j = 0; j < spec.n_targets_per_kind; ++j) {
                if (o[j] == i) {
                    triplets.push_back({problems[i].problem_id, kind, synth_target(kind, j), Label::POSITIVE, 1});
                } else {
                    others.push_back(j);
                }
            }
            detail::shuffle(others.begin(), others.end(), rng);
            others.resize(std::min(others.size(), spec.negatives_per_pair));
            std::sort(others.begin(), others.end());
            for (auto j : others) {
                triplets.push_back({problems[i].problem_id, kind, synth_target(kind, j), Label::NEGATIVE, 1});
            }
        }
    }
    data.kb = KnowledgeBase(problems, std::move(triplets));

    // Ontology maps: most planted medications map to a definition code, a few
    // others map to unrelated diagnoses; planted procedures sit under a parent
    // whose discipline matches the problem's chapter.
    auto& maps = data.maps;
    std::set<char> letters;
    for (std::size_t i = 0; i < spec.n_problems; ++i) letters.insert(chapter_letter(i));
    for (char l : letters) {
        maps.chapters.push_back({CodeSystem::ICD10, std::string(1, l) + "00", std::string(1, l) + "99",
                                 std::string("DISC_") + l});
    }
    for (std::size_t j = 0; j < spec.n_targets_per_kind; ++j) {
        const std::size_t i = owner[0][j];
        const Code med = synth_target(RelationKind::MEDICATION, j);
        if (i < spec.n_problems && bernoulli(rng, 0.65)) {
            maps.med_to_diagnoses[med].insert(definition_code(i, detail::uniform_index(rng, 2)));
        } else if (bernoulli(rng, 0.2)) {
            maps.med_to_diagnoses[med].insert(noise_dx[detail::uniform_index(rng, noise_dx.size())]);
        }
        const std::size_t k = owner[1][j];
        const Code proc = synth_target(RelationKind::PROCEDURE, j);
        if (k < spec.n_problems) {
            const std::string parent = std::string("PAR_") + chapter_letter(k);
            maps.proc_parent[proc] = parent;
            maps.parent_discipline[parent] = std::string("DISC_") + chapter_letter(k);
        }
    }
    return data;
}

std::string truth_to_json(const GroundTruth& truth) {
    json arr = json::array();
    for (const auto& [key, codes] : truth) {
        json targets = json::array();
        for (const auto& c : codes) targets.push_back(detail::code_to_json(c));
        arr.push_back({{"problem", key.first}, {"relation", std::string(to_string(key.second))}, {"targets", targets}});
    }
    return json{{"schema_version", 1}, {"truth", arr}}.dump(1) + "\n";
}

GroundTruth truth_from_json(const std::string& text) {
    GroundTruth truth;
    try {
        const auto j = json::parse(text);
        for (const auto& row : j.at("truth")) {
            const auto rel = parse_relation(row.at("relation").get<std::string>());
            if (!rel) throw Error("bad relation in truth file");
            auto& set = truth[{row.at("problem").get<std::string>(), *rel}];
            for (const auto& c : row.at("targets")) set.insert(detail::code_from_json(c));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("bad truth file: ") + e.what());
    }
    return truth;
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string lines;
    for (const auto& r : data.encounters) lines += encounter_to_json_line(r) + "\n";
    detail::write_file((dir / "encounters.jsonl").string(), lines);
    save_kb(data.kb, dir / "kb.json");
    detail::write_file((dir / "truth.json").string(), truth_to_json(data.truth));
    save_ontology_maps(data.maps, dir / "ontology");
}

}  // namespace pomr
