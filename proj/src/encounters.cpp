#include "pomr/encounters.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <sstream>
#include <thread>

#include "json_util.hpp"

namespace pomr {

using detail::json;

std::string_view to_string(Setting setting) {
    switch (setting) {
        case Setting::INPATIENT: return "INPATIENT";
        case Setting::OUTPATIENT: return "OUTPATIENT";
        case Setting::ED: return "ED";
    }
    return "?";
}

std::optional<Setting> parse_setting(std::string_view text) {
    for (auto s : {Setting::INPATIENT, Setting::OUTPATIENT, Setting::ED}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

std::optional<int> parse_day(std::string_view date) {
    if (date.size() != 10 || date[4] != '-' || date[7] != '-') return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (date[i] < '0' || date[i] > '9') return std::nullopt;
            v = v * 10 + (date[i] - '0');
        }
        return v;
    };
    const auto y = num(0, 4), m = num(5, 2), d = num(8, 2);
    if (!y || !m || !d) return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*m)}, day{static_cast<unsigned>(*d)}};
    if (!ymd.ok()) return std::nullopt;
    return static_cast<int>(sys_days(ymd).time_since_epoch().count());
}

std::string format_day(int day) {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{days{day}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

namespace {

CodeKind order_kind(RelationKind kind) { return code_kind_of(kind); }

void register_kind(std::map<Code, CodeKind>& kinds, const Code& code, CodeKind kind,
                   const std::string& where) {
    const auto [it, inserted] = kinds.emplace(code, kind);
    if (!inserted && it->second != kind) {
        throw Error(where + ": code " + code.token() + " used as " + std::string(to_string(kind)) +
                    " but earlier as " + std::string(to_string(it->second)));
    }
}

}  // namespace

EncounterStore EncounterStore::from_records(std::vector<EncounterRecord> records,
                                            const IngestOptions& options) {
    EncounterStore store;
    std::set<std::string> ids;
    std::map<std::string, std::vector<std::size_t>> by_patient;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        const std::string where = "encounter '" + r.encounter_id + "'";
        if (r.encounter_id.empty()) throw Error("encounter id must be nonempty");
        if (!ids.insert(r.encounter_id).second) throw Error("duplicate encounter id '" + r.encounter_id + "'");
        const auto day = parse_day(r.date);
        if (!day) throw Error(where + ": unparseable date '" + r.date + "'");
        r.day = *day;
        for (const auto& dx : r.diagnoses) {
            register_kind(store.kinds_, dx, CodeKind::DIAGNOSIS, where);
            ++store.counts_[dx];
        }
        for (const auto& o : r.orders) {
            register_kind(store.kinds_, o.code, order_kind(o.kind), where);
            ++store.counts_[o.code];
            if (o.linked_diagnosis) {
                if (!is_diagnosis_system(o.linked_diagnosis->system())) {
                    throw Error(where + ": linked diagnosis " + o.linked_diagnosis->token() +
                                " is not a diagnosis code");
                }
                register_kind(store.kinds_, *o.linked_diagnosis, CodeKind::DIAGNOSIS, where);
                if (!r.diagnoses.contains(*o.linked_diagnosis)) {
                    const std::string msg = where + ": linked diagnosis " + o.linked_diagnosis->token() +
                                            " is not on the encounter";
                    if (options.strict_explicit_links) throw Error(msg);
                    store.warnings_.push_back(msg);
                }
            }
        }
        by_patient[r.patient_id].push_back(i);
    }
    store.encounters_ = std::move(records);
    for (auto& [pid, idx] : by_patient) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const auto& ea = store.encounters_[a];
            const auto& eb = store.encounters_[b];
            return std::tie(ea.day, ea.encounter_id) < std::tie(eb.day, eb.encounter_id);
        });
        store.patients_.push_back(pid);
        store.timelines_.push_back(std::move(idx));
    }
    return store;
}

std::optional<CodeKind> EncounterStore::kind_of(const Code& code) const {
    const auto it = kinds_.find(code);
    if (it == kinds_.end()) return std::nullopt;
    return it->second;
}

std::size_t EncounterStore::occurrences(const Code& code) const {
    const auto it = counts_.find(code);
    return it == counts_.end() ? 0 : it->second;
}

EncounterRecord encounter_from_json_line(const std::string& line, const std::string& source,
                                         std::size_t line_no) {
    try {
        const auto j = json::parse(line);
        EncounterRecord r;
        r.patient_id = j.at("patient_id").get<std::string>();
        r.encounter_id = j.at("encounter_id").get<std::string>();
        r.date = j.at("date").get<std::string>();
        const auto day = parse_day(r.date);
        if (!day) throw Error("unparseable date '" + r.date + "'");
        r.day = *day;
        r.facility_id = j.value("facility_id", std::string{});
        const auto setting_text = j.value("setting", std::string{"OUTPATIENT"});
        const auto setting = parse_setting(setting_text);
        if (!setting) throw Error("unknown setting '" + setting_text + "'");
        r.setting = *setting;
        if (j.contains("diagnoses")) {
            for (const auto& d : j.at("diagnoses")) {
                auto code = detail::code_from_json(d);
                if (!is_diagnosis_system(code.system())) {
                    throw Error("diagnosis " + code.token() + " is not from a diagnosis system");
                }
                r.diagnoses.insert(std::move(code));
            }
        }
        if (j.contains("orders")) {
            for (const auto& o : j.at("orders")) {
                Order order;
                const auto kind_text = o.at("kind").get<std::string>();
                const auto kind = parse_relation(kind_text);
                if (!kind) throw Error("unknown order kind '" + kind_text + "'");
                order.kind = *kind;
                order.code = detail::code_from_json(o.at("code"));
                if (o.contains("linked_diagnosis") && !o.at("linked_diagnosis").is_null()) {
                    order.linked_diagnosis = detail::code_from_json(o.at("linked_diagnosis"));
                }
                r.orders.push_back(std::move(order));
            }
        }
        if (j.contains("provider_specialty") && !j.at("provider_specialty").is_null()) {
            r.provider_specialty = j.at("provider_specialty").get<std::string>();
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(source, line_no, e.what());
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(source, line_no, e.what());
    }
}

std::string encounter_to_json_line(const EncounterRecord& r) {
    json dx = json::array();
    for (const auto& d : r.diagnoses) dx.push_back(detail::code_to_json(d));
    json orders = json::array();
    for (const auto& o : r.orders) {
        json jo{{"code", detail::code_to_json(o.code)}, {"kind", std::string(to_string(o.kind))}};
        if (o.linked_diagnosis) jo["linked_diagnosis"] = detail::code_to_json(*o.linked_diagnosis);
        orders.push_back(std::move(jo));
    }
    json j{{"date", r.date},
           {"diagnoses", dx},
           {"encounter_id", r.encounter_id},
           {"facility_id", r.facility_id},
           {"orders", orders},
           {"patient_id", r.patient_id},
           {"setting", std::string(to_string(r.setting))}};
    if (r.provider_specialty) j["provider_specialty"] = *r.provider_specialty;
    return j.dump();
}

EncounterStore parse_encounters(const std::string& text, const std::string& source,
                                const IngestOptions& options) {
    std::vector<EncounterRecord> records;
    std::vector<std::size_t> line_numbers;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        records.push_back(encounter_from_json_line(line, source, line_no));
        line_numbers.push_back(line_no);
    }
    try {
        return EncounterStore::from_records(std::move(records), options);
    } catch (const Error& e) {
        throw ParseError(source, 0, e.what());
    }
}

EncounterStore ingest(const std::filesystem::path& path, const IngestOptions& options) {
    return parse_encounters(detail::read_file(path.string()), path.string(), options);
}

Vocabulary::Vocabulary(std::array<std::set<Code>, 3> targets, std::set<Code> diagnoses,
                       std::map<Code, std::size_t> frequencies, std::size_t min_count)
    : targets_(std::move(targets)),
      diagnoses_(std::move(diagnoses)),
      frequencies_(std::move(frequencies)),
      min_count_(min_count) {}

std::size_t Vocabulary::frequency(const Code& code) const {
    const auto it = frequencies_.find(code);
    return it == frequencies_.end() ? 0 : it->second;
}

std::optional<CodeKind> Vocabulary::kind_of(const Code& code) const {
    for (auto kind : kAllRelations) {
        if (targets_[index_of(kind)].contains(code)) return code_kind_of(kind);
    }
    if (diagnoses_.contains(code)) return CodeKind::DIAGNOSIS;
    return std::nullopt;
}

Vocabulary build_vocabulary(const EncounterStore& store, std::size_t min_count) {
    std::array<std::set<Code>, 3> targets;
    std::set<Code> diagnoses;
    std::map<Code, std::size_t> freq;
    for (const auto& [code, kind] : store.code_kinds()) {
        const auto n = store.occurrences(code);
        if (n < min_count) continue;
        freq.emplace(code, n);
        switch (kind) {
            case CodeKind::DIAGNOSIS: diagnoses.insert(code); break;
            case CodeKind::MEDICATION: targets[index_of(RelationKind::MEDICATION)].insert(code); break;
            case CodeKind::PROCEDURE: targets[index_of(RelationKind::PROCEDURE)].insert(code); break;
            case CodeKind::LAB: targets[index_of(RelationKind::LAB)].insert(code); break;
        }
    }
    return Vocabulary(std::move(targets), std::move(diagnoses), std::move(freq), min_count);
}

std::string vocabulary_to_json(const Vocabulary& vocab) {
    auto dump_set = [&](const std::set<Code>& codes) {
        json arr = json::array();
        for (const auto& c : codes) {
            auto jc = detail::code_to_json(c);
            jc["count"] = vocab.frequency(c);
            arr.push_back(std::move(jc));
        }
        return arr;
    };
    json j{{"min_count", vocab.min_count()}, {"DIAGNOSIS", dump_set(vocab.diagnoses())}};
    for (auto kind : kAllRelations) j[std::string(to_string(kind))] = dump_set(vocab.codes(kind));
    return j.dump(2) + "\n";
}

Vocabulary vocabulary_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        std::map<Code, std::size_t> freq;
        auto load_set = [&](const json& arr) {
            std::set<Code> out;
            for (const auto& jc : arr) {
                auto c = detail::code_from_json(jc);
                freq[c] = jc.value("count", std::size_t{0});
                out.insert(std::move(c));
            }
            return out;
        };
        std::array<std::set<Code>, 3> targets;
        for (auto kind : kAllRelations) targets[index_of(kind)] = load_set(j.at(std::string(to_string(kind))));
        auto dx = load_set(j.at("DIAGNOSIS"));
        return Vocabulary(std::move(targets), std::move(dx), std::move(freq),
                          j.value("min_count", std::size_t{1}));
    } catch (const json::exception& e) {
        throw Error(std::string("bad vocabulary file: ") + e.what());
    }
}

std::string_view to_string(CoocDefinition def) {
    switch (def) {
        case CoocDefinition::EXPLICIT: return "explicit";
        case CoocDefinition::SAME_ENCOUNTER: return "same_encounter";
        case CoocDefinition::TWO_WEEKS_SAME_FACILITY: return "two_weeks_same_facility";
        case CoocDefinition::TWO_WEEKS_ANY_FACILITY: return "two_weeks_any_facility";
    }
    return "?";
}

std::size_t CooccurrenceTable::numerator(const std::string& problem_id, const Code& target,
                                         CoocDefinition def) const {
    const auto it = numerators_.find(PairKey{problem_id, target});
    return it == numerators_.end() ? 0 : it->second[static_cast<std::size_t>(def)];
}

std::size_t CooccurrenceTable::target_patients(const Code& target) const {
    const auto it = target_patients_.find(target);
    return it == target_patients_.end() ? 0 : it->second;
}

std::size_t CooccurrenceTable::problem_patients(const std::string& problem_id) const {
    const auto it = problem_patients_.find(problem_id);
    return it == problem_patients_.end() ? 0 : it->second;
}

double CooccurrenceTable::value(const std::string& problem_id, const Code& target, CoocDefinition def) const {
    const auto denom = target_patients(target);
    if (denom == 0) return 0.0;
    return static_cast<double>(numerator(problem_id, target, def)) / static_cast<double>(denom);
}

namespace {

struct Sighting {
    int day;
    const std::string* facility;
    std::size_t encounter;
};

struct PartialCounts {
    std::map<PairKey, std::array<std::size_t, 4>> numerators;
    std::map<Code, std::size_t> target_patients;
    std::map<std::string, std::size_t> problem_patients;
};

void count_patient(const EncounterStore& store, std::size_t patient, const std::vector<Problem>& problems,
                   PartialCounts& out) {
    const auto timeline = store.timeline(patient);
    const auto& encounters = store.encounters();

    std::map<Code, std::vector<Sighting>> targets;
    // Diagnosis codes linked from an order of the target, anywhere in the timeline.
    std::map<Code, std::set<Code>> links;
    for (auto ei : timeline) {
        const auto& e = encounters[ei];
        for (const auto& o : e.orders) {
            auto& sightings = targets[o.code];
            if (sightings.empty() || sightings.back().encounter != ei) {
                sightings.push_back({e.day, &e.facility_id, ei});
            }
            if (o.linked_diagnosis) links[o.code].insert(*o.linked_diagnosis);
        }
    }
    for (const auto& [code, _] : targets) ++out.target_patients[code];

    for (const auto& problem : problems) {
        std::vector<Sighting> present;
        for (auto ei : timeline) {
            const auto& e = encounters[ei];
            const bool has = std::any_of(problem.definition.begin(), problem.definition.end(),
                                         [&](const Code& c) { return e.diagnoses.contains(c); });
            if (has) present.push_back({e.day, &e.facility_id, ei});
        }
        if (present.empty()) continue;
        ++out.problem_patients[problem.problem_id];

        for (const auto& [code, sightings] : targets) {
            std::array<bool, 4> hit{};
            if (const auto it = links.find(code); it != links.end()) {
                hit[0] = std::any_of(it->second.begin(), it->second.end(),
                                     [&](const Code& c) { return problem.definition.contains(c); });
            }
            for (const auto& p : present) {
                for (const auto& t : sightings) {
                    const bool near = std::abs(p.day - t.day) <= kTwoWeeksDays;
                    if (p.encounter == t.encounter) hit[1] = true;
                    if (near && *p.facility == *t.facility) hit[2] = true;
                    if (near) hit[3] = true;
                }
                if (hit[1] && hit[2] && hit[3]) break;
            }
            if (!(hit[0] || hit[1] || hit[2] || hit[3])) continue;
            auto& counts = out.numerators[PairKey{problem.problem_id, code}];
            for (std::size_t d = 0; d < 4; ++d) counts[d] += hit[d] ? 1 : 0;
        }
    }
}

}  // namespace

CooccurrenceTable compute_cooccurrence(const EncounterStore& store, const std::vector<Problem>& problems,
                                       unsigned threads) {
    const std::size_t n_patients = store.patients().size();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, n_patients))));
    std::vector<PartialCounts> partials(threads);
    {
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < threads; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t p = w; p < n_patients; p += threads) count_patient(store, p, problems, partials[w]);
            });
        }
    }
    CooccurrenceTable table;
    for (auto& part : partials) {
        for (const auto& [key, counts] : part.numerators) {
            auto& dst = table.numerators_[key];
            for (std::size_t d = 0; d < 4; ++d) dst[d] += counts[d];
        }
        for (const auto& [code, n] : part.target_patients) table.target_patients_[code] += n;
        for (const auto& [id, n] : part.problem_patients) table.problem_patients_[id] += n;
    }
    return table;
}

std::map<PairKey, double> cooccurrence(const EncounterStore& store, const std::vector<Problem>& problems,
                                       CoocDefinition def) {
    const auto table = compute_cooccurrence(store, problems);
    std::map<PairKey, double> out;
    for (const auto& problem : problems) {
        for (const auto& [code, n] : table.targets()) {
            if (n == 0) continue;
            out.emplace(PairKey{problem.problem_id, code}, table.value(problem.problem_id, code, def));
        }
    }
    return out;
}

SpecialtyVocabulary::SpecialtyVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (!index_.emplace(names_[i], i).second) throw Error("duplicate specialty '" + names_[i] + "'");
    }
}

std::optional<std::size_t> SpecialtyVocabulary::index(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

SpecialtyVocabulary build_specialty_vocabulary(const EncounterStore& store, std::size_t max_size) {
    std::map<std::string, std::size_t> coverage;
    for (const auto& e : store.encounters()) {
        if (e.provider_specialty && !e.provider_specialty->empty()) ++coverage[*e.provider_specialty];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(coverage.begin(), coverage.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> names;
    for (std::size_t i = 0; i < ranked.size() && i < max_size; ++i) names.push_back(ranked[i].first);
    return SpecialtyVocabulary(std::move(names));
}

namespace {

template <typename Pred>
std::vector<double> count_specialties(const EncounterStore& store, const SpecialtyVocabulary& vocab,
                                      Pred contains) {
    std::vector<double> out(vocab.size(), 0.0);
    for (const auto& e : store.encounters()) {
        if (!e.provider_specialty) continue;
        const auto idx = vocab.index(*e.provider_specialty);
        if (!idx) continue;
        if (contains(e)) out[*idx] += 1.0;
    }
    return out;
}

bool encounter_has_code(const EncounterRecord& e, const Code& code) {
    if (e.diagnoses.contains(code)) return true;
    return std::any_of(e.orders.begin(), e.orders.end(), [&](const Order& o) { return o.code == code; });
}

bool encounter_has_problem(const EncounterRecord& e, const Problem& problem) {
    return std::any_of(problem.definition.begin(), problem.definition.end(),
                       [&](const Code& c) { return e.diagnoses.contains(c); });
}

}  // namespace

std::vector<double> specialty_vector(const EncounterStore& store, const Code& code,
                                     const SpecialtyVocabulary& vocab) {
    return count_specialties(store, vocab, [&](const EncounterRecord& e) { return encounter_has_code(e, code); });
}

std::vector<double> specialty_vector(const EncounterStore& store, const Problem& problem,
                                     const SpecialtyVocabulary& vocab) {
    return count_specialties(store, vocab,
                             [&](const EncounterRecord& e) { return encounter_has_problem(e, problem); });
}

std::map<Code, ImportanceScore> importance_scores(const EncounterStore& store, const Problem& problem,
                                                  const ImportanceOptions& options) {
    std::size_t n_with = 0;
    std::size_t n_without = 0;
    std::map<Code, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& code_kind : store.code_kinds()) {
        if (code_kind.second != CodeKind::DIAGNOSIS) counts.emplace(code_kind.first, std::pair{0, 0});
    }
    for (const auto& e : store.encounters()) {
        if (options.require_diagnosis && e.diagnoses.empty()) continue;
        const bool y = encounter_has_problem(e, problem);
        (y ? n_with : n_without) += 1;
        std::set<Code> present;
        for (const auto& o : e.orders) present.insert(o.code);
        for (const auto& c : present) {
            auto& [in_with, in_without] = counts[c];
            (y ? in_with : in_without) += 1;
        }
    }
    std::map<Code, ImportanceScore> out;
    for (const auto& [code, c] : counts) {
        if (n_with == 0) {
            out.emplace(code, ImportanceScore{0.0, true});
            continue;
        }
        const double p1 = (static_cast<double>(c.first) + 1.0) / (static_cast<double>(n_with) + 2.0);
        const double p0 = (static_cast<double>(c.second) + 1.0) / (static_cast<double>(n_without) + 2.0);
        out.emplace(code, ImportanceScore{std::log(p1) - std::log(p0), false});
    }
    return out;
}

ImportanceScore importance_score(const EncounterStore& store, const Problem& problem, const Code& target,
                                 const ImportanceOptions& options) {
    const auto all = importance_scores(store, problem, options);
    if (const auto it = all.find(target); it != all.end()) return it->second;
    std::size_t n_with = 0, n_without = 0;
    for (const auto& e : store.encounters()) {
        if (options.require_diagnosis && e.diagnoses.empty()) continue;
        (encounter_has_problem(e, problem) ? n_with : n_without) += 1;
    }
    if (n_with == 0) return {0.0, true};
    return {std::log(1.0 / (n_with + 2.0)) - std::log(1.0 / (n_without + 2.0)), false};
}

std::vector<Candidate> candidate_list(const CodeScorer& scorer, const std::set<Code>& eligible,
                                      const std::set<Code>& excluded, std::size_t top_n) {
    std::vector<Candidate> out;
    for (const auto& code : eligible) {
        if (excluded.contains(code)) continue;
        out.push_back({code, scorer(code)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (out.size() > top_n) out.resize(top_n);
    return out;
}

std::set<Code> annotated_targets(const KnowledgeBase& kb, const std::string& problem_id, RelationKind relation) {
    std::set<Code> out;
    for (const auto& t : kb.triplets()) {
        if (t.problem_id == problem_id && t.relation == relation) out.insert(t.target);
    }
    return out;
}

}  // namespace pomr
