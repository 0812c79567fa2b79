#include "pomr/baseline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace pomr {

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || detail::split_csv(line) != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw ParseError(path.string(), 1, "expected header '" + expected + "'");
    }
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cols = detail::split_csv(line);
        if (cols.size() != header.size()) {
            throw ParseError(path.string(), line_no,
                             "expected " + std::to_string(header.size()) + " columns, got " +
                                 std::to_string(cols.size()));
        }
        rows.push_back(std::move(cols));
    }
    return rows;
}

CodeSystem system_or_throw(const std::string& text, const std::filesystem::path& path) {
    const auto s = parse_code_system(text);
    if (!s) throw Error(path.string() + ": unknown coding system '" + text + "'");
    return *s;
}

std::string normalize_dx(const std::string& id) {
    std::string out;
    for (char c : id) {
        if (c != '.') out += c;
    }
    return out;
}

}  // namespace

OntologyMaps load_ontology_maps(const std::filesystem::path& dir) {
    OntologyMaps maps;
    const auto med_path = dir / "med_to_diagnoses.csv";
    for (const auto& r : read_csv(med_path, {"med_system", "med_id", "dx_system", "dx_id"})) {
        maps.med_to_diagnoses[Code(system_or_throw(r[0], med_path), r[1])].insert(
            Code(system_or_throw(r[2], med_path), r[3]));
    }
    const auto parent_path = dir / "proc_parent.csv";
    for (const auto& r : read_csv(parent_path, {"proc_system", "proc_id", "parent_id"})) {
        maps.proc_parent[Code(system_or_throw(r[0], parent_path), r[1])] = r[2];
    }
    for (const auto& r : read_csv(dir / "parent_discipline.csv", {"parent_id", "discipline"})) {
        maps.parent_discipline[r[0]] = r[1];
    }
    const auto chapter_path = dir / "chapter_discipline.csv";
    for (const auto& r : read_csv(chapter_path, {"system", "chapter_lo", "chapter_hi", "discipline"})) {
        ChapterRange range{system_or_throw(r[0], chapter_path), normalize_dx(r[1]), normalize_dx(r[2]), r[3]};
        if (range.lo.size() != range.hi.size() || range.lo > range.hi) {
            throw Error(chapter_path.string() + ": bad chapter range " + r[1] + ".." + r[2]);
        }
        maps.chapters.push_back(std::move(range));
    }
    return maps;
}

void save_ontology_maps(const OntologyMaps& maps, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string med = "med_system,med_id,dx_system,dx_id\n";
    for (const auto& [m, dxs] : maps.med_to_diagnoses) {
        for (const auto& d : dxs) {
            med += std::string(to_string(m.system())) + "," + m.id() + "," + std::string(to_string(d.system())) +
                   "," + d.id() + "\n";
        }
    }
    detail::write_file((dir / "med_to_diagnoses.csv").string(), med);
    std::string parents = "proc_system,proc_id,parent_id\n";
    for (const auto& [p, parent] : maps.proc_parent) {
        parents += std::string(to_string(p.system())) + "," + p.id() + "," + parent + "\n";
    }
    detail::write_file((dir / "proc_parent.csv").string(), parents);
    std::string disciplines = "parent_id,discipline\n";
    for (const auto& [parent, d] : maps.parent_discipline) disciplines += parent + "," + d + "\n";
    detail::write_file((dir / "parent_discipline.csv").string(), disciplines);
    std::string chapters = "system,chapter_lo,chapter_hi,discipline\n";
    for (const auto& c : maps.chapters) {
        chapters += std::string(to_string(c.system)) + "," + c.lo + "," + c.hi + "," + c.discipline + "\n";
    }
    detail::write_file((dir / "chapter_discipline.csv").string(), chapters);
}

std::set<std::string> chapter_disciplines(const OntologyMaps& maps, const Code& diagnosis) {
    std::set<std::string> out;
    const auto id = normalize_dx(diagnosis.id());
    for (const auto& c : maps.chapters) {
        if (c.system != diagnosis.system() || id.size() < c.lo.size()) continue;
        const auto prefix = id.substr(0, c.lo.size());
        if (c.lo <= prefix && prefix <= c.hi) out.insert(c.discipline);
    }
    return out;
}

bool med_relevant(const OntologyMaps& maps, const Code& med, const Problem& problem) {
    const auto it = maps.med_to_diagnoses.find(med);
    if (it == maps.med_to_diagnoses.end()) return false;
    return std::any_of(problem.definition.begin(), problem.definition.end(),
                       [&](const Code& d) { return it->second.contains(d); });
}

bool proc_relevant(const OntologyMaps& maps, const Code& proc, const Problem& problem) {
    const auto parent = maps.proc_parent.find(proc);
    if (parent == maps.proc_parent.end()) return false;
    const auto discipline = maps.parent_discipline.find(parent->second);
    if (discipline == maps.parent_discipline.end()) return false;
    return std::any_of(problem.definition.begin(), problem.definition.end(),
                       [&](const Code& d) { return chapter_disciplines(maps, d).contains(discipline->second); });
}

TripletScorer baseline_scorer(const OntologyMaps& maps, const KnowledgeBase& kb) {
    return [&maps, &kb](const Triplet& t) -> std::optional<double> {
        const auto* problem = kb.find_problem(t.problem_id);
        if (problem == nullptr) return std::nullopt;
        switch (t.relation) {
            case RelationKind::MEDICATION: return med_relevant(maps, t.target, *problem) ? 1.0 : 0.0;
            case RelationKind::PROCEDURE: return proc_relevant(maps, t.target, *problem) ? 1.0 : 0.0;
            case RelationKind::LAB: return std::nullopt;
        }
        return std::nullopt;
    };
}

BaselineCoverage baseline_coverage(const OntologyMaps& maps, const KnowledgeBase& kb,
                                   std::span<const std::size_t> part) {
    std::set<Code> meds;
    for (auto i : part) {
        const auto& t = kb.triplets().at(i);
        if (t.relation == RelationKind::MEDICATION) meds.insert(t.target);
    }
    BaselineCoverage cov;
    cov.medications = meds.size();
    if (meds.empty()) return cov;
    std::size_t mapped = 0;
    std::size_t matching = 0;
    for (const auto& m : meds) {
        if (maps.med_to_diagnoses.contains(m)) ++mapped;
        for (const auto& [_, p] : kb.problems()) {
            if (med_relevant(maps, m, p)) {
                ++matching;
                break;
            }
        }
    }
    cov.mapped_fraction = static_cast<double>(mapped) / static_cast<double>(meds.size());
    cov.matching_fraction = static_cast<double>(matching) / static_cast<double>(meds.size());
    return cov;
}

}  // namespace pomr
