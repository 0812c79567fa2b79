#include "pomr/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace pomr {

double PairFeatures::log_problem_patients() const { return std::log1p(static_cast<double>(problem_patients)); }
double PairFeatures::log_target_patients() const { return std::log1p(static_cast<double>(target_patients)); }

std::array<double, kNumPairFeatures> PairFeatures::values() const {
    return {cooc[0], cooc[1], cooc[2], cooc[3], log_problem_patients(), log_target_patients()};
}

PairFeatures FeatureTable::pair(const std::string& problem_id, const Code& target) const {
    const auto it = pairs_.find(PairKey{problem_id, target});
    return it == pairs_.end() ? PairFeatures{} : it->second;
}

const std::vector<double>& FeatureTable::raw_problem_specialty(const std::string& problem_id) const {
    const auto it = problem_spec_.find(problem_id);
    return it != problem_spec_.end() ? it->second : zeros_;
}

const std::vector<double>& FeatureTable::raw_target_specialty(const Code& target) const {
    const auto it = target_spec_.find(target);
    return it != target_spec_.end() ? it->second : zeros_;
}

std::vector<double> FeatureTable::problem_specialty(const std::string& problem_id) const {
    return scale_specialty(raw_problem_specialty(problem_id));
}

std::vector<double> FeatureTable::target_specialty(const Code& target) const {
    return scale_specialty(raw_target_specialty(target));
}

void FeatureTable::set_specialties(SpecialtyVocabulary vocab) {
    specialties_ = std::move(vocab);
    zeros_.assign(specialties_.size(), 0.0);
    problem_spec_.clear();
    target_spec_.clear();
}

void FeatureTable::set_pair(const std::string& problem_id, const Code& target, const PairFeatures& f) {
    pairs_[PairKey{problem_id, target}] = f;
}

void FeatureTable::set_problem_specialty(const std::string& problem_id, std::vector<double> counts) {
    if (counts.size() != specialties_.size()) throw Error("specialty vector dimension mismatch");
    problem_spec_[problem_id] = std::move(counts);
}

void FeatureTable::set_target_specialty(const Code& target, std::vector<double> counts) {
    if (counts.size() != specialties_.size()) throw Error("specialty vector dimension mismatch");
    target_spec_[target] = std::move(counts);
}

std::vector<double> scale_specialty(const std::vector<double>& counts) {
    double total = 0.0;
    for (double c : counts) total += std::abs(c);
    std::vector<double> out(counts.size(), 0.0);
    if (total == 0.0) return out;
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = std::log1p(counts[i] / total);
    return out;
}

PairFeatures pair_features(const CooccurrenceTable& cooc, const std::string& problem_id, const Code& target) {
    PairFeatures f;
    for (auto def : kAllCoocDefinitions) f.cooc[static_cast<std::size_t>(def)] = cooc.value(problem_id, target, def);
    f.problem_patients = cooc.problem_patients(problem_id);
    f.target_patients = cooc.target_patients(target);
    return f;
}

FeatureTable build_features(const EncounterStore& store, const std::vector<Problem>& problems,
                            std::size_t n_specialties, unsigned threads) {
    const auto cooc = compute_cooccurrence(store, problems, threads);
    FeatureTable table;
    for (const auto& problem : problems) {
        for (const auto& [code, _] : cooc.targets()) {
            table.set_pair(problem.problem_id, code, pair_features(cooc, problem.problem_id, code));
        }
    }

    table.set_specialties(build_specialty_vocabulary(store, n_specialties));
    const auto& vocab = table.specialties();
    std::map<Code, std::vector<double>> by_code;
    std::map<std::string, std::vector<double>> by_problem;
    for (const auto& [code, kind] : store.code_kinds()) {
        if (kind != CodeKind::DIAGNOSIS) by_code.emplace(code, std::vector<double>(vocab.size(), 0.0));
    }
    for (const auto& p : problems) by_problem.emplace(p.problem_id, std::vector<double>(vocab.size(), 0.0));
    // One pass over encounters; same counts as specialty_vector() per token.
    for (const auto& e : store.encounters()) {
        if (!e.provider_specialty) continue;
        const auto idx = vocab.index(*e.provider_specialty);
        if (!idx) continue;
        std::set<Code> present;
        for (const auto& o : e.orders) present.insert(o.code);
        for (const auto& c : present) by_code[c][*idx] += 1.0;
        for (const auto& p : problems) {
            for (const auto& d : p.definition) {
                if (e.diagnoses.contains(d)) {
                    by_problem[p.problem_id][*idx] += 1.0;
                    break;
                }
            }
        }
    }
    for (auto& [code, v] : by_code) table.set_target_specialty(code, std::move(v));
    for (auto& [id, v] : by_problem) table.set_problem_specialty(id, std::move(v));
    return table;
}

namespace {

using detail::split_csv;

double parse_double(const std::string& s, const std::string& source, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError(source, line, "not a number: '" + s + "'");
    }
    return v;
}

std::size_t parse_count(const std::string& s, const std::string& source, std::size_t line) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError(source, line, "not a count: '" + s + "'");
    }
    return v;
}

const char* kPairHeader =
    "problem_id,system,id,cooc_explicit,cooc_encounter,cooc_2wk_same_facility,cooc_2wk_any_facility,"
    "problem_patients,target_patients,log_problem_patients,log_target_patients";

}  // namespace

void save_features(const FeatureTable& table, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string pairs = std::string(kPairHeader) + "\n";
    for (const auto& [key, f] : table.pairs()) {
        pairs += key.first + "," + std::string(to_string(key.second.system())) + "," + key.second.id();
        for (double v : f.cooc) pairs += "," + format_double(v);
        pairs += "," + std::to_string(f.problem_patients) + "," + std::to_string(f.target_patients);
        pairs += "," + format_double(f.log_problem_patients()) + "," + format_double(f.log_target_patients());
        pairs += "\n";
    }
    detail::write_file((dir / "pair_features.csv").string(), pairs);

    std::string spec = "entity,key";
    for (const auto& name : table.specialties().names()) spec += "," + name;
    spec += "\n";
    for (const auto& [id, v] : table.problem_specialties()) {
        spec += "PROBLEM," + id;
        for (double x : v) spec += "," + format_double(x);
        spec += "\n";
    }
    for (const auto& [code, v] : table.target_specialties()) {
        spec += "CODE," + code.token();
        for (double x : v) spec += "," + format_double(x);
        spec += "\n";
    }
    detail::write_file((dir / "specialty_vectors.csv").string(), spec);
}

FeatureTable load_features(const std::filesystem::path& dir) {
    FeatureTable table;
    {
        const auto path = (dir / "pair_features.csv").string();
        std::istringstream in(detail::read_file(path));
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line_no == 1 || line.empty()) continue;
            const auto cols = split_csv(line);
            if (cols.size() != 11) throw ParseError(path, line_no, "expected 11 columns");
            const auto system = parse_code_system(cols[1]);
            if (!system) throw ParseError(path, line_no, "unknown system '" + cols[1] + "'");
            PairFeatures f;
            for (std::size_t d = 0; d < 4; ++d) f.cooc[d] = parse_double(cols[3 + d], path, line_no);
            f.problem_patients = parse_count(cols[7], path, line_no);
            f.target_patients = parse_count(cols[8], path, line_no);
            table.set_pair(cols[0], Code(*system, cols[2]), f);
        }
    }
    {
        const auto path = (dir / "specialty_vectors.csv").string();
        std::istringstream in(detail::read_file(path));
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto cols = split_csv(line);
            if (line_no == 1) {
                if (cols.size() < 2) throw ParseError(path, 1, "bad header");
                table.set_specialties(SpecialtyVocabulary({cols.begin() + 2, cols.end()}));
                continue;
            }
            if (cols.size() != table.specialty_dim() + 2) throw ParseError(path, line_no, "column count mismatch");
            std::vector<double> v;
            for (std::size_t i = 2; i < cols.size(); ++i) v.push_back(parse_double(cols[i], path, line_no));
            if (cols[0] == "PROBLEM") {
                table.set_problem_specialty(cols[1], std::move(v));
            } else if (cols[0] == "CODE") {
                const auto code = Code::from_token(cols[1]);
                if (!code) throw ParseError(path, line_no, "bad code token '" + cols[1] + "'");
                table.set_target_specialty(*code, std::move(v));
            } else {
                throw ParseError(path, line_no, "unknown entity '" + cols[0] + "'");
            }
        }
    }
    return table;
}

}  // namespace pomr
