#include "pomr/kb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json_util.hpp"
#include "rng.hpp"

namespace pomr {

using detail::json;

namespace {

void validate_problem(const Problem& p) {
    if (p.problem_id.empty()) throw Error("problem id must be nonempty");
    if (p.definition.empty()) throw Error("problem '" + p.problem_id + "' has an empty definition");
    for (const auto& code : p.definition) {
        if (!is_diagnosis_system(code.system())) {
            throw Error("problem '" + p.problem_id + "' definition code " + code.token() +
                        " is not a diagnosis code");
        }
    }
}

// Offsets of the elements of the top-level array stored under `key`.
std::vector<std::size_t> array_element_offsets(const std::string& text, const std::string& key) {
    std::vector<std::size_t> out;
    int depth = 0;
    bool in_string = false;
    bool capture = false;
    int capture_depth = -1;
    bool expect_element = false;
    std::string last_string;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
                continue;
            }
            if (c == '"') {
                in_string = false;
                last_string = current;
            } else {
                current += c;
            }
            continue;
        }
        if (capture && expect_element && depth == capture_depth && !std::isspace(static_cast<unsigned char>(c)) &&
            c != ',' && c != ']') {
            out.push_back(i);
            expect_element = false;
        }
        switch (c) {
            case '"':
                in_string = true;
                current.clear();
                break;
            case '{':
            case '[':
                if (c == '[' && depth == 1 && last_string == key && !capture) {
                    capture = true;
                    capture_depth = depth + 1;
                    expect_element = true;
                }
                ++depth;
                break;
            case '}':
            case ']':
                --depth;
                if (capture && depth < capture_depth) return out;
                break;
            case ',':
                if (capture && depth == capture_depth) expect_element = true;
                break;
            default:
                break;
        }
    }
    return out;
}

json triplet_to_json(const Triplet& t) {
    return json{{"label", t.positive() ? 1 : 0},
                {"problem", t.problem_id},
                {"relation", std::string(to_string(t.relation))},
                {"round", t.round},
                {"target", detail::code_to_json(t.target)}};
}

Triplet triplet_from_json(const json& j) {
    Triplet t;
    t.problem_id = j.at("problem").get<std::string>();
    const auto rel_text = j.at("relation").get<std::string>();
    const auto rel = parse_relation(rel_text);
    if (!rel) throw Error("unknown relation kind '" + rel_text + "'");
    t.relation = *rel;
    t.target = detail::code_from_json(j.at("target"));
    const int label = j.at("label").get<int>();
    if (label != 0 && label != 1) throw Error("label must be 0 or 1");
    t.label = label == 1 ? Label::POSITIVE : Label::NEGATIVE;
    t.round = j.contains("round") ? j.at("round").get<int>() : 1;
    if (t.round < 1) throw Error("round must be >= 1");
    return t;
}

bool triplet_less(const Triplet& a, const Triplet& b) { return key_of(a) < key_of(b); }

}  // namespace

KnowledgeBase::KnowledgeBase(std::vector<Problem> problems, std::vector<Triplet> triplets) {
    for (auto& p : problems) {
        validate_problem(p);
        const auto id = p.problem_id;
        if (!problems_.emplace(id, std::move(p)).second) {
            throw Error("duplicate problem id '" + id + "'");
        }
    }
    triplets_.reserve(triplets.size());
    for (auto& t : triplets) {
        if (!problems_.contains(t.problem_id)) {
            throw Error("triplet references unknown problem '" + t.problem_id + "'");
        }
        auto key = key_of(t);
        if (!index_.emplace(std::move(key), triplets_.size()).second) {
            throw Error("duplicate triplet key (" + t.problem_id + ", " +
                        std::string(to_string(t.relation)) + ", " + t.target.token() + ")");
        }
        triplets_.push_back(std::move(t));
    }
}

const Problem* KnowledgeBase::find_problem(const std::string& id) const {
    const auto it = problems_.find(id);
    return it == problems_.end() ? nullptr : &it->second;
}

std::optional<std::size_t> KnowledgeBase::find(const TripletKey& key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> KnowledgeBase::problem_ids() const {
    std::vector<std::string> ids;
    ids.reserve(problems_.size());
    for (const auto& [id, _] : problems_) ids.push_back(id);
    return ids;
}

std::vector<Problem> KnowledgeBase::problem_list() const {
    std::vector<Problem> out;
    out.reserve(problems_.size());
    for (const auto& [_, p] : problems_) out.push_back(p);
    return out;
}

bool KnowledgeBase::operator==(const KnowledgeBase& other) const {
    if (problems_.size() != other.problems_.size() || triplets_.size() != other.triplets_.size()) {
        return false;
    }
    for (const auto& [id, p] : problems_) {
        const auto* q = other.find_problem(id);
        if (q == nullptr || q->name != p.name || q->definition != p.definition) return false;
    }
    for (const auto& t : triplets_) {
        const auto idx = other.find(key_of(t));
        if (!idx) return false;
        const auto& u = other.triplets_[*idx];
        if (u.label != t.label || u.round != t.round) return false;
    }
    return true;
}

KnowledgeBase add_annotation(const KnowledgeBase& kb, const Triplet& triplet,
                             const std::string& annotator_id, const std::string& timestamp,
                             const KindLookup& kinds) {
    if (!kb.problems_.contains(triplet.problem_id)) {
        throw Error("unknown problem '" + triplet.problem_id + "'");
    }
    if (triplet.round < 1) throw Error("round must be >= 1");
    if (kinds) {
        const auto kind = kinds(triplet.target);
        if (!kind) throw Error("target " + triplet.target.token() + " is not in the vocabulary");
        if (*kind != code_kind_of(triplet.relation)) {
            throw Error("target " + triplet.target.token() + " is a " + std::string(to_string(*kind)) +
                        " code, not valid for relation " + std::string(to_string(triplet.relation)));
        }
    }
    KnowledgeBase out = kb;
    auto key = key_of(triplet);
    if (const auto it = out.index_.find(key); it != out.index_.end()) {
        out.triplets_[it->second] = triplet;
    } else {
        out.index_.emplace(std::move(key), out.triplets_.size());
        out.triplets_.push_back(triplet);
    }
    out.audit_.push_back(AnnotationEvent{annotator_id, triplet, timestamp});
    return out;
}

KnowledgeBase parse_kb(const std::string& text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source, detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0), e.what());
    }
    if (!doc.is_object()) throw ParseError(source, 1, "top level must be an object");

    const auto problem_offsets = array_element_offsets(text, "problems");
    const auto triplet_offsets = array_element_offsets(text, "triplets");
    auto line_for = [&](const std::vector<std::size_t>& offsets, std::size_t i) -> std::size_t {
        return i < offsets.size() ? detail::line_of_offset(text, offsets[i]) : 0;
    };

    std::vector<Problem> problems;
    std::set<std::string> seen_problems;
    const auto& jp = doc.contains("problems") ? doc.at("problems") : json::array();
    for (std::size_t i = 0; i < jp.size(); ++i) {
        try {
            Problem p;
            p.problem_id = jp[i].at("id").get<std::string>();
            p.name = jp[i].value("name", p.problem_id);
            for (const auto& c : jp[i].at("definition")) p.definition.insert(detail::code_from_json(c));
            validate_problem(p);
            if (!seen_problems.insert(p.problem_id).second) {
                throw Error("duplicate problem id '" + p.problem_id + "'");
            }
            problems.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ParseError(source, line_for(problem_offsets, i), e.what());
        } catch (const Error& e) {
            throw ParseError(source, line_for(problem_offsets, i), e.what());
        }
    }

    std::vector<Triplet> triplets;
    std::map<TripletKey, std::size_t> seen;
    const auto& jt = doc.contains("triplets") ? doc.at("triplets") : json::array();
    for (std::size_t i = 0; i < jt.size(); ++i) {
        try {
            auto t = triplet_from_json(jt[i]);
            if (!seen_problems.contains(t.problem_id)) {
                throw Error("triplet references unknown problem '" + t.problem_id + "'");
            }
            auto key = key_of(t);
            if (const auto it = seen.find(key); it != seen.end()) {
                auto& prev = triplets[it->second];
                if (prev.round == t.round) {
                    throw Error("duplicate triplet key (" + t.problem_id + ", " +
                                std::string(to_string(t.relation)) + ", " + t.target.token() + ")");
                }
                if (t.round > prev.round) prev = std::move(t);
                continue;
            }
            seen.emplace(std::move(key), triplets.size());
            triplets.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw ParseError(source, line_for(triplet_offsets, i), e.what());
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(source, line_for(triplet_offsets, i), e.what());
        }
    }
    return KnowledgeBase(std::move(problems), std::move(triplets));
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
    return parse_kb(detail::read_file(path.string()), path.string());
}

std::string serialize_kb(const KnowledgeBase& kb) {
    std::string out = "{\n  \"problems\": [";
    bool first = true;
    for (const auto& [id, p] : kb.problems()) {
        json def = json::array();
        for (const auto& c : p.definition) def.push_back(detail::code_to_json(c));
        json jp{{"definition", def}, {"id", id}, {"name", p.name}};
        out += first ? "\n    " : ",\n    ";
        out += jp.dump();
        first = false;
    }
    out += first ? "],\n" : "\n  ],\n";
    out += "  \"triplets\": [";
    std::vector<const Triplet*> sorted;
    for (const auto& t : kb.triplets()) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return triplet_less(*a, *b); });
    first = true;
    for (const auto* t : sorted) {
        out += first ? "\n    " : ",\n    ";
        out += triplet_to_json(*t).dump();
        first = false;
    }
    out += first ? "]\n}\n" : "\n  ]\n}\n";
    return out;
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
    detail::write_file(path.string(), serialize_kb(kb));
}

std::string event_to_json_line(const AnnotationEvent& event) {
    json j = triplet_to_json(event.triplet);
    j["annotator"] = event.annotator_id;
    j["timestamp"] = event.timestamp;
    return j.dump();
}

AnnotationEvent event_from_json_line(const std::string& line, const std::string& source,
                                     std::size_t line_no) {
    try {
        const auto j = json::parse(line);
        AnnotationEvent ev;
        ev.triplet = triplet_from_json(j);
        ev.annotator_id = j.value("annotator", std::string{});
        ev.timestamp = j.value("timestamp", std::string{});
        return ev;
    } catch (const json::exception& e) {
        throw ParseError(source, line_no, e.what());
    } catch (const Error& e) {
        throw ParseError(source, line_no, e.what());
    }
}

void append_event(const std::filesystem::path& path, const AnnotationEvent& event) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + path.string());
    out << event_to_json_line(event) << '\n';
    out.flush();
}

std::vector<AnnotationEvent> read_events(const std::filesystem::path& path) {
    std::vector<AnnotationEvent> events;
    if (!std::filesystem::exists(path)) return events;
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        events.push_back(event_from_json_line(line, path.string(), line_no));
    }
    return events;
}

KnowledgeBase replay(const KnowledgeBase& base, const std::vector<AnnotationEvent>& events,
                     const KindLookup& kinds) {
    KnowledgeBase kb = base;
    for (const auto& ev : events) kb = add_annotation(kb, ev.triplet, ev.annotator_id, ev.timestamp, kinds);
    return kb;
}

Split split_random(const KnowledgeBase& kb, SplitFractions fractions, std::uint64_t seed) {
    const std::size_t n = kb.triplets().size();
    if (fractions.train <= 0 || fractions.validation <= 0 || fractions.test <= 0) {
        throw Error("split fractions must be positive");
    }
    if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9) {
        throw Error("split fractions must sum to 1");
    }
    if (n < 3) throw Error("need at least 3 triplets to split");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    detail::shuffle(order.begin(), order.end(), rng);

    const auto n_val = static_cast<std::size_t>(std::floor(fractions.validation * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(fractions.test * n + 1e-9));
    const std::size_t n_train = n - n_val - n_test;

    Split split;
    split.mode = SplitMode::RANDOM_TRIPLET;
    split.seed = seed;
    split.train.assign(order.begin(), order.begin() + n_train);
    split.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    split.test.assign(order.begin() + n_train + n_val, order.end());
    for (auto* part : {&split.train, &split.validation, &split.test}) std::sort(part->begin(), part->end());
    return split;
}

Split split_by_problem(const KnowledgeBase& kb, std::size_t n_val_problems,
                       std::size_t n_test_problems, std::uint64_t seed) {
    auto ids = kb.problem_ids();
    if (ids.size() <= n_val_problems + n_test_problems) {
        throw Error("need more than " + std::to_string(n_val_problems + n_test_problems) +
                    " problems for a held-out-problem split, have " + std::to_string(ids.size()));
    }
    std::mt19937_64 rng(seed);
    detail::shuffle(ids.begin(), ids.end(), rng);
    std::set<std::string> test_ids(ids.begin(), ids.begin() + n_test_problems);
    std::set<std::string> val_ids(ids.begin() + n_test_problems,
                                  ids.begin() + n_test_problems + n_val_problems);

    Split split;
    split.mode = SplitMode::HELD_OUT_PROBLEM;
    split.seed = seed;
    const auto& triplets = kb.triplets();
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        const auto& pid = triplets[i].problem_id;
        if (test_ids.contains(pid)) {
            split.test.push_back(i);
        } else if (val_ids.contains(pid)) {
            split.validation.push_back(i);
        } else {
            split.train.push_back(i);
        }
    }
    return split;
}

std::string split_to_json(const Split& split) {
    json j{{"mode", split.mode == SplitMode::RANDOM_TRIPLET ? "RANDOM_TRIPLET" : "HELD_OUT_PROBLEM"},
           {"seed", split.seed},
           {"train", split.train},
           {"validation", split.validation},
           {"test", split.test}};
    return j.dump(2) + "\n";
}

Split split_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        Split s;
        s.mode = j.at("mode").get<std::string>() == "HELD_OUT_PROBLEM" ? SplitMode::HELD_OUT_PROBLEM
                                                                       : SplitMode::RANDOM_TRIPLET;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.train = j.at("train").get<std::vector<std::size_t>>();
        s.validation = j.at("validation").get<std::vector<std::size_t>>();
        s.test = j.at("test").get<std::vector<std::size_t>>();
        return s;
    } catch (const json::exception& e) {
        throw Error(std::string("bad split file: ") + e.what());
    }
}

}  // namespace pomr
