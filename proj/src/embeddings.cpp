#include "pomr/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json_util.hpp"
#include "rng.hpp"

namespace pomr {

void EmbeddingTable::add(const std::string& token, Vector v) {
    if (v.size() != dim_) {
        throw Error("vector for '" + token + "' has " + std::to_string(v.size()) + " entries, expected " +
                    std::to_string(dim_));
    }
    for (double x : v) {
        if (!std::isfinite(x)) throw Error("vector for '" + token + "' has a non-finite entry");
    }
    if (!vectors_.emplace(token, std::move(v)).second) throw Error("duplicate token '" + token + "'");
}

const Vector* EmbeddingTable::find(const std::string& token) const {
    const auto it = vectors_.find(token);
    return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embeddings(const std::string& text, std::size_t dim, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t declared_n = 0;
    std::size_t declared_dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    {
        std::istringstream hdr(line);
        if (!(hdr >> declared_n >> declared_dim) || declared_dim == 0) {
            throw ParseError(source, line_no, "expected header 'N dim'");
        }
    }
    if (dim != 0 && dim != declared_dim) {
        throw ParseError(source, line_no,
                         "header dim " + std::to_string(declared_dim) + " != expected " + std::to_string(dim));
    }
    EmbeddingTable table(declared_dim, EmbeddingSource::EXTERNAL);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        std::string token;
        row >> token;
        Vector v;
        std::string field;
        while (row >> field) {
            double x = 0.0;
            const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
            if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
                throw ParseError(source, line_no, "non-numeric field '" + field + "'");
            }
            v.push_back(x);
        }
        try {
            table.add(token, std::move(v));
        } catch (const Error& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    if (table.size() != declared_n) {
        throw ParseError(source, 0,
                         "header declares " + std::to_string(declared_n) + " vectors, found " +
                             std::to_string(table.size()));
    }
    return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim) {
    return parse_embeddings(detail::read_file(path.string()), dim, path.string());
}

std::string serialize_embeddings(const EmbeddingTable& table) {
    std::string out = std::to_string(table.size()) + " " + std::to_string(table.dim()) + "\n";
    for (const auto& [token, v] : table.vectors()) {
        out += token;
        for (double x : v) {
            out += ' ';
            out += format_double(x);
        }
        out += '\n';
    }
    return out;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    detail::write_file(path.string(), serialize_embeddings(table));
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw Error("dot: dimension mismatch");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double cosine(const Vector& a, const Vector& b) {
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

Vector random_vector(std::size_t dim, std::mt19937_64& rng) {
    Vector v(dim);
    const double half = 0.5 / static_cast<double>(dim);
    for (auto& x : v) x = (detail::uniform01(rng) * 2.0 - 1.0) * half;
    return v;
}

namespace {

double sigmoid(double x) {
    if (x > 30.0) return 1.0;
    if (x < -30.0) return 0.0;
    return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

EmbeddingTable train_skipgram(const EncounterStore& store, const SkipGramConfig& config) {
    if (store.empty()) throw Error("cannot train skip-gram on an empty store");
    if (config.dim == 0) throw Error("skip-gram dim must be positive");

    std::vector<Code> codes;
    std::map<Code, std::size_t> index;
    for (const auto& [code, n] : store.occurrence_counts()) {
        if (n >= config.min_count) {
            index.emplace(code, codes.size());
            codes.push_back(code);
        }
    }
    EmbeddingTable table(config.dim, EmbeddingSource::SITE_SPECIFIC);
    if (codes.empty()) return table;

    // Per-encounter code lists, restricted to the vocabulary.
    std::vector<std::vector<std::size_t>> contexts;
    for (const auto& e : store.encounters()) {
        std::set<std::size_t> ids;
        for (const auto& d : e.diagnoses) {
            if (auto it = index.find(d); it != index.end()) ids.insert(it->second);
        }
        for (const auto& o : e.orders) {
            if (auto it = index.find(o.code); it != index.end()) ids.insert(it->second);
        }
        if (!ids.empty()) contexts.emplace_back(ids.begin(), ids.end());
    }

    std::vector<double> cumulative(codes.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        acc += std::pow(static_cast<double>(store.occurrences(codes[i])), 0.75);
        cumulative[i] = acc;
    }
    std::mt19937_64 rng(config.seed);
    auto draw_negative = [&]() {
        const double u = detail::uniform01(rng) * acc;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), codes.size() - 1);
    };

    const std::size_t dim = config.dim;
    std::vector<double> in(codes.size() * dim);
    std::vector<double> out(codes.size() * dim, 0.0);
    const double half = 0.5 / static_cast<double>(dim);
    for (auto& x : in) x = (detail::uniform01(rng) * 2.0 - 1.0) * half;

    std::size_t total_pairs = 0;
    for (const auto& c : contexts) {
        const auto n = std::min(c.size(), config.max_codes_per_encounter);
        total_pairs += n * (n - 1);
    }
    total_pairs *= config.epochs;
    std::size_t done_pairs = 0;

    std::vector<double> grad_in(dim);
    std::vector<std::size_t> order(contexts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        detail::shuffle(order.begin(), order.end(), rng);
        for (auto ci : order) {
            std::vector<std::size_t> ctx = contexts[ci];
            if (ctx.size() > config.max_codes_per_encounter) {
                detail::shuffle(ctx.begin(), ctx.end(), rng);
                ctx.resize(config.max_codes_per_encounter);
            }
            for (auto center : ctx) {
                for (auto context : ctx) {
                    if (context == center) continue;
                    const double progress =
                        total_pairs == 0 ? 0.0 : static_cast<double>(done_pairs) / static_cast<double>(total_pairs);
                    const double alpha = config.learning_rate * std::max(1e-4, 1.0 - progress);
                    ++done_pairs;
                    std::fill(grad_in.begin(), grad_in.end(), 0.0);
                    double* vin = &in[center * dim];
                    for (std::size_t s = 0; s <= config.negatives; ++s) {
                        std::size_t target = context;
                        double label = 1.0;
                        if (s > 0) {
                            target = draw_negative();
                            if (target == context) continue;
                            label = 0.0;
                        }
                        double* vout = &out[target * dim];
                        double f = 0.0;
                        for (std::size_t d = 0; d < dim; ++d) f += vin[d] * vout[d];
                        const double g = (label - sigmoid(f)) * alpha;
                        for (std::size_t d = 0; d < dim; ++d) {
                            grad_in[d] += g * vout[d];
                            vout[d] += g * vin[d];
                        }
                    }
                    for (std::size_t d = 0; d < dim; ++d) vin[d] += grad_in[d];
                }
            }
        }
    }
    for (std::size_t i = 0; i < codes.size(); ++i) {
        table.add(codes[i].token(), Vector(in.begin() + i * dim, in.begin() + (i + 1) * dim));
    }
    return table;
}

InitResult init_problem_embedding(const Problem& problem, const EmbeddingTable& table,
                                  ProblemWeighting weighting, const std::map<Code, std::size_t>& frequencies,
                                  std::mt19937_64& rng) {
    std::vector<std::pair<const Vector*, double>> parts;
    for (const auto& code : problem.definition) {
        const auto* v = table.find(code);
        if (v == nullptr) continue;
        double w = 1.0;
        if (weighting == ProblemWeighting::FREQUENCY) {
            const auto it = frequencies.find(code);
            w = it == frequencies.end() ? 0.0 : static_cast<double>(it->second);
        }
        parts.emplace_back(v, w);
    }
    if (parts.empty()) return {random_vector(table.dim(), rng), true, false};
    double total = 0.0;
    for (const auto& [_, w] : parts) total += w;
    if (total == 0.0) {
        // No frequency information for any usable code: fall back to a plain mean.
        for (auto& [_, w] : parts) w = 1.0;
        total = static_cast<double>(parts.size());
    }
    Vector out(table.dim(), 0.0);
    for (const auto& [v, w] : parts) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (w / total) * (*v)[i];
    }
    return {std::move(out), false, false};
}

InitResult knn_transfer(const Code& missing, const EmbeddingTable& internal, const EmbeddingTable& external,
                        std::size_t k, std::mt19937_64& rng) {
    const auto* query = internal.find(missing);
    if (query == nullptr || k == 0) return {random_vector(external.dim(), rng), true, false};
    const auto missing_token = missing.token();
    std::vector<std::pair<double, const std::string*>> scored;
    for (const auto& [token, v] : internal.vectors()) {
        if (token == missing_token || !external.contains(token)) continue;
        scored.emplace_back(cosine(*query, v), &token);
    }
    if (scored.empty()) return {random_vector(external.dim(), rng), true, true};
    const bool short_of_k = scored.size() < k;
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return *a.second < *b.second;
                      });
    Vector out(external.dim(), 0.0);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& ev = *external.find(*scored[i].second);
        for (std::size_t d = 0; d < out.size(); ++d) out[d] += ev[d];
    }
    for (auto& x : out) x /= static_cast<double>(take);
    return {std::move(out), false, short_of_k};
}

std::vector<IntersectionRow> vocab_intersection(const Vocabulary& internal, const EmbeddingTable& external) {
    auto external_system = [](RelationKind kind) {
        switch (kind) {
            case RelationKind::MEDICATION: return CodeSystem::RXNORM;
            case RelationKind::PROCEDURE: return CodeSystem::CPT;
            case RelationKind::LAB: return CodeSystem::LOINC;
        }
        return CodeSystem::RXNORM;
    };
    std::vector<IntersectionRow> rows;
    for (auto kind : kAllRelations) {
        IntersectionRow row{kind};
        row.internal_count = internal.codes(kind).size();
        for (const auto& [token, _] : external.vectors()) {
            const auto code = Code::from_token(token);
            if (code && code->system() == external_system(kind)) ++row.external_count;
        }
        for (const auto& code : internal.codes(kind)) {
            if (external.contains(code.token())) ++row.shared;
        }
        row.fraction = row.internal_count == 0
                           ? 0.0
                           : static_cast<double>(row.shared) / static_cast<double>(row.internal_count);
        rows.push_back(row);
    }
    return rows;
}

std::string intersection_to_csv(const std::vector<IntersectionRow>& rows) {
    std::string out = "vocab,statistic,value\n";
    auto name = [](RelationKind k) {
        switch (k) {
            case RelationKind::MEDICATION: return std::string("Medication");
            case RelationKind::PROCEDURE: return std::string("Procedure");
            case RelationKind::LAB: return std::string("Lab");
        }
        return std::string();
    };
    for (const auto& r : rows) out += "Site-specific,# " + name(r.kind) + " codes," + std::to_string(r.internal_count) + "\n";
    for (const auto& r : rows) out += "External,# " + name(r.kind) + " codes," + std::to_string(r.external_count) + "\n";
    for (const auto& r : rows) {
        out += "Intersection,Fraction of site-specific " + name(r.kind) + " codes," + format_double(r.fraction) + "\n";
    }
    return out;
}

}  // namespace pomr
