#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pomr/encounters.hpp"

namespace pomr {

using Vector = std::vector<double>;

enum class EmbeddingSource { EXTERNAL, SITE_SPECIFIC, COMBINED };

/// Token -> vector, all of one dimension. Tokens are Code::token() strings.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t dim, EmbeddingSource source) : dim_(dim), source_(source) {}

    std::size_t dim() const { return dim_; }
    EmbeddingSource source() const { return source_; }
    std::size_t size() const { return vectors_.size(); }

    /// Throws on a dimension mismatch, a non-finite entry or a duplicate token.
    void add(const std::string& token, Vector v);
    const Vector* find(const std::string& token) const;
    const Vector* find(const Code& code) const { return find(code.token()); }
    bool contains(const std::string& token) const { return vectors_.contains(token); }

    const std::map<std::string, Vector>& vectors() const { return vectors_; }

    bool operator==(const EmbeddingTable&) const = default;

private:
    std::size_t dim_ = 0;
    EmbeddingSource source_ = EmbeddingSource::EXTERNAL;
    std::map<std::string, Vector> vectors_;
};

/// word2vec text format: "N dim" header then "token v1 ... vdim" lines.
/// When `dim` is nonzero the header must agree with it.
EmbeddingTable parse_embeddings(const std::string& text, std::size_t dim = 0,
                                const std::string& source = "<embeddings>");
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim = 0);
std::string serialize_embeddings(const EmbeddingTable& table);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

double dot(const Vector& a, const Vector& b);
double cosine(const Vector& a, const Vector& b);

/// Uniform in [-0.5/dim, 0.5/dim].
Vector random_vector(std::size_t dim, std::mt19937_64& rng);

struct SkipGramConfig {
    std::size_t dim = 300;
    std::size_t epochs = 5;
    std::size_t negatives = 5;
    double learning_rate = 0.025;
    std::size_t min_count = 5;
    /// Encounters with more codes are subsampled to this many per epoch.
    std::size_t max_codes_per_encounter = 64;
    std::uint64_t seed = 1;
};

/// Skip-gram with negative sampling where every code of an encounter is
/// context for every other code of that encounter. Returns input vectors for
/// every code meeting min_count.
EmbeddingTable train_skipgram(const EncounterStore& store, const SkipGramConfig& config);

enum class ProblemWeighting { FREQUENCY, UNIFORM };

struct InitResult {
    Vector vector;
    /// No usable input; vector is a random initialization.
    bool random = false;
    /// k-NN only: fewer than k eligible neighbours were available.
    bool short_of_k = false;
};

/// Convex combination of the vectors of the definition codes that have one.
/// FREQUENCY weights are the codes' counts normalized over those codes.
InitResult init_problem_embedding(const Problem& problem, const EmbeddingTable& table,
                                  ProblemWeighting weighting, const std::map<Code, std::size_t>& frequencies,
                                  std::mt19937_64& rng);

inline constexpr std::size_t kDefaultKnn = 5;

/// Mean of the external vectors of the k internal-space nearest neighbours
/// (cosine) of `missing` that exist in `external`.
InitResult knn_transfer(const Code& missing, const EmbeddingTable& internal, const EmbeddingTable& external,
                        std::size_t k, std::mt19937_64& rng);

struct IntersectionRow {
    RelationKind kind;
    std::size_t internal_count = 0;
    std::size_t external_count = 0;
    std::size_t shared = 0;
    double fraction = 0.0;  // shared / internal_count
};

/// External codes are assigned a kind by coding system: RXNORM medication,
/// CPT procedure, LOINC lab.
std::vector<IntersectionRow> vocab_intersection(const Vocabulary& internal, const EmbeddingTable& external);
std::string intersection_to_csv(const std::vector<IntersectionRow>& rows);

}  // namespace pomr
