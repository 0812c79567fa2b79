#include "pomr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json_util.hpp"
#include "pomr/evaluator.hpp"
#include "rng.hpp"

namespace pomr {

using detail::json;

std::string_view to_string(ParamGroup group) {
    switch (group) {
        case ParamGroup::PROBLEMS: return "problems";
        case ParamGroup::TARGETS: return "targets";
        case ParamGroup::RELATIONS: return "relations";
        case ParamGroup::SPEC_RELATIONS: return "spec_relations";
        case ParamGroup::HEAD: return "head";
    }
    return "?";
}

ModelParams::ModelParams(std::size_t dim, std::size_t spec_dim, const std::vector<std::string>& problem_ids,
                         const std::vector<Code>& targets)
    : dim_(dim), spec_dim_(spec_dim) {
    if (dim == 0) throw Error("embedding dimension must be positive");
    for (const auto& id : problem_ids) {
        if (!problem_index_.emplace(id, 0).second) throw Error("duplicate problem '" + id + "'");
    }
    for (const auto& code : targets) {
        if (!target_index_.emplace(code, 0).second) throw Error("duplicate target " + code.token());
    }
    std::size_t row = 0;
    for (auto& [_, i] : problem_index_) i = row++;
    row = 0;
    for (auto& [_, i] : target_index_) i = row++;
    group(ParamGroup::PROBLEMS).assign(problem_index_.size() * dim, 0.0);
    group(ParamGroup::TARGETS).assign(target_index_.size() * dim, 0.0);
    group(ParamGroup::RELATIONS).assign(3 * dim, 1.0);
    group(ParamGroup::SPEC_RELATIONS).assign(3 * spec_dim, 1.0);
    group(ParamGroup::HEAD).assign(kHeadSize, 0.0);
    group(ParamGroup::HEAD)[0] = 1.0;
}

std::size_t ModelParams::problem_offset(const std::string& id) const {
    const auto it = problem_index_.find(id);
    if (it == problem_index_.end()) throw Error("no embedding for problem '" + id + "'");
    return it->second * dim_;
}

std::size_t ModelParams::target_offset(const Code& code) const {
    const auto it = target_index_.find(code);
    if (it == target_index_.end()) throw Error("no embedding for target " + code.token());
    return it->second * dim_;
}

std::span<const double> ModelParams::problem(const std::string& id) const {
    return std::span<const double>(groups_[0]).subspan(problem_offset(id), dim_);
}
std::span<double> ModelParams::problem(const std::string& id) {
    return std::span<double>(groups_[0]).subspan(problem_offset(id), dim_);
}
std::span<const double> ModelParams::target(const Code& code) const {
    return std::span<const double>(groups_[1]).subspan(target_offset(code), dim_);
}
std::span<double> ModelParams::target(const Code& code) {
    return std::span<double>(groups_[1]).subspan(target_offset(code), dim_);
}
std::span<const double> ModelParams::relation(RelationKind kind) const {
    return std::span<const double>(groups_[2]).subspan(index_of(kind) * dim_, dim_);
}
std::span<double> ModelParams::relation(RelationKind kind) {
    return std::span<double>(groups_[2]).subspan(index_of(kind) * dim_, dim_);
}
std::span<const double> ModelParams::spec_relation(RelationKind kind) const {
    return std::span<const double>(groups_[3]).subspan(index_of(kind) * spec_dim_, spec_dim_);
}
std::span<double> ModelParams::spec_relation(RelationKind kind) {
    return std::span<double>(groups_[3]).subspan(index_of(kind) * spec_dim_, spec_dim_);
}

GroupArrays ModelParams::zeros_like() const {
    GroupArrays out;
    for (std::size_t g = 0; g < kNumParamGroups; ++g) out[g].assign(groups_[g].size(), 0.0);
    return out;
}

namespace {

double triple_dot(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i] * c[i];
    return s;
}

}  // namespace

double score_emb(const ModelParams& params, const std::string& problem_id, RelationKind relation,
                 const Code& target) {
    return triple_dot(params.problem(problem_id), params.relation(relation), params.target(target));
}

double score_spec(const ModelParams& params, std::span<const double> spec_problem, RelationKind relation,
                  std::span<const double> spec_target) {
    const auto rel = params.spec_relation(relation);
    if (spec_problem.size() != rel.size() || spec_target.size() != rel.size()) {
        throw Error("specialty vector dimension mismatch: expected " + std::to_string(rel.size()));
    }
    return triple_dot(spec_problem, rel, spec_target);
}

ScoreInputs score_inputs(const FeatureTable& table, const std::string& problem_id, const Code& target) {
    const auto values = table.pair(problem_id, target).values();
    return {std::vector<double>(values.begin(), values.end()), table.problem_specialty(problem_id),
            table.target_specialty(target)};
}

double score_full(const ModelParams& params, const std::string& problem_id, RelationKind relation,
                  const Code& target, const ScoreInputs& inputs) {
    const auto theta = params.head();
    if (inputs.features.size() + 2 != theta.size()) {
        throw Error("feature vector has " + std::to_string(inputs.features.size()) + " entries, head expects " +
                    std::to_string(theta.size() - 2));
    }
    double s = theta[0] * score_emb(params, problem_id, relation, target) +
               theta[1] * score_spec(params, inputs.spec_problem, relation, inputs.spec_target);
    for (std::size_t j = 0; j < inputs.features.size(); ++j) s += theta[2 + j] * inputs.features[j];
    return s;
}

double score_triplet(const ModelParams& params, const Triplet& t, const FeatureTable* features) {
    if (features == nullptr) return score_emb(params, t.problem_id, t.relation, t.target);
    return score_full(params, t.problem_id, t.relation, t.target, score_inputs(*features, t.problem_id, t.target));
}

double margin_loss(double pos_score, double neg_score, double margin) {
    return std::max(0.0, margin - pos_score + neg_score);
}

std::string_view to_string(NegativeStrategy s) {
    return s == NegativeStrategy::ANNOTATED ? "ANNOTATED" : "RANDOM_VOCAB";
}

std::string_view to_string(Ablation a) {
    switch (a) {
        case Ablation::FULL: return "FULL";
        case Ablation::FROZEN: return "FROZEN";
        case Ablation::PROBLEM_ONLY: return "PROBLEM_ONLY";
        case Ablation::RELATION_ONLY: return "RELATION_ONLY";
        case Ablation::RELATION_PLUS_TARGET: return "RELATION_PLUS_TARGET";
    }
    return "?";
}

std::optional<NegativeStrategy> parse_negative_strategy(std::string_view text) {
    for (auto s : {NegativeStrategy::ANNOTATED, NegativeStrategy::RANDOM_VOCAB}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

std::optional<Ablation> parse_ablation(std::string_view text) {
    for (auto a : {Ablation::FULL, Ablation::FROZEN, Ablation::PROBLEM_ONLY, Ablation::RELATION_ONLY,
                   Ablation::RELATION_PLUS_TARGET}) {
        if (to_string(a) == text) return a;
    }
    return std::nullopt;
}

std::array<bool, kNumParamGroups> freeze_flags_for(Ablation ablation, bool use_features) {
    // Order: problems, targets, relations, spec_relations, head.
    switch (ablation) {
        case Ablation::FULL: return {false, false, false, false, false};
        case Ablation::FROZEN: return {true, true, true, true, true};
        case Ablation::PROBLEM_ONLY: return {false, true, true, true, true};
        case Ablation::RELATION_ONLY: return {true, true, false, !use_features, true};
        case Ablation::RELATION_PLUS_TARGET: return {true, false, false, true, true};
    }
    return {true, true, true, true, true};
}

void TrainConfig::validate() const {
    if (!(margin > 0.0)) throw Error("margin must be positive");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (batch_size == 0) throw Error("batch size must be positive");
    if (patience == 0) throw Error("patience must be >= 1");
    if (negatives == NegativeStrategy::RANDOM_VOCAB && negatives_per_positive == 0) {
        throw Error("negatives_per_positive must be positive");
    }
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string{};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("<train config>", line_no, "expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            if (key == "margin") {
                base.margin = std::stod(value);
            } else if (key == "learning_rate") {
                base.learning_rate = std::stod(value);
            } else if (key == "batch_size") {
                base.batch_size = std::stoul(value);
            } else if (key == "max_epochs") {
                base.max_epochs = std::stoul(value);
            } else if (key == "patience") {
                base.patience = std::stoul(value);
            } else if (key == "negative_strategy") {
                const auto s = parse_negative_strategy(value);
                if (!s) throw Error("unknown negative strategy '" + value + "'");
                base.negatives = *s;
            } else if (key == "negatives_per_positive") {
                base.negatives_per_positive = std::stoul(value);
            } else if (key == "seed") {
                base.seed = std::stoull(value);
            } else if (key == "ablation") {
                const auto a = parse_ablation(value);
                if (!a) throw Error("unknown ablation '" + value + "'");
                base.ablation = *a;
            } else if (key == "use_features") {
                if (value != "true" && value != "false") throw Error("use_features must be true or false");
                base.use_features = value == "true";
            } else {
                throw Error("unknown key '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw ParseError("<train config>", line_no, "bad value for '" + key + "': '" + value + "'");
        } catch (const Error& e) {
            throw ParseError("<train config>", line_no, e.what());
        }
    }
    base.validate();
    return base;
}

std::string train_config_to_text(const TrainConfig& c) {
    std::string out;
    out += "margin = " + format_double(c.margin) + "\n";
    out += "learning_rate = " + format_double(c.learning_rate) + "\n";
    out += "batch_size = " + std::to_string(c.batch_size) + "\n";
    out += "max_epochs = " + std::to_string(c.max_epochs) + "\n";
    out += "patience = " + std::to_string(c.patience) + "\n";
    out += "negative_strategy = " + std::string(to_string(c.negatives)) + "\n";
    out += "negatives_per_positive = " + std::to_string(c.negatives_per_positive) + "\n";
    out += "seed = " + std::to_string(c.seed) + "\n";
    out += "ablation = " + std::string(to_string(c.ablation)) + "\n";
    out += std::string("use_features = ") + (c.use_features ? "true" : "false") + "\n";
    return out;
}

double batch_loss(const ModelParams& params, std::span<const TrainingPair> batch, const FeatureTable* features,
                  double margin) {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    for (const auto& pair : batch) {
        total += margin_loss(score_triplet(params, pair.positive, features),
                             score_triplet(params, pair.negative, features), margin);
    }
    return total / static_cast<double>(batch.size());
}

namespace {

/// Adds sign * scale * ∂score/∂params for one triplet into `grads`.
void accumulate_score_gradient(const ModelParams& params, const Triplet& t, const FeatureTable* features,
                               double scale, GroupArrays& grads) {
    const auto es = params.problem(t.problem_id);
    const auto er = params.relation(t.relation);
    const auto et = params.target(t.target);
    const std::size_t dim = params.dim();
    const std::size_t ps = params.problem_offset(t.problem_id);
    const std::size_t ts = params.target_offset(t.target);
    const std::size_t rs = index_of(t.relation) * dim;

    double emb_scale = scale;
    if (features != nullptr) {
        const auto inputs = score_inputs(*features, t.problem_id, t.target);
        const auto theta = params.head();
        emb_scale = scale * theta[0];

        const auto vr = params.spec_relation(t.relation);
        const std::size_t m = params.spec_dim();
        const std::size_t vs = index_of(t.relation) * m;
        auto& g_spec = grads[3];
        for (std::size_t i = 0; i < m; ++i) g_spec[vs + i] += scale * theta[1] * inputs.spec_problem[i] * inputs.spec_target[i];

        auto& g_head = grads[4];
        g_head[0] += scale * triple_dot(es, er, et);
        g_head[1] += scale * triple_dot(inputs.spec_problem, vr, inputs.spec_target);
        for (std::size_t j = 0; j < inputs.features.size(); ++j) g_head[2 + j] += scale * inputs.features[j];
    }
    auto& g_p = grads[0];
    auto& g_t = grads[1];
    auto& g_r = grads[2];
    for (std::size_t i = 0; i < dim; ++i) {
        g_p[ps + i] += emb_scale * er[i] * et[i];
        g_r[rs + i] += emb_scale * es[i] * et[i];
        g_t[ts + i] += emb_scale * es[i] * er[i];
    }
}

}  // namespace

LossAndGradients gradients(const ModelParams& params, std::span<const TrainingPair> batch,
                           const FeatureTable* features, double margin) {
    LossAndGradients out;
    out.grads = params.zeros_like();
    if (batch.empty()) return out;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& pair : batch) {
        const double pos = score_triplet(params, pair.positive, features);
        const double neg = score_triplet(params, pair.negative, features);
        const double hinge = margin - pos + neg;
        if (hinge <= 0.0) continue;
        total += hinge;
        accumulate_score_gradient(params, pair.positive, features, -inv_n, out.grads);
        accumulate_score_gradient(params, pair.negative, features, inv_n, out.grads);
    }
    out.loss = total * inv_n;
    for (auto g : kAllParamGroups) {
        if (params.frozen(g)) std::fill(out.grads[static_cast<std::size_t>(g)].begin(),
                                        out.grads[static_cast<std::size_t>(g)].end(), 0.0);
    }
    return out;
}

AdamState AdamState::zeros_for(const ModelParams& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
}

void adam_step(ModelParams& params, const GroupArrays& grads, AdamState& state, const AdamConfig& config) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (auto g : kAllParamGroups) {
        if (params.frozen(g)) continue;
        const auto gi = static_cast<std::size_t>(g);
        auto& p = params.group(g);
        const auto& grad = grads[gi];
        auto& m = state.m[gi];
        auto& v = state.v[gi];
        if (grad.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
            throw Error("adam_step: shape mismatch in group " + std::string(to_string(g)));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

NegativeSampler::NegativeSampler(NegativeStrategy strategy, const KnowledgeBase& kb,
                                 std::span<const std::size_t> train, const Vocabulary* vocabulary,
                                 std::size_t negatives_per_positive, std::uint64_t seed)
    : strategy_(strategy), vocabulary_(vocabulary), per_positive_(negatives_per_positive), rng_(seed) {
    const auto& triplets = kb.triplets();
    for (auto i : train) {
        const auto& t = triplets.at(i);
        PairId id{t.problem_id, t.relation};
        if (t.positive()) {
            positives_[id].insert(t.target);
        } else {
            annotated_[id].push_back(t);
        }
    }
    for (auto& [_, negs] : annotated_) detail::shuffle(negs.begin(), negs.end(), rng_);
    if (strategy_ == NegativeStrategy::RANDOM_VOCAB) {
        if (vocabulary_ == nullptr) throw Error("RANDOM_VOCAB negatives need a vocabulary");
        for (auto kind : kAllRelations) {
            const auto& codes = vocabulary_->codes(kind);
            vocab_codes_[index_of(kind)].assign(codes.begin(), codes.end());
        }
    }
}

std::vector<Triplet> NegativeSampler::sample(const Triplet& positive) {
    const PairId id{positive.problem_id, positive.relation};
    std::vector<Triplet> out;
    if (strategy_ == NegativeStrategy::ANNOTATED) {
        const auto it = annotated_.find(id);
        if (it == annotated_.end() || it->second.empty()) {
            ++skipped_;
            return out;
        }
        auto& cursor = cursor_[id];
        out.push_back(it->second[cursor % it->second.size()]);
        ++cursor;
        return out;
    }
    const auto& known = positives_[id];
    std::vector<const Code*> eligible;
    for (const auto& c : vocab_codes_[index_of(positive.relation)]) {
        if (!known.contains(c) && c != positive.target) eligible.push_back(&c);
    }
    if (eligible.empty()) {
        ++skipped_;
        return out;
    }
    for (std::size_t i = 0; i < per_positive_; ++i) {
        const auto* code = eligible[detail::uniform_index(rng_, eligible.size())];
        Triplet neg{positive.problem_id, positive.relation, *code, Label::NEGATIVE, positive.round};
        out.push_back(std::move(neg));
    }
    return out;
}

TrainResult train(const KnowledgeBase& kb, const Split& split, const ModelParams& initial,
                  const FeatureTable* features, const Vocabulary* vocabulary, const TrainConfig& config) {
    config.validate();
    if (split.train.empty()) throw Error("training split is empty");
    const FeatureTable* active_features = config.use_features ? features : nullptr;
    if (config.use_features && features == nullptr) throw Error("use_features is set but no features were given");

    ModelParams params = initial;
    const auto flags = freeze_flags_for(config.ablation, config.use_features);
    for (auto g : kAllParamGroups) params.set_frozen(g, flags[static_cast<std::size_t>(g)]);

    auto validate = [&](const ModelParams& p) {
        return evaluate(model_scorer(p, active_features), kb, split.validation, TiePolicy::STRICT).overall;
    };

    TrainResult result;
    if (config.ablation == Ablation::FROZEN) {
        const auto m = validate(params);
        result.history.push_back({0, 0.0, m.mr, m.mrr});
        result.params = params;
        return result;
    }

    std::vector<Triplet> positives;
    for (auto i : split.train) {
        if (kb.triplets().at(i).positive()) positives.push_back(kb.triplets()[i]);
    }
    if (positives.empty()) throw Error("training split has no positives");

    std::mt19937_64 rng(config.seed);
    NegativeSampler sampler(config.negatives, kb, split.train, vocabulary, config.negatives_per_positive,
                            rng());
    AdamState state = AdamState::zeros_for(params);
    const AdamConfig adam{config.learning_rate};

    double best_mr = std::numeric_limits<double>::infinity();
    bool have_best = false;
    std::size_t since_best = 0;
    std::vector<TrainingPair> pairs;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        detail::shuffle(positives.begin(), positives.end(), rng);
        pairs.clear();
        for (const auto& pos : positives) {
            for (auto& neg : sampler.sample(pos)) pairs.push_back({pos, std::move(neg)});
        }
        if (pairs.empty()) throw Error("no training pairs: every positive lacks negatives");
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < pairs.size(); start += config.batch_size) {
            const auto n = std::min(config.batch_size, pairs.size() - start);
            const std::span<const TrainingPair> batch(pairs.data() + start, n);
            const auto lg = gradients(params, batch, active_features, config.margin);
            epoch_loss += lg.loss * static_cast<double>(n);
            adam_step(params, lg.grads, state, adam);
        }
        epoch_loss /= static_cast<double>(pairs.size());
        const auto m = validate(params);
        result.history.push_back({epoch, epoch_loss, m.mr, m.mrr});

        if (m.count == 0) {
            result.params = params;
            result.best_epoch = epoch;
            have_best = true;
            continue;
        }
        if (!have_best || m.mr < best_mr) {
            best_mr = m.mr;
            result.params = params;
            result.best_epoch = epoch;
            have_best = true;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    result.skipped_positives = sampler.skipped();
    return result;
}

std::string_view to_string(InitSource s) {
    switch (s) {
        case InitSource::RANDOM: return "RANDOM";
        case InitSource::EXTERNAL: return "EXTERNAL";
        case InitSource::SITE_SPECIFIC: return "SITE_SPECIFIC";
        case InitSource::EXTERNAL_KNN: return "EXTERNAL_KNN";
    }
    return "?";
}

std::optional<InitSource> parse_init_source(std::string_view text) {
    for (auto s : {InitSource::RANDOM, InitSource::EXTERNAL, InitSource::SITE_SPECIFIC, InitSource::EXTERNAL_KNN}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

ModelParams init_model(const KnowledgeBase& kb, const Vocabulary& vocab, std::size_t spec_dim,
                       const EmbeddingTable* external, const EmbeddingTable* internal, const InitConfig& config,
                       InitReport* report) {
    const bool wants_external = config.source == InitSource::EXTERNAL || config.source == InitSource::EXTERNAL_KNN;
    if (wants_external && external == nullptr) throw Error("init source needs an external embedding table");
    if ((config.source == InitSource::SITE_SPECIFIC || config.source == InitSource::EXTERNAL_KNN) &&
        internal == nullptr) {
        throw Error("init source needs a site-specific embedding table");
    }
    const EmbeddingTable* primary = nullptr;
    if (wants_external) primary = external;
    if (config.source == InitSource::SITE_SPECIFIC) primary = internal;
    const std::size_t dim = primary != nullptr ? primary->dim() : config.dim;
    if (config.source == InitSource::EXTERNAL_KNN && internal->dim() == 0) throw Error("empty internal table");

    std::set<Code> target_set;
    for (auto kind : kAllRelations) target_set.insert(vocab.codes(kind).begin(), vocab.codes(kind).end());
    for (const auto& t : kb.triplets()) target_set.insert(t.target);
    const std::vector<Code> targets(target_set.begin(), target_set.end());

    ModelParams params(dim, spec_dim, kb.problem_ids(), targets);
    std::mt19937_64 rng(config.seed);
    InitReport rep;

    for (const auto& code : targets) {
        auto row = params.target(code);
        const Vector* v = primary != nullptr ? primary->find(code) : nullptr;
        Vector fill;
        if (v != nullptr) {
            fill = *v;
            ++rep.targets_from_table;
        } else if (config.source == InitSource::EXTERNAL_KNN) {
            auto r = knn_transfer(code, *internal, *external, config.knn_k, rng);
            (r.random ? rep.targets_random : rep.targets_from_knn) += 1;
            fill = std::move(r.vector);
        } else {
            fill = random_vector(dim, rng);
            ++rep.targets_random;
        }
        std::copy(fill.begin(), fill.end(), row.begin());
    }

    std::map<Code, std::size_t> freq;
    for (const auto& [_, problem] : kb.problems()) {
        for (const auto& code : problem.definition) freq.emplace(code, vocab.frequency(code));
    }
    for (const auto& id : kb.problem_ids()) {
        auto row = params.problem(id);
        Vector fill;
        if (primary != nullptr) {
            const auto weighting = wants_external ? ProblemWeighting::FREQUENCY : ProblemWeighting::UNIFORM;
            auto r = init_problem_embedding(*kb.find_problem(id), *primary, weighting, freq, rng);
            if (r.random) ++rep.problems_random;
            fill = std::move(r.vector);
        } else {
            fill = random_vector(dim, rng);
            ++rep.problems_random;
        }
        std::copy(fill.begin(), fill.end(), row.begin());
    }
    if (report != nullptr) *report = rep;
    return params;
}

std::string checkpoint_to_json(const ModelParams& params, const TrainConfig* config,
                               const std::vector<EpochRecord>* history) {
    json j;
    j["schema_version"] = 1;
    j["dim"] = params.dim();
    j["spec_dim"] = params.spec_dim();
    json problems = json::object();
    for (const auto& [id, _] : params.problem_index()) {
        const auto row = params.problem(id);
        problems[id] = std::vector<double>(row.begin(), row.end());
    }
    json targets = json::object();
    for (const auto& [code, _] : params.target_index()) {
        const auto row = params.target(code);
        targets[code.token()] = std::vector<double>(row.begin(), row.end());
    }
    json relations = json::object();
    json spec_relations = json::object();
    for (auto kind : kAllRelations) {
        const auto r = params.relation(kind);
        relations[std::string(to_string(kind))] = std::vector<double>(r.begin(), r.end());
        const auto s = params.spec_relation(kind);
        spec_relations[std::string(to_string(kind))] = std::vector<double>(s.begin(), s.end());
    }
    j["problems"] = std::move(problems);
    j["targets"] = std::move(targets);
    j["relations"] = std::move(relations);
    j["spec_relations"] = std::move(spec_relations);
    j["head"] = params.group(ParamGroup::HEAD);
    json freeze = json::object();
    for (auto g : kAllParamGroups) freeze[std::string(to_string(g))] = params.frozen(g);
    j["freeze"] = std::move(freeze);
    if (config != nullptr) {
        j["config"] = {{"margin", config->margin},
                       {"learning_rate", config->learning_rate},
                       {"batch_size", config->batch_size},
                       {"max_epochs", config->max_epochs},
                       {"patience", config->patience},
                       {"negative_strategy", std::string(to_string(config->negatives))},
                       {"negatives_per_positive", config->negatives_per_positive},
                       {"seed", config->seed},
                       {"ablation", std::string(to_string(config->ablation))},
                       {"use_features", config->use_features}};
    }
    if (history != nullptr) {
        json h = json::array();
        for (const auto& r : *history) {
            h.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"val_mr", r.val_mr}, {"val_mrr", r.val_mrr}});
        }
        j["history"] = std::move(h);
    }
    return j.dump(1) + "\n";
}

ModelParams checkpoint_from_json(const std::string& text, TrainConfig* config, std::vector<EpochRecord>* history) {
    try {
        const auto j = json::parse(text);
        const auto dim = j.at("dim").get<std::size_t>();
        const auto spec_dim = j.at("spec_dim").get<std::size_t>();
        std::vector<std::string> problem_ids;
        for (const auto& [id, _] : j.at("problems").items()) problem_ids.push_back(id);
        std::vector<Code> targets;
        for (const auto& [token, _] : j.at("targets").items()) {
            const auto code = Code::from_token(token);
            if (!code) throw Error("bad target token '" + token + "'");
            targets.push_back(*code);
        }
        ModelParams params(dim, spec_dim, problem_ids, targets);
        auto fill = [](std::span<double> dst, const json& src, const std::string& what) {
            const auto v = src.get<std::vector<double>>();
            if (v.size() != dst.size()) throw Error("wrong length for " + what);
            std::copy(v.begin(), v.end(), dst.begin());
        };
        for (const auto& [id, v] : j.at("problems").items()) fill(params.problem(id), v, "problem " + id);
        for (const auto& [token, v] : j.at("targets").items()) fill(params.target(*Code::from_token(token)), v, token);
        for (auto kind : kAllRelations) {
            const std::string name(to_string(kind));
            fill(params.relation(kind), j.at("relations").at(name), "relation " + name);
            fill(params.spec_relation(kind), j.at("spec_relations").at(name), "spec relation " + name);
        }
        fill(params.head(), j.at("head"), "head");
        if (j.contains("freeze")) {
            for (auto g : kAllParamGroups) params.set_frozen(g, j.at("freeze").value(std::string(to_string(g)), false));
        }
        if (config != nullptr && j.contains("config")) {
            const auto& c = j.at("config");
            TrainConfig out;
            out.margin = c.at("margin").get<double>();
            out.learning_rate = c.at("learning_rate").get<double>();
            out.batch_size = c.at("batch_size").get<std::size_t>();
            out.max_epochs = c.at("max_epochs").get<std::size_t>();
            out.patience = c.at("patience").get<std::size_t>();
            out.negatives = parse_negative_strategy(c.at("negative_strategy").get<std::string>()).value();
            out.negatives_per_positive = c.at("negatives_per_positive").get<std::size_t>();
            out.seed = c.at("seed").get<std::uint64_t>();
            out.ablation = parse_ablation(c.at("ablation").get<std::string>()).value();
            out.use_features = c.at("use_features").get<bool>();
            *config = out;
        }
        if (history != nullptr && j.contains("history")) {
            history->clear();
            for (const auto& r : j.at("history")) {
                history->push_back({r.at("epoch").get<std::size_t>(), r.at("loss").get<double>(),
                                    r.at("val_mr").is_null() ? std::nan("") : r.at("val_mr").get<double>(),
                                    r.at("val_mrr").is_null() ? std::nan("") : r.at("val_mrr").get<double>()});
            }
        }
        return params;
    } catch (const json::exception& e) {
        throw Error(std::string("bad checkpoint: ") + e.what());
    } catch (const std::bad_optional_access&) {
        throw Error("bad checkpoint: unknown enum value in config");
    }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const TrainConfig* config,
                     const std::vector<EpochRecord>* history) {
    detail::write_file(path.string(), checkpoint_to_json(params, config, history));
}

ModelParams load_checkpoint(const std::filesystem::path& path, TrainConfig* config,
                            std::vector<EpochRecord>* history) {
    return checkpoint_from_json(detail::read_file(path.string()), config, history);
}

}  // namespace pomr
