#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pomr/baseline.hpp"
#include "pomr/embeddings.hpp"
#include "pomr/encounters.hpp"
#include "pomr/evaluator.hpp"
#include "pomr/features.hpp"
#include "pomr/kb.hpp"
#include "pomr/model.hpp"
#include "pomr/service.hpp"
#include "pomr/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pomr;

namespace {

struct Globals {
    std::string data_dir;
    std::uint64_t seed = 1;
    bool json_out = false;
    unsigned threads = 1;
    std::string config;
};

Globals g;

fs::path path_or(const std::string& given, const std::string& name) {
    return given.empty() ? fs::path(g.data_dir) / name : fs::path(given);
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

/// Prints `summary` as JSON with --json, otherwise as key: value lines.
void report(const json& summary) {
    if (g.json_out) {
        std::cout << summary.dump(1) << "\n";
        return;
    }
    for (const auto& [k, v] : summary.items()) {
        std::cout << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    }
}

Vocabulary vocab_or_build(const std::string& vocab_path, const std::string& encounters_path, std::size_t min_count) {
    const auto p = path_or(vocab_path, "vocab.json");
    if (fs::exists(p)) return vocabulary_from_json(read_text(p));
    if (!vocab_path.empty()) throw Error("missing vocabulary " + p.string());
    return build_vocabulary(ingest(path_or(encounters_path, "encounters.jsonl")), min_count);
}

std::optional<FeatureTable> features_if_present(const std::string& dir) {
    const auto p = path_or(dir, "features");
    if (fs::exists(p / "pair_features.csv")) return load_features(p);
    if (!dir.empty()) throw Error("missing features in " + p.string());
    return std::nullopt;
}

RelationKind relation_or_throw(const std::string& text) {
    const auto r = parse_relation(text);
    if (!r) throw Error("unknown kind '" + text + "' (MEDICATION, PROCEDURE or LAB)");
    return *r;
}

json candidates_json(const std::string& pid, RelationKind rel, int round, const std::vector<Candidate>& list) {
    json arr = json::array();
    for (const auto& c : list) {
        arr.push_back({{"code", {{"id", c.code.id()}, {"system", std::string(to_string(c.code.system()))}}},
                       {"score", c.score}});
    }
    return {{"problem", pid}, {"relation", std::string(to_string(rel))}, {"round", round}, {"candidates", arr}};
}

/// Latest label per key for a KB file or an annotation event log.
std::map<TripletKey, int> read_labels(const fs::path& path) {
    const auto text = read_text(path);
    std::map<TripletKey, int> out;
    bool is_kb = false;
    try {
        const auto j = json::parse(text);
        is_kb = j.is_object() && j.contains("triplets");
    } catch (const json::exception&) {
    }
    if (is_kb) {
        const auto kb = parse_kb(text, path.string());
        for (const auto& t : kb.triplets()) out[key_of(t)] = t.positive() ? 1 : 0;
        return out;
    }
    for (const auto& ev : read_events(path)) out[key_of(ev.triplet)] = ev.triplet.positive() ? 1 : 0;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pomr: problem-oriented record knowledge base completion"};
    app.require_subcommand(1);
    if (const char* env = std::getenv("POMR_DATA_DIR")) g.data_dir = env;
    if (g.data_dir.empty()) g.data_dir = ".";
    app.add_option("--data-dir", g.data_dir, "Default directory for inputs and outputs (env POMR_DATA_DIR)");
    app.add_option("--seed", g.seed, "Seed for every random choice");
    app.add_flag("--json", g.json_out, "Machine-readable JSON on stdout");
    app.add_option("--threads", g.threads, "Worker threads for feature extraction")->check(CLI::Range(1u, 256u));
    app.add_option("--config", g.config, "Training config file (key = value); overrides flags");

    // synth
    PlantSpec spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a planted-structure dataset");
    synth->add_option("--out", synth_out, "Output directory (default: data dir)");
    synth->add_option("--problems", spec.n_problems);
    synth->add_option("--targets", spec.n_targets_per_kind, "Targets per kind");
    synth->add_option("--patients", spec.n_patients);
    synth->add_option("--block-size", spec.block_size);
    synth->add_option("--p-in", spec.p_in);
    synth->add_option("--p-out", spec.p_out);
    synth->add_option("--link-fraction", spec.link_fraction);
    synth->add_option("--negatives", spec.negatives_per_pair, "Annotated negatives per (problem, kind)");
    synth->callback([&] {
        spec.seed = g.seed;
        const auto data = generate(spec);
        const fs::path dir = synth_out.empty() ? fs::path(g.data_dir) : fs::path(synth_out);
        write_synth(data, dir);
        report({{"out", dir.string()},
                {"encounters", data.encounters.size()},
                {"problems", data.kb.problems().size()},
                {"triplets", data.kb.triplets().size()}});
    });

    // ingest
    std::string encounters_path, ingest_out;
    bool lenient = false;
    auto* ing = app.add_subcommand("ingest", "Validate an encounter log");
    ing->add_option("--encounters", encounters_path);
    ing->add_option("--out", ingest_out, "Write the validated log in canonical form");
    ing->add_flag("--lenient-links", lenient, "Warn instead of failing on unlisted linked diagnoses");
    ing->callback([&] {
        const auto store = ingest(path_or(encounters_path, "encounters.jsonl"), IngestOptions{!lenient});
        if (!ingest_out.empty()) {
            std::string lines;
            for (const auto& r : store.encounters()) lines += encounter_to_json_line(r) + "\n";
            write_text(ingest_out, lines);
        }
        std::array<std::size_t, 4> kinds{};
        for (const auto& [_, k] : store.code_kinds()) ++kinds[static_cast<std::size_t>(k)];
        report({{"encounters", store.encounters().size()},
                {"patients", store.patients().size()},
                {"diagnosis_codes", kinds[0]},
                {"medication_codes", kinds[1]},
                {"procedure_codes", kinds[2]},
                {"lab_codes", kinds[3]},
                {"warnings", store.warnings()}});
    });

    // vocab
    std::size_t min_count = 5;
    std::string vocab_out;
    auto* voc = app.add_subcommand("vocab", "Build the target vocabulary");
    voc->add_option("--encounters", encounters_path);
    voc->add_option("--min-count", min_count);
    voc->add_option("--out", vocab_out);
    voc->callback([&] {
        const auto v = build_vocabulary(ingest(path_or(encounters_path, "encounters.jsonl")), min_count);
        const auto out = path_or(vocab_out, "vocab.json");
        write_text(out, vocabulary_to_json(v));
        report({{"out", out.string()},
                {"medications", v.codes(RelationKind::MEDICATION).size()},
                {"procedures", v.codes(RelationKind::PROCEDURE).size()},
                {"labs", v.codes(RelationKind::LAB).size()},
                {"diagnoses", v.diagnoses().size()}});
    });

    // features
    std::string kb_path, features_dir;
    std::size_t n_specialties = kDefaultSpecialtyCount;
    auto* feat = app.add_subcommand("features", "Compute co-occurrence and specialty features");
    feat->add_option("--encounters", encounters_path);
    feat->add_option("--kb", kb_path);
    feat->add_option("--specialties", n_specialties);
    feat->add_option("--out", features_dir, "Output directory (default: <data dir>/features)");
    feat->callback([&] {
        const auto store = ingest(path_or(encounters_path, "encounters.jsonl"));
        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        const auto table = build_features(store, kb.problem_list(), n_specialties, g.threads);
        const auto out = path_or(features_dir, "features");
        save_features(table, out);
        report({{"out", out.string()}, {"pairs", table.pairs().size()}, {"specialties", table.specialty_dim()}});
    });

    // train-embeddings
    SkipGramConfig sg;
    std::string emb_out;
    auto* temb = app.add_subcommand("train-embeddings", "Train site-specific skip-gram code embeddings");
    temb->add_option("--encounters", encounters_path);
    temb->add_option("--dim", sg.dim);
    temb->add_option("--epochs", sg.epochs);
    temb->add_option("--negatives", sg.negatives);
    temb->add_option("--lr", sg.learning_rate);
    temb->add_option("--min-count", sg.min_count);
    temb->add_option("--out", emb_out);
    temb->callback([&] {
        sg.seed = g.seed;
        const auto table = train_skipgram(ingest(path_or(encounters_path, "encounters.jsonl")), sg);
        const auto out = path_or(emb_out, "embeddings.txt");
        save_embeddings(table, out);
        report({{"out", out.string()}, {"codes", table.size()}, {"dim", table.dim()}});
    });

    // candidates
    std::string vocab_path, model_path, problem_filter, kind_filter, cand_out;
    int round = 1;
    std::optional<std::size_t> top_n;
    auto* cand = app.add_subcommand("candidates", "Rank candidate targets for annotation");
    cand->add_option("--encounters", encounters_path);
    cand->add_option("--kb", kb_path);
    cand->add_option("--vocab", vocab_path);
    cand->add_option("--features", features_dir);
    cand->add_option("--model", model_path, "Required for round 2");
    cand->add_option("--problem", problem_filter);
    cand->add_option("--kind", kind_filter);
    cand->add_option("--round", round)->check(CLI::Range(1, 2));
    cand->add_option("--top-n", top_n);
    cand->add_option("--out", cand_out);
    cand->callback([&] {
        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        const auto vocab = vocab_or_build(vocab_path, encounters_path, min_count);
        std::optional<EncounterStore> store;
        std::optional<ModelParams> params;
        std::optional<FeatureTable> feats;
        TrainConfig cfg;
        if (round == 1) {
            store = ingest(path_or(encounters_path, "encounters.jsonl"));
        } else {
            params = load_checkpoint(path_or(model_path, "model.json"), &cfg);
            if (cfg.use_features) feats = features_if_present(features_dir);
        }
        const std::size_t n = top_n.value_or(round == 1 ? kRoundOneCandidates : kRoundTwoCandidates);
        json out = json::array();
        for (const auto& p : kb.problem_list()) {
            if (!problem_filter.empty() && p.problem_id != problem_filter) continue;
            std::map<Code, ImportanceScore> imp;
            if (round == 1) imp = importance_scores(*store, p);
            for (auto rel : kAllRelations) {
                if (!kind_filter.empty() && rel != relation_or_throw(kind_filter)) continue;
                std::vector<Candidate> list;
                if (round == 1) {
                    list = candidate_list(
                        [&](const Code& c) {
                            const auto it = imp.find(c);
                            return it == imp.end() ? 0.0 : it->second.value;
                        },
                        vocab.codes(rel), {}, n);
                } else {
                    std::set<Code> eligible;
                    for (const auto& c : vocab.codes(rel)) {
                        if (params->has_target(c)) eligible.insert(c);
                    }
                    const FeatureTable* fp = feats ? &*feats : nullptr;
                    list = candidate_list(
                        [&](const Code& c) {
                            return score_triplet(*params, Triplet{p.problem_id, rel, c, Label::NEGATIVE, 2}, fp);
                        },
                        eligible, annotated_targets(kb, p.problem_id, rel), n);
                }
                out.push_back(candidates_json(p.problem_id, rel, round, list));
            }
        }
        const json doc{{"schema_version", 1}, {"lists", out}};
        if (!cand_out.empty()) {
            write_text(cand_out, doc.dump(1) + "\n");
            report({{"out", cand_out}, {"lists", out.size()}});
        } else {
            std::cout << doc.dump(1) << "\n";
        }
    });

    // init-model
    InitConfig init_cfg;
    std::string init_source = "RANDOM", external_path, internal_path, init_out;
    auto* initm = app.add_subcommand("init-model", "Initialize model parameters");
    initm->add_option("--kb", kb_path);
    initm->add_option("--vocab", vocab_path);
    initm->add_option("--encounters", encounters_path);
    initm->add_option("--features", features_dir);
    initm->add_option("--source", init_source, "RANDOM, EXTERNAL, SITE_SPECIFIC or EXTERNAL_KNN");
    initm->add_option("--external", external_path);
    initm->add_option("--internal", internal_path);
    initm->add_option("--dim", init_cfg.dim);
    initm->add_option("--knn-k", init_cfg.knn_k);
    initm->add_option("--out", init_out);
    initm->callback([&] {
        const auto src = parse_init_source(init_source);
        if (!src) throw Error("unknown init source '" + init_source + "'");
        init_cfg.source = *src;
        init_cfg.seed = g.seed;
        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        const auto vocab = vocab_or_build(vocab_path, encounters_path, min_count);
        const auto feats = features_if_present(features_dir);
        std::optional<EmbeddingTable> ext, inner;
        if (!external_path.empty()) ext = load_embeddings(external_path);
        if (!internal_path.empty()) inner = load_embeddings(internal_path);
        InitReport rep;
        const auto params = init_model(kb, vocab, feats ? feats->specialty_dim() : 0, ext ? &*ext : nullptr,
                                       inner ? &*inner : nullptr, init_cfg, &rep);
        const auto out = path_or(init_out, "model_init.json");
        save_checkpoint(out, params, nullptr, nullptr);
        report({{"out", out.string()},
                {"dim", params.dim()},
                {"targets_from_table", rep.targets_from_table},
                {"targets_from_knn", rep.targets_from_knn},
                {"targets_random", rep.targets_random},
                {"problems_random", rep.problems_random}});
    });

    // train
    TrainConfig tc;
    std::string ablation = "FULL", negatives = "ANNOTATED", split_mode = "random", split_path, train_out;
    bool no_features = false;
    std::size_t n_val_problems = 2, n_test_problems = 5;
    auto* tr = app.add_subcommand("train", "Train the model with early stopping");
    tr->add_option("--kb", kb_path);
    tr->add_option("--vocab", vocab_path);
    tr->add_option("--encounters", encounters_path);
    tr->add_option("--features", features_dir);
    tr->add_option("--init", model_path, "Initial checkpoint (default: <data dir>/model_init.json, else random)");
    tr->add_option("--dim", init_cfg.dim, "Dimension when initializing randomly");
    tr->add_option("--margin", tc.margin);
    tr->add_option("--lr", tc.learning_rate);
    tr->add_option("--batch-size", tc.batch_size);
    tr->add_option("--max-epochs", tc.max_epochs);
    tr->add_option("--patience", tc.patience);
    tr->add_option("--negative-strategy", negatives, "ANNOTATED or RANDOM_VOCAB");
    tr->add_option("--negatives-per-positive", tc.negatives_per_positive);
    tr->add_option("--ablation", ablation, "FULL, FROZEN, PROBLEM_ONLY, RELATION_ONLY, RELATION_PLUS_TARGET");
    tr->add_flag("--no-features", no_features, "Score with embeddings only");
    tr->add_option("--split-mode", split_mode, "random or problem")->check(CLI::IsMember({"random", "problem"}));
    tr->add_option("--n-val-problems", n_val_problems);
    tr->add_option("--n-test-problems", n_test_problems);
    tr->add_option("--split-out", split_path);
    tr->add_option("--out", train_out);
    tr->callback([&] {
        const auto neg = parse_negative_strategy(negatives);
        if (!neg) throw Error("unknown negative strategy '" + negatives + "'");
        const auto abl = parse_ablation(ablation);
        if (!abl) throw Error("unknown ablation '" + ablation + "'");
        tc.negatives = *neg;
        tc.ablation = *abl;
        tc.use_features = !no_features;
        tc.seed = g.seed;
        if (!g.config.empty()) tc = parse_train_config(read_text(g.config), tc);
        tc.validate();

        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        const auto vocab = vocab_or_build(vocab_path, encounters_path, min_count);
        std::optional<FeatureTable> feats;
        if (tc.use_features) {
            feats = features_if_present(features_dir);
            if (!feats) throw Error("features not found; run `features` or pass --no-features");
        }
        ModelParams initial;
        const auto init_file = path_or(model_path, "model_init.json");
        if (fs::exists(init_file)) {
            initial = load_checkpoint(init_file);
        } else if (!model_path.empty()) {
            throw Error("missing initial checkpoint " + init_file.string());
        } else {
            init_cfg.seed = g.seed;
            initial = init_model(kb, vocab, feats ? feats->specialty_dim() : 0, nullptr, nullptr, init_cfg);
        }
        const auto split = split_mode == "random" ? split_random(kb, {}, g.seed)
                                                  : split_by_problem(kb, n_val_problems, n_test_problems, g.seed);
        const auto result = train(kb, split, initial, feats ? &*feats : nullptr, &vocab, tc);
        const auto out = path_or(train_out, "model.json");
        save_checkpoint(out, result.params, &tc, &result.history);
        const auto sp = path_or(split_path, "split.json");
        write_text(sp, split_to_json(split));
        json summary{{"out", out.string()},
                     {"split", sp.string()},
                     {"epochs", result.history.size()},
                     {"best_epoch", result.best_epoch},
                     {"skipped_positives", result.skipped_positives}};
        for (const auto& r : result.history) {
            if (r.epoch == result.best_epoch) summary["val_mrr"] = r.val_mrr;
        }
        report(summary);
    });

    // eval
    std::string part = "test", tie = "STRICT", eval_out, csv_dir;
    auto* ev = app.add_subcommand("eval", "Rank held-out positives and report metrics");
    ev->add_option("--kb", kb_path);
    ev->add_option("--model", model_path);
    ev->add_option("--features", features_dir);
    ev->add_option("--split", split_path);
    ev->add_option("--encounters", encounters_path, "Used for frequency bins");
    ev->add_option("--part", part)->check(CLI::IsMember({"train", "validation", "test"}));
    ev->add_option("--tie", tie)->check(CLI::IsMember({"STRICT", "MEDIAN"}));
    ev->add_option("--out", eval_out);
    ev->add_option("--csv-dir", csv_dir, "Also write CSV tables here");
    ev->callback([&] {
        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        TrainConfig cfg;
        bool has_cfg = false;
        {
            const auto text = read_text(path_or(model_path, "model.json"));
            has_cfg = json::parse(text).contains("config");
        }
        const auto params = load_checkpoint(path_or(model_path, "model.json"), &cfg);
        std::optional<FeatureTable> feats;
        if (!has_cfg || cfg.use_features) feats = features_if_present(features_dir);
        const auto split = split_from_json(read_text(path_or(split_path, "split.json")));
        const auto& idx = part == "test" ? split.test : (part == "validation" ? split.validation : split.train);
        const auto rep = evaluate(model_scorer(params, feats ? &*feats : nullptr), kb, idx,
                                  tie == "STRICT" ? TiePolicy::STRICT : TiePolicy::MEDIAN);
        const auto out = path_or(eval_out, "report.json");
        write_text(out, report_to_json(rep));
        if (!csv_dir.empty()) {
            write_text(fs::path(csv_dir) / "report.csv", report_to_csv(rep));
            write_text(fs::path(csv_dir) / "per_problem.csv", problem_table_to_csv(per_problem_report(rep)));
            const auto enc = path_or(encounters_path, "encounters.jsonl");
            if (fs::exists(enc)) {
                const auto store = ingest(enc);
                const auto bins =
                    frequency_bin_report(rep, [&](const Code& c) { return store.occurrences(c); });
                write_text(fs::path(csv_dir) / "frequency_bins.csv", frequency_bins_to_csv(bins));
            }
        }
        report({{"out", out.string()},
                {"count", rep.overall.count},
                {"mr", rep.overall.mr},
                {"mrr", rep.overall.mrr},
                {"hits1", rep.overall.hits1},
                {"hits5", rep.overall.hits5},
                {"excluded_no_negatives", rep.excluded_no_negatives}});
    });

    // baseline-eval
    std::string ontology_dir;
    auto* bev = app.add_subcommand("baseline-eval", "Evaluate the ontology rule baseline");
    bev->add_option("--kb", kb_path);
    bev->add_option("--ontology", ontology_dir, "Directory of map CSVs (default: <data dir>/ontology)");
    bev->add_option("--split", split_path);
    bev->add_option("--part", part)->check(CLI::IsMember({"train", "validation", "test"}));
    bev->add_option("--out", eval_out);
    bev->callback([&] {
        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        const auto maps = load_ontology_maps(path_or(ontology_dir, "ontology"));
        const auto split = split_from_json(read_text(path_or(split_path, "split.json")));
        const auto& idx = part == "test" ? split.test : (part == "validation" ? split.validation : split.train);
        const auto rep = evaluate(baseline_scorer(maps, kb), kb, idx, TiePolicy::MEDIAN);
        const auto cov = baseline_coverage(maps, kb, idx);
        auto doc = json::parse(report_to_json(rep));
        doc["coverage"] = {{"medications", cov.medications},
                           {"mapped_fraction", cov.mapped_fraction},
                           {"matching_fraction", cov.matching_fraction}};
        const auto out = path_or(eval_out, "baseline_report.json");
        write_text(out, doc.dump(1) + "\n");
        report({{"out", out.string()},
                {"count", rep.overall.count},
                {"mr", rep.overall.mr},
                {"mrr", rep.overall.mrr},
                {"hits5", rep.overall.hits5},
                {"skipped_unsupported", rep.skipped_unsupported},
                {"mapped_fraction", cov.mapped_fraction},
                {"matching_fraction", cov.matching_fraction}});
    });

    // suggest
    std::size_t neighbors = 5;
    auto* sug = app.add_subcommand("suggest", "Model suggestions and similar problems for one problem");
    sug->add_option("--kb", kb_path);
    sug->add_option("--vocab", vocab_path);
    sug->add_option("--encounters", encounters_path);
    sug->add_option("--features", features_dir);
    sug->add_option("--model", model_path);
    sug->add_option("--problem", problem_filter)->required();
    sug->add_option("--kind", kind_filter);
    sug->add_option("--top-n", top_n);
    sug->add_option("--neighbors", neighbors);
    sug->callback([&] {
        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        if (kb.find_problem(problem_filter) == nullptr) throw Error("unknown problem '" + problem_filter + "'");
        const auto vocab = vocab_or_build(vocab_path, encounters_path, min_count);
        TrainConfig cfg;
        const auto params = load_checkpoint(path_or(model_path, "model.json"), &cfg);
        std::optional<FeatureTable> feats;
        if (cfg.use_features) feats = features_if_present(features_dir);
        const FeatureTable* fp = feats ? &*feats : nullptr;
        json lists = json::array();
        for (auto rel : kAllRelations) {
            if (!kind_filter.empty() && rel != relation_or_throw(kind_filter)) continue;
            std::set<Code> eligible;
            for (const auto& c : vocab.codes(rel)) {
                if (params.has_target(c)) eligible.insert(c);
            }
            const auto list = candidate_list(
                [&](const Code& c) {
                    return score_triplet(params, Triplet{problem_filter, rel, c, Label::NEGATIVE, 2}, fp);
                },
                eligible, annotated_targets(kb, problem_filter, rel), top_n.value_or(kRoundTwoCandidates));
            lists.push_back(candidates_json(problem_filter, rel, 2, list));
        }
        json near = json::array();
        for (const auto& n : nearest_problems(params, problem_filter, neighbors)) {
            near.push_back({{"problem", n.problem_id}, {"similarity", n.similarity}});
        }
        std::cout << json{{"schema_version", 1}, {"problem", problem_filter}, {"suggestions", lists}, {"similar", near}}
                         .dump(1)
                  << "\n";
    });

    // kappa
    std::string file_a, file_b;
    auto* kap = app.add_subcommand("kappa", "Cohen's kappa between two annotation files");
    kap->add_option("a", file_a, "KB JSON or annotation event log")->required();
    kap->add_option("b", file_b, "KB JSON or annotation event log")->required();
    kap->callback([&] {
        const auto la = read_labels(file_a);
        const auto lb = read_labels(file_b);
        std::vector<int> xa, xb;
        for (const auto& [k, v] : la) {
            if (const auto it = lb.find(k); it != lb.end()) {
                xa.push_back(v);
                xb.push_back(it->second);
            }
        }
        if (xa.empty()) throw Error("the two files share no annotated triplets");
        const double kappa = cohen_kappa(xa, xb);
        if (g.json_out) {
            std::cout << json{{"n", xa.size()}, {"kappa", kappa}}.dump(1) << "\n";
        } else {
            std::cout << format_double(kappa) << "\n";
        }
    });

    // intersect
    std::string inter_out;
    auto* inter = app.add_subcommand("intersect", "Overlap of the site vocabulary with an external embedding table");
    inter->add_option("--vocab", vocab_path);
    inter->add_option("--encounters", encounters_path);
    inter->add_option("--external", external_path)->required();
    inter->add_option("--out", inter_out);
    inter->callback([&] {
        const auto vocab = vocab_or_build(vocab_path, encounters_path, min_count);
        const auto csv = intersection_to_csv(vocab_intersection(vocab, load_embeddings(external_path)));
        if (inter_out.empty()) {
            std::cout << csv;
        } else {
            write_text(inter_out, csv);
        }
    });

    // serve
    std::string host = "127.0.0.1", events_path;
    int port = 8080;
    auto* srv = app.add_subcommand("serve", "Run the annotation HTTP service");
    srv->add_option("--kb", kb_path);
    srv->add_option("--encounters", encounters_path);
    srv->add_option("--vocab", vocab_path);
    srv->add_option("--features", features_dir);
    srv->add_option("--model", model_path);
    srv->add_option("--events", events_path, "Annotation event log (default: <data dir>/events.jsonl)");
    srv->add_option("--host", host);
    srv->add_option("--port", port);
    srv->callback([&] {
        const auto kb = load_kb(path_or(kb_path, "kb.json"));
        auto store = std::make_shared<const EncounterStore>(ingest(path_or(encounters_path, "encounters.jsonl")));
        const auto vocab = vocab_or_build(vocab_path, encounters_path, min_count);
        auto feats = features_if_present(features_dir);
        std::optional<ModelParams> params;
        const auto mp = path_or(model_path, "model.json");
        if (fs::exists(mp)) params = load_checkpoint(mp);
        ServiceConfig cfg;
        cfg.event_log = path_or(events_path, "events.jsonl");
        cfg.snapshot = fs::path(g.data_dir) / "kb_snapshot.json";
        cfg.train.seed = g.seed;
        if (!g.config.empty()) cfg.train = parse_train_config(read_text(g.config), cfg.train);
        cfg.init.seed = g.seed;
        cfg.split_seed = g.seed;
        AnnotationService service(kb, store, vocab, std::move(feats), std::move(params), cfg);
        std::cerr << "serving on http://" << host << ":" << port << "\n";
        serve(service, host, port);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
