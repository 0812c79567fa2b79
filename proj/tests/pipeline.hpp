#pragma once

#include "pomr/evaluator.hpp"
#include "pomr/features.hpp"
#include "pomr/model.hpp"
#include "pomr/synth.hpp"

namespace pipeline {

/// Store, vocabulary and features derived from a synthetic dataset.
struct Prepared {
    pomr::SynthData data;
    pomr::EncounterStore store;
    pomr::Vocabulary vocab;
    pomr::FeatureTable features;
};

inline Prepared prepare(const pomr::PlantSpec& spec) {
    Prepared p;
    p.data = pomr::generate(spec);
    p.store = pomr::EncounterStore::from_records(p.data.encounters);
    p.vocab = pomr::build_vocabulary(p.store, 5);
    p.features = pomr::build_features(p.store, p.data.kb.problem_list());
    return p;
}

struct Run {
    pomr::TrainResult result;
    pomr::EvalReport test;
};

/// Random init, train with `config`, evaluate on the test part.
inline Run train_and_test(const Prepared& p, const pomr::Split& split, const pomr::TrainConfig& config,
                          std::size_t dim = 32) {
    pomr::InitConfig init;
    init.dim = dim;
    init.seed = config.seed;
    const auto initial = pomr::init_model(p.data.kb, p.vocab, p.features.specialty_dim(), nullptr, nullptr, init);
    Run run;
    run.result = pomr::train(p.data.kb, split, initial, &p.features, &p.vocab, config);
    const pomr::FeatureTable* f = config.use_features ? &p.features : nullptr;
    run.test = pomr::evaluate(pomr::model_scorer(run.result.params, f), p.data.kb, split.test,
                              pomr::TiePolicy::STRICT);
    return run;
}

}  // namespace pipeline
