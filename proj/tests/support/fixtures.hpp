#pragma once

// Shared, lazily built resources for the orchestrator and service tests.

#include <filesystem>

#include "handadapt/orchestrator/system.hpp"

namespace handadapt::testing {

inline const std::filesystem::path kData = HANDADAPT_DATA_DIR;

/// Small initial corpus; trains in well under a second.
inline const vision::DatasetStore& small_base() {
    static const auto s = orchestrator::initial_corpus(40, 5);
    return s;
}

inline classifier::TrainOptions quick_options() {
    classifier::TrainOptions o;
    o.restarts = 1;
    o.seed = 5;
    return o;
}

inline const classifier::GraspModel& six_object_model() {
    static const auto m = classifier::train_scg(small_base(), quick_options()).first;
    return m;
}

inline std::shared_ptr<const nlu::Grounder> grounder() {
    static const auto g = orchestrator::make_grounder(kData / "grammar_extended.cfg", kData / "corpus.tsv");
    return g;
}

inline orchestrator::System make_system(std::uint64_t seed = 1) {
    return orchestrator::System(orchestrator::SystemConfig::defaults(seed), six_object_model(), grounder());
}

} // namespace handadapt::testing
