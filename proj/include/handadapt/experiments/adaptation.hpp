#pragma once

// The adaptation study. A model trained on the six initial objects meets the
// banana, which it has never seen; banana examples labelled tripod are added
// in fixed increments and the model is retrained after each. Every step
// scores held-out renders of all seven objects.

#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "handadapt/classifier/trainer.hpp"
#include "handadapt/experiments/table.hpp"
#include "handadapt/vision/dataset.hpp"

namespace handadapt::experiments {

struct AdaptConfig {
    std::size_t per_class = 120;     ///< initial examples per object
    std::size_t eval_per_class = 10; ///< held-out renders per object and step
    std::size_t increment = 20;      ///< banana examples added per step
    std::size_t increments = 6;
    classifier::TrainOptions options;

    /// adapt.* keys plus the classifier.* family. classifier.seed is ignored:
    /// each run trains with its own seed.
    static AdaptConfig from_config(const KeyValueConfig& kv) {
        AdaptConfig c;
        c.per_class = static_cast<std::size_t>(kv.get_int_or("adapt.per_class", 120));
        c.eval_per_class = static_cast<std::size_t>(kv.get_int_or("adapt.eval_per_class", 10));
        c.increment = static_cast<std::size_t>(kv.get_int_or("adapt.increment", 20));
        c.increments = static_cast<std::size_t>(kv.get_int_or("adapt.increments", 6));
        c.options = classifier::TrainOptions::from_config(kv);
        // Every generated batch is split train/val/test, which needs 4 examples.
        if (c.per_class < 4 || c.eval_per_class < 4 || c.increment < 4)
            throw ConfigError("adapt: per_class, eval_per_class and increment need at least 4 examples");
        return c;
    }

    std::string canonical() const {
        std::ostringstream s;
        s << "adapt per_class=" << per_class << " eval=" << eval_per_class << " increment=" << increment
          << " increments=" << increments << " hidden=";
        for (auto h : options.hidden) s << h << ',';
        s << " act=" << to_string(options.activation) << " center=" << options.center_inputs
          << " restarts=" << options.restarts << " epochs=" << options.max_epochs << " patience=" << options.patience
          << std::setprecision(17) << " sigma=" << options.scg.sigma << " lambda=" << options.scg.lambda;
        return s.str();
    }

    std::uint64_t hash() const { return fnv1a(canonical()); }
};

using Posterior = std::array<double, kGraspCount>;

struct AdaptStep {
    std::size_t step = 0;
    std::size_t banana_examples = 0;
    std::array<Posterior, vision::kAllObjects.size()> mean{}; ///< per object, mean over held-out renders
    classifier::TrainReport report;

    const Posterior& of(vision::ObjectClass o) const { return mean[static_cast<std::size_t>(o)]; }
};

struct AdaptRun {
    std::uint64_t seed = 0;
    std::vector<AdaptStep> steps;
};

inline GraspType argmax(const Posterior& p) {
    return static_cast<GraspType>(std::max_element(p.begin(), p.end()) - p.begin());
}

/// Seeds: corpus `seed`, held-out renders derive_seed(seed, 777, object),
/// banana increment k derive_seed(seed, 555, k), training `seed`.
inline AdaptRun run_adaptation(std::uint64_t seed, const AdaptConfig& cfg,
                               const std::function<void(const AdaptStep&)>& progress = {}) {
    using namespace vision;
    auto store = generate_corpus(kInitialObjects, cfg.per_class, seed);
    std::vector<DatasetStore> held_out;
    for (auto c : kAllObjects)
        held_out.push_back(generate_corpus(std::array{c}, cfg.eval_per_class, derive_seed(seed, 777, static_cast<std::uint64_t>(c))));
    auto opt = cfg.options;
    opt.seed = seed;

    AdaptRun run{seed, {}};
    for (std::size_t step = 0; step <= cfg.increments; ++step) {
        if (step > 0) store.append(generate_corpus(std::array{ObjectClass::Banana}, cfg.increment, derive_seed(seed, 555, step)));
        auto [model, report] = classifier::train_scg(store, opt);
        AdaptStep s{step, step * cfg.increment, {}, std::move(report)};
        for (std::size_t c = 0; c < kAllObjects.size(); ++c) {
            for (const auto& e : held_out[c].examples()) {
                const auto p = model.posterior(e.image);
                for (std::size_t g = 0; g < kGraspCount; ++g) s.mean[c][g] += p[g];
            }
            for (auto& v : s.mean[c]) v /= static_cast<double>(held_out[c].size());
        }
        if (progress) progress(s);
        run.steps.push_back(std::move(s));
    }
    return run;
}

/// Long format: one row per step and object, a column per grasp.
inline Table posterior_table(const AdaptRun& run) {
    std::vector<std::string> cols{"step", "banana_examples", "object", "taught_grasp"};
    for (auto n : kGraspNames) cols.emplace_back(n);
    cols.emplace_back("argmax");
    Table t(cols);
    for (const auto& s : run.steps)
        for (auto o : vision::kAllObjects) {
            std::vector<std::string> row{std::to_string(s.step), std::to_string(s.banana_examples),
                                         std::string(to_string(o)), std::string(to_string(vision::canonical_grasp(o)))};
            for (double p : s.of(o)) row.push_back(fixed(p));
            row.emplace_back(to_string(argmax(s.of(o))));
            t.add(std::move(row));
        }
    return t;
}

/// One row per step: the banana curve plus training diagnostics.
inline Table curve_table(const AdaptRun& run) {
    Table t({"step", "banana_examples", "banana_tripod", "banana_argmax", "val_accuracy", "test_accuracy", "epochs"});
    for (const auto& s : run.steps) {
        const auto& b = s.of(vision::ObjectClass::Banana);
        t.add({std::to_string(s.step), std::to_string(s.banana_examples), fixed(b[index_of(GraspType::Tripod)]),
               std::string(to_string(argmax(b))), fixed(s.report.best().val_accuracy), fixed(s.report.best().test_accuracy),
               std::to_string(s.report.epochs_run)});
    }
    return t;
}

/// Posteriors averaged over runs, step by step. All runs must share a config.
inline std::vector<AdaptStep> seed_average(std::span<const AdaptRun> runs) {
    if (runs.empty()) throw Error("no runs to average");
    std::vector<AdaptStep> avg(runs[0].steps.size());
    for (const auto& r : runs) {
        if (r.steps.size() != avg.size()) throw Error("runs differ in step count");
        for (std::size_t k = 0; k < avg.size(); ++k) {
            avg[k].step = r.steps[k].step;
            avg[k].banana_examples = r.steps[k].banana_examples;
            for (std::size_t c = 0; c < avg[k].mean.size(); ++c)
                for (std::size_t g = 0; g < kGraspCount; ++g)
                    avg[k].mean[c][g] += r.steps[k].mean[c][g] / static_cast<double>(runs.size());
        }
    }
    return avg;
}

/// Mean and standard deviation over seeds of each object's taught-grasp
/// posterior, plus the argmax of the seed-averaged posterior.
inline Table summary_table(std::span<const AdaptRun> runs) {
    const auto avg = seed_average(runs);
    Table t({"step", "banana_examples", "object", "taught_grasp", "mean", "stddev", "argmax_of_mean"});
    for (std::size_t k = 0; k < avg.size(); ++k)
        for (auto o : vision::kAllObjects) {
            // The banana is scored against tripod, its taught grasp.
            const auto g = index_of(vision::canonical_grasp(o));
            double ss = 0.0;
            for (const auto& r : runs) ss += std::pow(r.steps[k].of(o)[g] - avg[k].of(o)[g], 2);
            const double sd = runs.size() > 1 ? std::sqrt(ss / static_cast<double>(runs.size() - 1)) : 0.0;
            t.add({std::to_string(avg[k].step), std::to_string(avg[k].banana_examples), std::string(to_string(o)),
                   std::string(to_string(vision::canonical_grasp(o))), fixed(avg[k].of(o)[g]), fixed(sd),
                   std::string(to_string(argmax(avg[k].of(o))))});
        }
    return t;
}

/// The adaptation contract on seed-averaged posteriors: banana starts below
/// 0.1 tripod, rises after the first increment, ends with tripod as argmax
/// at 0.5 or more; apple, cup, pitcher and box keep their step-0 argmax.
inline std::vector<Verdict> adaptation_verdicts(std::span<const AdaptRun> runs) {
    using vision::ObjectClass;
    const auto avg = seed_average(runs);
    if (avg.size() < 2) throw Error("adaptation needs at least one increment");
    const auto tri = index_of(GraspType::Tripod);
    const double p0 = avg.front().of(ObjectClass::Banana)[tri];
    const double p1 = avg[1].of(ObjectClass::Banana)[tri];
    const auto& last = avg.back().of(ObjectClass::Banana);
    std::vector<Verdict> v;
    v.push_back({"banana tripod posterior < 0.1 at step 0", p0 < 0.1, fixed(p0, 4)});
    v.push_back({"banana tripod posterior rises after the first increment", p1 > p0, fixed(p0, 4) + " -> " + fixed(p1, 4)});
    v.push_back({"banana argmax tripod with posterior >= 0.5 at the last step",
                 argmax(last) == GraspType::Tripod && last[tri] >= 0.5,
                 std::string(to_string(argmax(last))) + " " + fixed(last[tri], 4)});
    for (auto o : {ObjectClass::Apple, ObjectClass::Cup, ObjectClass::Pitcher, ObjectClass::Box}) {
        const auto a0 = argmax(avg.front().of(o));
        bool same = true;
        for (const auto& s : avg) same = same && argmax(s.of(o)) == a0;
        v.push_back({std::string(to_string(o)) + " argmax unchanged across steps", same, std::string(to_string(a0))});
    }
    return v;
}

} // namespace handadapt::experiments
