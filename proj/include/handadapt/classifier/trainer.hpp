#pragma once

// Restart-based SCG training with early stopping on validation loss.
//
// Each restart draws a fresh weight init and a fresh stratified 50/25/25
// split from derive_seed(seed, restart). The chosen restart has the highest
// validation accuracy; ties go to lower validation loss, then lower index.

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stop_token>
#include <string>
#include <utility>
#include <vector>

#include "handadapt/classifier/model.hpp"
#include "handadapt/classifier/objective.hpp"
#include "handadapt/classifier/scg.hpp"
#include "handadapt/core/config.hpp"
#include "handadapt/core/random.hpp"
#include "handadapt/vision/dataset.hpp"

namespace handadapt::classifier {

class InsufficientData : public Error {
public:
    using Error::Error;
};

class TrainingCancelled : public Error {
public:
    TrainingCancelled() : Error("training cancelled") {}
};

struct TrainOptions {
    std::vector<std::size_t> hidden = {300, 50};
    Activation activation = Activation::Sigmoid;
    bool center_inputs = false;
    std::size_t restarts = 5;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 1;
    ScgConfig scg;

    /// Reads `classifier.*` keys; absent keys keep their defaults.
    static TrainOptions from_config(const KeyValueConfig& c) {
        TrainOptions o;
        if (c.has("classifier.hidden")) {
            o.hidden.clear();
            for (double v : c.get_doubles("classifier.hidden")) o.hidden.push_back(static_cast<std::size_t>(v));
        }
        if (c.has("classifier.activation")) o.activation = activation_from_string(c.get("classifier.activation"));
        o.center_inputs = c.get_int_or("classifier.center_inputs", 0) != 0;
        o.restarts = static_cast<std::size_t>(c.get_int_or("classifier.restarts", 5));
        o.max_epochs = static_cast<std::size_t>(c.get_int_or("classifier.max_epochs", 100));
        o.patience = static_cast<std::size_t>(c.get_int_or("classifier.patience", 10));
        o.seed = static_cast<std::uint64_t>(c.get_int_or("classifier.seed", 1));
        o.scg.sigma = c.get_double_or("classifier.scg_sigma", o.scg.sigma);
        o.scg.lambda = c.get_double_or("classifier.scg_lambda", o.scg.lambda);
        if (o.restarts == 0) throw ConfigError("classifier.restarts must be positive");
        return o;
    }
};

struct RestartReport {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t epochs = 0;     ///< SCG iterations run
    std::size_t best_epoch = 0; ///< iteration whose weights were kept
    std::size_t n_train = 0, n_val = 0, n_test = 0;

    friend bool operator==(const RestartReport&, const RestartReport&) = default;
};

struct TrainReport {
    std::vector<RestartReport> restarts;
    std::size_t chosen = 0;
    std::size_t epochs_run = 0;
    double wall_seconds = 0.0;

    const RestartReport& best() const { return restarts.at(chosen); }

    /// Everything except wall time, which is the only nondeterministic field.
    bool same_outcome(const TrainReport& o) const {
        return restarts == o.restarts && chosen == o.chosen && epochs_run == o.epochs_run;
    }

    std::string to_text() const {
        std::ostringstream s;
        s << std::setprecision(17);
        s << "chosen " << chosen << "\n";
        s << "epochs_run " << epochs_run << "\n";
        s << "wall_seconds " << wall_seconds << "\n";
        s << "# restart\ttrain_loss\tval_loss\tval_accuracy\ttest_accuracy\tepochs\tbest_epoch\tn_train\tn_val\tn_test\n";
        for (std::size_t i = 0; i < restarts.size(); ++i) {
            const auto& r = restarts[i];
            s << i << '\t' << r.train_loss << '\t' << r.val_loss << '\t' << r.val_accuracy << '\t' << r.test_accuracy
              << '\t' << r.epochs << '\t' << r.best_epoch << '\t' << r.n_train << '\t' << r.n_val << '\t' << r.n_test
              << '\n';
        }
        return s.str();
    }

    void write(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path);
        out << to_text();
        if (!out) throw Error("failed writing train report '" + path.string() + "'");
    }
};

/// Index of the best restart under the selection rule.
inline std::size_t choose_restart(const std::vector<RestartReport>& r) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.size(); ++i) {
        if (r[i].val_accuracy > r[best].val_accuracy ||
            (r[i].val_accuracy == r[best].val_accuracy && r[i].val_loss < r[best].val_loss))
            best = i;
    }
    return best;
}

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Per-class shuffle, then ceil(n/2) train, ceil(rest/2) val, remainder test.
inline SplitIndices stratified_split(std::span<const int> labels, std::size_t n_classes, std::uint64_t seed) {
    auto rng = make_rng(seed);
    SplitIndices s;
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == static_cast<int>(c)) idx.push_back(i);
        shuffle(std::span<std::size_t>(idx), rng);
        const std::size_t n_train = (idx.size() + 1) / 2;
        const std::size_t n_val = (idx.size() - n_train + 1) / 2;
        for (std::size_t k = 0; k < idx.size(); ++k)
            (k < n_train ? s.train : k < n_train + n_val ? s.val : s.test).push_back(idx[k]);
    }
    for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

/// Seeds of restart `r`: the split draw and the weight init.
struct RestartSeeds {
    std::uint64_t split = 0;
    std::uint64_t init = 0;
};

inline RestartSeeds restart_seeds(std::uint64_t seed, std::size_t r) {
    const auto base = derive_seed(seed, r);
    return {derive_seed(base, 1), derive_seed(base, 2)};
}

struct TrainResult {
    Mlp<double> net;
    TrainReport report;
};

/// Trains on a feature matrix (one example per column) with integer labels.
template <class Derived>
TrainResult train_restarts(const Eigen::MatrixBase<Derived>& x, std::span<const int> labels, std::size_t n_classes,
                           const TrainOptions& opt, std::stop_token stop = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    if (labels.empty()) throw InsufficientData("no training examples");
    if (static_cast<std::size_t>(x.cols()) != labels.size()) throw ShapeMismatch("one label per column required");
    {
        std::vector<std::size_t> counts(n_classes, 0);
        for (int y : labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw ShapeMismatch("label out of range");
            ++counts[static_cast<std::size_t>(y)];
        }
        for (std::size_t c = 0; c < n_classes; ++c)
            if (counts[c] == 1)
                throw InsufficientData("class " + std::to_string(c) + " has a single example; need at least 2");
    }
    if (opt.restarts == 0) throw Error("at least one restart is required");

    std::vector<std::size_t> sizes{static_cast<std::size_t>(x.rows())};
    sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
    sizes.push_back(n_classes);

    Eigen::MatrixXd gram(x.cols(), x.cols());
    gram.setZero();
    gram.template selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    gram.template triangularView<Eigen::StrictlyUpper>() = gram.transpose();

    TrainResult result;
    for (std::size_t r = 0; r < opt.restarts; ++r) {
        const auto seeds = restart_seeds(opt.seed, r);
        auto split = stratified_split(labels, n_classes, seeds.split);

        Mlp<double> net(sizes, opt.activation);
        net.init_uniform(seeds.init);
        const Eigen::MatrixXd z0 = net.weights(0) * x;
        RowSpaceMlp rs(std::move(net), z0, gram, labels, split.train, split.val, split.test);
        FunctionObjective objective([&rs](const Eigen::VectorXd& v, Eigen::VectorXd* g) { return rs.evaluate(v, g); },
                                    rs.initial_point());
        Scg scg(objective, opt.scg);

        RestartReport rep;
        rep.n_train = split.train.size();
        rep.n_val = split.val.size();
        rep.n_test = split.test.size();
        auto best = rs.score(objective.point(), RowSpaceMlp::Set::Val);
        Eigen::VectorXd best_point = objective.point();
        std::size_t stale = 0;
        for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
            if (stop.stop_requested()) throw TrainingCancelled();
            const auto step = scg.step();
            rep.epochs = epoch;
            if (step == ScgStep::Converged) break;
            if (step == ScgStep::Rejected) continue;
            const auto v = rs.score(objective.point(), RowSpaceMlp::Set::Val);
            if (v.loss < best.loss) {
                best = v;
                best_point = objective.point();
                rep.best_epoch = epoch;
                stale = 0;
            } else if (++stale >= opt.patience) {
                break;
            }
        }
        rep.train_loss = rs.score(best_point, RowSpaceMlp::Set::Train).loss;
        rep.val_loss = best.loss;
        rep.val_accuracy = best.accuracy;
        rep.test_accuracy = rs.score(best_point, RowSpaceMlp::Set::Test).accuracy;
        result.report.epochs_run += rep.epochs;
        result.report.restarts.push_back(rep);
        if (choose_restart(result.report.restarts) == r) result.net = rs.materialize(best_point, x);
    }
    result.report.chosen = choose_restart(result.report.restarts);
    result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

/// Column matrix of model features for the given examples.
inline Eigen::MatrixXd feature_matrix(const GraspModel& shape, std::span<const vision::LabeledExample> ex) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(vision::Image::kSize), static_cast<Eigen::Index>(ex.size()));
    for (std::size_t i = 0; i < ex.size(); ++i)
        shape.features<double>(ex[i].image,
                               std::span<double>(x.col(static_cast<Eigen::Index>(i)).data(), vision::Image::kSize));
    return x;
}

/// Trains a six-grasp model on every example of the store.
inline std::pair<GraspModel, TrainReport> train_scg(const vision::DatasetStore& store, const TrainOptions& opt,
                                                    std::stop_token stop = {}) {
    GraspModel model;
    model.center_inputs = opt.center_inputs;
    const auto x = feature_matrix(model, store.examples());
    std::vector<int> labels;
    for (const auto& e : store.examples()) labels.push_back(static_cast<int>(index_of(e.label)));
    auto r = train_restarts(x, labels, kGraspCount, opt, stop);
    model.net = std::move(r.net);
    return {std::move(model), std::move(r.report)};
}

/// train_scg on store + new_examples. With a model path, the new model
/// replaces the file only after training has finished and been scored.
inline std::pair<GraspModel, TrainReport> retrain_with(const vision::DatasetStore& store,
                                                const vision::DatasetStore& new_examples, const TrainOptions& opt,
                                                const std::filesystem::path& model_path = {},
                                                std::stop_token stop = {}) {
    vision::DatasetStore augmented = store;
    augmented.append(new_examples);
    auto result = train_scg(augmented, opt, stop);
    if (!model_path.empty()) {
        save_model(model_path, result.first);
        result.second.write(std::filesystem::path(model_path.string() + ".report"));
    }
    return result;
}

} // namespace handadapt::classifier
