#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "handadapt/classifier/model.hpp"
#include "handadapt/classifier/objective.hpp"
#include "handadapt/classifier/scg.hpp"
#include "handadapt/classifier/trainer.hpp"
#include "handadapt/vision/dataset.hpp"

#include "../support/classifier_oracle.hpp"

using namespace handadapt;
using namespace handadapt::classifier;
using namespace handadapt::testing;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("handadapt_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    return p;
}

TEST(Mlp, GradientMatchesCentralDifferencesOnTwentySeeds) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto rng = make_rng(seed);
        Mlp<double> net({10, 5, 3});
        net.init_uniform(seed);
        const auto x = random_batch(rng, 10, 8);
        const auto y = random_labels(rng, 8, 3);
        Eigen::VectorXd grad;
        net.loss_and_grad(x, y, &grad);
        EXPECT_LT(max_relative_error(grad, central_differences(net, x, y, 1e-5)), 1e-4) << "seed " << seed;
    }
}

TEST(Mlp, GradientCheckCoversDeeperTanhNets) {
    auto rng = make_rng(99);
    Mlp<double> net({6, 5, 4, 3}, Activation::Tanh);
    net.init_uniform(99);
    const auto x = random_batch(rng, 6, 5);
    const auto y = random_labels(rng, 5, 3);
    Eigen::VectorXd grad;
    net.loss_and_grad(x, y, &grad);
    EXPECT_LT(max_relative_error(grad, central_differences(net, x, y, 1e-5)), 1e-4);
}

TEST(Mlp, ZeroWeightsGiveUniformPosteriorAndLogSixLoss) {
    GraspModel model{Mlp<double>({kGraspNetSizes.begin(), kGraspNetSizes.end()})};
    const auto img = vision::render(vision::draw_spec(vision::ObjectClass::Apple, {}, 4));
    for (double p : model.posterior(img)) EXPECT_NEAR(p, 1.0 / 6.0, 1e-15);

    Mlp<double> toy({4, 3, 6});
    auto rng = make_rng(1);
    const auto x = random_batch(rng, 4, 9);
    EXPECT_NEAR(toy.loss_and_grad(x, random_labels(rng, 9, 6), nullptr), std::log(6.0), 1e-12);
}

TEST(Mlp, ConfidentCorrectPredictionDrivesLossToZero) {
    Mlp<double> net({3, 2, 4});
    net.bias(1)(2) = 60.0;
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 2);
    const std::vector<int> y = {2, 2};
    EXPECT_LT(net.loss_and_grad(x, y, nullptr), 1e-20);
}

TEST(Mlp, PosteriorIsSimplexPointForThousandRandomImages) {
    Mlp<double> net({kGraspNetSizes.begin(), kGraspNetSizes.end()});
    net.init_uniform(5);
    auto rng = make_rng(6);
    for (int batch = 0; batch < 10; ++batch) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(vision::Image::kSize), 100);
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = static_cast<double>(uniform_index(rng, 256)) / 255.0;
        const auto p = net.posteriors(x);
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            EXPECT_NEAR(p.col(j).sum(), 1.0, 1e-9);
            EXPECT_GT(p.col(j).minCoeff(), 0.0);
            EXPECT_LT(p.col(j).maxCoeff(), 1.0);
        }
    }
}

TEST(Mlp, RejectsMismatchedShapes) {
    Mlp<double> net({10, 5, 3});
    std::vector<double> wrong(9, 0.0);
    EXPECT_THROW(net.posterior(wrong), ShapeMismatch);
    GraspModel toy{net};
    EXPECT_THROW(toy.posterior(vision::Image{}), ShapeMismatch);
    EXPECT_THROW(Mlp<double>({10}), ShapeMismatch);
}

TEST(Mlp, ForwardIsDeterministic) {
    GraspModel model{Mlp<double>({kGraspNetSizes.begin(), kGraspNetSizes.end()})};
    model.net.init_uniform(8);
    const auto img = vision::render(vision::draw_spec(vision::ObjectClass::Cup, {}, 8));
    EXPECT_EQ(model.posterior(img), model.posterior(img));
}

// --- SCG -------------------------------------------------------------------

FunctionObjective quadratic(std::size_t n, std::uint64_t seed) {
    auto rng = make_rng(seed);
    Eigen::MatrixXd a = random_batch(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::MatrixXd h = a * a.transpose() + Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::VectorXd b = random_batch(rng, static_cast<Eigen::Index>(n), 1);
    return FunctionObjective(
        [h, b](const Eigen::VectorXd& w, Eigen::VectorXd* g) {
            if (g) *g = h * w - b;
            return 0.5 * w.dot(h * w) - b.dot(w);
        },
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
}

FunctionObjective rosenbrock() {
    return FunctionObjective(
        [](const Eigen::VectorXd& w, Eigen::VectorXd* g) {
            const double x = w(0), y = w(1);
            if (g) {
                (*g)(0) = -2 * (1 - x) - 400 * x * (y - x * x);
                (*g)(1) = 200 * (y - x * x);
            }
            return (1 - x) * (1 - x) + 100 * (y - x * x) * (y - x * x);
        },
        Eigen::Vector2d(-1.2, 1.0));
}

TEST(Scg, StartsFromStandardConstants) {
    auto obj = quadratic(3, 1);
    Scg scg(obj);
    EXPECT_EQ(scg.state().sigma, 5e-5);
    EXPECT_EQ(scg.state().lambda, 5e-7);
    EXPECT_EQ(scg.state().lambda_bar, 0.0);
    EXPECT_TRUE(scg.state().success);
}

TEST(Scg, SolvesPositiveDefiniteQuadratic) {
    auto obj = quadratic(12, 2);
    Scg scg(obj);
    for (int k = 0; k < 200 && scg.step() != ScgStep::Converged; ++k) {
    }
    // the stopping point is set by round-off in the value differences
    EXPECT_LT(obj.gradient().norm(), 1e-6);
}

TEST(Scg, MinimizesRosenbrock) {
    auto obj = rosenbrock();
    Scg scg(obj);
    for (int k = 0; k < 5000 && scg.step() != ScgStep::Converged; ++k) {
    }
    EXPECT_NEAR(obj.point()(0), 1.0, 1e-4);
    EXPECT_NEAR(obj.point()(1), 1.0, 1e-4);
}

/// Step-level invariants: lambda stays non-negative, a rejected step leaves
/// the point untouched and raises lambda, accepted steps never raise the loss.
template <class Objective>
std::pair<int, int> check_invariants(Objective& obj, Scg<Objective>& scg, int steps) {
    int accepted = 0, rejected = 0;
    for (int k = 0; k < steps; ++k) {
        const Eigen::VectorXd before = obj.point();
        const double value = obj.value();
        const double lambda_before = scg.state().lambda;
        const auto step = scg.step();
        EXPECT_GE(scg.state().lambda, 0.0);
        if (step == ScgStep::Converged) break;
        if (step == ScgStep::Rejected) {
            ++rejected;
            EXPECT_TRUE(obj.point() == before) << "step " << k;
            EXPECT_EQ(obj.value(), value);
            EXPECT_GT(scg.state().lambda, lambda_before) << "step " << k;
            EXPECT_LT(scg.state().comparison, 0.0);
        } else {
            ++accepted;
            EXPECT_LE(obj.value(), value) << "step " << k;
            EXPECT_GE(scg.state().comparison, 0.0);
        }
    }
    return {accepted, rejected};
}

TEST(Scg, InvariantsHoldOnRosenbrock) {
    auto obj = rosenbrock();
    Scg scg(obj);
    const auto [accepted, rejected] = check_invariants(obj, scg, 400);
    EXPECT_GT(accepted, 0);
    EXPECT_GT(rejected, 0);
}

TEST(Scg, InvariantsHoldWhileTrainingAnMlp) {
    auto rng = make_rng(3);
    const Eigen::MatrixXd x = random_batch(rng, 8, 40);
    const auto y = random_labels(rng, 40, 3);
    Mlp<double> net({8, 6, 3});
    net.init_uniform(3);
    FunctionObjective obj(
        [&net, &x, &y](const Eigen::VectorXd& w, Eigen::VectorXd* g) {
            net.params() = w;
            return net.loss_and_grad(x, y, g);
        },
        net.params());
    Scg scg(obj);
    const double start = obj.value();
    const auto [accepted, rejected] = check_invariants(obj, scg, 300);
    EXPECT_GT(accepted, 100);
    EXPECT_LT(obj.value(), 0.5 * start);
    (void)rejected;
}

// --- row-space coordinates --------------------------------------------------

struct RowSpaceFixture {
    Eigen::MatrixXd x;
    std::vector<int> y;
    Eigen::MatrixXd gram;
    Mlp<double> net;
    SplitIndices split;

    explicit RowSpaceFixture(std::uint64_t seed, Eigen::Index inputs = 40, Eigen::Index n = 30)
        : net({static_cast<std::size_t>(inputs), 7, 5, 3}) {
        auto rng = make_rng(seed);
        x = random_batch(rng, inputs, n);
        x.col(4) = x.col(3); // a duplicate makes the Gram matrix singular
        y = random_labels(rng, static_cast<std::size_t>(n), 3);
        gram = x.transpose() * x;
        net.init_uniform(seed);
        split = stratified_split(y, 3, seed);
        split.train.push_back(4);
        split.train.push_back(3);
        std::sort(split.train.begin(), split.train.end());
        split.train.erase(std::unique(split.train.begin(), split.train.end()), split.train.end());
        for (auto* v : {&split.val, &split.test})
            v->erase(std::remove_if(v->begin(), v->end(), [](std::size_t i) { return i == 3 || i == 4; }), v->end());
    }

    RowSpaceMlp make() const {
        return RowSpaceMlp(net, net.weights(0) * x, gram, y, split.train, split.val, split.test);
    }

    Eigen::MatrixXd train_x() const {
        Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(split.train.size()));
        for (std::size_t k = 0; k < split.train.size(); ++k)
            out.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(split.train[k]));
        return out;
    }

    std::vector<int> train_y() const {
        std::vector<int> out;
        for (auto i : split.train) out.push_back(y[i]);
        return out;
    }
};

TEST(RowSpace, DropsNullDirectionsOfTheGramMatrix) {
    RowSpaceFixture f(1);
    auto rs = f.make();
    EXPECT_EQ(rs.rank(), f.split.train.size() - 1);
}

TEST(RowSpace, LossAndGradientMatchWeightSpace) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RowSpaceFixture f(seed);
        auto rs = f.make();
        auto rng = make_rng(seed + 100);
        Eigen::VectorXd v = rs.initial_point() + 0.3 * random_batch(rng, static_cast<Eigen::Index>(rs.dimension()), 1);
        Eigen::VectorXd g;
        const double loss = rs.evaluate(v, &g);
        const auto full = rs.materialize(v, f.x);
        Eigen::VectorXd full_grad;
        const double full_loss = full.loss_and_grad(f.train_x(), f.train_y(), &full_grad);
        EXPECT_NEAR(loss, full_loss, 1e-12);
        const Eigen::VectorXd mapped = rs.to_weight_space(g, f.x);
        EXPECT_LT((mapped - full_grad).norm(), 1e-10 * (1.0 + full_grad.norm()));
        // orthonormal basis: coordinate norm equals weight-space norm
        EXPECT_NEAR(g.norm(), full_grad.norm(), 1e-10);
        const auto val = rs.score(v, RowSpaceMlp::Set::Val);
        Eigen::MatrixXd xv(f.x.rows(), static_cast<Eigen::Index>(f.split.val.size()));
        std::vector<int> yv;
        for (std::size_t k = 0; k < f.split.val.size(); ++k) {
            xv.col(static_cast<Eigen::Index>(k)) = f.x.col(static_cast<Eigen::Index>(f.split.val[k]));
            yv.push_back(f.y[f.split.val[k]]);
        }
        EXPECT_NEAR(val.loss, full.loss_and_grad(xv, yv, nullptr), 1e-12);
    }
}

TEST(RowSpace, ScgPathMatchesWeightSpaceScg) {
    RowSpaceFixture f(7);
    auto rs = f.make();
    FunctionObjective coords([&rs](const Eigen::VectorXd& v, Eigen::VectorXd* g) { return rs.evaluate(v, g); },
                             rs.initial_point());
    Scg scg_coords(coords);

    Mlp<double> net = f.net;
    const auto xt = f.train_x();
    const auto yt = f.train_y();
    FunctionObjective weights(
        [&net, &xt, &yt](const Eigen::VectorXd& w, Eigen::VectorXd* g) {
            net.params() = w;
            return net.loss_and_grad(xt, yt, g);
        },
        f.net.params());
    Scg scg_weights(weights);

    // finite-difference curvature amplifies round-off roughly tenfold per
    // step, so the paths agree tightly early on and loosely later
    for (int k = 0; k < 40; ++k) {
        const auto a = scg_coords.step();
        const auto b = scg_weights.step();
        ASSERT_EQ(a, b) << "step " << k;
        const double tol = k < 4 ? 1e-10 : k < 12 ? 1e-7 : 1e-5;
        ASSERT_NEAR(coords.value(), weights.value(), tol * (1.0 + weights.value())) << "step " << k;
        if (k == 11) {
            const auto mat = rs.materialize(coords.point(), f.x);
            EXPECT_LT((mat.params() - weights.point()).norm(), 1e-7 * weights.point().norm());
        }
    }
}

// --- training ---------------------------------------------------------------

TEST(Train, EveryRestartMatchesOrBeatsGradientDescentOracle) {
    Eigen::MatrixXd x;
    std::vector<int> y;
    blobs(11, x, y);
    TrainOptions opt;
    opt.hidden = {8};
    opt.restarts = 5;
    opt.max_epochs = 200;
    opt.patience = 200;
    opt.seed = 4;
    const auto result = train_restarts(x, y, 2, opt);
    ASSERT_EQ(result.report.restarts.size(), 5u);
    for (std::size_t r = 0; r < 5; ++r) {
        const auto seeds = restart_seeds(opt.seed, r);
        const auto split = stratified_split(y, 2, seeds.split);
        Mlp<double> init({2, 8, 2});
        init.init_uniform(seeds.init);
        const double oracle = gradient_descent_oracle(init, x, y, split, 200, 0.5);
        EXPECT_GE(result.report.restarts[r].val_accuracy, oracle) << "restart " << r;
    }
}

TEST(Train, ChoosesHighestValidationAccuracyThenLowestLoss) {
    std::vector<RestartReport> r(4);
    r[0].val_accuracy = 0.8, r[0].val_loss = 0.3;
    r[1].val_accuracy = 0.9, r[1].val_loss = 0.5;
    r[2].val_accuracy = 0.9, r[2].val_loss = 0.4;
    r[3].val_accuracy = 0.9, r[3].val_loss = 0.4;
    EXPECT_EQ(choose_restart(r), 2u);
}

TEST(Train, StratifiedSplitIsHalfQuarterQuarterPerClass) {
    std::vector<int> y;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 20; ++i) y.push_back(c);
    const auto s = stratified_split(y, 3, 9);
    EXPECT_EQ(s.train.size(), 30u);
    EXPECT_EQ(s.val.size(), 15u);
    EXPECT_EQ(s.test.size(), 15u);
    std::vector<int> seen(y.size(), 0);
    for (auto* v : {&s.train, &s.val, &s.test})
        for (auto i : *v) ++seen[i];
    for (int n : seen) EXPECT_EQ(n, 1);
}

vision::DatasetStore small_corpus(std::size_t per_class, std::uint64_t seed) {
    return vision::generate_corpus(vision::kInitialObjects, per_class, seed);
}

TEST(Train, SeededRunIsReproducible) {
    const auto store = small_corpus(8, 2);
    TrainOptions opt;
    opt.restarts = 2;
    opt.max_epochs = 15;
    const auto a = train_scg(store, opt);
    const auto b = train_scg(store, opt);
    EXPECT_TRUE(a.second.same_outcome(b.second));
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second.restarts.size(), 2u);
    EXPECT_LT(a.second.best().val_loss, std::log(6.0));
}

TEST(Train, NeedsTwoExamplesPerPresentClass) {
    vision::DatasetStore store;
    const vision::Image img;
    store.add_example(img, GraspType::Hook, vision::Source::Gui);
    store.add_example(img, GraspType::Hook, vision::Source::Gui);
    store.add_example(img, GraspType::Pinch, vision::Source::Gui);
    EXPECT_THROW(train_scg(store, {}), InsufficientData);
    EXPECT_THROW(train_scg(vision::DatasetStore{}, {}), InsufficientData);
}

TEST(Train, StopTokenCancels) {
    std::stop_source stop;
    stop.request_stop();
    EXPECT_THROW(train_scg(small_corpus(4, 1), {}, stop.get_token()), TrainingCancelled);
}

TEST(Train, OptionsFromConfig) {
    const auto c = KeyValueConfig::parse("classifier.hidden = 20 10\nclassifier.activation = tanh\n"
                                         "classifier.restarts = 3\nclassifier.max_epochs = 7\n");
    const auto o = TrainOptions::from_config(c);
    EXPECT_EQ(o.hidden, (std::vector<std::size_t>{20, 10}));
    EXPECT_EQ(o.activation, Activation::Tanh);
    EXPECT_EQ(o.restarts, 3u);
    EXPECT_EQ(o.max_epochs, 7u);
    EXPECT_EQ(o.patience, TrainOptions{}.patience);
}

TEST(Train, SixClassCorpusGeneralizes) {
    const auto store = small_corpus(120, 1);
    TrainOptions opt;
    opt.restarts = 1;
    const auto [model, report] = train_scg(store, opt);
    EXPECT_GE(report.best().test_accuracy, 0.80);

    // fresh renders, not seen by any split
    const auto held_out = small_corpus(10, 2024);
    std::array<std::array<int, kGraspCount>, kGraspCount> votes{};
    for (const auto& e : held_out.examples()) ++votes[index_of(e.label)][index_of(model.predict(e.image))];
    int correct_classes = 0;
    for (std::size_t c = 0; c < kGraspCount; ++c)
        correct_classes += std::max_element(votes[c].begin(), votes[c].end()) - votes[c].begin() ==
                           static_cast<std::ptrdiff_t>(c);
    EXPECT_GE(correct_classes, 4);
    EXPECT_EQ(model.predict(vision::render(vision::draw_spec(vision::ObjectClass::Apple, {}, 31337))),
              GraspType::Spherical);
}

TEST(Train, RetrainWithBananaRaisesTripodPosterior) {
    const auto store = small_corpus(40, 3);
    TrainOptions opt;
    opt.restarts = 1;
    const std::array banana = {vision::ObjectClass::Banana};
    const auto probe = vision::generate_corpus(banana, 10, 77);
    auto mean_tripod = [&](const GraspModel& m) {
        double s = 0.0;
        for (const auto& e : probe.examples()) s += m.posterior(e.image)[index_of(GraspType::Tripod)];
        return s / static_cast<double>(probe.size());
    };
    const auto before = train_scg(store, opt).first;
    const auto path = temp_path("retrain") / "model.bin";
    const auto after = retrain_with(store, vision::generate_corpus(banana, 20, 5), opt, path).first;
    EXPECT_GT(mean_tripod(after), mean_tripod(before));
    EXPECT_EQ(load_model(path), after);
    EXPECT_TRUE(std::filesystem::exists(path.string() + ".report"));
    std::filesystem::remove_all(path.parent_path());
}

TEST(Train, CancelledRetrainKeepsPreviousModelFile) {
    const auto dir = temp_path("swap");
    const auto path = dir / "model.bin";
    GraspModel old{Mlp<double>({10, 4, 6})};
    old.net.init_uniform(1);
    save_model(path, old);
    std::stop_source stop;
    stop.request_stop();
    EXPECT_THROW(retrain_with(small_corpus(4, 1), small_corpus(4, 2), {}, path, stop.get_token()), TrainingCancelled);
    EXPECT_EQ(load_model(path), old);
    std::filesystem::remove_all(dir);
}

// --- persistence ---------------------------------------------------------------

TEST(ModelIo, SaveLoadForwardIsBitIdentical) {
    GraspModel m{Mlp<double>({kGraspNetSizes.begin(), kGraspNetSizes.end()}, Activation::Tanh), true};
    m.net.init_uniform(12);
    const auto path = temp_path("model") / "m.bin";
    save_model(path, m);
    const auto loaded = load_model(path);
    EXPECT_EQ(loaded, m);
    const auto img = vision::render(vision::draw_spec(vision::ObjectClass::Pitcher, {}, 2));
    EXPECT_EQ(loaded.posterior(img), m.posterior(img));
    std::filesystem::remove_all(path.parent_path());
}

TEST(ModelIo, HeaderAndRowMajorLittleEndianLayout) {
    GraspModel m{Mlp<double>({3, 2})};
    m.net.weights(0) << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0; // row 0: 1 2 3
    m.net.bias(0) << 7.0, 8.0;
    std::ostringstream out;
    write_model(out, m);
    const std::string bytes = out.str();
    ASSERT_EQ(bytes.size(), 8u + 4 * 4 + 2 * 4 + 8 * 8);
    EXPECT_EQ(bytes.substr(0, 6), "HNDMLP");
    auto u32 = [&](std::size_t off) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]);
        return v;
    };
    EXPECT_EQ(u32(8), 1u);  // version
    EXPECT_EQ(u32(12), 1u); // sigmoid
    EXPECT_EQ(u32(16), 0u); // flags
    EXPECT_EQ(u32(20), 2u);
    EXPECT_EQ(u32(24), 3u);
    EXPECT_EQ(u32(28), 2u);
    for (int k = 0; k < 8; ++k) {
        double d = 0.0;
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[32 + 8 * static_cast<std::size_t>(k) + static_cast<std::size_t>(i)]);
        std::memcpy(&d, &v, 8);
        EXPECT_EQ(d, k + 1.0);
    }
}

TEST(ModelIo, RejectsForeignAndTruncatedFiles) {
    std::istringstream junk("not a model at all");
    EXPECT_THROW(read_model(junk), ModelFormatError);
    GraspModel m{Mlp<double>({3, 2})};
    std::ostringstream out;
    write_model(out, m);
    std::istringstream cut(out.str().substr(0, out.str().size() - 3));
    EXPECT_THROW(read_model(cut), ModelFormatError);
    EXPECT_THROW(load_model("/nonexistent/model.bin"), ModelFormatError);
}

} // namespace
