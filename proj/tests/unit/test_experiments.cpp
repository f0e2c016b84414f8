#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "handadapt/experiments/adaptation.hpp"
#include "handadapt/experiments/control_report.hpp"
#include "handadapt/experiments/nlu_suite.hpp"

using namespace handadapt;
using namespace handadapt::experiments;

namespace {

const std::filesystem::path kData = HANDADAPT_DATA_DIR;

const NluSuiteResult& suite() {
    static const auto r = run_nlu_suite(NluSuiteConfig::from_config({}, kData));
    return r;
}

const ControlReport& control() {
    static const auto r = run_control_report(handsim::HandConfig::defaults());
    return r;
}

AdaptConfig tiny_adapt() {
    AdaptConfig c;
    c.per_class = 16;
    c.eval_per_class = 4;
    c.increment = 8;
    c.increments = 2;
    c.options.hidden = {24};
    c.options.restarts = 1;
    c.options.max_epochs = 30;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(Table, HeaderLineNamesExperimentSeedAndConfig) {
    EXPECT_EQ((RunHeader{"adapt", 3, 0xabcull}.text()), "# handadapt adapt seed=3 config=0000000000000abc");
}

TEST(Table, TextIsHeaderColumnsThenRows) {
    Table t({"a", "b"});
    t.add({"1", "x"});
    t.add({"2", "y"});
    EXPECT_EQ(t.text({"e", 0, 0}), "# handadapt e seed=0 config=0000000000000000\na\tb\n1\tx\n2\ty\n");
    EXPECT_EQ(t.column("b"), 1u);
    EXPECT_THROW(t.column("c"), Error);
}

TEST(Table, RejectsRaggedRowsAndSeparatorsInCells) {
    Table t({"a", "b"});
    EXPECT_THROW(t.add({"1"}), Error);
    EXPECT_THROW(t.add({"1", "2\t3"}), Error);
    EXPECT_THROW(t.add({"1", "2\n"}), Error);
    EXPECT_TRUE(t.rows().empty());
}

TEST(Table, FixedFormatNeverPrintsNegativeZero) {
    EXPECT_EQ(fixed(-0.0), "0.000000");
    EXPECT_EQ(fixed(-1e-9, 3), "0.000");
    EXPECT_EQ(fixed(-0.0005, 3), "-0.001");
    EXPECT_EQ(fixed(2.5, 0), "2");  // round half to even, as printf does
    EXPECT_EQ(fixed(1.0 / 3.0, 4), "0.3333");
}

TEST(Table, WriteRoundTripsTheText) {
    const auto dir = std::filesystem::temp_directory_path() / "handadapt_table_test";
    std::filesystem::remove_all(dir);
    Table t({"k"});
    t.add({"v"});
    const RunHeader h{"x", 1, 2};
    t.write(dir / "sub" / "t.tsv", h);
    EXPECT_EQ(slurp(dir / "sub" / "t.tsv"), t.text(h));
    std::filesystem::remove_all(dir);
}

TEST(Table, TimestampedDirsNeverCollide) {
    const auto base = std::filesystem::temp_directory_path() / "handadapt_ts_test";
    std::filesystem::remove_all(base);
    const auto a = timestamped_dir(base), b = timestamped_dir(base);
    EXPECT_NE(a, b);
    EXPECT_TRUE(std::filesystem::is_directory(a));
    EXPECT_TRUE(std::filesystem::is_directory(b));
    std::filesystem::remove_all(base);
}

TEST(ConfigHash, MatchesPublishedFnv1aVectors) {
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
}

TEST(ConfigHash, AdaptHashFollowsEverySetting) {
    const AdaptConfig base;
    std::set<std::uint64_t> seen{base.hash()};
    auto differs = [&](auto edit) {
        AdaptConfig c;
        edit(c);
        return seen.insert(c.hash()).second;
    };
    EXPECT_TRUE(differs([](AdaptConfig& c) { c.per_class = 121; }));
    EXPECT_TRUE(differs([](AdaptConfig& c) { c.increment = 21; }));
    EXPECT_TRUE(differs([](AdaptConfig& c) { c.increments = 5; }));
    EXPECT_TRUE(differs([](AdaptConfig& c) { c.options.hidden = {300, 51}; }));
    EXPECT_TRUE(differs([](AdaptConfig& c) { c.options.scg.sigma *= 2; }));
    AdaptConfig same;
    same.options.seed = 99;  // per-run, not part of the config
    EXPECT_EQ(same.hash(), base.hash());
}

TEST(ConfigHash, NluHashCoversFileBytes) {
    const auto dir = std::filesystem::temp_directory_path() / "handadapt_nlu_hash";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    for (auto f : {"grammar_base.cfg", "grammar_extended.cfg", "corpus.tsv", "untrained.tsv"})
        std::filesystem::copy_file(kData / f, dir / f);
    const auto a = NluSuiteConfig::from_config({}, dir).hash();
    EXPECT_EQ(a, NluSuiteConfig::from_config({}, kData).hash());
    std::ofstream(dir / "untrained.tsv", std::ios::app) << "Wave.\terror\n";
    EXPECT_NE(NluSuiteConfig::from_config({}, dir).hash(), a);
    EXPECT_NE(NluSuiteConfig::from_config(KeyValueConfig::parse("nlu.repetitions = 3"), kData).hash(), a);
    std::filesystem::remove_all(dir);
}

TEST(NluSuite, EverySentenceOnceForEachGrammar) {
    const auto n = nlu::load_corpus(kData / "corpus.tsv").size() + nlu::load_suite(kData / "untrained.tsv", false).size();
    EXPECT_EQ(suite().select("base").size(), n);
    EXPECT_EQ(suite().select("extended").size(), n);
    for (const auto& r : suite().rows) EXPECT_EQ(r.repetitions(), 10) << r.sentence;
}

TEST(NluSuite, ExtendedGrammarMeetsEveryExpectation) {
    for (const auto* r : suite().select("extended")) EXPECT_TRUE(r->as_expected()) << r->sentence << " -> " << r->grounded;
    for (const auto* r : suite().select("extended", true)) EXPECT_EQ(r->pct(r->success), 100.0) << r->sentence;
}

TEST(NluSuite, BaseGrammarCannotParseFingerCountSentences) {
    int seen = 0;
    for (const auto* r : suite().select("base"))
        if (r->sentence.find("finger grasp") != std::string::npos) {
            ++seen;
            EXPECT_EQ(r->pct(r->fail_parse), 100.0) << r->sentence;
        }
    EXPECT_GE(seen, 2);
}

TEST(NluSuite, OutcomesAreDeterministicAcrossRepetitions) {
    for (const auto& r : suite().rows) {
        const int nonzero = (r.success > 0) + (r.fail_parse > 0) + (r.fail_understanding > 0);
        EXPECT_EQ(nonzero, 1) << r.grammar << ": " << r.sentence;
    }
}

TEST(NluSuite, TableHasOneRowPerSentenceAndGrammar) {
    const auto t = suite().table();
    EXPECT_EQ(t.rows().size(), suite().rows.size());
    const auto s = t.column("pct_success"), p = t.column("pct_fail_parse"), u = t.column("pct_fail_understanding");
    for (const auto& row : t.rows()) EXPECT_EQ(std::stoi(row[s]) + std::stoi(row[p]) + std::stoi(row[u]), 100);
}

TEST(NluSuite, WrongActionCountsAsUnderstandingFailure) {
    nlu::Parser parser(nlu::Grammar::load(kData / "grammar_extended.cfg"));
    auto model = nlu::train_factors(nlu::load_corpus(kData / "corpus.tsv"), parser);
    const nlu::Grounder g(std::move(parser), std::move(model));
    const nlu::SuiteEntry right{"Do a hook grasp.", HandAction::make_grasp(GraspType::Hook), false};
    const nlu::SuiteEntry wrong{"Do a hook grasp.", HandAction::make_grasp(GraspType::Pinch), false};
    const nlu::SuiteEntry error{"Do a hook grasp.", std::nullopt, false};
    EXPECT_EQ(run_sentence(g, right, "x", 3).success, 3);
    const auto w = run_sentence(g, wrong, "x", 3);
    EXPECT_EQ(w.fail_understanding, 3);
    EXPECT_FALSE(w.as_expected());
    const auto e = run_sentence(g, error, "x", 3);
    EXPECT_EQ(e.success, 3);
    EXPECT_FALSE(e.as_expected());
}

TEST(NluSuite, MedianLatencyFarBelowBudget) {
    EXPECT_GT(suite().median_seconds("extended"), 0.0);
    EXPECT_LT(suite().median_seconds("extended"), 0.05);
}

TEST(ControlReport, AllVerdictsPass) {
    for (const auto& v : control().verdicts) EXPECT_TRUE(v.pass) << v.what;
    EXPECT_EQ(control().verdicts.size(), 4u);
}

TEST(ControlReport, TablesCoverEveryGraspAndMotor) {
    EXPECT_EQ(control().steps.rows().size(), kGraspCount * handsim::kMotors);
    EXPECT_EQ(control().open_return.rows().size(), kGraspCount * 2);
    EXPECT_EQ(control().windup_summary.rows().size(), kGraspCount * handsim::kMotors);
    EXPECT_EQ(control().encoder.rows().size(), handsim::kMotors);
}

TEST(ControlReport, StalledMotorsReachButNeverExceedTheClamp) {
    const auto& t = control().windup_summary;
    const auto st = t.column("stalled"), peak = t.column("max_abs_integral"), lim = t.column("integral_limit");
    int at_clamp = 0;
    for (const auto& r : t.rows()) {
        EXPECT_LE(std::stod(r[peak]), std::stod(r[lim])) << r[0] << " " << r[2];
        at_clamp += r[st] == "1" && r[peak] == r[lim];
    }
    // Fingers pressing on objects saturate the integral; the clamp is what holds it.
    EXPECT_GT(at_clamp, 10);
}

TEST(ControlReport, CommandedOpenIsFasterThanSpringReturn) {
    const auto& t = control().open_return;
    const auto g = t.column("grasp"), m = t.column("mode"), s = t.column("return_s");
    std::map<std::string, std::map<std::string, double>> by;
    for (const auto& r : t.rows()) by[r[g]][r[m]] = std::stod(r[s]);
    for (const auto& [grasp, modes] : by) EXPECT_LT(modes.at("commanded"), modes.at("zero_duty")) << grasp;
}

TEST(ControlReport, IsByteIdenticalOnRerun) {
    const auto again = run_control_report(handsim::HandConfig::defaults());
    const RunHeader h{"control", 0, 0};
    EXPECT_EQ(again.steps.text(h), control().steps.text(h));
    EXPECT_EQ(again.windup.text(h), control().windup.text(h));
    EXPECT_EQ(again.open_return.text(h), control().open_return.text(h));
}

TEST(Adaptation, ConfigReadsKeysAndRejectsDegenerateSizes) {
    const auto c = AdaptConfig::from_config(KeyValueConfig::parse("adapt.increment = 5\nadapt.increments = 3\nclassifier.restarts = 2"));
    EXPECT_EQ(c.increment, 5u);
    EXPECT_EQ(c.increments, 3u);
    EXPECT_EQ(c.options.restarts, 2u);
    EXPECT_THROW(AdaptConfig::from_config(KeyValueConfig::parse("adapt.increment = 3")), ConfigError);
}

TEST(Adaptation, SmallRunIsReproducibleAndWellFormed) {
    const auto cfg = tiny_adapt();
    const auto a = run_adaptation(4, cfg), b = run_adaptation(4, cfg);
    ASSERT_EQ(a.steps.size(), cfg.increments + 1);
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
        EXPECT_EQ(a.steps[k].banana_examples, k * cfg.increment);
        for (const auto& p : a.steps[k].mean) {
            double sum = 0;
            for (double v : p) sum += v;
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
    const RunHeader h{"adapt", 4, cfg.hash()};
    EXPECT_EQ(posterior_table(a).text(h), posterior_table(b).text(h));
    EXPECT_EQ(curve_table(a).text(h), curve_table(b).text(h));
    EXPECT_EQ(posterior_table(a).rows().size(), a.steps.size() * vision::kAllObjects.size());
}

TEST(Adaptation, SeedAverageOfIdenticalRunsIsThatRun) {
    const auto r = run_adaptation(6, tiny_adapt());
    const std::vector<AdaptRun> two{r, r};
    const auto avg = seed_average(two);
    for (std::size_t k = 0; k < avg.size(); ++k)
        for (std::size_t c = 0; c < avg[k].mean.size(); ++c)
            for (std::size_t g = 0; g < kGraspCount; ++g) EXPECT_NEAR(avg[k].mean[c][g], r.steps[k].mean[c][g], 1e-12);
    const auto t = summary_table(two);
    for (const auto& row : t.rows()) EXPECT_EQ(row[t.column("stddev")], "0.000000");
}

TEST(Adaptation, VerdictsFollowTheirDefinitions) {
    // Synthetic posteriors make every verdict's boundary explicit.
    auto uniform = [] {
        Posterior p;
        p.fill(0.0);
        return p;
    };
    AdaptRun r;
    for (std::size_t k = 0; k < 3; ++k) {
        AdaptStep s;
        s.step = k;
        for (auto o : vision::kAllObjects) {
            auto p = uniform();
            p[index_of(vision::canonical_grasp(o))] = 1.0;
            s.mean[static_cast<std::size_t>(o)] = p;
        }
        auto b = uniform();
        b[index_of(GraspType::Tripod)] = k == 0 ? 0.05 : (k == 1 ? 0.3 : 0.6);
        b[index_of(GraspType::Pinch)] = 1.0 - b[index_of(GraspType::Tripod)];
        s.mean[static_cast<std::size_t>(vision::ObjectClass::Banana)] = b;
        r.steps.push_back(s);
    }
    const std::vector<AdaptRun> runs{r};
    auto v = adaptation_verdicts(runs);
    ASSERT_EQ(v.size(), 7u);
    for (const auto& x : v) EXPECT_TRUE(x.pass) << x.what;

    auto tie = r;  // 0.5 each: argmax takes the lower index, pinch
    tie.steps.back().mean[static_cast<std::size_t>(vision::ObjectClass::Banana)][index_of(GraspType::Tripod)] = 0.5;
    tie.steps.back().mean[static_cast<std::size_t>(vision::ObjectClass::Banana)][index_of(GraspType::Pinch)] = 0.5;
    const std::vector<AdaptRun> tied{tie};
    EXPECT_FALSE(adaptation_verdicts(tied)[2].pass);

    auto flipped = r;
    flipped.steps[1].mean[static_cast<std::size_t>(vision::ObjectClass::Cup)] =
        flipped.steps[1].of(vision::ObjectClass::Apple);
    const std::vector<AdaptRun> bad{flipped};
    v = adaptation_verdicts(bad);
    EXPECT_FALSE(v[4].pass);  // cup
}
