#pragma once

// The instruction-grounding study: every suite sentence is grounded a fixed
// number of times and sorted into success / parse failure / understanding
// failure, for the base and the extended grammar.

#include <algorithm>

#include "handadapt/experiments/table.hpp"
#include "handadapt/nlu/grounding.hpp"

namespace handadapt::experiments {

struct NluSuiteConfig {
    std::filesystem::path grammar_base;
    std::filesystem::path grammar_extended;
    std::filesystem::path corpus;
    std::filesystem::path untrained;
    int repetitions = 10;

    /// Keys nlu.grammar_base, nlu.grammar_extended, nlu.corpus,
    /// nlu.untrained (relative to `data`), nlu.repetitions.
    static NluSuiteConfig from_config(const KeyValueConfig& kv, const std::filesystem::path& data) {
        NluSuiteConfig c;
        c.grammar_base = data / kv.get_or("nlu.grammar_base", "grammar_base.cfg");
        c.grammar_extended = data / kv.get_or("nlu.grammar_extended", "grammar_extended.cfg");
        c.corpus = data / kv.get_or("nlu.corpus", "corpus.tsv");
        c.untrained = data / kv.get_or("nlu.untrained", "untrained.tsv");
        c.repetitions = static_cast<int>(kv.get_int_or("nlu.repetitions", 10));
        if (c.repetitions < 1) throw ConfigError("nlu.repetitions must be positive");
        return c;
    }

    /// Hash of every input file's bytes plus the repetition count.
    std::uint64_t hash() const {
        std::uint64_t h = fnv1a("nlu-suite reps=" + std::to_string(repetitions));
        for (const auto& p : {grammar_base, grammar_extended, corpus, untrained}) {
            std::ifstream in(p, std::ios::binary);
            if (!in) throw Error("cannot read " + p.string());
            h = fnv1a(std::string(std::istreambuf_iterator<char>(in), {}), h);
        }
        return h;
    }
};

struct SuiteRow {
    std::string grammar;
    bool trained = false;
    std::string sentence;
    std::optional<HandAction> expected;
    std::string grounded; ///< action name or the outcome of the last repetition
    int success = 0, fail_parse = 0, fail_understanding = 0;
    std::vector<double> seconds;

    int repetitions() const { return success + fail_parse + fail_understanding; }
    /// Expected action every time, or (for an expected error) never a success.
    bool as_expected() const { return expected ? success == repetitions() : success == 0; }
    double pct(int n) const { return 100.0 * n / repetitions(); }
};

/// A grounding to the wrong action counts as an understanding failure.
inline SuiteRow run_sentence(const nlu::Grounder& g, const nlu::SuiteEntry& e, std::string grammar, int reps) {
    SuiteRow row{std::move(grammar), e.trained, e.sentence, e.expected, {}, 0, 0, 0, {}};
    for (int k = 0; k < reps; ++k) {
        const auto r = g.ground(e.sentence);
        row.seconds.push_back(r.seconds);
        if (r.outcome == nlu::Outcome::FailParse) {
            ++row.fail_parse;
            row.grounded = "fail-parse";
        } else if (r.outcome == nlu::Outcome::FailUnderstanding) {
            ++row.fail_understanding;
            row.grounded = "fail-understanding";
        } else {
            row.grounded = to_string(*r.action);
            // An expected-error row that grounds anyway is a success here;
            // as_expected() flags it.
            ++(!e.expected || *r.action == *e.expected ? row.success : row.fail_understanding);
        }
    }
    return row;
}

struct NluSuiteResult {
    std::vector<SuiteRow> rows;

    Table table() const {
        Table t({"grammar", "set", "sentence", "expected", "grounded", "pct_success", "pct_fail_parse",
                 "pct_fail_understanding", "as_expected"});
        for (const auto& r : rows)
            t.add({r.grammar, r.trained ? "trained" : "untrained", r.sentence,
                   r.expected ? to_string(*r.expected) : "error", r.grounded, fixed(r.pct(r.success), 0),
                   fixed(r.pct(r.fail_parse), 0), fixed(r.pct(r.fail_understanding), 0), r.as_expected() ? "yes" : "no"});
        return t;
    }

    std::vector<const SuiteRow*> select(std::string_view grammar, std::optional<bool> trained = std::nullopt) const {
        std::vector<const SuiteRow*> out;
        for (const auto& r : rows)
            if (r.grammar == grammar && (!trained || r.trained == *trained)) out.push_back(&r);
        return out;
    }

    /// Median single-sentence grounding time in seconds for one grammar.
    double median_seconds(std::string_view grammar) const {
        std::vector<double> t;
        for (const auto* r : select(grammar)) t.insert(t.end(), r->seconds.begin(), r->seconds.end());
        if (t.empty()) return 0.0;
        std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
        return t[t.size() / 2];
    }
};

/// The extended grammar's model is trained on the whole corpus. The base
/// grammar's model is trained on the sentences it can parse, so its other
/// rows can still be scored.
inline NluSuiteResult run_nlu_suite(const NluSuiteConfig& cfg) {
    const auto corpus = nlu::load_corpus(cfg.corpus);
    auto suite = nlu::as_suite(corpus);
    for (auto& e : nlu::load_suite(cfg.untrained, false)) suite.push_back(std::move(e));

    NluSuiteResult res;
    for (const auto& [name, path] : {std::pair{"base", cfg.grammar_base}, std::pair{"extended", cfg.grammar_extended}}) {
        nlu::Parser parser(nlu::Grammar::load(path));
        auto model = nlu::train_factors(nlu::parseable(corpus, parser), parser);
        const nlu::Grounder g(std::move(parser), std::move(model));
        for (const auto& e : suite) res.rows.push_back(run_sentence(g, e, name, cfg.repetitions));
    }
    return res;
}

} // namespace handadapt::experiments
