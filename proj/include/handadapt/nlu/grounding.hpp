#pragma once

// Text to HandAction: tokenize, parse, build the DCG, infer. Also the corpus
// and suite file readers.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "handadapt/msgbus/bus.hpp"
#include "handadapt/msgbus/messages.hpp"
#include "handadapt/nlu/dcg.hpp"
#include "handadapt/nlu/parser.hpp"

namespace handadapt::nlu {

/// Table-column outcome of one command.
enum class Outcome : std::uint8_t { Success, FailParse, FailUnderstanding };

constexpr std::string_view to_string(Outcome o) {
    switch (o) {
    case Outcome::Success: return "success";
    case Outcome::FailParse: return "fail-parse";
    case Outcome::FailUnderstanding: return "fail-understanding";
    }
    return "success";
}

struct GroundingResult {
    Outcome outcome = Outcome::Success;
    std::optional<HandAction> action;
    std::string message;        ///< error text when not successful
    std::optional<ParseTree> tree;
    double seconds = 0.0;       ///< wall time of parse + build + infer
    Tick latency_ticks = 0;     ///< the same, rounded up to 1 ms ticks
};

class Grounder {
public:
    Grounder(Parser parser, FactorModel model) : parser_(std::move(parser)), model_(std::move(model)) {}

    const Parser& parser() const { return parser_; }
    const FactorModel& model() const { return model_; }

    /// Never throws for bad input; failures come back as outcomes.
    GroundingResult ground(std::string_view text, bool force = false) const {
        GroundingResult r;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto tokens = tokenize(text);
            r.tree = parser_.parse(std::span<const std::string>(tokens));
            r.action = infer(model_, build_dcg(*r.tree), force);
        } catch (const ParseFailure& e) {
            r.outcome = Outcome::FailParse;
            r.message = e.what();
        } catch (const GroundingError& e) {
            r.outcome = Outcome::FailUnderstanding;
            r.message = e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r.latency_ticks = static_cast<Tick>(std::ceil(r.seconds * 1000.0));
        return r;
    }

private:
    Parser parser_;
    FactorModel model_;
};

/// Grounds `text` and publishes the outcome: an override (with the capture
/// flag for grasps) on success, an error feedback line otherwise.
inline GroundingResult ground_text(const Grounder& g, bus::MessageBus& b, std::string_view text, bool force = false) {
    auto r = g.ground(text, force);
    if (r.action) {
        b.publish(std::string(bus::channels::kOverride), bus::OverrideCommand::from(*r.action, vision::Source::Nlu));
        b.publish(std::string(bus::channels::kFeedback),
                  bus::Feedback{bus::FeedbackLevel::Info, "nlu",
                                "\"" + std::string(text) + "\" -> " + to_string(*r.action)});
    } else {
        b.publish(std::string(bus::channels::kFeedback),
                  bus::Feedback{bus::FeedbackLevel::Error, "nlu", "\"" + std::string(text) + "\": " + r.message});
    }
    return r;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline std::vector<std::pair<std::string, std::string>> read_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || trim(line).front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 'sentence<TAB>label'");
        out.emplace_back(std::string(trim(std::string_view(line).substr(0, tab))),
                         std::string(trim(std::string_view(line).substr(tab + 1))));
    }
    return out;
}

} // namespace detail

/// `sentence<TAB>grounding` per line.
inline std::vector<AnnotatedExample> load_corpus(const std::filesystem::path& path) {
    std::vector<AnnotatedExample> out;
    for (const auto& [s, label] : detail::read_tsv(path)) {
        const auto g = grounding_from_string(label);
        if (!g) throw Error("unknown grounding '" + label + "' in " + path.string());
        out.push_back({s, *g});
    }
    return out;
}

struct SuiteEntry {
    std::string sentence;
    std::optional<HandAction> expected; ///< nullopt: a parse or understanding error is expected
    bool trained = false;
};

/// `sentence<TAB>grounding` or `sentence<TAB>error` per line.
inline std::vector<SuiteEntry> load_suite(const std::filesystem::path& path, bool trained) {
    std::vector<SuiteEntry> out;
    for (const auto& [s, label] : detail::read_tsv(path)) {
        if (label == "error") {
            out.push_back({s, std::nullopt, trained});
            continue;
        }
        const auto a = action_from_string(label);
        if (!a) throw Error("unknown expectation '" + label + "' in " + path.string());
        out.push_back({s, *a, trained});
    }
    return out;
}

inline std::vector<SuiteEntry> as_suite(std::span<const AnnotatedExample> corpus) {
    std::vector<SuiteEntry> out;
    for (const auto& e : corpus) out.push_back({e.sentence, HandAction::from(e.gold), true});
    return out;
}

/// Examples whose sentences parse under `parser`.
inline std::vector<AnnotatedExample> parseable(std::span<const AnnotatedExample> corpus, const Parser& parser) {
    std::vector<AnnotatedExample> out;
    for (const auto& e : corpus) {
        const auto t = tokenize(e.sentence);
        if (parser.recognizes(t)) out.push_back(e);
    }
    return out;
}

} // namespace handadapt::nlu
