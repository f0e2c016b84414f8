#pragma once

// Distributed correspondence graph over a parse tree, its log-linear factors,
// and inference.
//
// Phrases are the tree's phrasal nodes (nodes that are not part-of-speech
// tags), in bottom-up order with the root last. Phrase i carries one boolean
// correspondence variable phi_ij per grounding j. Its factor is
//
//   p(phi_ij = T | gamma_j, lambda_i, Phi_c_i) = sigmoid(w . f(i, j, Phi_c_i))
//
// where f holds indicators for the phrase's own words, its head tag, every
// grounding active among its child phrases, and whether j itself is active
// in a child. The environment context is empty in this application.

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "handadapt/classifier/scg.hpp"
#include "handadapt/core/types.hpp"
#include "handadapt/nlu/parser.hpp"

namespace handadapt::nlu {

/// Placeholder for world state; no feature reads it.
struct EnvironmentContext {
    friend bool operator==(const EnvironmentContext&, const EnvironmentContext&) = default;
};

struct Phrase {
    std::string symbol;
    std::size_t begin = 0, end = 0;
    std::vector<std::string> words; ///< words of the phrase's own tag children
    std::string head_tag;           ///< rightmost tag child, empty if none
    std::vector<std::size_t> children; ///< child phrase indices
    std::optional<std::size_t> parent;

    friend bool operator==(const Phrase&, const Phrase&) = default;
};

struct DcgGraph {
    std::vector<Phrase> phrases; ///< bottom-up; root last
    EnvironmentContext environment;

    std::size_t root() const { return phrases.size() - 1; }
    std::size_t variable_count() const { return phrases.size() * kGroundingCount; }
    std::size_t factor_count() const { return variable_count(); }

    friend bool operator==(const DcgGraph&, const DcgGraph&) = default;
};

namespace detail {

inline std::size_t add_phrases(const ParseTree& t, DcgGraph& g) {
    Phrase p{t.symbol, t.begin, t.end, {}, {}, {}, {}};
    for (const auto& c : t.children) {
        if (c.lexical()) {
            p.words.push_back(c.word);
            p.head_tag = c.symbol;
        } else {
            p.children.push_back(add_phrases(c, g));
        }
    }
    const std::size_t id = g.phrases.size();
    for (auto c : p.children) g.phrases[c].parent = id;
    g.phrases.push_back(std::move(p));
    return id;
}

} // namespace detail

/// Accepts binarized or de-binarized trees; both give the same graph.
inline DcgGraph build_dcg(const ParseTree& tree) {
    if (tree.lexical()) throw Error("a DCG needs at least one phrasal node");
    DcgGraph g;
    detail::add_phrases(debinarize(tree), g);
    return g;
}

/// phi values of one phrase, bit j = grounding j.
using PhraseBits = std::uint16_t;

/// One PhraseBits per phrase, indexed like DcgGraph::phrases.
using Assignment = std::vector<PhraseBits>;

inline bool bit(PhraseBits b, std::size_t j) { return ((b >> j) & 1u) != 0; }

class FactorModel {
public:
    FactorModel() = default;

    /// Feature ids active for phi_ij = T. Unknown features are skipped.
    std::vector<std::size_t> features(const Phrase& p, std::size_t j, PhraseBits child_active) const {
        std::vector<std::size_t> out;
        for_each_key(p, j, child_active, [&](const std::string& k) {
            if (auto it = index_.find(k); it != index_.end()) out.push_back(it->second);
        });
        return out;
    }

    double score(const Phrase& p, std::size_t j, PhraseBits child_active) const {
        double s = 0.0;
        for (auto f : features(p, j, child_active)) s += weights_[static_cast<Eigen::Index>(f)];
        return s;
    }

    /// p(phi_ij = T | ...).
    double probability(const Phrase& p, std::size_t j, PhraseBits child_active) const {
        return 1.0 / (1.0 + std::exp(-score(p, j, child_active)));
    }

    std::size_t size() const { return keys_.size(); }
    const std::vector<std::string>& keys() const { return keys_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    Eigen::VectorXd& weights() { return weights_; }
    double l2() const { return l2_; }

    /// Registers every feature key of (p, j, child_active); used in training.
    void intern(const Phrase& p, std::size_t j, PhraseBits child_active) {
        for_each_key(p, j, child_active, [&](const std::string& k) {
            if (index_.emplace(k, keys_.size()).second) keys_.push_back(k);
        });
        weights_.conservativeResize(static_cast<Eigen::Index>(keys_.size()));
    }

    void set_l2(double l2) { l2_ = l2; }

    std::string to_text() const {
        std::ostringstream s;
        s.precision(17);
        s << "l2 " << l2_ << "\n";
        for (std::size_t i = 0; i < keys_.size(); ++i) s << keys_[i] << '\t' << weights_[static_cast<Eigen::Index>(i)] << '\n';
        return s.str();
    }

    static FactorModel from_text(const std::string& text) {
        FactorModel m;
        std::istringstream in(text);
        std::string line;
        bool header = true;
        std::vector<double> w;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (header) {
                if (line.rfind("l2 ", 0) != 0) throw Error("factor model: missing l2 header");
                m.l2_ = std::stod(line.substr(3));
                header = false;
                continue;
            }
            const auto tab = line.rfind('\t');
            if (tab == std::string::npos) throw Error("factor model: malformed line '" + line + "'");
            const auto key = line.substr(0, tab);
            if (!m.index_.emplace(key, m.keys_.size()).second) throw Error("factor model: duplicate key " + key);
            m.keys_.push_back(key);
            w.push_back(std::stod(line.substr(tab + 1)));
        }
        m.weights_ = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        return m;
    }

    friend bool operator==(const FactorModel& a, const FactorModel& b) {
        return a.keys_ == b.keys_ && a.weights_ == b.weights_ && a.l2_ == b.l2_;
    }

private:
    template <class Fn>
    static void for_each_key(const Phrase& p, std::size_t j, PhraseBits child_active, Fn&& fn) {
        const std::string g(to_string(static_cast<Grounding>(j)));
        fn("bias|" + g);
        std::vector<std::string> seen;
        for (const auto& w : p.words) {
            if (std::find(seen.begin(), seen.end(), w) != seen.end()) continue;
            seen.push_back(w);
            fn("word|" + w + "|" + g);
        }
        fn("head|" + (p.head_tag.empty() ? std::string("-") : p.head_tag) + "|" + g);
        for (std::size_t c = 0; c < kGroundingCount; ++c)
            if (bit(child_active, c)) fn("child|" + std::string(to_string(static_cast<Grounding>(c))) + "|" + g);
        if (bit(child_active, j)) fn("agree");
    }

    std::map<std::string, std::size_t> index_;
    std::vector<std::string> keys_;
    Eigen::VectorXd weights_;
    double l2_ = 0.0;
};

/// Groundings active in any child phrase of `i`.
inline PhraseBits child_active(const DcgGraph& g, const Assignment& a, std::size_t i) {
    PhraseBits b = 0;
    for (auto c : g.phrases[i].children) b |= a[c];
    return b;
}

/// log of the product of every factor at assignment `a`.
inline double log_score(const FactorModel& m, const DcgGraph& g, const Assignment& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.phrases.size(); ++i) {
        const auto ca = child_active(g, a, i);
        for (std::size_t j = 0; j < kGroundingCount; ++j) {
            const double p = m.probability(g.phrases[i], j, ca);
            s += std::log(bit(a[i], j) ? p : 1.0 - p);
        }
    }
    return s;
}

struct Inference {
    Assignment phi;
    std::vector<std::array<double, kGroundingCount>> p_true; ///< per phrase, given the chosen children
};

/// Bottom-up: children first, then each phi_ij set to its more probable value.
inline Inference infer_bottom_up(const FactorModel& m, const DcgGraph& g) {
    Inference r;
    r.phi.assign(g.phrases.size(), 0);
    r.p_true.resize(g.phrases.size());
    for (std::size_t i = 0; i < g.phrases.size(); ++i) {
        const auto ca = child_active(g, r.phi, i);
        for (std::size_t j = 0; j < kGroundingCount; ++j) {
            const double p = m.probability(g.phrases[i], j, ca);
            r.p_true[i][j] = p;
            if (p > 0.5) r.phi[i] = static_cast<PhraseBits>(r.phi[i] | (1u << j));
        }
    }
    return r;
}

/// Largest graph exhaustive_argmax accepts, in correspondence variables.
inline constexpr std::size_t kExhaustiveLimit = 27;

/// Enumerates all 2^(N*9) assignments. Ties keep the first in enumeration
/// order (phrase 0's bits lowest).
inline Assignment exhaustive_argmax(const FactorModel& m, const DcgGraph& g) {
    const std::size_t n = g.phrases.size();
    if (g.variable_count() > kExhaustiveLimit) throw Error("graph too large for exhaustive search");
    // Per phrase: log p(T), log p(F) for every configuration of its children.
    struct Table {
        std::vector<std::size_t> kids;
        std::vector<std::array<double, 2 * kGroundingCount>> rows;
    };
    std::vector<Table> tables(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& t = tables[i];
        t.kids = g.phrases[i].children;
        const std::size_t configs = std::size_t{1} << (kGroundingCount * t.kids.size());
        t.rows.resize(configs);
        for (std::size_t cfg = 0; cfg < configs; ++cfg) {
            PhraseBits ca = 0;
            for (std::size_t k = 0; k < t.kids.size(); ++k)
                ca |= static_cast<PhraseBits>((cfg >> (kGroundingCount * k)) & ((1u << kGroundingCount) - 1));
            for (std::size_t j = 0; j < kGroundingCount; ++j) {
                const double p = m.probability(g.phrases[i], j, ca);
                t.rows[cfg][2 * j] = std::log(p);
                t.rows[cfg][2 * j + 1] = std::log(1.0 - p);
            }
        }
    }
    const std::uint64_t total = std::uint64_t{1} << g.variable_count();
    constexpr std::uint64_t mask = (1u << kGroundingCount) - 1;
    double best = -std::numeric_limits<double>::infinity();
    std::uint64_t best_code = 0;
    for (std::uint64_t code = 0; code < total; ++code) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& t = tables[i];
            std::size_t cfg = 0;
            for (std::size_t k = 0; k < t.kids.size(); ++k)
                cfg |= static_cast<std::size_t>((code >> (kGroundingCount * t.kids[k])) & mask) << (kGroundingCount * k);
            const auto bits = (code >> (kGroundingCount * i)) & mask;
            const auto& row = t.rows[cfg];
            for (std::size_t j = 0; j < kGroundingCount; ++j) s += row[2 * j + (((bits >> j) & 1u) ? 0 : 1)];
        }
        if (s > best) {
            best = s;
            best_code = code;
        }
    }
    Assignment a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<PhraseBits>((best_code >> (kGroundingCount * i)) & mask);
    return a;
}

class GroundingError : public Error {
public:
    using Error::Error;
};

/// No root correspondence variable is true.
class NoGrounding : public GroundingError {
public:
    NoGrounding() : GroundingError("understanding error: no grounding for the command") {}
};

/// Two or more root correspondence variables are true.
class AmbiguousGrounding : public GroundingError {
public:
    explicit AmbiguousGrounding(std::vector<Grounding> candidates)
        : GroundingError(message(candidates)), candidates_(std::move(candidates)) {}
    const std::vector<Grounding>& candidates() const { return candidates_; }

private:
    static std::string message(const std::vector<Grounding>& c) {
        std::string s = "understanding error: ambiguous grounding (";
        for (std::size_t i = 0; i < c.size(); ++i) s += (i ? ", " : "") + std::string(to_string(c[i]));
        return s + ")";
    }
    std::vector<Grounding> candidates_;
};

/// Root groundings with phi = T; exactly one is expected. With `force`, the
/// most probable of several wins.
inline HandAction root_action(const Inference& r, bool force = false) {
    const auto& p = r.p_true.back();
    std::vector<Grounding> active;
    for (std::size_t j = 0; j < kGroundingCount; ++j)
        if (bit(r.phi.back(), j)) active.push_back(static_cast<Grounding>(j));
    if (active.empty()) throw NoGrounding();
    if (active.size() > 1 && !force) throw AmbiguousGrounding(active);
    Grounding best = active.front();
    for (auto gr : active)
        if (p[static_cast<std::size_t>(gr)] > p[static_cast<std::size_t>(best)]) best = gr;
    return HandAction::from(best);
}

inline HandAction infer(const FactorModel& m, const DcgGraph& g, bool force = false) {
    return root_action(infer_bottom_up(m, g), force);
}

// ---------------------------------------------------------------------------
// Training

struct AnnotatedExample {
    std::string sentence;
    Grounding gold = Grounding::OpenHand;
};

class CorpusParseFailure : public Error {
public:
    explicit CorpusParseFailure(std::vector<std::string> sentences)
        : Error(message(sentences)), sentences_(std::move(sentences)) {}
    const std::vector<std::string>& sentences() const { return sentences_; }

private:
    static std::string message(const std::vector<std::string>& s) {
        std::string m = "corpus sentences do not parse:";
        for (const auto& x : s) m += " '" + x + "'";
        return m;
    }
    std::vector<std::string> sentences_;
};

/// Gold phi: the root's gold grounding is true, and when it is a grasp every
/// NP phrase below the root carries it too. Everything else is false.
inline Assignment gold_assignment(const DcgGraph& g, Grounding gold) {
    Assignment a(g.phrases.size(), 0);
    const auto gold_bit = static_cast<PhraseBits>(1u << static_cast<unsigned>(gold));
    a.back() = gold_bit;
    if (as_grasp(gold))
        for (std::size_t i = 0; i + 1 < g.phrases.size(); ++i)
            if (g.phrases[i].symbol.rfind("NP", 0) == 0) a[i] = gold_bit;
    return a;
}

struct TrainFactorsOptions {
    double l2 = 0.05;
    std::size_t max_iterations = 2000;
    double gradient_tolerance = 1e-9;
};

/// Maximizes the L2-regularized log-likelihood of the gold phi values, each
/// factor conditioned on the gold child assignment. Optimized with SCG from
/// zero weights, so the result is deterministic.
inline FactorModel train_factors(std::span<const AnnotatedExample> corpus, const Parser& parser,
                                 const TrainFactorsOptions& opt = {}) {
    struct Row {
        std::vector<std::size_t> features;
        double target = 0.0;
    };
    std::vector<std::string> failed;
    std::vector<std::pair<DcgGraph, Assignment>> graphs;
    for (const auto& ex : corpus) {
        try {
            auto g = build_dcg(parser.parse(ex.sentence));
            auto a = gold_assignment(g, ex.gold);
            graphs.emplace_back(std::move(g), std::move(a));
        } catch (const ParseFailure&) {
            failed.push_back(ex.sentence);
        }
    }
    if (!failed.empty()) throw CorpusParseFailure(failed);

    FactorModel model;
    model.set_l2(opt.l2);
    for (const auto& [g, a] : graphs)
        for (std::size_t i = 0; i < g.phrases.size(); ++i)
            for (std::size_t j = 0; j < kGroundingCount; ++j) model.intern(g.phrases[i], j, child_active(g, a, i));
    std::vector<Row> rows;
    for (const auto& [g, a] : graphs)
        for (std::size_t i = 0; i < g.phrases.size(); ++i)
            for (std::size_t j = 0; j < kGroundingCount; ++j)
                rows.push_back({model.features(g.phrases[i], j, child_active(g, a, i)), bit(a[i], j) ? 1.0 : 0.0});

    const double l2 = opt.l2;
    auto objective = [&rows, l2](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
        double loss = 0.5 * l2 * w.squaredNorm();
        if (grad) *grad = l2 * w;
        for (const auto& r : rows) {
            double s = 0.0;
            for (auto f : r.features) s += w[static_cast<Eigen::Index>(f)];
            // -log p(target) = softplus(s) - target * s, computed stably
            loss += (s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s))) - r.target * s;
            if (grad) {
                const double d = 1.0 / (1.0 + std::exp(-s)) - r.target;
                for (auto f : r.features) (*grad)[static_cast<Eigen::Index>(f)] += d;
            }
        }
        return loss;
    };
    classifier::FunctionObjective fo(objective, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.size())));
    classifier::ScgConfig cfg;
    cfg.gradient_tolerance = opt.gradient_tolerance;
    classifier::Scg scg(fo, cfg);
    for (std::size_t it = 0; it < opt.max_iterations; ++it)
        if (scg.step() == classifier::ScgStep::Converged) break;
    model.weights() = fo.point();
    return model;
}

} // namespace handadapt::nlu
